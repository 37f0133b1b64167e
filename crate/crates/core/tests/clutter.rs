use livesense_core::clutter::BackgroundState;
use livesense_core::config::{SicConfig, SicKind};
use livesense_core::rdmap::{DopplerProcessor, RangeProcessor};
use livesense_core::simulator::{generate_trace, ImpairmentModel, Scene, TargetSpec};
use livesense_core::sync::SyncState;
use livesense_core::{Pipeline, SensingConfig, C64};

fn power_db(x: C64) -> f64 {
    10.0 * x.norm_sqr().log10()
}

#[test]
fn ema_removes_leakage_but_keeps_mover() {
    let cfg = SensingConfig::default();
    // 0.2 m/s is 6.4 Doppler bins
    let scene = Scene {
        targets: vec![TargetSpec::new(2.0, 0.2, 0.05)],
        impairments: ImpairmentModel::full(0.0),
        rng_seed: 12,
    };
    let frames = generate_trace(&scene, &cfg, 128);
    let mut sync = SyncState::new(&cfg);
    let mut bg = BackgroundState::new(&SicConfig {
        kind: SicKind::Ema,
        window_k: 64,
        alpha: 0.02,
    });
    let rp = RangeProcessor::new(&cfg);
    let (mut before, mut after) = (Vec::new(), Vec::new());
    for (i, f) in frames.iter().enumerate() {
        let x = sync.process(f);
        let cleaned = bg.subtract(&x.csi);
        if sync.has_reference() {
            bg.update(&x.csi);
        }
        if i >= frames.len() - 32 {
            before.push(rp.profile(&x.csi));
            after.push(rp.profile(&cleaned));
        }
    }
    assert!(!bg.is_warmup());
    let dp = DopplerProcessor::new(32);
    let (sb, sa) = (dp.spectrum(&before), dp.spectrum(&after));
    let suppression = power_db(sb[16][0]) - power_db(sa[16][0]);
    assert!(suppression >= 30.0, "{suppression}");

    let peak = |s: &[Vec<C64>]| {
        s.iter()
            .enumerate()
            .filter(|(d, _)| d.abs_diff(16) >= 2)
            .flat_map(|(_, row)| row.iter().map(|x| power_db(*x)))
            .fold(f64::NEG_INFINITY, f64::max)
    };
    let attenuation = peak(&sb) - peak(&sa);
    assert!(attenuation.abs() < 3.0, "{attenuation}");
}

#[test]
fn static_target_is_not_detected() {
    let cfg = SensingConfig::default();
    let scene = Scene {
        targets: vec![TargetSpec::new(1.5, 0.0, 0.1), TargetSpec::new(3.0, 0.0, 0.05)],
        impairments: ImpairmentModel::full(1e-4),
        rng_seed: 5,
    };
    let results = Pipeline::new(cfg.clone()).unwrap().run(generate_trace(&scene, &cfg, 32 * 5));
    assert_eq!(results.len(), 5);
    for r in &results[2..] {
        assert!(r.detections.is_empty(), "{:?}", r.detections);
    }
}

#[test]
fn subtract_leaves_state_untouched() {
    let cfg = SensingConfig::default();
    let frames = generate_trace(&Scene::default(), &cfg, 3);
    let mut bg = BackgroundState::new(&cfg.sic);
    bg.update(&frames[0].csi);
    let snapshot = bg.background().unwrap().to_vec();
    let seen = bg.frames_seen();
    let input = frames[1].csi.clone();
    let _ = bg.subtract(&input);
    assert_eq!(bg.background().unwrap(), &snapshot[..]);
    assert_eq!(bg.frames_seen(), seen);
    bg.update(&input);
    assert_eq!(input, frames[1].csi);
}
