use livesense_core::axes;
use livesense_core::simulator::{generate_trace, ImpairmentModel, Scene, TargetSpec};
use livesense_core::{ConfigError, Mode, Pipeline, SensingConfig, TrackState};

fn run(cfg: &SensingConfig, scene: &Scene, batches: u64) -> Vec<livesense_core::BatchResult> {
    // one spare batch: a drop at the very end shortens the last batch
    let mut out = Pipeline::new(cfg.clone())
        .unwrap()
        .run(generate_trace(scene, cfg, cfg.doppler_batch as u64 * (batches + 1)));
    out.truncate(batches as usize);
    out
}

/// Signal time at the centre of batch `b`.
fn mid(b: usize) -> f64 {
    (b as f64 * 32.0 + 15.5) * 0.025
}

#[test]
fn empty_scene_is_quiet() {
    let cfg = SensingConfig::default();
    let scene = Scene {
        impairments: ImpairmentModel::full(1e-4),
        ..Scene::default()
    };
    let results = run(&cfg, &scene, 5);
    assert_eq!(results.len(), 5);
    for r in &results {
        assert!(r.detections.is_empty());
        assert!(r.tracks.is_empty());
        assert!(!r.presence.present);
    }
}

#[test]
fn gesture_target_range_and_velocity() {
    let cfg = SensingConfig {
        mode: Mode::Gesture,
        ..SensingConfig::default()
    };
    let noise = 1e-4;
    let target = TargetSpec::new(1.5 - 0.2 * mid(2), 0.2, (noise * 1e3f64).sqrt());
    let scene = Scene {
        targets: vec![target.clone()],
        impairments: ImpairmentModel::full(noise),
        rng_seed: 77,
    };
    let results = run(&cfg, &scene, 3);
    let dets = &results[2].detections;
    assert_eq!(dets.len(), 1, "{dets:?}");
    assert!((dets[0].range_m - 1.5).abs() < 0.05, "{}", dets[0].range_m);
    assert!((dets[0].velocity_mps - 0.2).abs() < 0.02, "{}", dets[0].velocity_mps);
    assert!((target.range_at(mid(2)) - 1.5).abs() < 1e-12);
}

#[test]
fn two_targets_two_detections_then_two_tracks() {
    let cfg = SensingConfig::default();
    let scene = Scene {
        targets: vec![TargetSpec::new(0.6, 0.1, 0.03), TargetSpec::new(1.8, -0.25, 0.03)],
        impairments: ImpairmentModel::full(1e-4),
        rng_seed: 9,
    };
    let results = run(&cfg, &scene, 3);
    for (b, r) in results.iter().enumerate() {
        assert_eq!(r.detections.len(), 2, "batch {b}: {:?}", r.detections);
    }
    let confirmed: Vec<_> = results[2].tracks.iter().filter(|t| t.state == TrackState::Confirmed).collect();
    assert_eq!(confirmed.len(), 2);
    let mut ranges: Vec<f64> = confirmed.iter().map(|t| t.last().range_m).collect();
    ranges.sort_by(f64::total_cmp);
    assert!((ranges[0] - (0.6 + 0.1 * mid(2))).abs() < 0.2, "{ranges:?}");
    assert!((ranges[1] - (1.8 - 0.25 * mid(2))).abs() < 0.2, "{ranges:?}");
}

#[test]
fn walker_is_present_via_track() {
    let cfg = SensingConfig::default();
    let scene = Scene {
        targets: vec![TargetSpec::new(2.5, -0.3, 0.1)],
        impairments: ImpairmentModel::full(1e-4),
        rng_seed: 21,
    };
    let results = run(&cfg, &scene, 4);
    let last = results.last().unwrap();
    assert!(last.presence.present);
    assert!(last.tracks.iter().any(|t| t.state == TrackState::Confirmed));
    assert!(last.vitals.is_none() || last.presence.score >= last.vitals.unwrap().confidence_db);
}

#[test]
fn breather_is_present_via_vitals() {
    let cfg = SensingConfig::default();
    let scene = Scene {
        targets: vec![TargetSpec::new(1.0, 0.0, 0.05).with_micro_motion(0.005, 0.25, 0.0)],
        impairments: ImpairmentModel::full(1e-4),
        rng_seed: 22,
    };
    let batches = (cfg.vitals.window_frames / cfg.doppler_batch) as u64 + 1;
    let results = run(&cfg, &scene, batches);
    let last = results.last().unwrap();
    let v = last.vitals.expect("vitals estimate");
    assert!((v.rate_hz - 0.25).abs() <= 0.02, "{}", v.rate_hz);
    assert!(last.presence.present);
}

#[test]
fn config_patches_apply_at_batch_boundary() {
    let cfg = SensingConfig {
        mode: Mode::Gesture,
        ..SensingConfig::default()
    };
    let frames = generate_trace(&Scene::default(), &cfg, 32 * 3);
    let mut p = Pipeline::new(cfg.clone()).unwrap();
    assert_eq!(p.apply_config_patch(&[]).unwrap(), 0);

    let mut out = Vec::new();
    for f in frames[..40].iter().cloned() {
        out.extend(p.push(f));
    }
    let id = p.apply_config_patch(&[("mode".into(), "presence".into())]).unwrap();
    assert_eq!(id, 1);
    for f in frames[40..].iter().cloned() {
        out.extend(p.push(f));
    }
    out.extend(p.finish());
    assert_eq!(out.len(), 3);
    assert_eq!(out[0].config_id, 0);
    assert_eq!(out[0].map.range_axis, axes::range_axis(&cfg));
    let presence = SensingConfig::default();
    for r in &out[1..] {
        assert_eq!(r.config_id, 1);
        assert_eq!(r.map.range_axis, axes::range_axis(&presence));
    }

    let err = p.apply_config_patch(&[("n_subcarriers".into(), "256".into())]).unwrap_err();
    assert!(matches!(err, ConfigError::RestartRequired(_)));
    assert!(err.to_string().contains("restart required"));
    assert!(p.apply_config_patch(&[("cfar.pfa".into(), "2".into())]).is_err());
    assert!(p.apply_config_patch(&[("no_such_key".into(), "1".into())]).is_err());
    assert_eq!(p.config_id(), 1);
}
