use std::f64::consts::PI;

use livesense_core::clutter::BackgroundState;
use livesense_core::config::{SicConfig, SicKind};
use livesense_core::detect::{cfar_detect, extract_detections, noise_floor, CfarParams};
use livesense_core::rdmap::{DopplerProcessor, RangeProcessor};
use livesense_core::simulator::{generate_frame, ImpairmentModel, Scene, TargetSpec};
use livesense_core::sync::{apply_delay, coarse_delay};
use livesense_core::track::Tracker;
use livesense_core::trace::{decode_trace, encode_trace, TraceHeader};
use livesense_core::vitals::vitals_estimate;
use livesense_core::{axes, rdmap, CsiFrame, FrameFlags, Mode, SensingConfig, C64};
use proptest::prelude::*;

fn small() -> SensingConfig {
    SensingConfig {
        bandwidth_hz: 40e6,
        n_subcarriers: 128,
        ..SensingConfig::default()
    }
}

fn cplx() -> impl Strategy<Value = C64> {
    (-1.0..1.0f64, -1.0..1.0f64).prop_map(|(a, b)| C64::new(a, b))
}

fn vec_c(n: usize) -> impl Strategy<Value = Vec<C64>> {
    prop::collection::vec(cplx(), n)
}

fn energy(v: &[C64]) -> f64 {
    v.iter().map(|x| x.norm_sqr()).sum()
}

fn max_diff(a: &[C64], b: &[C64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

fn target() -> impl Strategy<Value = TargetSpec> {
    (0.2..4.0f64, -1.0..1.0f64, 0.01..0.5f64).prop_map(|(r, v, a)| TargetSpec::new(r, v, a))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn axes_depend_only_on_config(z in 1usize..5, mode in prop::sample::select(vec![Mode::Gesture, Mode::Presence, Mode::Efficiency])) {
        let cfg = SensingConfig { mode, zero_pad_factor: Some(z), ..SensingConfig::default() };
        prop_assert_eq!(axes::range_axis(&cfg), axes::range_axis(&cfg.clone()));
        let doubled = SensingConfig { zero_pad_factor: Some(2 * z), ..cfg.clone() };
        let ratio = axes::range_spacing(&cfg) / axes::range_spacing(&doubled);
        prop_assert!((ratio - 2.0).abs() < 1e-12);
        let axis = axes::range_axis(&cfg);
        prop_assert_eq!(axis[0], 0.0);
        prop_assert!(*axis.last().unwrap() <= cfg.max_range_m + 1e-9);
    }

    #[test]
    fn velocity_axis_has_one_zero(m in prop::sample::select(vec![8usize, 16, 32, 64, 128])) {
        let cfg = SensingConfig { doppler_batch: m, ..SensingConfig::default() };
        let v = axes::velocity_axis(&cfg);
        prop_assert_eq!(v.len(), m);
        prop_assert_eq!(v.iter().filter(|x| **x == 0.0).count(), 1);
        prop_assert!(v.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn simulator_superposes(a in target(), b in target(), m in 0u64..200, seed in any::<u64>()) {
        let cfg = small();
        let mk = |targets: Vec<TargetSpec>| Scene { targets, impairments: ImpairmentModel::default(), rng_seed: seed };
        let both = generate_frame(&mk(vec![a.clone(), b.clone()]), &cfg, m);
        let fa = generate_frame(&mk(vec![a]), &cfg, m);
        let fb = generate_frame(&mk(vec![b]), &cfg, m);
        let empty = generate_frame(&mk(vec![]), &cfg, m);
        let sum: Vec<C64> = fa.csi.iter().zip(&fb.csi).zip(&empty.csi).map(|((x, y), e)| x + y - e).collect();
        prop_assert!(max_diff(&both.csi, &sum) < 1e-12);
    }

    #[test]
    fn static_scene_is_time_invariant(r in 0.2..4.0f64, amp in 0.01..1.0f64, m in 1u64..1000) {
        let cfg = small();
        let scene = Scene { targets: vec![TargetSpec::new(r, 0.0, amp)], ..Scene::default() };
        let f0 = generate_frame(&scene, &cfg, 0);
        let fm = generate_frame(&scene, &cfg, m);
        prop_assert!(max_diff(&f0.csi, &fm.csi) < 1e-12);
    }

    #[test]
    fn zero_micro_motion_is_no_micro_motion(t in target(), f in 0.1..2.0f64, p in -PI..PI, m in 0u64..500) {
        let cfg = small();
        let plain = Scene { targets: vec![t.clone()], ..Scene::default() };
        let micro = Scene { targets: vec![t.with_micro_motion(0.0, f, p)], ..Scene::default() };
        prop_assert_eq!(generate_frame(&plain, &cfg, m).csi, generate_frame(&micro, &cfg, m).csi);
    }

    #[test]
    fn delays_compose(x in vec_c(128), a in -50e-9..50e-9f64, b in -50e-9..50e-9f64) {
        let cfg = small();
        let freqs = cfg.subcarrier_freqs();
        let f = CsiFrame::new(0.0, 0, x);
        let two = apply_delay(&apply_delay(&f, a, &freqs), b, &freqs);
        let one = apply_delay(&f, a + b, &freqs);
        let err = energy(&two.csi.iter().zip(&one.csi).map(|(p, q)| p - q).collect::<Vec<_>>());
        prop_assert!(10.0 * (err / energy(&f.csi)).log10() < -60.0);
        let mags = |v: &[C64]| v.iter().map(|c| c.norm()).collect::<Vec<_>>();
        for (p, q) in mags(&two.csi).iter().zip(mags(&f.csi)) {
            prop_assert!((p - q).abs() < 1e-12);
        }
    }

    #[test]
    fn coarse_delay_undoes_integer_shift(x in vec_c(128), l in -20i64..20) {
        let cfg = small();
        let freqs = cfg.subcarrier_freqs();
        let reference = CsiFrame::new(0.0, 0, x);
        let shifted = apply_delay(&reference, l as f64 / cfg.bandwidth_hz, &freqs);
        let c = coarse_delay(&shifted.csi, &reference.csi);
        prop_assert_eq!(c.samples + l, 0);
        prop_assert!(!c.low_confidence);
    }

    #[test]
    fn background_is_linear(frames in prop::collection::vec(vec_c(16), 1..12), k in 0.1..10.0f64,
                            kind in prop::sample::select(vec![SicKind::SlidingMean, SicKind::Ema, SicKind::Template])) {
        let sic = SicConfig { kind, window_k: 4, alpha: 0.2 };
        let mut a = BackgroundState::new(&sic);
        let mut b = BackgroundState::new(&sic);
        for f in &frames {
            a.update(f);
            b.update(&f.iter().map(|x| x * k).collect::<Vec<_>>());
        }
        let probe = &frames[0];
        let ra: Vec<C64> = a.subtract(probe).iter().map(|x| x * k).collect();
        let scaled: Vec<C64> = probe.iter().map(|x| x * k).collect();
        let rb = b.subtract(&scaled);
        prop_assert!(max_diff(&ra, &rb) < 1e-9 * k.max(1.0));
    }

    #[test]
    fn range_profile_is_linear(x in vec_c(128), y in vec_c(128), a in -3.0..3.0f64, b in -3.0..3.0f64) {
        let rp = RangeProcessor::new(&small());
        let mix: Vec<C64> = x.iter().zip(&y).map(|(p, q)| p * a + q * b).collect();
        let lhs = rp.profile(&mix);
        let rhs: Vec<C64> = rp.profile(&x).iter().zip(rp.profile(&y)).map(|(p, q)| p * a + q * b).collect();
        prop_assert!(max_diff(&lhs, &rhs) < 1e-12);
    }

    #[test]
    fn delay_shifts_native_profile(x in vec_c(64), l in 0usize..64) {
        let n = 64;
        let cfg = SensingConfig { bandwidth_hz: 20e6, n_subcarriers: n, ..SensingConfig::default() };
        let rp = RangeProcessor::with_params(n, 1, 1, n, false);
        let f = CsiFrame::new(0.0, 0, x);
        let shifted = apply_delay(&f, -(l as f64) / cfg.bandwidth_hz, &cfg.subcarrier_freqs());
        let before = rp.profile(&f.csi);
        let after = rp.profile(&shifted.csi);
        for r in 0..n {
            prop_assert!((after[(r + l) % n].norm() - before[r].norm()).abs() < 1e-9);
        }
    }

    #[test]
    fn unwindowed_profile_conserves_energy(x in vec_c(64)) {
        let n = 64;
        let rp = RangeProcessor::with_params(n, 1, 1, n, false);
        let p = rp.profile(&x);
        // the transform is normalised by 1/N
        prop_assert!((energy(&p) * n as f64 - energy(&x)).abs() < 1e-9 * energy(&x).max(1.0));
    }

    #[test]
    fn doppler_map_ignores_global_phase(profiles in prop::collection::vec(vec_c(8), 16), theta in -PI..PI) {
        let cfg = SensingConfig { doppler_batch: 16, ..SensingConfig::default() };
        let rot = C64::from_polar(1.0, theta);
        let turned: Vec<Vec<C64>> = profiles.iter().map(|p| p.iter().map(|x| x * rot).collect()).collect();
        let a = rdmap::doppler_process(&profiles, &cfg, 0, 0.0);
        let b = rdmap::doppler_process(&turned, &cfg, 0, 0.0);
        for (ra, rb) in a.mag_db.iter().zip(&b.mag_db) {
            for (p, q) in ra.iter().zip(rb) {
                prop_assert!((p - q).abs() < 1e-6);
            }
        }
        prop_assert_eq!(DopplerProcessor::new(16).len(), 16);
    }

    #[test]
    fn cfar_is_scale_invariant(profiles in prop::collection::vec(vec_c(24), 16), gain_db in -40.0..40.0f64, seed in 0usize..24) {
        let cfg = SensingConfig { doppler_batch: 16, ..SensingConfig::default() };
        let mut profiles = profiles;
        profiles[3][seed] += C64::new(30.0, 0.0);
        let map = rdmap::doppler_process(&profiles, &cfg, 0, 0.0);
        let mut louder = map.clone();
        for row in &mut louder.mag_db {
            for v in row.iter_mut() {
                *v += gain_db;
            }
        }
        let params = CfarParams { guard_r: 1, guard_d: 1, train_r: 3, train_d: 2, pfa: 1e-3 };
        let m1 = cfar_detect(&map, &params);
        let m2 = cfar_detect(&louder, &params);
        prop_assert_eq!(&m1, &m2);

        let d1 = extract_detections(&map, &m1, noise_floor(&map).unwrap(), 100.0);
        let d2 = extract_detections(&louder, &m2, noise_floor(&louder).unwrap(), 100.0);
        prop_assert_eq!(d1.len(), d2.len());
        for (p, q) in d1.iter().zip(&d2) {
            prop_assert!((p.snr_db - q.snr_db).abs() < 1e-6);
            prop_assert!((p.range_m - q.range_m).abs() < 1e-9);
        }
        let hits = m1.iter().flatten().filter(|h| **h).count();
        prop_assert!(d1.len() <= hits);

        let mut tracker = Tracker::new(&cfg.track);
        prop_assert!(tracker.update(&d1, 0.0).len() <= d1.len());
    }

    #[test]
    fn vitals_ignore_phase_offset_and_trend(offset in -PI..PI, slope in -0.05..0.05f64, f in 0.15..0.5f64) {
        let dt = 0.025;
        let series = |off: f64, k: f64| -> Vec<C64> {
            (0..1200)
                .map(|i| {
                    let t = i as f64 * dt;
                    C64::from_polar(1.0, off + k * i as f64 + 0.6 * (2.0 * PI * f * t).sin())
                })
                .collect()
        };
        let plain = vitals_estimate(&series(0.0, 0.0), dt, [0.1, 0.6], 6.0, 0).unwrap();
        let moved = vitals_estimate(&series(offset, slope), dt, [0.1, 0.6], 6.0, 0).unwrap();
        prop_assert!((plain.rate_hz - moved.rate_hz).abs() < 1e-6);
        prop_assert!((plain.rate_hz - f).abs() < 0.02);
    }

    #[test]
    fn trace_round_trips(frames in prop::collection::vec((any::<u32>(), 0.0..1e4f64, any::<u8>(), vec_c(16)), 0..20)) {
        let mut cfg = small();
        cfg.n_subcarriers = 16;
        let header = TraceHeader::from_config(&cfg);
        let frames: Vec<CsiFrame> = frames
            .into_iter()
            .map(|(seq, ts, flags, csi)| {
                // samples are stored as f32
                let csi = csi.iter().map(|c| C64::new(c.re as f32 as f64, c.im as f32 as f64)).collect();
                let mut f = CsiFrame::new(ts, seq, csi);
                f.flags = FrameFlags::from_bits(flags & 0b11);
                f
            })
            .collect();
        let (h, back) = decode_trace(&encode_trace(&header, &frames)).unwrap();
        prop_assert_eq!(h, header);
        prop_assert_eq!(back, frames);
    }
}
