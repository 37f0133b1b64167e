use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use livesense_bench::workload;
use livesense_core::detect::{cfar_detect, noise_floor, CfarParams};
use livesense_core::rdmap::{doppler_process, DopplerProcessor, RangeProcessor};
use livesense_core::sync::SyncState;
use livesense_core::{Mode, SensingConfig};

fn range(c: &mut Criterion) {
    let mut g = c.benchmark_group("range_profile");
    let frame = workload(&SensingConfig::default(), 1).remove(0);
    for mode in [Mode::Gesture, Mode::Presence, Mode::Efficiency] {
        let cfg = SensingConfig {
            mode,
            ..SensingConfig::default()
        };
        let rp = RangeProcessor::new(&cfg);
        g.bench_function(mode.as_str(), |b| b.iter(|| rp.profile(black_box(&frame.csi))));
    }
    g.finish();
}

fn sync(c: &mut Criterion) {
    let cfg = SensingConfig::default();
    let frames = workload(&cfg, 2);
    let mut state = SyncState::new(&cfg);
    for f in &frames[..32] {
        state.process(f);
    }
    let mut i = 32;
    c.bench_function("sync_frame", |b| {
        b.iter(|| {
            i = if i + 1 < frames.len() { i + 1 } else { 32 };
            state.process(black_box(&frames[i]))
        })
    });
}

fn doppler_and_cfar(c: &mut Criterion) {
    let cfg = SensingConfig::default();
    let rp = RangeProcessor::new(&cfg);
    let profiles: Vec<_> = workload(&cfg, 2)[..32].iter().map(|f| rp.profile(&f.csi)).collect();
    let dp = DopplerProcessor::new(cfg.doppler_batch);
    c.bench_function("doppler_spectrum", |b| b.iter(|| dp.spectrum(black_box(&profiles))));

    let map = doppler_process(&profiles, &cfg, 0, 0.0);
    let params = CfarParams::from_config(&cfg.cfar, cfg.zero_pad());
    c.bench_function("noise_floor", |b| b.iter(|| noise_floor(black_box(&map))));
    c.bench_function("ca_cfar", |b| {
        b.iter_batched(|| map.clone(), |m| cfar_detect(&m, &params), BatchSize::SmallInput)
    });
}

criterion_group!(benches, range, sync, doppler_and_cfar);
criterion_main!(benches);
