use criterion::{criterion_group, criterion_main, BatchSize, Criterion, Throughput};
use livesense_bench::workload;
use livesense_core::pipeline::BatchProcessor;
use livesense_core::{Mode, Pipeline, SensingConfig};

fn batch(c: &mut Criterion) {
    let mut g = c.benchmark_group("batch");
    for mode in [Mode::Gesture, Mode::Presence, Mode::Efficiency] {
        let cfg = SensingConfig {
            mode,
            ..SensingConfig::default()
        };
        let frames = workload(&cfg, 4);
        let mut warm = BatchProcessor::new(cfg.clone());
        let mut slots = frames.chunks_exact(cfg.doppler_batch);
        for chunk in slots.by_ref().take(3) {
            warm.process(chunk, 0.0, 0, 0);
        }
        let last = frames[frames.len() - cfg.doppler_batch..].to_vec();
        g.throughput(Throughput::Elements(cfg.doppler_batch as u64));
        g.bench_function(mode.as_str(), |b| {
            b.iter_batched(|| warm.clone(), |mut p| p.process(&last, 0.0, 0, 0), BatchSize::LargeInput)
        });
    }
    g.finish();
}

fn end_to_end(c: &mut Criterion) {
    let cfg = SensingConfig::default();
    let frames = workload(&cfg, 8);
    let mut g = c.benchmark_group("end_to_end");
    g.sample_size(10);
    g.throughput(Throughput::Elements(frames.len() as u64));
    g.bench_function("eight_batches", |b| {
        b.iter_batched(
            || frames.clone(),
            |f| Pipeline::new(cfg.clone()).expect("config").run(f),
            BatchSize::LargeInput,
        )
    });
    g.finish();
}

criterion_group!(benches, batch, end_to_end);
criterion_main!(benches);
