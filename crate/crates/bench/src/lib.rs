//! Shared fixtures for the benchmarks.

use livesense_core::simulator::{generate_trace, ImpairmentModel, Scene, TargetSpec};
use livesense_core::{CsiFrame, SensingConfig};

/// Two movers under full impairments, the usual acceptance workload.
pub fn workload_scene() -> Scene {
    Scene {
        targets: vec![TargetSpec::new(1.0, 0.3, 0.03), TargetSpec::new(2.5, -0.2, 0.02)],
        impairments: ImpairmentModel::full(1e-4),
        rng_seed: 61,
    }
}

/// `batches` batches worth of frame slots (drops included).
pub fn workload(config: &SensingConfig, batches: usize) -> Vec<CsiFrame> {
    generate_trace(&workload_scene(), config, (config.doppler_batch * batches) as u64)
}
