//! Shared fixtures for the criterion benchmarks in `benches/`.

use qkd_tha::{ChannelParams, ExperimentConfig, PoissonSource};

/// Default channel and source at `distance_km`, `N = 1e10`.
pub fn reference_config(distance_km: f64) -> ExperimentConfig {
    let ch = ChannelParams::new(7.2e-8, 0.65, 0.2, distance_km, 6f64.to_radians()).expect("valid channel");
    let source = PoissonSource::new(vec![0.5, 0.1, 1e-4], vec![0.8, 0.1, 0.1], 12).expect("valid source");
    ExperimentConfig::new(10_000_000_000, ch, source, 0.8).expect("valid config")
}
