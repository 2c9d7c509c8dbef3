//! Shared fixtures for the benchmarks.

use chimera_core::hj::{joint_independence, Density1D, QuantileForecast, TailPolicy, STANDARD_LEVELS};
use chimera_core::inference::PosteriorSpec;
use chimera_core::model::{ModelConfig, ModelParams};
use chimera_core::synth::{plausible_params, random_season};
use chimera_core::ts::EpiWeek;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn config() -> ModelConfig {
    ModelConfig::new(5000.0, 30, EpiWeek::new(2023, 40).unwrap())
}

pub fn params(seed: u64) -> ModelParams {
    plausible_params(&config(), &mut ChaCha8Rng::seed_from_u64(seed))
}

/// A 23-level forecast shaped like a right-skewed count forecast.
pub fn quantiles(center: f64) -> QuantileForecast {
    let values = STANDARD_LEVELS
        .iter()
        .map(|&p| center * (1.0 + 2.0 * (p - 0.5) + (p - 0.5).powi(3) * 3.0))
        .collect();
    QuantileForecast::new(STANDARD_LEVELS.to_vec(), values).unwrap()
}

pub fn density(center: f64) -> Density1D {
    Density1D::from_quantiles(&quantiles(center), TailPolicy::default()).unwrap()
}

/// Control and chimeric posteriors conditioned on the first `weeks` weeks
/// of a synthetic season.
pub fn specs(weeks: usize) -> (PosteriorSpec, PosteriorSpec) {
    let cfg = config();
    let season = random_season("B", &cfg, 4).unwrap();
    let obs = season.observed_through(weeks).unwrap();
    let hj = joint_independence(density(12.0), density(300.0));
    (
        PosteriorSpec::control(obs.clone(), cfg.clone()).unwrap(),
        PosteriorSpec::chimeric(obs, cfg, hj).unwrap(),
    )
}
