//! Latent hospitalization dynamics and the Poisson observation process.

mod dynamics;
mod params;

pub use dynamics::{
    hard_peak, hosp_convolution, lag_pmf, lambda_path, simulate_latent, soft_peak, weekly_hosps, weekly_latent,
    LatentTrajectory,
};
pub(crate) use dynamics::{simulate_with, soft_peak_with, weekly_hosps_with, weekly_with, Theta};
pub use params::{ModelConfig, ModelParams, DEFAULT_LAG, DEFAULT_SEED_SCALE, N_SCALAR};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};

use crate::error::{Error, Result};
use crate::ts::{EpiWeek, HospSeries};

/// One Poisson draw with mean `mean`; zero mean gives zero.
pub fn poisson_draw<R: rand::Rng + ?Sized>(rng: &mut R, mean: f64) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    Poisson::new(mean).map(|d| d.sample(rng) as u64).unwrap_or(0)
}

/// Independent Poisson observations of weekly latent hospitalizations.
pub fn simulate_observed(location: &str, start: EpiWeek, weekly_h: &[f64], seed: u64) -> Result<HospSeries> {
    if let Some(h) = weekly_h.iter().find(|h| !(**h >= 0.0) || !h.is_finite()) {
        return Err(Error::Validation(format!(
            "weekly mean {h} is not a non-negative number"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let counts = weekly_h.iter().map(|&h| poisson_draw(&mut rng, h)).collect();
    Ok(HospSeries::new(location, start, counts))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn start() -> EpiWeek {
        EpiWeek::new(2023, 40).unwrap()
    }

    #[test]
    fn zero_mean_gives_zero_counts() {
        let s = simulate_observed("X", start(), &[0.0; 8], 1).unwrap();
        assert!(s.counts().iter().all(|&c| c == 0));
    }

    #[test]
    fn seeded_draws_repeat() {
        let h = [10.0, 50.0, 200.0];
        assert_eq!(
            simulate_observed("X", start(), &h, 9).unwrap(),
            simulate_observed("X", start(), &h, 9).unwrap()
        );
    }

    #[test]
    fn sample_mean_is_close() {
        let h = vec![1000.0; 200];
        let s = simulate_observed("X", start(), &h, 3).unwrap();
        let mean = s.counts().iter().sum::<u64>() as f64 / 200.0;
        assert!((mean - 1000.0).abs() < 3.0 * (1000.0f64 / 200.0).sqrt());
    }

    #[test]
    fn rejects_negative_means() {
        assert!(simulate_observed("X", start(), &[-1.0], 1).is_err());
    }
}
