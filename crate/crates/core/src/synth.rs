//! Synthetic seasons and human-judgment forecasts for testing and demos.

use chrono::NaiveDate;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::Result;
use crate::hj::{IndividualForecast, QuantileForecast, Target, STANDARD_LEVELS};
use crate::model::{hard_peak, simulate_observed, weekly_latent, ModelConfig, ModelParams};
use crate::ts::HospSeries;

/// Draws parameters that produce a single, visible epidemic wave. The
/// transmission bump is placed so the effective reproduction number starts
/// near one and peaks between 1.4 and 1.9 in the middle of the season.
pub fn plausible_params<R: Rng + ?Sized>(config: &ModelConfig, rng: &mut R) -> ModelParams {
    let t = config.t_days() as f64;
    let alpha = rng.random_range(0.55..0.75);
    let peak_reff: f64 = rng.random_range(1.5..2.0);
    let start_reff: f64 = rng.random_range(0.8..1.0);
    let mu = rng.random_range(0.4 * t..0.6 * t);
    let sigma = mu / (2.0 * (peak_reff / start_reff).ln()).sqrt();
    ModelParams {
        beta_g: rng.random_range(1.5..3.5),
        beta_e: rng.random_range(2.0..5.0),
        mu_infections: rng.random_range(0.02..0.2),
        mu_hosps: rng.random_range(0.02..0.2),
        alpha,
        r: peak_reff / alpha,
        mu,
        sigma,
        s: rng.random_range(0.01..0.05),
        rw_increments: (0..config.season_weeks)
            .map(|_| rng.sample::<f64, _>(StandardNormal))
            .collect(),
    }
}

/// A simulated season: parameters, latent weekly means and observed counts.
#[derive(Debug, Clone)]
pub struct SyntheticSeason {
    pub params: ModelParams,
    pub latent: Vec<f64>,
    pub observed: HospSeries,
}

impl SyntheticSeason {
    /// Peak week (1-based) and height of the latent trajectory.
    pub fn peak(&self) -> (usize, f64) {
        hard_peak(&self.latent).expect("season has weeks")
    }

    /// Observations of the first `weeks` weeks.
    pub fn observed_through(&self, weeks: usize) -> Result<HospSeries> {
        let end = self.observed.start().add_weeks(weeks as i64 - 1);
        self.observed.truncate_to(end)
    }
}

pub fn simulate_season(
    location: &str,
    params: ModelParams,
    config: &ModelConfig,
    seed: u64,
) -> Result<SyntheticSeason> {
    let latent = weekly_latent(&params, config)?;
    let observed = simulate_observed(location, config.season_start, &latent, seed)?;
    Ok(SyntheticSeason {
        params,
        latent,
        observed,
    })
}

/// A season whose parameters are drawn by [`plausible_params`], all from `seed`.
pub fn random_season(location: &str, config: &ModelConfig, seed: u64) -> Result<SyntheticSeason> {
    let params = plausible_params(config, &mut ChaCha8Rng::seed_from_u64(seed));
    simulate_season(location, params, config, seed)
}

/// How a synthetic crowd of forecasters behaves.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct CrowdSkill {
    /// Spread of each forecaster's peak-week belief, in weeks.
    pub week_sd: f64,
    /// Spread of each forecaster's log peak-intensity belief.
    pub log_intensity_sd: f64,
    /// Spread of forecaster centers around the truth, in the same units.
    pub bias_sd: f64,
}

impl Default for CrowdSkill {
    fn default() -> Self {
        Self {
            week_sd: 1.5,
            log_intensity_sd: 0.25,
            bias_sd: 0.5,
        }
    }
}

/// Normal-quantile forecasts of peak week and peak intensity from
/// `n_forecasters` noisy forecasters centered near the given truth.
pub fn synthetic_hj(
    location: &str,
    peak_week: f64,
    peak_intensity: f64,
    n_forecasters: usize,
    submitted_at: NaiveDate,
    skill: CrowdSkill,
    seed: u64,
) -> Result<Vec<IndividualForecast>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let z: Vec<f64> = STANDARD_LEVELS
        .iter()
        .map(|&p| Normal::standard().inverse_cdf(p))
        .collect();
    let mut out = Vec::with_capacity(2 * n_forecasters);
    for k in 0..n_forecasters {
        let id = Some(format!("f{:02}", k + 1));
        let wc = peak_week + skill.bias_sd * rng.sample::<f64, _>(StandardNormal);
        let week: Vec<f64> = z.iter().map(|z| wc + skill.week_sd * z).collect();
        let lc = peak_intensity.max(1.0).ln()
            + skill.bias_sd * skill.log_intensity_sd * rng.sample::<f64, _>(StandardNormal);
        let intensity: Vec<f64> = z.iter().map(|z| (lc + skill.log_intensity_sd * z).exp()).collect();
        for (target, values) in [(Target::PeakWeek, week), (Target::PeakIntensity, intensity)] {
            out.push(IndividualForecast {
                forecaster_id: id.clone(),
                target,
                location: location.to_string(),
                submitted_at,
                quantiles: QuantileForecast::new(STANDARD_LEVELS.to_vec(), values)?,
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ts::EpiWeek;

    #[test]
    fn plausible_seasons_have_an_interior_peak() {
        let config = ModelConfig::new(5000.0, 30, EpiWeek::new(2023, 40).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for k in 0..20 {
            let season = simulate_season("X", plausible_params(&config, &mut rng), &config, k).unwrap();
            let (week, height) = season.peak();
            assert!(week > 3 && week < 30, "week {week}");
            assert!(height > 10.0, "height {height}");
        }
    }

    #[test]
    fn crowd_is_reproducible_and_ordered() {
        let d = NaiveDate::from_ymd_opt(2024, 1, 5).unwrap();
        let a = synthetic_hj("X", 15.0, 300.0, 3, d, CrowdSkill::default(), 4).unwrap();
        let b = synthetic_hj("X", 15.0, 300.0, 3, d, CrowdSkill::default(), 4).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 6);
        assert!(a.iter().all(|f| f.quantiles.values().windows(2).all(|w| w[0] < w[1])));
    }
}
