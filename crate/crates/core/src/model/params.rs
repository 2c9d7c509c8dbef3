use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ts::EpiWeek;

/// Default look-back window, in days, for both lag distributions.
pub const DEFAULT_LAG: usize = 14;

/// Default size of each pre-season seed, as a fraction of the population.
pub const DEFAULT_SEED_SCALE: f64 = 1e-3;

/// Number of scalar (non random-walk) parameters.
pub const N_SCALAR: usize = 9;

/// Parameter vector of the hospitalization model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// Serial-interval lag mean (days, Poisson mean of `lag - 1`).
    pub beta_g: f64,
    /// Infection-to-hospitalization lag mean (days).
    pub beta_e: f64,
    /// Growth rate of pre-season infections.
    pub mu_infections: f64,
    /// Growth rate of pre-season hospitalizations.
    pub mu_hosps: f64,
    /// Fraction of the population initially susceptible.
    pub alpha: f64,
    /// Peak transmission multiplier.
    pub r: f64,
    /// Day of the transmission bump's center.
    pub mu: f64,
    /// Width of the transmission bump, in days.
    pub sigma: f64,
    /// Scale of the weekly random-walk increments.
    pub s: f64,
    /// Standardized weekly random-walk increments.
    pub rw_increments: Vec<f64>,
}

impl ModelParams {
    pub fn names(season_weeks: usize) -> Vec<String> {
        let mut names: Vec<String> = [
            "beta_g",
            "beta_e",
            "mu_infections",
            "mu_hosps",
            "alpha",
            "R",
            "mu",
            "sigma",
            "s",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        names.extend((1..=season_weeks).map(|k| format!("z[{k}]")));
        names
    }

    pub fn dim(&self) -> usize {
        N_SCALAR + self.rw_increments.len()
    }

    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = vec![
            self.beta_g,
            self.beta_e,
            self.mu_infections,
            self.mu_hosps,
            self.alpha,
            self.r,
            self.mu,
            self.sigma,
            self.s,
        ];
        v.extend_from_slice(&self.rw_increments);
        v
    }

    pub fn from_slice(v: &[f64]) -> Result<Self> {
        if v.len() < N_SCALAR {
            return Err(Error::Schema(format!(
                "parameter vector has {} entries, need at least {N_SCALAR}",
                v.len()
            )));
        }
        Ok(Self {
            beta_g: v[0],
            beta_e: v[1],
            mu_infections: v[2],
            mu_hosps: v[3],
            alpha: v[4],
            r: v[5],
            mu: v[6],
            sigma: v[7],
            s: v[8],
            rw_increments: v[N_SCALAR..].to_vec(),
        })
    }

    /// First violated support constraint, if any, for a season of `t_days`.
    pub fn support_violation(&self, t_days: f64) -> Option<String> {
        let unit = |x: f64| x > 0.0 && x < 1.0;
        let checks = [
            (self.beta_g > 0.0, "beta_g must be positive"),
            (self.beta_e > 0.0, "beta_e must be positive"),
            (unit(self.mu_infections), "mu_infections must lie in (0,1)"),
            (unit(self.mu_hosps), "mu_hosps must lie in (0,1)"),
            (unit(self.alpha), "alpha must lie in (0,1)"),
            (self.r > 0.0, "R must be positive"),
            (self.mu > 0.0 && self.mu < t_days, "mu must lie in (0,T)"),
            (self.sigma > 0.0 && self.sigma < t_days, "sigma must lie in (0,T)"),
            (self.s > 0.0, "s must be positive"),
            (
                self.rw_increments.iter().all(|z| z.is_finite()),
                "random-walk increments must be finite",
            ),
        ];
        checks.iter().find(|(ok, _)| !ok).map(|(_, msg)| msg.to_string())
    }
}

/// Fixed settings of the hospitalization model for one location.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Population (effective at-risk population) of the location.
    pub population: f64,
    /// Look-back window of both lag distributions, in days.
    pub lag: usize,
    /// Number of modeled weeks; the daily grid has `7 * season_weeks` days.
    pub season_weeks: usize,
    /// Epiweek of the first modeled week.
    pub season_start: EpiWeek,
    /// Pre-season seeds are `population * seed_scale * exp(rate * t)`.
    #[serde(default = "default_seed_scale")]
    pub seed_scale: f64,
}

fn default_seed_scale() -> f64 {
    DEFAULT_SEED_SCALE
}

impl ModelConfig {
    pub fn new(population: f64, season_weeks: usize, season_start: EpiWeek) -> Self {
        Self {
            population,
            lag: DEFAULT_LAG,
            season_weeks,
            season_start,
            seed_scale: DEFAULT_SEED_SCALE,
        }
    }

    pub fn t_days(&self) -> usize {
        7 * self.season_weeks
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.population > 0.0 && self.population.is_finite()) {
            return Err(Error::Config(format!(
                "population {} must be positive",
                self.population
            )));
        }
        if self.lag == 0 {
            return Err(Error::Config("lag must be at least one day".into()));
        }
        if self.season_weeks == 0 {
            return Err(Error::Config("season must have at least one week".into()));
        }
        if self.lag > self.t_days() {
            return Err(Error::Config(format!(
                "lag {} exceeds the {}-day season",
                self.lag,
                self.t_days()
            )));
        }
        if !(self.seed_scale > 0.0 && self.seed_scale.is_finite()) {
            return Err(Error::Config("seed_scale must be positive".into()));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        N_SCALAR + self.season_weeks
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vector_roundtrip() {
        let p = ModelParams {
            beta_g: 2.0,
            beta_e: 3.0,
            mu_infections: 0.2,
            mu_hosps: 0.3,
            alpha: 0.5,
            r: 2.0,
            mu: 50.0,
            sigma: 20.0,
            s: 0.1,
            rw_increments: vec![0.5, -0.5],
        };
        assert_eq!(ModelParams::from_slice(&p.to_vec()).unwrap(), p);
        assert_eq!(ModelParams::names(2).len(), p.dim());
        assert!(p.support_violation(70.0).is_none());
        let bad = ModelParams { alpha: 1.2, ..p };
        assert!(bad.support_violation(70.0).unwrap().contains("alpha"));
    }

    #[test]
    fn config_checks() {
        let w = EpiWeek::new(2023, 40).unwrap();
        let mut c = ModelConfig::new(1e4, 2, w);
        assert!(c.validate().is_ok());
        c.lag = 15;
        assert!(c.validate().is_err());
    }
}
