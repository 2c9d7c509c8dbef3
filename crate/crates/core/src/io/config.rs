//! Run configuration in TOML.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::{SamplerConfig, DEFAULT_PEAK_TEMPERATURE};
use crate::model::{ModelConfig, DEFAULT_LAG, DEFAULT_SEED_SCALE};
use crate::optim::OptimizerConfig;
use crate::ts::EpiWeek;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub lag: usize,
    /// Soft-peak temperature as a fraction of the season's largest weekly mean.
    pub peak_temperature: f64,
    pub omega: f64,
    pub seed_scale: f64,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            lag: DEFAULT_LAG,
            peak_temperature: DEFAULT_PEAK_TEMPERATURE,
            omega: 1.0,
            seed_scale: DEFAULT_SEED_SCALE,
        }
    }
}

fn default_seed() -> u64 {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub locations: Vec<String>,
    /// Locations with human-judgment forecasts; the rest are extended.
    #[serde(default)]
    pub in_sample_locations: Vec<String>,
    pub season_start: EpiWeek,
    pub season_end: EpiWeek,
    /// Effective at-risk population of each location.
    pub populations: BTreeMap<String, f64>,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub sampler: SamplerConfig,
    #[serde(default)]
    pub optimizer: OptimizerConfig,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = match std::fs::read_to_string(path) {
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                return Err(Error::FileNotFound(path.display().to_string()))
            }
            other => other?,
        };
        Self::from_toml(&text)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.locations.is_empty() {
            return Err(Error::Config("no locations".into()));
        }
        if let Some(l) = self.in_sample_locations.iter().find(|l| !self.locations.contains(l)) {
            return Err(Error::Config(format!("in-sample location {l} is not in locations")));
        }
        for l in &self.locations {
            match self.populations.get(l) {
                Some(&n) if n > 0.0 && n.is_finite() => {}
                Some(&n) => return Err(Error::Config(format!("population of {l} is {n}"))),
                None => return Err(Error::Config(format!("no population for {l}"))),
            }
        }
        if self.season_end < self.season_start {
            return Err(Error::Config("season ends before it starts".into()));
        }
        if !(self.model.omega.is_finite() && self.model.peak_temperature > 0.0) {
            return Err(Error::Config(
                "omega must be finite and peak_temperature positive".into(),
            ));
        }
        self.sampler.validate()?;
        for l in &self.locations {
            self.model_config(l)?.validate()?;
        }
        Ok(())
    }

    pub fn season_weeks(&self) -> usize {
        self.season_start.weeks_until(self.season_end) as usize + 1
    }

    pub fn model_config(&self, location: &str) -> Result<ModelConfig> {
        let population = *self
            .populations
            .get(location)
            .ok_or_else(|| Error::Config(format!("no population for {location}")))?;
        Ok(ModelConfig {
            population,
            lag: self.model.lag,
            season_weeks: self.season_weeks(),
            season_start: self.season_start,
            seed_scale: self.model.seed_scale,
        })
    }
}
