use std::fmt;
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The 23 quantile levels used for hub submissions.
pub const STANDARD_LEVELS: [f64; 23] = [
    0.01, 0.025, 0.05, 0.10, 0.15, 0.20, 0.25, 0.30, 0.35, 0.40, 0.45, 0.50, 0.55, 0.60, 0.65, 0.70, 0.75, 0.80, 0.85,
    0.90, 0.95, 0.975, 0.99,
];

/// What a peak forecast is about.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    /// Season week index (1 = first modeled week) of maximum hospitalizations.
    PeakWeek,
    /// Maximum weekly hospitalizations.
    PeakIntensity,
}

impl Target {
    pub fn as_str(&self) -> &'static str {
        match self {
            Target::PeakWeek => "peak_week",
            Target::PeakIntensity => "peak_intensity",
        }
    }
}

impl fmt::Display for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Target {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "peak_week" => Ok(Target::PeakWeek),
            "peak_intensity" => Ok(Target::PeakIntensity),
            other => Err(Error::Target(other.to_string())),
        }
    }
}

/// A predictive distribution given as (level, value) pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawQuantiles", into = "RawQuantiles")]
pub struct QuantileForecast {
    levels: Vec<f64>,
    values: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct RawQuantiles {
    levels: Vec<f64>,
    values: Vec<f64>,
}

impl TryFrom<RawQuantiles> for QuantileForecast {
    type Error = Error;
    fn try_from(raw: RawQuantiles) -> Result<Self> {
        QuantileForecast::new(raw.levels, raw.values)
    }
}

impl From<QuantileForecast> for RawQuantiles {
    fn from(q: QuantileForecast) -> Self {
        RawQuantiles {
            levels: q.levels,
            values: q.values,
        }
    }
}

impl QuantileForecast {
    pub fn new(levels: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if levels.is_empty() {
            return Err(Error::InvalidLevels("no levels".into()));
        }
        if levels.len() != values.len() {
            return Err(Error::InvalidLevels(format!(
                "{} levels but {} values",
                levels.len(),
                values.len()
            )));
        }
        if levels.iter().any(|&p| !(p > 0.0 && p < 1.0)) {
            return Err(Error::InvalidLevels("levels must lie in (0,1)".into()));
        }
        if levels.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidLevels("levels must be strictly increasing".into()));
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Validation(format!("value {k} is not finite")));
        }
        if let Some(k) = values.windows(2).position(|w| w[1] < w[0]) {
            return Err(Error::Monotonicity(k + 1));
        }
        Ok(Self { levels, values })
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    pub fn value_at(&self, level: f64) -> Option<f64> {
        self.levels
            .iter()
            .position(|&p| (p - level).abs() < 1e-12)
            .map(|k| self.values[k])
    }

    pub fn median(&self) -> Option<f64> {
        self.value_at(0.5)
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            levels: self.levels.clone(),
            values: self.values.iter().map(|v| v * c).collect(),
        }
    }
}

/// Empirical quantiles of `samples` (linear interpolation between order statistics).
pub fn empirical_quantiles(samples: &[f64], levels: &[f64]) -> Result<QuantileForecast> {
    if samples.is_empty() {
        return Err(Error::Empty("samples"));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let n = sorted.len();
    let values = levels
        .iter()
        .map(|&p| {
            let h = (n - 1) as f64 * p;
            let lo = h.floor() as usize;
            let hi = (lo + 1).min(n - 1);
            sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
        })
        .collect();
    QuantileForecast::new(levels.to_vec(), values)
}

/// One person's (or one ensemble's) forecast of a peak target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndividualForecast {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub forecaster_id: Option<String>,
    pub target: Target,
    pub location: String,
    pub submitted_at: NaiveDate,
    pub quantiles: QuantileForecast,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_inputs() {
        assert!(matches!(
            QuantileForecast::new(vec![0.25, 0.75], vec![5.0, 3.0]),
            Err(Error::Monotonicity(1))
        ));
        assert!(QuantileForecast::new(vec![0.5, 0.25], vec![1.0, 2.0]).is_err());
        assert!(QuantileForecast::new(vec![0.0, 0.5], vec![1.0, 2.0]).is_err());
        assert!(QuantileForecast::new(vec![0.5], vec![1.0, 2.0]).is_err());
        assert!(QuantileForecast::new(vec![0.25, 0.5], vec![1.0, 1.0]).is_ok());
    }

    #[test]
    fn standard_levels_are_symmetric() {
        assert_eq!(STANDARD_LEVELS.len(), 23);
        for k in 0..23 {
            assert!((STANDARD_LEVELS[k] + STANDARD_LEVELS[22 - k] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn empirical_quantiles_interpolate() {
        let q = empirical_quantiles(&[4.0, 1.0, 3.0, 2.0, 5.0], &[0.25, 0.5, 0.9]).unwrap();
        assert_eq!(q.values(), &[2.0, 3.0, 4.6]);
    }

    #[test]
    fn target_parsing() {
        assert_eq!("peak_week".parse::<Target>().unwrap(), Target::PeakWeek);
        assert!(matches!("peak".parse::<Target>(), Err(Error::Target(_))));
    }
}
