//! Quantile-forecast scoring and the comparisons built on it.

mod report;
mod stats;
mod table;

pub use report::{
    build_report, peak_units, regression_rows, Estimate, InOutComparison, PeakComparison, PeakUnit, Spread,
    StatsReport, TIME_POINTS,
};

pub use stats::{
    mann_whitney, rwis_regression, t_test_one_sample, t_test_two_sample, Coefficient, Regression, RegressionRow,
    TestResult, REGRESSION_TERMS,
};
pub use table::{relative_units, stratify_scores, stratify_units, Marginal, RelativeUnit, RwisCell, RwisTable};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hj::QuantileForecast;
use crate::ts::EpiWeek;

/// Tolerance for matching a level with its mirror `1 - p`.
const LEVEL_TOL: f64 = 1e-9;

/// Interval score of the central `(1 - alpha)` interval `[lower, upper]`.
pub fn interval_score(lower: f64, upper: f64, alpha: f64, y: f64) -> Result<f64> {
    if !(lower <= upper) || !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidInterval { lower, upper, alpha });
    }
    let below = (lower - y).max(0.0);
    let above = (y - upper).max(0.0);
    Ok((upper - lower) + 2.0 / alpha * (below + above))
}

/// Weighted interval score: the median's absolute error with weight 1/2
/// plus each central interval's score with weight `alpha / 2`, normalized
/// by `K + 1/2` for `K` intervals.
pub fn wis(forecast: &QuantileForecast, y: f64) -> Result<f64> {
    let levels = forecast.levels();
    let values = forecast.values();
    let n = levels.len();
    if n % 2 == 0 {
        return Err(Error::LevelSet(format!(
            "{n} levels cannot be symmetric around a median"
        )));
    }
    let mid = n / 2;
    if (levels[mid] - 0.5).abs() > LEVEL_TOL {
        return Err(Error::LevelSet("no median level".into()));
    }
    let mut total = 0.5 * (y - values[mid]).abs();
    for k in 0..mid {
        let (lo, hi) = (levels[k], levels[n - 1 - k]);
        if (lo + hi - 1.0).abs() > LEVEL_TOL {
            return Err(Error::LevelSet(format!("level {lo} has no partner {}", 1.0 - lo)));
        }
        let alpha = 2.0 * lo;
        total += alpha / 2.0 * interval_score(values[k], values[n - 1 - k], alpha, y)?;
    }
    Ok(total / (mid as f64 + 0.5))
}

/// Relative score `f / g - 1`; negative when `f` is the better forecast.
pub fn rwis(f_score: f64, g_score: f64) -> Result<f64> {
    if !(g_score >= 0.0) {
        return Err(Error::Validation(format!("reference score {g_score} is negative")));
    }
    if g_score == 0.0 {
        return if f_score == 0.0 {
            Ok(0.0)
        } else {
            Err(Error::UndefinedReference(f_score))
        };
    }
    Ok(f_score / g_score - 1.0)
}

/// What a scored forecast predicts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreTarget {
    Weekly,
    PeakWeek,
    PeakIntensity,
}

impl ScoreTarget {
    pub fn as_str(&self) -> &'static str {
        match self {
            ScoreTarget::Weekly => "weekly",
            ScoreTarget::PeakWeek => "peak_week",
            ScoreTarget::PeakIntensity => "peak_intensity",
        }
    }
}

impl fmt::Display for ScoreTarget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ScoreTarget {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "weekly" => Ok(ScoreTarget::Weekly),
            "peak_week" => Ok(ScoreTarget::PeakWeek),
            "peak_intensity" => Ok(ScoreTarget::PeakIntensity),
            other => Err(Error::Target(other.to_string())),
        }
    }
}

/// The score of one forecast unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub model: String,
    pub location: String,
    pub forecast_date: EpiWeek,
    pub target: ScoreTarget,
    pub horizon: Option<u32>,
    pub wis: f64,
    pub truth: f64,
}

impl ScoreRecord {
    pub fn new(
        model: impl Into<String>,
        location: impl Into<String>,
        forecast_date: EpiWeek,
        target: ScoreTarget,
        horizon: Option<u32>,
        wis: f64,
        truth: f64,
    ) -> Result<Self> {
        let record = Self {
            model: model.into(),
            location: location.into(),
            forecast_date,
            target,
            horizon,
            wis,
            truth,
        };
        record.validate()?;
        Ok(record)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.wis >= 0.0 && self.wis.is_finite()) {
            return Err(Error::Validation(format!(
                "wis {} must be finite and non-negative",
                self.wis
            )));
        }
        if self.target == ScoreTarget::Weekly && !matches!(self.horizon, Some(h) if h >= 1) {
            return Err(Error::Validation(
                "weekly scores need a horizon of at least one week".into(),
            ));
        }
        Ok(())
    }

    /// Scores `forecast` against `truth`.
    pub fn score(
        model: impl Into<String>,
        location: impl Into<String>,
        forecast_date: EpiWeek,
        target: ScoreTarget,
        horizon: Option<u32>,
        forecast: &QuantileForecast,
        truth: f64,
    ) -> Result<Self> {
        let w = wis(forecast, truth)?;
        Self::new(model, location, forecast_date, target, horizon, w, truth)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hj::STANDARD_LEVELS;

    #[test]
    fn interval_score_examples() {
        assert_eq!(interval_score(2.0, 6.0, 0.2, 7.0).unwrap(), 14.0);
        assert_eq!(interval_score(2.0, 6.0, 0.2, 3.5).unwrap(), 4.0);
        assert_eq!(interval_score(3.0, 3.0, 0.5, 3.0).unwrap(), 0.0);
        assert!(interval_score(6.0, 2.0, 0.2, 3.0).is_err());
        assert!(interval_score(2.0, 6.0, 1.0, 3.0).is_err());
    }

    #[test]
    fn wis_examples() {
        let median = QuantileForecast::new(vec![0.5], vec![5.0]).unwrap();
        assert_eq!(wis(&median, 7.0).unwrap(), 2.0);
        let point = QuantileForecast::new(STANDARD_LEVELS.to_vec(), vec![4.0; 23]).unwrap();
        assert_eq!(wis(&point, 4.0).unwrap(), 0.0);
    }

    #[test]
    fn wis_rejects_unscorable_level_sets() {
        let no_median = QuantileForecast::new(vec![0.25, 0.75], vec![1.0, 2.0]).unwrap();
        assert!(matches!(wis(&no_median, 1.0), Err(Error::LevelSet(_))));
        let unpaired = QuantileForecast::new(vec![0.1, 0.5, 0.8], vec![1.0, 2.0, 3.0]).unwrap();
        assert!(matches!(wis(&unpaired, 1.0), Err(Error::LevelSet(_))));
    }

    #[test]
    fn rwis_examples() {
        assert_eq!(rwis(3.0, 3.0).unwrap(), 0.0);
        assert_eq!(rwis(1.0, 2.0).unwrap(), -0.5);
        assert_eq!(rwis(0.0, 0.0).unwrap(), 0.0);
        assert!(matches!(rwis(1.0, 0.0), Err(Error::UndefinedReference(_))));
    }

    #[test]
    fn weekly_records_need_a_horizon() {
        let w = EpiWeek::new(2024, 3).unwrap();
        assert!(ScoreRecord::new("m", "X", w, ScoreTarget::Weekly, None, 1.0, 2.0).is_err());
        assert!(ScoreRecord::new("m", "X", w, ScoreTarget::Weekly, Some(0), 1.0, 2.0).is_err());
        assert!(ScoreRecord::new("m", "X", w, ScoreTarget::PeakWeek, None, 1.0, 2.0).is_ok());
        assert!(ScoreRecord::new("m", "X", w, ScoreTarget::Weekly, Some(2), -1.0, 2.0).is_err());
        assert_eq!(
            "peak_intensity".parse::<ScoreTarget>().unwrap(),
            ScoreTarget::PeakIntensity
        );
    }
}
