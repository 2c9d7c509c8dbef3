//! Human-judgment forecasts, forecaster weights and extension reports as JSON.

use std::collections::BTreeMap;
use std::io::Read;
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::extend::ExtensionWeights;
use crate::hj::{IndividualForecast, QuantileForecast, Target};

/// One submitted forecast as stored on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HjRecord {
    pub location: String,
    pub target: String,
    pub submitted_at: NaiveDate,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub forecaster_id: Option<String>,
    pub levels: Vec<f64>,
    pub values: Vec<f64>,
}

impl HjRecord {
    pub fn into_forecast(self) -> Result<IndividualForecast> {
        Ok(IndividualForecast {
            forecaster_id: self.forecaster_id,
            target: self.target.parse::<Target>()?,
            location: self.location,
            submitted_at: self.submitted_at,
            quantiles: QuantileForecast::new(self.levels, self.values)?,
        })
    }
}

impl From<&IndividualForecast> for HjRecord {
    fn from(f: &IndividualForecast) -> Self {
        Self {
            location: f.location.clone(),
            target: f.target.as_str().to_string(),
            submitted_at: f.submitted_at,
            forecaster_id: f.forecaster_id.clone(),
            levels: f.quantiles.levels().to_vec(),
            values: f.quantiles.values().to_vec(),
        }
    }
}

pub fn load_hj(path: &Path) -> Result<Vec<IndividualForecast>> {
    read_hj(super::open(path)?)
}

/// Parses a JSON array of records, validates each one, and orders them by
/// location, target, submission date and forecaster.
pub fn read_hj<R: Read>(reader: R) -> Result<Vec<IndividualForecast>> {
    let records: Vec<HjRecord> = serde_json::from_reader(reader)?;
    let mut out = records
        .into_iter()
        .map(HjRecord::into_forecast)
        .collect::<Result<Vec<_>>>()?;
    out.sort_by(|a, b| {
        (&a.location, a.target, a.submitted_at, &a.forecaster_id).cmp(&(
            &b.location,
            b.target,
            b.submitted_at,
            &b.forecaster_id,
        ))
    });
    Ok(out)
}

pub fn write_hj(forecasts: &[IndividualForecast], path: &Path) -> Result<()> {
    let records: Vec<HjRecord> = forecasts.iter().map(HjRecord::from).collect();
    super::write_json(&records, path)
}

/// Forecaster weights `{forecaster_id: weight}`; weights need not sum to one.
pub fn load_weights(path: &Path) -> Result<BTreeMap<String, f64>> {
    let w: BTreeMap<String, f64> = super::read_json(path)?;
    if let Some(&bad) = w.values().find(|v| !(v.is_finite() && **v >= 0.0)) {
        return Err(Error::NegativeWeight(bad));
    }
    Ok(w)
}

/// `{oos_location: {in_sample_location: weight}}`.
pub fn write_extension_report(weights: &[ExtensionWeights], path: &Path) -> Result<()> {
    let report: BTreeMap<&str, BTreeMap<String, f64>> =
        weights.iter().map(|w| (w.oos_location.as_str(), w.as_map())).collect();
    super::write_json(&report, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"[{"location": "NY", "target": "peak_week", "submitted_at": "2023-11-20",
        "levels": [0.25, 0.5, 0.75], "values": [10, 12, 15]}]"#;

    #[test]
    fn minimal_record_parses() {
        let fs = read_hj(MINIMAL.as_bytes()).unwrap();
        assert_eq!(fs.len(), 1);
        assert_eq!(fs[0].target, Target::PeakWeek);
        assert_eq!(fs[0].forecaster_id, None);
        assert_eq!(fs[0].quantiles.median(), Some(12.0));
    }

    #[test]
    fn rejects_invalid_records() {
        let decreasing = MINIMAL.replace("[10, 12, 15]", "[10, 9, 15]");
        assert!(matches!(read_hj(decreasing.as_bytes()), Err(Error::Monotonicity(1))));
        let target = MINIMAL.replace("peak_week", "peak_day");
        assert!(matches!(read_hj(target.as_bytes()), Err(Error::Target(_))));
        let truncated = &MINIMAL[..40];
        assert!(matches!(read_hj(truncated.as_bytes()), Err(Error::Json(_))));
    }
}
