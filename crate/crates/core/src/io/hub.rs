//! Hub-style quantile submission files.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use chrono::NaiveDate;

use crate::error::{Error, Result};
use crate::hj::QuantileForecast;

const COLUMNS: [&str; 7] = [
    "reference_date",
    "target",
    "horizon",
    "location",
    "output_type",
    "output_type_id",
    "value",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum HubTarget {
    /// Weekly incident hospitalizations.
    Weekly,
    /// Season week (1-based) of the peak.
    PeakWeek,
    /// Weekly hospitalizations at the peak.
    PeakIntensity,
}

impl HubTarget {
    pub fn as_str(&self) -> &'static str {
        match self {
            HubTarget::Weekly => "wk inc flu hosp",
            HubTarget::PeakWeek => "peak week inc flu hosp",
            HubTarget::PeakIntensity => "peak inc flu hosp",
        }
    }
}

impl fmt::Display for HubTarget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for HubTarget {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [HubTarget::Weekly, HubTarget::PeakWeek, HubTarget::PeakIntensity]
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| Error::Target(s.to_string()))
    }
}

/// One forecast in a submission file.
#[derive(Debug, Clone, PartialEq)]
pub struct HubForecast {
    pub reference_date: NaiveDate,
    pub target: HubTarget,
    /// Weeks ahead of the reference date; `None` for peak targets.
    pub horizon: Option<u32>,
    pub location: String,
    pub quantiles: QuantileForecast,
}

type Key = (String, HubTarget, Option<u32>, NaiveDate);

fn key(f: &HubForecast) -> Key {
    (f.location.clone(), f.target, f.horizon, f.reference_date)
}

/// Writes one row per quantile, ordered by location, target, horizon,
/// reference date and level.
pub fn write_hub_forecast(forecasts: &[HubForecast], path: &Path) -> Result<()> {
    let mut sorted: Vec<&HubForecast> = forecasts.iter().collect();
    sorted.sort_by_key(|f| key(f));
    if let Some(w) = sorted.windows(2).find(|w| key(w[0]) == key(w[1])) {
        return Err(Error::Validation(format!(
            "two forecasts for {} {} horizon {:?} on {}",
            w[0].location, w[0].target, w[0].horizon, w[0].reference_date
        )));
    }
    let mut w = csv::Writer::from_writer(super::create(path)?);
    w.write_record(COLUMNS)?;
    for f in sorted {
        let horizon = f.horizon.map(|h| h.to_string()).unwrap_or_default();
        for (level, value) in f.quantiles.levels().iter().zip(f.quantiles.values()) {
            w.write_record([
                f.reference_date.to_string(),
                f.target.to_string(),
                horizon.clone(),
                f.location.clone(),
                "quantile".to_string(),
                level.to_string(),
                value.to_string(),
            ])?;
        }
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))?.flush()?;
    Ok(())
}

pub fn read_hub_forecast(path: &Path) -> Result<Vec<HubForecast>> {
    let mut rdr = csv::Reader::from_reader(super::open(path)?);
    if rdr.headers()?.iter().ne(COLUMNS) {
        return Err(Error::Schema(format!("hub file columns must be {}", COLUMNS.join(","))));
    }
    let mut groups: BTreeMap<Key, Vec<(f64, f64)>> = BTreeMap::new();
    for (line, row) in rdr.records().enumerate() {
        let row = row?;
        let bad = |what: &str| Error::Schema(format!("row {}: bad {what}", line + 2));
        let reference_date = NaiveDate::parse_from_str(&row[0], "%Y-%m-%d").map_err(|_| bad("reference_date"))?;
        let target: HubTarget = row[1].parse()?;
        let horizon = match &row[2] {
            "" => None,
            h => Some(h.parse::<u32>().map_err(|_| bad("horizon"))?),
        };
        if &row[4] != "quantile" {
            return Err(bad("output_type"));
        }
        let level: f64 = row[5].parse().map_err(|_| bad("output_type_id"))?;
        let value: f64 = row[6].parse().map_err(|_| bad("value"))?;
        groups
            .entry((row[3].to_string(), target, horizon, reference_date))
            .or_default()
            .push((level, value));
    }
    groups
        .into_iter()
        .map(|((location, target, horizon, reference_date), mut pairs)| {
            pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
            let (levels, values) = pairs.into_iter().unzip();
            Ok(HubForecast {
                reference_date,
                target,
                horizon,
                location,
                quantiles: QuantileForecast::new(levels, values)?,
            })
        })
        .collect()
}
