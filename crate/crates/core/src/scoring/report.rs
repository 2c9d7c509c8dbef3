//! Summary statistics over score records, laid out like the comparison
//! tables: peak targets around the peak, the weekly regression, and
//! in-sample versus out-of-sample spread.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{
    mann_whitney, relative_units, rwis, rwis_regression, t_test_one_sample, t_test_two_sample, Regression,
    RegressionRow, ScoreRecord, ScoreTarget, TestResult,
};
use crate::error::{Error, Result};
use crate::hj::empirical_quantiles;
use crate::ts::EpiWeek;

/// Weeks from the truth peak at which peak targets are compared.
pub const TIME_POINTS: [i64; 3] = [-4, 0, 4];

/// Mean RWIS with a one-sample t-test against zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean_rwis: f64,
    pub n: usize,
    /// `None` when the sample is too small or constant.
    pub p_value: Option<f64>,
}

impl Estimate {
    fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        Some(Self {
            mean_rwis: values.iter().sum::<f64>() / values.len() as f64,
            n: values.len(),
            p_value: t_test_one_sample(values, 0.0).ok().map(|t| t.p_value),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeakComparison {
    pub target: ScoreTarget,
    pub weeks_from_peak: i64,
    pub models: BTreeMap<String, Estimate>,
    /// Welch test between the first two models, when both have data.
    pub between_models_p: Option<f64>,
}

/// Median and quartiles of a group of RWIS values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spread {
    pub median: f64,
    pub q25: f64,
    pub q75: f64,
    pub n: usize,
}

impl Spread {
    fn of(values: &[f64]) -> Option<Self> {
        let q = empirical_quantiles(values, &[0.25, 0.5, 0.75]).ok()?;
        Some(Self {
            q25: q.values()[0],
            median: q.values()[1],
            q75: q.values()[2],
            n: values.len(),
        })
    }
}

/// RWIS of each forecast against the same location's first forecast of the
/// season, split by whether the location had human-judgment forecasts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InOutComparison {
    pub model: String,
    pub target: ScoreTarget,
    pub in_sample: Option<Spread>,
    pub out_of_sample: Option<Spread>,
    pub mann_whitney: Option<TestResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsReport {
    pub reference: String,
    pub models: Vec<String>,
    pub peak_comparisons: Vec<PeakComparison>,
    /// Mean weekly RWIS of each model over every paired unit.
    pub weekly: BTreeMap<String, Estimate>,
    /// Weekly RWIS regression of the first model.
    pub regression: Option<Regression>,
    pub in_vs_out: Vec<InOutComparison>,
}

/// A peak-target forecast scored by two models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeakUnit {
    pub location: String,
    pub forecast_date: EpiWeek,
    pub rwis: f64,
}

/// Pairs `model` and `reference` records of a peak target by location and
/// forecast date.
pub fn peak_units(records: &[ScoreRecord], model: &str, reference: &str, target: ScoreTarget) -> Result<Vec<PeakUnit>> {
    if target == ScoreTarget::Weekly {
        return Err(Error::Validation("peak_units takes a peak target".into()));
    }
    let mut theirs = BTreeMap::new();
    for r in records.iter().filter(|r| r.target == target && r.model == reference) {
        if theirs.insert((r.location.clone(), r.forecast_date), r.wis).is_some() {
            return Err(Error::Validation(format!(
                "duplicate {target} score for {} at {}",
                r.location, r.forecast_date
            )));
        }
    }
    let mut units = Vec::new();
    let mut seen = std::collections::BTreeSet::new();
    for r in records.iter().filter(|r| r.target == target && r.model == model) {
        if !seen.insert((r.location.clone(), r.forecast_date)) {
            return Err(Error::Validation(format!(
                "duplicate {target} score for {} at {}",
                r.location, r.forecast_date
            )));
        }
        if let Some(&g) = theirs.get(&(r.location.clone(), r.forecast_date)) {
            units.push(PeakUnit {
                location: r.location.clone(),
                forecast_date: r.forecast_date,
                rwis: rwis(r.wis, g)?,
            });
        }
    }
    units.sort_by(|a, b| (&a.location, a.forecast_date).cmp(&(&b.location, b.forecast_date)));
    Ok(units)
}

fn peak_of<'a>(truth_peaks: &'a BTreeMap<String, (EpiWeek, f64)>, location: &str) -> Result<&'a EpiWeek> {
    truth_peaks
        .get(location)
        .map(|p| &p.0)
        .ok_or_else(|| Error::MissingPeak(location.to_string()))
}

/// Weekly regression rows of `model` against `reference`.
pub fn regression_rows(
    records: &[ScoreRecord],
    model: &str,
    reference: &str,
    truth_peaks: &BTreeMap<String, (EpiWeek, f64)>,
) -> Result<Vec<RegressionRow>> {
    relative_units(records, model, reference)?
        .into_iter()
        .map(|u| {
            Ok(RegressionRow {
                rwis: u.rwis,
                horizon: u.horizon as f64,
                weeks_from_peak: peak_of(truth_peaks, &u.location)?.weeks_until(u.forecast_date) as f64,
            })
        })
        .collect()
}

fn against_first(records: &[ScoreRecord], model: &str, target: ScoreTarget) -> Result<BTreeMap<String, Vec<f64>>> {
    let mut by_loc: BTreeMap<String, Vec<(EpiWeek, f64)>> = BTreeMap::new();
    for r in records.iter().filter(|r| r.model == model && r.target == target) {
        by_loc
            .entry(r.location.clone())
            .or_default()
            .push((r.forecast_date, r.wis));
    }
    let mut out = BTreeMap::new();
    for (loc, mut v) in by_loc {
        v.sort_by_key(|x| x.0);
        let first = v[0].1;
        let later = v[1..]
            .iter()
            .map(|&(_, w)| rwis(w, first))
            .collect::<Result<Vec<_>>>()?;
        out.insert(loc, later);
    }
    Ok(out)
}

/// Builds the report. The first entry of `models` is the one regressed;
/// `in_sample` enables the in- versus out-of-sample comparison.
pub fn build_report(
    records: &[ScoreRecord],
    models: &[String],
    reference: &str,
    truth_peaks: &BTreeMap<String, (EpiWeek, f64)>,
    in_sample: Option<&[String]>,
) -> Result<StatsReport> {
    if models.is_empty() {
        return Err(Error::Empty("models to report"));
    }
    let mut peak_comparisons = Vec::new();
    for target in [ScoreTarget::PeakIntensity, ScoreTarget::PeakWeek] {
        let mut at: BTreeMap<(String, i64), Vec<f64>> = BTreeMap::new();
        for m in models {
            for u in peak_units(records, m, reference, target)? {
                let wfp = peak_of(truth_peaks, &u.location)?.weeks_until(u.forecast_date);
                at.entry((m.clone(), wfp)).or_default().push(u.rwis);
            }
        }
        for wfp in TIME_POINTS {
            let estimates: BTreeMap<String, Estimate> = models
                .iter()
                .filter_map(|m| Estimate::of(at.get(&(m.clone(), wfp))?).map(|e| (m.clone(), e)))
                .collect();
            if estimates.is_empty() {
                continue;
            }
            let between_models_p = match models {
                [a, b, ..] => match (at.get(&(a.clone(), wfp)), at.get(&(b.clone(), wfp))) {
                    (Some(x), Some(y)) => t_test_two_sample(x, y).ok().map(|t| t.p_value),
                    _ => None,
                },
                _ => None,
            };
            peak_comparisons.push(PeakComparison {
                target,
                weeks_from_peak: wfp,
                models: estimates,
                between_models_p,
            });
        }
    }

    let mut weekly = BTreeMap::new();
    for m in models {
        let values: Vec<f64> = relative_units(records, m, reference)?.iter().map(|u| u.rwis).collect();
        if let Some(e) = Estimate::of(&values) {
            weekly.insert(m.clone(), e);
        }
    }
    let rows = regression_rows(records, &models[0], reference, truth_peaks)?;
    let regression = match rwis_regression(&rows) {
        Ok(r) => Some(r),
        Err(Error::DegenerateSample(_)) | Err(Error::RankDeficient) => None,
        Err(e) => return Err(e),
    };

    let mut in_vs_out = Vec::new();
    if let Some(in_sample) = in_sample {
        for m in models.iter().chain(std::iter::once(&reference.to_string())) {
            for target in [ScoreTarget::PeakWeek, ScoreTarget::PeakIntensity] {
                let (mut a, mut b) = (Vec::new(), Vec::new());
                for (loc, values) in against_first(records, m, target)? {
                    if in_sample.contains(&loc) {
                        a.extend(values);
                    } else {
                        b.extend(values);
                    }
                }
                if a.is_empty() && b.is_empty() {
                    continue;
                }
                in_vs_out.push(InOutComparison {
                    model: m.clone(),
                    target,
                    in_sample: Spread::of(&a),
                    out_of_sample: Spread::of(&b),
                    mann_whitney: mann_whitney(&a, &b).ok(),
                });
            }
        }
    }

    Ok(StatsReport {
        reference: reference.to_string(),
        models: models.to_vec(),
        peak_comparisons,
        weekly,
        regression,
        in_vs_out,
    })
}
