use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{rwis, ScoreRecord, ScoreTarget};
use crate::error::{Error, Result};
use crate::ts::EpiWeek;

/// A weekly forecast unit scored by two models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelativeUnit {
    pub location: String,
    pub forecast_date: EpiWeek,
    pub horizon: u32,
    pub model_wis: f64,
    pub reference_wis: f64,
    pub rwis: f64,
}

/// Pairs the weekly records of `model` and `reference` that share a
/// location, forecast date and horizon. Units scored by only one of the
/// two are skipped.
pub fn relative_units(records: &[ScoreRecord], model: &str, reference: &str) -> Result<Vec<RelativeUnit>> {
    type Key = (String, EpiWeek, u32);
    let mut by_model: [BTreeMap<Key, f64>; 2] = Default::default();
    for r in records.iter().filter(|r| r.target == ScoreTarget::Weekly) {
        let slot = if r.model == model {
            0
        } else if r.model == reference {
            1
        } else {
            continue;
        };
        let horizon = r
            .horizon
            .ok_or_else(|| Error::Validation("weekly record without a horizon".into()))?;
        let key = (r.location.clone(), r.forecast_date, horizon);
        if by_model[slot].insert(key, r.wis).is_some() {
            return Err(Error::Validation(format!(
                "duplicate score for {} at {} horizon {horizon}",
                r.location, r.forecast_date
            )));
        }
    }
    let [ours, theirs] = by_model;
    let mut units = Vec::new();
    for ((location, forecast_date, horizon), f) in ours {
        let Some(&g) = theirs.get(&(location.clone(), forecast_date, horizon)) else {
            continue;
        };
        units.push(RelativeUnit {
            location,
            forecast_date,
            horizon,
            model_wis: f,
            reference_wis: g,
            rwis: rwis(f, g)?,
        });
    }
    Ok(units)
}

/// Mean RWIS of one (weeks from peak, horizon) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RwisCell {
    /// Forecast week minus the truth peak week; negative before the peak.
    pub weeks_from_peak: i64,
    pub horizon: u32,
    pub mean_rwis: f64,
    pub n: usize,
}

/// Mean RWIS over every unit sharing one key.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Marginal {
    pub key: i64,
    pub mean_rwis: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RwisTable {
    pub cells: Vec<RwisCell>,
    pub by_weeks_from_peak: Vec<Marginal>,
    pub by_horizon: Vec<Marginal>,
    /// Mean RWIS over all units (`key` is 0).
    pub overall: Marginal,
    /// Mean model WIS over mean reference WIS, minus one.
    pub ratio_of_means: f64,
}

#[derive(Default)]
struct Acc {
    sum: f64,
    n: usize,
}

impl Acc {
    fn add(&mut self, x: f64) {
        self.sum += x;
        self.n += 1;
    }

    fn mean(&self) -> f64 {
        self.sum / self.n as f64
    }
}

fn marginals(map: BTreeMap<i64, Acc>) -> Vec<Marginal> {
    map.into_iter()
        .map(|(key, a)| Marginal {
            key,
            mean_rwis: a.mean(),
            n: a.n,
        })
        .collect()
}

/// Mean RWIS of `model` against `reference`, by weeks from the truth peak
/// and forecast horizon, with both margins.
pub fn stratify_scores(
    records: &[ScoreRecord],
    model: &str,
    reference: &str,
    truth_peaks: &BTreeMap<String, (EpiWeek, f64)>,
) -> Result<RwisTable> {
    stratify_units(&relative_units(records, model, reference)?, truth_peaks)
}

pub fn stratify_units(units: &[RelativeUnit], truth_peaks: &BTreeMap<String, (EpiWeek, f64)>) -> Result<RwisTable> {
    if units.is_empty() {
        return Err(Error::Empty("paired score records"));
    }
    let mut cells: BTreeMap<(i64, u32), Acc> = BTreeMap::new();
    let mut by_wfp: BTreeMap<i64, Acc> = BTreeMap::new();
    let mut by_h: BTreeMap<i64, Acc> = BTreeMap::new();
    let mut overall = Acc::default();
    let (mut f_sum, mut g_sum) = (0.0, 0.0);
    for u in units {
        let (peak, _) = truth_peaks
            .get(&u.location)
            .ok_or_else(|| Error::MissingPeak(u.location.clone()))?;
        let wfp = peak.weeks_until(u.forecast_date);
        cells.entry((wfp, u.horizon)).or_default().add(u.rwis);
        by_wfp.entry(wfp).or_default().add(u.rwis);
        by_h.entry(u.horizon as i64).or_default().add(u.rwis);
        overall.add(u.rwis);
        f_sum += u.model_wis;
        g_sum += u.reference_wis;
    }
    Ok(RwisTable {
        cells: cells
            .into_iter()
            .map(|((weeks_from_peak, horizon), a)| RwisCell {
                weeks_from_peak,
                horizon,
                mean_rwis: a.mean(),
                n: a.n,
            })
            .collect(),
        by_weeks_from_peak: marginals(by_wfp),
        by_horizon: marginals(by_h),
        overall: Marginal {
            key: 0,
            mean_rwis: overall.mean(),
            n: overall.n,
        },
        ratio_of_means: if g_sum > 0.0 { f_sum / g_sum - 1.0 } else { f64::NAN },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn week(w: u32) -> EpiWeek {
        EpiWeek::new(2024, w).unwrap()
    }

    fn record(model: &str, loc: &str, w: u32, h: u32, wis: f64) -> ScoreRecord {
        ScoreRecord::new(model, loc, week(w), ScoreTarget::Weekly, Some(h), wis, 0.0).unwrap()
    }

    fn peaks() -> BTreeMap<String, (EpiWeek, f64)> {
        [("A".to_string(), (week(10), 100.0)), ("B".to_string(), (week(8), 50.0))].into()
    }

    #[test]
    fn single_record_lands_in_one_cell() {
        let recs = [record("c", "A", 6, 6, 1.0), record("k", "A", 6, 6, 2.0)];
        let t = stratify_scores(&recs, "c", "k", &peaks()).unwrap();
        assert_eq!(t.cells.len(), 1);
        assert_eq!((t.cells[0].weeks_from_peak, t.cells[0].horizon), (-4, 6));
        assert_eq!(t.cells[0].mean_rwis, -0.5);
    }

    #[test]
    fn five_record_fixture() {
        // (location, week, horizon, model, reference) -> rwis
        let rows = [
            ("A", 6, 2, 1.0, 2.0),  // (-4, 2): -0.5
            ("A", 6, 3, 3.0, 2.0),  // (-4, 3): 0.5
            ("B", 4, 2, 2.0, 1.0),  // (-4, 2): 1.0
            ("A", 12, 2, 1.0, 4.0), // (2, 2): -0.75
            ("B", 10, 2, 1.0, 1.0), // (2, 2): 0.0
        ];
        let mut recs = Vec::new();
        for &(loc, w, h, f, g) in &rows {
            recs.push(record("c", loc, w, h, f));
            recs.push(record("k", loc, w, h, g));
        }
        recs.push(record("other", "A", 6, 2, 9.0));
        let t = stratify_scores(&recs, "c", "k", &peaks()).unwrap();
        let cell = |wfp: i64, h: u32| {
            t.cells
                .iter()
                .find(|c| c.weeks_from_peak == wfp && c.horizon == h)
                .unwrap()
        };
        assert_eq!(cell(-4, 2).mean_rwis, 0.25);
        assert_eq!(cell(-4, 2).n, 2);
        assert_eq!(cell(-4, 3).mean_rwis, 0.5);
        assert_eq!(cell(2, 2).mean_rwis, -0.375);
        assert_eq!(
            t.by_horizon[0],
            Marginal {
                key: 2,
                mean_rwis: -0.0625,
                n: 4
            }
        );
        assert_eq!(t.by_weeks_from_peak[0].key, -4);
        assert_eq!(t.overall.n, 5);
        // Grand mean is the n-weighted mean of the cells.
        let weighted: f64 = t.cells.iter().map(|c| c.mean_rwis * c.n as f64).sum::<f64>() / 5.0;
        assert!((t.overall.mean_rwis - weighted).abs() < 1e-15);
        assert!((t.ratio_of_means - (8.0 / 10.0 - 1.0)).abs() < 1e-15);
    }

    #[test]
    fn missing_peak_and_duplicates_are_errors() {
        let recs = [record("c", "Z", 6, 2, 1.0), record("k", "Z", 6, 2, 1.0)];
        assert!(matches!(
            stratify_scores(&recs, "c", "k", &peaks()),
            Err(Error::MissingPeak(_))
        ));
        let dup = [record("c", "A", 6, 2, 1.0), record("c", "A", 6, 2, 1.0)];
        assert!(relative_units(&dup, "c", "k").is_err());
        assert!(stratify_scores(&[], "c", "k", &peaks()).is_err());
    }
}
