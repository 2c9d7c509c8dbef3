//! Human-judgment ensembles: quantile forecasts, densities, linear pools and
//! the copula joint over peak week and peak intensity.

mod density;
mod joint;
mod quantile;
mod spline;

pub use density::{
    cdf_from_quantiles, equal_weights, linear_pool, pdf_from_cdf, Density1D, QuantileCdf, TailPolicy, GRID_POINTS,
};
pub use joint::{joint_independence, log_joint_at, CopulaKind, JointDensity2D};
pub use quantile::{empirical_quantiles, IndividualForecast, QuantileForecast, Target, STANDARD_LEVELS};
pub use spline::MonotoneCubic;

use std::collections::BTreeMap;

use crate::error::{Error, Result};

/// Pools every forecaster's most recent submission (on or before `asof`, if
/// given) for each (location, target).
///
/// `weights` maps forecaster ids to unnormalized weights; forecasters missing
/// from the map, or all of them when it is `None`, share equal weight.
pub fn pool_latest(
    forecasts: &[IndividualForecast],
    weights: Option<&BTreeMap<String, f64>>,
    asof: Option<chrono::NaiveDate>,
    tail: TailPolicy,
) -> Result<BTreeMap<(String, Target), Density1D>> {
    let mut latest: BTreeMap<(String, Target), BTreeMap<String, &IndividualForecast>> = BTreeMap::new();
    for (k, f) in forecasts.iter().enumerate() {
        if asof.is_some_and(|d| f.submitted_at > d) {
            continue;
        }
        let id = f.forecaster_id.clone().unwrap_or_else(|| format!("anon-{k}"));
        let slot = latest
            .entry((f.location.clone(), f.target))
            .or_default()
            .entry(id)
            .or_insert(f);
        if f.submitted_at >= slot.submitted_at {
            *slot = f;
        }
    }
    let mut out = BTreeMap::new();
    for (key, by_id) in latest {
        let mut densities = Vec::with_capacity(by_id.len());
        let mut raw = Vec::with_capacity(by_id.len());
        for (id, f) in &by_id {
            densities.push(Density1D::from_quantiles(&f.quantiles, tail)?);
            raw.push(match weights {
                Some(w) => *w.get(id).unwrap_or(&1.0),
                None => 1.0,
            });
        }
        let total: f64 = raw.iter().sum();
        if !(total > 0.0) {
            return Err(Error::WeightSum(total));
        }
        let w: Vec<f64> = raw.iter().map(|r| r / total).collect();
        out.insert(key, linear_pool(&densities, &w)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::NaiveDate;

    fn f(id: &str, day: u32, values: [f64; 3]) -> IndividualForecast {
        IndividualForecast {
            forecaster_id: Some(id.into()),
            target: Target::PeakWeek,
            location: "NY".into(),
            submitted_at: NaiveDate::from_ymd_opt(2023, 11, day).unwrap(),
            quantiles: QuantileForecast::new(vec![0.1, 0.5, 0.9], values.to_vec()).unwrap(),
        }
    }

    #[test]
    fn keeps_latest_revision_per_forecaster() {
        let fs = vec![
            f("a", 1, [1.0, 2.0, 3.0]),
            f("a", 5, [10.0, 11.0, 12.0]),
            f("b", 2, [10.0, 11.0, 12.0]),
        ];
        let pooled = pool_latest(&fs, None, None, TailPolicy::default()).unwrap();
        let d = &pooled[&("NY".to_string(), Target::PeakWeek)];
        assert!((d.quantile(0.5) - 11.0).abs() < 1e-6);

        let early = pool_latest(&fs, None, NaiveDate::from_ymd_opt(2023, 11, 3), TailPolicy::default()).unwrap();
        let d = &early[&("NY".to_string(), Target::PeakWeek)];
        assert!(d.cdf(3.5) > 0.45 && d.cdf(3.5) < 0.55);
    }

    #[test]
    fn weight_file_is_normalized() {
        let fs = vec![f("a", 1, [1.0, 2.0, 3.0]), f("b", 1, [10.0, 11.0, 12.0])];
        let w: BTreeMap<String, f64> = [("a".to_string(), 3.0), ("b".to_string(), 1.0)].into();
        let pooled = pool_latest(&fs, Some(&w), None, TailPolicy::default()).unwrap();
        let d = &pooled[&("NY".to_string(), Target::PeakWeek)];
        assert!((d.cdf(6.0) - 0.75).abs() < 1e-12);
    }
}
