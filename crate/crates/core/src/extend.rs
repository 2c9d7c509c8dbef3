//! Extending human-judgment peak forecasts to locations without them.
//!
//! Step 1 models the scaled out-of-sample series as a Poisson mean that is a
//! convex combination of the scaled in-sample series and fits the weights.
//! Step 2 mixes the in-sample peak densities with those weights, moving each
//! intensity density to the out-of-sample scale through the running maxima.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hj::{joint_independence, linear_pool, Density1D, JointDensity2D};
use crate::optim::{genetic_minimize, OptimizerConfig};
use crate::ts::{running_max_scale, EpiWeek, HospSeries, ScaledSeries};

/// Floor applied to the Poisson mean of each week.
pub const MEAN_FLOOR: f64 = 1e-10;

/// Aligned, scaled histories of one out-of-sample and several in-sample locations.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtensionInput {
    pub oos_location: String,
    pub oos: ScaledSeries,
    pub in_sample: Vec<(String, ScaledSeries)>,
}

impl ExtensionInput {
    /// Scales every series by its running maximum through `asof` and keeps
    /// the weeks all of them cover.
    pub fn from_series(oos: &HospSeries, in_sample: &[&HospSeries], asof: EpiWeek) -> Result<Self> {
        if in_sample.is_empty() {
            return Err(Error::Empty("in-sample locations"));
        }
        let start = std::iter::once(oos)
            .chain(in_sample.iter().copied())
            .map(|s| s.start())
            .max()
            .expect("non-empty");
        let available = |s: &HospSeries| -> i64 {
            let last = if s.end() < asof { s.end() } else { asof };
            start.weeks_until(last) + 1
        };
        let overlap = std::iter::once(oos)
            .chain(in_sample.iter().copied())
            .map(available)
            .min()
            .expect("non-empty");
        if overlap < 2 {
            return Err(Error::InsufficientHistory(format!(
                "{} overlapping weeks through {asof}, need at least 2",
                overlap.max(0)
            )));
        }
        let n = overlap as usize;
        let slice = |s: &HospSeries| -> Result<ScaledSeries> {
            let scaled = running_max_scale(s, asof)?;
            let offset = s.start().weeks_until(start) as usize;
            Ok(ScaledSeries {
                values: scaled.values[offset..offset + n].to_vec(),
                scale: scaled.scale,
            })
        };
        Ok(Self {
            oos_location: oos.location().to_string(),
            oos: slice(oos)?,
            in_sample: in_sample
                .iter()
                .map(|s| Ok((s.location().to_string(), slice(s)?)))
                .collect::<Result<_>>()?,
        })
    }

    pub fn weeks(&self) -> usize {
        self.oos.values.len()
    }
}

/// Fitted convex weights over in-sample locations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtensionWeights {
    pub oos_location: String,
    pub in_sample_locations: Vec<String>,
    pub weights: Vec<f64>,
    /// Poisson kernel `sum_t mu_t - y_t ln mu_t` at the weights.
    pub objective: f64,
    /// Set when the in-sample histories are linearly dependent, so the split
    /// of weight among them is not determined by the data.
    pub non_identifiable: bool,
}

impl ExtensionWeights {
    pub fn as_map(&self) -> BTreeMap<String, f64> {
        self.in_sample_locations
            .iter()
            .cloned()
            .zip(self.weights.iter().copied())
            .collect()
    }
}

/// Poisson negative log-likelihood kernel of simplex weights `w`.
pub fn extension_objective(input: &ExtensionInput, w: &[f64]) -> f64 {
    (0..input.weeks())
        .map(|t| {
            let mu: f64 = input
                .in_sample
                .iter()
                .zip(w)
                .map(|((_, s), wk)| wk * s.values[t])
                .sum::<f64>()
                .max(MEAN_FLOOR);
            let y = input.oos.values[t];
            mu - y * mu.ln()
        })
        .sum()
}

fn objective_gradient(input: &ExtensionInput, w: &[f64]) -> Vec<f64> {
    let mut g = vec![0.0; w.len()];
    for t in 0..input.weeks() {
        let raw: f64 = input.in_sample.iter().zip(w).map(|((_, s), wk)| wk * s.values[t]).sum();
        let mu = raw.max(MEAN_FLOOR);
        let ratio = if raw > MEAN_FLOOR {
            input.oos.values[t] / mu
        } else {
            0.0
        };
        for (gk, (_, s)) in g.iter_mut().zip(&input.in_sample) {
            *gk += s.values[t] * (1.0 - ratio);
        }
    }
    g
}

fn softmax(u: &[f64]) -> Vec<f64> {
    let m = u.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = u.iter().map(|v| (v - m).exp()).collect();
    let total: f64 = e.iter().sum();
    e.iter().map(|v| v / total).collect()
}

/// Renormalizes onto the simplex, absorbing rounding error.
fn renormalize(w: &mut [f64]) {
    w.iter_mut().for_each(|v| *v = v.max(0.0));
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= total);
}

fn column_rank(input: &ExtensionInput) -> usize {
    let cols: Vec<&[f64]> = input.in_sample.iter().map(|(_, s)| s.values.as_slice()).collect();
    let mut basis: Vec<Vec<f64>> = Vec::new();
    for col in cols {
        let norm0 = col.iter().map(|v| v * v).sum::<f64>().sqrt();
        let mut v = col.to_vec();
        for b in &basis {
            let proj: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
            v.iter_mut().zip(b).for_each(|(x, y)| *x -= proj * y);
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-9 * norm0.max(1.0) {
            basis.push(v.iter().map(|x| x / norm).collect());
        }
    }
    basis.len()
}

/// Step 1: fits simplex weights by minimizing the Poisson kernel.
///
/// The genetic search runs on unconstrained logits mapped through softmax;
/// the result is polished with exponentiated-gradient steps on the simplex.
pub fn fit_extension_weights(input: &ExtensionInput, cfg: &OptimizerConfig) -> Result<ExtensionWeights> {
    let k = input.in_sample.len();
    if k == 0 {
        return Err(Error::Empty("in-sample locations"));
    }
    if input.weeks() < 2 {
        return Err(Error::InsufficientHistory(format!(
            "{} overlapping weeks, need at least 2",
            input.weeks()
        )));
    }
    if input.in_sample.iter().any(|(_, s)| s.values.len() != input.weeks()) {
        return Err(Error::Validation(
            "in-sample series are not aligned with the out-of-sample series".into(),
        ));
    }
    let all_zero = |s: &ScaledSeries| s.values.iter().all(|&v| v == 0.0);
    if all_zero(&input.oos) || input.in_sample.iter().all(|(_, s)| all_zero(s)) {
        return Err(Error::AllZero("extension histories"));
    }

    let uniform = vec![1.0 / k as f64; k];
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut initial = vec![vec![0.0; k]];
    for _ in 1..cfg.population {
        initial.push((0..k).map(|_| 2.0 * rng.sample::<f64, _>(StandardNormal)).collect());
    }
    let ga = genetic_minimize(
        |u: &[f64]| extension_objective(input, &softmax(u)),
        initial,
        cfg,
        &mut rng,
    );

    let mut w = softmax(&ga.best);
    let mut fw = extension_objective(input, &w);
    let mut step = 1.0;
    let iters = cfg.local_iters.max(1) * 5;
    for _ in 0..iters {
        let g = objective_gradient(input, &w);
        let gmax = g.iter().map(|v| v.abs()).fold(0.0, f64::max).max(1e-12);
        let mut improved = false;
        for _ in 0..30 {
            let eta = step / gmax;
            let mut trial: Vec<f64> = w.iter().zip(&g).map(|(wk, gk)| wk * (-eta * gk).exp()).collect();
            renormalize(&mut trial);
            let ft = extension_objective(input, &trial);
            if ft <= fw {
                improved = ft < fw;
                w = trial;
                fw = ft;
                step = (step * 2.0).min(1e3);
                break;
            }
            step *= 0.5;
        }
        if !improved && step < 1e-12 {
            break;
        }
    }
    renormalize(&mut w);
    let fu = extension_objective(input, &uniform);
    if fu < extension_objective(input, &w) {
        w = uniform;
    }
    let objective = extension_objective(input, &w);
    Ok(ExtensionWeights {
        oos_location: input.oos_location.clone(),
        in_sample_locations: input.in_sample.iter().map(|(l, _)| l.clone()).collect(),
        weights: w,
        objective,
        non_identifiable: column_rank(input) < k,
    })
}

/// Step 2: `z(x) = sum_k w_k (c_k / c_L) f_k(x c_k / c_L)`.
pub fn extend_density(weights: &[f64], densities: &[Density1D], scales: &[f64], oos_scale: f64) -> Result<Density1D> {
    if densities.len() != weights.len() || scales.len() != weights.len() {
        return Err(Error::Validation(
            "weights, densities and scales differ in length".into(),
        ));
    }
    if !(oos_scale > 0.0) {
        return Err(Error::NonPositiveScale(oos_scale));
    }
    if let Some(&c) = scales.iter().find(|c| !(**c > 0.0)) {
        return Err(Error::NonPositiveScale(c));
    }
    let parts = densities
        .iter()
        .zip(scales)
        .map(|(d, &c)| d.scaled(oos_scale / c))
        .collect::<Result<Vec<_>>>()?;
    linear_pool(&parts, weights)
}

/// Fits extension weights for `oos_location` from every location in `hj` and
/// builds its joint peak density.
pub fn extend_location(
    oos_location: &str,
    truth: &BTreeMap<String, HospSeries>,
    hj: &BTreeMap<String, JointDensity2D>,
    asof: EpiWeek,
    cfg: &OptimizerConfig,
) -> Result<(JointDensity2D, ExtensionWeights)> {
    let oos = truth
        .get(oos_location)
        .ok_or_else(|| Error::Validation(format!("no truth for {oos_location}")))?;
    let mut in_sample = Vec::with_capacity(hj.len());
    for loc in hj.keys() {
        in_sample.push(
            truth
                .get(loc)
                .ok_or_else(|| Error::Validation(format!("no truth for in-sample location {loc}")))?,
        );
    }
    let input = ExtensionInput::from_series(oos, &in_sample, asof)?;
    let fitted = fit_extension_weights(&input, cfg)?;

    let weeks: Vec<Density1D> = hj.values().map(|j| j.week.clone()).collect();
    let intensities: Vec<Density1D> = hj.values().map(|j| j.intensity.clone()).collect();
    let scales: Vec<f64> = input.in_sample.iter().map(|(_, s)| s.scale).collect();
    let week = linear_pool(&weeks, &fitted.weights)?;
    let intensity = extend_density(&fitted.weights, &intensities, &scales, input.oos.scale)?;
    Ok((joint_independence(week, intensity), fitted))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scaled(v: &[f64]) -> ScaledSeries {
        ScaledSeries {
            values: v.to_vec(),
            scale: 1.0,
        }
    }

    fn input(oos: &[f64], cols: &[&[f64]]) -> ExtensionInput {
        ExtensionInput {
            oos_location: "OOS".into(),
            oos: scaled(oos),
            in_sample: cols
                .iter()
                .enumerate()
                .map(|(k, c)| (format!("S{k}"), scaled(c)))
                .collect(),
        }
    }

    #[test]
    fn identical_donors_are_flagged() {
        let a = [0.1, 0.4, 1.0, 0.6, 0.3];
        let b = [0.5, 0.6, 0.7, 1.0, 0.9];
        let inp = input(&a, &[&a, &a, &b]);
        let w = fit_extension_weights(&inp, &OptimizerConfig::default()).unwrap();
        assert!(w.non_identifiable);
        assert!(w.weights[0] + w.weights[1] > 0.99);
        let single = fit_extension_weights(&input(&a, &[&a, &b]), &OptimizerConfig::default()).unwrap();
        assert!(!single.non_identifiable);
        assert!((w.objective - single.objective).abs() < 1e-8);
    }

    #[test]
    fn errors() {
        let inp = input(&[0.5], &[&[0.5]]);
        assert!(matches!(
            fit_extension_weights(&inp, &OptimizerConfig::default()),
            Err(Error::InsufficientHistory(_))
        ));
        let inp = input(&[0.0, 0.0], &[&[0.5, 1.0]]);
        assert!(matches!(
            fit_extension_weights(&inp, &OptimizerConfig::default()),
            Err(Error::AllZero(_))
        ));
        let d = Density1D::uniform(0.0, 1.0).unwrap();
        assert!(matches!(
            extend_density(&[1.0], &[d.clone()], &[0.0], 1.0),
            Err(Error::NonPositiveScale(_))
        ));
        assert!(extend_density(&[1.0], &[d], &[1.0], -1.0).is_err());
    }

    #[test]
    fn single_state_scaling() {
        let d = Density1D::uniform(10.0, 30.0).unwrap();
        let same = extend_density(&[1.0], &[d.clone()], &[50.0], 50.0).unwrap();
        for k in 0..100 {
            let x = k as f64 * 0.5;
            assert!((same.pdf(x) - d.pdf(x)).abs() < 1e-9);
        }
        let doubled = extend_density(&[1.0], &[d.clone()], &[50.0], 100.0).unwrap();
        assert_eq!(doubled.support(), (20.0, 60.0));
        assert!((doubled.pdf(40.0) - 0.5 * d.pdf(20.0)).abs() < 1e-15);
    }

    #[test]
    fn from_series_aligns_and_scales() {
        let w = EpiWeek::new(2023, 40).unwrap();
        let oos = HospSeries::new("NJ", w, vec![1, 2, 4, 8]);
        let a = HospSeries::new("NY", w.add_weeks(-1), vec![5, 10, 20, 40, 80]);
        let inp = ExtensionInput::from_series(&oos, &[&a], w.add_weeks(2)).unwrap();
        assert_eq!(inp.oos.values, vec![0.25, 0.5, 1.0]);
        assert_eq!(inp.oos.scale, 4.0);
        assert_eq!(inp.in_sample[0].1.values, vec![0.25, 0.5, 1.0]);
        assert_eq!(inp.in_sample[0].1.scale, 40.0);
        assert!(matches!(
            ExtensionInput::from_series(&oos, &[&a], w),
            Err(Error::InsufficientHistory(_))
        ));
    }
}
