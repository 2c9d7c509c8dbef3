//! Univariate densities built from quantile forecasts.
//!
//! A quantile forecast becomes a CDF by monotone cubic interpolation through
//! its (value, level) knots with linear tails reaching 0 and 1 at the support
//! edges. The density is the central finite difference of that CDF on a
//! uniform grid. Mixtures (linear pools) and positive rescalings keep their
//! components so that mixture and change-of-variable identities hold exactly.

use serde::{Deserialize, Serialize};

use super::quantile::QuantileForecast;
use super::spline::MonotoneCubic;
use crate::error::{Error, Result};

/// Number of nodes in the density grid.
pub const GRID_POINTS: usize = 2001;

/// How the CDF is extended beyond the outermost quantile knots.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailPolicy {
    /// Each tail is this fraction of the spread between the outermost knots.
    pub width_factor: f64,
    /// Floor on each tail width (same units as the values).
    pub min_width: f64,
}

impl Default for TailPolicy {
    fn default() -> Self {
        Self {
            width_factor: 0.5,
            min_width: 1e-3,
        }
    }
}

/// A CDF interpolated through quantile knots, with linear tails.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantileCdf {
    lo: f64,
    hi: f64,
    spline: MonotoneCubic,
}

impl QuantileCdf {
    pub fn support(&self) -> (f64, f64) {
        (self.lo, self.hi)
    }

    pub fn eval(&self, x: f64) -> f64 {
        if x <= self.lo {
            return 0.0;
        }
        if x >= self.hi {
            return 1.0;
        }
        let (x0, x1) = (self.spline.first_x(), self.spline.last_x());
        let (xs, ys) = self.spline.knots();
        let (p0, p1) = (ys[0], ys[ys.len() - 1]);
        if x < x0 {
            p0 * (x - self.lo) / (x0 - self.lo)
        } else if x > x1 {
            p1 + (1.0 - p1) * (x - x1) / (self.hi - x1)
        } else if xs.len() == 1 {
            p0
        } else {
            self.spline.eval(x)
        }
    }
}

/// Interpolates a CDF through the knots of `q`.
///
/// Tied values are separated by a tiny gap so the interpolant stays a
/// function; knots with distinct values are reproduced exactly.
pub fn cdf_from_quantiles(q: &QuantileForecast, tail: TailPolicy) -> Result<QuantileCdf> {
    let levels = q.levels();
    let values = q.values();
    if let Some(k) = values.windows(2).position(|w| w[1] < w[0]) {
        return Err(Error::Monotonicity(k + 1));
    }
    let spread = values[values.len() - 1] - values[0];
    let gap = 1e-9 * spread.abs().max(values[0].abs()).max(1.0);
    let mut xs = Vec::with_capacity(values.len());
    for &v in values {
        let v = match xs.last() {
            Some(&prev) if v <= prev => prev + gap,
            _ => v,
        };
        xs.push(v);
    }
    let spread = xs[xs.len() - 1] - xs[0];
    let width = (tail.width_factor * spread).max(tail.min_width);
    let lo = xs[0] - width;
    let hi = xs[xs.len() - 1] + width;
    let left = levels[0] / (xs[0] - lo);
    let right = (1.0 - levels[levels.len() - 1]) / (hi - xs[xs.len() - 1]);
    let spline = MonotoneCubic::new(xs, levels.to_vec(), Some((left, right)));
    Ok(QuantileCdf { lo, hi, spline })
}

/// Differentiates `cdf` on the density grid (central differences, negatives
/// clipped, renormalized to unit trapezoid mass).
pub fn pdf_from_cdf(cdf: QuantileCdf) -> Density1D {
    let (lo, hi) = cdf.support();
    let n = GRID_POINTS;
    let step = (hi - lo) / (n - 1) as f64;
    let xs: Vec<f64> = (0..n).map(|k| lo + step * k as f64).collect();
    let f: Vec<f64> = xs.iter().map(|&x| cdf.eval(x)).collect();
    let mut pdf: Vec<f64> = (0..n)
        .map(|k| {
            let d = if k == 0 {
                (f[1] - f[0]) / step
            } else if k == n - 1 {
                (f[n - 1] - f[n - 2]) / step
            } else {
                (f[k + 1] - f[k - 1]) / (2.0 * step)
            };
            d.max(0.0)
        })
        .collect();
    let mass = trapezoid(&pdf, step);
    if mass > 0.0 {
        pdf.iter_mut().for_each(|v| *v /= mass);
    } else {
        // Unreachable for a CDF rising from 0 to 1; fall back to flat.
        pdf.iter_mut().for_each(|v| *v = 1.0 / (hi - lo));
    }
    Density1D {
        lo,
        hi,
        kind: Kind::Grid { cdf, step, pdf },
    }
}

fn trapezoid(values: &[f64], step: f64) -> f64 {
    let n = values.len();
    let inner: f64 = values[1..n - 1].iter().sum();
    step * (inner + 0.5 * (values[0] + values[n - 1]))
}

#[derive(Debug, Clone, PartialEq)]
enum Kind {
    Grid { cdf: QuantileCdf, step: f64, pdf: Vec<f64> },
    Uniform,
    Mixture(Vec<(f64, Density1D)>),
    Scaled { inner: Box<Density1D>, factor: f64 },
}

/// A univariate probability density with bounded support.
#[derive(Debug, Clone, PartialEq)]
pub struct Density1D {
    lo: f64,
    hi: f64,
    kind: Kind,
}

impl Density1D {
    pub fn from_quantiles(q: &QuantileForecast, tail: TailPolicy) -> Result<Self> {
        Ok(pdf_from_cdf(cdf_from_quantiles(q, tail)?))
    }

    pub fn uniform(lo: f64, hi: f64) -> Result<Self> {
        if !(hi > lo) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::Validation(format!("bad uniform support [{lo}, {hi}]")));
        }
        Ok(Self {
            lo,
            hi,
            kind: Kind::Uniform,
        })
    }

    pub fn support(&self) -> (f64, f64) {
        (self.lo, self.hi)
    }

    pub fn cdf(&self, x: f64) -> f64 {
        if x <= self.lo {
            return 0.0;
        }
        if x >= self.hi {
            return 1.0;
        }
        match &self.kind {
            Kind::Grid { cdf, .. } => cdf.eval(x),
            Kind::Uniform => (x - self.lo) / (self.hi - self.lo),
            Kind::Mixture(parts) => parts.iter().map(|(w, d)| w * d.cdf(x)).sum(),
            Kind::Scaled { inner, factor } => inner.cdf(x / factor),
        }
    }

    pub fn pdf(&self, x: f64) -> f64 {
        self.pdf_with_slope(x).0
    }

    /// Density and its derivative with respect to `x`.
    pub fn pdf_with_slope(&self, x: f64) -> (f64, f64) {
        if !(x >= self.lo && x <= self.hi) {
            return (0.0, 0.0);
        }
        match &self.kind {
            Kind::Grid { step, pdf, .. } => {
                let u = (x - self.lo) / step;
                let k = (u.floor() as usize).min(pdf.len() - 2);
                let t = u - k as f64;
                let slope = (pdf[k + 1] - pdf[k]) / step;
                (pdf[k] + t * (pdf[k + 1] - pdf[k]), slope)
            }
            Kind::Uniform => (1.0 / (self.hi - self.lo), 0.0),
            Kind::Mixture(parts) => parts.iter().fold((0.0, 0.0), |acc, (w, d)| {
                let (v, s) = d.pdf_with_slope(x);
                (acc.0 + w * v, acc.1 + w * s)
            }),
            Kind::Scaled { inner, factor } => {
                let (v, s) = inner.pdf_with_slope(x / factor);
                (v / factor, s / (factor * factor))
            }
        }
    }

    /// Log density; `-inf` off the support or where the density vanishes.
    pub fn log_pdf(&self, x: f64) -> f64 {
        let v = self.pdf(x);
        if v > 0.0 {
            v.ln()
        } else {
            f64::NEG_INFINITY
        }
    }

    /// Probability of the interval `[a, b]`.
    pub fn interval_prob(&self, a: f64, b: f64) -> f64 {
        (self.cdf(b) - self.cdf(a)).max(0.0)
    }

    /// Probability that a continuous peak-week variable rounds to `week`.
    pub fn week_prob(&self, week: f64) -> f64 {
        self.interval_prob(week - 0.5, week + 0.5)
    }

    /// Inverse CDF by bisection.
    pub fn quantile(&self, p: f64) -> f64 {
        let (mut a, mut b) = (self.lo, self.hi);
        for _ in 0..200 {
            let m = 0.5 * (a + b);
            if self.cdf(m) < p {
                a = m;
            } else {
                b = m;
            }
            if b - a <= 1e-12 * (1.0 + a.abs().max(b.abs())) {
                break;
            }
        }
        0.5 * (a + b)
    }

    pub fn to_quantiles(&self, levels: &[f64]) -> Result<QuantileForecast> {
        let mut values: Vec<f64> = levels.iter().map(|&p| self.quantile(p)).collect();
        for k in 1..values.len() {
            if values[k] < values[k - 1] {
                values[k] = values[k - 1];
            }
        }
        QuantileForecast::new(levels.to_vec(), values)
    }

    /// The density of `factor * X` for `X` with this density.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        if !(factor > 0.0 && factor.is_finite()) {
            return Err(Error::NonPositiveScale(factor));
        }
        Ok(Self {
            lo: self.lo * factor,
            hi: self.hi * factor,
            kind: Kind::Scaled {
                inner: Box::new(self.clone()),
                factor,
            },
        })
    }

    /// Component supports and their breakpoints, for quadrature.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut out = vec![self.lo, self.hi];
        match &self.kind {
            Kind::Mixture(parts) => parts.iter().for_each(|(_, d)| out.extend(d.breakpoints())),
            Kind::Scaled { inner, factor } => out.extend(inner.breakpoints().into_iter().map(|b| b * factor)),
            _ => {}
        }
        out.sort_by(|a, b| a.total_cmp(b));
        out.dedup();
        out
    }
}

/// Convex combination of densities.
pub fn linear_pool(forecasts: &[Density1D], weights: &[f64]) -> Result<Density1D> {
    if forecasts.is_empty() {
        return Err(Error::Empty("forecasts to pool"));
    }
    if forecasts.len() != weights.len() {
        return Err(Error::Validation(format!(
            "{} forecasts but {} weights",
            forecasts.len(),
            weights.len()
        )));
    }
    check_simplex(weights)?;
    if forecasts.len() == 1 {
        return Ok(forecasts[0].clone());
    }
    let lo = forecasts.iter().map(|d| d.lo).fold(f64::INFINITY, f64::min);
    let hi = forecasts.iter().map(|d| d.hi).fold(f64::NEG_INFINITY, f64::max);
    let parts = weights
        .iter()
        .copied()
        .zip(forecasts.iter().cloned())
        .filter(|(w, _)| *w > 0.0)
        .collect();
    Ok(Density1D {
        lo,
        hi,
        kind: Kind::Mixture(parts),
    })
}

/// Equal weights for `n` components.
pub fn equal_weights(n: usize) -> Vec<f64> {
    vec![1.0 / n as f64; n]
}

pub(crate) fn check_simplex(weights: &[f64]) -> Result<()> {
    if let Some(&w) = weights.iter().find(|w| !(**w >= 0.0) || !w.is_finite()) {
        return Err(Error::NegativeWeight(w));
    }
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::WeightSum(total));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(levels: &[f64], values: &[f64]) -> QuantileForecast {
        QuantileForecast::new(levels.to_vec(), values.to_vec()).unwrap()
    }

    /// Composite trapezoid over the breakpoints of `d`, `n` panels per piece.
    fn integrate(d: &Density1D, a: f64, b: f64, n: usize) -> f64 {
        let mut cuts: Vec<f64> = d.breakpoints().into_iter().filter(|&x| x > a && x < b).collect();
        cuts.insert(0, a);
        cuts.push(b);
        cuts.windows(2)
            .map(|w| {
                let h = (w[1] - w[0]) / n as f64;
                // Stay inside the piece so support-edge jumps are not straddled.
                let f = |k: usize| {
                    let x = (w[0] + h * k as f64).clamp(w[0] + 1e-12 * h, w[1] - 1e-12 * h);
                    d.pdf(x)
                };
                h * ((1..n).map(f).sum::<f64>() + 0.5 * (f(0) + f(n)))
            })
            .sum()
    }

    #[test]
    fn knots_are_exact() {
        let cdf = cdf_from_quantiles(&q(&[0.25, 0.5, 0.75], &[10.0, 20.0, 40.0]), TailPolicy::default()).unwrap();
        assert_eq!(cdf.eval(10.0), 0.25);
        assert_eq!(cdf.eval(20.0), 0.5);
        assert_eq!(cdf.eval(40.0), 0.75);
        assert_eq!(cdf.support(), (-5.0, 55.0));
    }

    #[test]
    fn uniform_from_quantiles_has_unit_density() {
        let d = Density1D::from_quantiles(&q(&[0.25, 0.5, 0.75], &[0.25, 0.5, 0.75]), TailPolicy::default()).unwrap();
        assert_eq!(d.support(), (0.0, 1.0));
        for k in 1..1000 {
            let x = k as f64 / 1000.0;
            assert!((d.pdf(x) - 1.0).abs() < 1e-6, "pdf({x}) = {}", d.pdf(x));
        }
    }

    #[test]
    fn near_point_mass_still_normalized() {
        let d = Density1D::from_quantiles(
            &q(&[0.1, 0.5, 0.9], &[10.0, 10.0 + 1e-7, 10.0 + 2e-7]),
            TailPolicy::default(),
        )
        .unwrap();
        let (lo, hi) = d.support();
        assert!(hi - lo < 0.01);
        assert!((integrate(&d, lo, hi, 20_000) - 1.0).abs() < 1e-6);
    }

    #[test]
    fn tied_values_are_accepted() {
        let d = Density1D::from_quantiles(&q(&[0.25, 0.5, 0.75], &[3.0, 3.0, 3.0]), TailPolicy::default()).unwrap();
        assert!((d.cdf(3.0) - 0.25).abs() < 1e-6);
        assert!(d.pdf(3.0) > 0.0);
    }

    #[test]
    fn pool_of_two_uniforms() {
        let a = Density1D::uniform(0.0, 1.0).unwrap();
        let b = Density1D::uniform(1.0, 2.0).unwrap();
        let p = linear_pool(&[a, b], &[0.5, 0.5]).unwrap();
        for &x in &[0.1, 0.7, 1.3, 1.9] {
            assert!((p.pdf(x) - 0.5).abs() < 1e-15);
        }
        assert_eq!(p.support(), (0.0, 2.0));
        assert!((p.cdf(1.5) - 0.75).abs() < 1e-15);
    }

    #[test]
    fn pool_validates_weights() {
        let a = Density1D::uniform(0.0, 1.0).unwrap();
        assert!(matches!(
            linear_pool(&[a.clone(), a.clone()], &[0.7, 0.7]),
            Err(Error::WeightSum(_))
        ));
        assert!(matches!(linear_pool(&[], &[]), Err(Error::Empty(_))));
        assert!(matches!(
            linear_pool(&[a.clone(), a.clone()], &[1.5, -0.5]),
            Err(Error::NegativeWeight(_))
        ));
        assert_eq!(linear_pool(&[a.clone()], &[1.0]).unwrap(), a);
    }

    #[test]
    fn scaling_stretches_support() {
        let d = Density1D::uniform(1.0, 3.0).unwrap();
        let s = d.scaled(2.0).unwrap();
        assert_eq!(s.support(), (2.0, 6.0));
        assert!((s.pdf(4.0) - 0.25).abs() < 1e-15);
        assert!((s.cdf(4.0) - 0.5).abs() < 1e-15);
        assert!(d.scaled(0.0).is_err());
    }

    #[test]
    fn quantile_inverts_cdf() {
        let d = Density1D::from_quantiles(&q(&[0.1, 0.5, 0.9], &[2.0, 5.0, 11.0]), TailPolicy::default()).unwrap();
        for &p in &[0.1, 0.5, 0.9] {
            assert!((d.cdf(d.quantile(p)) - p).abs() < 1e-9);
        }
        assert!((d.quantile(0.5) - 5.0).abs() < 1e-9);
    }

    #[test]
    fn slope_matches_finite_difference() {
        let d = Density1D::from_quantiles(&q(&[0.1, 0.5, 0.9], &[2.0, 5.0, 11.0]), TailPolicy::default()).unwrap();
        let s = d.scaled(3.0).unwrap();
        let x = 13.37;
        let h = 1e-7;
        let fd = (s.pdf(x + h) - s.pdf(x - h)) / (2.0 * h);
        assert!((fd - s.pdf_with_slope(x).1).abs() < 1e-5);
    }
}
