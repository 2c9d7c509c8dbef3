//! Classical tests and the RWIS regression.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

use crate::error::{Error, Result};

/// Test statistic, two-sided p-value and degrees of freedom (NaN when the
/// reference distribution is normal).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub statistic: f64,
    pub p_value: f64,
    pub df: f64,
}

fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    (m, xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0))
}

fn t_two_sided(t: f64, df: f64) -> f64 {
    let dist = StudentsT::new(0.0, 1.0, df).expect("positive degrees of freedom");
    (2.0 * dist.cdf(-t.abs())).min(1.0)
}

fn check_sample(xs: &[f64], name: &str) -> Result<()> {
    if xs.len() < 2 {
        return Err(Error::DegenerateSample(format!("{name} needs at least two values")));
    }
    if xs.iter().any(|x| !x.is_finite()) {
        return Err(Error::DegenerateSample(format!("{name} has non-finite values")));
    }
    Ok(())
}

/// Two-sided one-sample t-test of `mean(values) == null_mean`.
pub fn t_test_one_sample(values: &[f64], null_mean: f64) -> Result<TestResult> {
    check_sample(values, "sample")?;
    let (m, v) = mean_var(values);
    if v == 0.0 {
        return Err(Error::DegenerateSample("sample has zero variance".into()));
    }
    let df = values.len() as f64 - 1.0;
    let t = (m - null_mean) / (v / values.len() as f64).sqrt();
    Ok(TestResult {
        statistic: t,
        p_value: t_two_sided(t, df),
        df,
    })
}

/// Two-sided Welch test of equal means, with Welch-Satterthwaite degrees of
/// freedom.
pub fn t_test_two_sample(a: &[f64], b: &[f64]) -> Result<TestResult> {
    check_sample(a, "first sample")?;
    check_sample(b, "second sample")?;
    let (ma, va) = mean_var(a);
    let (mb, vb) = mean_var(b);
    let (sa, sb) = (va / a.len() as f64, vb / b.len() as f64);
    if sa + sb == 0.0 {
        if ma == mb {
            return Ok(TestResult {
                statistic: 0.0,
                p_value: 1.0,
                df: (a.len() + b.len() - 2) as f64,
            });
        }
        return Err(Error::DegenerateSample("both samples have zero variance".into()));
    }
    let t = (ma - mb) / (sa + sb).sqrt();
    let df = (sa + sb).powi(2) / (sa * sa / (a.len() as f64 - 1.0) + sb * sb / (b.len() as f64 - 1.0));
    Ok(TestResult {
        statistic: t,
        p_value: t_two_sided(t, df),
        df,
    })
}

/// Mann-Whitney U of `a` (pairs with `a > b`, ties counting one half) and the
/// two-sided normal-approximation p-value with tie and continuity
/// corrections.
pub fn mann_whitney(a: &[f64], b: &[f64]) -> Result<TestResult> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Empty("Mann-Whitney sample"));
    }
    let (n1, n2) = (a.len() as f64, b.len() as f64);
    let mut pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    if pooled.iter().any(|x| x.is_nan()) {
        return Err(Error::DegenerateSample("NaN in Mann-Whitney sample".into()));
    }
    pooled.sort_by(f64::total_cmp);
    let n = pooled.len() as f64;
    // Midranks of the pooled sample and the tie term sum(t^3 - t).
    let mut rank_of = Vec::new();
    let mut ties = 0.0;
    let mut i = 0;
    while i < pooled.len() {
        let mut j = i;
        while j + 1 < pooled.len() && pooled[j + 1] == pooled[i] {
            j += 1;
        }
        let t = (j - i + 1) as f64;
        ties += t * t * t - t;
        rank_of.push((pooled[i], (i + j) as f64 / 2.0 + 1.0));
        i = j + 1;
    }
    let rank = |x: f64| {
        let k = rank_of.partition_point(|&(v, _)| v < x);
        rank_of[k].1
    };
    let r1: f64 = a.iter().map(|&x| rank(x)).sum();
    let u = r1 - n1 * (n1 + 1.0) / 2.0;
    let mu = n1 * n2 / 2.0;
    let var = n1 * n2 / 12.0 * ((n + 1.0) - ties / (n * (n - 1.0)));
    let p_value = if var > 0.0 {
        let z = ((u - mu).abs() - 0.5).max(0.0) / var.sqrt();
        (2.0 * Normal::standard().cdf(-z)).min(1.0)
    } else {
        1.0
    };
    Ok(TestResult {
        statistic: u,
        p_value,
        df: f64::NAN,
    })
}

/// One unit of the RWIS regression.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegressionRow {
    pub rwis: f64,
    pub horizon: f64,
    pub weeks_from_peak: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coefficient {
    pub name: String,
    pub estimate: f64,
    pub std_error: f64,
    /// 95% confidence interval.
    pub ci: (f64, f64),
    pub p_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Regression {
    /// Intercept, horizon, weeks from peak, and their interaction.
    pub coefficients: Vec<Coefficient>,
    pub r_squared: f64,
    pub n: usize,
}

impl Regression {
    pub fn coefficient(&self, name: &str) -> Option<&Coefficient> {
        self.coefficients.iter().find(|c| c.name == name)
    }
}

pub const REGRESSION_TERMS: [&str; 4] = ["intercept", "horizon", "weeks_from_peak", "horizon:weeks_from_peak"];

/// Ordinary least squares of RWIS on horizon, weeks from peak and their
/// product, with classical standard errors.
pub fn rwis_regression(rows: &[RegressionRow]) -> Result<Regression> {
    let p = REGRESSION_TERMS.len();
    if rows.len() <= p {
        return Err(Error::DegenerateSample(format!(
            "{} rows for {p} coefficients",
            rows.len()
        )));
    }
    let n = rows.len();
    let x = DMatrix::from_fn(n, p, |i, j| {
        let r = &rows[i];
        match j {
            0 => 1.0,
            1 => r.horizon,
            2 => r.weeks_from_peak,
            _ => r.horizon * r.weeks_from_peak,
        }
    });
    let y = DVector::from_iterator(n, rows.iter().map(|r| r.rwis));
    let svd = x.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if !(smin > smax * 1e-10) {
        return Err(Error::RankDeficient);
    }
    let beta = svd.solve(&y, 0.0).map_err(|_| Error::RankDeficient)?;
    let resid = &y - &x * &beta;
    let rss = resid.norm_squared();
    let df = (n - p) as f64;
    let sigma2 = rss / df;
    // (X'X)^-1 = V S^-2 V'
    let v_t = svd.v_t.as_ref().expect("right singular vectors requested");
    let inv_s2 = DMatrix::from_diagonal(&svd.singular_values.map(|s| 1.0 / (s * s)));
    let cov = v_t.transpose() * inv_s2 * v_t * sigma2;
    let t_crit = StudentsT::new(0.0, 1.0, df).expect("positive df").inverse_cdf(0.975);
    let coefficients = REGRESSION_TERMS
        .iter()
        .enumerate()
        .map(|(j, name)| {
            let est = beta[j];
            let se = cov[(j, j)].max(0.0).sqrt();
            let p_value = if se > 0.0 {
                t_two_sided(est / se, df)
            } else if est == 0.0 {
                1.0
            } else {
                0.0
            };
            Coefficient {
                name: name.to_string(),
                estimate: est,
                std_error: se,
                ci: (est - t_crit * se, est + t_crit * se),
                p_value,
            }
        })
        .collect();
    let ybar = y.mean();
    let tss = y.iter().map(|v| (v - ybar).powi(2)).sum::<f64>();
    Ok(Regression {
        coefficients,
        r_squared: if tss > 0.0 { 1.0 - rss / tss } else { 1.0 },
        n,
    })
}
