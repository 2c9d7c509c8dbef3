//! Discrete-time Kermack-McKendrick dynamics on a daily grid.
//!
//! Each day the susceptibles escape infection with probability
//! `exp(-lambda(t) * sum_j i[t-j] a(j) / N)`; the remainder become incident
//! infections, and incident hospitalizations are the lag-convolution
//! `h[t] = sum_j i[t-j+1] q(j)`. Before day 0 the infection history is seeded
//! with exponentially growing counts over `LAG` days.

use crate::ad::{Ops, Plain};
use crate::error::Result;
use crate::ts::{argmax_first, weekly_from_daily, EpiWeek};

use super::params::{ModelConfig, ModelParams};

/// Parameter vector generic over the arithmetic backend.
#[derive(Debug, Clone)]
pub(crate) struct Theta<V> {
    pub beta_g: V,
    pub beta_e: V,
    pub mu_infections: V,
    pub mu_hosps: V,
    pub alpha: V,
    pub r: V,
    pub mu: V,
    pub sigma: V,
    pub s: V,
    pub z: Vec<V>,
}

impl<V: Copy> Theta<V> {
    pub fn from_params<O: Ops<V = V>>(o: &mut O, p: &ModelParams) -> Self {
        Self {
            beta_g: o.cst(p.beta_g),
            beta_e: o.cst(p.beta_e),
            mu_infections: o.cst(p.mu_infections),
            mu_hosps: o.cst(p.mu_hosps),
            alpha: o.cst(p.alpha),
            r: o.cst(p.r),
            mu: o.cst(p.mu),
            sigma: o.cst(p.sigma),
            s: o.cst(p.s),
            z: p.rw_increments.iter().map(|&z| o.cst(z)).collect(),
        }
    }
}

pub(crate) struct Traj<V> {
    pub s: Vec<V>,
    /// Incident infections including the `lag` seeded pre-season days.
    pub i_full: Vec<V>,
    pub h: Vec<V>,
}

fn ln_factorial(n: usize) -> f64 {
    (2..=n).map(|k| (k as f64).ln()).sum()
}

pub(crate) fn lag_pmf_with<O: Ops>(o: &mut O, beta: O::V, lag: usize) -> Vec<O::V> {
    let ln_beta = o.ln(beta);
    let logits: Vec<O::V> = (1..=lag)
        .map(|j| {
            if j == 1 {
                o.cst(0.0)
            } else {
                o.affine(ln_beta, (j - 1) as f64, -ln_factorial(j - 1))
            }
        })
        .collect();
    o.softmax(&logits)
}

/// Poisson lag distribution on `1..=lag`: entry `j` is proportional to the
/// Poisson mass at `j - 1` with mean `beta`.
pub fn lag_pmf(beta: f64, lag: usize) -> Vec<f64> {
    lag_pmf_with(&mut Plain, beta, lag)
}

pub(crate) fn lambda_path_with<O: Ops>(o: &mut O, th: &Theta<O::V>, t_days: usize) -> Vec<O::V> {
    let mut lambda = Vec::with_capacity(t_days);
    let mut walk = o.cst(0.0);
    let (r, mu, sigma) = (o.val(th.r), o.val(th.mu), o.val(th.sigma));
    for d in 0..t_days {
        if d % 7 == 0 {
            if let Some(&z) = th.z.get(d / 7) {
                let step = o.mul(th.s, z);
                walk = o.add(walk, step);
            }
        }
        let u = (d as f64 - mu) / sigma;
        let e = (-0.5 * u * u).exp();
        let b = r * e;
        let bump = o.custom(b, &[th.r, th.mu, th.sigma], &[e, b * u / sigma, b * u * u / sigma]);
        let raw = o.add(bump, walk);
        lambda.push(o.max_const(raw, 0.0));
    }
    lambda
}

/// Daily transmission multiplier
/// `max(0, R exp(-((t - mu) / sigma)^2 / 2) + eps_t)`, where `eps_t` is the
/// cumulative sum of `s * z_w` over the weeks up to and including `t`'s week.
pub fn lambda_path(r: f64, mu: f64, sigma: f64, s: f64, rw_increments: &[f64], t_days: usize) -> Vec<f64> {
    let th = Theta {
        beta_g: 1.0,
        beta_e: 1.0,
        mu_infections: 0.5,
        mu_hosps: 0.5,
        alpha: 0.5,
        r,
        mu,
        sigma,
        s,
        z: rw_increments.to_vec(),
    };
    lambda_path_with(&mut Plain, &th, t_days)
}

/// `1 - exp(-x)` without cancellation for small `x`.
fn one_minus_exp_neg<O: Ops>(o: &mut O, x: O::V) -> O::V {
    let xv = o.val(x);
    o.custom(-(-xv).exp_m1(), &[x], &[(-xv).exp()])
}

pub(crate) fn hosp_convolution_with<O: Ops>(o: &mut O, i_full: &[O::V], q: &[O::V], lag: usize) -> Vec<O::V> {
    let q_rev: Vec<O::V> = q.iter().rev().copied().collect();
    (0..i_full.len() - lag)
        .map(|d| o.dot(&i_full[d + 1..=d + lag], &q_rev))
        .collect()
}

/// Incident hospitalizations `h[t] = sum_{j=1..LAG} i[t-j+1] q(j)` for the
/// days after the `q.len()` seeded entries at the front of `i_full`.
pub fn hosp_convolution(i_full: &[f64], q: &[f64]) -> Vec<f64> {
    hosp_convolution_with(&mut Plain, i_full, q, q.len())
}

pub(crate) fn simulate_with<O: Ops>(o: &mut O, th: &Theta<O::V>, cfg: &ModelConfig) -> Traj<O::V> {
    simulate_days_with(o, th, cfg, cfg.t_days())
}

/// Simulates only the first `days` days of the season.
pub(crate) fn simulate_days_with<O: Ops>(o: &mut O, th: &Theta<O::V>, cfg: &ModelConfig, days: usize) -> Traj<O::V> {
    let (s, i_full) = infections_with(o, th, cfg, days);
    let q = lag_pmf_with(o, th.beta_e, cfg.lag);
    let h = hosp_convolution_with(o, &i_full, &q, cfg.lag);
    Traj { s, i_full, h }
}

/// Weekly hospitalizations over the first `weeks` weeks, summing each
/// week's infections over a sliding window before convolving rather than
/// convolving day by day.
pub(crate) fn weekly_hosps_with<O: Ops>(o: &mut O, th: &Theta<O::V>, cfg: &ModelConfig, weeks: usize) -> Vec<O::V> {
    let lag = cfg.lag;
    let (_, i_full) = infections_with(o, th, cfg, 7 * weeks);
    let q = lag_pmf_with(o, th.beta_e, lag);
    let q_rev: Vec<O::V> = q.iter().rev().copied().collect();
    // window[k] = i_full[k + 1] + ... + i_full[k + 7]
    let window: Vec<O::V> = (0..7 * weeks + lag - 7).map(|k| o.sum(&i_full[k + 1..k + 8])).collect();
    (0..weeks).map(|w| o.dot(&window[7 * w..7 * w + lag], &q_rev)).collect()
}

/// Susceptibles and incident infections (seeded days first) for `days` days.
fn infections_with<O: Ops>(o: &mut O, th: &Theta<O::V>, cfg: &ModelConfig, days: usize) -> (Vec<O::V>, Vec<O::V>) {
    let lag = cfg.lag;
    let n = cfg.population;
    let a = lag_pmf_with(o, th.beta_g, lag);
    let a_rev: Vec<O::V> = a.iter().rev().copied().collect();
    let lambda = lambda_path_with(o, th, days);

    // Pre-season seeds at offsets t = -lag..=-1.
    let mut i_full = Vec::with_capacity(lag + days);
    let mut seeded = Vec::with_capacity(2 * lag);
    for k in (1..=lag).rev() {
        let t = -(k as f64);
        let gi = o.scale(th.mu_infections, t);
        let ei = o.exp(gi);
        let i0 = o.scale(ei, n * cfg.seed_scale);
        let gh = o.scale(th.mu_hosps, t);
        let eh = o.exp(gh);
        let h0 = o.scale(eh, n * cfg.seed_scale);
        i_full.push(i0);
        seeded.push(i0);
        seeded.push(h0);
    }
    let used = o.sum(&seeded);
    let pool = o.scale(th.alpha, n);
    let s0 = o.sub(pool, used);
    let mut s_prev = o.max_const(s0, 0.0);

    let mut s = Vec::with_capacity(days);
    for (d, &lam) in lambda.iter().enumerate() {
        let pressure = o.dot(&i_full[d..d + lag], &a_rev);
        let (lv, pv) = (o.val(lam), o.val(pressure));
        let x = o.custom(lv * pv / n, &[lam, pressure], &[pv / n, lv / n]);
        let infected = one_minus_exp_neg(o, x);
        let i_d = o.mul(infected, s_prev);
        s_prev = o.sub(s_prev, i_d);
        i_full.push(i_d);
        s.push(s_prev);
    }
    (s, i_full)
}

pub(crate) fn weekly_with<O: Ops>(o: &mut O, daily: &[O::V]) -> Vec<O::V> {
    daily.chunks_exact(7).map(|c| o.sum(c)).collect()
}

/// Daily latent compartments over the modeled season.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentTrajectory {
    pub s: Vec<f64>,
    pub i: Vec<f64>,
    pub h: Vec<f64>,
    /// Seeded pre-season infections, oldest first.
    pub i_seed: Vec<f64>,
}

pub fn simulate_latent(params: &ModelParams, config: &ModelConfig) -> Result<LatentTrajectory> {
    config.validate()?;
    if params.rw_increments.len() != config.season_weeks {
        return Err(crate::Error::Config(format!(
            "{} random-walk increments for a {}-week season",
            params.rw_increments.len(),
            config.season_weeks
        )));
    }
    let mut o = Plain;
    let th = Theta::from_params(&mut o, params);
    let traj = simulate_with(&mut o, &th, config);
    let lag = config.lag;
    Ok(LatentTrajectory {
        s: traj.s,
        i: traj.i_full[lag..].to_vec(),
        i_seed: traj.i_full[..lag].to_vec(),
        h: traj.h,
    })
}

/// Weekly sums of daily hospitalizations, labelled from the season start.
pub fn weekly_hosps(traj: &LatentTrajectory, config: &ModelConfig) -> Result<Vec<(EpiWeek, f64)>> {
    weekly_from_daily(&traj.h, config.season_start)
}

/// Season-long weekly latent hospitalizations for `params`.
pub fn weekly_latent(params: &ModelParams, config: &ModelConfig) -> Result<Vec<f64>> {
    let traj = simulate_latent(params, config)?;
    Ok(weekly_hosps(&traj, config)?.into_iter().map(|w| w.1).collect())
}

pub(crate) fn soft_peak_with<O: Ops>(o: &mut O, weekly: &[O::V], temperature: O::V) -> (O::V, O::V) {
    let logits: Vec<O::V> = weekly.iter().map(|&h| o.div(h, temperature)).collect();
    let w = o.softmax(&logits);
    let weeks: Vec<f64> = (1..=weekly.len()).map(|k| k as f64).collect();
    let tau = o.dot_const(&w, &weeks);
    let rho = o.dot(&w, weekly);
    (tau, rho)
}

/// Smooth peak surrogate: softmax-weighted mean week (1-based) and height.
pub fn soft_peak(weekly_h: &[f64], temperature: f64) -> (f64, f64) {
    soft_peak_with(&mut Plain, weekly_h, temperature)
}

/// Hard peak of a weekly vector: 1-based week and value, earliest on ties.
pub fn hard_peak(weekly_h: &[f64]) -> Option<(usize, f64)> {
    argmax_first(weekly_h).map(|(k, v)| (k + 1, v))
}
