//! Prior, likelihood and posterior of the control and chimeric models.
//!
//! The sampler works on an unconstrained vector: logs of the positive
//! parameters (with `ln(R alpha)` in place of `ln R`), logits of the
//! unit-interval ones, scaled logits of the `(0, T)` ones and the random-walk
//! increments as they are. The target there
//! is the posterior plus the log-Jacobian of that map.

use std::cell::RefCell;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::ad::{Ops, Plain, Tape, Var};
use crate::error::{Error, Result};
use crate::hj::JointDensity2D;
use crate::model::{
    simulate_with, soft_peak_with, weekly_hosps_with, weekly_with, ModelConfig, ModelParams, Theta, N_SCALAR,
};
use crate::ts::HospSeries;

/// Floor on weekly Poisson means inside the log.
pub const RATE_FLOOR: f64 = 1e-10;
/// Default peak-surrogate temperature as a fraction of the season maximum.
pub const DEFAULT_PEAK_TEMPERATURE: f64 = 0.05;
/// Absolute floor on the peak-surrogate temperature.
pub const TEMPERATURE_FLOOR: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Control,
    Chimeric,
}

impl ModelKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ModelKind::Control => "control",
            ModelKind::Chimeric => "chimeric",
        }
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "control" => Ok(ModelKind::Control),
            "chimeric" => Ok(ModelKind::Chimeric),
            other => Err(Error::Validation(format!("unknown model {other:?}"))),
        }
    }
}

/// Everything that defines one posterior.
#[derive(Debug, Clone)]
pub struct PosteriorSpec {
    pub kind: ModelKind,
    /// Observed weekly counts; the first point is season week 1.
    pub obs: HospSeries,
    pub config: ModelConfig,
    pub hj_joint: Option<JointDensity2D>,
    /// Weight of the human-judgment term (added to the log posterior).
    pub omega: f64,
    /// Surrogate temperature as a fraction of the season's maximum weekly mean.
    pub peak_temperature: f64,
}

impl PosteriorSpec {
    pub fn control(obs: HospSeries, config: ModelConfig) -> Result<Self> {
        Self::new(ModelKind::Control, obs, config, None)
    }

    pub fn chimeric(obs: HospSeries, config: ModelConfig, hj: JointDensity2D) -> Result<Self> {
        Self::new(ModelKind::Chimeric, obs, config, Some(hj))
    }

    pub fn new(
        kind: ModelKind,
        obs: HospSeries,
        config: ModelConfig,
        hj_joint: Option<JointDensity2D>,
    ) -> Result<Self> {
        config.validate()?;
        match (kind, &hj_joint) {
            (ModelKind::Chimeric, None) => {
                return Err(Error::Config("the chimeric model needs a human-judgment joint".into()))
            }
            (ModelKind::Control, Some(_)) => {
                return Err(Error::Config("the control model takes no human-judgment joint".into()))
            }
            _ => {}
        }
        if obs.len() > config.season_weeks {
            return Err(Error::Config(format!(
                "{} observed weeks exceed the {}-week season",
                obs.len(),
                config.season_weeks
            )));
        }
        if obs.start() != config.season_start {
            return Err(Error::Config(format!(
                "observations start at {} but the season starts at {}",
                obs.start(),
                config.season_start
            )));
        }
        Ok(Self {
            kind,
            obs,
            config,
            hj_joint,
            omega: 1.0,
            peak_temperature: DEFAULT_PEAK_TEMPERATURE,
        })
    }

    pub fn with_omega(mut self, omega: f64) -> Self {
        self.omega = omega;
        self
    }

    pub fn dim(&self) -> usize {
        self.config.dim()
    }

    pub fn t_days(&self) -> f64 {
        self.config.t_days() as f64
    }

    pub fn names(&self) -> Vec<String> {
        ModelParams::names(self.config.season_weeks)
    }
}

/// Sum of the prior log densities; `-inf` outside the support.
pub fn log_prior(theta: &ModelParams, config: &ModelConfig) -> f64 {
    let t = config.t_days() as f64;
    if theta.support_violation(t).is_some() || theta.rw_increments.len() != config.season_weeks {
        return f64::NEG_INFINITY;
    }
    let gamma11 = |x: f64| -x;
    let beta_half = |x: f64| -0.5 * x.ln() - 0.5 * (1.0 - x).ln() - PI.ln();
    let uniform = -t.ln();
    let half_cauchy = |x: f64| (2.0 / PI).ln() - x.mul_add(x, 1.0).ln();
    let normal = |z: f64| -0.5 * z * z - 0.5 * (2.0 * PI).ln();
    gamma11(theta.beta_g)
        + gamma11(theta.beta_e)
        + gamma11(theta.r)
        + beta_half(theta.mu_infections)
        + beta_half(theta.mu_hosps)
        + beta_half(theta.alpha)
        + 2.0 * uniform
        + half_cauchy(theta.s)
        + theta.rw_increments.iter().map(|&z| normal(z)).sum::<f64>()
}

fn log_lik_with<O: Ops>(o: &mut O, weekly: &[O::V], counts: &[u64]) -> O::V {
    let terms: Vec<O::V> = counts
        .iter()
        .zip(weekly)
        .map(|(&c, &h)| {
            let h = o.max_const(h, RATE_FLOOR);
            let lh = o.ln(h);
            let c = c as f64;
            let a = o.affine(lh, c, -ln_gamma(c + 1.0));
            o.sub(a, h)
        })
        .collect();
    o.sum(&terms)
}

/// Poisson log-likelihood of weekly counts given weekly means, with means
/// floored at [`RATE_FLOOR`].
pub fn poisson_log_lik(counts: &[u64], weekly: &[f64]) -> f64 {
    log_lik_with(&mut Plain, weekly, counts)
}

fn hj_term_with<O: Ops>(o: &mut O, weekly: &[O::V], spec: &PosteriorSpec) -> O::V {
    let joint = spec.hj_joint.as_ref().expect("chimeric spec has a joint");
    let peak = weekly
        .iter()
        .copied()
        .reduce(|a, b| o.max(a, b))
        .expect("season has weeks");
    let scaled = o.scale(peak, spec.peak_temperature);
    let temperature = o.max_const(scaled, TEMPERATURE_FLOOR);
    let (tau, rho) = soft_peak_with(o, weekly, temperature);
    let (v, dt, dh) = joint.log_pdf_with_grad(o.val(tau), o.val(rho));
    let term = o.custom(v, &[tau, rho], &[dt, dh]);
    o.add_const(term, spec.omega)
}

/// Poisson log-likelihood of the observed weeks given `theta`.
pub fn log_likelihood(theta: &ModelParams, obs: &HospSeries, config: &ModelConfig) -> Result<f64> {
    config.validate()?;
    if theta.rw_increments.len() != config.season_weeks {
        return Err(Error::Config("random-walk length does not match the season".into()));
    }
    if obs.len() > config.season_weeks {
        return Err(Error::Config("more observations than season weeks".into()));
    }
    let mut o = Plain;
    let th = Theta::from_params(&mut o, theta);
    let traj = simulate_with(&mut o, &th, config);
    let weekly = weekly_with(&mut o, &traj.h);
    Ok(log_lik_with(&mut o, &weekly, obs.counts()))
}

/// Log posterior (up to a constant) in the natural parameterization.
pub fn log_posterior(spec: &PosteriorSpec, theta: &ModelParams) -> f64 {
    let prior = log_prior(theta, &spec.config);
    if !prior.is_finite() {
        return f64::NEG_INFINITY;
    }
    let mut o = Plain;
    let th = Theta::from_params(&mut o, theta);
    let traj = simulate_with(&mut o, &th, &spec.config);
    let weekly = weekly_with(&mut o, &traj.h);
    let mut total = prior + log_lik_with(&mut o, &weekly, spec.obs.counts());
    if spec.kind == ModelKind::Chimeric {
        total += hj_term_with(&mut o, &weekly, spec);
    }
    total
}

/// Map between parameters and the unconstrained coordinates the sampler
/// moves in.
///
/// `R` is carried as `v = ln R + ln alpha - ((d - mu) / sigma)^2 / 2`, the log
/// of the deterministic effective reproduction number at a reference day `d`
/// inside the observed window. Early data pin `v` down tightly; with `ln R`
/// itself the posterior is a thin curved ridge. The map from `(.., v, ..)` to
/// `(.., ln R, ..)` only shifts `v` by a function of the other coordinates, so
/// its Jacobian is one.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transform {
    pub t_days: f64,
    pub ref_day: f64,
}

struct Mapped<V> {
    theta: Theta<V>,
    log_prior: V,
    log_jacobian: V,
}

impl Transform {
    pub fn new(t_days: f64, ref_day: f64) -> Self {
        Self { t_days, ref_day }
    }

    /// Reference day at the middle of the observed weeks.
    pub fn for_spec(spec: &PosteriorSpec) -> Self {
        Self::new(spec.t_days(), 3.5 * spec.obs.len() as f64)
    }

    fn map<O: Ops>(&self, o: &mut O, u: &[O::V]) -> Mapped<O::V> {
        let ln_pi = PI.ln();
        let mut prior = Vec::with_capacity(u.len() + 12);
        let mut jac = Vec::with_capacity(12);

        // Gamma(1, 1) on x = e^w: prior -x, Jacobian w.
        let gamma = |o: &mut O, w: O::V, prior: &mut Vec<O::V>, jac: &mut Vec<O::V>| {
            let x = o.exp(w);
            prior.push(o.neg(x));
            jac.push(w);
            x
        };
        // x = sigmoid(w): ln x = -softplus(-w), ln(1 - x) = -softplus(w).
        let logit = |o: &mut O, w: O::V, jac: &mut Vec<O::V>| {
            let nw = o.neg(w);
            let a = o.softplus(nw);
            let b = o.softplus(w);
            let ab = o.add(a, b);
            jac.push(o.neg(ab));
            (o.sigmoid(w), ab)
        };

        let beta_g = gamma(o, u[0], &mut prior, &mut jac);
        let beta_e = gamma(o, u[1], &mut prior, &mut jac);

        // Beta(1/2, 1/2): -(ln x + ln(1 - x)) / 2 - ln pi.
        let mut arcsine = |o: &mut O, w: O::V, prior: &mut Vec<O::V>| {
            let (x, ab) = logit(o, w, &mut jac);
            prior.push(o.affine(ab, 0.5, -ln_pi));
            x
        };
        let mu_infections = arcsine(o, u[2], &mut prior);
        let mu_hosps = arcsine(o, u[3], &mut prior);
        let alpha = arcsine(o, u[4], &mut prior);

        // Uniform(0, T) on T sigmoid(w): prior -ln T, Jacobian ln T + ln x + ln(1 - x).
        let t = self.t_days;
        let mut uniform = |o: &mut O, w: O::V, prior: &mut Vec<O::V>| {
            let (x, _) = logit(o, w, &mut jac);
            prior.push(o.cst(-t.ln()));
            jac.push(o.cst(t.ln()));
            o.scale(x, t)
        };
        let mu = uniform(o, u[6], &mut prior);
        let sigma = uniform(o, u[7], &mut prior);

        let neg_alpha = o.neg(u[4]);
        let ln_inv_alpha = o.softplus(neg_alpha);
        let offset = o.affine(mu, -1.0, self.ref_day);
        let standardized = o.div(offset, sigma);
        let sq = o.square(standardized);
        let bump = o.scale(sq, 0.5);
        let shift = o.add(ln_inv_alpha, bump);
        let ln_r = o.add(u[5], shift);
        let r = gamma(o, ln_r, &mut prior, &mut jac);

        // HalfCauchy(1) on e^w: ln(2/pi) - ln(1 + e^{2w}), Jacobian w.
        let s = o.exp(u[8]);
        let two_w = o.scale(u[8], 2.0);
        let sp = o.softplus(two_w);
        prior.push(o.affine(sp, -1.0, (2.0 / PI).ln()));
        jac.push(u[8]);

        let z: Vec<O::V> = u[N_SCALAR..].to_vec();
        let half_ln_2pi = 0.5 * (2.0 * PI).ln();
        for &zk in &z {
            let sq = o.square(zk);
            prior.push(o.affine(sq, -0.5, -half_ln_2pi));
        }
        Mapped {
            theta: Theta {
                beta_g,
                beta_e,
                mu_infections,
                mu_hosps,
                alpha,
                r,
                mu,
                sigma,
                s,
                z,
            },
            log_prior: o.sum(&prior),
            log_jacobian: o.sum(&jac),
        }
    }

    pub fn constrain(&self, u: &[f64]) -> ModelParams {
        let th = self.map(&mut Plain, u).theta;
        ModelParams {
            beta_g: th.beta_g,
            beta_e: th.beta_e,
            mu_infections: th.mu_infections,
            mu_hosps: th.mu_hosps,
            alpha: th.alpha,
            r: th.r,
            mu: th.mu,
            sigma: th.sigma,
            s: th.s,
            rw_increments: th.z,
        }
    }

    /// Inverse of [`Transform::constrain`]; fails outside the prior support.
    pub fn unconstrain(&self, p: &ModelParams) -> Result<Vec<f64>> {
        if let Some(msg) = p.support_violation(self.t_days) {
            return Err(Error::Initialization(msg));
        }
        let logit = |x: f64| (x / (1.0 - x)).ln();
        let bump = 0.5 * ((self.ref_day - p.mu) / p.sigma).powi(2);
        let mut u = vec![
            p.beta_g.ln(),
            p.beta_e.ln(),
            logit(p.mu_infections),
            logit(p.mu_hosps),
            logit(p.alpha),
            p.r.ln() + p.alpha.ln() - bump,
            logit(p.mu / self.t_days),
            logit(p.sigma / self.t_days),
            p.s.ln(),
        ];
        u.extend_from_slice(&p.rw_increments);
        if u.iter().any(|v| !v.is_finite()) {
            return Err(Error::Initialization("parameters sit on the support boundary".into()));
        }
        Ok(u)
    }

    /// Log-determinant of the Jacobian of [`Transform::constrain`].
    pub fn log_jacobian(&self, u: &[f64]) -> f64 {
        self.map(&mut Plain, u).log_jacobian
    }
}

/// What a [`PosteriorTarget`] evaluates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Objective {
    /// Posterior density of the unconstrained coordinates (includes the Jacobian).
    Sampling,
    /// Posterior density of the parameters, as a function of the coordinates.
    LogPosterior,
}

fn target_with<O: Ops>(o: &mut O, spec: &PosteriorSpec, tr: &Transform, objective: Objective, u: &[O::V]) -> O::V {
    let mapped = tr.map(o, u);
    // The control likelihood only sees the observed weeks.
    let weeks = match spec.kind {
        ModelKind::Control => spec.obs.len(),
        ModelKind::Chimeric => spec.config.season_weeks,
    };
    let weekly = weekly_hosps_with(o, &mapped.theta, &spec.config, weeks);
    let ll = log_lik_with(o, &weekly, spec.obs.counts());
    let mut total = o.add(mapped.log_prior, ll);
    if objective == Objective::Sampling {
        total = o.add(total, mapped.log_jacobian);
    }
    if spec.kind == ModelKind::Chimeric {
        let hj = hj_term_with(o, &weekly, spec);
        total = o.add(total, hj);
    }
    total
}

/// A log density with gradients, as consumed by the sampler.
pub trait LogDensity: Sync {
    fn dim(&self) -> usize;
    fn log_density(&self, x: &[f64]) -> f64;
    /// Log density, writing its gradient into `grad`.
    fn log_density_grad(&self, x: &[f64], grad: &mut [f64]) -> f64;
}

thread_local! {
    static TAPE: RefCell<Tape> = RefCell::new(Tape::new());
}

/// The posterior of a [`PosteriorSpec`] in unconstrained coordinates.
#[derive(Debug, Clone)]
pub struct PosteriorTarget<'a> {
    pub spec: &'a PosteriorSpec,
    pub transform: Transform,
    pub objective: Objective,
}

impl<'a> PosteriorTarget<'a> {
    pub fn new(spec: &'a PosteriorSpec) -> Self {
        Self::with_objective(spec, Objective::Sampling)
    }

    pub fn with_objective(spec: &'a PosteriorSpec, objective: Objective) -> Self {
        Self {
            spec,
            transform: Transform::for_spec(spec),
            objective,
        }
    }
}

impl LogDensity for PosteriorTarget<'_> {
    fn dim(&self) -> usize {
        self.spec.dim()
    }

    fn log_density(&self, u: &[f64]) -> f64 {
        let v = target_with(&mut Plain, self.spec, &self.transform, self.objective, u);
        if v.is_nan() {
            f64::NEG_INFINITY
        } else {
            v
        }
    }

    fn log_density_grad(&self, u: &[f64], grad: &mut [f64]) -> f64 {
        TAPE.with(|cell| {
            let mut tape = cell.borrow_mut();
            tape.clear();
            let vars: Vec<Var> = u.iter().map(|&x| tape.input(x)).collect();
            let out = target_with(&mut *tape, self.spec, &self.transform, self.objective, &vars);
            let value = tape.val(out);
            if !value.is_finite() {
                grad.iter_mut().for_each(|g| *g = 0.0);
                return f64::NEG_INFINITY;
            }
            let g = tape.gradient(out, &vars);
            grad.copy_from_slice(&g);
            value
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hj::{joint_independence, Density1D};
    use crate::ts::EpiWeek;

    fn setup(weeks: usize, counts: Vec<u64>) -> (ModelConfig, HospSeries) {
        let start = EpiWeek::new(2023, 40).unwrap();
        let cfg = ModelConfig::new(10_000.0, weeks, start);
        (cfg, HospSeries::new("X", start, counts))
    }

    fn params(weeks: usize) -> ModelParams {
        ModelParams {
            beta_g: 2.0,
            beta_e: 3.0,
            mu_infections: 0.2,
            mu_hosps: 0.3,
            alpha: 0.6,
            r: 2.5,
            mu: 30.0,
            sigma: 12.0,
            s: 0.1,
            rw_increments: (0..weeks).map(|k| 0.1 * k as f64 - 0.3).collect(),
        }
    }

    #[test]
    fn prior_components() {
        let (cfg, _) = setup(8, vec![]);
        let p = params(8);
        let base = log_prior(&p, &cfg);
        let bumped = log_prior(
            &ModelParams {
                beta_g: 4.0,
                ..p.clone()
            },
            &cfg,
        );
        assert!((bumped - base + 2.0).abs() < 1e-12);
        let arcsine = |x: f64| (1.0 / (PI * (x * (1.0 - x)).sqrt())).ln();
        assert!((arcsine(0.5) - (2.0 / PI).ln()).abs() < 1e-15);
        assert!(((2.0 / PI).ln() + 0.4516).abs() < 1e-4);
        let a = log_prior(
            &ModelParams {
                alpha: 0.5,
                ..p.clone()
            },
            &cfg,
        );
        let b = log_prior(
            &ModelParams {
                alpha: 0.25,
                ..p.clone()
            },
            &cfg,
        );
        assert!((a - b - (arcsine(0.5) - arcsine(0.25))).abs() < 1e-12);
        assert_eq!(log_prior(&ModelParams { alpha: 1.2, ..p }, &cfg), f64::NEG_INFINITY);
    }

    #[test]
    fn constrain_roundtrip() {
        let p = params(5);
        let tr = Transform::new(35.0, 10.0);
        let u = tr.unconstrain(&p).unwrap();
        let q = tr.constrain(&u);
        for (a, b) in p.to_vec().iter().zip(q.to_vec()) {
            assert!((a - b).abs() < 1e-10 * a.abs().max(1.0));
        }
        assert!(tr.unconstrain(&ModelParams { alpha: 1.0, ..p }).is_err());
    }

    #[test]
    fn unconstrained_target_adds_jacobian() {
        let (cfg, obs) = setup(5, vec![3, 5, 9]);
        let spec = PosteriorSpec::control(obs, cfg).unwrap();
        let target = PosteriorTarget::new(&spec);
        let tr = target.transform;
        let u = tr.unconstrain(&params(5)).unwrap();
        // Independent log-Jacobian: logs, logits and scaled logits, with the
        // reproduction coordinate contributing ln R.
        let sig = |x: f64| 1.0 / (1.0 + (-x).exp());
        let p = tr.constrain(&u);
        let mut jac = u[0] + u[1] + p.r.ln() + u[8];
        for k in [2, 3, 4, 6, 7] {
            jac += (sig(u[k]) * (1.0 - sig(u[k]))).ln();
        }
        jac += 2.0 * spec.t_days().ln();
        assert!((tr.log_jacobian(&u) - jac).abs() < 1e-10);
        let lp = log_posterior(&spec, &p);
        assert!((target.log_density(&u) - lp - jac).abs() < 1e-8);
        let natural = PosteriorTarget::with_objective(&spec, Objective::LogPosterior);
        assert!((natural.log_density(&u) - lp).abs() < 1e-8);
    }

    #[test]
    fn spec_validation() {
        let (cfg, obs) = setup(5, vec![3, 5, 9]);
        let joint = joint_independence(
            Density1D::uniform(0.0, 6.0).unwrap(),
            Density1D::uniform(0.0, 1e5).unwrap(),
        );
        assert!(PosteriorSpec::new(ModelKind::Chimeric, obs.clone(), cfg.clone(), None).is_err());
        assert!(PosteriorSpec::new(ModelKind::Control, obs.clone(), cfg.clone(), Some(joint)).is_err());
        let long = HospSeries::new("X", cfg.season_start, vec![1; 6]);
        assert!(PosteriorSpec::control(long, cfg).is_err());
    }
}
