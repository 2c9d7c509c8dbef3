//! Bayesian fitting of the control and chimeric models.

mod diagnostics;
mod nuts;
mod posterior;

pub use diagnostics::{effective_sample_size, split_rhat};
pub use nuts::{sample_nuts, ChainOutput, MetricKind, SamplerConfig};
pub use posterior::{
    log_likelihood, log_posterior, log_prior, poisson_log_lik, LogDensity, ModelKind, Objective, PosteriorSpec,
    PosteriorTarget, Transform, DEFAULT_PEAK_TEMPERATURE, RATE_FLOOR, TEMPERATURE_FLOOR,
};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Cauchy, Exp1, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hj::{empirical_quantiles, QuantileForecast, STANDARD_LEVELS};
use crate::model::{hard_peak, poisson_draw, weekly_latent, ModelConfig, ModelParams};
use crate::optim::{adam_minimize, genetic_minimize, OptimizerConfig};

/// Fraction of divergent transitions above which a fit is flagged.
pub const DIVERGENCE_FLAG: f64 = 0.1;
/// Number of prior draws seeding the initial search.
pub const PRIOR_CANDIDATES: usize = 100;

/// One draw from the prior.
pub fn prior_draw<R: Rng + ?Sized>(config: &ModelConfig, rng: &mut R) -> ModelParams {
    let t = config.t_days() as f64;
    let arcsine = Beta::new(0.5, 0.5).expect("valid beta");
    // Clamp away from the boundary so the draw has a finite log density.
    let unit = |rng: &mut R| rng.sample::<f64, _>(arcsine).clamp(1e-12, 1.0 - 1e-12);
    let positive = |rng: &mut R| rng.sample::<f64, _>(Exp1).max(1e-300);
    let open = |rng: &mut R| rng.random_range(1e-9..1.0) * t;
    ModelParams {
        beta_g: positive(rng),
        beta_e: positive(rng),
        mu_infections: unit(rng),
        mu_hosps: unit(rng),
        alpha: unit(rng),
        r: positive(rng),
        mu: open(rng),
        sigma: open(rng),
        s: rng
            .sample::<f64, _>(Cauchy::new(0.0, 1.0).expect("valid cauchy"))
            .abs()
            .max(1e-300),
        rw_increments: (0..config.season_weeks)
            .map(|_| rng.sample::<f64, _>(StandardNormal))
            .collect(),
    }
}

/// Finds a starting point: a genetic search seeded with prior draws, then
/// Adam refinement, both on the density of the unconstrained coordinates.
/// The natural-space posterior is unbounded at the edges of the arcsine
/// priors, so searching it directly would run into the boundary. The result
/// is never worse in natural-space posterior than the best prior draw.
pub fn ga_initialize(spec: &PosteriorSpec, cfg: &OptimizerConfig, seed: u64) -> Result<ModelParams> {
    let tr = Transform::for_spec(spec);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draws: Vec<ModelParams> = (0..PRIOR_CANDIDATES)
        .map(|_| prior_draw(&spec.config, &mut rng))
        .collect();
    let mut candidates: Vec<Vec<f64>> = draws.iter().filter_map(|d| tr.unconstrain(d).ok()).collect();
    if spec.kind == ModelKind::Chimeric {
        // The chimeric density vanishes outside the crowd's support, where
        // most prior draws land and the search has nothing to climb. The
        // control optimum is usually close to the bulk.
        let control = PosteriorSpec::control(spec.obs.clone(), spec.config.clone())?;
        if let Ok(u) = tr.unconstrain(&ga_initialize(&control, cfg, seed)?) {
            candidates.push(u);
        }
    }
    if candidates.is_empty() {
        return Err(Error::Initialization("no usable prior draws".into()));
    }
    let target = PosteriorTarget::with_objective(spec, Objective::Sampling);
    let objective = |u: &[f64]| {
        let v = -target.log_density(u);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };
    let ga = genetic_minimize(objective, candidates, cfg, &mut rng);
    if !ga.best_value.is_finite() {
        return Err(Error::Initialization(
            "no candidate has a finite posterior density".into(),
        ));
    }
    let fg = |u: &[f64]| {
        let mut g = vec![0.0; u.len()];
        let v = target.log_density_grad(u, &mut g);
        g.iter_mut().for_each(|x| *x = -*x);
        (-v, g)
    };
    let (best, value) = adam_minimize(fg, ga.best.clone(), cfg.local_iters, cfg.learning_rate);
    let best = tr.constrain(if value.is_finite() && value <= ga.best_value {
        &best
    } else {
        &ga.best
    });
    let nlp = |p: &ModelParams| -log_posterior(spec, p);
    let fallback = draws
        .iter()
        .filter(|d| tr.unconstrain(d).is_ok())
        .min_by(|a, b| nlp(a).total_cmp(&nlp(b)))
        .expect("at least one candidate");
    Ok(if nlp(&best) <= nlp(fallback) {
        best
    } else {
        fallback.clone()
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub rhat: Vec<f64>,
    pub ess: Vec<f64>,
    pub divergences: usize,
    pub divergence_rate: f64,
    /// Set when the divergence rate exceeds [`DIVERGENCE_FLAG`].
    pub flagged: bool,
    pub step_sizes: Vec<f64>,
    pub mean_accept: f64,
    pub mean_tree_depth: f64,
}

impl Diagnostics {
    pub fn max_rhat(&self) -> f64 {
        self.rhat.iter().copied().fold(f64::NAN, f64::max)
    }

    pub fn min_ess(&self) -> f64 {
        self.ess.iter().copied().fold(f64::NAN, f64::min)
    }
}

/// Posterior draws in the natural parameterization, stored chain by chain.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorSamples {
    pub names: Vec<String>,
    pub chains: usize,
    /// One row per draw; rows of chain `c` are `c * per_chain .. (c + 1) * per_chain`.
    pub draws: Vec<Vec<f64>>,
    pub seed: u64,
    pub diagnostics: Diagnostics,
}

impl PosteriorSamples {
    pub fn len(&self) -> usize {
        self.draws.len()
    }

    pub fn is_empty(&self) -> bool {
        self.draws.is_empty()
    }

    pub fn per_chain(&self) -> usize {
        self.draws.len() / self.chains.max(1)
    }

    pub fn params(&self, k: usize) -> ModelParams {
        ModelParams::from_slice(&self.draws[k]).expect("draw width matches the parameter layout")
    }

    /// Draws of one coordinate, split by chain.
    pub fn column_by_chain(&self, j: usize) -> Vec<Vec<f64>> {
        self.draws
            .chunks(self.per_chain().max(1))
            .map(|c| c.iter().map(|d| d[j]).collect())
            .collect()
    }
}

fn summarize(chains: &[ChainOutput], natural: &[Vec<Vec<f64>>]) -> Diagnostics {
    let dim = natural.first().and_then(|c| c.first()).map_or(0, Vec::len);
    let mut rhat = Vec::with_capacity(dim);
    let mut ess = Vec::with_capacity(dim);
    for j in 0..dim {
        let cols: Vec<Vec<f64>> = natural.iter().map(|c| c.iter().map(|d| d[j]).collect()).collect();
        let refs: Vec<&[f64]> = cols.iter().map(Vec::as_slice).collect();
        rhat.push(split_rhat(&refs));
        ess.push(effective_sample_size(&refs));
    }
    let total: usize = chains.iter().map(|c| c.divergent.len()).sum();
    let divergences = chains.iter().flat_map(|c| &c.divergent).filter(|d| **d).count();
    let divergence_rate = divergences as f64 / total.max(1) as f64;
    let mean_of = |f: &dyn Fn(&ChainOutput) -> f64| chains.iter().map(f).sum::<f64>() / chains.len() as f64;
    Diagnostics {
        rhat,
        ess,
        divergences,
        divergence_rate,
        flagged: divergence_rate > DIVERGENCE_FLAG,
        step_sizes: chains.iter().map(|c| c.step_size).collect(),
        mean_accept: mean_of(&|c| c.accept_stat.iter().sum::<f64>() / c.accept_stat.len() as f64),
        mean_tree_depth: mean_of(&|c| c.tree_depth.iter().sum::<usize>() as f64 / c.tree_depth.len() as f64),
    }
}

/// Samples the posterior with NUTS, starting every chain near `init`.
pub fn sample(spec: &PosteriorSpec, init: &ModelParams, cfg: &SamplerConfig) -> Result<PosteriorSamples> {
    let target = PosteriorTarget::new(spec);
    let u0 = target.transform.unconstrain(init)?;
    let chains = sample_nuts(&target, &u0, cfg)?;
    let natural: Vec<Vec<Vec<f64>>> = chains
        .iter()
        .map(|c| c.draws.iter().map(|u| target.transform.constrain(u).to_vec()).collect())
        .collect();
    let diagnostics = summarize(&chains, &natural);
    if diagnostics.flagged {
        log::warn!(
            "{} of {} transitions diverged",
            diagnostics.divergences,
            cfg.chains * cfg.draws
        );
    }
    Ok(PosteriorSamples {
        names: spec.names(),
        chains: cfg.chains,
        draws: natural.into_iter().flatten().collect(),
        seed: cfg.seed,
        diagnostics,
    })
}

fn latent_paths(samples: &PosteriorSamples, config: &ModelConfig) -> Result<Vec<Vec<f64>>> {
    if samples.is_empty() {
        return Err(Error::Empty("posterior samples"));
    }
    (0..samples.len())
        .into_par_iter()
        .map(|k| weekly_latent(&samples.params(k), config))
        .collect()
}

/// Quantile forecasts of observed counts `h` weeks past the last observation.
pub fn posterior_predictive(
    samples: &PosteriorSamples,
    spec: &PosteriorSpec,
    horizons: &[usize],
) -> Result<Vec<QuantileForecast>> {
    let observed = spec.obs.len();
    let season = spec.config.season_weeks;
    if let Some(&h) = horizons.iter().find(|&&h| h == 0 || observed + h > season) {
        return Err(Error::HorizonBeyondSeason {
            horizon: h,
            observed,
            season_weeks: season,
        });
    }
    let paths = latent_paths(samples, &spec.config)?;
    let mut rng = ChaCha8Rng::seed_from_u64(samples.seed ^ 0x5eed_f0ca);
    horizons
        .iter()
        .map(|&h| {
            let idx = observed + h - 1;
            let draws: Vec<f64> = paths.iter().map(|p| poisson_draw(&mut rng, p[idx]) as f64).collect();
            empirical_quantiles(&draws, &STANDARD_LEVELS)
        })
        .collect()
}

/// Quantile forecasts of the peak week (1-based season week) and peak
/// intensity of the latent weekly trajectory.
pub fn peak_forecast(samples: &PosteriorSamples, spec: &PosteriorSpec) -> Result<(QuantileForecast, QuantileForecast)> {
    let paths = latent_paths(samples, &spec.config)?;
    let (weeks, heights): (Vec<f64>, Vec<f64>) = paths
        .iter()
        .filter_map(|p| hard_peak(p).map(|(w, h)| (w as f64, h)))
        .unzip();
    Ok((
        empirical_quantiles(&weeks, &STANDARD_LEVELS)?,
        empirical_quantiles(&heights, &STANDARD_LEVELS)?,
    ))
}
