//! No-U-turn sampler with multinomial trajectory sampling, dual-averaging
//! step size and windowed diagonal mass-matrix adaptation.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::posterior::LogDensity;
use crate::error::{Error, Result};

/// Energy error beyond which a transition counts as divergent.
const MAX_ENERGY_ERROR: f64 = 1000.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplerConfig {
    pub chains: usize,
    pub warmup: usize,
    pub draws: usize,
    pub seed: u64,
    pub target_accept: f64,
    pub max_tree_depth: usize,
    /// Half-width of the uniform jitter applied to each chain's start.
    pub init_jitter: f64,
    pub metric: MetricKind,
}

/// Shape of the adapted mass matrix.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    Diagonal,
    #[default]
    Dense,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            chains: 4,
            warmup: 1000,
            draws: 1000,
            seed: 1,
            target_accept: 0.8,
            max_tree_depth: 10,
            init_jitter: 0.1,
            metric: MetricKind::Dense,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.chains == 0 || self.draws == 0 {
            return Err(Error::Config("need at least one chain and one draw".into()));
        }
        if !(self.target_accept > 0.0 && self.target_accept < 1.0) {
            return Err(Error::Config(format!(
                "target_accept {} is not in (0, 1)",
                self.target_accept
            )));
        }
        if self.max_tree_depth == 0 {
            return Err(Error::Config("max_tree_depth must be positive".into()));
        }
        Ok(())
    }
}

/// Post-warmup draws and per-transition statistics of one chain.
#[derive(Debug, Clone)]
pub struct ChainOutput {
    pub draws: Vec<Vec<f64>>,
    pub divergent: Vec<bool>,
    pub accept_stat: Vec<f64>,
    pub tree_depth: Vec<usize>,
    pub step_size: f64,
    /// Diagonal of the adapted inverse mass matrix.
    pub inv_mass: Vec<f64>,
}

/// Inverse mass matrix, with the Cholesky factor used to draw momenta.
#[derive(Debug, Clone)]
enum Metric {
    Diagonal(Vec<f64>),
    Dense { cov: DMatrix<f64>, chol: DMatrix<f64> },
}

impl Metric {
    fn velocity(&self, p: &[f64]) -> Vec<f64> {
        match self {
            Metric::Diagonal(m) => p.iter().zip(m).map(|(p, m)| p * m).collect(),
            Metric::Dense { cov, .. } => (cov * DVector::from_column_slice(p)).as_slice().to_vec(),
        }
    }

    fn kinetic(&self, p: &[f64]) -> f64 {
        0.5 * dot(p, &self.velocity(p))
    }

    /// Momentum with covariance equal to the mass matrix.
    fn momentum<R: Rng>(&self, rng: &mut R) -> Vec<f64> {
        match self {
            Metric::Diagonal(m) => m
                .iter()
                .map(|m| rng.sample::<f64, _>(StandardNormal) / m.sqrt())
                .collect(),
            Metric::Dense { chol, .. } => {
                let z = DVector::from_fn(chol.nrows(), |_, _| rng.sample::<f64, _>(StandardNormal));
                let p = chol
                    .transpose()
                    .solve_upper_triangular(&z)
                    .expect("Cholesky factor has a positive diagonal");
                p.as_slice().to_vec()
            }
        }
    }

    fn diagonal(&self) -> Vec<f64> {
        match self {
            Metric::Diagonal(m) => m.clone(),
            Metric::Dense { cov, .. } => cov.diagonal().as_slice().to_vec(),
        }
    }

    /// Regularized estimate from `n` warmup draws with running sums.
    fn estimate(kind: MetricKind, n: usize, acc: &Welford) -> Self {
        let nf = n as f64;
        let shrink = nf / (nf + 5.0);
        let ridge = 1e-3 * 5.0 / (nf + 5.0);
        let denom = (nf - 1.0).max(1.0);
        match kind {
            MetricKind::Diagonal => Metric::Diagonal(
                (0..acc.mean.len())
                    .map(|j| shrink * acc.m2[(j, j)] / denom + ridge)
                    .collect(),
            ),
            MetricKind::Dense => {
                let dim = acc.mean.len();
                let cov = &acc.m2 * (shrink / denom) + DMatrix::identity(dim, dim) * ridge;
                match cov.clone().cholesky() {
                    Some(c) => Metric::Dense { chol: c.l(), cov },
                    None => Metric::Diagonal(cov.diagonal().as_slice().to_vec()),
                }
            }
        }
    }
}

/// Running mean and centered cross-products.
struct Welford {
    n: usize,
    mean: Vec<f64>,
    m2: DMatrix<f64>,
}

impl Welford {
    fn new(dim: usize) -> Self {
        Self {
            n: 0,
            mean: vec![0.0; dim],
            m2: DMatrix::zeros(dim, dim),
        }
    }

    fn push(&mut self, x: &[f64], full: bool) {
        self.n += 1;
        let before: Vec<f64> = x.iter().zip(&self.mean).map(|(x, m)| x - m).collect();
        for (m, d) in self.mean.iter_mut().zip(&before) {
            *m += d / self.n as f64;
        }
        let after: Vec<f64> = x.iter().zip(&self.mean).map(|(x, m)| x - m).collect();
        let dim = x.len();
        for i in 0..dim {
            if full {
                for j in 0..dim {
                    self.m2[(i, j)] += before[i] * after[j];
                }
            } else {
                self.m2[(i, i)] += before[i] * after[i];
            }
        }
    }
}

#[derive(Clone)]
struct Point {
    q: Vec<f64>,
    p: Vec<f64>,
    grad: Vec<f64>,
    logp: f64,
}

/// A trajectory segment; `left` and `right` are its ends in time order.
struct Tree {
    left: Point,
    right: Point,
    proposal: Point,
    log_weight: f64,
    rho: Vec<f64>,
    sum_accept: f64,
    n_steps: usize,
    diverging: bool,
    turning: bool,
}

#[derive(Debug, Default, Clone, Copy)]
struct Stats {
    accept: f64,
    depth: usize,
    divergent: bool,
}

struct Hamiltonian<'a, T: LogDensity> {
    target: &'a T,
    metric: Metric,
}

impl<T: LogDensity> Hamiltonian<'_, T> {
    fn energy(&self, pt: &Point) -> f64 {
        -pt.logp + self.metric.kinetic(&pt.p)
    }

    fn point(&self, q: Vec<f64>, p: Vec<f64>) -> Point {
        let mut grad = vec![0.0; q.len()];
        let logp = self.target.log_density_grad(&q, &mut grad);
        Point { q, p, grad, logp }
    }

    fn leapfrog(&self, pt: &Point, eps: f64) -> Point {
        let p_half: Vec<f64> = pt.p.iter().zip(&pt.grad).map(|(p, g)| p + 0.5 * eps * g).collect();
        let v = self.metric.velocity(&p_half);
        let q: Vec<f64> = pt.q.iter().zip(&v).map(|(q, v)| q + eps * v).collect();
        let mut next = self.point(q, p_half);
        if next.logp.is_finite() {
            for (p, g) in next.p.iter_mut().zip(&next.grad) {
                *p += 0.5 * eps * g;
            }
        }
        next
    }

    /// Generalized no-U-turn criterion between two points spanning `rho`.
    fn persists(&self, left: &Point, right: &Point, rho: &[f64]) -> bool {
        dot(&self.metric.velocity(&left.p), rho) > 0.0 && dot(&self.metric.velocity(&right.p), rho) > 0.0
    }

    /// U-turn test for the union of two adjacent segments `a` (earlier in
    /// time) and `b`, including the checks across their junction.
    fn merged_turns(&self, a: (&Point, &Point, &[f64]), b: (&Point, &Point, &[f64])) -> bool {
        let rho = add(a.2, b.2);
        let across_left = add(a.2, &b.0.p);
        let across_right = add(b.2, &a.1.p);
        !(self.persists(a.0, b.1, &rho)
            && self.persists(a.0, b.0, &across_left)
            && self.persists(a.1, b.1, &across_right))
    }

    /// Builds a subtree of `2^depth` leapfrog steps from `start`, going
    /// backwards in time when `eps` is negative.
    fn build<R: Rng>(&self, start: &Point, depth: usize, eps: f64, h0: f64, rng: &mut R) -> Tree {
        if depth == 0 {
            let next = self.leapfrog(start, eps);
            let h = self.energy(&next);
            let err = if h.is_finite() { h - h0 } else { f64::INFINITY };
            return Tree {
                left: next.clone(),
                right: next.clone(),
                rho: next.p.clone(),
                proposal: next,
                log_weight: -err,
                sum_accept: if err.is_finite() { (-err).exp().min(1.0) } else { 0.0 },
                n_steps: 1,
                diverging: err > MAX_ENERGY_ERROR,
                turning: false,
            };
        }
        let first = self.build(start, depth - 1, eps, h0, rng);
        if first.diverging || first.turning {
            return first;
        }
        let edge = if eps > 0.0 { &first.right } else { &first.left };
        let second = self.build(edge, depth - 1, eps, h0, rng);
        let log_weight = log_add_exp(first.log_weight, second.log_weight);
        let sum_accept = first.sum_accept + second.sum_accept;
        let n_steps = first.n_steps + second.n_steps;
        if second.diverging || second.turning {
            return Tree {
                sum_accept,
                n_steps,
                ..second
            };
        }
        let take_second = rng.random::<f64>() < (second.log_weight - log_weight).exp();
        let (a, b) = if eps > 0.0 { (first, second) } else { (second, first) };
        let turning = self.merged_turns((&a.left, &a.right, &a.rho), (&b.left, &b.right, &b.rho));
        let rho = add(&a.rho, &b.rho);
        let proposal = match (take_second, eps > 0.0) {
            (true, true) | (false, false) => b.proposal,
            _ => a.proposal,
        };
        Tree {
            left: a.left,
            right: b.right,
            proposal,
            log_weight,
            rho,
            sum_accept,
            n_steps,
            diverging: false,
            turning,
        }
    }

    fn transition<R: Rng>(&self, current: &Point, eps: f64, max_depth: usize, rng: &mut R) -> (Point, Stats) {
        let p = self.metric.momentum(rng);
        let start = Point { p, ..current.clone() };
        let h0 = self.energy(&start);
        let mut traj = Tree {
            left: start.clone(),
            right: start.clone(),
            rho: start.p.clone(),
            proposal: start,
            log_weight: 0.0,
            sum_accept: 0.0,
            n_steps: 0,
            diverging: false,
            turning: false,
        };
        let mut stats = Stats::default();
        for depth in 0..max_depth {
            stats.depth = depth + 1;
            let forward = rng.random::<bool>();
            let tree = if forward {
                self.build(&traj.right, depth, eps, h0, rng)
            } else {
                self.build(&traj.left, depth, -eps, h0, rng)
            };
            traj.sum_accept += tree.sum_accept;
            traj.n_steps += tree.n_steps;
            if tree.diverging {
                stats.divergent = true;
                break;
            }
            if tree.turning {
                break;
            }
            if rng.random::<f64>() < (tree.log_weight - traj.log_weight).exp() {
                traj.proposal = tree.proposal.clone();
            }
            traj.log_weight = log_add_exp(traj.log_weight, tree.log_weight);
            let turning = if forward {
                self.merged_turns(
                    (&traj.left, &traj.right, &traj.rho),
                    (&tree.left, &tree.right, &tree.rho),
                )
            } else {
                self.merged_turns(
                    (&tree.left, &tree.right, &tree.rho),
                    (&traj.left, &traj.right, &traj.rho),
                )
            };
            traj.rho = add(&traj.rho, &tree.rho);
            if forward {
                traj.right = tree.right;
            } else {
                traj.left = tree.left;
            }
            if turning {
                break;
            }
        }
        stats.accept = if traj.n_steps > 0 {
            traj.sum_accept / traj.n_steps as f64
        } else {
            0.0
        };
        (traj.proposal, stats)
    }

    /// Doubles or halves `eps` until one leapfrog step crosses an
    /// acceptance ratio of one half.
    fn reasonable_step<R: Rng>(&self, current: &Point, mut eps: f64, rng: &mut R) -> f64 {
        let p = self.metric.momentum(rng);
        let start = Point { p, ..current.clone() };
        let h0 = self.energy(&start);
        let log_ratio = |eps: f64| {
            let h = self.energy(&self.leapfrog(&start, eps));
            if h.is_finite() {
                h0 - h
            } else {
                f64::NEG_INFINITY
            }
        };
        let direction = if log_ratio(eps) > 0.5f64.ln() { 1.0 } else { -1.0 };
        for _ in 0..50 {
            let next = eps * 2f64.powf(direction);
            let r = log_ratio(next);
            if direction > 0.0 && !(r > 0.5f64.ln()) {
                break;
            }
            eps = next;
            if direction < 0.0 && r > 0.5f64.ln() {
                break;
            }
        }
        eps
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

struct DualAveraging {
    mu: f64,
    target: f64,
    counter: f64,
    h_bar: f64,
    log_eps: f64,
    log_eps_bar: f64,
}

impl DualAveraging {
    const GAMMA: f64 = 0.05;
    const T0: f64 = 10.0;
    const KAPPA: f64 = 0.75;

    fn new(eps: f64, target: f64) -> Self {
        Self {
            mu: (10.0 * eps).ln(),
            target,
            counter: 0.0,
            h_bar: 0.0,
            log_eps: eps.ln(),
            log_eps_bar: 0.0,
        }
    }

    fn update(&mut self, accept: f64) -> f64 {
        self.counter += 1.0;
        let eta = 1.0 / (self.counter + Self::T0);
        self.h_bar = (1.0 - eta) * self.h_bar + eta * (self.target - accept);
        self.log_eps = self.mu - self.counter.sqrt() / Self::GAMMA * self.h_bar;
        let w = self.counter.powf(-Self::KAPPA);
        self.log_eps_bar = w * self.log_eps + (1.0 - w) * self.log_eps_bar;
        self.log_eps.exp()
    }

    fn final_step(&self) -> f64 {
        self.log_eps_bar.exp()
    }
}

/// Iterations at which the mass-matrix estimate is refreshed, plus the
/// iteration range over which draws are collected for it.
fn metric_windows(warmup: usize) -> (usize, Vec<usize>) {
    if warmup < 20 {
        return (warmup, Vec::new());
    }
    let (mut init, mut term, mut base) = (75, 50, 25);
    if init + term + base > warmup {
        init = warmup * 15 / 100;
        term = warmup / 10;
        base = warmup - init - term;
    }
    let stop = warmup - term;
    let mut ends = Vec::new();
    let (mut start, mut size) = (init, base);
    while start < stop {
        let mut end = start + size;
        if end + 2 * size > stop {
            end = stop;
        }
        ends.push(end);
        start = end;
        size *= 2;
    }
    (init, ends)
}

fn run_chain<T: LogDensity>(target: &T, init: &[f64], cfg: &SamplerConfig, chain: usize) -> Result<ChainOutput> {
    let dim = target.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(chain as u64);
    let mut ham = Hamiltonian {
        target,
        metric: Metric::Diagonal(vec![1.0; dim]),
    };

    let mut current = None;
    for _ in 0..100 {
        let q: Vec<f64> = init
            .iter()
            .map(|x| x + cfg.init_jitter * rng.random_range(-1.0..=1.0))
            .collect();
        let pt = ham.point(q, vec![0.0; dim]);
        if pt.logp.is_finite() && pt.grad.iter().all(|g| g.is_finite()) {
            current = Some(pt);
            break;
        }
    }
    let mut current = match current {
        Some(pt) => pt,
        None => {
            let pt = ham.point(init.to_vec(), vec![0.0; dim]);
            if !pt.logp.is_finite() {
                return Err(Error::Initialization(
                    "log density is not finite at the initial point".into(),
                ));
            }
            pt
        }
    };

    let mut eps = ham.reasonable_step(&current, 1.0, &mut rng);
    let mut da = DualAveraging::new(eps, cfg.target_accept);
    let (window_start, ends) = metric_windows(cfg.warmup);
    let mut acc = Welford::new(dim);
    for it in 0..cfg.warmup {
        let (next, stats) = ham.transition(&current, eps, cfg.max_tree_depth, &mut rng);
        current = next;
        eps = da.update(stats.accept);
        if it >= window_start && ends.last().is_some_and(|&e| it < e) {
            acc.push(&current.q, cfg.metric == MetricKind::Dense);
            if ends.contains(&(it + 1)) {
                ham.metric = Metric::estimate(cfg.metric, acc.n, &acc);
                acc = Welford::new(dim);
                eps = ham.reasonable_step(&current, eps, &mut rng);
                da = DualAveraging::new(eps, cfg.target_accept);
            }
        }
    }
    if cfg.warmup > 0 {
        eps = da.final_step();
    }

    let mut out = ChainOutput {
        draws: Vec::with_capacity(cfg.draws),
        divergent: Vec::with_capacity(cfg.draws),
        accept_stat: Vec::with_capacity(cfg.draws),
        tree_depth: Vec::with_capacity(cfg.draws),
        step_size: eps,
        inv_mass: ham.metric.diagonal(),
    };
    for _ in 0..cfg.draws {
        let (next, stats) = ham.transition(&current, eps, cfg.max_tree_depth, &mut rng);
        current = next;
        out.draws.push(current.q.clone());
        out.divergent.push(stats.divergent);
        out.accept_stat.push(stats.accept);
        out.tree_depth.push(stats.depth);
    }
    Ok(out)
}

/// Runs `cfg.chains` independent chains in parallel from jittered copies of `init`.
pub fn sample_nuts<T: LogDensity>(target: &T, init: &[f64], cfg: &SamplerConfig) -> Result<Vec<ChainOutput>> {
    cfg.validate()?;
    if init.len() != target.dim() {
        return Err(Error::Initialization(format!(
            "initial point has {} coordinates, target has {}",
            init.len(),
            target.dim()
        )));
    }
    (0..cfg.chains)
        .into_par_iter()
        .map(|c| run_chain(target, init, cfg, c))
        .collect()
}
