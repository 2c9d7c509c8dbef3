//! Real-coded genetic algorithm plus gradient refinement.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

/// Settings shared by every optimizer in the crate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerConfig {
    pub population: usize,
    pub generations: usize,
    pub tournament: usize,
    pub elite: usize,
    pub crossover_rate: f64,
    /// Per-coordinate mutation probability.
    pub mutation_rate: f64,
    /// Mutation step as a multiple of the population spread.
    pub mutation_scale: f64,
    /// Iterations of gradient refinement after the genetic search.
    pub local_iters: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            population: 40,
            generations: 60,
            tournament: 3,
            elite: 2,
            crossover_rate: 0.9,
            mutation_rate: 0.2,
            mutation_scale: 0.5,
            local_iters: 400,
            learning_rate: 0.05,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GaResult {
    pub best: Vec<f64>,
    pub best_value: f64,
    /// Best objective after each generation (index 0 is the initial population).
    pub history: Vec<f64>,
}

fn score<F: Fn(&[f64]) -> f64>(f: &F, x: &[f64]) -> f64 {
    let v = f(x);
    if v.is_nan() {
        f64::INFINITY
    } else {
        v
    }
}

/// Minimizes `f` starting from `initial` (padded to the population size by
/// perturbing its members). Elitism keeps the best value non-increasing.
pub fn genetic_minimize<F, R>(f: F, initial: Vec<Vec<f64>>, cfg: &OptimizerConfig, rng: &mut R) -> GaResult
where
    F: Fn(&[f64]) -> f64,
    R: Rng + ?Sized,
{
    assert!(!initial.is_empty(), "genetic search needs a starting point");
    let dim = initial[0].len();
    let size = cfg.population.max(initial.len()).max(2);
    let mut pop = initial;
    while pop.len() < size {
        let base = pop[rng.random_range(0..pop.len())].clone();
        let x = base
            .iter()
            .map(|v| v + cfg.mutation_scale * rng.sample::<f64, _>(StandardNormal))
            .collect();
        pop.push(x);
    }
    let mut fit: Vec<f64> = pop.iter().map(|x| score(&f, x)).collect();
    let best_of = |fit: &[f64]| {
        fit.iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .map(|(k, v)| (k, *v))
            .expect("non-empty")
    };
    let mut history = vec![best_of(&fit).1];

    for _ in 0..cfg.generations {
        let mut order: Vec<usize> = (0..pop.len()).collect();
        order.sort_by(|&a, &b| fit[a].total_cmp(&fit[b]));
        let spread: Vec<f64> = (0..dim)
            .map(|j| {
                let mean = pop.iter().map(|x| x[j]).sum::<f64>() / pop.len() as f64;
                let var = pop.iter().map(|x| (x[j] - mean).powi(2)).sum::<f64>() / pop.len() as f64;
                var.sqrt().max(1e-3)
            })
            .collect();
        let mut next: Vec<Vec<f64>> = order
            .iter()
            .take(cfg.elite.min(size))
            .map(|&k| pop[k].clone())
            .collect();
        let mut next_fit: Vec<f64> = order.iter().take(next.len()).map(|&k| fit[k]).collect();
        while next.len() < size {
            let a = tournament(&fit, cfg.tournament, rng);
            let b = tournament(&fit, cfg.tournament, rng);
            let mut child = pop[a].clone();
            if rng.random::<f64>() < cfg.crossover_rate {
                for j in 0..dim {
                    let u: f64 = rng.random_range(-0.25..1.25);
                    child[j] = pop[a][j] + u * (pop[b][j] - pop[a][j]);
                }
            }
            for j in 0..dim {
                if rng.random::<f64>() < cfg.mutation_rate {
                    let z: f64 = rng.sample(StandardNormal);
                    child[j] += cfg.mutation_scale * spread[j] * z;
                }
            }
            next_fit.push(score(&f, &child));
            next.push(child);
        }
        pop = next;
        fit = next_fit;
        history.push(best_of(&fit).1);
    }
    let (k, v) = best_of(&fit);
    GaResult {
        best: pop[k].clone(),
        best_value: v,
        history,
    }
}

fn tournament<R: Rng + ?Sized>(fit: &[f64], size: usize, rng: &mut R) -> usize {
    let mut best = rng.random_range(0..fit.len());
    for _ in 1..size.max(1) {
        let k = rng.random_range(0..fit.len());
        if fit[k] < fit[best] {
            best = k;
        }
    }
    best
}

/// Adam descent on `fg` (value and gradient), returning the best point seen.
pub fn adam_minimize<F>(fg: F, x0: Vec<f64>, iters: usize, learning_rate: f64) -> (Vec<f64>, f64)
where
    F: Fn(&[f64]) -> (f64, Vec<f64>),
{
    let (b1, b2, eps) = (0.9, 0.999, 1e-8);
    let n = x0.len();
    let mut x = x0;
    let (mut m, mut v) = (vec![0.0; n], vec![0.0; n]);
    let (mut fx, mut g) = fg(&x);
    let (mut best, mut best_val) = (x.clone(), if fx.is_nan() { f64::INFINITY } else { fx });
    for t in 1..=iters {
        if !fx.is_finite() || g.iter().any(|v| !v.is_finite()) {
            break;
        }
        let c1 = 1.0 - b1_pow(b1, t);
        let c2 = 1.0 - b1_pow(b2, t);
        let mut trial = x.clone();
        for j in 0..n {
            m[j] = b1 * m[j] + (1.0 - b1) * g[j];
            v[j] = b2 * v[j] + (1.0 - b2) * g[j] * g[j];
            trial[j] -= learning_rate * (m[j] / c1) / ((v[j] / c2).sqrt() + eps);
        }
        let (ft, gt) = fg(&trial);
        if !ft.is_finite() {
            // Step into an infeasible region: shrink momentum and retry from x.
            m.iter_mut().for_each(|v| *v *= 0.5);
            continue;
        }
        x = trial;
        fx = ft;
        g = gt;
        if fx < best_val {
            best_val = fx;
            best.clone_from(&x);
        }
    }
    (best, best_val)
}

fn b1_pow(b: f64, t: usize) -> f64 {
    b.powi(t.min(i32::MAX as usize) as i32)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rosenbrock(x: &[f64]) -> f64 {
        (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2)
    }

    #[test]
    fn ga_improves_monotonically() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let r = genetic_minimize(rosenbrock, vec![vec![-1.5, 2.0]], &OptimizerConfig::default(), &mut rng);
        assert!(r.history.windows(2).all(|w| w[1] <= w[0]));
        assert!(r.best_value < rosenbrock(&[-1.5, 2.0]));
        assert_eq!(r.best_value, *r.history.last().unwrap());
    }

    #[test]
    fn ga_is_reproducible() {
        let cfg = OptimizerConfig::default();
        let run = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            genetic_minimize(rosenbrock, vec![vec![0.0, 0.0]], &cfg, &mut rng).best
        };
        assert_eq!(run(3), run(3));
    }

    #[test]
    fn adam_finds_quadratic_minimum() {
        let fg = |x: &[f64]| {
            let v = (x[0] - 3.0).powi(2) + 2.0 * (x[1] + 1.0).powi(2);
            (v, vec![2.0 * (x[0] - 3.0), 4.0 * (x[1] + 1.0)])
        };
        let (x, v) = adam_minimize(fg, vec![0.0, 0.0], 2000, 0.05);
        assert!(v < 1e-6, "{x:?}");
    }
}
