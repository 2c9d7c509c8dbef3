//! Convergence diagnostics over multiple chains.

/// Splits every chain in half, dropping a middle draw when the length is odd.
fn split(chains: &[&[f64]]) -> Vec<Vec<f64>> {
    chains
        .iter()
        .flat_map(|c| {
            let half = c.len() / 2;
            [c[..half].to_vec(), c[c.len() - half..].to_vec()]
        })
        .collect()
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

/// Within-chain variance and the pooled variance estimate.
fn variances(chains: &[Vec<f64>]) -> (f64, f64) {
    let n = chains[0].len() as f64;
    let w = chains.iter().map(|c| variance(c)).sum::<f64>() / chains.len() as f64;
    let means: Vec<f64> = chains.iter().map(|c| mean(c)).collect();
    let b_over_n = if chains.len() > 1 { variance(&means) } else { 0.0 };
    (w, (n - 1.0) / n * w + b_over_n)
}

/// Split potential scale reduction factor; NaN when chains are too short.
pub fn split_rhat(chains: &[&[f64]]) -> f64 {
    let parts = split(chains);
    if parts.is_empty() || parts[0].len() < 2 {
        return f64::NAN;
    }
    let (w, var_plus) = variances(&parts);
    if w == 0.0 {
        return if var_plus == 0.0 { 1.0 } else { f64::INFINITY };
    }
    (var_plus / w).sqrt()
}

fn autocovariance(xs: &[f64], lag: usize) -> f64 {
    let m = mean(xs);
    let n = xs.len();
    (0..n - lag).map(|t| (xs[t] - m) * (xs[t + lag] - m)).sum::<f64>() / n as f64
}

/// Bulk effective sample size from split chains using Geyer's initial
/// monotone sequence on the combined autocorrelations.
pub fn effective_sample_size(chains: &[&[f64]]) -> f64 {
    let parts = split(chains);
    if parts.is_empty() || parts[0].len() < 4 {
        return f64::NAN;
    }
    let m = parts.len() as f64;
    let n = parts[0].len();
    let (w, var_plus) = variances(&parts);
    if var_plus == 0.0 {
        return m * n as f64;
    }
    let rho = |lag: usize| {
        let acov = parts.iter().map(|c| autocovariance(c, lag)).sum::<f64>() / m;
        // Each chain's lag-0 autocovariance uses 1/n; rescale to the
        // unbiased within variance before combining.
        let w_biased = w * (n as f64 - 1.0) / n as f64;
        1.0 - (w_biased - acov) / var_plus
    };
    let mut tau = -1.0;
    let mut prev_pair = f64::INFINITY;
    let mut t = 0;
    while t + 1 < n {
        let pair = rho(t) + rho(t + 1);
        if pair < 0.0 {
            break;
        }
        let pair = pair.min(prev_pair);
        tau += 2.0 * pair;
        prev_pair = pair;
        t += 2;
    }
    let tau = tau.max(1.0 / (m * n as f64).log10().max(1.0));
    m * n as f64 / tau
}
