//! Posterior draws as a tab-separated table plus a JSON sidecar holding
//! names, layout, seed and diagnostics.

use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::{Diagnostics, PosteriorSamples};

const FORMAT: u32 = 1;

/// `draws.tsv` -> `draws.tsv.json`.
pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

fn to_opt(v: &[f64]) -> Vec<Option<f64>> {
    v.iter().map(|x| x.is_finite().then_some(*x)).collect()
}

fn from_opt(v: &[Option<f64>]) -> Vec<f64> {
    v.iter().map(|x| x.unwrap_or(f64::NAN)).collect()
}

/// Diagnostics with non-finite values stored as null.
#[derive(Serialize, Deserialize)]
struct StoredDiagnostics {
    rhat: Vec<Option<f64>>,
    ess: Vec<Option<f64>>,
    divergences: usize,
    divergence_rate: f64,
    flagged: bool,
    step_sizes: Vec<Option<f64>>,
    mean_accept: Option<f64>,
    mean_tree_depth: Option<f64>,
}

#[derive(Serialize, Deserialize)]
struct Sidecar {
    format: u32,
    names: Vec<String>,
    chains: usize,
    draws_per_chain: usize,
    seed: u64,
    diagnostics: StoredDiagnostics,
}

pub fn save_samples(samples: &PosteriorSamples, path: &Path) -> Result<()> {
    let per_chain = samples.per_chain();
    let mut w = super::create(path)?;
    write!(w, "chain\tdraw")?;
    for n in &samples.names {
        write!(w, "\t{n}")?;
    }
    writeln!(w)?;
    for (k, row) in samples.draws.iter().enumerate() {
        write!(w, "{}\t{}", k / per_chain.max(1), k % per_chain.max(1))?;
        for x in row {
            write!(w, "\t{x}")?;
        }
        writeln!(w)?;
    }
    w.flush()?;
    let d = &samples.diagnostics;
    let sidecar = Sidecar {
        format: FORMAT,
        names: samples.names.clone(),
        chains: samples.chains,
        draws_per_chain: per_chain,
        seed: samples.seed,
        diagnostics: StoredDiagnostics {
            rhat: to_opt(&d.rhat),
            ess: to_opt(&d.ess),
            divergences: d.divergences,
            divergence_rate: d.divergence_rate,
            flagged: d.flagged,
            step_sizes: to_opt(&d.step_sizes),
            mean_accept: d.mean_accept.is_finite().then_some(d.mean_accept),
            mean_tree_depth: d.mean_tree_depth.is_finite().then_some(d.mean_tree_depth),
        },
    };
    super::write_json(&sidecar, &sidecar_path(path))
}

pub fn load_samples(path: &Path) -> Result<PosteriorSamples> {
    let sidecar: Sidecar = super::read_json(&sidecar_path(path)).map_err(|e| match e {
        Error::Json(j) => Error::Schema(format!("samples sidecar: {j}")),
        other => other,
    })?;
    if sidecar.format != FORMAT {
        return Err(Error::Schema(format!("unsupported samples format {}", sidecar.format)));
    }
    let mut lines = super::open(path)?.lines();
    let header = lines
        .next()
        .transpose()?
        .ok_or_else(|| Error::Schema("empty samples file".into()))?;
    let cols: Vec<&str> = header.split('\t').collect();
    if cols.len() < 2 || cols[0] != "chain" || cols[1] != "draw" || cols[2..] != sidecar.names[..] {
        return Err(Error::Schema("samples header does not match the sidecar names".into()));
    }
    let width = sidecar.names.len();
    let mut draws = Vec::with_capacity(sidecar.chains * sidecar.draws_per_chain);
    for (k, line) in lines.enumerate() {
        let line = line?;
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != width + 2 {
            return Err(Error::Schema(format!(
                "draw row {} has {} columns, expected {}",
                k + 1,
                fields.len(),
                width + 2
            )));
        }
        let row = fields[2..]
            .iter()
            .map(|f| f.parse::<f64>())
            .collect::<std::result::Result<Vec<f64>, _>>()
            .map_err(|_| Error::Schema(format!("draw row {} has a non-numeric value", k + 1)))?;
        draws.push(row);
    }
    let expected = sidecar.chains * sidecar.draws_per_chain;
    if draws.len() != expected {
        return Err(Error::Schema(format!(
            "{} draws on disk, sidecar declares {expected}",
            draws.len()
        )));
    }
    if draws.is_empty() {
        return Err(Error::Empty("posterior samples"));
    }
    let d = sidecar.diagnostics;
    Ok(PosteriorSamples {
        names: sidecar.names,
        chains: sidecar.chains,
        draws,
        seed: sidecar.seed,
        diagnostics: Diagnostics {
            rhat: from_opt(&d.rhat),
            ess: from_opt(&d.ess),
            divergences: d.divergences,
            divergence_rate: d.divergence_rate,
            flagged: d.flagged,
            step_sizes: from_opt(&d.step_sizes),
            mean_accept: d.mean_accept.unwrap_or(f64::NAN),
            mean_tree_depth: d.mean_tree_depth.unwrap_or(f64::NAN),
        },
    })
}
