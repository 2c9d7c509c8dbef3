//! Score records and RWIS tables as CSV.

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::scoring::{RwisTable, ScoreRecord};

fn finish<W: Write>(w: csv::Writer<W>) -> Result<()> {
    w.into_inner().map_err(|e| Error::Io(e.into_error()))?.flush()?;
    Ok(())
}

pub fn write_scores(records: &[ScoreRecord], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_writer(super::create(path)?);
    if records.is_empty() {
        w.write_record([
            "model",
            "location",
            "forecast_date",
            "target",
            "horizon",
            "wis",
            "truth",
        ])?;
    }
    for r in records {
        w.serialize(r)?;
    }
    finish(w)
}

pub fn read_scores(path: &Path) -> Result<Vec<ScoreRecord>> {
    let mut rdr = csv::Reader::from_reader(super::open(path)?);
    let mut out = Vec::new();
    for r in rdr.deserialize() {
        let r: ScoreRecord = r?;
        r.validate()?;
        out.push(r);
    }
    Ok(out)
}

/// One row per (weeks from peak, horizon) cell.
pub fn write_rwis_cells(table: &RwisTable, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_writer(super::create(path)?);
    w.write_record(["weeks_from_peak", "horizon", "mean_rwis", "n"])?;
    for c in &table.cells {
        w.write_record([
            c.weeks_from_peak.to_string(),
            c.horizon.to_string(),
            c.mean_rwis.to_string(),
            c.n.to_string(),
        ])?;
    }
    finish(w)
}

/// Both margins and the overall mean, tagged by which margin they belong to.
pub fn write_marginals(table: &RwisTable, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_writer(super::create(path)?);
    w.write_record(["margin", "key", "mean_rwis", "n"])?;
    let tagged = table
        .by_weeks_from_peak
        .iter()
        .map(|m| ("weeks_from_peak", m))
        .chain(table.by_horizon.iter().map(|m| ("horizon", m)))
        .chain(std::iter::once(("overall", &table.overall)));
    for (margin, m) in tagged {
        w.write_record([
            margin.to_string(),
            m.key.to_string(),
            m.mean_rwis.to_string(),
            m.n.to_string(),
        ])?;
    }
    finish(w)
}
