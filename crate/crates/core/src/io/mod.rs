//! Reading and writing the library's file formats.

mod config;
mod hj;
mod hub;
mod samples;
mod scores;
mod truth;

pub use config::{ModelSection, RunConfig};
pub use hj::{load_hj, load_weights, read_hj, write_extension_report, write_hj, HjRecord};
pub use hub::{read_hub_forecast, write_hub_forecast, HubForecast, HubTarget};
pub use samples::{load_samples, save_samples, sidecar_path};
pub use scores::{read_scores, write_marginals, write_rwis_cells, write_scores};
pub use truth::{load_truth, read_truth, write_truth};

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};

pub(crate) fn open(path: &Path) -> Result<BufReader<File>> {
    match File::open(path) {
        Ok(f) => Ok(BufReader::new(f)),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Err(Error::FileNotFound(path.display().to_string())),
        Err(e) => Err(e.into()),
    }
}

pub(crate) fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    Ok(BufWriter::new(File::create(path)?))
}

/// Pretty-printed JSON with a trailing newline.
pub fn write_json<T: Serialize + ?Sized>(value: &T, path: &Path) -> Result<()> {
    use std::io::Write;
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    Ok(serde_json::from_reader(open(path)?)?)
}
