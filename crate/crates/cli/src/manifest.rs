use std::collections::BTreeMap;
use std::path::Path;

use chimera_core::io::write_json;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

/// What a run read, how it was seeded and what it wrote. Carries no
/// timestamps, so repeated runs produce the same manifest.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub version: String,
    pub config_sha256: Option<String>,
    pub seeds: BTreeMap<String, u64>,
    pub args: BTreeMap<String, String>,
    /// Input digests keyed by file name.
    pub inputs: BTreeMap<String, String>,
    /// Output digests keyed by path relative to the output directory.
    pub outputs: BTreeMap<String, String>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn digest_file(path: &Path) -> Result<String, CliError> {
    match std::fs::read(path) {
        Ok(bytes) => Ok(sha256_hex(&bytes)),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            Err(chimera_core::Error::FileNotFound(path.display().to_string()).into())
        }
        Err(e) => Err(chimera_core::Error::Io(e).into()),
    }
}

impl Manifest {
    pub fn new(command: &str) -> Self {
        Self {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            ..Self::default()
        }
    }

    pub fn input(&mut self, path: &Path) -> Result<(), CliError> {
        let name = path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| path.display().to_string());
        self.inputs.insert(name, digest_file(path)?);
        Ok(())
    }

    pub fn config(&mut self, path: &Path) -> Result<(), CliError> {
        self.config_sha256 = Some(digest_file(path)?);
        self.input(path)
    }

    pub fn arg(&mut self, key: &str, value: impl ToString) {
        self.args.insert(key.to_string(), value.to_string());
    }

    pub fn output(&mut self, out: &Path, path: &Path) -> Result<(), CliError> {
        let rel = path.strip_prefix(out).unwrap_or(path);
        let key = rel.to_string_lossy().replace('\\', "/");
        self.outputs.insert(key, digest_file(path)?);
        Ok(())
    }

    /// Writes `manifest-<command>.json` into `out`.
    pub fn write(&self, out: &Path) -> Result<(), CliError> {
        write_json(self, &out.join(format!("manifest-{}.json", self.command)))?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_digest() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}
