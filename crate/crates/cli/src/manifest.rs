//! Run manifest: configuration hash, seeds, version and output digests.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};
use crate::formats::write_atomic;

pub const MANIFEST: &str = "manifest.json";
pub const MANIFEST_DIGEST: &str = "manifest.sha256";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutputDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: String,
    pub config_hash: String,
    pub seed: u64,
    pub split_seeds: Vec<u64>,
    pub stays_included: usize,
    pub stays_excluded: usize,
    pub outputs: Vec<OutputDigest>,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

impl Manifest {
    /// Digests the listed outputs (relative to `root`), sorted by path.
    pub fn digest_outputs(root: &Path, paths: &[String]) -> Result<Vec<OutputDigest>> {
        let mut paths = paths.to_vec();
        paths.sort();
        paths.dedup();
        paths
            .into_iter()
            .map(|p| Ok(OutputDigest { sha256: sha256_file(&root.join(&p))?, path: p }))
            .collect()
    }

    /// Writes `manifest.json` and `manifest.sha256`; returns the hash.
    pub fn write(&self, root: &Path) -> Result<String> {
        let mut text = serde_json::to_string_pretty(self).map_err(|e| CliError::Numeric(e.to_string()))?;
        text.push('\n');
        let hash = hex::encode(Sha256::digest(text.as_bytes()));
        write_atomic(&root.join(MANIFEST), text.as_bytes())?;
        write_atomic(&root.join(MANIFEST_DIGEST), format!("{hash}  {MANIFEST}\n").as_bytes())?;
        Ok(hash)
    }
}
