//! Run manifests: enough to re-execute a command against the same inputs.

use serde::Serialize;
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Serialize)]
pub struct InputDigest {
    pub path: PathBuf,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest<'a, C: Serialize> {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'a str,
    pub seed: Option<u64>,
    pub config: &'a C,
    pub inputs: Vec<InputDigest>,
}

pub fn digest_file(path: &Path) -> std::io::Result<InputDigest> {
    let bytes = std::fs::read(path)?;
    Ok(InputDigest {
        path: path.to_path_buf(),
        sha256: hex::encode(Sha256::digest(&bytes)),
    })
}

pub fn write_manifest<C: Serialize>(
    dir: &Path,
    command: &str,
    seed: Option<u64>,
    config: &C,
    inputs: &[&Path],
) -> std::io::Result<PathBuf> {
    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        command,
        seed,
        config,
        inputs: inputs
            .iter()
            .filter(|p| p.is_file())
            .map(|p| digest_file(p))
            .collect::<std::io::Result<_>>()?,
    };
    let path = dir.join(format!("{command}.manifest.json"));
    let mut bytes = serde_json::to_vec_pretty(&manifest).map_err(std::io::Error::other)?;
    bytes.push(b'\n');
    crate::jsonl::write_atomic(&path, &bytes)?;
    Ok(path)
}
