//! Atomic output files and the run manifest.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::CliError;

pub const MANIFEST_NAME: &str = "manifest.json";

/// One emitted file, relative to the output directory.
pub struct Artifact {
    pub name: String,
    pub bytes: Vec<u8>,
}

impl Artifact {
    pub fn json<T: Serialize>(name: &str, value: &T) -> Artifact {
        let mut s = serde_json::to_string_pretty(value).expect("report serializes");
        s.push('\n');
        Artifact { name: name.to_string(), bytes: s.into_bytes() }
    }

    pub fn text(name: &str, text: String) -> Artifact {
        Artifact { name: name.to_string(), bytes: text.into_bytes() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    pub file: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub artifact_version: String,
    pub command: String,
    pub config: RunConfig,
    pub threads: usize,
    pub seed: u64,
    pub wall_time_seconds: f64,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn digest_file(path: &Path, label: &str) -> Result<FileDigest, CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    Ok(FileDigest { file: label.to_string(), sha256: sha256_hex(&bytes), bytes: bytes.len() as u64 })
}

/// Write through a temporary file in the same directory, then rename.
pub fn write_atomic(dir: &Path, name: &str, bytes: &[u8]) -> Result<(), CliError> {
    let io = |e: std::io::Error| CliError::Io(format!("{}: {e}", dir.join(name).display()));
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io)?;
    tmp.write_all(bytes).map_err(io)?;
    tmp.as_file().sync_all().map_err(io)?;
    tmp.persist(dir.join(name)).map_err(|e| io(e.error))?;
    Ok(())
}

/// Write every artifact and a manifest listing their digests.
pub fn write_outputs(dir: &Path, artifacts: &[Artifact], mut manifest: RunManifest) -> Result<RunManifest, CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    manifest.outputs.clear();
    for a in artifacts {
        if a.name == MANIFEST_NAME {
            return Err(CliError::Io(format!("artifact name {MANIFEST_NAME} is reserved")));
        }
        write_atomic(dir, &a.name, &a.bytes)?;
        manifest.outputs.push(FileDigest { file: a.name.clone(), sha256: sha256_hex(&a.bytes), bytes: a.bytes.len() as u64 });
    }
    let m = Artifact::json(MANIFEST_NAME, &manifest);
    write_atomic(dir, MANIFEST_NAME, &m.bytes)?;
    Ok(manifest)
}
