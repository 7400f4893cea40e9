//! Run manifests: enough resolved state to reproduce a command exactly.
//!
//! Every command writes a manifest next to (or inside) its output listing
//! the subcommand, the fully resolved configuration, the seed, a SHA-256
//! digest of every input file, and the paths written. Manifests contain
//! no timestamps or machine state, so re-running a command byte-identically
//! reproduces its manifest too.

use std::fs;
use std::path::Path;

use anyhow::Context;
use serde::Serialize;
use sha2::{Digest, Sha256};

#[derive(Serialize)]
struct InputFile {
    path: String,
    sha256: String,
}

/// Builder for one run's manifest.
#[derive(Serialize)]
pub struct Manifest {
    command: &'static str,
    config: serde_json::Value,
    seed: u64,
    inputs: Vec<InputFile>,
    outputs: Vec<String>,
}

impl Manifest {
    pub fn new(command: &'static str, config: serde_json::Value, seed: u64) -> Self {
        Manifest {
            command,
            config,
            seed,
            inputs: Vec::new(),
            outputs: Vec::new(),
        }
    }

    /// Records an input file along with its content digest.
    pub fn add_input(&mut self, path: &Path) -> anyhow::Result<()> {
        let bytes = fs::read(path).with_context(|| format!("hashing input {}", path.display()))?;
        let digest = Sha256::digest(&bytes);
        let mut sha256 = String::with_capacity(digest.len() * 2);
        for byte in digest {
            sha256.push_str(&format!("{byte:02x}"));
        }
        self.inputs.push(InputFile {
            path: path.display().to_string(),
            sha256,
        });
        Ok(())
    }

    /// Records a file this run wrote.
    pub fn add_output(&mut self, path: &Path) {
        self.outputs.push(path.display().to_string());
    }

    /// Writes the manifest itself (not listed among the outputs).
    pub fn write(&self, path: &Path) -> anyhow::Result<()> {
        treebary::io::write_json(path, self)
            .with_context(|| format!("writing manifest {}", path.display()))?;
        Ok(())
    }
}
