//! Per-directory run manifests and input fingerprints.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use fbvar::data::Dataset;
use fbvar::gibbs::{read_chain, ChainOutput};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const MANIFEST: &str = "manifest.json";
pub const CHAIN_FILE: &str = "chain.bin";
pub const DATASET_FILE: &str = "dataset.json";

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn file_sha256(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(sha256_hex(&bytes))
}

pub fn dataset_fingerprint(ds: &Dataset) -> String {
    sha256_hex(&ds.canonical_bytes())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputFile {
    pub file: String,
    pub sha256: String,
}

/// Everything needed to repeat a run: the config exactly as read, its
/// hash, the seed and the code version. No timestamps, so a repeat run
/// writes the same bytes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub version: String,
    pub config_sha256: String,
    pub seed: u64,
    #[serde(default)]
    pub dataset_sha256: Option<String>,
    #[serde(default)]
    pub chain_sha256: Option<String>,
    pub config: serde_json::Value,
    pub outputs: Vec<OutputFile>,
}

impl Manifest {
    pub fn new<C: Serialize>(command: &str, config: &C, seed: u64) -> Result<Self> {
        let value = serde_json::to_value(config)?;
        let bytes = serde_json::to_vec(&value)?;
        Ok(Self {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            config_sha256: sha256_hex(&bytes),
            seed,
            dataset_sha256: None,
            chain_sha256: None,
            config: value,
            outputs: Vec::new(),
        })
    }

    /// Hashes the listed files (relative to `dir`) and writes the manifest.
    pub fn write(mut self, dir: &Path, files: &[PathBuf]) -> Result<()> {
        let mut outputs = Vec::with_capacity(files.len());
        for f in files {
            outputs.push(OutputFile {
                file: f.to_string_lossy().replace('\\', "/"),
                sha256: file_sha256(&dir.join(f))?,
            });
        }
        outputs.sort_by(|a, b| a.file.cmp(&b.file));
        self.outputs = outputs;
        let path = dir.join(MANIFEST);
        let text = serde_json::to_string_pretty(&self)? + "\n";
        std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST);
        let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }
}

/// A finished estimation run: its chain, its data and its manifest, with
/// both fingerprints checked against the manifest.
pub struct Estimate {
    pub dir: PathBuf,
    pub manifest: Manifest,
    pub chain: ChainOutput,
    pub dataset: Dataset,
}

impl Estimate {
    pub fn open(dir: &Path) -> Result<Self> {
        let manifest = Manifest::read(dir)?;
        if manifest.command != "estimate" {
            bail!(
                "{} was written by `{}`, not by `estimate`",
                dir.join(MANIFEST).display(),
                manifest.command
            );
        }
        let chain_path = dir.join(CHAIN_FILE);
        let chain_hash = file_sha256(&chain_path)?;
        if manifest.chain_sha256.as_deref() != Some(chain_hash.as_str()) {
            bail!(
                "chain fingerprint mismatch: {} hashes to {chain_hash} but the manifest records {}; \
                 the chain was modified or belongs to another run",
                chain_path.display(),
                manifest.chain_sha256.as_deref().unwrap_or("nothing")
            );
        }
        let chain = read_chain(&chain_path)?;

        let ds_path = dir.join(DATASET_FILE);
        let text = std::fs::read_to_string(&ds_path).with_context(|| format!("reading {}", ds_path.display()))?;
        let dataset: Dataset = serde_json::from_str(&text).with_context(|| format!("parsing {}", ds_path.display()))?;
        let ds_hash = dataset_fingerprint(&dataset);
        if manifest.dataset_sha256.as_deref() != Some(ds_hash.as_str()) {
            bail!(
                "dataset fingerprint mismatch: {} hashes to {ds_hash} but the manifest records {}",
                ds_path.display(),
                manifest.dataset_sha256.as_deref().unwrap_or("nothing")
            );
        }
        if dataset.m() != chain.dims.m || dataset.k() != chain.dims.k {
            bail!(
                "chain dimensions (M = {}, K = {}) do not fit the stored dataset (M = {}, K = {})",
                chain.dims.m,
                chain.dims.k,
                dataset.m(),
                dataset.k()
            );
        }
        Ok(Self {
            dir: dir.to_path_buf(),
            manifest,
            chain,
            dataset,
        })
    }

    /// Refuses to continue when freshly read data differ from the data the
    /// chain was estimated on.
    pub fn check_data(&self, fresh: &Dataset) -> Result<()> {
        let got = dataset_fingerprint(fresh);
        let want = dataset_fingerprint(&self.dataset);
        if got != want {
            bail!(
                "dataset fingerprint mismatch: the supplied data hash to {got} but the chain in {} \
                 was estimated on data hashing to {want}; re-estimate on these data or point at \
                 the matching estimate directory",
                self.dir.display()
            );
        }
        Ok(())
    }
}
