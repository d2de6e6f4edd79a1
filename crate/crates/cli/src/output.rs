use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::RunConfig;

pub const TOOL: &str = "co2bayes";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Serialize)]
pub struct InputRecord {
    pub path: String,
    pub sha256: String,
}

/// Everything needed to re-run a command. Deliberately free of timestamps
/// and output paths so reruns are byte-identical.
#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub args: Vec<String>,
    pub seed: u64,
    pub config_sha256: String,
    pub config: RunConfig,
    pub inputs: Vec<InputRecord>,
}

impl Manifest {
    pub fn new(command: &str, args: Vec<String>, config: &RunConfig) -> Result<Self> {
        let bytes = serde_json::to_vec(config)?;
        Ok(Self {
            tool: TOOL,
            version: VERSION,
            command: command.into(),
            args,
            seed: config.seed,
            config_sha256: hex::encode(Sha256::digest(&bytes)),
            config: config.clone(),
            inputs: Vec::new(),
        })
    }

    /// Record an input file with its content hash; directories record each
    /// CSV inside.
    pub fn add_input(&mut self, path: &Path) -> Result<()> {
        if path.is_dir() {
            let mut files: Vec<PathBuf> = fs::read_dir(path)?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("csv")))
                .collect();
            files.sort();
            for f in files {
                self.add_input(&f)?;
            }
            return Ok(());
        }
        let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
        self.inputs.push(InputRecord {
            path: path.display().to_string(),
            sha256: hex::encode(Sha256::digest(&bytes)),
        });
        Ok(())
    }
}

/// A JSON document with its manifest embedded.
#[derive(Serialize)]
struct WithManifest<'a, T: Serialize> {
    manifest: &'a Manifest,
    #[serde(flatten)]
    body: &'a T,
}

/// Failure to write an output; maps to the generic exit code.
#[derive(Debug)]
pub struct OutputError(pub String);

impl std::fmt::Display for OutputError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for OutputError {}

pub struct OutDir {
    dir: PathBuf,
}

impl OutDir {
    pub fn create(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|e| OutputError(format!("cannot create {}: {e}", dir.display())))?;
        Ok(Self { dir: dir.to_path_buf() })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    /// Write through a temporary file in the same directory, then rename.
    pub fn write_atomic(&self, name: &str, bytes: &[u8]) -> Result<PathBuf> {
        let target = self.path(name);
        let tmp = self.path(&format!(".{name}.tmp{}", std::process::id()));
        let fail = |e: std::io::Error| OutputError(format!("cannot write {}: {e}", target.display()));
        let mut f = fs::File::create(&tmp).map_err(fail)?;
        f.write_all(bytes).map_err(fail)?;
        f.sync_all().map_err(fail)?;
        drop(f);
        fs::rename(&tmp, &target).map_err(fail)?;
        Ok(target)
    }

    pub fn write_json<T: Serialize>(&self, name: &str, manifest: &Manifest, body: &T) -> Result<PathBuf> {
        let mut bytes = serde_json::to_vec_pretty(&WithManifest { manifest, body })?;
        bytes.push(b'\n');
        self.write_atomic(name, &bytes)
    }

    /// CSV plus a `<stem>.manifest.json` sidecar carrying the manifest and `extra`.
    pub fn write_csv<T: Serialize>(&self, name: &str, manifest: &Manifest, extra: &T, bytes: &[u8]) -> Result<PathBuf> {
        let stem = name.strip_suffix(".csv").unwrap_or(name);
        self.write_json(&format!("{stem}.manifest.json"), manifest, extra)?;
        self.write_atomic(name, bytes)
    }
}
