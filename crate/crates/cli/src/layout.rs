//! On-disk layout of a suite:
//!
//! ```text
//! <out>/summary.csv
//! <out>/<variant>/<seed>/config.json     full run description
//! <out>/<variant>/<seed>/iter_<i>.json   one IterationRecord per round
//! <out>/<variant>/<seed>/mdn_<i>.bin     network after round i
//! <out>/<variant>/<seed>/status.json     completed / aborted / invalid
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use lfi_adapt_core::{InferenceConfig, IterationRecord};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

pub const CONFIG_FILE: &str = "config.json";
pub const STATUS_FILE: &str = "status.json";
pub const SUMMARY_FILE: &str = "summary.csv";

pub fn run_dir(out: &Path, variant: &str, seed: u64) -> PathBuf {
    out.join(variant).join(seed.to_string())
}

pub fn iter_file(i: usize) -> String {
    format!("iter_{i}.json")
}

pub fn snapshot_file(i: usize) -> String {
    format!("mdn_{i}.bin")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Completed,
    Aborted,
    /// The variant could not be turned into a valid run.
    Invalid,
}

impl Outcome {
    pub fn name(self) -> &'static str {
        match self {
            Outcome::Completed => "completed",
            Outcome::Aborted => "aborted",
            Outcome::Invalid => "invalid",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunStatus {
    pub outcome: Outcome,
    pub iterations_completed: usize,
    pub n_iterations: usize,
    /// Attempts spent in the round that aborted the run.
    pub failed_attempts: usize,
    pub error: Option<String>,
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

/// A run loaded back from disk.
pub struct StoredRun {
    pub variant: String,
    pub seed: u64,
    pub config: Option<InferenceConfig>,
    pub records: Vec<IterationRecord>,
    pub status: RunStatus,
}

impl StoredRun {
    pub fn load(variant: &str, seed: u64, dir: &Path) -> Result<StoredRun> {
        let status: RunStatus = read_json(&dir.join(STATUS_FILE))?;
        let config_path = dir.join(CONFIG_FILE);
        let config = if config_path.exists() { Some(read_json(&config_path)?) } else { None };
        let mut records = Vec::with_capacity(status.iterations_completed);
        for i in 0..status.iterations_completed {
            let r: IterationRecord = read_json(&dir.join(iter_file(i)))?;
            if r.iteration != i {
                bail!("{} holds iteration {}", dir.join(iter_file(i)).display(), r.iteration);
            }
            records.push(r);
        }
        Ok(StoredRun { variant: variant.to_string(), seed, config, records, status })
    }
}

/// Every `<variant>/<seed>` directory under `out` with a status file,
/// sorted by variant name then seed.
pub fn discover(out: &Path, variants: &[String], seeds: Option<&[u64]>) -> Result<Vec<(String, u64, PathBuf)>> {
    let mut found = Vec::new();
    let entries = fs::read_dir(out).with_context(|| format!("listing {}", out.display()))?;
    for variant in entries {
        let variant = variant?;
        if !variant.file_type()?.is_dir() {
            continue;
        }
        let name = variant.file_name().to_string_lossy().into_owned();
        if !variants.is_empty() && !variants.contains(&name) {
            continue;
        }
        for seed_dir in fs::read_dir(variant.path())? {
            let seed_dir = seed_dir?;
            let Ok(seed) = seed_dir.file_name().to_string_lossy().parse::<u64>() else { continue };
            if seeds.is_some_and(|s| !s.contains(&seed)) || !seed_dir.path().join(STATUS_FILE).exists() {
                continue;
            }
            found.push((name.clone(), seed, seed_dir.path()));
        }
    }
    found.sort_by(|a, b| (&a.0, a.1).cmp(&(&b.0, b.1)));
    Ok(found)
}

pub fn load_all(out: &Path, variants: &[String], seeds: Option<&[u64]>) -> Result<Vec<StoredRun>> {
    let runs = discover(out, variants, seeds)?
        .into_iter()
        .map(|(v, s, dir)| StoredRun::load(&v, s, &dir))
        .collect::<Result<Vec<_>>>()?;
    if runs.is_empty() {
        bail!("no runs found under {}", out.display());
    }
    Ok(runs)
}
