//! `run`: execute every variant × seed of a suite and persist the records.

use std::fs;
use std::path::Path;
use std::sync::Mutex;

use anyhow::{Context, Result};
use lfi_adapt_core::{run_inference, Error, IterationRecord};
use rayon::prelude::*;

use crate::config::{benchmark_dim, Suite, Variant};
use crate::csvfmt::{num, opt_num};
use crate::layout::{self, Outcome, RunStatus};

/// One line of `summary.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub variant: String,
    pub seed: u64,
    pub status: RunStatus,
    pub dataset_size: usize,
    pub cumulative_failures: usize,
    pub last: Option<IterationRecord>,
}

pub fn run_suite(suite: &Suite, out: &Path, variants: &[&Variant], seeds: &[u64], jobs: usize) -> Result<Vec<SummaryRow>> {
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let work: Vec<(&Variant, u64)> = variants.iter().flat_map(|v| seeds.iter().map(move |&s| (*v, s))).collect();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(jobs.max(1)).build()?;
    let rows = pool.install(|| work.par_iter().map(|&(v, s)| run_one(suite, out, v, s)).collect::<Result<Vec<_>>>())?;
    write_summary(&out.join(layout::SUMMARY_FILE), &rows, benchmark_dim(suite.benchmark))?;
    Ok(rows)
}

fn run_one(suite: &Suite, out: &Path, variant: &Variant, seed: u64) -> Result<SummaryRow> {
    let dir = layout::run_dir(out, &variant.name, seed);
    if dir.exists() {
        fs::remove_dir_all(&dir).with_context(|| format!("clearing {}", dir.display()))?;
    }
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;

    let cfg = match suite.inference_config(variant, seed) {
        Ok(cfg) => cfg,
        Err(e) => {
            log::warn!("{} seed {seed}: {e}", variant.name);
            let status = RunStatus {
                outcome: Outcome::Invalid,
                iterations_completed: 0,
                n_iterations: 0,
                failed_attempts: 0,
                error: Some(e.to_string()),
            };
            layout::write_json(&dir.join(layout::STATUS_FILE), &status)?;
            return Ok(SummaryRow { variant: variant.name.clone(), seed, status, dataset_size: 0, cumulative_failures: 0, last: None });
        }
    };
    layout::write_json(&dir.join(layout::CONFIG_FILE), &cfg)?;

    let io_error: Mutex<Option<anyhow::Error>> = Mutex::new(None);
    let persist = |record: &mut IterationRecord, net: &lfi_adapt_core::Mdn| -> Result<()> {
        let snapshot = layout::snapshot_file(record.iteration);
        fs::write(dir.join(&snapshot), net.to_bytes()).with_context(|| format!("writing {snapshot}"))?;
        record.mdn_snapshot = Some(snapshot);
        layout::write_json(&dir.join(layout::iter_file(record.iteration)), record)
    };
    let result = run_inference(&cfg, |record, net| {
        persist(record, net).map_err(|e| {
            let msg = e.to_string();
            *io_error.lock().expect("unpoisoned") = Some(e);
            Error::InvalidInput(msg)
        })
    });
    if let Some(e) = io_error.into_inner().expect("unpoisoned") {
        return Err(e);
    }

    let (records, outcome, failed_attempts, error) = match result {
        Ok(r) => (r, Outcome::Completed, 0, None),
        Err(aborted) => {
            log::warn!("{} seed {seed}: {aborted}", variant.name);
            let failed = match aborted.error {
                Error::NoSuccesses { attempts, .. } => attempts,
                _ => 0,
            };
            (aborted.completed, Outcome::Aborted, failed, Some(aborted.error.to_string()))
        }
    };
    let status = RunStatus {
        outcome,
        iterations_completed: records.len(),
        n_iterations: cfg.n_iterations,
        failed_attempts,
        error,
    };
    layout::write_json(&dir.join(layout::STATUS_FILE), &status)?;
    log::info!("{} seed {seed}: {} after {} iterations", variant.name, outcome.name(), records.len());
    Ok(SummaryRow {
        variant: variant.name.clone(),
        seed,
        dataset_size: records.last().map_or(0, |r| r.dataset_size),
        cumulative_failures: records.iter().map(|r| r.batch.failures).sum::<usize>() + failed_attempts,
        last: records.into_iter().last(),
        status,
    })
}

fn write_summary(path: &Path, rows: &[SummaryRow], dim: usize) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
    let mut header: Vec<String> = [
        "variant",
        "seed",
        "status",
        "iterations_completed",
        "n_iterations",
        "dataset_size",
        "cumulative_failures",
        "final_traj_score",
        "final_traj_loss",
    ]
    .map(String::from)
    .to_vec();
    header.extend((0..dim).map(|d| format!("final_param_score_{d}")));
    header.push("error".into());
    w.write_record(&header)?;
    for r in rows {
        let metrics = r.last.as_ref().and_then(|l| l.metrics.as_ref());
        let mut rec = vec![
            r.variant.clone(),
            r.seed.to_string(),
            r.status.outcome.name().to_string(),
            r.status.iterations_completed.to_string(),
            r.status.n_iterations.to_string(),
            r.dataset_size.to_string(),
            r.cumulative_failures.to_string(),
            opt_num(metrics.map(|m| m.traj_score)),
            opt_num(metrics.map(|m| m.traj_loss)),
        ];
        rec.extend((0..dim).map(|d| metrics.map_or(String::new(), |m| num(m.param_scores[d]))));
        rec.push(r.status.error.clone().unwrap_or_default());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
