//! `eval`: recompute each stored record's metrics from its posterior and
//! the run's evaluation seed, and compare with what the run wrote.

use std::path::Path;

use anyhow::{Context, Result};
use lfi_adapt_core::inference::rescore;

use crate::csvfmt::opt_num;
use crate::layout::{Outcome, StoredRun};

pub struct EvalSummary {
    pub records: usize,
    pub mismatches: usize,
}

pub fn eval_runs(runs: &[StoredRun], report: &Path) -> Result<EvalSummary> {
    let mut w = csv::Writer::from_path(report).with_context(|| format!("writing {}", report.display()))?;
    w.write_record(["variant", "seed", "iteration", "stored_traj_score", "recomputed_traj_score", "identical"])?;
    let mut summary = EvalSummary { records: 0, mismatches: 0 };
    for run in runs {
        let Some(cfg) = run.config.as_ref().filter(|_| run.status.outcome != Outcome::Invalid) else { continue };
        for record in &run.records {
            let fresh = rescore(record, cfg).with_context(|| format!("{} seed {} iteration {}", run.variant, run.seed, record.iteration))?;
            // Serialised forms are equal iff every number matches to the bit.
            let identical = serde_json::to_string(&fresh)? == serde_json::to_string(&record.metrics)?;
            if !identical {
                log::warn!("{} seed {} iteration {}: recomputed metrics differ", run.variant, run.seed, record.iteration);
                summary.mismatches += 1;
            }
            summary.records += 1;
            w.write_record([
                run.variant.clone(),
                run.seed.to_string(),
                record.iteration.to_string(),
                opt_num(record.metrics.as_ref().map(|m| m.traj_score)),
                opt_num(fresh.as_ref().map(|m| m.traj_score)),
                identical.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(summary)
}
