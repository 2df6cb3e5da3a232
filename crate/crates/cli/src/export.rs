//! `export`: flatten stored runs into the CSV/JSON files the plotting
//! scripts read.
//!
//! | file              | one row per                      |
//! |-------------------|----------------------------------|
//! | `metrics.csv`     | run × iteration                  |
//! | `efficiency.csv`  | run × iteration                  |
//! | `supports.csv`    | run × iteration × dimension      |
//! | `samples.csv`     | run × iteration × posterior draw |
//! | `posteriors.json` | run × iteration                  |

use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use lfi_adapt_core::eval::efficiency_report;
use lfi_adapt_core::rng::{stream, stream_seed};
use lfi_adapt_core::MixtureOfGaussians;
use serde::Serialize;

use crate::csvfmt::num;
use crate::layout::{self, StoredRun};

pub const METRICS_FILE: &str = "metrics.csv";
pub const EFFICIENCY_FILE: &str = "efficiency.csv";
pub const SUPPORTS_FILE: &str = "supports.csv";
pub const SAMPLES_FILE: &str = "samples.csv";
pub const POSTERIORS_FILE: &str = "posteriors.json";

#[derive(Serialize)]
struct PosteriorEntry<'a> {
    variant: &'a str,
    seed: u64,
    iteration: usize,
    posterior: &'a MixtureOfGaussians,
}

fn writer(dest: &Path, name: &str) -> Result<csv::Writer<fs::File>> {
    let path = dest.join(name);
    csv::Writer::from_path(&path).with_context(|| format!("writing {}", path.display()))
}

fn indexed(prefix: &str, dim: usize) -> impl Iterator<Item = String> + '_ {
    (0..dim).map(move |d| format!("{prefix}_{d}"))
}

pub fn export_runs(runs: &[StoredRun], dest: &Path, samples_per_iteration: usize) -> Result<usize> {
    fs::create_dir_all(dest).with_context(|| format!("creating {}", dest.display()))?;
    let dims: Vec<usize> = runs.iter().flat_map(|r| r.records.first()).map(|r| r.posterior.dim()).collect();
    let Some(&dim) = dims.first() else { bail!("no completed iterations to export") };
    if dims.iter().any(|&d| d != dim) {
        bail!("runs mix parameter dimensions {dims:?}; export one benchmark at a time");
    }

    let mut metrics = writer(dest, METRICS_FILE)?;
    let mut header: Vec<String> = ["variant", "seed", "iteration", "dataset_size", "traj_score", "traj_loss"].map(String::from).to_vec();
    header.extend(indexed("param_score", dim));
    header.extend(indexed("param_loss", dim));
    header.extend(["n_infeasible", "n_truncated"].map(String::from));
    metrics.write_record(&header)?;

    let mut efficiency = writer(dest, EFFICIENCY_FILE)?;
    efficiency.write_record(["variant", "seed", "iteration", "attempts", "failures", "success_rate", "cumulative_failures"])?;

    let mut supports = writer(dest, SUPPORTS_FILE)?;
    supports.write_record([
        "variant",
        "seed",
        "iteration",
        "dim",
        "lower_before",
        "upper_before",
        "lower_after",
        "upper_after",
        "triggered_left",
        "triggered_right",
        "weighted_mean",
    ])?;

    let mut samples = writer(dest, SAMPLES_FILE)?;
    let mut header: Vec<String> = ["variant", "seed", "iteration", "sample"].map(String::from).to_vec();
    header.extend(indexed("theta", dim));
    samples.write_record(&header)?;

    let mut posteriors = Vec::new();
    let mut rows = 0;
    for run in runs {
        let key = |i: usize| [run.variant.clone(), run.seed.to_string(), i.to_string()];
        let master_seed = run.config.as_ref().map_or(run.seed, |c| c.master_seed);
        if !run.records.is_empty() {
            for row in efficiency_report(&run.records)? {
                let mut rec = key(row.iteration).to_vec();
                rec.extend([
                    row.attempts.to_string(),
                    row.failures.to_string(),
                    num(row.success_rate),
                    row.cumulative_failures.to_string(),
                ]);
                efficiency.write_record(&rec)?;
            }
        }
        for r in &run.records {
            rows += 1;
            let mut rec = key(r.iteration).to_vec();
            rec.push(r.dataset_size.to_string());
            match &r.metrics {
                Some(m) => {
                    rec.extend([num(m.traj_score), num(m.traj_loss)]);
                    rec.extend(m.param_scores.iter().map(|&x| num(x)));
                    rec.extend(m.param_losses.iter().map(|&x| num(x)));
                    rec.extend([m.n_infeasible.to_string(), m.n_truncated.to_string()]);
                }
                None => rec.extend(std::iter::repeat_n(String::new(), 4 + 2 * dim)),
            }
            metrics.write_record(&rec)?;

            let mean = r.posterior.weighted_mean();
            for (d, t) in r.adaptation.dims.iter().enumerate() {
                let mut rec = key(r.iteration).to_vec();
                rec.extend([
                    d.to_string(),
                    num(r.support_before.lower()[d]),
                    num(r.support_before.upper()[d]),
                    num(r.support_after.lower()[d]),
                    num(r.support_after.upper()[d]),
                    t.triggered_left.to_string(),
                    t.triggered_right.to_string(),
                    num(mean[d]),
                ]);
                supports.write_record(&rec)?;
            }

            let draws = r.posterior.sample_low_variance(samples_per_iteration, stream_seed(master_seed, stream::SAMPLING, r.iteration as u64));
            for (j, theta) in draws.iter().enumerate() {
                let mut rec = key(r.iteration).to_vec();
                rec.push(j.to_string());
                rec.extend(theta.iter().map(|&x| num(x)));
                samples.write_record(&rec)?;
            }
            posteriors.push(PosteriorEntry { variant: &run.variant, seed: run.seed, iteration: r.iteration, posterior: &r.posterior });
        }
    }
    for w in [&mut metrics, &mut efficiency, &mut supports, &mut samples] {
        w.flush()?;
    }
    layout::write_json(&dest.join(POSTERIORS_FILE), &posteriors)?;
    Ok(rows)
}
