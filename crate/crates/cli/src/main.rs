//! `lfi-adapt`: run, re-score and export sequential inference suites.

mod config;
mod csvfmt;
mod eval;
mod export;
mod layout;
mod oracle;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{anyhow, bail, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::json;

use crate::config::{ConfigError, Suite};
use crate::layout::Outcome;

#[derive(Parser)]
#[command(name = "lfi-adapt", version, about = "Sequential likelihood-free inference with adaptive supports")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute every variant and seed of a suite.
    Run(RunArgs),
    /// Recompute stored metrics and check they match.
    Eval(StoredArgs),
    /// Write plot-ready CSV/JSON files from stored runs.
    Export(ExportArgs),
    /// Print brute-force reference values beside the library's.
    Oracle,
}

/// A parsed `--seeds` list, sorted and deduplicated.
#[derive(Clone)]
struct Seeds(Vec<u64>);

#[derive(Args)]
struct Selection {
    /// Seeds, e.g. `0,3,7` or `0-4`.
    #[arg(long, value_parser = parse_seeds)]
    seeds: Option<Seeds>,
    /// Only these variants (repeatable or comma-separated).
    #[arg(long = "variant", value_delimiter = ',')]
    variants: Vec<String>,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Output root; defaults to the suite's `output_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    select: Selection,
    /// Runs executed concurrently.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Validate the suite and list the runs without executing them.
    #[arg(long)]
    dry_run: bool,
}

#[derive(Args)]
struct StoredArgs {
    /// Output root of a previous `run`.
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    select: Selection,
}

#[derive(Args)]
struct ExportArgs {
    #[command(flatten)]
    stored: StoredArgs,
    /// Destination directory; defaults to `<out>/export`.
    #[arg(long)]
    dest: Option<PathBuf>,
    /// Posterior draws written per iteration to `samples.csv`.
    #[arg(long, default_value_t = 200)]
    samples: usize,
}

impl Selection {
    fn seeds(&self) -> Option<&[u64]> {
        self.seeds.as_ref().map(|s| s.0.as_slice())
    }
}

fn parse_seeds(s: &str) -> Result<Seeds, String> {
    let mut out = Vec::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        match part.split_once('-') {
            Some((a, b)) => {
                let (a, b): (u64, u64) = (a.parse().map_err(|_| format!("bad seed {a:?}"))?, b.parse().map_err(|_| format!("bad seed {b:?}"))?);
                if a > b {
                    return Err(format!("empty seed range {part}"));
                }
                out.extend(a..=b);
            }
            None => out.push(part.parse().map_err(|_| format!("bad seed {part:?}"))?),
        }
    }
    out.sort_unstable();
    out.dedup();
    if out.is_empty() {
        return Err("no seeds given".into());
    }
    Ok(Seeds(out))
}

fn cmd_run(args: RunArgs) -> Result<()> {
    let suite = Suite::load(&args.config)?;
    let variants = if args.select.variants.is_empty() {
        suite.variants.iter().collect::<Vec<_>>()
    } else {
        args.select
            .variants
            .iter()
            .map(|n| suite.variant(n).ok_or_else(|| anyhow!("the suite has no variant {n:?}")))
            .collect::<Result<Vec<_>>>()?
    };
    let seeds = args.select.seeds().map_or_else(|| (0..suite.repeats as u64).collect(), <[u64]>::to_vec);
    if args.dry_run {
        for v in &variants {
            for &s in &seeds {
                let cfg = suite.inference_config(v, s)?;
                println!("{} seed {s}: {} iterations, heuristic {}", v.name, cfg.n_iterations, cfg.heuristic.name());
            }
        }
        return Ok(());
    }
    let out = args.out.or_else(|| suite.output_dir.clone()).ok_or_else(|| anyhow!("no --out given and the suite sets no output_dir"))?;
    let rows = run::run_suite(&suite, &out, &variants, &seeds, args.jobs)?;
    let count = |o: Outcome| rows.iter().filter(|r| r.status.outcome == o).count();
    println!(
        "{} runs: {} completed, {} aborted, {} invalid; summary in {}",
        rows.len(),
        count(Outcome::Completed),
        count(Outcome::Aborted),
        count(Outcome::Invalid),
        out.join(layout::SUMMARY_FILE).display()
    );
    Ok(())
}

fn cmd_eval(args: StoredArgs) -> Result<()> {
    let runs = layout::load_all(&args.out, &args.select.variants, args.select.seeds())?;
    let report = args.out.join("eval.csv");
    let s = eval::eval_runs(&runs, &report)?;
    println!("{} records re-scored, {} differ; details in {}", s.records, s.mismatches, report.display());
    if s.mismatches > 0 {
        bail!("{} of {} recomputed metric reports differ from the stored ones", s.mismatches, s.records);
    }
    Ok(())
}

fn cmd_export(args: ExportArgs) -> Result<()> {
    let out = &args.stored.out;
    let runs = layout::load_all(out, &args.stored.select.variants, args.stored.select.seeds())?;
    let dest = args.dest.unwrap_or_else(|| out.join("export"));
    let rows = export::export_runs(&runs, &dest, args.samples)?;
    println!("exported {rows} iterations from {} runs to {}", runs.len(), dest.display());
    Ok(())
}

fn cmd_oracle() -> Result<()> {
    let lines = oracle::all()?;
    for l in &lines {
        println!("{}", serde_json::to_string(l)?);
    }
    let off: Vec<&str> = lines.iter().filter(|l| !l.within).map(|l| l.name).collect();
    if !off.is_empty() {
        bail!("outside tolerance: {}", off.join(", "));
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("LFI_ADAPT_LOG", "warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Export(a) => cmd_export(a),
        Command::Oracle => cmd_oracle(),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let (report, code) = match e.downcast_ref::<ConfigError>() {
                Some(c) => (
                    json!({
                        "error": "invalid_config",
                        "path": c.path.as_ref().map(|p| p.display().to_string()),
                        "problems": c.problems,
                    }),
                    2,
                ),
                None => (json!({ "error": "failed", "message": format!("{e:#}") }), 1),
            };
            eprintln!("{report}");
            ExitCode::from(code)
        }
    }
}
