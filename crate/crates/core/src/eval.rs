//! Posterior quality scores and simulation-budget statistics.

use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::IterationRecord;
use crate::math;
use crate::matrix::Matrix;
use crate::mog::MixtureOfGaussians;
use crate::rng::derive_seed;
use crate::simulators::{BatchStats, Simulate, SimulationOutcome};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub n_samples: usize,
    pub alpha: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { n_samples: 20, alpha: 1.0 }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_samples == 0 {
            return Err(Error::InvalidConfig("eval n_samples must be at least 1".into()));
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::InvalidConfig("eval alpha must be positive".into()));
        }
        Ok(())
    }
}

/// Ground truth the scores are measured against.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReference {
    pub ground_truth: Vec<f64>,
    pub trajectory: Matrix,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    /// `exp(-alpha * L_traj)`; 0 when every evaluation run was infeasible.
    pub traj_score: f64,
    /// `exp(-alpha * L_d)` per parameter dimension.
    pub param_scores: Vec<f64>,
    /// Infinite when every evaluation run was infeasible.
    #[serde(with = "extended_f64")]
    pub traj_loss: f64,
    pub param_losses: Vec<f64>,
    pub n_eval_samples: usize,
    pub n_infeasible: usize,
    /// Runs whose trajectory length differed from the reference.
    pub n_truncated: usize,
    pub all_infeasible: bool,
    pub alpha: f64,
}

/// JSON has no infinities; non-finite values travel as `"inf"`, `"-inf"`
/// or `"nan"`.
mod extended_f64 {
    use alloc::string::String;
    use serde::{de, Deserialize, Deserializer, Serializer};

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Number(f64),
        Text(String),
    }

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        match *v {
            v if v.is_finite() => s.serialize_f64(v),
            v if v.is_nan() => s.serialize_str("nan"),
            v if v > 0.0 => s.serialize_str("inf"),
            _ => s.serialize_str("-inf"),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Number(v) => Ok(v),
            Repr::Text(t) => match t.as_str() {
                "inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                "nan" => Ok(f64::NAN),
                other => Err(de::Error::invalid_value(de::Unexpected::Str(other), &"a number, inf, -inf or nan")),
            },
        }
    }
}

pub fn score(loss: f64, alpha: f64) -> f64 {
    math::exp(-alpha * loss)
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    math::sqrt(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum())
}

/// Draw `cfg.n_samples` parameters from `posterior` (low-variance, seeded by
/// `seed`), simulate each with `derive_seed(seed, j)`, and score against the
/// reference. Infeasible runs are excluded from the trajectory loss.
pub fn score_posterior<S: Simulate + ?Sized>(
    posterior: &MixtureOfGaussians,
    reference: &EvalReference,
    simulator: &S,
    cfg: &EvalConfig,
    seed: u64,
) -> Result<MetricReport> {
    cfg.validate()?;
    let d = posterior.dim();
    if reference.ground_truth.len() != d {
        return Err(Error::dim("ground truth", d, reference.ground_truth.len()));
    }
    let thetas = posterior.sample_low_variance(cfg.n_samples, seed);
    let reference_features = simulator.trajectory_features(&reference.trajectory);

    let mut param_losses = alloc::vec![0.0; d];
    let (mut traj_total, mut feasible, mut truncated) = (0.0, 0usize, 0usize);
    for (j, theta) in thetas.iter().enumerate() {
        for ((l, t), g) in param_losses.iter_mut().zip(theta).zip(&reference.ground_truth) {
            *l += libm::fabs(t - g);
        }
        let outcome = match simulator.simulate(theta, derive_seed(seed, j as u64)) {
            Ok(o) => o,
            Err(Error::InvalidParams(_)) => continue,
            Err(e) => return Err(e),
        };
        if let SimulationOutcome::Success(traj) = outcome {
            let features = simulator.trajectory_features(&traj);
            if features.len() != reference_features.len() {
                truncated += 1;
            }
            traj_total += euclidean(&features, &reference_features);
            feasible += 1;
        }
    }
    let n = thetas.len();
    param_losses.iter_mut().for_each(|l| *l /= n as f64);
    let all_infeasible = feasible == 0;
    let traj_loss = if all_infeasible { f64::INFINITY } else { traj_total / feasible as f64 };
    let report = MetricReport {
        traj_score: if all_infeasible { 0.0 } else { score(traj_loss, cfg.alpha) },
        param_scores: param_losses.iter().map(|&l| score(l, cfg.alpha)).collect(),
        traj_loss,
        param_losses,
        n_eval_samples: n,
        n_infeasible: n - feasible,
        n_truncated: truncated,
        all_infeasible,
        alpha: cfg.alpha,
    };
    if report.param_scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::InvalidInput(format!("non-finite parameter loss {:?}", report.param_losses)));
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyRow {
    pub iteration: usize,
    pub attempts: usize,
    pub failures: usize,
    pub success_rate: f64,
    pub cumulative_failures: usize,
}

/// Attempts, failures, success rate and running failure total per batch.
pub fn efficiency_rows<'a, I>(batches: I) -> Vec<EfficiencyRow>
where
    I: IntoIterator<Item = &'a BatchStats>,
{
    let mut cumulative = 0;
    batches
        .into_iter()
        .enumerate()
        .map(|(iteration, b)| {
            cumulative += b.failures;
            EfficiencyRow {
                iteration,
                attempts: b.attempts,
                failures: b.failures,
                success_rate: b.success_rate,
                cumulative_failures: cumulative,
            }
        })
        .collect()
}

pub fn efficiency_report(records: &[IterationRecord]) -> Result<Vec<EfficiencyRow>> {
    if records.is_empty() {
        return Err(Error::InvalidInput("no iteration records".into()));
    }
    let mut rows = efficiency_rows(records.iter().map(|r| &r.batch));
    for (row, rec) in rows.iter_mut().zip(records) {
        row.iteration = rec.iteration;
    }
    Ok(rows)
}
