//! The sequential inference loop.
//!
//! Round `i` simulates a batch from the current proposal (uniform on the
//! initial support in round 0, the latest posterior afterwards), appends the
//! successful runs to one growing dataset, retrains the network on all of it
//! and conditions on the observed summary. An optional heuristic then adapts
//! the support the next round samples within.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{score_posterior, EvalConfig, EvalReference, MetricReport};
use crate::heuristics::{adapt, AdaptationTrace, Heuristic};
use crate::mdn::{Activation, Dataset, Mdn, MdnArchitecture, TrainConfig, TrainingReport};
use crate::mog::{FeasibleDomain, MixtureOfGaussians, SupportBounds};
use crate::rng::{derive_seed, stream, stream_seed};
use crate::simulators::{run_batch, BatchStats, Sampler, Simulate, SimulationOutcome, Simulator};
use crate::summaries::{SummarySchema, SummaryVector};

/// Network shape; input and output sizes follow from the problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MdnShape {
    pub hidden_layers: Vec<usize>,
    pub n_components: usize,
    pub activation: Activation,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_bound: Option<f64>,
}

impl MdnShape {
    pub fn architecture(&self, input_dim: usize, param_dim: usize) -> MdnArchitecture {
        MdnArchitecture {
            input_dim,
            hidden_layers: self.hidden_layers.clone(),
            n_components: self.n_components,
            param_dim,
            activation: self.activation,
            mean_bound: self.mean_bound,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InferenceConfig {
    pub simulator: Simulator,
    pub summary_schema: SummarySchema,
    pub n_iterations: usize,
    pub successes_per_iter: usize,
    pub max_attempts_per_iter: usize,
    pub initial_support: SupportBounds,
    pub feasible_domain: FeasibleDomain,
    pub heuristic: Heuristic,
    pub mdn: MdnShape,
    pub mdn_train: TrainConfig,
    pub observed_summary: SummaryVector,
    /// Only used to score posteriors; never influences inference.
    pub evaluation: Option<EvalSetup>,
    pub master_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSetup {
    pub reference: EvalReference,
    pub config: EvalConfig,
}

impl InferenceConfig {
    pub fn validate(&self) -> Result<()> {
        self.simulator.validate()?;
        let d = self.simulator.param_dim();
        if self.initial_support.dim() != d {
            return Err(Error::dim("initial support", d, self.initial_support.dim()));
        }
        if self.feasible_domain.dim() != d {
            return Err(Error::dim("feasible domain", d, self.feasible_domain.dim()));
        }
        self.feasible_domain.check_contains(&self.initial_support)?;
        if self.n_iterations == 0 {
            return Err(Error::InvalidConfig("n_iterations must be at least 1".into()));
        }
        if self.successes_per_iter == 0 || self.successes_per_iter > self.max_attempts_per_iter {
            return Err(Error::InvalidConfig(format!(
                "need 1 <= successes_per_iter ({}) <= max_attempts_per_iter ({})",
                self.successes_per_iter, self.max_attempts_per_iter
            )));
        }
        if self.observed_summary.schema != self.summary_schema {
            return Err(Error::InvalidConfig(format!(
                "observed summary uses {} but the run is configured for {}",
                self.observed_summary.schema.id(),
                self.summary_schema.id()
            )));
        }
        self.heuristic.validate(d)?;
        self.mdn_train.validate()?;
        self.mdn.architecture(self.observed_summary.len(), d).validate()?;
        if let Some(e) = &self.evaluation {
            e.config.validate()?;
            if e.reference.ground_truth.len() != d {
                return Err(Error::dim("ground truth", d, e.reference.ground_truth.len()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub support_before: SupportBounds,
    pub support_after: SupportBounds,
    pub adaptation: AdaptationTrace,
    pub batch: BatchStats,
    pub dataset_size: usize,
    /// Posterior conditioned on the observation, attached to `support_after`.
    pub posterior: MixtureOfGaussians,
    pub training: TrainingReport,
    /// Where the trained network was stored, if anywhere.
    pub mdn_snapshot: Option<String>,
    pub metrics: Option<MetricReport>,
}

/// A run that stopped early; `completed` holds every finished round.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("inference stopped after {} completed iterations: {error}", completed.len())]
pub struct RunAborted {
    pub error: Error,
    pub completed: Vec<IterationRecord>,
}

/// Seeds used by round `i` of a run with master seed `m`.
pub fn batch_seed(m: u64, i: usize) -> u64 {
    stream_seed(m, stream::ITERATION, i as u64)
}

pub fn training_seed(m: u64, i: usize) -> u64 {
    stream_seed(m, stream::TRAINING, i as u64)
}

pub fn eval_seed(m: u64, i: usize) -> u64 {
    stream_seed(m, stream::EVAL, i as u64)
}

/// Re-score a stored record exactly as the run did.
pub fn rescore(record: &IterationRecord, cfg: &InferenceConfig) -> Result<Option<MetricReport>> {
    cfg.evaluation
        .as_ref()
        .map(|e| {
            score_posterior(
                &record.posterior,
                &e.reference,
                &cfg.simulator,
                &e.config,
                eval_seed(cfg.master_seed, record.iteration),
            )
        })
        .transpose()
}

/// Run all rounds; `observer` sees each record (and the network that
/// produced it) before the next round starts and may annotate the record.
pub fn run_inference<F>(cfg: &InferenceConfig, mut observer: F) -> core::result::Result<Vec<IterationRecord>, RunAborted>
where
    F: FnMut(&mut IterationRecord, &Mdn) -> Result<()>,
{
    let mut records = Vec::with_capacity(cfg.n_iterations);
    if let Err(error) = cfg.validate() {
        return Err(RunAborted { error, completed: records });
    }
    if matches!(cfg.heuristic, Heuristic::Mode(_)) && !cfg.mdn_train.warm_start {
        log::warn!("mode adaptation matches components by index; cold restarts make that matching arbitrary");
    }
    let d = cfg.simulator.param_dim();
    let input_dim = cfg.observed_summary.len();
    let arch = cfg.mdn.architecture(input_dim, d);
    let mut net = match Mdn::new(arch, derive_seed(cfg.mdn_train.seed, training_seed(cfg.master_seed, usize::MAX))) {
        Ok(n) => n,
        Err(error) => return Err(RunAborted { error, completed: records }),
    };
    let mut dataset = Dataset::new(d, input_dim);
    let mut support = cfg.initial_support.clone();
    let mut previous: Option<MixtureOfGaussians> = None;

    for i in 0..cfg.n_iterations {
        match run_round(cfg, i, &mut net, &mut dataset, &support, previous.as_ref()) {
            Ok(mut record) => {
                if let Err(error) = observer(&mut record, &net) {
                    return Err(RunAborted { error, completed: records });
                }
                support = record.support_after.clone();
                previous = Some(record.posterior.clone());
                records.push(record);
            }
            Err(error) => return Err(RunAborted { error, completed: records }),
        }
    }
    Ok(records)
}

fn run_round(
    cfg: &InferenceConfig,
    i: usize,
    net: &mut Mdn,
    dataset: &mut Dataset,
    support: &SupportBounds,
    previous: Option<&MixtureOfGaussians>,
) -> Result<IterationRecord> {
    let sampler = match previous {
        None => Sampler::Uniform(support.clone()),
        Some(p) => Sampler::Mixture(p.clone().with_support(support.clone())?),
    };
    let (sims, batch) = run_batch(
        &sampler,
        cfg.successes_per_iter,
        cfg.max_attempts_per_iter,
        &cfg.simulator,
        batch_seed(cfg.master_seed, i),
    )?;
    if batch.successes == 0 {
        return Err(Error::NoSuccesses { iteration: i, attempts: batch.attempts });
    }
    for rec in &sims {
        if let SimulationOutcome::Success(traj) = &rec.outcome {
            let x = cfg.summary_schema.summarize(traj)?;
            dataset.push(&rec.theta, &x.values)?;
        }
    }

    net.set_target_box(support)?;
    let train_cfg = TrainConfig {
        seed: derive_seed(cfg.mdn_train.seed, training_seed(cfg.master_seed, i)),
        ..cfg.mdn_train.clone()
    };
    let training = net.train(dataset, &train_cfg)?;
    let posterior = net.forward(&cfg.observed_summary.values, support.clone())?;

    let (support_after, adaptation) = adapt(&cfg.heuristic, &posterior, previous, support, &cfg.feasible_domain, i)?;
    let posterior = posterior.with_support(support_after.clone())?;
    log::info!(
        "iteration {i}: {}/{} successes, dataset {}, best holdout nll {:.4} at epoch {}",
        batch.successes,
        batch.attempts,
        dataset.len(),
        training.best_validation_loss,
        training.best_epoch
    );

    let metrics = match &cfg.evaluation {
        Some(e) => Some(score_posterior(
            &posterior,
            &e.reference,
            &cfg.simulator,
            &e.config,
            eval_seed(cfg.master_seed, i),
        )?),
        None => None,
    };
    Ok(IterationRecord {
        iteration: i,
        support_before: support.clone(),
        support_after,
        adaptation,
        batch,
        dataset_size: dataset.len(),
        posterior,
        training,
        mdn_snapshot: None,
        metrics,
    })
}
