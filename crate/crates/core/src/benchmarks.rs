//! Ready-made Lotka-Volterra and M/G/1 problem definitions.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{EvalConfig, EvalReference};
use crate::heuristics::{EdgeConfig, Heuristic, ModeConfig};
use crate::inference::{EvalSetup, InferenceConfig, MdnShape};
use crate::math;
use crate::mdn::{Activation, TrainConfig};
use crate::mog::{FeasibleDomain, SupportBounds};
use crate::rng::{stream, stream_seed};
use crate::simulators::{LotkaVolterraConfig, Mg1Config, Simulate, SimulationOutcome, Simulator};
use crate::summaries::SummarySchema;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Benchmark {
    LotkaVolterra,
    Mg1,
}

/// Named sampling supports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SupportVariant {
    Ok,
    Misspecified,
    Broad,
    Broader,
    Broadest,
}

impl SupportVariant {
    pub fn name(self) -> &'static str {
        match self {
            SupportVariant::Ok => "ok",
            SupportVariant::Misspecified => "misspecified",
            SupportVariant::Broad => "broad",
            SupportVariant::Broader => "broader",
            SupportVariant::Broadest => "broadest",
        }
    }
}

/// Network and optimiser sizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scale {
    /// Three 1024-wide layers at learning rate 1e-5.
    Full,
    /// Two 64-wide layers at learning rate 1e-3 with minibatches of 20; LV
    /// runs use moment summaries, which a small net learns from few samples.
    Desk,
}

impl Scale {
    pub fn mdn(self) -> MdnShape {
        let hidden_layers = match self {
            Scale::Full => vec![1024; 3],
            Scale::Desk => vec![64; 2],
        };
        MdnShape { hidden_layers, n_components: 4, activation: Activation::Relu, mean_bound: None }
    }

    pub fn train(self) -> TrainConfig {
        match self {
            Scale::Full => TrainConfig { learning_rate: 1e-5, ..TrainConfig::default() },
            Scale::Desk => TrainConfig { learning_rate: 1e-3, batch_size: 20, max_epochs: 300, ..TrainConfig::default() },
        }
    }
}

impl Benchmark {
    pub fn simulator(self) -> Simulator {
        match self {
            Benchmark::LotkaVolterra => Simulator::LotkaVolterra(LotkaVolterraConfig::default()),
            Benchmark::Mg1 => Simulator::Mg1(Mg1Config::default()),
        }
    }

    pub fn summary_schema(self, scale: Scale) -> SummarySchema {
        match (self, scale) {
            (Benchmark::LotkaVolterra, Scale::Full) => SummarySchema::LV_FLAT_K3,
            (Benchmark::LotkaVolterra, Scale::Desk) => SummarySchema::LvMoments9,
            (Benchmark::Mg1, _) => SummarySchema::Mg1Pct5,
        }
    }

    /// LV rates are log-transformed; M/G/1 parameters are linear.
    pub fn ground_truth(self) -> Vec<f64> {
        match self {
            Benchmark::LotkaVolterra => [0.01, 0.5, 1.0, 0.01].iter().map(|&r| math::ln(r)).collect(),
            Benchmark::Mg1 => vec![1.0, 5.0, 0.2],
        }
    }

    pub fn n_iterations(self) -> usize {
        match self {
            Benchmark::LotkaVolterra => 10,
            Benchmark::Mg1 => 15,
        }
    }

    pub fn support(self, variant: SupportVariant) -> Result<SupportBounds> {
        match (self, variant) {
            (Benchmark::LotkaVolterra, SupportVariant::Ok) => SupportBounds::cube(-5.0, 2.0, 4),
            (Benchmark::LotkaVolterra, SupportVariant::Misspecified) => {
                SupportBounds::from_intervals(&[[-3.0, 2.0], [-5.0, -1.5], [-5.0, 2.0], [-5.0, 2.0]])
            }
            (Benchmark::LotkaVolterra, SupportVariant::Broad) => SupportBounds::cube(-6.0, 4.0, 4),
            (Benchmark::LotkaVolterra, SupportVariant::Broader) => SupportBounds::cube(-6.0, 5.0, 4),
            (Benchmark::LotkaVolterra, SupportVariant::Broadest) => SupportBounds::cube(-7.0, 7.0, 4),
            (Benchmark::Mg1, SupportVariant::Ok) => {
                SupportBounds::from_intervals(&[[0.0, 10.0], [0.0, 10.0], [0.0, 0.35]])
            }
            (Benchmark::Mg1, SupportVariant::Misspecified) => {
                SupportBounds::from_intervals(&[[3.0, 10.0], [0.0, 7.0], [0.0, 0.35]])
            }
            (Benchmark::Mg1, SupportVariant::Broad) => {
                SupportBounds::from_intervals(&[[0.0, 20.0], [0.0, 20.0], [0.0, 0.5]])
            }
            (Benchmark::Mg1, v) => Err(Error::InvalidConfig(alloc::format!(
                "the M/G/1 benchmark has no {} support",
                v.name()
            ))),
        }
    }

    pub fn feasible_domain(self) -> FeasibleDomain {
        match self {
            Benchmark::LotkaVolterra => FeasibleDomain::cube(-6.0, 4.0, 4),
            Benchmark::Mg1 => FeasibleDomain::from_intervals(&[[0.0, 20.0], [0.0, 20.0], [0.0, 0.5]]),
        }
        .expect("preset domain is valid")
    }

    /// Domain wide enough to hold every named support; used for runs that
    /// never adapt (the broadest LV support exceeds the adaptation domain).
    pub fn enclosing_domain(self, support: &SupportBounds) -> FeasibleDomain {
        let phi = self.feasible_domain();
        let lower = phi.lower().iter().zip(support.lower()).map(|(a, b)| a.min(*b)).collect();
        let upper = phi.upper().iter().zip(support.upper()).map(|(a, b)| a.max(*b)).collect();
        FeasibleDomain::new(lower, upper).expect("union of valid boxes is valid")
    }

    pub fn edge(self) -> EdgeConfig {
        match self {
            Benchmark::LotkaVolterra => {
                EdgeConfig { edge_zone_fraction: 0.1, mass_threshold: 0.005.into(), expansion_factor: 0.2 }
            }
            Benchmark::Mg1 => {
                EdgeConfig { edge_zone_fraction: 0.2, mass_threshold: 0.001.into(), expansion_factor: 0.2 }
            }
        }
    }

    pub fn mode(self) -> ModeConfig {
        ModeConfig {
            shift_threshold: 0.01,
            proximity_threshold: 0.4,
            weight_sum_threshold: 0.05.into(),
            expansion_factor: 0.2,
        }
    }

    /// Observed data: one simulation at the ground truth on a dedicated
    /// seed stream.
    pub fn observe(self, master_seed: u64) -> Result<crate::matrix::Matrix> {
        let sim = self.simulator();
        let truth = self.ground_truth();
        for attempt in 0..64 {
            let seed = stream_seed(master_seed, stream::OBSERVATION, attempt);
            if let SimulationOutcome::Success(traj) = sim.simulate(&truth, seed)? {
                return Ok(traj);
            }
        }
        Err(Error::InvalidInput("ground-truth simulation never succeeded".into()))
    }

    /// A complete run description for `variant` under `heuristic`.
    pub fn config(
        self,
        variant: SupportVariant,
        heuristic: Heuristic,
        scale: Scale,
        master_seed: u64,
    ) -> Result<InferenceConfig> {
        let initial_support = self.support(variant)?;
        let feasible_domain = if matches!(heuristic, Heuristic::None) {
            self.enclosing_domain(&initial_support)
        } else {
            self.feasible_domain()
        };
        let trajectory = self.observe(master_seed)?;
        let summary_schema = self.summary_schema(scale);
        let observed_summary = summary_schema.summarize(&trajectory)?;
        Ok(InferenceConfig {
            simulator: self.simulator(),
            summary_schema,
            n_iterations: self.n_iterations(),
            successes_per_iter: 100,
            max_attempts_per_iter: 125,
            initial_support,
            feasible_domain,
            heuristic,
            mdn: scale.mdn(),
            mdn_train: scale.train(),
            observed_summary,
            evaluation: Some(EvalSetup {
                reference: EvalReference { ground_truth: self.ground_truth(), trajectory },
                config: EvalConfig::default(),
            }),
            master_seed,
        })
    }
}
