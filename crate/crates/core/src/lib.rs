//! Sequential likelihood-free inference with adaptive sampling supports.
//!
//! A mixture-density network maps summary statistics of simulator output to
//! a mixture-of-Gaussians posterior over simulator parameters. Each round
//! samples parameters from the latest posterior, simulates, grows the
//! training set and retrains. Between rounds the sampling box can be
//! stretched (edge mass, mode drift) or slid (re-centring) inside a fixed
//! feasible domain.
//!
//! The crate is `no_std` + `alloc` when built without the `std` feature.

#![cfg_attr(not(feature = "std"), no_std)]
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod benchmarks;
pub mod error;
pub mod eval;
pub mod heuristics;
pub mod inference;
pub mod math;
pub mod matrix;
pub mod mdn;
pub mod mog;
pub mod rng;
pub mod simulators;
pub mod summaries;

pub use error::{Error, Result};
pub use heuristics::{AdaptationTrace, EdgeConfig, Heuristic, ModeConfig, PerDim};
pub use inference::{run_inference, InferenceConfig, IterationRecord};
pub use matrix::Matrix;
pub use mdn::{Activation, Mdn, MdnArchitecture, TrainConfig, TrainingReport};
pub use mog::{FeasibleDomain, MixtureOfGaussians, SupportBounds};
pub use simulators::{
    run_batch, BatchStats, InfeasibleReason, Sampler, Simulate, SimulationOutcome,
    SimulationRecord, Simulator,
};
pub use summaries::{SummarySchema, SummaryVector};
