//! Stochastic benchmark simulators.
//!
//! Both models are pure functions of `(parameters, config, seed)`. The
//! Lotka-Volterra model is the Markov jump process with four reactions,
//! simulated with the direct Gillespie method and recorded on a fixed grid
//! by zero-order hold. The M/G/1 model returns the interdeparture times of
//! a single-server queue with uniform service and Poisson arrivals.

use alloc::format;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math;
use crate::matrix::Matrix;
use crate::mog::{MixtureOfGaussians, SupportBounds};
use crate::rng::{derive_seed, rng_from_seed, stream_seed, stream, SimRng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LotkaVolterraConfig {
    pub init_predators: u32,
    pub init_prey: u32,
    pub duration: f64,
    pub record_dt: f64,
    pub max_events: u64,
}

impl Default for LotkaVolterraConfig {
    fn default() -> Self {
        Self {
            init_predators: 50,
            init_prey: 100,
            duration: 30.0,
            record_dt: 0.2,
            max_events: 10_000,
        }
    }
}

impl LotkaVolterraConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.duration > 0.0) || !self.duration.is_finite() {
            return Err(Error::InvalidConfig("duration must be positive".into()));
        }
        if !(self.record_dt > 0.0) || !self.record_dt.is_finite() {
            return Err(Error::InvalidConfig("record_dt must be positive".into()));
        }
        if self.max_events == 0 {
            return Err(Error::InvalidConfig("max_events must be positive".into()));
        }
        Ok(())
    }

    /// `floor(duration / record_dt) + 1`, tolerant of the rounding in
    /// ratios such as `30 / 0.2`.
    pub fn n_frames(&self) -> usize {
        libm::floor(self.duration / self.record_dt + 1e-9) as usize + 1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Mg1Config {
    pub num_jobs: usize,
}

impl Default for Mg1Config {
    fn default() -> Self {
        Self { num_jobs: 50 }
    }
}

impl Mg1Config {
    pub fn validate(&self) -> Result<()> {
        if self.num_jobs < 2 {
            return Err(Error::InvalidConfig("num_jobs must be at least 2".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InfeasibleReason {
    EventCapExceeded,
    NumericOverflow,
    InvalidParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimulationOutcome {
    Success(Matrix),
    Infeasible(InfeasibleReason),
}

impl SimulationOutcome {
    pub fn is_success(&self) -> bool {
        matches!(self, SimulationOutcome::Success(_))
    }

    pub fn trajectory(&self) -> Option<&Matrix> {
        match self {
            SimulationOutcome::Success(t) => Some(t),
            SimulationOutcome::Infeasible(_) => None,
        }
    }
}

/// Anything that maps parameters and a seed to an outcome.
pub trait Simulate: Sync {
    fn param_dim(&self) -> usize;

    fn simulate(&self, theta: &[f64], seed: u64) -> Result<SimulationOutcome>;

    /// Flat vector compared by the trajectory loss.
    fn trajectory_features(&self, trajectory: &Matrix) -> Vec<f64> {
        trajectory.as_slice().to_vec()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Simulator {
    LotkaVolterra(LotkaVolterraConfig),
    Mg1(Mg1Config),
}

impl Simulator {
    pub fn validate(&self) -> Result<()> {
        match self {
            Simulator::LotkaVolterra(c) => c.validate(),
            Simulator::Mg1(c) => c.validate(),
        }
    }
}

impl Simulate for Simulator {
    fn param_dim(&self) -> usize {
        match self {
            Simulator::LotkaVolterra(_) => 4,
            Simulator::Mg1(_) => 3,
        }
    }

    fn simulate(&self, theta: &[f64], seed: u64) -> Result<SimulationOutcome> {
        match self {
            Simulator::LotkaVolterra(cfg) => simulate_lotka_volterra(theta, cfg, seed),
            Simulator::Mg1(cfg) => simulate_mg1(theta, cfg, seed),
        }
    }

    /// LV populations are divided by their initial values (species-major
    /// layout); M/G/1 interdeparture times are used as recorded.
    fn trajectory_features(&self, trajectory: &Matrix) -> Vec<f64> {
        match self {
            Simulator::LotkaVolterra(cfg) => {
                let scale = [
                    f64::from(cfg.init_predators.max(1)),
                    f64::from(cfg.init_prey.max(1)),
                ];
                (0..trajectory.cols())
                    .flat_map(|c| {
                        let s = scale.get(c).copied().unwrap_or(1.0);
                        trajectory.column(c).map(move |v| v / s)
                    })
                    .collect()
            }
            Simulator::Mg1(_) => trajectory.as_slice().to_vec(),
        }
    }
}

/// The four LV reactions, in rate order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LvReaction {
    PredatorBorn,
    PredatorDies,
    PreyBorn,
    PreyDies,
}

impl LvReaction {
    const ALL: [LvReaction; 4] = [
        LvReaction::PredatorBorn,
        LvReaction::PredatorDies,
        LvReaction::PreyBorn,
        LvReaction::PreyDies,
    ];
}

/// One fired reaction with the populations after it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LvEvent {
    pub time: f64,
    pub reaction: LvReaction,
    pub predators: u64,
    pub prey: u64,
}

/// Draw the waiting time and index of the next reaction. `None` when every
/// rate is zero.
pub fn draw_reaction<R: Rng + ?Sized>(rates: &[f64], rng: &mut R) -> Option<(f64, usize)> {
    let total: f64 = rates.iter().sum();
    if !(total > 0.0) {
        return None;
    }
    let e: f64 = Exp1.sample(rng);
    let wait = e / total;
    let target = rng.random::<f64>() * total;
    let mut acc = 0.0;
    let last = rates.iter().rposition(|&r| r > 0.0)?;
    for (i, &r) in rates.iter().enumerate().take(last) {
        acc += r;
        if target < acc {
            return Some((wait, i));
        }
    }
    Some((wait, last))
}

fn lv_rates(theta_log: &[f64]) -> Result<[f64; 4]> {
    if theta_log.len() != 4 {
        return Err(Error::dim("lotka-volterra parameters", 4, theta_log.len()));
    }
    let mut rates = [0.0; 4];
    for (r, &t) in rates.iter_mut().zip(theta_log) {
        *r = math::exp(t);
        if !r.is_finite() {
            return Err(Error::InvalidParams(format!("rate exp({t}) is not finite")));
        }
    }
    Ok(rates)
}

/// Simulate the LV jump process with log-rate parameters.
pub fn simulate_lotka_volterra(
    theta_log: &[f64],
    cfg: &LotkaVolterraConfig,
    seed: u64,
) -> Result<SimulationOutcome> {
    simulate_lotka_volterra_observed(theta_log, cfg, seed, |_| {})
}

/// As [`simulate_lotka_volterra`], calling `observer` after every event.
pub fn simulate_lotka_volterra_observed<F: FnMut(LvEvent)>(
    theta_log: &[f64],
    cfg: &LotkaVolterraConfig,
    seed: u64,
    mut observer: F,
) -> Result<SimulationOutcome> {
    cfg.validate()?;
    let rates = lv_rates(theta_log)?;
    let mut rng = rng_from_seed(seed);
    let n_frames = cfg.n_frames();
    let mut frames = Matrix::zeros(n_frames, 2);
    let mut x = u64::from(cfg.init_predators);
    let mut y = u64::from(cfg.init_prey);
    let mut t = 0.0;
    let mut next_frame = 0usize;
    let mut events = 0u64;

    loop {
        let (xf, yf) = (x as f64, y as f64);
        let props = [
            rates[0] * xf * yf,
            rates[1] * xf,
            rates[2] * yf,
            rates[3] * xf * yf,
        ];
        if props.iter().any(|p| !p.is_finite()) {
            return Ok(SimulationOutcome::Infeasible(InfeasibleReason::NumericOverflow));
        }
        let Some((wait, idx)) = draw_reaction(&props, &mut rng) else {
            break;
        };
        let t_next = t + wait;
        while next_frame < n_frames && (next_frame as f64) * cfg.record_dt < t_next {
            frames.set(next_frame, 0, xf);
            frames.set(next_frame, 1, yf);
            next_frame += 1;
        }
        if next_frame == n_frames {
            break;
        }
        events += 1;
        if events > cfg.max_events {
            return Ok(SimulationOutcome::Infeasible(InfeasibleReason::EventCapExceeded));
        }
        let reaction = LvReaction::ALL[idx];
        match reaction {
            LvReaction::PredatorBorn => x += 1,
            LvReaction::PredatorDies => x -= 1,
            LvReaction::PreyBorn => y += 1,
            LvReaction::PreyDies => y -= 1,
        }
        t = t_next;
        observer(LvEvent {
            time: t,
            reaction,
            predators: x,
            prey: y,
        });
    }
    for f in next_frame..n_frames {
        frames.set(f, 0, x as f64);
        frames.set(f, 1, y as f64);
    }
    Ok(SimulationOutcome::Success(frames))
}

/// Simulate `num_jobs` jobs through an M/G/1 queue and return the
/// `num_jobs - 1` interdeparture times as a column.
///
/// Service times are `U(min(θ₁,θ₂), max(θ₁,θ₂))`, interarrival times
/// `Exp(θ₃)`, and departures follow `d_i = d_{i-1} + s_i + max(0, u_i - d_{i-1})`.
pub fn simulate_mg1(theta: &[f64], cfg: &Mg1Config, seed: u64) -> Result<SimulationOutcome> {
    cfg.validate()?;
    if theta.len() != 3 {
        return Err(Error::dim("m/g/1 parameters", 3, theta.len()));
    }
    if theta.iter().any(|t| !t.is_finite()) {
        return Err(Error::InvalidParams("non-finite parameter".into()));
    }
    let arrival_rate = theta[2];
    if !(arrival_rate > 0.0) {
        return Err(Error::InvalidParams(format!(
            "arrival rate {arrival_rate} must be positive"
        )));
    }
    let lo = theta[0].min(theta[1]);
    let hi = theta[0].max(theta[1]);
    if lo < 0.0 {
        return Err(Error::InvalidParams(format!("service bound {lo} is negative")));
    }
    let mut rng = rng_from_seed(seed);
    let mut arrival = 0.0;
    let mut departure = 0.0;
    let mut idts = Vec::with_capacity(cfg.num_jobs - 1);
    for i in 0..cfg.num_jobs {
        let service = lo + (hi - lo) * rng.random::<f64>();
        let gap: f64 = Exp1.sample(&mut rng);
        arrival += gap / arrival_rate;
        let idt = service + (arrival - departure).max(0.0);
        if !idt.is_finite() {
            return Ok(SimulationOutcome::Infeasible(InfeasibleReason::NumericOverflow));
        }
        departure += idt;
        if i > 0 {
            idts.push(idt);
        }
    }
    Ok(SimulationOutcome::Success(Matrix::from_column(idts)))
}

/// Where batch parameters come from.
#[derive(Debug, Clone, PartialEq)]
pub enum Sampler {
    Uniform(SupportBounds),
    Mixture(MixtureOfGaussians),
    Fixed(Vec<f64>),
}

impl Sampler {
    pub fn dim(&self) -> usize {
        match self {
            Sampler::Uniform(s) => s.dim(),
            Sampler::Mixture(m) => m.dim(),
            Sampler::Fixed(t) => t.len(),
        }
    }

    /// `n` parameter vectors in a seeded random order. Mixture draws use
    /// low-variance selection, so they are shuffled before use: a batch that
    /// stops early then still sees every component.
    pub fn draw(&self, n: usize, rng: &mut SimRng) -> Vec<Vec<f64>> {
        match self {
            Sampler::Uniform(s) => (0..n).map(|_| s.sample_uniform(rng)).collect(),
            Sampler::Mixture(m) => {
                let mut thetas: Vec<Vec<f64>> = m
                    .sample_low_variance_with(n, rng)
                    .into_iter()
                    .map(|(_, t)| t)
                    .collect();
                thetas.shuffle(rng);
                thetas
            }
            Sampler::Fixed(t) => alloc::vec![t.clone(); n],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationRecord {
    pub theta: Vec<f64>,
    pub outcome: SimulationOutcome,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FailureCounts {
    pub event_cap_exceeded: usize,
    pub numeric_overflow: usize,
    pub invalid_params: usize,
}

impl FailureCounts {
    fn record(&mut self, reason: InfeasibleReason) {
        match reason {
            InfeasibleReason::EventCapExceeded => self.event_cap_exceeded += 1,
            InfeasibleReason::NumericOverflow => self.numeric_overflow += 1,
            InfeasibleReason::InvalidParams => self.invalid_params += 1,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BatchStats {
    pub attempts: usize,
    pub successes: usize,
    pub failures: usize,
    pub success_rate: f64,
    pub failure_reasons: FailureCounts,
}

fn simulate_recorded<S: Simulate + ?Sized>(
    simulator: &S,
    theta: &[f64],
    seed: u64,
) -> Result<SimulationOutcome> {
    match simulator.simulate(theta, seed) {
        Err(Error::InvalidParams(_)) => Ok(SimulationOutcome::Infeasible(
            InfeasibleReason::InvalidParams,
        )),
        other => other,
    }
}

#[cfg(feature = "parallel")]
fn simulate_chunk<S: Simulate + ?Sized>(
    simulator: &S,
    thetas: &[Vec<f64>],
    first: usize,
    seed: u64,
) -> Vec<Result<SimulationOutcome>> {
    use rayon::prelude::*;
    thetas
        .par_iter()
        .enumerate()
        .map(|(j, t)| simulate_recorded(simulator, t, derive_seed(seed, (first + j) as u64)))
        .collect()
}

#[cfg(not(feature = "parallel"))]
fn simulate_chunk<S: Simulate + ?Sized>(
    simulator: &S,
    thetas: &[Vec<f64>],
    first: usize,
    seed: u64,
) -> Vec<Result<SimulationOutcome>> {
    thetas
        .iter()
        .enumerate()
        .map(|(j, t)| simulate_recorded(simulator, t, derive_seed(seed, (first + j) as u64)))
        .collect()
}

/// Simulate parameters drawn from `sampler` until `target_successes`
/// succeed or `max_attempts` have run.
///
/// Attempt `i` simulates with seed `derive_seed(seed, i)`; parameters come
/// from a separate stream of the same seed. Invalid parameters are recorded
/// as failures. Chunks never exceed the number of successes still needed,
/// so parallel and sequential execution return identical batches.
pub fn run_batch<S: Simulate + ?Sized>(
    sampler: &Sampler,
    target_successes: usize,
    max_attempts: usize,
    simulator: &S,
    seed: u64,
) -> Result<(Vec<SimulationRecord>, BatchStats)> {
    if target_successes > max_attempts {
        return Err(Error::InvalidConfig(format!(
            "target successes {target_successes} exceed max attempts {max_attempts}"
        )));
    }
    if sampler.dim() != simulator.param_dim() {
        return Err(Error::dim("batch sampler", simulator.param_dim(), sampler.dim()));
    }
    let mut rng = rng_from_seed(stream_seed(seed, stream::SAMPLING, 0));
    let thetas = sampler.draw(max_attempts, &mut rng);

    let mut records = Vec::new();
    let mut stats = BatchStats::default();
    let mut next = 0;
    while next < max_attempts && stats.successes < target_successes {
        let chunk = (target_successes - stats.successes).min(max_attempts - next);
        let outcomes = simulate_chunk(simulator, &thetas[next..next + chunk], next, seed);
        for (theta, outcome) in thetas[next..next + chunk].iter().zip(outcomes) {
            let outcome = outcome?;
            stats.attempts += 1;
            match &outcome {
                SimulationOutcome::Success(_) => stats.successes += 1,
                SimulationOutcome::Infeasible(reason) => {
                    stats.failures += 1;
                    stats.failure_reasons.record(*reason);
                }
            }
            records.push(SimulationRecord {
                theta: theta.clone(),
                outcome,
            });
        }
        next += chunk;
    }
    stats.success_rate = if stats.attempts == 0 {
        0.0
    } else {
        stats.successes as f64 / stats.attempts as f64
    };
    Ok((records, stats))
}
