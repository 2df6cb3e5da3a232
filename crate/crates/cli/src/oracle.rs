//! `oracle`: brute-force reference values next to what the library
//! computes for the same quantity.

use anyhow::Result;
use lfi_adapt_core::benchmarks::Benchmark;
use lfi_adapt_core::mog::systematic_selection;
use lfi_adapt_core::rng::{derive_seed, rng_from_seed};
use lfi_adapt_core::simulators::{simulate_lotka_volterra, simulate_mg1, LotkaVolterraConfig, Mg1Config};
use lfi_adapt_core::{MixtureOfGaussians, SupportBounds};
use lfi_adapt_oracle as oracle;
use rand::Rng;
use serde::Serialize;

#[derive(Debug, Clone, Serialize)]
pub struct OracleLine {
    pub name: &'static str,
    pub reference: f64,
    pub library: f64,
    pub tolerance: f64,
    pub within: bool,
}

fn line(name: &'static str, reference: f64, library: f64, tolerance: f64) -> OracleLine {
    OracleLine { name, reference, library, tolerance, within: (reference - library).abs() <= tolerance }
}

pub fn mg1_median() -> Result<OracleLine> {
    let theta = [1.0, 5.0, 0.2];
    let cfg = Mg1Config { num_jobs: 50 };
    let mut total = 0.0;
    for s in 0..100 {
        let idts = simulate_mg1(&theta, &cfg, derive_seed(77, s))?;
        total += oracle::median(idts.trajectory().expect("M/G/1 runs never fail").as_slice());
    }
    let reference = oracle::mg1_mean_median(theta, 100_000, 100, 5);
    Ok(line("mg1_mean_median_idt", reference, total / 100.0, 0.05 * reference))
}

pub fn lv_oscillation() -> Result<OracleLine> {
    let cfg = LotkaVolterraConfig::default();
    let truth = Benchmark::LotkaVolterra.ground_truth();
    let mut oscillating = 0;
    for seed in 0..100 {
        let out = simulate_lotka_volterra(&truth, &cfg, derive_seed(11, seed))?;
        if let Some(traj) = out.trajectory() {
            let prey: Vec<f64> = traj.column(1).collect();
            oscillating += usize::from(oracle::has_separated_peaks(&prey, cfg.record_dt, 5.0, 10.0));
        }
    }
    // Reference is the required minimum fraction, not an estimate.
    let fraction = oscillating as f64 / 100.0;
    Ok(OracleLine { name: "lv_oscillating_fraction", reference: 0.9, library: fraction, tolerance: 0.0, within: fraction >= 0.9 })
}

pub fn edge_mass() -> Result<OracleLine> {
    let support = SupportBounds::new(vec![0.0], vec![10.0])?;
    let mog = MixtureOfGaussians::new(vec![0.7, 0.3], vec![0.5, 9.5], vec![0.25, 0.25], support)?;
    let m = oracle::Mixture { weights: vec![0.7, 0.3], means: vec![vec![0.5], vec![9.5]], variances: vec![vec![0.25], vec![0.25]] };
    let reference = oracle::interval_mass_mc(&m, 0, 0.0, 1.0, 1_000_000, 3);
    Ok(line("bimodal_left_edge_mass", reference, mog.marginal_interval_mass(0, 0.0, 1.0), 1e-2))
}

pub fn random_interval_mass() -> Result<OracleLine> {
    let mut rng = rng_from_seed(17);
    let weights = vec![0.5, 0.3, 0.2];
    let means: Vec<Vec<f64>> = (0..3).map(|_| (0..2).map(|_| rng.random_range(-2.0..2.0)).collect()).collect();
    let variances: Vec<Vec<f64>> = (0..3).map(|_| (0..2).map(|_| rng.random_range(0.1..2.0)).collect()).collect();
    let mog = MixtureOfGaussians::new(weights.clone(), means.concat(), variances.concat(), SupportBounds::cube(-10.0, 10.0, 2)?)?;
    let reference = oracle::interval_mass_mc(&oracle::Mixture { weights, means, variances }, 0, -0.5, 1.2, 1_000_000, 4);
    Ok(line("k3_interval_mass", reference, mog.marginal_interval_mass(0, -0.5, 1.2), 1e-2))
}

pub fn stratified_counts() -> Result<OracleLine> {
    let weights = [0.4, 0.3, 0.2, 0.1];
    let runs = 100;
    let mut mean_first = 0.0;
    for s in 0..runs {
        let offset: f64 = rng_from_seed(s).random::<f64>() / 1000.0;
        mean_first += systematic_selection(&weights, 1000, offset).iter().filter(|&&k| k == 0).count() as f64;
    }
    Ok(line("stratified_component_0_count", 400.0, mean_first / runs as f64, 1.0))
}

pub fn all() -> Result<Vec<OracleLine>> {
    Ok(vec![mg1_median()?, lv_oscillation()?, edge_mass()?, random_interval_mass()?, stratified_counts()?])
}
