//! Diagonal mixture-of-Gaussians posteriors and the axis-aligned boxes they
//! are sampled within.
//!
//! The mixture density itself is never truncated: a support box only clips
//! samples. Marginal masses and densities are those of the untruncated
//! mixture.

use alloc::format;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math;
use crate::rng::{rng_from_seed, SimRng};

#[derive(Serialize, Deserialize)]
struct RawBox {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

fn validate_box(lower: &[f64], upper: &[f64]) -> Result<()> {
    if lower.len() != upper.len() {
        return Err(Error::dim("bounds", lower.len(), upper.len()));
    }
    if lower.is_empty() {
        return Err(Error::InvalidBounds("zero-dimensional box".into()));
    }
    for (d, (&lo, &hi)) in lower.iter().zip(upper).enumerate() {
        if !lo.is_finite() || !hi.is_finite() {
            return Err(Error::InvalidBounds(format!("dimension {d} is not finite")));
        }
        if lo >= hi {
            return Err(Error::InvalidBounds(format!(
                "dimension {d}: lower {lo} must be below upper {hi}"
            )));
        }
    }
    Ok(())
}

/// The effective sampling support: `lower[d] < upper[d]` for every `d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawBox", into = "RawBox")]
pub struct SupportBounds {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl TryFrom<RawBox> for SupportBounds {
    type Error = Error;
    fn try_from(raw: RawBox) -> Result<Self> {
        Self::new(raw.lower, raw.upper)
    }
}

impl From<SupportBounds> for RawBox {
    fn from(b: SupportBounds) -> Self {
        RawBox {
            lower: b.lower,
            upper: b.upper,
        }
    }
}

impl SupportBounds {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        validate_box(&lower, &upper)?;
        Ok(Self { lower, upper })
    }

    /// The same interval `[lo, hi]` in each of `dim` dimensions.
    pub fn cube(lo: f64, hi: f64, dim: usize) -> Result<Self> {
        Self::new(alloc::vec![lo; dim], alloc::vec![hi; dim])
    }

    /// Build from per-dimension `[lo, hi]` pairs.
    pub fn from_intervals(intervals: &[[f64; 2]]) -> Result<Self> {
        Self::new(
            intervals.iter().map(|i| i[0]).collect(),
            intervals.iter().map(|i| i[1]).collect(),
        )
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn range(&self, d: usize) -> f64 {
        self.upper[d] - self.lower[d]
    }

    pub fn midpoint(&self, d: usize) -> f64 {
        0.5 * (self.lower[d] + self.upper[d])
    }

    pub fn contains_point(&self, theta: &[f64]) -> bool {
        theta.len() == self.dim()
            && theta
                .iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(&t, (&lo, &hi))| lo <= t && t <= hi)
    }

    /// `self ⊇ other` in every dimension.
    pub fn contains(&self, other: &SupportBounds) -> bool {
        self.dim() == other.dim()
            && (0..self.dim())
                .all(|d| self.lower[d] <= other.lower[d] && other.upper[d] <= self.upper[d])
    }

    /// Clip `theta` elementwise into the box.
    pub fn clip(&self, theta: &mut [f64]) {
        for (t, (&lo, &hi)) in theta.iter_mut().zip(self.lower.iter().zip(&self.upper)) {
            *t = t.clamp(lo, hi);
        }
    }

    /// Uniform draw inside the box.
    pub fn sample_uniform<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(&lo, &hi)| lo + (hi - lo) * rng.random::<f64>())
            .collect()
    }
}

/// Outer limit for every support adaptation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawBox", into = "RawBox")]
pub struct FeasibleDomain {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl TryFrom<RawBox> for FeasibleDomain {
    type Error = Error;
    fn try_from(raw: RawBox) -> Result<Self> {
        Self::new(raw.lower, raw.upper)
    }
}

impl From<FeasibleDomain> for RawBox {
    fn from(b: FeasibleDomain) -> Self {
        RawBox {
            lower: b.lower,
            upper: b.upper,
        }
    }
}

impl FeasibleDomain {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        validate_box(&lower, &upper)?;
        Ok(Self { lower, upper })
    }

    pub fn cube(lo: f64, hi: f64, dim: usize) -> Result<Self> {
        Self::new(alloc::vec![lo; dim], alloc::vec![hi; dim])
    }

    pub fn from_intervals(intervals: &[[f64; 2]]) -> Result<Self> {
        Self::new(
            intervals.iter().map(|i| i[0]).collect(),
            intervals.iter().map(|i| i[1]).collect(),
        )
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn range(&self, d: usize) -> f64 {
        self.upper[d] - self.lower[d]
    }

    pub fn contains(&self, support: &SupportBounds) -> bool {
        self.dim() == support.dim()
            && (0..self.dim()).all(|d| {
                self.lower[d] <= support.lower()[d] && support.upper()[d] <= self.upper[d]
            })
    }

    /// Error unless `support ⊆ self`.
    pub fn check_contains(&self, support: &SupportBounds) -> Result<()> {
        if self.dim() != support.dim() {
            return Err(Error::dim("feasible domain", self.dim(), support.dim()));
        }
        if !self.contains(support) {
            return Err(Error::InvalidBounds(
                "support is not contained in the feasible domain".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct RawMixture {
    weights: Vec<f64>,
    means: Vec<Vec<f64>>,
    variances: Vec<Vec<f64>>,
    support: SupportBounds,
}

/// Mixture of `K` diagonal Gaussians over `D` parameters, paired with the
/// support its samples are clipped to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawMixture", into = "RawMixture")]
pub struct MixtureOfGaussians {
    weights: Vec<f64>,
    /// `K x D`, row-major.
    means: Vec<f64>,
    /// `K x D`, row-major.
    variances: Vec<f64>,
    support: SupportBounds,
}

impl TryFrom<RawMixture> for MixtureOfGaussians {
    type Error = Error;
    fn try_from(raw: RawMixture) -> Result<Self> {
        let d = raw.support.dim();
        for row in raw.means.iter().chain(&raw.variances) {
            if row.len() != d {
                return Err(Error::dim("mixture row", d, row.len()));
            }
        }
        Self::new(
            raw.weights,
            raw.means.concat(),
            raw.variances.concat(),
            raw.support,
        )
    }
}

impl From<MixtureOfGaussians> for RawMixture {
    fn from(m: MixtureOfGaussians) -> Self {
        let d = m.dim();
        RawMixture {
            means: m.means.chunks(d).map(<[f64]>::to_vec).collect(),
            variances: m.variances.chunks(d).map(<[f64]>::to_vec).collect(),
            weights: m.weights,
            support: m.support,
        }
    }
}

pub const WEIGHT_SUM_TOLERANCE: f64 = 1e-9;

impl MixtureOfGaussians {
    /// `means` and `variances` are flat `K x D` row-major buffers with
    /// `K = weights.len()` and `D = support.dim()`.
    pub fn new(
        weights: Vec<f64>,
        means: Vec<f64>,
        variances: Vec<f64>,
        support: SupportBounds,
    ) -> Result<Self> {
        let k = weights.len();
        let d = support.dim();
        if k == 0 {
            return Err(Error::InvalidMixture("no components".into()));
        }
        if means.len() != k * d {
            return Err(Error::dim("mixture means", k * d, means.len()));
        }
        if variances.len() != k * d {
            return Err(Error::dim("mixture variances", k * d, variances.len()));
        }
        if weights.iter().any(|&w| !(w >= 0.0) || !w.is_finite()) {
            return Err(Error::InvalidMixture("negative or non-finite weight".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > WEIGHT_SUM_TOLERANCE {
            return Err(Error::InvalidMixture(format!("weights sum to {total}")));
        }
        if means.iter().any(|m| !m.is_finite()) {
            return Err(Error::InvalidMixture("non-finite mean".into()));
        }
        if variances.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
            return Err(Error::InvalidMixture("variances must be positive".into()));
        }
        Ok(Self {
            weights,
            means,
            variances,
            support,
        })
    }

    /// Single isotropic-per-dimension component.
    pub fn single(mean: Vec<f64>, variance: Vec<f64>, support: SupportBounds) -> Result<Self> {
        Self::new(alloc::vec![1.0], mean, variance, support)
    }

    pub fn n_components(&self) -> usize {
        self.weights.len()
    }

    pub fn dim(&self) -> usize {
        self.support.dim()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn mean(&self, k: usize) -> &[f64] {
        let d = self.dim();
        &self.means[k * d..(k + 1) * d]
    }

    pub fn variance(&self, k: usize) -> &[f64] {
        let d = self.dim();
        &self.variances[k * d..(k + 1) * d]
    }

    pub fn support(&self) -> &SupportBounds {
        &self.support
    }

    /// Same mixture, new support.
    pub fn with_support(mut self, support: SupportBounds) -> Result<Self> {
        if support.dim() != self.dim() {
            return Err(Error::dim("mixture support", self.dim(), support.dim()));
        }
        self.support = support;
        Ok(self)
    }

    /// Log density of the untruncated mixture.
    pub fn log_pdf(&self, theta: &[f64]) -> Result<f64> {
        let d = self.dim();
        if theta.len() != d {
            return Err(Error::dim("log_pdf", d, theta.len()));
        }
        let terms: Vec<f64> = (0..self.n_components())
            .map(|k| {
                let w = self.weights[k];
                if w == 0.0 {
                    return f64::NEG_INFINITY;
                }
                let mut lp = math::ln(w);
                for ((&t, &m), &v) in theta.iter().zip(self.mean(k)).zip(self.variance(k)) {
                    let z = t - m;
                    lp -= 0.5 * (math::LN_2PI + math::ln(v) + z * z / v);
                }
                lp
            })
            .collect();
        Ok(math::log_sum_exp(&terms))
    }

    /// Low-variance draw of `n` samples, clipped to the support.
    pub fn sample_low_variance(&self, n: usize, seed: u64) -> Vec<Vec<f64>> {
        self.sample_low_variance_with(n, &mut rng_from_seed(seed))
            .into_iter()
            .map(|(_, theta)| theta)
            .collect()
    }

    /// As [`sample_low_variance`](Self::sample_low_variance), returning the
    /// selected component alongside each sample.
    pub fn sample_low_variance_with(&self, n: usize, rng: &mut SimRng) -> Vec<(usize, Vec<f64>)> {
        if n == 0 {
            return Vec::new();
        }
        let offset = rng.random::<f64>() / n as f64;
        systematic_selection(&self.weights, n, offset)
            .into_iter()
            .map(|k| {
                let mut theta: Vec<f64> = self
                    .mean(k)
                    .iter()
                    .zip(self.variance(k))
                    .map(|(&m, &v)| {
                        let z: f64 = StandardNormal.sample(rng);
                        m + math::sqrt(v) * z
                    })
                    .collect();
                self.support.clip(&mut theta);
                (k, theta)
            })
            .collect()
    }

    /// One-dimensional marginal mass of the untruncated mixture on `[a, b]`.
    pub fn marginal_interval_mass(&self, dim: usize, a: f64, b: f64) -> f64 {
        if b <= a {
            return 0.0;
        }
        (0..self.n_components())
            .map(|k| {
                let mu = self.mean(k)[dim];
                let sd = math::sqrt(self.variance(k)[dim]);
                self.weights[k] * math::normal_interval((a - mu) / sd, (b - mu) / sd)
            })
            .sum()
    }

    /// `Σ_k w_k μ_k` per dimension.
    pub fn weighted_mean(&self) -> Vec<f64> {
        let mut out = alloc::vec![0.0; self.dim()];
        for k in 0..self.n_components() {
            let w = self.weights[k];
            for (o, &m) in out.iter_mut().zip(self.mean(k)) {
                *o += w * m;
            }
        }
        // Coinciding means are returned exactly; Σ w μ is only exact when the
        // weights sum to exactly one.
        let first = self.mean(0);
        for (d, o) in out.iter_mut().enumerate() {
            if (1..self.n_components()).all(|k| self.mean(k)[d] == first[d]) {
                *o = first[d];
            }
        }
        out
    }
}

/// Systematic (stratified) selection: thresholds `offset + j/n` for
/// `j = 0..n` are walked against the cumulative weights. `offset` should lie
/// in `[0, 1/n)`. Returns the selected component for each threshold.
pub fn systematic_selection(weights: &[f64], n: usize, offset: f64) -> Vec<usize> {
    let last = weights.iter().rposition(|&w| w > 0.0).unwrap_or(0);
    let mut out = Vec::with_capacity(n);
    let mut k = 0;
    let mut cumulative = weights.first().copied().unwrap_or(0.0);
    for j in 0..n {
        let threshold = offset + j as f64 / n as f64;
        while cumulative <= threshold && k < last {
            k += 1;
            cumulative += weights[k];
        }
        out.push(k);
    }
    out
}
