//! Support adaptation between inference rounds.
//!
//! [`edge_adapt`] and [`mode_adapt`] stretch the sampling box outward and
//! never shrink it; [`centre_adapt`] slides it at constant width. All three
//! keep the result inside the feasible domain and report what they did per
//! dimension in an [`AdaptationTrace`].

use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mog::{FeasibleDomain, MixtureOfGaussians, SupportBounds};

/// A threshold given either once for all dimensions or per dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PerDim {
    Scalar(f64),
    Vector(Vec<f64>),
}

impl PerDim {
    pub fn at(&self, d: usize) -> f64 {
        match self {
            PerDim::Scalar(v) => *v,
            PerDim::Vector(v) => v[d],
        }
    }

    fn validate(&self, name: &str, dim: usize) -> Result<()> {
        let values: &[f64] = match self {
            PerDim::Scalar(v) => core::slice::from_ref(v),
            PerDim::Vector(v) => {
                if v.len() != dim {
                    return Err(Error::InvalidConfig(format!(
                        "{name} has {} entries for a {dim}-dimensional support",
                        v.len()
                    )));
                }
                v
            }
        };
        if values.iter().any(|&t| !(t > 0.0) || !t.is_finite()) {
            return Err(Error::InvalidConfig(format!("{name} must be positive and finite")));
        }
        Ok(())
    }
}

impl From<f64> for PerDim {
    fn from(v: f64) -> Self {
        PerDim::Scalar(v)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeConfig {
    /// Width of each edge zone as a fraction of the current range (δ).
    pub edge_zone_fraction: f64,
    /// Edge mass above which a side is expanded (τ).
    pub mass_threshold: PerDim,
    /// Expansion step as a fraction of the current range (η).
    pub expansion_factor: f64,
}

impl EdgeConfig {
    pub fn validate(&self, dim: usize) -> Result<()> {
        if !(self.edge_zone_fraction > 0.0 && self.edge_zone_fraction < 0.5) {
            return Err(Error::InvalidConfig(format!(
                "edge_zone_fraction must lie in (0, 0.5), got {}",
                self.edge_zone_fraction
            )));
        }
        positive("expansion_factor", self.expansion_factor)?;
        self.mass_threshold.validate("mass_threshold", dim)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeConfig {
    /// Minimum per-round displacement of a component mean (ν_TH).
    pub shift_threshold: f64,
    /// Normalised distance to a bound counted as "near" it (ρ).
    pub proximity_threshold: f64,
    /// Accumulated component weight above which a side is expanded (τ).
    pub weight_sum_threshold: PerDim,
    /// Expansion step as a fraction of the current range (η).
    pub expansion_factor: f64,
}

impl ModeConfig {
    pub fn validate(&self, dim: usize) -> Result<()> {
        positive("shift_threshold", self.shift_threshold)?;
        positive("expansion_factor", self.expansion_factor)?;
        if !(self.proximity_threshold > 0.0 && self.proximity_threshold < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "proximity_threshold must lie in (0, 1), got {}",
                self.proximity_threshold
            )));
        }
        self.weight_sum_threshold.validate("weight_sum_threshold", dim)
    }
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidConfig(format!("{name} must be positive and finite, got {v}")))
    }
}

/// Support adaptation policy applied after each posterior update.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Heuristic {
    #[default]
    None,
    Edge(EdgeConfig),
    Mode(ModeConfig),
    Centre,
}

impl Heuristic {
    pub fn name(&self) -> &'static str {
        match self {
            Heuristic::None => "none",
            Heuristic::Edge(_) => "edge",
            Heuristic::Mode(_) => "mode",
            Heuristic::Centre => "centre",
        }
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        match self {
            Heuristic::Edge(c) => c.validate(dim),
            Heuristic::Mode(c) => c.validate(dim),
            Heuristic::None | Heuristic::Centre => Ok(()),
        }
    }
}

/// The quantity each heuristic computed for one dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DimStatistic {
    /// Posterior mass in the left and right edge zones.
    EdgeMass { left: f64, right: f64 },
    /// Summed weight of components drifting toward each bound.
    ModeWeight { left: f64, right: f64 },
    /// Weighted posterior mean and the resulting shift of the window.
    Centre { weighted_mean: f64, offset: f64 },
    /// Nothing was computed (no heuristic, or a skipped round).
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DimTrace {
    pub old_lower: f64,
    pub old_upper: f64,
    pub new_lower: f64,
    pub new_upper: f64,
    pub triggered_left: bool,
    pub triggered_right: bool,
    pub statistic: DimStatistic,
    pub clipped_lower: bool,
    pub clipped_upper: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaptationTrace {
    pub heuristic: alloc::string::String,
    pub dims: Vec<DimTrace>,
}

impl AdaptationTrace {
    /// Trace of a round that left `support` untouched.
    pub fn unchanged(heuristic: &str, support: &SupportBounds) -> Self {
        let dims = (0..support.dim())
            .map(|d| {
                let (lo, hi) = (support.lower()[d], support.upper()[d]);
                DimTrace {
                    old_lower: lo,
                    old_upper: hi,
                    new_lower: lo,
                    new_upper: hi,
                    triggered_left: false,
                    triggered_right: false,
                    statistic: DimStatistic::Skipped,
                    clipped_lower: false,
                    clipped_upper: false,
                }
            })
            .collect();
        Self { heuristic: heuristic.into(), dims }
    }

    pub fn any_triggered(&self) -> bool {
        self.dims.iter().any(|d| d.triggered_left || d.triggered_right)
    }
}

fn check_inputs(posterior: &MixtureOfGaussians, theta: &SupportBounds, phi: &FeasibleDomain) -> Result<()> {
    if posterior.dim() != theta.dim() {
        return Err(Error::dim("posterior vs support", theta.dim(), posterior.dim()));
    }
    phi.check_contains(theta)
}

/// Shared stretching step: move each triggered side out by `eta * r`, stopping
/// at the feasible boundary.
fn stretch(
    theta: &SupportBounds,
    phi: &FeasibleDomain,
    eta: f64,
    triggers: &[(bool, bool)],
    statistics: Vec<DimStatistic>,
    name: &str,
) -> Result<(SupportBounds, AdaptationTrace)> {
    let mut lower = theta.lower().to_vec();
    let mut upper = theta.upper().to_vec();
    let mut dims = Vec::with_capacity(theta.dim());
    for (d, ((left, right), statistic)) in triggers.iter().zip(statistics).enumerate() {
        let r = theta.range(d);
        let (mut clipped_lower, mut clipped_upper) = (false, false);
        if *left {
            let candidate = lower[d] - eta * r;
            if candidate < phi.lower()[d] {
                lower[d] = phi.lower()[d];
                clipped_lower = true;
            } else {
                lower[d] = candidate;
            }
        }
        if *right {
            let candidate = upper[d] + eta * r;
            if candidate > phi.upper()[d] {
                upper[d] = phi.upper()[d];
                clipped_upper = true;
            } else {
                upper[d] = candidate;
            }
        }
        dims.push(DimTrace {
            old_lower: theta.lower()[d],
            old_upper: theta.upper()[d],
            new_lower: lower[d],
            new_upper: upper[d],
            triggered_left: *left,
            triggered_right: *right,
            statistic,
            clipped_lower,
            clipped_upper,
        });
    }
    let support = SupportBounds::new(lower, upper)?;
    Ok((support, AdaptationTrace { heuristic: name.into(), dims }))
}

/// Expand any side whose edge zone holds more than `τ` posterior mass.
///
/// The zones are `[lower, lower + δr]` and `[upper - δr, upper]` with `r` the
/// range before adaptation.
pub fn edge_adapt(
    posterior: &MixtureOfGaussians,
    theta: &SupportBounds,
    phi: &FeasibleDomain,
    cfg: &EdgeConfig,
) -> Result<(SupportBounds, AdaptationTrace)> {
    check_inputs(posterior, theta, phi)?;
    cfg.validate(theta.dim())?;
    let mut triggers = Vec::with_capacity(theta.dim());
    let mut stats = Vec::with_capacity(theta.dim());
    for d in 0..theta.dim() {
        let (lo, hi) = (theta.lower()[d], theta.upper()[d]);
        let width = cfg.edge_zone_fraction * theta.range(d);
        let left = posterior.marginal_interval_mass(d, lo, lo + width);
        let right = posterior.marginal_interval_mass(d, hi - width, hi);
        let tau = cfg.mass_threshold.at(d);
        triggers.push((left > tau, right > tau));
        stats.push(DimStatistic::EdgeMass { left, right });
    }
    stretch(theta, phi, cfg.expansion_factor, &triggers, stats, "edge")
}

/// Expand toward bounds that components are drifting to.
///
/// Components are matched across rounds by index. Round 0 has no previous
/// posterior and returns `theta` unchanged.
pub fn mode_adapt(
    current: &MixtureOfGaussians,
    previous: &MixtureOfGaussians,
    theta: &SupportBounds,
    phi: &FeasibleDomain,
    cfg: &ModeConfig,
    iteration: usize,
) -> Result<(SupportBounds, AdaptationTrace)> {
    check_inputs(current, theta, phi)?;
    if previous.dim() != current.dim() {
        return Err(Error::dim("previous posterior dimension", current.dim(), previous.dim()));
    }
    if previous.n_components() != current.n_components() {
        return Err(Error::dim(
            "previous posterior components",
            current.n_components(),
            previous.n_components(),
        ));
    }
    cfg.validate(theta.dim())?;
    if iteration == 0 {
        return Ok((theta.clone(), AdaptationTrace::unchanged("mode", theta)));
    }
    let mut triggers = Vec::with_capacity(theta.dim());
    let mut stats = Vec::with_capacity(theta.dim());
    for d in 0..theta.dim() {
        let (lo, r) = (theta.lower()[d], theta.range(d));
        let (mut w_left, mut w_right) = (0.0, 0.0);
        for k in 0..current.n_components() {
            let mu = current.mean(k)[d];
            let shift = mu - previous.mean(k)[d];
            let z = (mu - lo) / r;
            let w = current.weights()[k];
            if shift < -cfg.shift_threshold && libm::fabs(z) < cfg.proximity_threshold {
                w_left += w;
            } else if shift > cfg.shift_threshold && libm::fabs(1.0 - z) < cfg.proximity_threshold {
                w_right += w;
            }
        }
        let tau = cfg.weight_sum_threshold.at(d);
        triggers.push((w_left > tau, w_right > tau));
        stats.push(DimStatistic::ModeWeight { left: w_left, right: w_right });
    }
    stretch(theta, phi, cfg.expansion_factor, &triggers, stats, "mode")
}

/// Slide the window, keeping its width, so it is centred on the posterior's
/// weighted mean; a window crossing the feasible boundary is pushed back in,
/// lower bound first.
pub fn centre_adapt(
    posterior: &MixtureOfGaussians,
    theta: &SupportBounds,
    phi: &FeasibleDomain,
) -> Result<(SupportBounds, AdaptationTrace)> {
    check_inputs(posterior, theta, phi)?;
    let mean = posterior.weighted_mean();
    let mut lower = Vec::with_capacity(theta.dim());
    let mut upper = Vec::with_capacity(theta.dim());
    let mut dims = Vec::with_capacity(theta.dim());
    for (d, &mu) in mean.iter().enumerate() {
        let r = theta.range(d);
        let (phi_lo, phi_hi) = (phi.lower()[d], phi.upper()[d]);
        if r > phi.range(d) {
            return Err(Error::InvalidBounds(format!(
                "dimension {d}: range {r} exceeds the feasible range {}",
                phi.range(d)
            )));
        }
        let (mut lo, mut hi) = (mu - 0.5 * r, mu + 0.5 * r);
        let (mut clipped_lower, mut clipped_upper) = (false, false);
        if lo < phi_lo {
            lo = phi_lo;
            hi = phi_lo + r;
            clipped_lower = true;
        }
        if hi > phi_hi {
            hi = phi_hi;
            lo = phi_hi - r;
            clipped_upper = true;
        }
        // Guard against rounding when the window spans all of the domain.
        lo = lo.max(phi_lo);
        hi = hi.min(phi_hi);
        dims.push(DimTrace {
            old_lower: theta.lower()[d],
            old_upper: theta.upper()[d],
            new_lower: lo,
            new_upper: hi,
            triggered_left: lo < theta.lower()[d],
            triggered_right: hi > theta.upper()[d],
            statistic: DimStatistic::Centre { weighted_mean: mu, offset: lo - theta.lower()[d] },
            clipped_lower,
            clipped_upper,
        });
        lower.push(lo);
        upper.push(hi);
    }
    let support = SupportBounds::new(lower, upper)?;
    Ok((support, AdaptationTrace { heuristic: "centre".into(), dims }))
}

/// Apply `heuristic` after round `iteration`. `previous` is the posterior of
/// the preceding round, required by the mode heuristic from round 1 onward.
pub fn adapt(
    heuristic: &Heuristic,
    current: &MixtureOfGaussians,
    previous: Option<&MixtureOfGaussians>,
    theta: &SupportBounds,
    phi: &FeasibleDomain,
    iteration: usize,
) -> Result<(SupportBounds, AdaptationTrace)> {
    match heuristic {
        Heuristic::None => Ok((theta.clone(), AdaptationTrace::unchanged("none", theta))),
        Heuristic::Edge(cfg) => edge_adapt(current, theta, phi, cfg),
        Heuristic::Centre => centre_adapt(current, theta, phi),
        Heuristic::Mode(cfg) => match previous {
            Some(prev) => mode_adapt(current, prev, theta, phi, cfg, iteration),
            None if iteration == 0 => Ok((theta.clone(), AdaptationTrace::unchanged("mode", theta))),
            None => Err(Error::InvalidInput(format!(
                "mode adaptation at round {iteration} needs the previous posterior"
            ))),
        },
    }
}
