//! Fixed-length summary statistics of raw trajectories.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math;
use crate::matrix::Matrix;

/// Maximum frames kept per species by the flat LV scheme.
pub const MAX_FLAT_FRAMES: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LvSummaryMode {
    FlatSubsampled,
    Moments,
}

/// Summary scheme, recorded in run logs by its stable id (`lv_flat_k3`,
/// `lv_moments9`, `mg1_pct5`, `xcorr`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum SummarySchema {
    /// Every `stride`-th frame of each species, scaled by its first frame.
    LvFlat { stride: usize },
    LvMoments9,
    Mg1Pct5,
    XCorr,
}

impl SummarySchema {
    /// The default LV scheme.
    pub const LV_FLAT_K3: SummarySchema = SummarySchema::LvFlat { stride: 3 };

    pub fn id(self) -> String {
        match self {
            SummarySchema::LvFlat { stride } => format!("lv_flat_k{stride}"),
            SummarySchema::LvMoments9 => "lv_moments9".into(),
            SummarySchema::Mg1Pct5 => "mg1_pct5".into(),
            SummarySchema::XCorr => "xcorr".into(),
        }
    }

    /// Summarise a simulator trajectory with this scheme.
    pub fn summarize(self, trajectory: &Matrix) -> Result<SummaryVector> {
        match self {
            SummarySchema::LvFlat { stride } => summarize_lv_flat(trajectory, stride),
            SummarySchema::LvMoments9 => summarize_lv(trajectory, LvSummaryMode::Moments),
            SummarySchema::Mg1Pct5 => summarize_mg1(trajectory.as_slice()),
            SummarySchema::XCorr => Err(Error::InvalidInput(
                "cross-correlation summaries need separate state and action matrices".into(),
            )),
        }
    }
}

impl TryFrom<String> for SummarySchema {
    type Error = Error;
    fn try_from(id: String) -> Result<Self> {
        match id.as_str() {
            "lv_moments9" => Ok(SummarySchema::LvMoments9),
            "mg1_pct5" => Ok(SummarySchema::Mg1Pct5),
            "xcorr" => Ok(SummarySchema::XCorr),
            other => other
                .strip_prefix("lv_flat_k")
                .and_then(|k| k.parse::<usize>().ok())
                .filter(|&k| k > 0)
                .map(|stride| SummarySchema::LvFlat { stride })
                .ok_or_else(|| {
                    Error::InvalidInput(format!(
                        "unknown summary schema {other:?}; expected one of lv_flat_k<N>, lv_moments9, mg1_pct5, xcorr"
                    ))
                }),
        }
    }
}

impl From<SummarySchema> for String {
    fn from(s: SummarySchema) -> String {
        s.id()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryVector {
    pub values: Vec<f64>,
    pub schema: SummarySchema,
}

impl SummaryVector {
    fn new(values: Vec<f64>, schema: SummarySchema) -> Result<Self> {
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "{} summary entry {i} is not finite",
                schema.id()
            )));
        }
        Ok(Self { values, schema })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Smallest stride keeping at most [`MAX_FLAT_FRAMES`] frames.
pub fn flat_stride(frames: usize) -> usize {
    frames.div_ceil(MAX_FLAT_FRAMES).max(1)
}

/// Summarise an LV `frames x 2` trajectory.
///
/// `FlatSubsampled` keeps every k-th frame (k from [`flat_stride`]) and
/// divides each species by its first-frame value; the layout is all
/// predator frames, then all prey frames. `Moments` returns per species the
/// mean, `ln(var + 1)`, lag-1 and lag-2 autocorrelations, then the lag-0
/// cross-correlation of the two species.
pub fn summarize_lv(trajectory: &Matrix, mode: LvSummaryMode) -> Result<SummaryVector> {
    check_lv(trajectory)?;
    match mode {
        LvSummaryMode::FlatSubsampled => summarize_lv_flat(trajectory, flat_stride(trajectory.rows())),
        LvSummaryMode::Moments => {
            let x: Vec<f64> = trajectory.column(0).collect();
            let y: Vec<f64> = trajectory.column(1).collect();
            let mut values = Vec::with_capacity(9);
            for s in [&x, &y] {
                let (mean, var) = mean_var(s);
                values.push(mean);
                values.push(math::ln(var + 1.0));
                values.push(autocorrelation(s, 1));
                values.push(autocorrelation(s, 2));
            }
            values.push(cross_correlation(&x, &y));
            SummaryVector::new(values, SummarySchema::LvMoments9)
        }
    }
}

fn summarize_lv_flat(trajectory: &Matrix, stride: usize) -> Result<SummaryVector> {
    check_lv(trajectory)?;
    let mut values = Vec::with_capacity(2 * trajectory.rows().div_ceil(stride));
    for c in 0..2 {
        let first = trajectory.get(0, c);
        let scale = if first != 0.0 { first } else { 1.0 };
        values.extend(trajectory.column(c).step_by(stride).map(|v| v / scale));
    }
    SummaryVector::new(values, SummarySchema::LvFlat { stride })
}

fn check_lv(trajectory: &Matrix) -> Result<()> {
    if trajectory.rows() == 0 || trajectory.cols() != 2 {
        return Err(Error::InvalidInput(format!(
            "LV trajectory must be non-empty with 2 columns, got {}x{}",
            trajectory.rows(),
            trajectory.cols()
        )));
    }
    if !trajectory.is_finite() {
        return Err(Error::InvalidInput("trajectory contains non-finite values".into()));
    }
    Ok(())
}

fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var)
}

/// Lag-`lag` autocorrelation; zero for constant series or lags past the end.
fn autocorrelation(xs: &[f64], lag: usize) -> f64 {
    let (mean, var) = mean_var(xs);
    if var == 0.0 || lag >= xs.len() {
        return 0.0;
    }
    let n = xs.len() as f64;
    let cov: f64 = xs
        .iter()
        .zip(&xs[lag..])
        .map(|(a, b)| (a - mean) * (b - mean))
        .sum::<f64>()
        / n;
    cov / var
}

fn cross_correlation(xs: &[f64], ys: &[f64]) -> f64 {
    let (mx, vx) = mean_var(xs);
    let (my, vy) = mean_var(ys);
    if vx == 0.0 || vy == 0.0 {
        return 0.0;
    }
    let n = xs.len() as f64;
    let cov = xs.iter().zip(ys).map(|(a, b)| (a - mx) * (b - my)).sum::<f64>() / n;
    cov / math::sqrt(vx * vy)
}

/// Linear-interpolation percentile of sorted data, `p` in `[0, 1]`.
fn percentile_sorted(sorted: &[f64], p: f64) -> f64 {
    let pos = p * (sorted.len() - 1) as f64;
    let lo = libm::floor(pos) as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    let frac = pos - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

/// 0th, 25th, 50th, 75th and 100th percentiles of the interdeparture times.
pub fn summarize_mg1(idts: &[f64]) -> Result<SummaryVector> {
    if idts.is_empty() {
        return Err(Error::InvalidInput("no interdeparture times".into()));
    }
    if idts.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("non-finite interdeparture time".into()));
    }
    let mut sorted = idts.to_vec();
    sorted.sort_by(f64::total_cmp);
    let values = [0.0, 0.25, 0.5, 0.75, 1.0]
        .iter()
        .map(|&p| percentile_sorted(&sorted, p))
        .collect();
    SummaryVector::new(values, SummarySchema::Mg1Pct5)
}

/// Dot products `<S_i, A_j>` of every state/action column pair (state index
/// outer), then the mean of each state column, then its population variance.
pub fn cross_correlation_stats(states: &Matrix, actions: &Matrix) -> Result<SummaryVector> {
    if states.rows() != actions.rows() {
        return Err(Error::dim("cross-correlation rows", states.rows(), actions.rows()));
    }
    if states.rows() == 0 {
        return Err(Error::InvalidInput("empty state trajectory".into()));
    }
    let (t, ds, da) = (states.rows(), states.cols(), actions.cols());
    let mut values = Vec::with_capacity(ds * da + 2 * ds);
    for i in 0..ds {
        for j in 0..da {
            values.push((0..t).map(|r| states.get(r, i) * actions.get(r, j)).sum());
        }
    }
    let moments: Vec<(f64, f64)> = (0..ds)
        .map(|i| mean_var(&states.column(i).collect::<Vec<_>>()))
        .collect();
    values.extend(moments.iter().map(|m| m.0));
    values.extend(moments.iter().map(|m| m.1));
    SummaryVector::new(values, SummarySchema::XCorr)
}

/// Per-feature affine standardisation, fitted once and then frozen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub shift: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    pub fn identity(dim: usize) -> Self {
        Self {
            shift: alloc::vec![0.0; dim],
            scale: alloc::vec![1.0; dim],
        }
    }

    /// Mean and standard deviation per feature; constant features get scale 1.
    pub fn fit<'a, I>(rows: I, dim: usize) -> Result<Self>
    where
        I: IntoIterator<Item = &'a [f64]>,
    {
        let mut n = 0usize;
        let mut sum = alloc::vec![0.0; dim];
        let mut sq = alloc::vec![0.0; dim];
        let rows: Vec<&[f64]> = rows.into_iter().collect();
        for row in &rows {
            if row.len() != dim {
                return Err(Error::dim("standardizer input", dim, row.len()));
            }
            n += 1;
            for (s, &v) in sum.iter_mut().zip(*row) {
                *s += v;
            }
        }
        if n == 0 {
            return Err(Error::InvalidInput("cannot fit a standardizer on no data".into()));
        }
        let mean: Vec<f64> = sum.iter().map(|s| s / n as f64).collect();
        for row in &rows {
            for ((q, &v), &m) in sq.iter_mut().zip(*row).zip(&mean) {
                *q += (v - m) * (v - m);
            }
        }
        let scale = sq
            .iter()
            .map(|q| {
                let sd = math::sqrt(q / n as f64);
                if sd > 1e-12 {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Ok(Self { shift: mean, scale })
    }

    pub fn dim(&self) -> usize {
        self.shift.len()
    }

    pub fn apply(&self, x: &[f64], out: &mut [f64]) {
        for ((o, &v), (&s, &c)) in out.iter_mut().zip(x).zip(self.shift.iter().zip(&self.scale)) {
            *o = (v - s) / c;
        }
    }
}
