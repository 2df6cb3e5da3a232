//! Mixture density network `q(θ | x)`.
//!
//! A fully connected network maps a standardised summary vector to the
//! logits, means and log-variances of a diagonal Gaussian mixture. Means and
//! variances are produced in standardised target units and mapped back to
//! natural units inside the loss, so every density and every returned
//! mixture lives on the natural parameter scale.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math;
use crate::mog::{MixtureOfGaussians, SupportBounds};
use crate::rng::{derive_seed, rng_from_seed, SimRng};
use crate::summaries::Standardizer;

/// Lower bound added to every natural-unit variance.
pub const VARIANCE_FLOOR: f64 = 1e-6;

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Tanh,
}

impl Activation {
    fn code(self) -> u8 {
        match self {
            Activation::Relu => 0,
            Activation::Tanh => 1,
        }
    }

    fn from_code(c: u8) -> Option<Self> {
        match c {
            0 => Some(Activation::Relu),
            1 => Some(Activation::Tanh),
            _ => None,
        }
    }

    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Tanh => libm::tanh(z),
        }
    }

    /// Derivative expressed through the activation value.
    #[inline]
    fn derivative_from_output(self, a: f64) -> f64 {
        match self {
            Activation::Relu => {
                if a > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - a * a,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MdnArchitecture {
    pub input_dim: usize,
    pub hidden_layers: Vec<usize>,
    pub n_components: usize,
    pub param_dim: usize,
    pub activation: Activation,
    /// Soft limit `B` on the mean head in target-box units: a raw output `m`
    /// becomes `B tanh(m / B)`. `None` leaves the means unbounded.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_bound: Option<f64>,
}

impl MdnArchitecture {
    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.n_components == 0 || self.param_dim == 0 {
            return Err(Error::InvalidConfig(
                "input_dim, n_components and param_dim must be positive".into(),
            ));
        }
        if self.hidden_layers.contains(&0) {
            return Err(Error::InvalidConfig("hidden layer widths must be positive".into()));
        }
        if let Some(b) = self.mean_bound {
            if !(b > 0.0 && b.is_finite()) {
                return Err(Error::InvalidConfig(format!("mean_bound must be positive, got {b}")));
            }
        }
        Ok(())
    }

    /// `K` logits, `K*D` means and `K*D` log-variances.
    pub fn output_dim(&self) -> usize {
        self.n_components * (1 + 2 * self.param_dim)
    }

    fn widths(&self) -> Vec<usize> {
        let mut w = Vec::with_capacity(self.hidden_layers.len() + 2);
        w.push(self.input_dim);
        w.extend_from_slice(&self.hidden_layers);
        w.push(self.output_dim());
        w
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
    /// Continue from the current weights instead of re-initialising.
    pub warm_start: bool,
    #[serde(default = "default_holdout")]
    pub holdout_fraction: f64,
}

fn default_holdout() -> f64 {
    0.1
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            batch_size: 100,
            max_epochs: 500,
            patience: 20,
            seed: 0,
            warm_start: true,
            holdout_fraction: default_holdout(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidConfig("learning_rate must be positive".into()));
        }
        if self.batch_size == 0 || self.max_epochs == 0 {
            return Err(Error::InvalidConfig("batch_size and max_epochs must be at least 1".into()));
        }
        if !(0.0..0.5).contains(&self.holdout_fraction) {
            return Err(Error::InvalidConfig("holdout_fraction must lie in [0, 0.5)".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingReport {
    pub epochs: usize,
    pub best_epoch: usize,
    pub train_loss: Vec<f64>,
    /// Holdout loss per epoch; equal to the training loss when the dataset is
    /// too small to hold anything out.
    pub validation_loss: Vec<f64>,
    pub best_validation_loss: f64,
    pub stopped_early: bool,
    pub n_train: usize,
    pub n_holdout: usize,
}

/// Pairs `(θ, x)` stored as two row-major blocks.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Dataset {
    param_dim: usize,
    input_dim: usize,
    thetas: Vec<f64>,
    xs: Vec<f64>,
}

impl Dataset {
    pub fn new(param_dim: usize, input_dim: usize) -> Self {
        Self { param_dim, input_dim, thetas: Vec::new(), xs: Vec::new() }
    }

    pub fn push(&mut self, theta: &[f64], x: &[f64]) -> Result<()> {
        if theta.len() != self.param_dim {
            return Err(Error::dim("dataset theta", self.param_dim, theta.len()));
        }
        if x.len() != self.input_dim {
            return Err(Error::dim("dataset input", self.input_dim, x.len()));
        }
        self.thetas.extend_from_slice(theta);
        self.xs.extend_from_slice(x);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.thetas.len().checked_div(self.param_dim).unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn param_dim(&self) -> usize {
        self.param_dim
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn theta(&self, i: usize) -> &[f64] {
        &self.thetas[i * self.param_dim..(i + 1) * self.param_dim]
    }

    pub fn x(&self, i: usize) -> &[f64] {
        &self.xs[i * self.input_dim..(i + 1) * self.input_dim]
    }

    fn gather(&self, idx: &[usize]) -> (Vec<f64>, Vec<f64>) {
        let mut t = Vec::with_capacity(idx.len() * self.param_dim);
        let mut x = Vec::with_capacity(idx.len() * self.input_dim);
        for &i in idx {
            t.extend_from_slice(self.theta(i));
            x.extend_from_slice(self.x(i));
        }
        (t, x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct LayerShape {
    n_in: usize,
    n_out: usize,
    w_off: usize,
    b_off: usize,
}

/// Row-major `C = A B + beta * C` for arbitrary strides of A and B.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    rsa: usize,
    csa: usize,
    b: &[f64],
    rsb: usize,
    csb: usize,
    beta: f64,
    c: &mut [f64],
) {
    debug_assert!(m == 0 || k == 0 || a.len() > (m - 1) * rsa + (k - 1) * csa);
    debug_assert!(k == 0 || n == 0 || b.len() > (k - 1) * rsb + (n - 1) * csb);
    assert!(c.len() >= m * n);
    // SAFETY: the slices cover every index addressed through the given
    // strides (checked above) and `c` does not alias `a` or `b`.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Loss of one sample and its gradient with respect to the raw head output.
struct HeadTerms<'a> {
    k: usize,
    d: usize,
    shift: &'a [f64],
    scale: &'a [f64],
    bound: Option<f64>,
}

/// `B tanh(m / B)` and its derivative.
fn squash(m: f64, bound: Option<f64>) -> (f64, f64) {
    match bound {
        None => (m, 1.0),
        Some(b) => {
            let t = libm::tanh(m / b);
            (b * t, 1.0 - t * t)
        }
    }
}

impl HeadTerms<'_> {
    /// Returns `-log q(θ | x)`; writes `d loss / d out` into `grad` when given.
    fn loss(&self, out: &[f64], theta: &[f64], grad: Option<&mut [f64]>, scratch: &mut Vec<f64>) -> f64 {
        let (k, d) = (self.k, self.d);
        let logits = &out[..k];
        let means = &out[k..k + k * d];
        let logvars = &out[k + k * d..];
        let lse_logits = math::log_sum_exp(logits);
        scratch.clear();
        for c in 0..k {
            let mut log_n = 0.0;
            for j in 0..d {
                let s = self.scale[j];
                let mu = self.shift[j] + s * squash(means[c * d + j], self.bound).0;
                let var = s * s * math::exp(logvars[c * d + j]) + VARIANCE_FLOOR;
                let r = theta[j] - mu;
                log_n += math::ln(var) + r * r / var;
            }
            scratch.push(logits[c] - lse_logits - 0.5 * (d as f64 * math::LN_2PI + log_n));
        }
        let lse = math::log_sum_exp(scratch);
        if let Some(g) = grad {
            for c in 0..k {
                let gamma = math::exp(scratch[c] - lse);
                let w = math::exp(logits[c] - lse_logits);
                g[c] = w - gamma;
                for j in 0..d {
                    let s = self.scale[j];
                    let (m, dm) = squash(means[c * d + j], self.bound);
                    let mu = self.shift[j] + s * m;
                    let ev = math::exp(logvars[c * d + j]);
                    let var = s * s * ev + VARIANCE_FLOOR;
                    let r = theta[j] - mu;
                    g[k + c * d + j] = -gamma * r / var * s * dm;
                    g[k + k * d + c * d + j] = gamma * 0.5 * (1.0 / var - r * r / (var * var)) * s * s * ev;
                }
            }
        }
        -lse
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mdn {
    arch: MdnArchitecture,
    params: Vec<f64>,
    input_standardizer: Option<Standardizer>,
    /// Per-feature `[min, max]` of the latest training inputs; `forward`
    /// clamps into it so unseen inputs read as the nearest training extreme.
    input_envelope: Option<(Vec<f64>, Vec<f64>)>,
    target_standardizer: Standardizer,
}

impl Mdn {
    /// Fan-in scaled random weights; the logit head starts at zero so the
    /// initial mixture has uniform weights.
    pub fn new(arch: MdnArchitecture, seed: u64) -> Result<Self> {
        arch.validate()?;
        let n_params = Self::shapes_of(&arch).last().map_or(0, |s| s.b_off + s.n_out);
        let target_standardizer = Standardizer::identity(arch.param_dim);
        let mut net = Self {
            arch,
            params: vec![0.0; n_params],
            input_standardizer: None,
            input_envelope: None,
            target_standardizer,
        };
        net.initialize(seed);
        Ok(net)
    }

    fn shapes_of(arch: &MdnArchitecture) -> Vec<LayerShape> {
        let widths = arch.widths();
        let mut off = 0;
        widths
            .windows(2)
            .map(|w| {
                let s = LayerShape { n_in: w[0], n_out: w[1], w_off: off, b_off: off + w[0] * w[1] };
                off += w[0] * w[1] + w[1];
                s
            })
            .collect()
    }

    fn shapes(&self) -> Vec<LayerShape> {
        Self::shapes_of(&self.arch)
    }

    fn initialize(&mut self, seed: u64) {
        let mut rng = rng_from_seed(seed);
        let shapes = self.shapes();
        let n_layers = shapes.len();
        let k = self.arch.n_components;
        for (l, s) in shapes.iter().enumerate() {
            let gain = match self.arch.activation {
                Activation::Relu if l + 1 < n_layers => 2.0,
                _ => 1.0,
            };
            let sd = math::sqrt(gain / s.n_in as f64);
            for i in 0..s.n_in {
                for o in 0..s.n_out {
                    let logit_head = l + 1 == n_layers && o < k;
                    let z: f64 = StandardNormal.sample(&mut rng);
                    self.params[s.w_off + i * s.n_out + o] = if logit_head { 0.0 } else { sd * z };
                }
            }
            self.params[s.b_off..s.b_off + s.n_out].fill(0.0);
        }
    }

    pub fn architecture(&self) -> &MdnArchitecture {
        &self.arch
    }

    pub fn n_parameters(&self) -> usize {
        self.params.len()
    }

    pub fn parameters(&self) -> &[f64] {
        &self.params
    }

    pub fn set_parameters(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.params.len() {
            return Err(Error::dim("network parameters", self.params.len(), params.len()));
        }
        self.params.copy_from_slice(params);
        Ok(())
    }

    pub fn input_standardizer(&self) -> Option<&Standardizer> {
        self.input_standardizer.as_ref()
    }

    /// Fix the input standardisation. Training fits one on first use when
    /// none is set.
    pub fn set_input_standardizer(&mut self, s: Standardizer) -> Result<()> {
        if s.shift.len() != self.arch.input_dim || s.scale.len() != self.arch.input_dim {
            return Err(Error::dim("input standardizer", self.arch.input_dim, s.shift.len()));
        }
        self.input_standardizer = Some(s);
        Ok(())
    }

    pub fn target_standardizer(&self) -> &Standardizer {
        &self.target_standardizer
    }

    /// Standardise targets with the midpoint and half-range of `support`.
    pub fn set_target_box(&mut self, support: &SupportBounds) -> Result<()> {
        if support.dim() != self.arch.param_dim {
            return Err(Error::dim("target box", self.arch.param_dim, support.dim()));
        }
        self.target_standardizer = Standardizer {
            shift: (0..support.dim()).map(|d| support.midpoint(d)).collect(),
            scale: (0..support.dim()).map(|d| 0.5 * support.range(d)).collect(),
        };
        Ok(())
    }

    fn standardize_inputs(&self, xs: &[f64]) -> Vec<f64> {
        match &self.input_standardizer {
            None => xs.to_vec(),
            Some(s) => xs
                .chunks(self.arch.input_dim)
                .flat_map(|row| row.iter().zip(&s.shift).zip(&s.scale).map(|((v, m), c)| (v - m) / c))
                .collect(),
        }
    }

    /// Forward pass over a batch; returns every layer's activations, the
    /// standardised input first and the raw head output last.
    fn forward_batch(&self, xs: &[f64], rows: usize) -> Vec<Vec<f64>> {
        let shapes = self.shapes();
        let mut acts = Vec::with_capacity(shapes.len() + 1);
        acts.push(self.standardize_inputs(xs));
        for (l, s) in shapes.iter().enumerate() {
            let bias = &self.params[s.b_off..s.b_off + s.n_out];
            let mut z: Vec<f64> = (0..rows).flat_map(|_| bias.iter().copied()).collect();
            gemm(
                rows,
                s.n_in,
                s.n_out,
                &acts[l],
                s.n_in,
                1,
                &self.params[s.w_off..s.b_off],
                s.n_out,
                1,
                1.0,
                &mut z,
            );
            if l + 1 < shapes.len() {
                let act = self.arch.activation;
                z.iter_mut().for_each(|v| *v = act.apply(*v));
            }
            acts.push(z);
        }
        acts
    }

    fn head(&self) -> HeadTerms<'_> {
        HeadTerms {
            k: self.arch.n_components,
            d: self.arch.param_dim,
            shift: &self.target_standardizer.shift,
            scale: &self.target_standardizer.scale,
            bound: self.arch.mean_bound,
        }
    }

    fn check_batch(&self, thetas: &[f64], xs: &[f64]) -> Result<usize> {
        let (d, i) = (self.arch.param_dim, self.arch.input_dim);
        if thetas.is_empty() || thetas.len() % d != 0 {
            return Err(Error::InvalidInput(format!(
                "batch of {} theta values is not a non-empty multiple of {d}",
                thetas.len()
            )));
        }
        let rows = thetas.len() / d;
        if xs.len() != rows * i {
            return Err(Error::dim("batch inputs", rows * i, xs.len()));
        }
        Ok(rows)
    }

    pub fn input_envelope(&self) -> Option<(&[f64], &[f64])> {
        self.input_envelope.as_ref().map(|(lo, hi)| (lo.as_slice(), hi.as_slice()))
    }

    pub fn set_input_envelope(&mut self, lower: Vec<f64>, upper: Vec<f64>) -> Result<()> {
        if lower.len() != self.arch.input_dim || upper.len() != self.arch.input_dim {
            return Err(Error::dim("input envelope", self.arch.input_dim, lower.len().max(upper.len())));
        }
        if lower.iter().zip(&upper).any(|(a, b)| !(a <= b)) {
            return Err(Error::InvalidInput("input envelope needs lower <= upper".into()));
        }
        self.input_envelope = Some((lower, upper));
        Ok(())
    }

    /// Mixture parameters for input `x` in natural units, attached to `support`.
    pub fn forward(&self, x: &[f64], support: SupportBounds) -> Result<MixtureOfGaussians> {
        if x.len() != self.arch.input_dim {
            return Err(Error::dim("network input", self.arch.input_dim, x.len()));
        }
        if support.dim() != self.arch.param_dim {
            return Err(Error::dim("posterior support", self.arch.param_dim, support.dim()));
        }
        let clamped: Vec<f64> = match &self.input_envelope {
            Some((lo, hi)) => x.iter().zip(lo.iter().zip(hi)).map(|(&v, (&a, &b))| v.max(a).min(b)).collect(),
            None => x.to_vec(),
        };
        let acts = self.forward_batch(&clamped, 1);
        let out = acts.last().expect("network has an output layer");
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteOutput);
        }
        let (k, d) = (self.arch.n_components, self.arch.param_dim);
        let lse = math::log_sum_exp(&out[..k]);
        let mut weights: Vec<f64> = out[..k].iter().map(|&l| math::exp(l - lse)).collect();
        let total: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= total);
        let ts = &self.target_standardizer;
        let mut means = Vec::with_capacity(k * d);
        let mut variances = Vec::with_capacity(k * d);
        for c in 0..k {
            for j in 0..d {
                let s = ts.scale[j];
                means.push(ts.shift[j] + s * squash(out[k + c * d + j], self.arch.mean_bound).0);
                variances.push(s * s * math::exp(out[k + k * d + c * d + j]) + VARIANCE_FLOOR);
            }
        }
        if means.iter().chain(&variances).any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteOutput);
        }
        MixtureOfGaussians::new(weights, means, variances, support)
    }

    /// Mean negative log-density of a batch (`thetas` and `xs` row-major).
    pub fn nll(&self, thetas: &[f64], xs: &[f64]) -> Result<f64> {
        let rows = self.check_batch(thetas, xs)?;
        let acts = self.forward_batch(xs, rows);
        let out = acts.last().expect("network has an output layer");
        let (head, width, d) = (self.head(), self.arch.output_dim(), self.arch.param_dim);
        let mut scratch = Vec::with_capacity(self.arch.n_components);
        let total: f64 = (0..rows)
            .map(|r| head.loss(&out[r * width..(r + 1) * width], &thetas[r * d..(r + 1) * d], None, &mut scratch))
            .sum();
        Ok(total / rows as f64)
    }

    /// Mean negative log-density and its gradient with respect to
    /// [`parameters`](Self::parameters).
    pub fn loss_and_gradient(&self, thetas: &[f64], xs: &[f64]) -> Result<(f64, Vec<f64>)> {
        let rows = self.check_batch(thetas, xs)?;
        let mut grad = vec![0.0; self.params.len()];
        let loss = self.accumulate_gradient(thetas, xs, rows, &mut grad);
        Ok((loss, grad))
    }

    fn accumulate_gradient(&self, thetas: &[f64], xs: &[f64], rows: usize, grad: &mut [f64]) -> f64 {
        let acts = self.forward_batch(xs, rows);
        let shapes = self.shapes();
        let (head, width, d) = (self.head(), self.arch.output_dim(), self.arch.param_dim);
        let out = acts.last().expect("network has an output layer");
        let inv_rows = 1.0 / rows as f64;
        let mut delta = vec![0.0; rows * width];
        let mut scratch = Vec::with_capacity(self.arch.n_components);
        let mut loss = 0.0;
        for r in 0..rows {
            let g = &mut delta[r * width..(r + 1) * width];
            loss += head.loss(&out[r * width..(r + 1) * width], &thetas[r * d..(r + 1) * d], Some(g), &mut scratch);
            g.iter_mut().for_each(|v| *v *= inv_rows);
        }
        for (l, s) in shapes.iter().enumerate().rev() {
            let input = &acts[l];
            gemm(
                s.n_in,
                rows,
                s.n_out,
                input,
                1,
                s.n_in,
                &delta,
                s.n_out,
                1,
                0.0,
                &mut grad[s.w_off..s.b_off],
            );
            let gb = &mut grad[s.b_off..s.b_off + s.n_out];
            gb.fill(0.0);
            for row in delta.chunks(s.n_out) {
                gb.iter_mut().zip(row).for_each(|(b, v)| *b += v);
            }
            if l == 0 {
                break;
            }
            let mut back = vec![0.0; rows * s.n_in];
            gemm(
                rows,
                s.n_out,
                s.n_in,
                &delta,
                s.n_out,
                1,
                &self.params[s.w_off..s.b_off],
                1,
                s.n_out,
                0.0,
                &mut back,
            );
            let act = self.arch.activation;
            back.iter_mut().zip(input).for_each(|(b, &a)| *b *= act.derivative_from_output(a));
            delta = back;
        }
        loss * inv_rows
    }

    /// Minibatch Adam on the mean negative log-density with holdout early
    /// stopping. On return the network holds the best-holdout weights. A
    /// non-finite loss restores the last finite weights and returns
    /// [`Error::TrainingDiverged`].
    pub fn train(&mut self, data: &Dataset, cfg: &TrainConfig) -> Result<TrainingReport> {
        cfg.validate()?;
        if data.param_dim() != self.arch.param_dim || data.input_dim() != self.arch.input_dim {
            return Err(Error::dim("dataset input", self.arch.input_dim, data.input_dim()));
        }
        if data.is_empty() {
            return Err(Error::InvalidInput("cannot train on an empty dataset".into()));
        }
        if self.input_standardizer.is_none() {
            let s = Standardizer::fit((0..data.len()).map(|i| data.x(i)), data.input_dim())?;
            self.input_standardizer = Some(s);
        }
        let mut lower = data.x(0).to_vec();
        let mut upper = lower.clone();
        for i in 1..data.len() {
            for ((lo, hi), &v) in lower.iter_mut().zip(upper.iter_mut()).zip(data.x(i)) {
                *lo = lo.min(v);
                *hi = hi.max(v);
            }
        }
        self.input_envelope = Some((lower, upper));
        if !cfg.warm_start {
            self.initialize(cfg.seed);
        }
        let mut rng: SimRng = rng_from_seed(cfg.seed);
        let (holdout_idx, mut train_idx): (Vec<usize>, Vec<usize>) = if data.len() >= 10 {
            (0..data.len()).partition(|&i| in_holdout(i, cfg.holdout_fraction))
        } else {
            (Vec::new(), (0..data.len()).collect())
        };
        if train_idx.is_empty() {
            return Err(Error::InvalidInput("holdout left no training data".into()));
        }
        let n_holdout = holdout_idx.len();
        let (val_t, val_x) = data.gather(if n_holdout > 0 { &holdout_idx } else { &train_idx });
        let batch = cfg.batch_size.min(train_idx.len());

        let mut m = vec![0.0; self.params.len()];
        let mut v = vec![0.0; self.params.len()];
        let mut grad = vec![0.0; self.params.len()];
        let mut step = 0i32;
        let mut best = self.nll(&val_t, &val_x)?;
        let mut best_params = self.params.clone();
        if !best.is_finite() {
            return Err(Error::TrainingDiverged { epoch: 0 });
        }
        let mut report = TrainingReport {
            epochs: 0,
            best_epoch: 0,
            train_loss: Vec::new(),
            validation_loss: Vec::new(),
            best_validation_loss: best,
            stopped_early: false,
            n_train: train_idx.len(),
            n_holdout,
        };
        let mut stale = 0;
        for epoch in 1..=cfg.max_epochs {
            train_idx.shuffle(&mut rng);
            let mut epoch_loss = 0.0;
            for chunk in train_idx.chunks(batch) {
                let (t, x) = data.gather(chunk);
                let loss = self.accumulate_gradient(&t, &x, chunk.len(), &mut grad);
                if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                    self.params = best_params;
                    return Err(Error::TrainingDiverged { epoch });
                }
                epoch_loss += loss * chunk.len() as f64;
                step += 1;
                let bc1 = 1.0 - libm::pow(ADAM_BETA1, step as f64);
                let bc2 = 1.0 - libm::pow(ADAM_BETA2, step as f64);
                let lr = cfg.learning_rate * math::sqrt(bc2) / bc1;
                for (((p, g), mi), vi) in self.params.iter_mut().zip(&grad).zip(&mut m).zip(&mut v) {
                    *mi = ADAM_BETA1 * *mi + (1.0 - ADAM_BETA1) * g;
                    *vi = ADAM_BETA2 * *vi + (1.0 - ADAM_BETA2) * g * g;
                    *p -= lr * *mi / (math::sqrt(*vi) + ADAM_EPS);
                }
            }
            let val = self.nll(&val_t, &val_x)?;
            report.epochs = epoch;
            report.train_loss.push(epoch_loss / train_idx.len() as f64);
            report.validation_loss.push(val);
            if !val.is_finite() {
                self.params = best_params;
                return Err(Error::TrainingDiverged { epoch });
            }
            if val < best {
                best = val;
                best_params.copy_from_slice(&self.params);
                report.best_epoch = epoch;
                report.best_validation_loss = val;
                stale = 0;
            } else {
                stale += 1;
                if stale >= cfg.patience {
                    report.stopped_early = true;
                    break;
                }
            }
        }
        self.params = best_params;
        Ok(report)
    }

    /// Binary snapshot: magic, architecture header, standardisers, input
    /// envelope, then all
    /// parameters layer by layer (row-major weights, then biases) as
    /// little-endian `f64`.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(64 + 8 * self.params.len());
        out.extend_from_slice(SNAPSHOT_MAGIC);
        let put = |out: &mut Vec<u8>, v: u64| out.extend_from_slice(&v.to_le_bytes());
        put(&mut out, self.arch.input_dim as u64);
        put(&mut out, self.arch.hidden_layers.len() as u64);
        for &w in &self.arch.hidden_layers {
            put(&mut out, w as u64);
        }
        put(&mut out, self.arch.n_components as u64);
        put(&mut out, self.arch.param_dim as u64);
        out.push(self.arch.activation.code());
        out.extend_from_slice(&self.arch.mean_bound.unwrap_or(0.0).to_le_bytes());
        let put_f = |out: &mut Vec<u8>, xs: &[f64]| xs.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes()));
        match &self.input_standardizer {
            Some(s) => {
                out.push(1);
                put_f(&mut out, &s.shift);
                put_f(&mut out, &s.scale);
            }
            None => out.push(0),
        }
        match &self.input_envelope {
            Some((lo, hi)) => {
                out.push(1);
                put_f(&mut out, lo);
                put_f(&mut out, hi);
            }
            None => out.push(0),
        }
        put_f(&mut out, &self.target_standardizer.shift);
        put_f(&mut out, &self.target_standardizer.scale);
        put_f(&mut out, &self.params);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(SNAPSHOT_MAGIC.len())? != SNAPSHOT_MAGIC {
            return Err(Error::Snapshot("bad magic".into()));
        }
        let input_dim = r.usize()?;
        let n_hidden = r.usize()?;
        if n_hidden > 64 {
            return Err(Error::Snapshot(format!("{n_hidden} hidden layers")));
        }
        let hidden_layers = (0..n_hidden).map(|_| r.usize()).collect::<Result<Vec<_>>>()?;
        let n_components = r.usize()?;
        let param_dim = r.usize()?;
        let activation = Activation::from_code(r.take(1)?[0])
            .ok_or_else(|| Error::Snapshot("unknown activation".into()))?;
        let bound = r.f64s(1)?[0];
        let mean_bound = if bound == 0.0 { None } else { Some(bound) };
        let arch = MdnArchitecture { input_dim, hidden_layers, n_components, param_dim, activation, mean_bound };
        arch.validate().map_err(|e| Error::Snapshot(format!("{e}")))?;
        let input_standardizer = match r.take(1)?[0] {
            0 => None,
            1 => Some(Standardizer { shift: r.f64s(input_dim)?, scale: r.f64s(input_dim)? }),
            t => return Err(Error::Snapshot(format!("bad standardizer tag {t}"))),
        };
        let input_envelope = match r.take(1)?[0] {
            0 => None,
            1 => Some((r.f64s(input_dim)?, r.f64s(input_dim)?)),
            t => return Err(Error::Snapshot(format!("bad envelope tag {t}"))),
        };
        let target_standardizer = Standardizer { shift: r.f64s(param_dim)?, scale: r.f64s(param_dim)? };
        let n_params = Self::shapes_of(&arch).last().map_or(0, |s| s.b_off + s.n_out);
        let params = r.f64s(n_params)?;
        if r.pos != bytes.len() {
            return Err(Error::Snapshot(format!("{} trailing bytes", bytes.len() - r.pos)));
        }
        Ok(Self { arch, params, input_standardizer, input_envelope, target_standardizer })
    }
}

/// Holdout membership is a fixed function of the sample index, so a growing
/// dataset never moves a sample the network has trained on into the holdout.
fn in_holdout(index: usize, fraction: f64) -> bool {
    let u = (derive_seed(HOLDOUT_SALT, index as u64) >> 11) as f64 / (1u64 << 53) as f64;
    u < fraction
}

const HOLDOUT_SALT: u64 = 0x686f_6c64;

const SNAPSHOT_MAGIC: &[u8; 8] = b"LFIMDN02";

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::Snapshot(String::from("truncated")))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn usize(&mut self) -> Result<usize> {
        let b = self.take(8)?;
        let v = u64::from_le_bytes(b.try_into().expect("8 bytes"));
        usize::try_from(v).map_err(|_| Error::Snapshot(format!("value {v} out of range")))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let b = self.take(n.checked_mul(8).ok_or_else(|| Error::Snapshot("size overflow".into()))?)?;
        Ok(b.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_arch(k: usize, d: usize) -> MdnArchitecture {
        MdnArchitecture {
            input_dim: 3,
            hidden_layers: vec![5],
            n_components: k,
            param_dim: d,
            activation: Activation::Relu,
            mean_bound: None,
        }
    }

    fn zero_head(net: &mut Mdn) {
        let shapes = net.shapes();
        let last = shapes.last().unwrap();
        let mut p = net.parameters().to_vec();
        p[last.w_off..].fill(0.0);
        net.set_parameters(&p).unwrap();
    }

    #[test]
    fn zero_head_gives_uniform_unit_mixture() {
        let mut net = Mdn::new(small_arch(4, 2), 1).unwrap();
        zero_head(&mut net);
        let mog = net.forward(&[0.3, -1.0, 2.0], SupportBounds::cube(-5.0, 5.0, 2).unwrap()).unwrap();
        for k in 0..4 {
            assert!((mog.weights()[k] - 0.25).abs() < 1e-15);
            assert_eq!(mog.mean(k), &[0.0, 0.0]);
            assert_eq!(mog.variance(k), &[1.0 + VARIANCE_FLOOR, 1.0 + VARIANCE_FLOOR]);
        }
    }

    #[test]
    fn nll_of_standard_normal_head() {
        let arch = MdnArchitecture { input_dim: 1, hidden_layers: vec![2], n_components: 1, param_dim: 1, activation: Activation::Relu, mean_bound: None };
        let mut net = Mdn::new(arch, 3).unwrap();
        zero_head(&mut net);
        let nll = net.nll(&[0.0], &[0.7]).unwrap();
        assert!((nll - 0.5 * (math::LN_2PI + math::ln(1.0 + VARIANCE_FLOOR))).abs() < 1e-12);
        let twice = net.nll(&[0.0, 0.0], &[0.7, 0.7]).unwrap();
        assert_eq!(nll, twice);
    }

    #[test]
    fn snapshot_round_trip() {
        let mut net = Mdn::new(MdnArchitecture { mean_bound: Some(1.5), ..small_arch(2, 3) }, 9).unwrap();
        net.set_input_standardizer(Standardizer { shift: vec![1.0, 2.0, 3.0], scale: vec![2.0, 2.0, 0.5] })
            .unwrap();
        net.set_target_box(&SupportBounds::cube(-1.0, 3.0, 3).unwrap()).unwrap();
        net.set_input_envelope(vec![-1.0, 0.0, 1.0], vec![1.0, 2.0, 3.0]).unwrap();
        let bytes = net.to_bytes();
        assert_eq!(Mdn::from_bytes(&bytes).unwrap(), net);
        assert!(Mdn::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(Mdn::from_bytes(&extra).is_err());
    }

    #[test]
    fn training_is_reproducible_and_monotone_in_best() {
        let mut data = Dataset::new(1, 3);
        let mut rng = rng_from_seed(5);
        for _ in 0..200 {
            let x: [f64; 3] = [
                StandardNormal.sample(&mut rng),
                StandardNormal.sample(&mut rng),
                StandardNormal.sample(&mut rng),
            ];
            data.push(&[x[0] - x[1]], &x).unwrap();
        }
        let cfg = TrainConfig { learning_rate: 1e-2, batch_size: 32, max_epochs: 30, patience: 5, seed: 2, ..TrainConfig::default() };
        let mut a = Mdn::new(small_arch(2, 1), 4).unwrap();
        let mut b = a.clone();
        let ra = a.train(&data, &cfg).unwrap();
        let rb = b.train(&data, &cfg).unwrap();
        assert_eq!(a.parameters(), b.parameters());
        assert_eq!(ra, rb);
        assert!(ra.best_validation_loss <= ra.validation_loss[0]);
        if ra.best_epoch > 0 {
            assert_eq!(ra.validation_loss[ra.best_epoch - 1], ra.best_validation_loss);
        }
        assert_eq!(a.nll(&data.thetas, &data.xs).unwrap(), b.nll(&data.thetas, &data.xs).unwrap());
    }

    #[test]
    fn forward_clamps_to_the_training_envelope() {
        let mut net = Mdn::new(small_arch(2, 1), 6).unwrap();
        net.set_input_envelope(vec![-1.0, -1.0, -1.0], vec![1.0, 1.0, 1.0]).unwrap();
        let support = SupportBounds::cube(-5.0, 5.0, 1).unwrap();
        let far = net.forward(&[40.0, -7.0, 0.5], support.clone()).unwrap();
        let edge = net.forward(&[1.0, -1.0, 0.5], support).unwrap();
        assert_eq!(far, edge);
        assert!(net.set_input_envelope(vec![1.0; 3], vec![0.0; 3]).is_err());
    }
}
