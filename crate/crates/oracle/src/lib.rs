//! Slow, obviously-correct reference computations.
//!
//! Nothing here shares code with `lfi-adapt-core`: each function is a direct
//! transcription of the defining formula or a plain Monte-Carlo estimate, so
//! agreement with the optimised implementation is meaningful.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Exp, Normal, Uniform};

fn rng(seed: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed)
}

/// A diagonal Gaussian mixture in plain nested vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct Mixture {
    pub weights: Vec<f64>,
    pub means: Vec<Vec<f64>>,
    pub variances: Vec<Vec<f64>>,
}

impl Mixture {
    /// Density by direct summation of products of univariate densities.
    pub fn pdf(&self, x: &[f64]) -> f64 {
        let mut total = 0.0;
        for k in 0..self.weights.len() {
            let mut p = self.weights[k];
            for d in 0..x.len() {
                let v = self.variances[k][d];
                let r = x[d] - self.means[k][d];
                p *= (-r * r / (2.0 * v)).exp() / (2.0 * std::f64::consts::PI * v).sqrt();
            }
            total += p;
        }
        total
    }

    /// One draw: pick a component by inverse-CDF on the weights, then sample
    /// every coordinate.
    pub fn sample<R: Rng>(&self, rng: &mut R) -> Vec<f64> {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut k = self.weights.len() - 1;
        for (j, w) in self.weights.iter().enumerate() {
            acc += w;
            if u < acc {
                k = j;
                break;
            }
        }
        (0..self.means[k].len())
            .map(|d| {
                Normal::new(self.means[k][d], self.variances[k][d].sqrt())
                    .expect("positive variance")
                    .sample(rng)
            })
            .collect()
    }

    pub fn weighted_mean(&self) -> Vec<f64> {
        let dim = self.means[0].len();
        (0..dim)
            .map(|d| (0..self.weights.len()).map(|k| self.weights[k] * self.means[k][d]).sum())
            .collect()
    }
}

/// Fraction of `n` mixture samples whose coordinate `dim` lies in `[a, b]`.
pub fn interval_mass_mc(m: &Mixture, dim: usize, a: f64, b: f64, n: usize, seed: u64) -> f64 {
    let mut r = rng(seed);
    let hits = (0..n)
        .filter(|_| {
            let x = m.sample(&mut r)[dim];
            a <= x && x <= b
        })
        .count();
    hits as f64 / n as f64
}

/// Monte-Carlo integral of the mixture density over an axis-aligned box.
pub fn box_integral_mc(m: &Mixture, lower: &[f64], upper: &[f64], n: usize, seed: u64) -> f64 {
    let mut r = rng(seed);
    let volume: f64 = lower.iter().zip(upper).map(|(a, b)| b - a).product();
    let sum: f64 = (0..n)
        .map(|_| {
            let x: Vec<f64> = lower.iter().zip(upper).map(|(&a, &b)| r.random_range(a..b)).collect();
            m.pdf(&x)
        })
        .sum();
    volume * sum / n as f64
}

/// Component counts from independent categorical draws, for comparing
/// against stratified selection.
pub fn categorical_counts(weights: &[f64], n: usize, seed: u64) -> Vec<usize> {
    let mut r = rng(seed);
    let mut counts = vec![0; weights.len()];
    for _ in 0..n {
        let u: f64 = r.random();
        let mut acc = 0.0;
        let mut k = weights.len() - 1;
        for (j, w) in weights.iter().enumerate() {
            acc += w;
            if u < acc {
                k = j;
                break;
            }
        }
        counts[k] += 1;
    }
    counts
}

/// M/G/1 queue written out event by event: arrival times, then each job's
/// departure as `max(arrival, previous departure) + service`.
pub fn mg1_interdepartures(theta: [f64; 3], jobs: usize, seed: u64) -> Vec<f64> {
    let mut r = rng(seed);
    let (lo, hi) = (theta[0].min(theta[1]), theta[0].max(theta[1]));
    let arrivals_gap = Exp::new(theta[2]).expect("positive arrival rate");
    let mut arrival = 0.0;
    let mut last_departure = 0.0;
    let mut departures = Vec::with_capacity(jobs);
    for _ in 0..jobs {
        arrival += arrivals_gap.sample(&mut r);
        let service = if hi > lo { Uniform::new(lo, hi).expect("valid range").sample(&mut r) } else { lo };
        let start: f64 = if arrival > last_departure { arrival } else { last_departure };
        last_departure = start + service;
        departures.push(last_departure);
    }
    departures.windows(2).map(|w| w[1] - w[0]).collect()
}

/// Median by full sort, averaging the two middle values for even lengths.
pub fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).expect("finite values"));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Mean over `runs` seeds of the median interdeparture time.
pub fn mg1_mean_median(theta: [f64; 3], jobs: usize, runs: usize, seed: u64) -> f64 {
    (0..runs)
        .map(|i| median(&mg1_interdepartures(theta, jobs, seed.wrapping_add(i as u64))))
        .sum::<f64>()
        / runs as f64
}

/// Times of local maxima of a sampled series, using strict rises and
/// non-strict falls so plateaus count once.
pub fn local_maxima_times(series: &[f64], dt: f64) -> Vec<f64> {
    let mut out = Vec::new();
    let mut i = 1;
    while i + 1 < series.len() {
        if series[i] > series[i - 1] {
            let mut j = i;
            while j + 1 < series.len() && series[j + 1] == series[i] {
                j += 1;
            }
            if j + 1 < series.len() && series[j + 1] < series[i] {
                out.push(i as f64 * dt);
            }
            i = j + 1;
        } else {
            i += 1;
        }
    }
    out
}

/// True when the series has two peaks at least `gap` apart in time, each
/// standing at least `prominence` above the lowest value between them.
pub fn has_separated_peaks(series: &[f64], dt: f64, gap: f64, prominence: f64) -> bool {
    let peaks = local_maxima_times(series, dt);
    for (a, &ta) in peaks.iter().enumerate() {
        for &tb in &peaks[a + 1..] {
            if tb - ta < gap {
                continue;
            }
            let (ia, ib) = ((ta / dt).round() as usize, (tb / dt).round() as usize);
            let trough = series[ia..=ib].iter().cloned().fold(f64::INFINITY, f64::min);
            if series[ia] - trough >= prominence && series[ib] - trough >= prominence {
                return true;
            }
        }
    }
    false
}

/// Sample autocorrelation at `lag` with population normalisation: the
/// lagged covariance summed over `n - lag` pairs, divided by `n` and by the
/// variance.
pub fn autocorrelation(xs: &[f64], lag: usize) -> f64 {
    let n = xs.len();
    let mean = xs.iter().sum::<f64>() / n as f64;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
    let mut cov = 0.0;
    for t in 0..n - lag {
        cov += (xs[t] - mean) * (xs[t + lag] - mean);
    }
    cov / n as f64 / var
}

/// `<S_i, A_j>` for every state column `i` (outer) and action column `j`,
/// then the mean and population variance of every state column. Rows are
/// time steps.
pub fn xcorr_stats(states: &[Vec<f64>], actions: &[Vec<f64>]) -> Vec<f64> {
    let t = states.len();
    let ds = states[0].len();
    let da = actions[0].len();
    let mut out = Vec::new();
    for i in 0..ds {
        for j in 0..da {
            let mut s = 0.0;
            for r in 0..t {
                s += states[r][i] * actions[r][j];
            }
            out.push(s);
        }
    }
    let mut means = Vec::new();
    let mut vars = Vec::new();
    for i in 0..ds {
        let m = states.iter().map(|row| row[i]).sum::<f64>() / t as f64;
        let v = states.iter().map(|row| (row[i] - m).powi(2)).sum::<f64>() / t as f64;
        means.push(m);
        vars.push(v);
    }
    out.extend(means);
    out.extend(vars);
    out
}

/// A plain multilayer perceptron evaluated one neuron at a time. `layers`
/// holds `(weights[in][out], bias[out])`; hidden layers use ReLU.
pub fn mlp_forward(layers: &[(Vec<Vec<f64>>, Vec<f64>)], x: &[f64]) -> Vec<f64> {
    let mut a = x.to_vec();
    for (l, (w, b)) in layers.iter().enumerate() {
        let mut z = b.clone();
        for (o, zo) in z.iter_mut().enumerate() {
            for (i, ai) in a.iter().enumerate() {
                *zo += ai * w[i][o];
            }
        }
        if l + 1 < layers.len() {
            for v in z.iter_mut() {
                *v = v.max(0.0);
            }
        }
        a = z;
    }
    a
}

/// Negative log-density of `theta` under the mixture encoded by a raw
/// network head: `k` logits, `k*d` means and `k*d` log-variances, mapped to
/// natural units by `shift + scale * m` and `scale^2 * exp(s) + floor`.
pub fn head_nll(out: &[f64], theta: &[f64], k: usize, shift: &[f64], scale: &[f64], floor: f64) -> f64 {
    let d = theta.len();
    let max_logit = out[..k].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let z: f64 = out[..k].iter().map(|l| (l - max_logit).exp()).sum();
    let mixture = Mixture {
        weights: out[..k].iter().map(|l| (l - max_logit).exp() / z).collect(),
        means: (0..k).map(|c| (0..d).map(|j| shift[j] + scale[j] * out[k + c * d + j]).collect()).collect(),
        variances: (0..k)
            .map(|c| (0..d).map(|j| scale[j] * scale[j] * out[k + k * d + c * d + j].exp() + floor).collect())
            .collect(),
    };
    -mixture.pdf(theta).ln()
}

/// Sample standard error of the mean.
pub fn standard_error(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (v / n).sqrt()
}
