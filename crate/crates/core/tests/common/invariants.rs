//! Property checks shared by the `properties` and `acceptance` targets.
//!
//! Each check drives a deterministic proptest runner and returns the first
//! (shrunk) counterexample as an error string.

use std::fmt::Debug;

use lfi_adapt_core::eval::{efficiency_rows, score, score_posterior, EvalConfig, EvalReference};
use lfi_adapt_core::heuristics::{centre_adapt, edge_adapt, mode_adapt, DimStatistic};
use lfi_adapt_core::inference::{EvalSetup, InferenceConfig, MdnShape};
use lfi_adapt_core::mdn::{Dataset, VARIANCE_FLOOR};
use lfi_adapt_core::mog::systematic_selection;
use lfi_adapt_core::rng::rng_from_seed;
use lfi_adapt_core::simulators::{
    draw_reaction, simulate_lotka_volterra_observed, simulate_mg1, LvReaction,
    Mg1Config,
};
use lfi_adapt_core::summaries::{cross_correlation_stats, summarize_mg1};
use lfi_adapt_core::{
    run_batch, run_inference, Activation, BatchStats, EdgeConfig, FeasibleDomain, Heuristic, Matrix, Mdn,
    MdnArchitecture, MixtureOfGaussians, ModeConfig, Result as CoreResult, Sampler, Simulate,
    SimulationOutcome, Simulator, SummarySchema, SupportBounds, TrainConfig,
};
use proptest::collection::vec;
use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestCaseError, TestRng, TestRunner};
use rand::Rng;

pub type Check = Result<(), String>;

fn check<S>(cases: u32, strategy: S, test: impl Fn(S::Value) -> Result<(), TestCaseError>) -> Check
where
    S: Strategy,
    S::Value: Debug,
{
    let config = Config { cases, failure_persistence: None, ..Config::default() };
    let mut runner = TestRunner::new_with_rng(config, TestRng::deterministic_rng(RngAlgorithm::ChaCha));
    runner.run(&strategy, test).map_err(|e| e.to_string())
}

fn fail(msg: String) -> TestCaseError {
    TestCaseError::fail(msg)
}

fn ok<T, E: Debug>(r: std::result::Result<T, E>) -> Result<T, TestCaseError> {
    r.map_err(|e| fail(format!("{e:?}")))
}

/// Weights, flat means and flat variances for `k` components in `d` dims.
#[derive(Debug, Clone)]
pub struct MixtureSpec {
    pub weights: Vec<f64>,
    pub means: Vec<f64>,
    pub variances: Vec<f64>,
    pub d: usize,
}

impl MixtureSpec {
    pub fn build(&self, support: SupportBounds) -> MixtureOfGaussians {
        MixtureOfGaussians::new(self.weights.clone(), self.means.clone(), self.variances.clone(), support)
            .expect("generated mixture is valid")
    }
}

fn normalise(raw: Vec<f64>) -> Vec<f64> {
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|w| w / total).collect()
}

pub fn mixture(dims: std::ops::RangeInclusive<usize>, mean_span: f64) -> impl Strategy<Value = MixtureSpec> {
    (dims, 1usize..=4).prop_flat_map(move |(d, k)| {
        (vec(0.05f64..1.0, k), vec(-mean_span..mean_span, k * d), vec(-1.5f64..1.0, k * d)).prop_map(
            move |(w, m, log_sd)| MixtureSpec {
                weights: normalise(w),
                means: m,
                variances: log_sd.iter().map(|s| (2.0 * s).exp()).collect(),
                d,
            },
        )
    })
}

/// A feasible box and a support inside it, `d` dims.
fn nested_boxes(d: usize) -> impl Strategy<Value = (FeasibleDomain, SupportBounds)> {
    vec((-10.0f64..10.0, 0.5f64..20.0, 0.05f64..0.95, 0.05f64..1.0), d).prop_map(|dims| {
        let mut pl = Vec::new();
        let mut pu = Vec::new();
        let mut tl = Vec::new();
        let mut tu = Vec::new();
        for (lo, width, start, frac) in dims {
            pl.push(lo);
            pu.push(lo + width);
            let a = lo + start * width;
            let b = a + frac * (lo + width - a);
            tl.push(a);
            tu.push(if b > a { b } else { lo + width });
        }
        (FeasibleDomain::new(pl, pu).unwrap(), SupportBounds::new(tl, tu).unwrap())
    })
}

/// A heuristic scenario: domain, support, current and previous posteriors.
#[derive(Debug, Clone)]
pub struct AdaptCase {
    pub phi: FeasibleDomain,
    pub theta: SupportBounds,
    pub current: MixtureSpec,
    pub previous: MixtureSpec,
}

fn adapt_case() -> impl Strategy<Value = AdaptCase> {
    (1usize..=3).prop_flat_map(|d| {
        (nested_boxes(d), 1usize..=4).prop_flat_map(move |((phi, theta), k)| {
            let mid: Vec<f64> = (0..d).map(|j| theta.midpoint(j)).collect();
            let half: Vec<f64> = (0..d).map(|j| 0.75 * theta.range(j)).collect();
            let comp = move |mid: Vec<f64>, half: Vec<f64>| {
                (vec(0.05f64..1.0, k), vec(-1.0f64..1.0, k * d), vec(-3.0f64..0.0, k * d)).prop_map(
                    move |(w, u, log_rel)| MixtureSpec {
                        weights: normalise(w),
                        means: u.iter().enumerate().map(|(i, x)| mid[i % d] + x * half[i % d]).collect(),
                        variances: log_rel
                            .iter()
                            .enumerate()
                            .map(|(i, s)| (half[i % d] * s.exp()).powi(2))
                            .collect(),
                        d,
                    },
                )
            };
            (Just(phi), Just(theta), comp(mid.clone(), half.clone()), comp(mid, half)).prop_map(
                |(phi, theta, current, previous)| AdaptCase { phi, theta, current, previous },
            )
        })
    })
}

fn edge_cfg() -> EdgeConfig {
    EdgeConfig { edge_zone_fraction: 0.1, mass_threshold: 0.005.into(), expansion_factor: 0.2 }
}

fn mode_cfg() -> ModeConfig {
    ModeConfig { shift_threshold: 0.01, proximity_threshold: 0.4, weight_sum_threshold: 0.05.into(), expansion_factor: 0.2 }
}

fn lv_box() -> impl Strategy<Value = Vec<f64>> {
    vec(-5.0f64..2.0, 4)
}

// ---- simulators -------------------------------------------------------

pub fn simulator_determinism() -> Check {
    let mg1 = (0.0f64..10.0, 0.0f64..10.0, 0.01f64..0.35);
    check(24, (lv_box(), mg1, any::<u64>()), |(lv, (a, b, c), seed)| {
        let sim = Simulator::LotkaVolterra(Default::default());
        prop_assert_eq!(ok(sim.simulate(&lv, seed))?, ok(sim.simulate(&lv, seed))?);
        let cfg = Mg1Config::default();
        prop_assert_eq!(ok(simulate_mg1(&[a, b, c], &cfg, seed))?, ok(simulate_mg1(&[a, b, c], &cfg, seed))?);
        Ok(())
    })
}

pub fn lv_event_semantics() -> Check {
    check(24, (lv_box(), any::<u64>()), |(theta, seed)| {
        let cfg = Default::default();
        let (mut x, mut y) = (50u64, 100u64);
        let mut bad = None;
        let out = ok(simulate_lotka_volterra_observed(&theta, &cfg, seed, |e| {
            let (ex, ey) = match e.reaction {
                LvReaction::PredatorBorn => (x + 1, y),
                LvReaction::PredatorDies => (x.wrapping_sub(1), y),
                LvReaction::PreyBorn => (x, y + 1),
                LvReaction::PreyDies => (x, y.wrapping_sub(1)),
            };
            if (e.predators, e.prey) != (ex, ey) || ex > x + 1 || ey > y + 1 {
                bad.get_or_insert(format!("{:?} from ({x},{y}) gave ({},{})", e.reaction, e.predators, e.prey));
            }
            x = e.predators;
            y = e.prey;
        }))?;
        if let Some(b) = bad {
            return Err(fail(b));
        }
        if let SimulationOutcome::Success(t) = out {
            prop_assert!(t.as_slice().iter().all(|&v| v >= 0.0));
        }
        Ok(())
    })
}

/// Waiting times of a single reaction at a frozen population are
/// exponential with the reaction's rate.
pub fn lv_exponential_clock() -> Check {
    check(6, (-2.0f64..4.0, 0usize..4, any::<u64>()), |(log_rate, which, seed)| {
        let rate = log_rate.exp();
        let mut rates = [0.0; 4];
        rates[which] = rate;
        let mut rng = rng_from_seed(seed);
        let n = 10_000;
        let waits: Vec<f64> = (0..n)
            .map(|_| {
                let (w, idx) = draw_reaction(&rates, &mut rng).expect("one active reaction");
                assert_eq!(idx, which);
                w
            })
            .collect();
        let mean = waits.iter().sum::<f64>() / n as f64;
        let sd = (waits.iter().map(|w| (w - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
        let se = sd / (n as f64).sqrt();
        prop_assert!((mean - 1.0 / rate).abs() < 3.0 * se, "mean {mean} vs {} (se {se})", 1.0 / rate);
        Ok(())
    })
}

pub fn mg1_recursion() -> Check {
    let theta = (0.0f64..10.0, 0.0f64..10.0, 0.01f64..0.35);
    check(32, (theta, any::<u64>()), |((a, b, rate), seed)| {
        let cfg = Mg1Config::default();
        let (lo, hi) = (a.min(b), a.max(b));
        let out = ok(simulate_mg1(&[a, b, rate], &cfg, seed))?;
        let idts = out.trajectory().expect("m/g/1 always succeeds").as_slice().to_vec();
        prop_assert_eq!(idts.len(), cfg.num_jobs - 1);
        prop_assert!(idts.iter().all(|&v| v >= lo), "interdeparture below the shortest service");
        // A queue that never empties departs exactly one service time apart.
        let busy = ok(simulate_mg1(&[a, b, 1e9], &cfg, seed))?;
        let busy = busy.trajectory().unwrap().as_slice().to_vec();
        prop_assert!(busy.iter().all(|&v| v >= lo && v <= hi + 1e-6));
        Ok(())
    })
}

pub fn run_batch_bounds() -> Check {
    check(16, (1usize..40, 0usize..30, any::<u64>()), |(target, extra, seed)| {
        let sim = Simulator::LotkaVolterra(Default::default());
        let sampler = Sampler::Uniform(SupportBounds::cube(-7.0, 7.0, 4).unwrap());
        let max = target + extra;
        let (records, stats) = ok(run_batch(&sampler, target, max, &sim, seed))?;
        prop_assert!(records.len() <= max);
        prop_assert_eq!(records.len(), stats.attempts);
        prop_assert!(stats.successes <= target);
        prop_assert_eq!(stats.successes + stats.failures, stats.attempts);
        prop_assert!(stats.successes == target || stats.attempts == max);
        prop_assert_eq!(records.iter().filter(|r| r.outcome.is_success()).count(), stats.successes);
        Ok(())
    })
}

// ---- summaries --------------------------------------------------------

pub fn mg1_summary_permutation_invariance() -> Check {
    let idts = vec(0.0f64..20.0, 2..80).prop_flat_map(|v| (Just(v.clone()), Just(v).prop_shuffle()));
    check(64, idts, |(a, b)| {
        prop_assert_eq!(ok(summarize_mg1(&a))?.values, ok(summarize_mg1(&b))?.values);
        Ok(())
    })
}

pub fn xcorr_length() -> Check {
    let shape = (1usize..30, 1usize..5, 1usize..5)
        .prop_flat_map(|(t, ds, da)| (Just((t, ds, da)), vec(-5.0f64..5.0, t * ds), vec(-5.0f64..5.0, t * da)));
    check(64, shape, |((t, ds, da), s, a)| {
        let out = ok(cross_correlation_stats(&Matrix::new(t, ds, s).unwrap(), &Matrix::new(t, da, a).unwrap()))?;
        prop_assert_eq!(out.len(), ds * da + 2 * ds);
        Ok(())
    })
}

pub fn summaries_deterministic() -> Check {
    let lv = vec(0u32..400, 151 * 2).prop_map(|v| v.into_iter().map(f64::from).collect::<Vec<_>>());
    check(24, (lv, vec(0.0f64..20.0, 49)), |(lv, idts)| {
        let traj = Matrix::new(151, 2, lv).unwrap();
        for schema in [SummarySchema::LV_FLAT_K3, SummarySchema::LvMoments9] {
            prop_assert_eq!(ok(schema.summarize(&traj))?, ok(schema.summarize(&traj))?);
        }
        let states = Matrix::new(151, 1, traj.column(0).collect()).unwrap();
        let actions = Matrix::new(151, 1, traj.column(1).collect()).unwrap();
        prop_assert_eq!(ok(cross_correlation_stats(&states, &actions))?, ok(cross_correlation_stats(&states, &actions))?);
        let col = Matrix::from_column(idts);
        prop_assert_eq!(ok(SummarySchema::Mg1Pct5.summarize(&col))?, ok(SummarySchema::Mg1Pct5.summarize(&col))?);
        Ok(())
    })
}

// ---- mixtures ---------------------------------------------------------

/// Jittered-grid Monte-Carlo integral of `exp(log_pdf)` over a box holding
/// six standard deviations of every component.
pub fn mixture_density_integrates_to_one() -> Check {
    check(24, (mixture(1..=2, 3.0), any::<u64>()), |(spec, seed)| {
        let d = spec.d;
        let k = spec.weights.len();
        let mut lo = vec![f64::INFINITY; d];
        let mut hi = vec![f64::NEG_INFINITY; d];
        for c in 0..k {
            for j in 0..d {
                let (m, s) = (spec.means[c * d + j], spec.variances[c * d + j].sqrt());
                lo[j] = lo[j].min(m - 6.0 * s);
                hi[j] = hi[j].max(m + 6.0 * s);
            }
        }
        let mog = spec.build(SupportBounds::new(lo.clone(), hi.clone()).unwrap());
        let cells: usize = if d == 1 { 20_000 } else { 300 };
        let mut rng = rng_from_seed(seed);
        let width: Vec<f64> = (0..d).map(|j| (hi[j] - lo[j]) / cells as f64).collect();
        let mut total = 0.0;
        let n_cells = cells.pow(d as u32);
        for cell in 0..n_cells {
            let mut x = vec![0.0; d];
            let mut rest = cell;
            for j in 0..d {
                let i = rest % cells;
                rest /= cells;
                x[j] = lo[j] + (i as f64 + rng.random::<f64>()) * width[j];
            }
            total += ok(mog.log_pdf(&x))?.exp();
        }
        let integral = total * width.iter().product::<f64>();
        prop_assert!((integral - 1.0).abs() < 0.01, "integral {integral}");
        Ok(())
    })
}

pub fn samples_stay_in_support() -> Check {
    let case = mixture(1..=3, 8.0).prop_flat_map(|spec| {
        let d = spec.d;
        (Just(spec), vec((-6.0f64..6.0, 0.01f64..6.0), d), 1usize..200, any::<u64>())
    });
    check(64, case, |(spec, bounds, n, seed)| {
        let support = SupportBounds::new(bounds.iter().map(|b| b.0).collect(), bounds.iter().map(|b| b.0 + b.1).collect())
            .unwrap();
        let mog = spec.build(support.clone());
        let samples = mog.sample_low_variance(n, seed);
        prop_assert_eq!(samples.len(), n);
        prop_assert!(samples.iter().all(|s| support.contains_point(s)));
        Ok(())
    })
}

pub fn interval_mass_monotone() -> Check {
    let case = mixture(1..=3, 5.0).prop_flat_map(|spec| {
        let d = spec.d;
        (Just(spec), 0..d, 0.0f64..1.0, 0.0f64..1.0)
    });
    check(128, case, |(spec, dim, u, v)| {
        let support = SupportBounds::cube(-4.0, 4.0, spec.d).unwrap();
        let mog = spec.build(support.clone());
        let r = support.range(dim);
        let (wide_lo, wide_hi) = (support.lower()[dim] - 10.0 * r, support.upper()[dim] + 10.0 * r);
        let a = wide_lo + u.min(v) * (wide_hi - wide_lo);
        let b = wide_lo + u.max(v) * (wide_hi - wide_lo);
        let wide = mog.marginal_interval_mass(dim, wide_lo, wide_hi);
        let sub = mog.marginal_interval_mass(dim, a, b);
        prop_assert!(wide >= sub, "wide {wide} < sub {sub}");
        prop_assert!((0.0..=1.0 + 1e-12).contains(&sub));
        Ok(())
    })
}

pub fn weighted_mean_of_coincident_means() -> Check {
    let case = (1usize..=4, 1usize..=6).prop_flat_map(|(d, k)| (vec(-50.0f64..50.0, d), vec(0.01f64..1.0, k), vec(0.1f64..3.0, k * d)));
    check(128, case, |(mean, w, var)| {
        let k = w.len();
        let d = mean.len();
        let means: Vec<f64> = (0..k).flat_map(|_| mean.clone()).collect();
        let mog = ok(MixtureOfGaussians::new(normalise(w), means, var, SupportBounds::cube(-60.0, 60.0, d).unwrap()))?;
        prop_assert_eq!(mog.weighted_mean(), mean);
        Ok(())
    })
}

/// Normalised weights build a valid mixture, and stratified selection gives
/// every component `n w_k` draws up to rounding.
pub fn stratified_component_frequencies() -> Check {
    check(256, (vec(0.0f64..1.0, 1..8), 1usize..500, 0.0f64..1.0), |(raw, n, u)| {
        let raw = if raw.iter().sum::<f64>() > 0.0 { raw } else { vec![1.0] };
        let w = normalise(raw);
        prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let k = w.len();
        ok(MixtureOfGaussians::new(w.clone(), vec![0.0; k], vec![1.0; k], SupportBounds::cube(-1.0, 1.0, 1).unwrap()))?;
        let picks = systematic_selection(&w, n, u / n as f64);
        prop_assert_eq!(picks.len(), n);
        for (c, &wc) in w.iter().enumerate() {
            let count = picks.iter().filter(|&&p| p == c).count() as f64;
            prop_assert!((count - n as f64 * wc).abs() < 1.0 + 1e-9, "component {c}: {count} vs {}", n as f64 * wc);
        }
        Ok(())
    })
}

// ---- MDN --------------------------------------------------------------

fn tiny_arch() -> MdnArchitecture {
    MdnArchitecture { input_dim: 3, hidden_layers: vec![6], n_components: 2, param_dim: 1, activation: Activation::Relu, mean_bound: None }
}

/// Largest relative gap between the analytic gradient and central finite
/// differences (step 1e-5), with gradients below `1e-6` compared absolutely.
pub fn gradient_relative_error(net: &Mdn, thetas: &[f64], xs: &[f64]) -> f64 {
    let (_, grad) = net.loss_and_gradient(thetas, xs).unwrap();
    let h = 1e-5;
    let mut p = net.parameters().to_vec();
    let mut probe = net.clone();
    let mut worst = 0.0f64;
    for i in 0..p.len() {
        let orig = p[i];
        p[i] = orig + h;
        probe.set_parameters(&p).unwrap();
        let up = probe.nll(thetas, xs).unwrap();
        p[i] = orig - h;
        probe.set_parameters(&p).unwrap();
        let down = probe.nll(thetas, xs).unwrap();
        p[i] = orig;
        let fd = (up - down) / (2.0 * h);
        let err = (grad[i] - fd).abs() / grad[i].abs().max(fd.abs()).max(1e-6);
        worst = worst.max(err);
    }
    worst
}

pub fn mdn_gradient_matches_finite_differences() -> Check {
    check(50, (any::<u64>(), vec(-2.0f64..2.0, 15), vec(-3.0f64..3.0, 5)), |(seed, xs, thetas)| {
        let arch = MdnArchitecture { hidden_layers: vec![6, 6], ..tiny_arch() };
        let mut net = ok(Mdn::new(arch, seed))?;
        let mut p = net.parameters().to_vec();
        let mut rng = rng_from_seed(seed ^ 1);
        p.iter_mut().for_each(|v| *v += 0.3 * (rng.random::<f64>() - 0.5));
        ok(net.set_parameters(&p))?;
        let err = gradient_relative_error(&net, &thetas, &xs);
        prop_assert!(err < 1e-4, "max relative error {err}");
        Ok(())
    })
}

pub fn mdn_output_validity() -> Check {
    let case = (any::<u64>(), 1usize..=5, 1usize..=3, vec(-10.0f64..10.0, 3), 0.1f64..3.0);
    check(64, case, |(seed, k, d, x, spread)| {
        let arch = MdnArchitecture { n_components: k, param_dim: d, ..tiny_arch() };
        let mut net = ok(Mdn::new(arch, seed))?;
        let mut rng = rng_from_seed(seed);
        let p: Vec<f64> = (0..net.n_parameters()).map(|_| spread * (2.0 * rng.random::<f64>() - 1.0)).collect();
        ok(net.set_parameters(&p))?;
        let mog = ok(net.forward(&x, SupportBounds::cube(-5.0, 5.0, d).unwrap()))?;
        prop_assert!((mog.weights().iter().sum::<f64>() - 1.0).abs() < 1e-9);
        for c in 0..k {
            prop_assert!(mog.variance(c).iter().all(|&v| v >= VARIANCE_FLOOR));
        }
        Ok(())
    })
}

pub fn mdn_training_reproducible() -> Check {
    check(8, (any::<u64>(), vec((-2.0f64..2.0, -2.0f64..2.0, -2.0f64..2.0), 30..80)), |(seed, rows)| {
        let mut data = Dataset::new(1, 3);
        for (a, b, c) in rows {
            ok(data.push(&[a - b + 0.1 * c], &[a, b, c]))?;
        }
        let cfg = TrainConfig { learning_rate: 1e-2, batch_size: 16, max_epochs: 20, patience: 5, seed, ..TrainConfig::default() };
        let mut a = ok(Mdn::new(tiny_arch(), seed))?;
        let mut b = a.clone();
        let ra = ok(a.train(&data, &cfg))?;
        let rb = ok(b.train(&data, &cfg))?;
        prop_assert_eq!(a.parameters(), b.parameters());
        prop_assert_eq!(ra, rb);
        Ok(())
    })
}

// ---- heuristics -------------------------------------------------------

fn all_heuristics(case: &AdaptCase) -> Vec<(&'static str, SupportBounds)> {
    let theta = &case.theta;
    let cur = case.current.build(theta.clone());
    let prev = case.previous.build(theta.clone());
    vec![
        ("edge", edge_adapt(&cur, theta, &case.phi, &edge_cfg()).unwrap().0),
        ("mode", mode_adapt(&cur, &prev, theta, &case.phi, &mode_cfg(), 1).unwrap().0),
        ("centre", centre_adapt(&cur, theta, &case.phi).unwrap().0),
    ]
}

pub fn heuristics_stay_in_domain() -> Check {
    check(256, adapt_case(), |case| {
        let first = all_heuristics(&case);
        prop_assert_eq!(&first, &all_heuristics(&case), "non-deterministic");
        for (name, s) in first {
            let phi_box = SupportBounds::new(case.phi.lower().to_vec(), case.phi.upper().to_vec()).unwrap();
            prop_assert!(phi_box.contains(&s), "{name} left the domain: {s:?}");
            prop_assert!((0..s.dim()).all(|d| s.lower()[d] < s.upper()[d]), "{name} collapsed");
        }
        Ok(())
    })
}

pub fn edge_and_mode_never_contract() -> Check {
    check(256, adapt_case(), |case| {
        for (name, s) in all_heuristics(&case) {
            if name != "centre" {
                prop_assert!(s.contains(&case.theta), "{name} contracted {:?} to {s:?}", case.theta);
            }
        }
        Ok(())
    })
}

pub fn centre_preserves_range() -> Check {
    check(256, adapt_case(), |case| {
        let cur = case.current.build(case.theta.clone());
        let (s, _) = ok(centre_adapt(&cur, &case.theta, &case.phi))?;
        for d in 0..s.dim() {
            let scale = 1.0 + s.lower()[d].abs().max(s.upper()[d].abs());
            prop_assert!((s.range(d) - case.theta.range(d)).abs() <= 1e-12 * scale);
        }
        Ok(())
    })
}

pub fn edge_trigger_matches_zone_mass() -> Check {
    let one_d = adapt_case().prop_filter("one dimension", |c| c.theta.dim() == 1);
    check(256, one_d, |case| {
        let cur = case.current.build(case.theta.clone());
        let (_, trace) = ok(edge_adapt(&cur, &case.theta, &case.phi, &edge_cfg()))?;
        let (lo, hi, r) = (case.theta.lower()[0], case.theta.upper()[0], case.theta.range(0));
        let left = cur.marginal_interval_mass(0, lo, lo + 0.1 * r);
        let right = cur.marginal_interval_mass(0, hi - 0.1 * r, hi);
        prop_assert_eq!(trace.dims[0].triggered_left, left > 0.005);
        prop_assert_eq!(trace.dims[0].triggered_right, right > 0.005);
        prop_assert_eq!(trace.dims[0].statistic.clone(), DimStatistic::EdgeMass { left, right });
        Ok(())
    })
}

/// `θ -> aθ + b` applied to posterior, support and domain maps the EDGE and
/// CENTRE outputs by the same map.
pub fn heuristics_affine_covariance() -> Check {
    check(256, (adapt_case(), 0.1f64..10.0, -10.0f64..10.0), |(case, a, b)| {
        let d = case.theta.dim();
        let map = |v: &[f64]| v.iter().map(|x| a * x + b).collect::<Vec<_>>();
        let phi2 = FeasibleDomain::new(map(case.phi.lower()), map(case.phi.upper())).unwrap();
        let theta2 = SupportBounds::new(map(case.theta.lower()), map(case.theta.upper())).unwrap();
        let spec2 = MixtureSpec {
            means: map(&case.current.means),
            variances: case.current.variances.iter().map(|v| a * a * v).collect(),
            ..case.current.clone()
        };
        let cur = case.current.build(case.theta.clone());
        let cur2 = spec2.build(theta2.clone());
        let pairs = [
            (ok(edge_adapt(&cur, &case.theta, &case.phi, &edge_cfg()))?.0, ok(edge_adapt(&cur2, &theta2, &phi2, &edge_cfg()))?.0),
            (ok(centre_adapt(&cur, &case.theta, &case.phi))?.0, ok(centre_adapt(&cur2, &theta2, &phi2))?.0),
        ];
        for (s, s2) in pairs {
            for j in 0..d {
                for (x, y) in [(s.lower()[j], s2.lower()[j]), (s.upper()[j], s2.upper()[j])] {
                    let expected = a * x + b;
                    prop_assert!((expected - y).abs() <= 1e-9 * (1.0 + expected.abs()), "{expected} vs {y}");
                }
            }
        }
        Ok(())
    })
}

// ---- inference --------------------------------------------------------

fn tiny_run(heuristic: Heuristic, seed: u64, evaluate: bool) -> InferenceConfig {
    use lfi_adapt_core::benchmarks::{Benchmark, Scale, SupportVariant};
    let mut cfg = Benchmark::Mg1.config(SupportVariant::Misspecified, heuristic, Scale::Desk, seed).unwrap();
    cfg.n_iterations = 4;
    cfg.successes_per_iter = 30;
    cfg.max_attempts_per_iter = 40;
    cfg.mdn = MdnShape { hidden_layers: vec![16], ..cfg.mdn };
    cfg.mdn_train.max_epochs = 20;
    if !evaluate {
        cfg.evaluation = None;
    } else if let Some(EvalSetup { config, .. }) = cfg.evaluation.as_mut() {
        config.n_samples = 5;
    }
    cfg
}

pub fn inference_run_properties() -> Check {
    use lfi_adapt_core::benchmarks::Benchmark;
    let heuristics = prop_oneof![
        Just(Heuristic::None),
        Just(Heuristic::Edge(Benchmark::Mg1.edge())),
        Just(Heuristic::Mode(Benchmark::Mg1.mode())),
        Just(Heuristic::Centre),
    ];
    check(8, (heuristics, 0u64..1000), |(h, seed)| {
        let cfg = tiny_run(h.clone(), seed, true);
        let records = ok(run_inference(&cfg, |_, _| Ok(())))?;
        let again = ok(run_inference(&cfg, |_, _| Ok(())))?;
        prop_assert_eq!(&records, &again, "same master seed gave different runs");
        let mut total = 0;
        for (i, r) in records.iter().enumerate() {
            total += r.batch.successes;
            prop_assert_eq!(r.dataset_size, total);
            let before = if i == 0 { &cfg.initial_support } else { &records[i - 1].support_after };
            prop_assert_eq!(&r.support_before, before);
            match &h {
                Heuristic::None => prop_assert_eq!(&r.support_after, &cfg.initial_support),
                Heuristic::Edge(_) | Heuristic::Mode(_) => prop_assert!(r.support_after.contains(before)),
                Heuristic::Centre => {
                    for d in 0..before.dim() {
                        prop_assert!((r.support_after.range(d) - before.range(d)).abs() < 1e-12 * (1.0 + before.upper()[d].abs()));
                    }
                }
            }
        }
        // Evaluation reads the ground truth; inference must not.
        let blind = ok(run_inference(&tiny_run(h, seed, false), |_, _| Ok(())))?;
        for (a, b) in records.iter().zip(&blind) {
            prop_assert_eq!(&a.posterior, &b.posterior);
            prop_assert_eq!(&a.support_after, &b.support_after);
            prop_assert!(b.metrics.is_none());
        }
        Ok(())
    })
}

// ---- eval -------------------------------------------------------------

pub fn score_monotone_and_alpha_invariant() -> Check {
    check(256, (0.0f64..100.0, 1e-6f64..50.0, 0.05f64..5.0, 0.05f64..5.0), |(l, gap, a1, a2)| {
        prop_assert!(score(l, a1) > score(l + gap, a1));
        prop_assert_eq!(score(l, a1) > score(l + gap, a1), score(l, a2) > score(l + gap, a2));
        Ok(())
    })
}

struct Replay(Matrix, usize);

impl Simulate for Replay {
    fn param_dim(&self) -> usize {
        self.1
    }
    fn simulate(&self, _: &[f64], _: u64) -> CoreResult<SimulationOutcome> {
        Ok(SimulationOutcome::Success(self.0.clone()))
    }
}

pub fn replayed_reference_scores_one() -> Check {
    let case = (1usize..60, 1usize..4, 1usize..4)
        .prop_flat_map(|(rows, cols, d)| (Just((rows, cols)), vec(-100.0f64..100.0, rows * cols), vec(-3.0f64..3.0, d), any::<u64>()));
    check(64, case, |((rows, cols), data, truth, seed)| {
        let traj = Matrix::new(rows, cols, data).unwrap();
        let d = truth.len();
        let reference = EvalReference { ground_truth: truth.clone(), trajectory: traj.clone() };
        let post = ok(MixtureOfGaussians::single(truth, vec![1.0; d], SupportBounds::cube(-5.0, 5.0, d).unwrap()))?;
        let r = ok(score_posterior(&post, &reference, &Replay(traj, d), &EvalConfig::default(), seed))?;
        prop_assert_eq!(r.traj_loss, 0.0);
        prop_assert_eq!(r.traj_score, 1.0);
        Ok(())
    })
}

pub fn efficiency_totals() -> Check {
    check(128, vec((1usize..200, 0.0f64..1.0), 1..20), |batches| {
        let stats: Vec<BatchStats> = batches
            .iter()
            .map(|&(attempts, frac)| {
                let failures = (attempts as f64 * frac) as usize;
                BatchStats {
                    attempts,
                    successes: attempts - failures,
                    failures,
                    success_rate: (attempts - failures) as f64 / attempts as f64,
                    ..BatchStats::default()
                }
            })
            .collect();
        let rows = efficiency_rows(&stats);
        let total: usize = stats.iter().map(|b| b.failures).sum();
        prop_assert_eq!(rows.last().unwrap().cumulative_failures, total);
        prop_assert!(rows.windows(2).all(|w| w[1].cumulative_failures >= w[0].cumulative_failures));
        Ok(())
    })
}

/// Every check, by name.
pub const ALL: &[(&str, fn() -> Check)] = &[
    ("simulator_determinism", simulator_determinism),
    ("lv_event_semantics", lv_event_semantics),
    ("lv_exponential_clock", lv_exponential_clock),
    ("mg1_recursion", mg1_recursion),
    ("run_batch_bounds", run_batch_bounds),
    ("mg1_summary_permutation_invariance", mg1_summary_permutation_invariance),
    ("xcorr_length", xcorr_length),
    ("summaries_deterministic", summaries_deterministic),
    ("mixture_density_integrates_to_one", mixture_density_integrates_to_one),
    ("samples_stay_in_support", samples_stay_in_support),
    ("interval_mass_monotone", interval_mass_monotone),
    ("weighted_mean_of_coincident_means", weighted_mean_of_coincident_means),
    ("stratified_component_frequencies", stratified_component_frequencies),
    ("mdn_gradient_matches_finite_differences", mdn_gradient_matches_finite_differences),
    ("mdn_output_validity", mdn_output_validity),
    ("mdn_training_reproducible", mdn_training_reproducible),
    ("heuristics_stay_in_domain", heuristics_stay_in_domain),
    ("edge_and_mode_never_contract", edge_and_mode_never_contract),
    ("centre_preserves_range", centre_preserves_range),
    ("edge_trigger_matches_zone_mass", edge_trigger_matches_zone_mass),
    ("heuristics_affine_covariance", heuristics_affine_covariance),
    ("inference_run_properties", inference_run_properties),
    ("score_monotone_and_alpha_invariant", score_monotone_and_alpha_invariant),
    ("replayed_reference_scores_one", replayed_reference_scores_one),
    ("efficiency_totals", efficiency_totals),
];
