//! Suite files: a versioned JSON document naming a benchmark, a scale and
//! the support/heuristic variants to run.
//!
//! Loading never stops at the first problem; every offending key is
//! collected so one edit can fix them all.

use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};

use lfi_adapt_core::benchmarks::{Benchmark, Scale, SupportVariant};
use lfi_adapt_core::{FeasibleDomain, Heuristic, InferenceConfig, SupportBounds};
use serde::Serialize;
use serde_json::{Map, Value};

pub const SCHEMA_VERSION: u64 = 1;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Problem {
    pub key: String,
    pub message: String,
}

/// Every schema violation found in one file.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub path: Option<PathBuf>,
    pub problems: Vec<Problem>,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.path {
            Some(p) => write!(f, "invalid config {}:", p.display())?,
            None => write!(f, "invalid config:")?,
        }
        for p in &self.problems {
            write!(f, "\n  {}: {}", p.key, p.message)?;
        }
        Ok(())
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, PartialEq)]
pub enum SupportSpec {
    Named(SupportVariant),
    Explicit(Vec<[f64; 2]>),
}

#[derive(Debug, Clone, PartialEq)]
pub enum HeuristicSpec {
    /// The benchmark's tuned settings for `none`, `edge`, `mode` or `centre`.
    Preset(String),
    Custom(Heuristic),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Variant {
    pub name: String,
    pub support: SupportSpec,
    pub heuristic: HeuristicSpec,
    pub feasible_domain: Option<Vec<[f64; 2]>>,
}

/// Optional replacements for the benchmark defaults.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub n_iterations: Option<usize>,
    pub successes_per_iter: Option<usize>,
    pub max_attempts_per_iter: Option<usize>,
    pub eval_samples: Option<usize>,
    pub eval_alpha: Option<f64>,
    pub hidden_layers: Option<Vec<usize>>,
    pub n_components: Option<usize>,
    pub learning_rate: Option<f64>,
    pub batch_size: Option<usize>,
    pub max_epochs: Option<usize>,
    pub patience: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Suite {
    pub benchmark: Benchmark,
    pub scale: Scale,
    pub repeats: usize,
    pub output_dir: Option<PathBuf>,
    pub overrides: Overrides,
    pub variants: Vec<Variant>,
}

const TOP_KEYS: &[&str] = &["schema_version", "benchmark", "scale", "repeats", "output_dir", "overrides", "variants"];
const VARIANT_KEYS: &[&str] = &["name", "support", "heuristic", "feasible_domain"];
const OVERRIDE_KEYS: &[&str] = &[
    "n_iterations",
    "successes_per_iter",
    "max_attempts_per_iter",
    "eval_samples",
    "eval_alpha",
    "hidden_layers",
    "n_components",
    "learning_rate",
    "batch_size",
    "max_epochs",
    "patience",
];

struct Collector(Vec<Problem>);

impl Collector {
    fn push(&mut self, key: impl Into<String>, message: impl Into<String>) {
        self.0.push(Problem { key: key.into(), message: message.into() });
    }

    fn unknown_keys(&mut self, prefix: &str, obj: &Map<String, Value>, allowed: &[&str]) {
        for k in obj.keys().filter(|k| !allowed.contains(&k.as_str())) {
            self.push(join(prefix, k), "unknown key");
        }
    }

    fn count(&mut self, key: &str, v: &Value, min: u64) -> Option<usize> {
        match v.as_u64() {
            Some(n) if n >= min => Some(n as usize),
            _ => {
                self.push(key, format!("expected an integer >= {min}"));
                None
            }
        }
    }

    fn positive(&mut self, key: &str, v: &Value) -> Option<f64> {
        match v.as_f64() {
            Some(x) if x > 0.0 && x.is_finite() => Some(x),
            _ => {
                self.push(key, "expected a positive number");
                None
            }
        }
    }

    fn intervals(&mut self, key: &str, v: &Value, dim: Option<usize>) -> Option<Vec<[f64; 2]>> {
        let rows = match v.as_array() {
            Some(rows) => rows,
            None => {
                self.push(key, "expected a list of [lower, upper] pairs");
                return None;
            }
        };
        let mut out = Vec::with_capacity(rows.len());
        for (i, row) in rows.iter().enumerate() {
            match row.as_array().map(|r| r.iter().map(Value::as_f64).collect::<Vec<_>>()).as_deref() {
                Some([Some(lo), Some(hi)]) if lo < hi && lo.is_finite() && hi.is_finite() => out.push([*lo, *hi]),
                _ => self.push(format!("{key}[{i}]"), "expected [lower, upper] with lower < upper"),
            }
        }
        if let Some(d) = dim {
            if rows.len() != d {
                self.push(key, format!("expected {d} intervals, got {}", rows.len()));
                return None;
            }
        }
        (out.len() == rows.len()).then_some(out)
    }
}

fn join(prefix: &str, key: &str) -> String {
    if prefix.is_empty() {
        key.to_string()
    } else {
        format!("{prefix}.{key}")
    }
}

fn parse_benchmark(s: &str) -> Option<Benchmark> {
    match s {
        "lotka_volterra" => Some(Benchmark::LotkaVolterra),
        "mg1" => Some(Benchmark::Mg1),
        _ => None,
    }
}

fn parse_support_variant(s: &str) -> Option<SupportVariant> {
    [
        SupportVariant::Ok,
        SupportVariant::Misspecified,
        SupportVariant::Broad,
        SupportVariant::Broader,
        SupportVariant::Broadest,
    ]
    .into_iter()
    .find(|v| v.name() == s)
}

pub fn benchmark_dim(b: Benchmark) -> usize {
    b.ground_truth().len()
}

fn valid_name(s: &str) -> bool {
    !s.is_empty() && s.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
}

impl Suite {
    pub fn load(path: &Path) -> anyhow::Result<Suite> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| anyhow::anyhow!("cannot read config {}: {e}", path.display()))?;
        Suite::parse(&text).map_err(|mut e| {
            e.path = Some(path.to_path_buf());
            e.into()
        })
    }

    pub fn parse(text: &str) -> Result<Suite, ConfigError> {
        let fail = |problems| ConfigError { path: None, problems };
        let root: Value = serde_json::from_str(text)
            .map_err(|e| fail(vec![Problem { key: "<document>".into(), message: e.to_string() }]))?;
        let Some(obj) = root.as_object() else {
            return Err(fail(vec![Problem { key: "<document>".into(), message: "expected a JSON object".into() }]));
        };
        let mut c = Collector(Vec::new());
        c.unknown_keys("", obj, TOP_KEYS);

        match obj.get("schema_version").map(Value::as_u64) {
            Some(Some(SCHEMA_VERSION)) => {}
            Some(_) => c.push("schema_version", format!("unsupported version; expected {SCHEMA_VERSION}")),
            None => c.push("schema_version", "missing"),
        }
        let benchmark = match obj.get("benchmark") {
            Some(v) => {
                let b = v.as_str().and_then(parse_benchmark);
                if b.is_none() {
                    c.push("benchmark", "expected \"lotka_volterra\" or \"mg1\"");
                }
                b
            }
            None => {
                c.push("benchmark", "missing");
                None
            }
        };
        let scale = match obj.get("scale").map(Value::as_str) {
            None => Some(Scale::Full),
            Some(Some("full")) => Some(Scale::Full),
            Some(Some("desk")) => Some(Scale::Desk),
            Some(_) => {
                c.push("scale", "expected \"full\" or \"desk\"");
                None
            }
        };
        let repeats = match obj.get("repeats") {
            Some(v) => c.count("repeats", v, 1),
            None => {
                c.push("repeats", "missing");
                None
            }
        };
        let output_dir = match obj.get("output_dir") {
            None => None,
            Some(Value::String(s)) => Some(PathBuf::from(s)),
            Some(_) => {
                c.push("output_dir", "expected a path string");
                None
            }
        };
        let overrides = match obj.get("overrides") {
            None => Overrides::default(),
            Some(Value::Object(o)) => parse_overrides(&mut c, o),
            Some(_) => {
                c.push("overrides", "expected an object");
                Overrides::default()
            }
        };
        let dim = benchmark.map(benchmark_dim);
        let variants = match obj.get("variants").map(Value::as_array) {
            Some(Some(list)) if !list.is_empty() => {
                let mut seen = BTreeSet::new();
                let mut out = Vec::new();
                for (i, v) in list.iter().enumerate() {
                    let key = format!("variants[{i}]");
                    if let Some(var) = parse_variant(&mut c, &key, v, benchmark, dim) {
                        if !seen.insert(var.name.clone()) {
                            c.push(format!("{key}.name"), format!("duplicate variant name {:?}", var.name));
                        }
                        out.push(var);
                    }
                }
                out
            }
            Some(_) => {
                c.push("variants", "expected a non-empty list");
                Vec::new()
            }
            None => {
                c.push("variants", "missing");
                Vec::new()
            }
        };

        if !c.0.is_empty() {
            return Err(fail(c.0));
        }
        let suite = Suite {
            benchmark: benchmark.expect("checked"),
            scale: scale.expect("checked"),
            repeats: repeats.expect("checked"),
            output_dir,
            overrides,
            variants,
        };
        // Semantic checks that need a fully built run description.
        let mut c = Collector(Vec::new());
        for (i, v) in suite.variants.iter().enumerate() {
            if let Err(e) = suite.check_variant(v) {
                c.push(format!("variants[{i}]"), e.to_string());
            }
        }
        if c.0.is_empty() {
            Ok(suite)
        } else {
            Err(fail(c.0))
        }
    }

    pub fn variant(&self, name: &str) -> Option<&Variant> {
        self.variants.iter().find(|v| v.name == name)
    }

    fn heuristic(&self, spec: &HeuristicSpec) -> Heuristic {
        match spec {
            HeuristicSpec::Custom(h) => h.clone(),
            HeuristicSpec::Preset(p) => match p.as_str() {
                "edge" => Heuristic::Edge(self.benchmark.edge()),
                "mode" => Heuristic::Mode(self.benchmark.mode()),
                "centre" => Heuristic::Centre,
                _ => Heuristic::None,
            },
        }
    }

    fn check_variant(&self, v: &Variant) -> lfi_adapt_core::Result<()> {
        let support = match &v.support {
            SupportSpec::Named(n) => self.benchmark.support(*n)?,
            SupportSpec::Explicit(iv) => SupportBounds::from_intervals(iv)?,
        };
        let heuristic = self.heuristic(&v.heuristic);
        heuristic.validate(support.dim())?;
        let domain = self.domain_for(v, &support, &heuristic)?;
        domain.check_contains(&support)
    }

    fn domain_for(&self, v: &Variant, support: &SupportBounds, heuristic: &Heuristic) -> lfi_adapt_core::Result<FeasibleDomain> {
        match &v.feasible_domain {
            Some(iv) => FeasibleDomain::from_intervals(iv),
            None if matches!(heuristic, Heuristic::None) => Ok(self.benchmark.enclosing_domain(support)),
            None => Ok(self.benchmark.feasible_domain()),
        }
    }

    /// The complete run description for `variant` under `seed`.
    pub fn inference_config(&self, v: &Variant, seed: u64) -> lfi_adapt_core::Result<InferenceConfig> {
        let named = match v.support {
            SupportSpec::Named(n) => n,
            SupportSpec::Explicit(_) => SupportVariant::Ok,
        };
        let heuristic = self.heuristic(&v.heuristic);
        let mut cfg = self.benchmark.config(named, heuristic.clone(), self.scale, seed)?;
        if let SupportSpec::Explicit(iv) = &v.support {
            cfg.initial_support = SupportBounds::from_intervals(iv)?;
        }
        cfg.feasible_domain = self.domain_for(v, &cfg.initial_support, &heuristic)?;
        let o = &self.overrides;
        if let Some(n) = o.n_iterations {
            cfg.n_iterations = n;
        }
        if let Some(n) = o.successes_per_iter {
            cfg.successes_per_iter = n;
        }
        if let Some(n) = o.max_attempts_per_iter {
            cfg.max_attempts_per_iter = n;
        }
        if let Some(e) = cfg.evaluation.as_mut() {
            if let Some(n) = o.eval_samples {
                e.config.n_samples = n;
            }
            if let Some(a) = o.eval_alpha {
                e.config.alpha = a;
            }
        }
        if let Some(h) = &o.hidden_layers {
            cfg.mdn.hidden_layers = h.clone();
        }
        if let Some(k) = o.n_components {
            cfg.mdn.n_components = k;
        }
        if let Some(lr) = o.learning_rate {
            cfg.mdn_train.learning_rate = lr;
        }
        if let Some(b) = o.batch_size {
            cfg.mdn_train.batch_size = b;
        }
        if let Some(m) = o.max_epochs {
            cfg.mdn_train.max_epochs = m;
        }
        if let Some(p) = o.patience {
            cfg.mdn_train.patience = p;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn parse_overrides(c: &mut Collector, o: &Map<String, Value>) -> Overrides {
    c.unknown_keys("overrides", o, OVERRIDE_KEYS);
    let key = |k: &str| format!("overrides.{k}");
    let mut out = Overrides::default();
    for (k, v) in o {
        match k.as_str() {
            "n_iterations" => out.n_iterations = c.count(&key(k), v, 1),
            "successes_per_iter" => out.successes_per_iter = c.count(&key(k), v, 1),
            "max_attempts_per_iter" => out.max_attempts_per_iter = c.count(&key(k), v, 1),
            "eval_samples" => out.eval_samples = c.count(&key(k), v, 1),
            "eval_alpha" => out.eval_alpha = c.positive(&key(k), v),
            "n_components" => out.n_components = c.count(&key(k), v, 1),
            "learning_rate" => out.learning_rate = c.positive(&key(k), v),
            "batch_size" => out.batch_size = c.count(&key(k), v, 1),
            "max_epochs" => out.max_epochs = c.count(&key(k), v, 1),
            "patience" => out.patience = c.count(&key(k), v, 1),
            "hidden_layers" => {
                let widths = v.as_array().map(|a| a.iter().map(|w| w.as_u64().filter(|&n| n > 0)).collect::<Option<Vec<_>>>());
                match widths {
                    Some(Some(w)) if !w.is_empty() => out.hidden_layers = Some(w.into_iter().map(|n| n as usize).collect()),
                    _ => c.push(key(k), "expected a non-empty list of positive widths"),
                }
            }
            _ => {}
        }
    }
    if let (Some(s), Some(m)) = (out.successes_per_iter, out.max_attempts_per_iter) {
        if s > m {
            c.push(key("successes_per_iter"), "must not exceed max_attempts_per_iter");
        }
    }
    out
}

fn parse_variant(c: &mut Collector, key: &str, v: &Value, benchmark: Option<Benchmark>, dim: Option<usize>) -> Option<Variant> {
    let Some(obj) = v.as_object() else {
        c.push(key, "expected an object");
        return None;
    };
    c.unknown_keys(key, obj, VARIANT_KEYS);
    let before = c.0.len();
    let name = match obj.get("name").map(Value::as_str) {
        Some(Some(s)) if valid_name(s) => s.to_string(),
        Some(_) => {
            c.push(format!("{key}.name"), "expected letters, digits, '_' or '-'");
            String::new()
        }
        None => {
            c.push(format!("{key}.name"), "missing");
            String::new()
        }
    };
    let support = match obj.get("support") {
        Some(Value::String(s)) => match parse_support_variant(s) {
            Some(n) if benchmark.is_some_and(|b| b.support(n).is_err()) => {
                c.push(format!("{key}.support"), format!("this benchmark has no {} support", n.name()));
                None
            }
            Some(n) => Some(SupportSpec::Named(n)),
            None => {
                c.push(format!("{key}.support"), "expected ok, misspecified, broad, broader, broadest or a list of intervals");
                None
            }
        },
        Some(iv @ Value::Array(_)) => c.intervals(&format!("{key}.support"), iv, dim).map(SupportSpec::Explicit),
        Some(_) => {
            c.push(format!("{key}.support"), "expected a support name or a list of intervals");
            None
        }
        None => {
            c.push(format!("{key}.support"), "missing");
            None
        }
    };
    let heuristic = match obj.get("heuristic") {
        None => Some(HeuristicSpec::Preset("none".into())),
        Some(Value::String(s)) if ["none", "edge", "mode", "centre"].contains(&s.as_str()) => {
            Some(HeuristicSpec::Preset(s.clone()))
        }
        Some(Value::String(_)) => {
            c.push(format!("{key}.heuristic"), "expected none, edge, mode, centre or a heuristic object");
            None
        }
        Some(h) => match serde_json::from_value::<Heuristic>(h.clone()) {
            Ok(h) => Some(HeuristicSpec::Custom(h)),
            Err(e) => {
                c.push(format!("{key}.heuristic"), e.to_string());
                None
            }
        },
    };
    let feasible_domain = match obj.get("feasible_domain") {
        None => None,
        Some(iv) => c.intervals(&format!("{key}.feasible_domain"), iv, dim),
    };
    if c.0.len() > before {
        return None;
    }
    Some(Variant { name, support: support?, heuristic: heuristic?, feasible_domain })
}
