//! Turning flag values into an objective and a run configuration.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use vropt_core::diag::ReferenceCache;
use vropt_core::{
    read_libsvm_file, ArmijoParams, GlmObjective, JitMode, LossKind, Method, RunConfig, SamplingScheme,
    StepsizePolicy, StopRule,
};
use vropt_core::optim::TableMode;
use vropt_core::schedule::Sampling;

use crate::error::{CliError, CliResult};

/// Environment variable naming the reference-solution cache directory.
pub const CACHE_ENV: &str = "VROPT_CACHE";
pub const DEFAULT_CACHE_DIR: &str = ".vropt-cache";

pub fn reference_cache() -> ReferenceCache {
    match std::env::var_os(CACHE_ENV) {
        Some(dir) if !dir.is_empty() => ReferenceCache::new(PathBuf::from(dir)),
        _ => ReferenceCache::new(DEFAULT_CACHE_DIR),
    }
}

/// Ordered `key = value` settings written next to every output.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Meta(pub Vec<(String, String)>);

impl Meta {
    pub fn push(&mut self, key: &str, value: impl ToString) {
        self.0.push((key.to_string(), value.to_string()));
    }

    pub fn render(&self) -> String {
        self.0.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }
}

#[derive(Debug, Clone)]
pub struct ProblemSpec {
    pub data: PathBuf,
    pub dim: Option<usize>,
    pub loss: LossKind,
    /// `None` selects `1/n`.
    pub l2: Option<f64>,
    pub l1: f64,
}

pub fn load_problem(spec: &ProblemSpec, meta: &mut Meta) -> CliResult<GlmObjective> {
    let data = read_libsvm_file(&spec.data, spec.dim).map_err(|e| CliError::from(e).context("loading data"))?;
    let n = data.n();
    let l2 = spec.l2.unwrap_or(1.0 / n as f64);
    meta.push("data", spec.data.display());
    meta.push("n", n);
    meta.push("d", data.d());
    meta.push("loss", spec.loss.name());
    meta.push("l2", if spec.l2.is_some() { fmt_f(l2) } else { format!("{} (1/n)", fmt_f(l2)) });
    meta.push("l1", fmt_f(spec.l1));
    Ok(GlmObjective::new(Arc::new(data), spec.loss, l2, spec.l1)?)
}

pub fn fmt_f(v: f64) -> String {
    format!("{v:e}")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GammaPolicy {
    /// `1/L_max` (or the method's own theory constant).
    #[default]
    Theory,
    /// `1/L(b)` for mini-batches.
    Minibatch,
    /// Stochastic Armijo backtracking per step.
    Armijo,
}

impl std::str::FromStr for GammaPolicy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "theory" => Ok(GammaPolicy::Theory),
            "minibatch" => Ok(GammaPolicy::Minibatch),
            "armijo" => Ok(GammaPolicy::Armijo),
            other => Err(format!("unknown stepsize policy '{other}' (expected theory, minibatch or armijo)")),
        }
    }
}

/// Inner-loop length: an explicit count or `n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InnerT {
    N,
    Steps(usize),
}

impl std::str::FromStr for InnerT {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        if s == "n" {
            return Ok(InnerT::N);
        }
        match s.parse::<usize>() {
            Ok(t) if t > 0 => Ok(InnerT::Steps(t)),
            _ => Err(format!("inner loop length must be a positive integer or 'n', got '{s}'")),
        }
    }
}

/// Everything that shapes one run apart from the problem and the seed.
#[derive(Debug, Clone)]
pub struct MethodSpec {
    pub method: Method,
    pub gamma: Option<f64>,
    pub gamma_policy: GammaPolicy,
    pub beta: f64,
    pub batch: usize,
    pub sampling: Sampling,
    pub inner_t: Option<InnerT>,
    pub epochs: f64,
    pub checkpoint_every: f64,
    pub jit: JitMode,
    pub table: TableMode,
    pub warm_start_sgd_epochs: usize,
    pub stop: Vec<StopRule>,
    pub timing: bool,
}

impl MethodSpec {
    pub fn new(method: Method) -> Self {
        MethodSpec {
            method,
            gamma: None,
            gamma_policy: GammaPolicy::Theory,
            beta: 0.9,
            batch: 1,
            sampling: Sampling::Uniform,
            inner_t: None,
            epochs: 30.0,
            checkpoint_every: 1.0,
            jit: JitMode::Auto,
            table: TableMode::Scalar,
            warm_start_sgd_epochs: 0,
            stop: Vec::new(),
            timing: false,
        }
    }

    /// Builds the run configuration and records every effective setting.
    pub fn to_config(&self, obj: &GlmObjective, seed: u64, meta: &mut Meta) -> CliResult<RunConfig> {
        let m = self.method;
        let mut c = RunConfig::new(m);
        if self.batch == 0 {
            return Err(CliError::usage("batch size must be ≥ 1"));
        }
        c.sampling = match self.sampling {
            Sampling::Uniform => SamplingScheme::uniform(self.batch),
            Sampling::Lipschitz => SamplingScheme::lipschitz(self.batch),
        };
        let (policy, gamma_note) = match (self.gamma_policy, self.gamma) {
            (GammaPolicy::Armijo, g) => {
                let mut p = ArmijoParams::default();
                if let Some(g) = g {
                    p.gamma_max = g;
                }
                (StepsizePolicy::StochasticArmijo(p), format!("armijo (gamma_max {})", fmt_f(p.gamma_max)))
            }
            (GammaPolicy::Theory, Some(g)) => (StepsizePolicy::Fixed(g), fmt_f(g)),
            (GammaPolicy::Minibatch, Some(_)) => {
                return Err(CliError::usage("--gamma conflicts with --gamma-policy minibatch"));
            }
            (GammaPolicy::Minibatch, None) => (StepsizePolicy::MiniBatchDefault, "minibatch (1/L(b))".into()),
            (GammaPolicy::Theory, None) if matches!(m, Method::Sgd | Method::SgdMomentum) => {
                // plain SGD runs at the same constant as the table methods
                let g = 1.0 / obj.smoothness()?.l_max;
                (StepsizePolicy::Fixed(g), format!("{} (1/L_max)", fmt_f(g)))
            }
            (GammaPolicy::Theory, None) if m == Method::Sdca => (StepsizePolicy::TheoryDefault, "none".into()),
            (GammaPolicy::Theory, None) => (StepsizePolicy::TheoryDefault, "theory".into()),
        };
        c.stepsize = policy;
        c.beta = self.beta;
        c.inner_len = self.inner_t.map(|t| match t {
            InnerT::N => obj.n(),
            InnerT::Steps(s) => s,
        });
        c.epochs = self.epochs;
        c.seed = seed;
        c.checkpoint_every = self.checkpoint_every;
        c.jit = self.jit;
        c.table_mode = self.table;
        c.warm_start_sgd_epochs = self.warm_start_sgd_epochs;
        c.stop = self.stop.clone();
        c.record_time = self.timing;

        meta.push("method", m);
        meta.push("gamma", gamma_note);
        if m == Method::SgdMomentum {
            meta.push("beta", self.beta);
        }
        meta.push(
            "sampling",
            match self.sampling {
                Sampling::Uniform => "uniform",
                Sampling::Lipschitz => "lipschitz",
            },
        );
        meta.push("batch", self.batch);
        if matches!(m, Method::Svrg | Method::Sarah) {
            let t = c.inner_len.unwrap_or((obj.n() / self.batch).max(1));
            meta.push("inner_t", t);
        }
        if matches!(m, Method::Sag | Method::Saga) {
            meta.push("table", if self.table == TableMode::Dense { "dense" } else { "scalar" });
        }
        meta.push(
            "jit",
            match self.jit {
                JitMode::Auto => "auto",
                JitMode::On => "on",
                JitMode::Off => "off",
            },
        );
        meta.push("epochs", self.epochs);
        meta.push("checkpoint_every", self.checkpoint_every);
        meta.push("seed", seed);
        if self.warm_start_sgd_epochs > 0 {
            meta.push("warm_start_sgd_epochs", self.warm_start_sgd_epochs);
        }
        for rule in &self.stop {
            meta.push("stop", stop_name(rule));
        }
        Ok(c)
    }
}

fn stop_name(rule: &StopRule) -> String {
    match rule {
        StopRule::GradNorm(e) => format!("grad:{e}"),
        StopRule::GbarNorm(e) => format!("gbar:{e}"),
        StopRule::Gap(e) => format!("gap:{e}"),
        StopRule::MaxEpochs(e) if e.is_infinite() => "epochs".into(),
        StopRule::MaxEpochs(e) => format!("epochs:{e}"),
    }
}

/// Appends `suffix` to the full file name (`trace.csv` → `trace.csv.meta`).
pub fn sidecar(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}
