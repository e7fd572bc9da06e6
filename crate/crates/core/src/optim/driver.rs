//! Runs a configured method for an epoch budget and records checkpoints.

use std::time::Instant;

use rand::Rng;

use crate::data::{RandomSource, STREAM_INNER_LENGTH, STREAM_SAMPLING};
use crate::diag::oracle::enum_stats_weighted;
use crate::diag::{duality_gap, should_stop, StopRule, TraceRecord};
use crate::error::{Error, Result};
use crate::objective::{sq_norm, GlmObjective, SmoothnessInfo};
use crate::schedule::{
    armijo_stochastic, default_stepsize, minibatch_smoothness, ArmijoParams, Batch, Sampler, Sampling,
    SamplingScheme, StepsizePolicy,
};

use super::jit::{lazy_compatible, lazy_step, LazyIterate, LazyRule};
use super::methods::*;
use super::sdca::{sdca_step, DualState};
use super::table::{GradientTable, TableInit, TableMode};
use super::Method;

/// Average row density below which `JitMode::Auto` picks lazy updates.
pub const AUTO_JIT_DENSITY: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum JitMode {
    #[default]
    Auto,
    On,
    Off,
}

impl std::str::FromStr for JitMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "auto" => Ok(JitMode::Auto),
            "on" => Ok(JitMode::On),
            "off" => Ok(JitMode::Off),
            other => Err(Error::invalid(format!("unknown jit mode '{other}' (expected auto, on or off)"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub method: Method,
    pub stepsize: StepsizePolicy,
    pub sampling: SamplingScheme,
    pub epochs: f64,
    pub seed: u64,
    /// Inner-loop length of SVRG/SARAH in steps; defaults to `n/b`.
    pub inner_len: Option<usize>,
    pub svrg_variant: SvrgVariant,
    /// Momentum parameter of `sgd_momentum`.
    pub beta: f64,
    pub warm_start_sgd_epochs: usize,
    /// Reference solution; required by `sgd_star`.
    pub x_star: Option<Vec<f64>>,
    /// Optimal value used for the suboptimality column.
    pub f_star: Option<f64>,
    /// Checkpoint cadence in epochs.
    pub checkpoint_every: f64,
    /// Cadence in epochs of the exact-enumeration variance column.
    pub variance_every: Option<f64>,
    pub stop: Vec<StopRule>,
    pub table_mode: TableMode,
    pub table_init: TableInit,
    /// Divide SAG's sum by the number of examples seen so far.
    pub seen_normalization: bool,
    pub jit: JitMode,
    pub record_time: bool,
    /// Keep every iterate (for low-dimensional plots).
    pub record_iterates: bool,
    /// Re-derive table averages and dual images at every checkpoint and
    /// report the largest relative discrepancy.
    pub audit: bool,
    pub x0: Option<Vec<f64>>,
}

impl RunConfig {
    pub fn new(method: Method) -> Self {
        RunConfig {
            method,
            stepsize: StepsizePolicy::TheoryDefault,
            sampling: SamplingScheme::default(),
            epochs: 30.0,
            seed: 0,
            inner_len: None,
            svrg_variant: SvrgVariant::FixedLoop,
            beta: 0.9,
            warm_start_sgd_epochs: 0,
            x_star: None,
            f_star: None,
            checkpoint_every: 1.0,
            variance_every: None,
            stop: Vec::new(),
            table_mode: TableMode::Scalar,
            table_init: TableInit::Zero,
            seen_normalization: false,
            jit: JitMode::Auto,
            record_time: false,
            record_iterates: false,
            audit: false,
            x0: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StopReason {
    Budget,
    Rule(StopRule),
}

#[derive(Debug, Clone)]
pub struct Trace {
    pub records: Vec<TraceRecord>,
    pub x: Vec<f64>,
    pub grad_evals: u64,
    /// Constant stepsize used, if any.
    pub stepsize: Option<f64>,
    pub stop_reason: StopReason,
    pub used_jit: bool,
    /// Coordinates written by lazy steps.
    pub touched: Option<u64>,
    /// Iterates after every step when requested (the first is `x0`).
    pub iterates: Vec<Vec<f64>>,
    /// Largest audited relative discrepancy, when auditing.
    pub audit_max_rel: Option<f64>,
    /// Final dual variables of SDCA.
    pub dual: Option<Vec<f64>>,
}

impl Trace {
    fn empty(x: Vec<f64>) -> Self {
        Trace {
            records: Vec::new(),
            x,
            grad_evals: 0,
            stepsize: None,
            stop_reason: StopReason::Budget,
            used_jit: false,
            touched: None,
            iterates: Vec::new(),
            audit_max_rel: None,
            dual: None,
        }
    }

    pub fn last(&self) -> Option<&TraceRecord> {
        self.records.last()
    }
}

/// A failed run with everything recorded before the failure.
#[derive(Debug)]
pub struct RunFailure {
    pub error: Error,
    pub partial: Trace,
}

impl std::fmt::Display for RunFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.error)
    }
}

impl std::error::Error for RunFailure {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

enum State {
    Gd,
    Sgd(Option<MomentumState>),
    SgdStar(StarTable),
    Table {
        table: GradientTable,
        rule: LazyRule,
        lazy: Option<LazyIterate>,
    },
    Svrg(SvrgState),
    Sarah(SarahState),
    Sdca(DualState),
}

fn validate(config: &RunConfig, obj: &GlmObjective) -> Result<()> {
    let m = config.method;
    if !(config.epochs >= 0.0) || !config.epochs.is_finite() {
        return Err(Error::config(format!("epochs must be finite and ≥ 0, got {}", config.epochs)));
    }
    if !(config.checkpoint_every > 0.0) {
        return Err(Error::config("checkpoint cadence must be > 0 epochs"));
    }
    if let Some(v) = config.variance_every {
        if !(v > 0.0) {
            return Err(Error::config("variance cadence must be > 0 epochs"));
        }
    }
    if !obj.loss().is_smooth() && m != Method::Sdca {
        return Err(Error::config(format!(
            "the {} loss is not differentiable; only sdca supports it",
            obj.loss().name()
        )));
    }
    if m == Method::SgdStar && config.x_star.is_none() {
        return Err(Error::config("sgd_star needs a reference solution x*"));
    }
    for v in [&config.x_star, &config.x0].into_iter().flatten() {
        if v.len() != obj.d() {
            return Err(Error::Dimension {
                expected: obj.d(),
                got: v.len(),
            });
        }
    }
    if m == Method::Sdca {
        if config.sampling.kind != Sampling::Uniform || config.sampling.batch != 1 {
            return Err(Error::config("sdca samples one coordinate uniformly"));
        }
        if config.x0.is_some() {
            return Err(Error::config("sdca starts from v = 0 and ignores x0"));
        }
        if config.warm_start_sgd_epochs > 0 {
            return Err(Error::config("sdca has no SGD warm start"));
        }
    }
    if m == Method::SgdMomentum && !(0.0 < config.beta && config.beta < 1.0) {
        return Err(Error::config(format!("momentum beta must lie in (0, 1), got {}", config.beta)));
    }
    if config.seen_normalization && m != Method::Sag {
        return Err(Error::config("seen-count normalization only applies to sag"));
    }
    if let StepsizePolicy::StochasticArmijo(p) = config.stepsize {
        p.validate()?;
        if matches!(m, Method::Gd | Method::Sdca) {
            return Err(Error::config("the stochastic line search needs a stochastic primal method"));
        }
        if config.sampling.batch != 1 {
            return Err(Error::config("the stochastic line search works on single examples"));
        }
    }
    if let StepsizePolicy::Fixed(g) = config.stepsize {
        if !(g > 0.0) || !g.is_finite() {
            return Err(Error::config(format!("stepsize must be finite and > 0, got {g}")));
        }
    }
    for rule in &config.stop {
        match rule {
            StopRule::Gap(_) if m != Method::Sdca => {
                return Err(Error::config("the gap rule needs sdca, the only method with a dual"))
            }
            StopRule::GbarNorm(_) if !matches!(m, Method::Sag | Method::Saga | Method::Svrg | Method::Sarah) => {
                return Err(Error::config(format!("{m} keeps no gradient estimate for the gbar rule")))
            }
            StopRule::GradNorm(_) if !obj.loss().is_smooth() => {
                return Err(Error::config("the gradient rule needs a differentiable loss"))
            }
            _ => {}
        }
    }
    Ok(())
}

fn needs_smoothness(config: &RunConfig, obj: &GlmObjective) -> bool {
    config.method != Method::Sdca
        && (matches!(config.stepsize, StepsizePolicy::TheoryDefault | StepsizePolicy::MiniBatchDefault)
            || config.sampling.kind == Sampling::Lipschitz
            || obj.l1() > 0.0)
}

fn resolve_stepsize(config: &RunConfig, s: Option<&SmoothnessInfo>, n: usize) -> Result<Option<f64>> {
    if config.method == Method::Sdca {
        return Ok(None);
    }
    let info = || s.ok_or_else(|| Error::config("smoothness constants unavailable"));
    Ok(match config.stepsize {
        StepsizePolicy::Fixed(g) => Some(g),
        StepsizePolicy::TheoryDefault => Some(default_stepsize(config.method, info()?, &config.sampling, n)?),
        StepsizePolicy::MiniBatchDefault => {
            let s = info()?;
            let b = if config.method == Method::Gd { n } else { config.sampling.batch };
            Some(1.0 / minibatch_smoothness(s.l_max, s.l_full, n, b)?)
        }
        StepsizePolicy::StochasticArmijo(_) => None,
    })
}

fn average_density(obj: &GlmObjective) -> f64 {
    obj.data().nnz() as f64 / (obj.n() as f64 * obj.d() as f64)
}

fn jit_decision(config: &RunConfig, obj: &GlmObjective) -> Result<bool> {
    let eligible = || -> Result<()> {
        if !matches!(config.method, Method::Sag | Method::Saga) {
            return Err(Error::config("lazy updates exist for sag and saga only"));
        }
        if config.sampling.batch != 1 || config.sampling.kind != Sampling::Uniform {
            return Err(Error::config("lazy updates need uniform single-example sampling"));
        }
        if !matches!(config.stepsize, StepsizePolicy::Fixed(_) | StepsizePolicy::TheoryDefault | StepsizePolicy::MiniBatchDefault) {
            return Err(Error::config("lazy updates need a constant stepsize"));
        }
        if config.table_mode != TableMode::Scalar {
            return Err(Error::config("lazy updates need the scalar gradient table"));
        }
        if config.seen_normalization {
            return Err(Error::config("lazy updates need a fixed divisor"));
        }
        if obj.l1() > 0.0 {
            return Err(Error::config("lazy updates do not support the L1 prox"));
        }
        if config.record_iterates {
            return Err(Error::config("recording every iterate defeats lazy updates"));
        }
        Ok(())
    };
    match config.jit {
        JitMode::Off => Ok(false),
        JitMode::On => eligible().map(|_| true),
        JitMode::Auto => Ok(eligible().is_ok() && average_density(obj) < AUTO_JIT_DENSITY),
    }
}

struct Recorder<'a> {
    obj: &'a GlmObjective,
    config: &'a RunConfig,
    l_full: f64,
    probs: Vec<f64>,
    start: Instant,
    var_bucket: Option<u64>,
    audit_max: f64,
}

impl Recorder<'_> {
    fn record(&mut self, state: &State, x: &[f64], evals: u64) -> Result<TraceRecord> {
        let obj = self.obj;
        let n = obj.n() as f64;
        let f = obj.composite_value(x)?;
        if !f.is_finite() {
            return Err(Error::NotConverged(format!("objective is not finite at {} gradient evaluations", evals)));
        }
        let grad_norm = if obj.loss().is_smooth() {
            let g = obj.full_grad(x)?;
            Some(obj.stationarity(x, &g, self.l_full))
        } else {
            None
        };
        let lam_x = |x: &[f64], base: &[f64]| -> f64 {
            sq_norm(&base.iter().zip(x).map(|(b, xj)| b + obj.l2() * xj).collect::<Vec<_>>()).sqrt()
        };
        let estimate_norm = match state {
            State::Table { table, .. } => Some(lam_x(x, &table.mean())),
            State::Svrg(s) => Some(sq_norm(s.reference_grad()).sqrt()),
            State::Sarah(s) => Some(sq_norm(s.current()).sqrt()),
            _ => None,
        };
        let gap = match state {
            State::Sdca(dual) => Some(duality_gap(obj, dual)?),
            _ => None,
        };
        let var_est = match self.config.variance_every {
            Some(every) => {
                let bucket = (evals as f64 / (every * n)).floor() as u64;
                if self.var_bucket.is_none_or(|b| bucket > b) {
                    self.var_bucket = Some(bucket);
                    self.variance(state, x)?
                } else {
                    None
                }
            }
            None => None,
        };
        if self.config.audit {
            let rel = |a: &[f64], b: &[f64]| {
                let scale = b.iter().map(|v| v.abs()).fold(0.0, f64::max);
                let diff = a.iter().zip(b).map(|(u, v)| (u - v).abs()).fold(0.0, f64::max);
                if scale > 0.0 {
                    diff / scale
                } else {
                    diff
                }
            };
            let err = match state {
                State::Table { table, .. } => rel(&table.mean(), &table.recompute_mean(obj)),
                State::Sdca(dual) => rel(&dual.w, &dual.recompute_w(obj)),
                _ => 0.0,
            };
            self.audit_max = self.audit_max.max(err);
        }
        Ok(TraceRecord {
            epoch: evals as f64 / n,
            grad_evals: evals,
            f,
            subopt: self.config.f_star.map(|fs| f - fs),
            grad_norm,
            var_est,
            gap,
            time_s: self.config.record_time.then(|| self.start.elapsed().as_secs_f64()),
            estimate_norm,
        })
    }

    fn variance(&self, state: &State, x: &[f64]) -> Result<Option<f64>> {
        let (obj, probs) = (self.obj, &self.probs);
        let st = match state {
            State::Gd => enum_stats_weighted(obj, &FullGradient, x, probs)?,
            State::Sgd(_) => enum_stats_weighted(obj, &SgdEstimator, x, probs)?,
            State::SgdStar(star) => enum_stats_weighted(obj, star, x, probs)?,
            State::Table { table, rule: LazyRule::Saga, .. } => {
                enum_stats_weighted(obj, &SagaEstimator::new(table), x, probs)?
            }
            State::Table { table, rule: LazyRule::Sag, .. } => {
                enum_stats_weighted(obj, &SagEstimator { table }, x, probs)?
            }
            State::Svrg(s) if s.is_refreshed() => enum_stats_weighted(obj, s, x, probs)?,
            State::Sarah(s) => {
                match enum_stats_weighted(obj, s, x, probs) {
                    Ok(st) => st,
                    Err(Error::Precondition(_)) => return Ok(None),
                    Err(e) => return Err(e),
                }
            }
            _ => return Ok(None),
        };
        Ok(Some(st.variance))
    }
}

/// Executes `config` on `obj`.
// The failure carries the partial trace by value; runs are coarse-grained, so its size is irrelevant.
#[allow(clippy::result_large_err)]
pub fn run(config: &RunConfig, obj: &GlmObjective) -> Result<Trace, RunFailure> {
    let x0 = config.x0.clone().unwrap_or_else(|| vec![0.0; obj.d()]);
    let mut trace = Trace::empty(x0.clone());
    match run_inner(config, obj, x0, &mut trace) {
        Ok(()) => Ok(trace),
        Err(error) => Err(RunFailure { error, partial: trace }),
    }
}

fn run_inner(config: &RunConfig, obj: &GlmObjective, mut x: Vec<f64>, trace: &mut Trace) -> Result<()> {
    validate(config, obj)?;
    let n = obj.n();
    let n64 = n as u64;
    let smooth = if needs_smoothness(config, obj) { Some(obj.smoothness()?) } else { None };
    let gamma = resolve_stepsize(config, smooth.as_ref(), n)?;
    trace.stepsize = gamma;
    let lipschitz = smooth.as_ref().map(|s| s.per_example.as_slice());
    let mut sampler = Sampler::new(config.sampling, n, lipschitz)?;
    let mut rng = RandomSource::with_stream(config.seed, STREAM_SAMPLING);
    let mut inner_rng = RandomSource::with_stream(config.seed, STREAM_INNER_LENGTH);
    let use_jit = jit_decision(config, obj)?;
    trace.used_jit = use_jit;
    let armijo: Option<ArmijoParams> = match config.stepsize {
        StepsizePolicy::StochasticArmijo(p) => Some(p),
        _ => None,
    };
    let mut last_armijo = armijo.map(|p| p.gamma_max / 2.0);
    let budget = (config.epochs * n as f64).round() as u64;
    let mut evals: u64 = 0;

    let step_gamma = |gamma: Option<f64>| gamma.ok_or_else(|| Error::config("no stepsize"));

    // warm start with plain SGD at the method's stepsize
    if config.warm_start_sgd_epochs > 0 {
        let g = match (gamma, armijo) {
            (Some(g), _) => g,
            (None, Some(p)) => p.gamma_max,
            (None, None) => return Err(Error::config("warm start needs a stepsize")),
        };
        for _ in 0..config.warm_start_sgd_epochs * n {
            let batch = sampler.sample(&mut rng)?;
            sgd_step(obj, &mut x, &batch, g, None)?;
            evals += batch.len() as u64;
        }
    }

    let inner_len = config
        .inner_len
        .unwrap_or_else(|| (n / config.sampling.batch).max(1));
    let mut state = match config.method {
        Method::Gd => State::Gd,
        Method::Sgd => State::Sgd(None),
        Method::SgdMomentum => State::Sgd(Some(MomentumState::new(obj.d(), config.beta)?)),
        Method::SgdStar => State::SgdStar(StarTable::new(obj, config.x_star.as_ref().expect("validated"))?),
        Method::Sag | Method::Saga => {
            let mut table =
                GradientTable::new(config.table_mode, n, obj.d()).with_seen_normalization(config.seen_normalization);
            if config.table_init == TableInit::AtStart {
                table.initialize_at(obj, &x)?;
                evals += n64;
            }
            let rule = if config.method == Method::Sag { LazyRule::Sag } else { LazyRule::Saga };
            let lazy = if use_jit {
                lazy_compatible(&table, obj)?;
                Some(LazyIterate::new(x.clone(), step_gamma(gamma)?, obj.l2())?)
            } else {
                None
            };
            State::Table { table, rule, lazy }
        }
        Method::Svrg => State::Svrg(SvrgState::new(obj.d(), inner_len, config.svrg_variant)?),
        Method::Sarah => State::Sarah(SarahState::new(obj.d(), inner_len)?),
        Method::Sdca => State::Sdca(DualState::zeros(obj)?),
    };
    if let State::Sdca(dual) = &state {
        x = dual.w.clone();
    }

    let mut rec = Recorder {
        obj,
        config,
        l_full: smooth.as_ref().map_or(1.0, |s| s.l_full),
        probs: sampler.probabilities().to_vec(),
        start: Instant::now(),
        var_bucket: None,
        audit_max: 0.0,
    };
    let is_outer_method = matches!(config.method, Method::Svrg | Method::Sarah);
    let cadence = ((config.checkpoint_every * n as f64).round() as u64).max(1);
    let mut next_ckpt = (evals / cadence + 1) * cadence;
    if config.record_iterates {
        trace.iterates.push(x.clone());
    }

    let first = rec.record(&state, &x, evals)?;
    let mut stop = None;
    if !is_outer_method {
        stop = check_rules(&config.stop, &first)?;
    }
    trace.records.push(first);

    while stop.is_none() && evals < budget {
        // outer-loop refresh
        match &mut state {
            State::Svrg(s) if s.needs_refresh() => {
                if s.variant() == SvrgVariant::SampledT {
                    let t = inner_rng.rng().gen_range(1..=inner_len);
                    s.set_inner_len(t);
                }
                s.refresh(obj, &x)?;
                evals += n64;
                let probe = boundary_record(obj, s.reference_grad(), &x, evals, rec.l_full);
                stop = check_rules(&config.stop, &probe)?;
                if stop.is_some() || evals >= next_ckpt {
                    push_checkpoint(&mut rec, &state, &x, evals, trace, &mut next_ckpt, cadence)?;
                }
                continue;
            }
            State::Sarah(s) if s.needs_refresh() => {
                s.refresh(obj, &x)?;
                evals += n64;
                let probe = boundary_record(obj, s.current(), &x, evals, rec.l_full);
                stop = check_rules(&config.stop, &probe)?;
                if stop.is_some() || evals >= next_ckpt {
                    push_checkpoint(&mut rec, &state, &x, evals, trace, &mut next_ckpt, cadence)?;
                }
                continue;
            }
            _ => {}
        }

        let batch = match &state {
            State::Gd => Batch::uniform(Vec::new()),
            _ => sampler.sample(&mut rng)?,
        };
        let gamma_k = match armijo {
            Some(p) => {
                let trial = ArmijoParams {
                    gamma_max: p.gamma_max.min(2.0 * last_armijo.expect("set with armijo")),
                    ..p
                };
                let g = estimate_for(&state, obj, &x, &batch)?;
                let dir: Vec<f64> = g.iter().map(|v| -v).collect();
                let accepted = armijo_stochastic(obj, batch.indices[0], &x, &dir, &trial)?;
                last_armijo = Some(accepted);
                accepted
            }
            // only sdca runs without a stepsize, and it ignores this value
            None => gamma.unwrap_or(0.0),
        };
        let b = batch.len() as u64;
        match &mut state {
            State::Gd => {
                gd_step(obj, &mut x, gamma_k)?;
                evals += n64;
            }
            State::Sgd(m) => {
                sgd_step(obj, &mut x, &batch, gamma_k, m.as_mut())?;
                evals += b;
            }
            State::SgdStar(star) => {
                sgd_star_step(obj, &mut x, &batch, gamma_k, star)?;
                evals += b;
            }
            State::Table { table, rule, lazy } => {
                match lazy {
                    Some(l) => lazy_step(l, table, obj, batch.indices[0], *rule)?,
                    None if *rule == LazyRule::Sag => sag_step(table, obj, &mut x, &batch, gamma_k)?,
                    None => saga_step(table, obj, &mut x, &batch, gamma_k)?,
                }
                evals += b;
            }
            State::Svrg(s) => {
                svrg_inner_step(s, obj, &mut x, &batch, gamma_k)?;
                evals += 2 * b;
            }
            State::Sarah(s) => {
                sarah_step(s, obj, &mut x, &batch, gamma_k)?;
                evals += 2 * b;
            }
            State::Sdca(dual) => {
                sdca_step(dual, obj, batch.indices[0])?;
                evals += 1;
            }
        }
        if config.record_iterates {
            trace.iterates.push(current_x(&state, &x));
        }
        if evals >= next_ckpt || evals >= budget {
            sync_x(&mut state, &mut x);
            let r = push_checkpoint(&mut rec, &state, &x, evals, trace, &mut next_ckpt, cadence)?;
            if !is_outer_method {
                stop = check_rules(&config.stop, &r)?;
            }
        }
    }

    sync_x(&mut state, &mut x);
    if trace.records.last().is_none_or(|r| r.grad_evals != evals) {
        let r = rec.record(&state, &x, evals)?;
        trace.records.push(r);
    }
    trace.grad_evals = evals;
    trace.stop_reason = stop.map_or(StopReason::Budget, StopReason::Rule);
    if let State::Table { lazy: Some(l), .. } = &state {
        trace.touched = Some(l.touched());
    }
    if let State::Sdca(dual) = &state {
        trace.dual = Some(dual.v.clone());
    }
    if config.audit {
        trace.audit_max_rel = Some(rec.audit_max);
    }
    trace.x = x;
    Ok(())
}

fn check_rules(rules: &[StopRule], record: &TraceRecord) -> Result<Option<StopRule>> {
    for rule in rules {
        if should_stop(rule, record)? {
            return Ok(Some(*rule));
        }
    }
    Ok(None)
}

/// Metrics available for free at an outer-loop boundary.
fn boundary_record(obj: &GlmObjective, grad: &[f64], x: &[f64], evals: u64, l_full: f64) -> TraceRecord {
    let norm = obj.stationarity(x, grad, l_full);
    TraceRecord {
        epoch: evals as f64 / obj.n() as f64,
        grad_evals: evals,
        grad_norm: Some(norm),
        estimate_norm: Some(norm),
        ..Default::default()
    }
}

fn push_checkpoint(
    rec: &mut Recorder<'_>,
    state: &State,
    x: &[f64],
    evals: u64,
    trace: &mut Trace,
    next_ckpt: &mut u64,
    cadence: u64,
) -> Result<TraceRecord> {
    let r = rec.record(state, x, evals)?;
    trace.records.push(r.clone());
    *next_ckpt = (evals / cadence + 1) * cadence;
    Ok(r)
}

fn current_x(state: &State, x: &[f64]) -> Vec<f64> {
    match state {
        State::Table { table, lazy: Some(l), .. } => l.snapshot(table),
        State::Sdca(dual) => dual.w.clone(),
        _ => x.to_vec(),
    }
}

/// Copies the method's notion of the iterate into `x`.
fn sync_x(state: &mut State, x: &mut [f64]) {
    match state {
        State::Table { table, lazy: Some(l), .. } => x.copy_from_slice(l.materialize(table)),
        State::Sdca(dual) => x.copy_from_slice(&dual.w),
        _ => {}
    }
}

fn estimate_for(state: &State, obj: &GlmObjective, x: &[f64], batch: &Batch) -> Result<Vec<f64>> {
    match state {
        State::Sgd(Some(m)) => {
            let g = SgdEstimator.estimate(obj, x, batch)?;
            Ok(g.iter().zip(m.buffer()).map(|(gj, mj)| m.beta() * mj + gj).collect())
        }
        State::Sgd(None) => SgdEstimator.estimate(obj, x, batch),
        State::SgdStar(star) => star.estimate(obj, x, batch),
        State::Table { table, rule: LazyRule::Saga, .. } => SagaEstimator::new(table).estimate(obj, x, batch),
        State::Table { table, rule: LazyRule::Sag, .. } => SagEstimator { table }.estimate(obj, x, batch),
        State::Svrg(s) => s.estimate(obj, x, batch),
        State::Sarah(s) => s.estimate(obj, x, batch),
        State::Gd | State::Sdca(_) => Err(Error::config("no stochastic estimate for this method")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objective::LossKind;
    use crate::synth;

    fn toy() -> GlmObjective {
        synth::sparse_toy(80, 20, 0.2, LossKind::Logistic, 0.05, 11).unwrap()
    }

    #[test]
    fn zero_epochs_gives_initial_record_only() {
        let obj = toy();
        let mut c = RunConfig::new(Method::Saga);
        c.epochs = 0.0;
        let t = run(&c, &obj).unwrap();
        assert_eq!(t.records.len(), 1);
        assert_eq!(t.records[0].grad_evals, 0);
    }

    #[test]
    fn runs_are_deterministic() {
        let obj = toy();
        for m in [Method::Sgd, Method::Saga, Method::Svrg, Method::Sarah, Method::Sdca] {
            let mut c = RunConfig::new(m);
            c.epochs = 3.0;
            if matches!(m, Method::Sgd) {
                c.stepsize = StepsizePolicy::Fixed(0.1);
            }
            let a = run(&c, &obj).unwrap();
            let b = run(&c, &obj).unwrap();
            assert_eq!(a.records, b.records, "{m}");
            assert_eq!(a.x, b.x);
        }
    }

    #[test]
    fn accounting_and_epoch_grid() {
        let obj = toy();
        let mut c = RunConfig::new(Method::Svrg);
        c.epochs = 6.0;
        let t = run(&c, &obj).unwrap();
        // refresh n + n inner steps at 2 evaluations each
        assert_eq!(t.grad_evals, 6 * 80);
        let evals: Vec<u64> = t.records.iter().map(|r| r.grad_evals).collect();
        assert!(evals.windows(2).all(|w| w[0] < w[1]));
        let mut g = RunConfig::new(Method::Gd);
        g.epochs = 4.0;
        let t = run(&g, &obj).unwrap();
        assert_eq!(t.records.iter().map(|r| r.epoch).collect::<Vec<_>>(), vec![0.0, 1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn sgd_star_requires_reference() {
        let obj = toy();
        let c = RunConfig::new(Method::SgdStar);
        let err = run(&c, &obj).unwrap_err();
        assert!(matches!(err.error, Error::Config(_)));
    }

    #[test]
    fn gap_rule_needs_sdca() {
        let obj = toy();
        let mut c = RunConfig::new(Method::Saga);
        c.stop = vec![StopRule::Gap(1e-6)];
        assert!(matches!(run(&c, &obj).unwrap_err().error, Error::Config(_)));
    }

    #[test]
    fn divergence_keeps_partial_trace() {
        let obj = toy();
        let mut c = RunConfig::new(Method::Sgd);
        c.stepsize = StepsizePolicy::Fixed(1e6);
        c.epochs = 50.0;
        let err = run(&c, &obj).unwrap_err();
        assert!(matches!(err.error, Error::Divergence { gamma } if gamma == 1e6), "{}", err.error);
        assert!(!err.partial.records.is_empty());
    }

    #[test]
    fn jit_and_dense_agree_in_driver() {
        let obj = synth::sparse_toy(200, 100, 0.03, LossKind::Logistic, 0.01, 4).unwrap();
        let mut c = RunConfig::new(Method::Saga);
        c.epochs = 5.0;
        c.jit = JitMode::On;
        let lazy = run(&c, &obj).unwrap();
        assert!(lazy.used_jit);
        c.jit = JitMode::Off;
        let dense = run(&c, &obj).unwrap();
        for (a, b) in lazy.records.iter().zip(&dense.records) {
            assert!((a.f - b.f).abs() <= 1e-10 * b.f.abs());
        }
    }

    #[test]
    fn grad_rule_stops_early() {
        let obj = toy();
        let mut c = RunConfig::new(Method::Gd);
        c.epochs = 10_000.0;
        c.stop = vec![StopRule::GradNorm(1e-6)];
        let t = run(&c, &obj).unwrap();
        assert!(matches!(t.stop_reason, StopReason::Rule(_)));
        assert!(t.last().unwrap().grad_norm.unwrap() <= 1e-6);
    }

    #[test]
    fn armijo_and_warm_start_run() {
        let obj = toy();
        let mut c = RunConfig::new(Method::Sag);
        c.stepsize = StepsizePolicy::StochasticArmijo(ArmijoParams::default());
        c.warm_start_sgd_epochs = 1;
        c.epochs = 5.0;
        let t = run(&c, &obj).unwrap();
        assert!(t.last().unwrap().f < t.records[0].f);
    }
}
