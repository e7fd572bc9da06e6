//! Experiment files for `vropt compare`.
//!
//! ```text
//! # global settings
//! data = mushrooms
//! loss = logistic
//! l2 = 1/n
//! epochs = 30
//! seeds = 0, 1, 2
//! out = results
//!
//! [method]
//! name = sag
//!
//! [method]
//! name = svrg
//! inner_t = n
//! ```
//!
//! Relative paths resolve against the directory holding the file.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use vropt_core::{LossKind, Method, StopRule};

use crate::error::{CliError, CliResult};
use crate::setup::{GammaPolicy, InnerT, MethodSpec, ProblemSpec};

#[derive(Debug, Clone)]
pub struct MethodEntry {
    /// Unique label used for file names.
    pub label: String,
    pub spec: MethodSpec,
}

#[derive(Debug, Clone)]
pub struct Experiment {
    pub problem: ProblemSpec,
    pub methods: Vec<MethodEntry>,
    pub seeds: Vec<u64>,
    pub out: PathBuf,
}

fn bad(line: usize, msg: impl std::fmt::Display) -> CliError {
    CliError::usage(format!("line {line}: {msg}"))
}

fn num<T: std::str::FromStr>(line: usize, key: &str, v: &str) -> CliResult<T> {
    v.parse::<T>().map_err(|_| bad(line, format!("bad value '{v}' for {key}")))
}

fn parse_l2(line: usize, v: &str) -> CliResult<Option<f64>> {
    if v == "1/n" {
        return Ok(None);
    }
    let x: f64 = num(line, "l2", v)?;
    if !(x >= 0.0) || !x.is_finite() {
        return Err(bad(line, "l2 must be finite and ≥ 0"));
    }
    Ok(Some(x))
}

#[derive(Default)]
struct Globals {
    data: Option<PathBuf>,
    dim: Option<usize>,
    loss: Option<LossKind>,
    l2: Option<Option<f64>>,
    l1: Option<f64>,
    epochs: Option<f64>,
    seeds: Option<Vec<u64>>,
    checkpoint_every: Option<f64>,
    out: Option<PathBuf>,
    jit: Option<vropt_core::JitMode>,
}

struct Block {
    start: usize,
    name: Option<(usize, Method)>,
    label: Option<String>,
    fields: Vec<(usize, String, String)>,
}

/// Parses and fully validates an experiment file.
pub fn parse_experiment(text: &str, base: &Path) -> CliResult<Experiment> {
    let mut g = Globals::default();
    let mut blocks: Vec<Block> = Vec::new();
    let mut seen_global: HashSet<String> = HashSet::new();

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        if content.starts_with('[') {
            if content != "[method]" {
                return Err(bad(line, format!("unknown section '{content}' (only [method] is allowed)")));
            }
            blocks.push(Block {
                start: line,
                name: None,
                label: None,
                fields: Vec::new(),
            });
            continue;
        }
        let (key, value) = content
            .split_once('=')
            .map(|(k, v)| (k.trim(), v.trim()))
            .ok_or_else(|| bad(line, format!("expected 'key = value', got '{content}'")))?;
        if value.is_empty() {
            return Err(bad(line, format!("missing value for {key}")));
        }
        if let Some(block) = blocks.last_mut() {
            match key {
                "name" => {
                    if block.name.is_some() {
                        return Err(bad(line, "name given twice in one [method] block"));
                    }
                    let m = value.parse::<Method>().map_err(|e| bad(line, e))?;
                    block.name = Some((line, m));
                }
                "label" => block.label = Some(value.to_string()),
                _ => block.fields.push((line, key.to_string(), value.to_string())),
            }
            continue;
        }
        if !seen_global.insert(key.to_string()) {
            return Err(bad(line, format!("{key} given twice")));
        }
        match key {
            "data" => g.data = Some(base.join(value)),
            "dim" => g.dim = Some(num(line, key, value)?),
            "loss" => g.loss = Some(value.parse().map_err(|e| bad(line, e))?),
            "l2" => g.l2 = Some(parse_l2(line, value)?),
            "l1" => g.l1 = Some(num(line, key, value)?),
            "epochs" => g.epochs = Some(num(line, key, value)?),
            "checkpoint_every" => g.checkpoint_every = Some(num(line, key, value)?),
            "out" => g.out = Some(base.join(value)),
            "jit" => g.jit = Some(value.parse().map_err(|e| bad(line, e))?),
            "seeds" => {
                let seeds = value
                    .split(',')
                    .map(|s| num::<u64>(line, key, s.trim()))
                    .collect::<CliResult<Vec<_>>>()?;
                g.seeds = Some(seeds);
            }
            other => return Err(bad(line, format!("unknown setting '{other}'"))),
        }
    }

    let data = g.data.ok_or_else(|| CliError::usage("experiment file sets no data path"))?;
    let out = g.out.ok_or_else(|| CliError::usage("experiment file sets no output directory"))?;
    if blocks.is_empty() {
        return Err(CliError::usage(format!(
            "experiment file lists no methods (add [method] blocks; valid names: {})",
            Method::valid_ids()
        )));
    }
    let seeds = g.seeds.unwrap_or_else(|| vec![0]);
    if seeds.is_empty() {
        return Err(CliError::usage("seed list is empty"));
    }
    let loss = g.loss.unwrap_or(LossKind::Logistic);
    let epochs = g.epochs.unwrap_or(30.0);
    if !(epochs >= 0.0) || !epochs.is_finite() {
        return Err(CliError::usage("epochs must be finite and ≥ 0"));
    }
    let checkpoint_every = g.checkpoint_every.unwrap_or(1.0);
    if !(checkpoint_every > 0.0) {
        return Err(CliError::usage("checkpoint_every must be > 0"));
    }

    let mut labels: HashSet<String> = HashSet::new();
    let mut methods = Vec::with_capacity(blocks.len());
    for block in blocks {
        let (_, method) = block
            .name
            .ok_or_else(|| bad(block.start, format!("[method] block without name (valid: {})", Method::valid_ids())))?;
        if !loss.is_smooth() && method != Method::Sdca {
            return Err(bad(
                block.start,
                format!("the {} loss is not differentiable; only sdca supports it", loss.name()),
            ));
        }
        let mut spec = MethodSpec::new(method);
        spec.epochs = epochs;
        spec.checkpoint_every = checkpoint_every;
        if let Some(j) = g.jit {
            spec.jit = j;
        }
        for (line, key, value) in &block.fields {
            let (line, key, value) = (*line, key.as_str(), value.as_str());
            match key {
                "gamma" => {
                    let v: f64 = num(line, key, value)?;
                    if !(v > 0.0) || !v.is_finite() {
                        return Err(bad(line, "gamma must be finite and > 0"));
                    }
                    spec.gamma = Some(v);
                }
                "gamma_policy" => spec.gamma_policy = value.parse::<GammaPolicy>().map_err(|e| bad(line, e))?,
                "beta" => spec.beta = num(line, key, value)?,
                "batch" => spec.batch = num(line, key, value)?,
                "sampling" => spec.sampling = value.parse().map_err(|e| bad(line, e))?,
                "inner_t" => spec.inner_t = Some(value.parse::<InnerT>().map_err(|e| bad(line, e))?),
                "table" => spec.table = value.parse().map_err(|e| bad(line, e))?,
                "jit" => spec.jit = value.parse().map_err(|e| bad(line, e))?,
                "warm_start_sgd_epochs" => spec.warm_start_sgd_epochs = num(line, key, value)?,
                "stop" => spec.stop.push(value.parse::<StopRule>().map_err(|e| bad(line, e))?),
                other => return Err(bad(line, format!("unknown method setting '{other}'"))),
            }
        }
        if spec.batch == 0 {
            return Err(bad(block.start, "batch must be ≥ 1"));
        }
        if spec.gamma_policy == GammaPolicy::Minibatch && spec.gamma.is_some() {
            return Err(bad(block.start, "gamma conflicts with gamma_policy = minibatch"));
        }
        if method == Method::SgdMomentum && !(0.0 < spec.beta && spec.beta < 1.0) {
            return Err(bad(block.start, "beta must lie in (0, 1)"));
        }
        let base_label = block.label.unwrap_or_else(|| method.id().to_string());
        if base_label.is_empty() || !base_label.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-') {
            return Err(bad(block.start, format!("label '{base_label}' must use only letters, digits, '_' or '-'")));
        }
        let mut label = base_label.clone();
        let mut k = 2;
        while !labels.insert(label.clone()) {
            label = format!("{base_label}_{k}");
            k += 1;
        }
        methods.push(MethodEntry { label, spec });
    }

    Ok(Experiment {
        problem: ProblemSpec {
            data,
            dim: g.dim,
            loss,
            l2: g.l2.unwrap_or(None),
            l1: g.l1.unwrap_or(0.0),
        },
        methods,
        seeds,
        out,
    })
}
