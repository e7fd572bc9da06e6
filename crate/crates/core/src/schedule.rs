//! Index sampling and stepsize policies.

use rand::distributions::{Distribution, WeightedIndex};

use crate::data::RandomSource;
use crate::error::{Error, Result};
use crate::objective::{sq_norm, GlmObjective, SmoothnessInfo};
use crate::optim::Method;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sampling {
    Uniform,
    /// `p_i ∝ L_i`, always drawn with replacement.
    Lipschitz,
}

impl std::str::FromStr for Sampling {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(Sampling::Uniform),
            "lipschitz" => Ok(Sampling::Lipschitz),
            other => Err(Error::invalid(format!(
                "unknown sampling '{other}' (expected uniform or lipschitz)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplingScheme {
    pub kind: Sampling,
    pub batch: usize,
    /// Only meaningful for uniform sampling; Lipschitz sampling always
    /// draws with replacement.
    pub with_replacement: bool,
}

impl Default for SamplingScheme {
    fn default() -> Self {
        SamplingScheme {
            kind: Sampling::Uniform,
            batch: 1,
            with_replacement: false,
        }
    }
}

impl SamplingScheme {
    pub fn uniform(batch: usize) -> Self {
        SamplingScheme {
            batch,
            ..Default::default()
        }
    }

    pub fn lipschitz(batch: usize) -> Self {
        SamplingScheme {
            kind: Sampling::Lipschitz,
            batch,
            with_replacement: true,
        }
    }
}

/// A sampled mini-batch with importance weights `1/(n p_i)` (all ones under
/// uniform sampling).
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub indices: Vec<usize>,
    pub weights: Vec<f64>,
}

impl Batch {
    pub fn single(i: usize) -> Self {
        Batch {
            indices: vec![i],
            weights: vec![1.0],
        }
    }

    pub fn uniform(indices: Vec<usize>) -> Self {
        let weights = vec![1.0; indices.len()];
        Batch { indices, weights }
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.indices.iter().copied().zip(self.weights.iter().copied())
    }
}

/// Draws batches according to a [`SamplingScheme`].
#[derive(Debug, Clone)]
pub struct Sampler {
    scheme: SamplingScheme,
    n: usize,
    probs: Vec<f64>,
    weights: Vec<f64>,
    weighted: Option<WeightedIndex<f64>>,
    // persistent permutation for partial Fisher–Yates
    perm: Vec<usize>,
}

impl Sampler {
    /// `lipschitz` supplies the `L_i` when the scheme is Lipschitz-weighted.
    pub fn new(scheme: SamplingScheme, n: usize, lipschitz: Option<&[f64]>) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("cannot sample from zero examples"));
        }
        if scheme.batch == 0 || scheme.batch > n {
            return Err(Error::invalid(format!(
                "batch size {} outside 1..={n}",
                scheme.batch
            )));
        }
        let (probs, weighted) = match scheme.kind {
            Sampling::Uniform => (vec![1.0 / n as f64; n], None),
            Sampling::Lipschitz => {
                let l = lipschitz
                    .ok_or_else(|| Error::config("Lipschitz sampling needs the L_i constants"))?;
                if l.len() != n {
                    return Err(Error::Dimension {
                        expected: n,
                        got: l.len(),
                    });
                }
                if l.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
                    return Err(Error::invalid("Lipschitz sampling needs every L_i > 0"));
                }
                let total: f64 = l.iter().sum();
                let probs: Vec<f64> = l.iter().map(|v| v / total).collect();
                let dist = WeightedIndex::new(l).map_err(|e| Error::invalid(e.to_string()))?;
                (probs, Some(dist))
            }
        };
        let weights = probs.iter().map(|p| 1.0 / (n as f64 * p)).collect();
        Ok(Sampler {
            scheme,
            n,
            probs,
            weights,
            weighted,
            perm: (0..n).collect(),
        })
    }

    pub fn scheme(&self) -> SamplingScheme {
        self.scheme
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probs
    }

    /// Importance weight `1/(n p_i)`.
    pub fn weight(&self, i: usize) -> f64 {
        self.weights[i]
    }

    pub fn sample(&mut self, rng: &mut RandomSource) -> Result<Batch> {
        let b = self.scheme.batch;
        let indices = match (&self.weighted, self.scheme.with_replacement) {
            (Some(dist), _) => (0..b).map(|_| dist.sample(rng.rng())).collect(),
            (None, _) if b == 1 => vec![rng.draw_index(self.n)?],
            (None, true) => (0..b)
                .map(|_| rng.draw_index(self.n))
                .collect::<Result<Vec<_>>>()?,
            (None, false) => {
                for k in 0..b {
                    let j = k + rng.draw_index(self.n - k)?;
                    self.perm.swap(k, j);
                }
                self.perm[..b].to_vec()
            }
        };
        let weights = indices.iter().map(|&i| self.weights[i]).collect();
        Ok(Batch { indices, weights })
    }
}

/// Mini-batch smoothness constant
/// `L(b) = (1/b)(n−b)/(n−1)·L_max + (n/b)(b−1)/(n−1)·L`.
pub fn minibatch_smoothness(l_max: f64, l_full: f64, n: usize, b: usize) -> Result<f64> {
    if b == 0 || b > n {
        return Err(Error::invalid(format!("batch size {b} outside 1..={n}")));
    }
    if l_full > l_max {
        return Err(Error::invalid(format!(
            "global constant {l_full} exceeds L_max {l_max}"
        )));
    }
    if n == 1 {
        return Ok(l_max);
    }
    let (nf, bf) = (n as f64, b as f64);
    Ok((1.0 / bf) * ((nf - bf) / (nf - 1.0)) * l_max + (nf / bf) * ((bf - 1.0) / (nf - 1.0)) * l_full)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArmijoParams {
    pub gamma_max: f64,
    /// Sufficient-decrease constant `c`.
    pub c: f64,
    pub backtrack: f64,
}

impl Default for ArmijoParams {
    fn default() -> Self {
        ArmijoParams {
            gamma_max: 1.0,
            c: 0.5,
            backtrack: 0.5,
        }
    }
}

impl ArmijoParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma_max > 0.0) {
            return Err(Error::invalid("Armijo gamma_max must be > 0"));
        }
        if !(self.c > 0.0 && self.c < 1.0) {
            return Err(Error::invalid("Armijo constant c must lie in (0, 1)"));
        }
        if !(self.backtrack > 0.0 && self.backtrack < 1.0) {
            return Err(Error::invalid("Armijo backtrack factor must lie in (0, 1)"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepsizePolicy {
    Fixed(f64),
    /// `1/L_max`, `1/L̄` under Lipschitz sampling, `1/L` for GD.
    TheoryDefault,
    /// `1/L(b)`.
    MiniBatchDefault,
    StochasticArmijo(ArmijoParams),
}

pub const ARMIJO_FLOOR: f64 = 1e-12;
/// Below this gradient norm the line search is skipped.
pub const ARMIJO_SKIP_NORM: f64 = 1e-8;

/// Theory-driven constant stepsize for a method.
pub fn default_stepsize(method: Method, s: &SmoothnessInfo, scheme: &SamplingScheme, n: usize) -> Result<f64> {
    let uses_full_l = method == Method::Gd || (scheme.kind == Sampling::Uniform && scheme.batch > 1);
    if uses_full_l && !s.l_full_exact {
        log::warn!("global L unavailable; using the mean L_i upper bound");
    }
    match method {
        Method::Sgd | Method::SgdMomentum => Err(Error::config(
            "plain SGD has no safe constant-stepsize default; give an explicit stepsize",
        )),
        Method::Sdca => Err(Error::config("SDCA does not use a stepsize")),
        Method::Gd => Ok(1.0 / s.l_full),
        _ => match scheme.kind {
            Sampling::Lipschitz => Ok(1.0 / s.l_mean),
            Sampling::Uniform if scheme.batch == 1 => Ok(1.0 / s.l_max),
            Sampling::Uniform => Ok(1.0 / minibatch_smoothness(s.l_max, s.l_full, n, scheme.batch)?),
        },
    }
}

/// Stochastic Armijo backtracking on `f_i` alone: the largest
/// `γ ∈ {γ_max·β^m}` with `f_i(x + γg) < f_i(x) − cγ‖∇f_i(x)‖²`.
///
/// `direction` is the update direction (the negated gradient estimate).
/// Returns `γ_max` without trials when `‖∇f_i(x)‖ ≤ 1e-8`, and
/// [`ARMIJO_FLOOR`] when every trial above the floor fails.
pub fn armijo_stochastic(
    obj: &GlmObjective,
    i: usize,
    x: &[f64],
    direction: &[f64],
    params: &ArmijoParams,
) -> Result<f64> {
    params.validate()?;
    let grad = obj.grad_i(i, x)?;
    let gnorm2 = sq_norm(&grad);
    if gnorm2.sqrt() <= ARMIJO_SKIP_NORM {
        return Ok(params.gamma_max);
    }
    let f0 = obj.value_i(i, x)?;
    if !f0.is_finite() {
        return Err(Error::invalid(format!("f_{i}(x) is not finite")));
    }
    let mut trial = vec![0.0; x.len()];
    let mut gamma = params.gamma_max;
    while gamma >= ARMIJO_FLOOR {
        for ((t, xj), dj) in trial.iter_mut().zip(x).zip(direction) {
            *t = xj + gamma * dj;
        }
        let f = obj.value_i(i, &trial)?;
        if f.is_nan() {
            return Err(Error::invalid(format!("f_{i} is NaN at trial stepsize {gamma:e}")));
        }
        if f < f0 - params.c * gamma * gnorm2 {
            return Ok(gamma);
        }
        gamma *= params.backtrack;
    }
    Ok(ARMIJO_FLOOR)
}
