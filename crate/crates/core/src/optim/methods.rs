//! Primal step rules and their gradient estimators.

use crate::error::{Error, Result};
use crate::objective::GlmObjective;
use crate::schedule::Batch;

use super::table::{GradientTable, TableMode};

/// Read-only view of a method's gradient estimate at a frozen state.
///
/// `estimate` returns the direction a step would use at `x` had it drawn
/// `batch`, without mutating anything. Enumeration oracles average it over
/// every possible draw.
pub trait GradientEstimator {
    fn estimate(&self, obj: &GlmObjective, x: &[f64], batch: &Batch) -> Result<Vec<f64>>;
}

impl<F> GradientEstimator for F
where
    F: Fn(&GlmObjective, &[f64], &Batch) -> Result<Vec<f64>>,
{
    fn estimate(&self, obj: &GlmObjective, x: &[f64], batch: &Batch) -> Result<Vec<f64>> {
        self(obj, x, batch)
    }
}

fn check_batch(obj: &GlmObjective, x: &[f64], batch: &Batch) -> Result<()> {
    if batch.is_empty() {
        return Err(Error::invalid("empty mini-batch"));
    }
    if x.len() != obj.d() {
        return Err(Error::Dimension {
            expected: obj.d(),
            got: x.len(),
        });
    }
    if let Some(&i) = batch.indices.iter().find(|&&i| i >= obj.n()) {
        return Err(Error::IndexOutOfRange { index: i, len: obj.n() });
    }
    obj.loss_deriv_i(batch.indices[0], x).map(|_| ())
}

pub(crate) fn check_finite(x: &[f64], gamma: f64) -> Result<()> {
    if x.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::Divergence { gamma })
    }
}

/// `x ← prox(x − γg)`, then the divergence guard.
pub(crate) fn apply_step(obj: &GlmObjective, x: &mut [f64], g: &[f64], gamma: f64) -> Result<()> {
    for (xj, gj) in x.iter_mut().zip(g) {
        *xj -= gamma * gj;
    }
    if obj.l1() > 0.0 {
        obj.prox_in_place(gamma, x)?;
    }
    check_finite(x, gamma)
}

/// `Σ_B (w_i/b)·ℓ'(a_iᵀx)·a_i + (Σ_B w_i/b)·λx`.
fn sampled_gradient(obj: &GlmObjective, x: &[f64], batch: &Batch) -> Vec<f64> {
    let b = batch.len() as f64;
    let wsum: f64 = batch.weights.iter().sum::<f64>() / b;
    let mut g: Vec<f64> = x.iter().map(|xj| wsum * obj.l2() * xj).collect();
    for (i, w) in batch.iter() {
        let s = obj.loss_deriv_i_unchecked(i, x);
        obj.row(i).axpy_unchecked(w / b * s, &mut g);
    }
    g
}

/// Deterministic full gradient.
#[derive(Debug, Clone, Copy, Default)]
pub struct FullGradient;

impl GradientEstimator for FullGradient {
    fn estimate(&self, obj: &GlmObjective, x: &[f64], _batch: &Batch) -> Result<Vec<f64>> {
        obj.full_grad(x)
    }
}

pub fn gd_step(obj: &GlmObjective, x: &mut [f64], gamma: f64) -> Result<()> {
    let g = obj.full_grad(x)?;
    apply_step(obj, x, &g, gamma)
}

/// Plain (mini-batch, importance-weighted) stochastic gradient.
#[derive(Debug, Clone, Copy, Default)]
pub struct SgdEstimator;

impl GradientEstimator for SgdEstimator {
    fn estimate(&self, obj: &GlmObjective, x: &[f64], batch: &Batch) -> Result<Vec<f64>> {
        check_batch(obj, x, batch)?;
        Ok(sampled_gradient(obj, x, batch))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MomentumState {
    m: Vec<f64>,
    beta: f64,
}

impl MomentumState {
    pub fn new(d: usize, beta: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&beta) {
            return Err(Error::invalid(format!("momentum beta must lie in [0, 1), got {beta}")));
        }
        Ok(MomentumState {
            m: vec![0.0; d],
            beta,
        })
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn buffer(&self) -> &[f64] {
        &self.m
    }
}

/// `m ← βm + g; x ← x − γm` (plain SGD when `momentum` is `None`).
pub fn sgd_step(
    obj: &GlmObjective,
    x: &mut [f64],
    batch: &Batch,
    gamma: f64,
    momentum: Option<&mut MomentumState>,
) -> Result<()> {
    let g = SgdEstimator.estimate(obj, x, batch)?;
    match momentum {
        None => apply_step(obj, x, &g, gamma),
        Some(state) => {
            for (m, gj) in state.m.iter_mut().zip(&g) {
                *m = state.beta * *m + gj;
            }
            apply_step(obj, x, &state.m, gamma)
        }
    }
}

/// Per-example gradients at a reference solution `x*`, kept in scalar form
/// `∇f_i(x*) = ℓ'(a_iᵀx*)·a_i + λx*`.
#[derive(Debug, Clone, PartialEq)]
pub struct StarTable {
    x_star: Vec<f64>,
    derivs: Vec<f64>,
}

impl StarTable {
    pub fn new(obj: &GlmObjective, x_star: &[f64]) -> Result<Self> {
        if x_star.len() != obj.d() {
            return Err(Error::Dimension {
                expected: obj.d(),
                got: x_star.len(),
            });
        }
        let derivs = (0..obj.n())
            .map(|i| obj.loss_deriv_i(i, x_star))
            .collect::<Result<Vec<_>>>()?;
        Ok(StarTable {
            x_star: x_star.to_vec(),
            derivs,
        })
    }

    pub fn x_star(&self) -> &[f64] {
        &self.x_star
    }

    pub fn gradient(&self, obj: &GlmObjective, i: usize) -> Vec<f64> {
        let mut g: Vec<f64> = self.x_star.iter().map(|v| obj.l2() * v).collect();
        obj.row(i).axpy_unchecked(self.derivs[i], &mut g);
        g
    }
}

impl GradientEstimator for StarTable {
    fn estimate(&self, obj: &GlmObjective, x: &[f64], batch: &Batch) -> Result<Vec<f64>> {
        check_batch(obj, x, batch)?;
        if self.derivs.len() != obj.n() {
            return Err(Error::invalid("star table was built for another objective"));
        }
        let b = batch.len() as f64;
        let wsum: f64 = batch.weights.iter().sum::<f64>() / b;
        let mut g: Vec<f64> = x
            .iter()
            .zip(&self.x_star)
            .map(|(xj, sj)| wsum * obj.l2() * (xj - sj))
            .collect();
        for (i, w) in batch.iter() {
            let s = obj.loss_deriv_i_unchecked(i, x);
            obj.row(i).axpy_unchecked(w / b * (s - self.derivs[i]), &mut g);
        }
        Ok(g)
    }
}

/// `x ← x − γ(∇f_i(x) − ∇f_i(x*))`.
pub fn sgd_star_step(
    obj: &GlmObjective,
    x: &mut [f64],
    batch: &Batch,
    gamma: f64,
    star: &StarTable,
) -> Result<()> {
    let g = star.estimate(obj, x, batch)?;
    apply_step(obj, x, &g, gamma)
}

fn fresh_derivs(obj: &GlmObjective, x: &[f64], batch: &Batch) -> Vec<(usize, f64, f64)> {
    let b = batch.len() as f64;
    batch
        .iter()
        .map(|(i, w)| (i, w / b, obj.loss_deriv_i_unchecked(i, x)))
        .collect()
}

/// SAGA direction `Σ (w_i/b)(∇f_i(x) − v^i) + ḡ`.
#[derive(Debug, Clone, Copy)]
pub struct SagaEstimator<'a> {
    pub table: &'a GradientTable,
    fault: bool,
}

impl<'a> SagaEstimator<'a> {
    pub fn new(table: &'a GradientTable) -> Self {
        SagaEstimator { table, fault: false }
    }

    /// Adds the covariate instead of subtracting it. Only exists so the
    /// validation suite can prove that its unbiasedness check catches bugs.
    #[doc(hidden)]
    pub fn with_flipped_covariate(table: &'a GradientTable) -> Self {
        SagaEstimator { table, fault: true }
    }
}

impl GradientEstimator for SagaEstimator<'_> {
    fn estimate(&self, obj: &GlmObjective, x: &[f64], batch: &Batch) -> Result<Vec<f64>> {
        check_batch(obj, x, batch)?;
        let mut g = saga_base(self.table, obj, x);
        let mut fresh = fresh_derivs(obj, x, batch);
        if self.fault {
            for (i, _, s) in fresh.iter_mut() {
                let old = match self.table.mode() {
                    TableMode::Scalar => self.table.scalar_unchecked(*i),
                    TableMode::Dense => {
                        return Err(Error::invalid("fault injection needs a scalar table"))
                    }
                };
                // s − (−old) − old: corrections become s + old
                *s += 2.0 * old;
            }
        }
        self.table.add_corrections(obj, &fresh, &mut g);
        Ok(g)
    }
}

fn saga_base(table: &GradientTable, obj: &GlmObjective, x: &[f64]) -> Vec<f64> {
    let div = table.divisor();
    table
        .sum()
        .iter()
        .zip(x)
        .map(|(s, xj)| s / div + obj.l2() * xj)
        .collect()
}

/// SAG direction after refreshing the sampled entries: the new `ḡ` plus `λx`.
#[derive(Debug, Clone, Copy)]
pub struct SagEstimator<'a> {
    pub table: &'a GradientTable,
}

impl GradientEstimator for SagEstimator<'_> {
    fn estimate(&self, obj: &GlmObjective, x: &[f64], batch: &Batch) -> Result<Vec<f64>> {
        check_batch(obj, x, batch)?;
        let mut fresh = fresh_derivs(obj, x, batch);
        fresh.sort_by_key(|t| t.0);
        fresh.dedup_by_key(|t| t.0);
        let mut sum = self.table.sum().to_vec();
        for t in fresh.iter_mut() {
            t.1 = 1.0;
        }
        self.table.add_corrections(obj, &fresh, &mut sum);
        let div = if self.table.seen_normalization() {
            let extra = fresh.iter().filter(|t| !self.table.is_seen(t.0)).count();
            (self.table.seen_count() + extra).max(1) as f64
        } else {
            self.table.n() as f64
        };
        Ok(sum.iter().zip(x).map(|(s, xj)| s / div + obj.l2() * xj).collect())
    }
}

/// SAG: refresh the sampled entries, then step along the updated average.
pub fn sag_step(
    table: &mut GradientTable,
    obj: &GlmObjective,
    x: &mut [f64],
    batch: &Batch,
    gamma: f64,
) -> Result<()> {
    check_batch(obj, x, batch)?;
    let fresh = fresh_derivs(obj, x, batch);
    for &(i, _, s) in &fresh {
        table.set_scalar(obj, i, s);
    }
    let g = saga_base(table, obj, x);
    apply_step(obj, x, &g, gamma)
}

/// SAGA: step with the old entries as covariates, then refresh them.
pub fn saga_step(
    table: &mut GradientTable,
    obj: &GlmObjective,
    x: &mut [f64],
    batch: &Batch,
    gamma: f64,
) -> Result<()> {
    check_batch(obj, x, batch)?;
    let fresh = fresh_derivs(obj, x, batch);
    let mut g = saga_base(table, obj, x);
    table.add_corrections(obj, &fresh, &mut g);
    apply_step(obj, x, &g, gamma)?;
    for &(i, _, s) in &fresh {
        table.set_scalar(obj, i, s);
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SvrgVariant {
    /// Inner loop of fixed length `t`, next reference at the last iterate.
    #[default]
    FixedLoop,
    /// Inner length drawn uniformly from `1..=t` before every outer loop.
    SampledT,
}

/// Reference point, its full gradient, and inner-loop bookkeeping.
#[derive(Debug, Clone)]
pub struct SvrgState {
    reference: Vec<f64>,
    reference_grad: Vec<f64>,
    reference_derivs: Vec<f64>,
    inner: usize,
    inner_len: usize,
    variant: SvrgVariant,
    refreshed: bool,
}

impl SvrgState {
    pub fn new(d: usize, inner_len: usize, variant: SvrgVariant) -> Result<Self> {
        if inner_len == 0 {
            return Err(Error::invalid("inner loop length must be at least 1"));
        }
        Ok(SvrgState {
            reference: vec![0.0; d],
            reference_grad: vec![0.0; d],
            reference_derivs: Vec::new(),
            inner: 0,
            inner_len,
            variant,
            refreshed: false,
        })
    }

    /// `x̄ ← x`, stores `∇f(x̄)`, resets the inner counter.
    pub fn refresh(&mut self, obj: &GlmObjective, x: &[f64]) -> Result<()> {
        self.reference_grad = obj.full_grad(x)?;
        self.reference = x.to_vec();
        self.reference_derivs = (0..obj.n())
            .map(|i| obj.loss_deriv_i_unchecked(i, x))
            .collect();
        self.inner = 0;
        self.refreshed = true;
        Ok(())
    }

    pub fn reference(&self) -> &[f64] {
        &self.reference
    }

    pub fn reference_grad(&self) -> &[f64] {
        &self.reference_grad
    }

    pub fn inner_len(&self) -> usize {
        self.inner_len
    }

    pub fn set_inner_len(&mut self, t: usize) {
        self.inner_len = t.max(1);
    }

    pub fn inner_count(&self) -> usize {
        self.inner
    }

    pub fn variant(&self) -> SvrgVariant {
        self.variant
    }

    pub fn is_refreshed(&self) -> bool {
        self.refreshed
    }

    /// True when a refresh is due before the next inner step.
    pub fn needs_refresh(&self) -> bool {
        !self.refreshed || self.inner >= self.inner_len
    }
}

impl GradientEstimator for SvrgState {
    fn estimate(&self, obj: &GlmObjective, x: &[f64], batch: &Batch) -> Result<Vec<f64>> {
        check_batch(obj, x, batch)?;
        if !self.refreshed {
            return Err(Error::Precondition(
                "SVRG inner step before the first reference refresh".into(),
            ));
        }
        let b = batch.len() as f64;
        let wsum: f64 = batch.weights.iter().sum::<f64>() / b;
        let mut g: Vec<f64> = self
            .reference_grad
            .iter()
            .zip(x.iter().zip(&self.reference))
            .map(|(rg, (xj, rj))| rg + wsum * obj.l2() * (xj - rj))
            .collect();
        for (i, w) in batch.iter() {
            let s = obj.loss_deriv_i_unchecked(i, x);
            obj.row(i)
                .axpy_unchecked(w / b * (s - self.reference_derivs[i]), &mut g);
        }
        Ok(g)
    }
}

/// `x ← x − γ(∇f_B(x) − ∇f_B(x̄) + ∇f(x̄))`.
pub fn svrg_inner_step(
    state: &mut SvrgState,
    obj: &GlmObjective,
    x: &mut [f64],
    batch: &Batch,
    gamma: f64,
) -> Result<()> {
    let g = state.estimate(obj, x, batch)?;
    apply_step(obj, x, &g, gamma)?;
    state.inner += 1;
    Ok(())
}

/// Recursive estimate `g_k = ∇f_B(x_k) − ∇f_B(x_{k−1}) + g_{k−1}`, restarted
/// from a full gradient every `inner_len` steps.
#[derive(Debug, Clone)]
pub struct SarahState {
    prev: Vec<f64>,
    g: Vec<f64>,
    inner: usize,
    inner_len: usize,
    refreshed: bool,
}

impl SarahState {
    pub fn new(d: usize, inner_len: usize) -> Result<Self> {
        if inner_len == 0 {
            return Err(Error::invalid("inner loop length must be at least 1"));
        }
        Ok(SarahState {
            prev: vec![0.0; d],
            g: vec![0.0; d],
            inner: 0,
            inner_len,
            refreshed: false,
        })
    }

    pub fn refresh(&mut self, obj: &GlmObjective, x: &[f64]) -> Result<()> {
        self.g = obj.full_grad(x)?;
        self.prev = x.to_vec();
        self.inner = 0;
        self.refreshed = true;
        Ok(())
    }

    pub fn needs_refresh(&self) -> bool {
        !self.refreshed || self.inner >= self.inner_len
    }

    pub fn current(&self) -> &[f64] {
        &self.g
    }

    pub fn inner_len(&self) -> usize {
        self.inner_len
    }
}

impl GradientEstimator for SarahState {
    fn estimate(&self, obj: &GlmObjective, x: &[f64], batch: &Batch) -> Result<Vec<f64>> {
        check_batch(obj, x, batch)?;
        if !self.refreshed {
            return Err(Error::Precondition(
                "recursive estimate used before its first refresh".into(),
            ));
        }
        let b = batch.len() as f64;
        let wsum: f64 = batch.weights.iter().sum::<f64>() / b;
        let mut g: Vec<f64> = self
            .g
            .iter()
            .zip(x.iter().zip(&self.prev))
            .map(|(gj, (xj, pj))| gj + wsum * obj.l2() * (xj - pj))
            .collect();
        for (i, w) in batch.iter() {
            let d = obj.loss_deriv_i_unchecked(i, x) - obj.loss_deriv_i_unchecked(i, &self.prev);
            obj.row(i).axpy_unchecked(w / b * d, &mut g);
        }
        Ok(g)
    }
}

pub fn sarah_step(
    state: &mut SarahState,
    obj: &GlmObjective,
    x: &mut [f64],
    batch: &Batch,
    gamma: f64,
) -> Result<()> {
    let g = state.estimate(obj, x, batch)?;
    state.prev.copy_from_slice(x);
    apply_step(obj, x, &g, gamma)?;
    state.g = g;
    state.inner += 1;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Dataset;
    use crate::objective::LossKind;
    use crate::synth;
    use std::sync::Arc;

    fn quad_1d() -> GlmObjective {
        // f(x) = ½(x − 3)²
        let ds = Dataset::from_dense(&[vec![1.0]], vec![3.0]).unwrap();
        GlmObjective::new(Arc::new(ds), LossKind::HalfSquared, 0.0, 0.0).unwrap()
    }

    fn enum_mean<E: GradientEstimator>(e: &E, obj: &GlmObjective, x: &[f64]) -> Vec<f64> {
        let mut mean = vec![0.0; obj.d()];
        for i in 0..obj.n() {
            let g = e.estimate(obj, x, &Batch::single(i)).unwrap();
            for (m, gj) in mean.iter_mut().zip(&g) {
                *m += gj / obj.n() as f64;
            }
        }
        mean
    }

    fn max_diff(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
    }

    fn point(d: usize) -> Vec<f64> {
        (0..d).map(|j| ((j * 7 % 5) as f64 - 2.0) / 3.0).collect()
    }

    #[test]
    fn gd_solves_quadratic_in_one_step() {
        let obj = quad_1d();
        let mut x = vec![0.0];
        gd_step(&obj, &mut x, 1.0).unwrap();
        assert_eq!(x, vec![3.0]);
        gd_step(&obj, &mut x, 1.0).unwrap();
        assert_eq!(x, vec![3.0]);
    }

    #[test]
    fn gd_monotone_on_quadratic() {
        let obj = synth::dense_toy(40, 6, LossKind::HalfSquared, 0.01, 3).unwrap();
        let gamma = 1.0 / obj.smoothness().unwrap().l_full;
        let mut x = vec![1.0; 6];
        let mut prev = obj.full_value(&x).unwrap();
        for _ in 0..100 {
            gd_step(&obj, &mut x, gamma).unwrap();
            let f = obj.full_value(&x).unwrap();
            assert!(f <= prev + 1e-15);
            prev = f;
        }
    }

    #[test]
    fn divergence_names_stepsize() {
        let obj = quad_1d();
        let mut x = vec![0.0];
        let err = (0..2000)
            .find_map(|_| gd_step(&obj, &mut x, 1e3).err())
            .unwrap();
        assert!(matches!(err, Error::Divergence { gamma } if gamma == 1e3));
    }

    #[test]
    fn sgd_single_example_equals_gd() {
        let obj = quad_1d();
        let (mut a, mut b) = (vec![0.5], vec![0.5]);
        gd_step(&obj, &mut a, 0.3).unwrap();
        sgd_step(&obj, &mut b, &Batch::single(0), 0.3, None).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn momentum_first_step_is_plain_sgd() {
        let obj = synth::dense_toy(10, 4, LossKind::Logistic, 0.1, 1).unwrap();
        let (mut a, mut b) = (point(4), point(4));
        let mut m = MomentumState::new(4, 0.9).unwrap();
        sgd_step(&obj, &mut a, &Batch::single(3), 0.2, None).unwrap();
        sgd_step(&obj, &mut b, &Batch::single(3), 0.2, Some(&mut m)).unwrap();
        assert_eq!(a, b);
        assert!(MomentumState::new(4, 1.0).is_err());
    }

    #[test]
    fn momentum_matches_weighted_sum() {
        let obj = synth::dense_toy(10, 4, LossKind::Logistic, 0.1, 1).unwrap();
        let beta = 0.7;
        let mut x = point(4);
        let mut m = MomentumState::new(4, beta).unwrap();
        let mut grads: Vec<Vec<f64>> = Vec::new();
        for k in 0..20 {
            let i = (k * 3) % 10;
            grads.push(obj.grad_i(i, &x).unwrap());
            sgd_step(&obj, &mut x, &Batch::single(i), 0.1, Some(&mut m)).unwrap();
            let mut explicit = [0.0; 4];
            for (t, g) in grads.iter().enumerate() {
                let w = beta.powi((k - t) as i32);
                for (e, gj) in explicit.iter_mut().zip(g) {
                    *e += w * gj;
                }
            }
            for (e, mj) in explicit.iter().zip(m.buffer()) {
                assert!((e - mj).abs() <= 1e-12 * e.abs().max(1e-300) + 1e-300);
            }
        }
    }

    #[test]
    fn sgd_is_unbiased() {
        let obj = synth::dense_toy(12, 5, LossKind::Logistic, 0.05, 2).unwrap();
        let x = point(5);
        let mean = enum_mean(&SgdEstimator, &obj, &x);
        assert!(max_diff(&mean, &obj.full_grad(&x).unwrap()) <= 1e-14);
        let all = Batch::uniform((0..12).collect());
        let g = SgdEstimator.estimate(&obj, &x, &all).unwrap();
        assert!(max_diff(&g, &obj.full_grad(&x).unwrap()) <= 1e-14);
    }

    #[test]
    fn sgd_star_fixed_point_and_mean() {
        let obj = synth::dense_toy(12, 5, LossKind::Logistic, 0.05, 2).unwrap();
        let x_star = point(5);
        let star = StarTable::new(&obj, &x_star).unwrap();
        for i in 0..12 {
            let mut x = x_star.clone();
            sgd_star_step(&obj, &mut x, &Batch::single(i), 0.5, &star).unwrap();
            assert_eq!(x, x_star);
        }
        // the mean is ∇f(x) − ∇f(x_ref), whatever x_ref is
        let x = vec![0.3; 5];
        let mean = enum_mean(&star, &obj, &x);
        let g = obj.full_grad(&x).unwrap();
        let g_ref = obj.full_grad(&x_star).unwrap();
        for j in 0..5 {
            assert!((mean[j] - (g[j] - g_ref[j])).abs() <= 1e-14);
        }
        let direct = star.gradient(&obj, 4);
        assert!(max_diff(&direct, &obj.grad_i(4, &x_star).unwrap()) <= 1e-15);
    }

    #[test]
    fn sag_with_one_example_is_gd() {
        let obj = synth::dense_toy(1, 3, LossKind::Logistic, 0.1, 5).unwrap();
        let mut table = GradientTable::new(TableMode::Scalar, 1, 3);
        let (mut a, mut b) = (point(3), point(3));
        for _ in 0..5 {
            sag_step(&mut table, &obj, &mut a, &Batch::single(0), 0.5).unwrap();
            gd_step(&obj, &mut b, 0.5).unwrap();
            assert!(max_diff(&a, &b) <= 1e-15);
        }
    }

    #[test]
    fn sag_mean_after_full_sweep_is_gradient() {
        let obj = synth::sparse_toy(15, 8, 0.4, LossKind::Logistic, 0.1, 6).unwrap();
        let x = point(8);
        let mut table = GradientTable::new(TableMode::Scalar, 15, 8);
        let mut scratch_x = x.clone();
        for i in 0..15 {
            // a tiny step keeps the sweep at (almost) frozen x; use γ = 0 exactly
            scratch_x.copy_from_slice(&x);
            sag_step(&mut table, &obj, &mut scratch_x, &Batch::single(i), 0.0).unwrap();
        }
        let g = SagEstimator { table: &table }
            .estimate(&obj, &x, &Batch::single(0))
            .unwrap();
        assert!(max_diff(&g, &obj.full_grad(&x).unwrap()) <= 1e-14);
    }

    #[test]
    fn saga_current_table_gives_full_gradient() {
        let obj = synth::sparse_toy(15, 8, 0.4, LossKind::Logistic, 0.1, 6).unwrap();
        let x = point(8);
        let mut table = GradientTable::new(TableMode::Dense, 15, 8);
        table.initialize_at(&obj, &x).unwrap();
        let full = obj.full_grad(&x).unwrap();
        for i in 0..15 {
            let g = SagaEstimator::new(&table).estimate(&obj, &x, &Batch::single(i)).unwrap();
            assert!(max_diff(&g, &full) <= 1e-15);
        }
    }

    #[test]
    fn saga_unbiased_at_arbitrary_state() {
        let obj = synth::sparse_toy(15, 8, 0.4, LossKind::Logistic, 0.1, 6).unwrap();
        let mut table = GradientTable::new(TableMode::Scalar, 15, 8);
        let mut x = point(8);
        for k in 0..40 {
            saga_step(&mut table, &obj, &mut x, &Batch::single((k * 5) % 15), 0.2).unwrap();
        }
        let mean = enum_mean(&SagaEstimator::new(&table), &obj, &x);
        assert!(max_diff(&mean, &obj.full_grad(&x).unwrap()) <= 1e-14);
        let flipped = enum_mean(&SagaEstimator::with_flipped_covariate(&table), &obj, &x);
        assert!(max_diff(&flipped, &obj.full_grad(&x).unwrap()) > 1e-6);
    }

    #[test]
    fn svrg_cancellation_and_unbiasedness() {
        let obj = synth::dense_toy(10, 4, LossKind::Logistic, 0.1, 8).unwrap();
        let mut s = SvrgState::new(4, 10, SvrgVariant::FixedLoop).unwrap();
        let mut x = point(4);
        assert!(matches!(
            svrg_inner_step(&mut s, &obj, &mut x, &Batch::single(0), 0.1),
            Err(Error::Precondition(_))
        ));
        s.refresh(&obj, &x).unwrap();
        assert_eq!(s.reference_grad(), obj.full_grad(&x).unwrap().as_slice());
        for i in 0..10 {
            let g = s.estimate(&obj, &x, &Batch::single(i)).unwrap();
            assert_eq!(g, s.reference_grad());
        }
        let y = vec![0.4, -0.2, 0.0, 1.0];
        let mean = enum_mean(&s, &obj, &y);
        assert!(max_diff(&mean, &obj.full_grad(&y).unwrap()) <= 1e-14);
        let all = s.estimate(&obj, &y, &Batch::uniform((0..10).collect())).unwrap();
        assert!(max_diff(&all, &obj.full_grad(&y).unwrap()) <= 1e-14);
        let before = s.reference_grad().to_vec();
        s.refresh(&obj, &x).unwrap();
        assert_eq!(before, s.reference_grad());
    }

    #[test]
    fn sarah_single_example_is_gd() {
        let obj = synth::dense_toy(1, 3, LossKind::Logistic, 0.1, 5).unwrap();
        let mut s = SarahState::new(3, 1000).unwrap();
        let (mut a, mut b) = (point(3), point(3));
        s.refresh(&obj, &a).unwrap();
        for _ in 0..10 {
            sarah_step(&mut s, &obj, &mut a, &Batch::single(0), 0.4).unwrap();
            gd_step(&obj, &mut b, 0.4).unwrap();
            assert!(max_diff(&a, &b) <= 1e-13);
        }
    }

    #[test]
    fn empty_batch_rejected() {
        let obj = quad_1d();
        let empty = Batch::uniform(vec![]);
        assert!(SgdEstimator.estimate(&obj, &[0.0], &empty).is_err());
    }
}
