//! L2-regularized generalized linear models
//! `f(x) = (1/n) Σ ℓ(a_iᵀx, b_i) + (λ/2)‖x‖²`, with an optional `λ₁‖x‖₁`
//! term handled through its proximal map.
//!
//! The L2 term is folded into every `f_i`, so `∇f_i(x) = ℓ'(a_iᵀx)·a_i + λx`
//! and `f` is the plain average of the `f_i`.

use std::sync::Arc;

use crate::data::{check_len, row_norm_sq, Dataset, SparseRow};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LossKind {
    /// `½(α − b)²`
    HalfSquared,
    /// `log(1 + exp(−bα))`
    Logistic,
    /// `max(0, 1 − bα)`; only usable by dual coordinate ascent.
    Hinge,
}

impl LossKind {
    pub fn name(self) -> &'static str {
        match self {
            LossKind::HalfSquared => "half_squared",
            LossKind::Logistic => "logistic",
            LossKind::Hinge => "hinge",
        }
    }

    pub fn is_smooth(self) -> bool {
        !matches!(self, LossKind::Hinge)
    }

    pub fn is_classification(self) -> bool {
        !matches!(self, LossKind::HalfSquared)
    }

    /// Upper bound `M` on `ℓ''`.
    pub fn curvature_bound(self) -> Result<f64> {
        match self {
            LossKind::HalfSquared => Ok(1.0),
            LossKind::Logistic => Ok(0.25),
            LossKind::Hinge => Err(Error::NonSmoothLoss("hinge has no curvature bound")),
        }
    }
}

impl std::str::FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "half_squared" | "squared" => Ok(LossKind::HalfSquared),
            "logistic" => Ok(LossKind::Logistic),
            "hinge" => Ok(LossKind::Hinge),
            other => Err(Error::invalid(format!(
                "unknown loss '{other}' (expected half_squared, logistic or hinge)"
            ))),
        }
    }
}

/// `log(1 + exp(t))` without overflow.
#[inline]
fn softplus(t: f64) -> f64 {
    t.max(0.0) + (-t.abs()).exp().ln_1p()
}

pub fn loss_value(loss: LossKind, margin: f64, label: f64) -> Result<f64> {
    if !margin.is_finite() {
        return Err(Error::invalid(format!("non-finite margin {margin}")));
    }
    Ok(loss_value_unchecked(loss, margin, label))
}

#[inline]
pub(crate) fn loss_value_unchecked(loss: LossKind, margin: f64, label: f64) -> f64 {
    match loss {
        LossKind::HalfSquared => {
            let r = margin - label;
            0.5 * r * r
        }
        LossKind::Logistic => softplus(-label * margin),
        LossKind::Hinge => (1.0 - label * margin).max(0.0),
    }
}

pub fn loss_deriv(loss: LossKind, margin: f64, label: f64) -> Result<f64> {
    match loss {
        LossKind::Hinge => Err(Error::NonSmoothLoss("hinge loss has no derivative")),
        _ if !margin.is_finite() => Err(Error::invalid(format!("non-finite margin {margin}"))),
        _ => Ok(loss_deriv_unchecked(loss, margin, label)),
    }
}

#[inline]
pub(crate) fn loss_deriv_unchecked(loss: LossKind, margin: f64, label: f64) -> f64 {
    match loss {
        LossKind::HalfSquared => margin - label,
        LossKind::Logistic => {
            let z = label * margin;
            if z > 0.0 {
                let e = (-z).exp();
                -label * e / (1.0 + e)
            } else {
                -label / (1.0 + z.exp())
            }
        }
        LossKind::Hinge => f64::NAN,
    }
}

/// Second derivative of a smooth loss.
pub(crate) fn loss_second_deriv(loss: LossKind, margin: f64, label: f64) -> f64 {
    match loss {
        LossKind::HalfSquared => 1.0,
        LossKind::Logistic => {
            let z = (label * margin).abs();
            let e = (-z).exp();
            e / ((1.0 + e) * (1.0 + e))
        }
        LossKind::Hinge => 0.0,
    }
}

/// Convex conjugate `ℓ*(u) = sup_α {uα − ℓ(α, b)}`; `+∞` outside the domain.
pub fn conjugate_value(loss: LossKind, u: f64, label: f64) -> f64 {
    match loss {
        LossKind::HalfSquared => 0.5 * u * u + label * u,
        LossKind::Logistic => {
            // domain: t = −b·u ∈ [0, 1]
            let t = -label * u;
            if !(0.0..=1.0).contains(&t) {
                return f64::INFINITY;
            }
            xlogx(t) + xlogx(1.0 - t)
        }
        LossKind::Hinge => {
            let t = label * u;
            if (-1.0..=0.0).contains(&t) {
                t
            } else {
                f64::INFINITY
            }
        }
    }
}

#[inline]
pub(crate) fn xlogx(t: f64) -> f64 {
    if t <= 0.0 {
        0.0
    } else {
        t * t.ln()
    }
}

/// Soft threshold `sign(z)·max(|z| − τ, 0)`.
#[inline]
pub fn soft_threshold(z: f64, tau: f64) -> f64 {
    if z > tau {
        z - tau
    } else if z < -tau {
        z + tau
    } else {
        0.0
    }
}

/// Smoothness and strong-convexity constants of a smooth objective.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothnessInfo {
    /// `L_i = M‖a_i‖² + λ`.
    pub per_example: Vec<f64>,
    pub l_max: f64,
    /// Mean of the `L_i`.
    pub l_mean: f64,
    /// Global `L`; exact to the power-iteration tolerance when
    /// `l_full_exact`, otherwise the upper bound `l_mean`.
    pub l_full: f64,
    pub l_full_exact: bool,
    /// Lower bound on μ (the L2 weight).
    pub mu_lower: f64,
}

impl SmoothnessInfo {
    pub fn kappa(&self) -> f64 {
        self.l_full / self.mu_lower
    }

    pub fn kappa_max(&self) -> f64 {
        self.l_max / self.mu_lower
    }

    pub fn kappa_mean(&self) -> f64 {
        self.l_mean / self.mu_lower
    }
}

pub const POWER_ITER_TOL: f64 = 1e-10;
pub const POWER_ITER_MAX: usize = 10_000;

/// Largest eigenvalue of `Σ a_i a_iᵀ` by power iteration. Returns `None`
/// when the relative change of the Rayleigh quotient has not dropped below
/// `tol` within `max_iter` iterations.
pub fn power_iteration_gram(data: &Dataset, tol: f64, max_iter: usize) -> Option<f64> {
    let d = data.d();
    // Fixed, non-symmetric start vector.
    let mut v: Vec<f64> = (0..d).map(|j| 1.0 + ((j * 7919) % 97) as f64 / 97.0).collect();
    normalize(&mut v);
    let mut w = vec![0.0; d];
    let mut theta_prev = f64::NAN;
    for _ in 0..max_iter {
        w.iter_mut().for_each(|wj| *wj = 0.0);
        for row in data.rows() {
            let s = row.dot_unchecked(&v);
            row.axpy_unchecked(s, &mut w);
        }
        let theta: f64 = v.iter().zip(&w).map(|(a, b)| a * b).sum();
        let norm = w.iter().map(|t| t * t).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Some(0.0);
        }
        if (theta - theta_prev).abs() <= tol * theta.abs() {
            return Some(theta);
        }
        theta_prev = theta;
        for (vj, wj) in v.iter_mut().zip(&w) {
            *vj = wj / norm;
        }
    }
    None
}

fn normalize(v: &mut [f64]) {
    let n = v.iter().map(|t| t * t).sum::<f64>().sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|t| *t /= n);
    }
}

/// A generalized-linear-model finite-sum objective.
#[derive(Debug, Clone)]
pub struct GlmObjective {
    data: Arc<Dataset>,
    labels: Vec<f64>,
    loss: LossKind,
    l2: f64,
    l1: f64,
}

impl GlmObjective {
    /// Builds the objective. Classification losses need ±1 labels; a
    /// {0, 1} labelling is mapped to {−1, +1} here.
    pub fn new(data: Arc<Dataset>, loss: LossKind, l2: f64, l1: f64) -> Result<Self> {
        if !(l2 >= 0.0 && l2.is_finite()) {
            return Err(Error::invalid(format!("L2 weight must be >= 0, got {l2}")));
        }
        if !(l1 >= 0.0 && l1.is_finite()) {
            return Err(Error::invalid(format!("L1 weight must be >= 0, got {l1}")));
        }
        if loss == LossKind::Hinge && l2 <= 0.0 {
            return Err(Error::invalid("hinge loss requires a positive L2 weight"));
        }
        let labels = if loss.is_classification() {
            coerce_labels(data.labels())?
        } else {
            data.labels().to_vec()
        };
        Ok(GlmObjective {
            data,
            labels,
            loss,
            l2,
            l1,
        })
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.data.n()
    }

    #[inline]
    pub fn d(&self) -> usize {
        self.data.d()
    }

    pub fn data(&self) -> &Arc<Dataset> {
        &self.data
    }

    /// Labels after coercion.
    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    #[inline]
    pub fn label(&self, i: usize) -> f64 {
        self.labels[i]
    }

    #[inline]
    pub fn row(&self, i: usize) -> &SparseRow {
        self.data.row(i)
    }

    pub fn loss(&self) -> LossKind {
        self.loss
    }

    pub fn l2(&self) -> f64 {
        self.l2
    }

    pub fn l1(&self) -> f64 {
        self.l1
    }

    pub fn with_l1(&self, l1: f64) -> Result<Self> {
        GlmObjective::new(self.data.clone(), self.loss, self.l2, l1)
    }

    fn check(&self, i: usize, x: &[f64]) -> Result<()> {
        if i >= self.n() {
            return Err(Error::IndexOutOfRange {
                index: i,
                len: self.n(),
            });
        }
        check_len(self.d(), x.len())
    }

    fn require_smooth(&self) -> Result<()> {
        if self.loss.is_smooth() {
            Ok(())
        } else {
            Err(Error::NonSmoothLoss("operation needs a differentiable loss"))
        }
    }

    #[inline]
    pub fn margin(&self, i: usize, x: &[f64]) -> f64 {
        self.data.row(i).dot_unchecked(x)
    }

    /// `f_i(x)`, including the L2 term.
    pub fn value_i(&self, i: usize, x: &[f64]) -> Result<f64> {
        self.check(i, x)?;
        Ok(loss_value_unchecked(self.loss, self.margin(i, x), self.labels[i])
            + 0.5 * self.l2 * sq_norm(x))
    }

    /// Scalar form of the gradient: `ℓ'(a_iᵀx)`.
    pub fn loss_deriv_i(&self, i: usize, x: &[f64]) -> Result<f64> {
        self.require_smooth()?;
        self.check(i, x)?;
        Ok(loss_deriv_unchecked(self.loss, self.margin(i, x), self.labels[i]))
    }

    #[inline]
    pub(crate) fn loss_deriv_i_unchecked(&self, i: usize, x: &[f64]) -> f64 {
        loss_deriv_unchecked(self.loss, self.margin(i, x), self.labels[i])
    }

    /// Writes `∇f_i(x) = ℓ'(a_iᵀx)·a_i + λx` into `out`.
    pub fn grad_i_into(&self, i: usize, x: &[f64], out: &mut [f64]) -> Result<()> {
        self.require_smooth()?;
        self.check(i, x)?;
        check_len(self.d(), out.len())?;
        let s = self.loss_deriv_i_unchecked(i, x);
        for (o, xj) in out.iter_mut().zip(x) {
            *o = self.l2 * xj;
        }
        self.data.row(i).axpy_unchecked(s, out);
        Ok(())
    }

    pub fn grad_i(&self, i: usize, x: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.d()];
        self.grad_i_into(i, x, &mut out)?;
        Ok(out)
    }

    /// Loss part of `∇f_i(x)` (without the L2 term), dense.
    pub fn loss_grad_i_into(&self, i: usize, x: &[f64], out: &mut [f64]) -> Result<()> {
        self.require_smooth()?;
        self.check(i, x)?;
        check_len(self.d(), out.len())?;
        let s = self.loss_deriv_i_unchecked(i, x);
        out.iter_mut().for_each(|o| *o = 0.0);
        self.data.row(i).axpy_unchecked(s, out);
        Ok(())
    }

    /// Smooth objective `f(x)`.
    pub fn full_value(&self, x: &[f64]) -> Result<f64> {
        check_len(self.d(), x.len())?;
        let loss: f64 = (0..self.n())
            .map(|i| loss_value_unchecked(self.loss, self.margin(i, x), self.labels[i]))
            .sum();
        Ok(loss / self.n() as f64 + 0.5 * self.l2 * sq_norm(x))
    }

    /// `f(x) + λ₁‖x‖₁`.
    pub fn composite_value(&self, x: &[f64]) -> Result<f64> {
        Ok(self.full_value(x)? + self.l1 * x.iter().map(|v| v.abs()).sum::<f64>())
    }

    pub fn full_grad(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut g = vec![0.0; self.d()];
        self.full_grad_into(x, &mut g)?;
        Ok(g)
    }

    pub fn full_grad_into(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        self.require_smooth()?;
        check_len(self.d(), x.len())?;
        check_len(self.d(), out.len())?;
        out.iter_mut().for_each(|o| *o = 0.0);
        for i in 0..self.n() {
            let s = self.loss_deriv_i_unchecked(i, x);
            self.data.row(i).axpy_unchecked(s, out);
        }
        let inv_n = 1.0 / self.n() as f64;
        for (o, xj) in out.iter_mut().zip(x) {
            *o = *o * inv_n + self.l2 * xj;
        }
        Ok(())
    }

    /// Smoothness constants; `L` by power iteration on `(M/n)Σ a_i a_iᵀ`,
    /// falling back to the mean `L̄` when it does not converge.
    pub fn smoothness(&self) -> Result<SmoothnessInfo> {
        let m = self.loss.curvature_bound()?;
        let per_example: Vec<f64> = self
            .data
            .rows()
            .iter()
            .map(|r| m * row_norm_sq(r) + self.l2)
            .collect();
        let l_max = per_example.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let l_mean = per_example.iter().sum::<f64>() / per_example.len() as f64;
        let (l_full, l_full_exact) =
            match power_iteration_gram(&self.data, POWER_ITER_TOL, POWER_ITER_MAX) {
                Some(top) => ((m * top / self.n() as f64 + self.l2).min(l_max), true),
                None => {
                    log::warn!("power iteration did not converge; using the mean L_i bound");
                    (l_mean, false)
                }
            };
        Ok(SmoothnessInfo {
            per_example,
            l_max,
            l_mean,
            l_full,
            l_full_exact,
            mu_lower: self.l2,
        })
    }

    /// `argmin_x ½‖x − z‖² + γλ₁‖x‖₁` in place.
    pub fn prox_in_place(&self, gamma: f64, z: &mut [f64]) -> Result<()> {
        if !(gamma > 0.0) {
            return Err(Error::invalid(format!("prox stepsize must be > 0, got {gamma}")));
        }
        if self.l1 > 0.0 {
            let tau = gamma * self.l1;
            z.iter_mut().for_each(|v| *v = soft_threshold(*v, tau));
        }
        Ok(())
    }

    pub fn prox(&self, gamma: f64, z: &[f64]) -> Result<Vec<f64>> {
        let mut out = z.to_vec();
        self.prox_in_place(gamma, &mut out)?;
        Ok(out)
    }

    /// Norm of the gradient mapping `(x − prox_{γΩ}(x − γ∇f(x)))/γ` with
    /// `γ = 1/L`; equals `‖∇f(x)‖` when there is no L1 term.
    pub fn stationarity(&self, x: &[f64], grad: &[f64], l_full: f64) -> f64 {
        if self.l1 == 0.0 {
            return sq_norm(grad).sqrt();
        }
        let gamma = 1.0 / l_full;
        let tau = gamma * self.l1;
        x.iter()
            .zip(grad)
            .map(|(xj, gj)| {
                let r = (xj - soft_threshold(xj - gamma * gj, tau)) / gamma;
                r * r
            })
            .sum::<f64>()
            .sqrt()
    }
}

fn coerce_labels(labels: &[f64]) -> Result<Vec<f64>> {
    if labels.iter().all(|&b| b == 1.0 || b == -1.0) {
        return Ok(labels.to_vec());
    }
    if labels.iter().all(|&b| b == 0.0 || b == 1.0) {
        return Ok(labels.iter().map(|&b| if b == 0.0 { -1.0 } else { 1.0 }).collect());
    }
    let bad = labels
        .iter()
        .find(|&&b| b != 0.0 && b != 1.0 && b != -1.0)
        .copied()
        .unwrap_or(f64::NAN);
    Err(Error::invalid(format!(
        "classification losses need labels in {{-1,+1}} or {{0,1}}; found {bad}"
    )))
}

#[inline]
pub(crate) fn sq_norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth;
    use proptest::prelude::*;

    fn obj_from(rows: &[Vec<f64>], labels: Vec<f64>, loss: LossKind, l2: f64) -> GlmObjective {
        let ds = Dataset::from_dense(rows, labels).unwrap();
        GlmObjective::new(Arc::new(ds), loss, l2, 0.0).unwrap()
    }

    #[test]
    fn loss_value_examples() {
        assert_eq!(loss_value(LossKind::HalfSquared, 1.7, 1.7).unwrap(), 0.0);
        assert!((loss_value(LossKind::Logistic, 0.0, 1.0).unwrap() - 2f64.ln()).abs() < 1e-16);
        assert_eq!(loss_value(LossKind::Hinge, 2.0, 1.0).unwrap(), 0.0);
        assert!(loss_value(LossKind::Logistic, f64::NAN, 1.0).is_err());
        // no overflow far out in either direction
        assert!((loss_value(LossKind::Logistic, -800.0, 1.0).unwrap() - 800.0).abs() < 1e-12);
        assert_eq!(loss_value(LossKind::Logistic, 800.0, 1.0).unwrap(), 0.0);
    }

    #[test]
    fn loss_deriv_examples() {
        assert_eq!(loss_deriv(LossKind::HalfSquared, 3.0, 1.0).unwrap(), 2.0);
        assert_eq!(loss_deriv(LossKind::Logistic, 0.0, 1.0).unwrap(), -0.5);
        let sat = loss_deriv(LossKind::Logistic, 40.0, 1.0).unwrap();
        assert!(sat.is_finite() && sat.abs() < 1e-17);
        let sat = loss_deriv(LossKind::Logistic, -1000.0, 1.0).unwrap();
        assert_eq!(sat, -1.0);
        assert!(matches!(
            loss_deriv(LossKind::Hinge, 0.0, 1.0),
            Err(Error::NonSmoothLoss(_))
        ));
    }

    #[test]
    fn loss_derivs_match_central_differences() {
        let mut rng = crate::data::RandomSource::new(5);
        let h = 1e-6;
        for loss in [LossKind::HalfSquared, LossKind::Logistic] {
            for _ in 0..100 {
                let a = 8.0 * rng.uniform() - 4.0;
                let b = if rng.uniform() < 0.5 { -1.0 } else { 1.0 };
                let fd = (loss_value(loss, a + h, b).unwrap() - loss_value(loss, a - h, b).unwrap())
                    / (2.0 * h);
                let an = loss_deriv(loss, a, b).unwrap();
                let rel = (fd - an).abs() / an.abs().max(1e-3);
                assert!(rel <= 1e-7, "{loss:?} a={a} b={b}: {fd} vs {an}");
            }
        }
    }

    #[test]
    fn grad_i_examples() {
        let obj = obj_from(&[vec![1.0, 0.0]], vec![0.0], LossKind::HalfSquared, 0.0);
        assert_eq!(obj.grad_i(0, &[2.0, 5.0]).unwrap(), vec![2.0, 0.0]);
        assert!(matches!(
            obj.grad_i(1, &[2.0, 5.0]),
            Err(Error::IndexOutOfRange { .. })
        ));
        // ℓ' = 0 at a perfect fit
        let obj = obj_from(&[vec![1.0, 2.0]], vec![5.0], LossKind::HalfSquared, 0.0);
        assert_eq!(obj.grad_i(0, &[1.0, 2.0]).unwrap(), vec![0.0, 0.0]);
        let hinge = obj_from(&[vec![1.0, 2.0]], vec![1.0], LossKind::Hinge, 0.5);
        assert!(hinge.grad_i(0, &[0.0, 0.0]).is_err());
    }

    #[test]
    fn full_grad_is_mean_of_grad_i() {
        for loss in [LossKind::HalfSquared, LossKind::Logistic] {
            let obj = synth::dense_toy(5, 4, loss, 0.3, 11).unwrap();
            let x: Vec<f64> = (0..4).map(|j| 0.3 * j as f64 - 0.4).collect();
            let full = obj.full_grad(&x).unwrap();
            let mut mean = vec![0.0; 4];
            for i in 0..5 {
                for (m, g) in mean.iter_mut().zip(obj.grad_i(i, &x).unwrap()) {
                    *m += g / 5.0;
                }
            }
            let diff = sq_norm(&full.iter().zip(&mean).map(|(a, b)| a - b).collect::<Vec<_>>()).sqrt();
            assert!(diff <= 1e-15 * sq_norm(&full).sqrt().max(1.0), "{diff}");

            let v: f64 = (0..5).map(|i| obj.value_i(i, &x).unwrap()).sum::<f64>() / 5.0;
            assert!((v - obj.full_value(&x).unwrap()).abs() <= 1e-15 * v.abs());
        }
    }

    #[test]
    fn single_example_objective() {
        let obj = obj_from(&[vec![0.5, -1.0]], vec![1.0], LossKind::Logistic, 0.2);
        let x = [0.3, 0.9];
        assert_eq!(obj.full_value(&x).unwrap(), obj.value_i(0, &x).unwrap());
        assert_eq!(obj.full_grad(&x).unwrap(), obj.grad_i(0, &x).unwrap());
    }

    #[test]
    fn smoothness_examples() {
        let obj = obj_from(&[vec![3.0, 4.0]], vec![1.0], LossKind::Logistic, 0.1);
        let s = obj.smoothness().unwrap();
        assert!((s.per_example[0] - 6.35).abs() < 1e-12);

        let obj = obj_from(
            &[vec![1.0, 0.0], vec![0.0, 1.0]],
            vec![0.0, 0.0],
            LossKind::HalfSquared,
            0.0,
        );
        let s = obj.smoothness().unwrap();
        assert!((s.l_full - 0.5).abs() < 1e-12);
        assert_eq!(s.l_max, 1.0);
        assert!(s.l_full_exact);

        let hinge = obj_from(&[vec![1.0]], vec![1.0], LossKind::Hinge, 1.0);
        assert!(matches!(hinge.smoothness(), Err(Error::NonSmoothLoss(_))));
    }

    #[test]
    fn power_iteration_matches_dense_eigensolver() {
        let obj = synth::sparse_toy(60, 25, 0.2, LossKind::Logistic, 0.01, 3).unwrap();
        let s = obj.smoothness().unwrap();
        let d = obj.d();
        let mut gram = nalgebra::DMatrix::<f64>::zeros(d, d);
        for row in obj.data().rows() {
            for (j, vj) in row.iter() {
                for (k, vk) in row.iter() {
                    gram[(j, k)] += vj * vk;
                }
            }
        }
        let top = gram.symmetric_eigen().eigenvalues.max();
        let want = 0.25 * top / obj.n() as f64 + 0.01;
        assert!((s.l_full - want).abs() <= 1e-6 * want, "{} vs {want}", s.l_full);
        assert!(s.l_full <= s.l_max && s.l_max <= obj.n() as f64 * s.l_full);
        assert!(s.l_mean <= s.l_max && s.mu_lower <= s.l_full);
    }

    #[test]
    fn smoothness_constants_bound_gradient_changes() {
        let mut rng = crate::data::RandomSource::new(17);
        for loss in [LossKind::HalfSquared, LossKind::Logistic] {
            let obj = synth::dense_toy(20, 6, loss, 0.05, 4).unwrap();
            let s = obj.smoothness().unwrap();
            for _ in 0..1000 {
                let i = rng.draw_index(obj.n()).unwrap();
                let x: Vec<f64> = (0..6).map(|_| 6.0 * rng.uniform() - 3.0).collect();
                let y: Vec<f64> = (0..6).map(|_| 6.0 * rng.uniform() - 3.0).collect();
                let gx = obj.grad_i(i, &x).unwrap();
                let gy = obj.grad_i(i, &y).unwrap();
                let lhs = gx.iter().zip(&gy).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
                let rhs = x.iter().zip(&y).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
                assert!(lhs <= s.per_example[i] * rhs * (1.0 + 1e-12));
            }
        }
    }

    #[test]
    fn conjugate_examples() {
        assert_eq!(conjugate_value(LossKind::HalfSquared, 0.0, 3.0), 0.0);
        assert!(conjugate_value(LossKind::Hinge, -0.5, 1.0).is_finite());
        assert_eq!(conjugate_value(LossKind::Hinge, 0.5, 1.0), f64::INFINITY);
        assert_eq!(conjugate_value(LossKind::Logistic, 0.5, 1.0), f64::INFINITY);
        assert_eq!(conjugate_value(LossKind::Logistic, -1.0, 1.0), 0.0);
        assert_eq!(conjugate_value(LossKind::Logistic, 0.0, 1.0), 0.0);
    }

    #[test]
    fn fenchel_young() {
        for loss in [LossKind::HalfSquared, LossKind::Logistic, LossKind::Hinge] {
            for b in [-1.0, 1.0] {
                for xi in -20..=20 {
                    let x = xi as f64 * 0.37;
                    for ui in -20..=20 {
                        let u = ui as f64 * 0.05;
                        let lhs = loss_value(loss, x, b).unwrap() + conjugate_value(loss, u, b);
                        assert!(lhs >= x * u - 1e-8, "{loss:?} x={x} u={u} b={b}");
                    }
                    if loss.is_smooth() {
                        let u = loss_deriv(loss, x, b).unwrap();
                        let gap = loss_value(loss, x, b).unwrap() + conjugate_value(loss, u, b) - x * u;
                        assert!(gap.abs() <= 1e-8, "{loss:?} x={x}: {gap}");
                    }
                }
            }
        }
    }

    #[test]
    fn prox_examples() {
        let ds = Dataset::from_dense(&[vec![1.0]], vec![0.0]).unwrap();
        let obj = GlmObjective::new(Arc::new(ds), LossKind::HalfSquared, 0.0, 1.0).unwrap();
        assert_eq!(obj.prox(1.0, &[2.0]).unwrap(), vec![1.0]);
        assert_eq!(obj.prox(1.0, &[-0.5]).unwrap(), vec![0.0]);
        assert_eq!(obj.prox(1.0, &[-3.0]).unwrap(), vec![-2.0]);
        assert!(obj.prox(0.0, &[1.0]).is_err());
        let plain = obj.with_l1(0.0).unwrap();
        assert_eq!(plain.prox(3.0, &[2.0]).unwrap(), vec![2.0]);
    }

    #[test]
    fn label_coercion() {
        let ds = Arc::new(Dataset::from_dense(&[vec![1.0], vec![2.0]], vec![0.0, 1.0]).unwrap());
        let obj = GlmObjective::new(ds.clone(), LossKind::Logistic, 0.0, 0.0).unwrap();
        assert_eq!(obj.labels(), &[-1.0, 1.0]);
        // regression keeps raw labels
        let obj = GlmObjective::new(ds, LossKind::HalfSquared, 0.0, 0.0).unwrap();
        assert_eq!(obj.labels(), &[0.0, 1.0]);
        let bad = Arc::new(Dataset::from_dense(&[vec![1.0]], vec![2.0]).unwrap());
        assert!(GlmObjective::new(bad.clone(), LossKind::Logistic, 0.0, 0.0).is_err());
        assert!(GlmObjective::new(bad, LossKind::Hinge, 0.0, 0.0).is_err());
    }

    proptest! {
        #[test]
        fn prox_is_nonexpansive(
            z in proptest::collection::vec(-5.0f64..5.0, 6),
            w in proptest::collection::vec(-5.0f64..5.0, 6),
            gamma in 0.01f64..3.0,
            l1 in 0.0f64..2.0,
        ) {
            let ds = Dataset::from_dense(&[vec![1.0; 6]], vec![0.0]).unwrap();
            let obj = GlmObjective::new(Arc::new(ds), LossKind::HalfSquared, 0.0, l1).unwrap();
            let pz = obj.prox(gamma, &z).unwrap();
            let pw = obj.prox(gamma, &w).unwrap();
            let lhs: f64 = pz.iter().zip(&pw).map(|(a, b)| (a - b).powi(2)).sum();
            let rhs: f64 = z.iter().zip(&w).map(|(a, b)| (a - b).powi(2)).sum();
            // exact in real arithmetic; allow rounding relative to the distance itself
            prop_assert!(lhs <= rhs * (1.0 + 16.0 * f64::EPSILON));
        }
    }
}
