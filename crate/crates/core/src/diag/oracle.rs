//! Brute-force checks: finite differences, exact enumeration of gradient
//! estimators, inequality checkers, duality gaps and 1-D maximizers.

use itertools::Itertools;

use crate::error::{Error, Result};
use crate::objective::{loss_value, sq_norm, GlmObjective, LossKind};
use crate::optim::sdca::{dual_objective, DualState};
use crate::optim::GradientEstimator;
use crate::schedule::Batch;

/// Largest `n` (or number of batches) that enumeration accepts.
pub const ENUM_LIMIT: usize = 100_000;

/// Central-difference gradient of the smooth objective.
pub fn fd_grad(obj: &GlmObjective, x: &[f64], h: f64) -> Result<Vec<f64>> {
    if !obj.loss().is_smooth() {
        return Err(Error::NonSmoothLoss("finite differences need a differentiable loss"));
    }
    if !(h > 0.0) {
        return Err(Error::invalid(format!("difference step must be > 0, got {h}")));
    }
    let mut probe = x.to_vec();
    let mut g = Vec::with_capacity(x.len());
    for j in 0..x.len() {
        probe[j] = x[j] + h;
        let up = obj.full_value(&probe)?;
        probe[j] = x[j] - h;
        let down = obj.full_value(&probe)?;
        probe[j] = x[j];
        g.push((up - down) / (2.0 * h));
    }
    Ok(g)
}

/// Exact first and second moments of a gradient estimator over all draws.
#[derive(Debug, Clone, PartialEq)]
pub struct EnumStats {
    pub mean: Vec<f64>,
    /// `E‖g − E g‖²`, the trace of the covariance.
    pub variance: f64,
    /// `E‖g‖²`.
    pub second_moment: f64,
    pub draws: usize,
}

impl EnumStats {
    /// `E‖X − EX‖² ≤ E‖X‖²` up to rounding.
    pub fn lemma2_holds(&self) -> bool {
        self.variance <= self.second_moment * (1.0 + 1e-12) + 1e-300
    }
}

fn moments<E: GradientEstimator>(
    obj: &GlmObjective,
    est: &E,
    x: &[f64],
    draws: impl Iterator<Item = (Batch, f64)>,
) -> Result<EnumStats> {
    let d = obj.d();
    let mut outcomes: Vec<(Vec<f64>, f64)> = Vec::new();
    let mut mean = vec![0.0; d];
    for (batch, p) in draws {
        let g = est.estimate(obj, x, &batch)?;
        for (m, gj) in mean.iter_mut().zip(&g) {
            *m += p * gj;
        }
        outcomes.push((g, p));
    }
    let mut variance = 0.0;
    let mut second = 0.0;
    for (g, p) in &outcomes {
        second += p * sq_norm(g);
        variance += p * g.iter().zip(&mean).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
    }
    Ok(EnumStats {
        mean,
        variance,
        second_moment: second,
        draws: outcomes.len(),
    })
}

/// Moments over a single uniformly drawn example.
pub fn enum_stats<E: GradientEstimator>(obj: &GlmObjective, est: &E, x: &[f64]) -> Result<EnumStats> {
    let n = obj.n();
    if n > ENUM_LIMIT {
        return Err(Error::invalid(format!("n = {n} is too large to enumerate")));
    }
    let p = 1.0 / n as f64;
    moments(obj, est, x, (0..n).map(|i| (Batch::single(i), p)))
}

/// Moments over a single example drawn with probabilities `probs`, using
/// importance weights `1/(n p_i)`.
pub fn enum_stats_weighted<E: GradientEstimator>(
    obj: &GlmObjective,
    est: &E,
    x: &[f64],
    probs: &[f64],
) -> Result<EnumStats> {
    let n = obj.n();
    if probs.len() != n {
        return Err(Error::Dimension {
            expected: n,
            got: probs.len(),
        });
    }
    if n > ENUM_LIMIT {
        return Err(Error::invalid(format!("n = {n} is too large to enumerate")));
    }
    let draws = (0..n).filter(|&i| probs[i] > 0.0).map(|i| {
        let batch = Batch {
            indices: vec![i],
            weights: vec![1.0 / (n as f64 * probs[i])],
        };
        (batch, probs[i])
    });
    moments(obj, est, x, draws)
}

/// Moments over all `C(n, b)` uniform batches drawn without replacement.
pub fn enum_stats_batches<E: GradientEstimator>(
    obj: &GlmObjective,
    est: &E,
    x: &[f64],
    b: usize,
) -> Result<EnumStats> {
    let n = obj.n();
    if b == 0 || b > n {
        return Err(Error::invalid(format!("batch size {b} outside 1..={n}")));
    }
    let count = binomial(n, b);
    if count > ENUM_LIMIT as f64 {
        return Err(Error::invalid(format!("{count} batches are too many to enumerate")));
    }
    let p = 1.0 / count;
    moments(
        obj,
        est,
        x,
        (0..n).combinations(b).map(|c| (Batch::uniform(c), p)),
    )
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, j| acc * (n - j) as f64 / (j + 1) as f64)
}

/// Both sides of an inequality `lhs ≤ rhs` and the verdict.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InequalityCheck {
    pub holds: bool,
    pub lhs: f64,
    pub rhs: f64,
}

impl InequalityCheck {
    pub fn slack(&self) -> f64 {
        self.rhs - self.lhs
    }
}

/// `E‖∇f_i(x) − ∇f_i(x*)‖² ≤ 2 L_max (f(x) − f(x*))`.
pub fn check_lemma1(obj: &GlmObjective, x: &[f64], x_star: &[f64]) -> Result<InequalityCheck> {
    let l_max = obj.smoothness()?.l_max;
    check_lemma1_with(obj, x, x_star, l_max)
}

/// [`check_lemma1`] with a precomputed `L_max`.
pub fn check_lemma1_with(obj: &GlmObjective, x: &[f64], x_star: &[f64], l_max: f64) -> Result<InequalityCheck> {
    let n = obj.n();
    let mut lhs = 0.0;
    for i in 0..n {
        let a = obj.grad_i(i, x)?;
        let b = obj.grad_i(i, x_star)?;
        lhs += a.iter().zip(&b).map(|(u, v)| (u - v) * (u - v)).sum::<f64>();
    }
    lhs /= n as f64;
    let rhs = 2.0 * l_max * (obj.full_value(x)? - obj.full_value(x_star)?);
    Ok(InequalityCheck {
        holds: lhs <= rhs + 1e-12 * (1.0 + rhs.abs()),
        lhs,
        rhs,
    })
}

/// Exact conditional expectation of one SGD* step against the
/// contraction factor `1 − γμ` with `μ = λ`.
pub fn check_contraction(obj: &GlmObjective, x: &[f64], x_star: &[f64], gamma: f64) -> Result<InequalityCheck> {
    let l_max = obj.smoothness()?.l_max;
    if gamma > 1.0 / l_max {
        return Err(Error::Precondition(format!(
            "stepsize {gamma} exceeds 1/L_max = {}",
            1.0 / l_max
        )));
    }
    let mu = obj.l2();
    if !(mu > 0.0) {
        return Err(Error::Precondition("contraction needs λ > 0".into()));
    }
    let n = obj.n();
    let mut lhs = 0.0;
    let mut next = vec![0.0; x.len()];
    for i in 0..n {
        let a = obj.grad_i(i, x)?;
        let b = obj.grad_i(i, x_star)?;
        for j in 0..x.len() {
            next[j] = x[j] - gamma * (a[j] - b[j]) - x_star[j];
        }
        lhs += sq_norm(&next);
    }
    lhs /= n as f64;
    let dist: f64 = x.iter().zip(x_star).map(|(u, v)| (u - v) * (u - v)).sum();
    let rhs = (1.0 - gamma * mu) * dist;
    Ok(InequalityCheck {
        holds: lhs <= rhs * (1.0 + 1e-12),
        lhs,
        rhs,
    })
}

/// `P(w) − D(v)`; `+∞` when some `v_i` is outside the conjugate domain.
pub fn duality_gap(obj: &GlmObjective, dual: &DualState) -> Result<f64> {
    if !(obj.l2() > 0.0) {
        return Err(Error::Precondition("the duality gap needs λ > 0".into()));
    }
    let d = dual_objective(obj, dual);
    if d == f64::NEG_INFINITY {
        return Ok(f64::INFINITY);
    }
    Ok(obj.full_value(&dual.w)? - d)
}

/// Golden-section search for the maximum of a unimodal function on `[a, b]`.
///
/// Only comparisons of `f` values are used, so `f` may return any ordered
/// type, such as a normalized `(hi, lo)` double-double pair.
pub fn golden_section_max<T: PartialOrd, F: Fn(f64) -> T>(f: F, mut a: f64, mut b: f64, iters: usize) -> f64 {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..iters {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d);
        }
        if b - a <= f64::EPSILON * (a.abs() + b.abs()).max(1e-300) {
            break;
        }
    }
    0.5 * (a + b)
}

/// `sup_α uα − ℓ(α)` by golden-section search over `|α| ≤ radius`.
pub fn numeric_conjugate(loss: LossKind, u: f64, label: f64, radius: f64) -> Result<f64> {
    let phi = |a: f64| u * a - loss_value(loss, a, label).unwrap_or(f64::INFINITY);
    let arg = golden_section_max(phi, -radius, radius, 400);
    Ok(phi(arg))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Dataset;
    use crate::objective::conjugate_value;
    use crate::optim::{SgdEstimator, StarTable};
    use crate::synth;
    use std::sync::Arc;

    fn one_d(a: f64, b: f64, l2: f64) -> GlmObjective {
        let ds = Dataset::from_dense(&[vec![a]], vec![b]).unwrap();
        GlmObjective::new(Arc::new(ds), LossKind::HalfSquared, l2, 0.0).unwrap()
    }

    #[test]
    fn fd_on_half_square() {
        let obj = one_d(1.0, 0.0, 0.0);
        let g = fd_grad(&obj, &[1.0], 1e-6).unwrap();
        assert!((g[0] - 1.0).abs() <= 1e-8);
    }

    #[test]
    fn fd_matches_analytic_logistic() {
        let obj = synth::dense_toy(30, 6, LossKind::Logistic, 0.1, 4).unwrap();
        let x: Vec<f64> = (0..6).map(|j| 0.3 * j as f64 - 0.7).collect();
        let fd = fd_grad(&obj, &x, 1e-6).unwrap();
        let an = obj.full_grad(&x).unwrap();
        for (a, b) in fd.iter().zip(&an) {
            assert!((a - b).abs() <= 1e-5 * b.abs().max(1e-3));
        }
    }

    #[test]
    fn sgd_enumeration_mean_is_gradient() {
        let obj = synth::dense_toy(9, 3, LossKind::Logistic, 0.1, 4).unwrap();
        let x = vec![0.2, -0.1, 0.5];
        let st = enum_stats(&obj, &SgdEstimator, &x).unwrap();
        let g = obj.full_grad(&x).unwrap();
        for (a, b) in st.mean.iter().zip(&g) {
            assert!((a - b).abs() <= 1e-15);
        }
        assert!(st.lemma2_holds());
        let batches = enum_stats_batches(&obj, &SgdEstimator, &x, 3).unwrap();
        assert_eq!(batches.draws, 84);
        for (a, b) in batches.mean.iter().zip(&g) {
            assert!((a - b).abs() <= 1e-14);
        }
        assert!(batches.variance < st.variance);
        let probs: Vec<f64> = (0..9).map(|i| (i + 1) as f64 / 45.0).collect();
        let w = enum_stats_weighted(&obj, &SgdEstimator, &x, &probs).unwrap();
        for (a, b) in w.mean.iter().zip(&g) {
            assert!((a - b).abs() <= 1e-14);
        }
    }

    #[test]
    fn star_estimator_has_zero_variance_at_reference() {
        let obj = synth::dense_toy(9, 3, LossKind::Logistic, 0.1, 4).unwrap();
        let xs = vec![0.1, 0.2, 0.3];
        let star = StarTable::new(&obj, &xs).unwrap();
        let st = enum_stats(&obj, &star, &xs).unwrap();
        assert_eq!(st.variance, 0.0);
    }

    #[test]
    fn gradient_difference_bound_is_tight_in_1d() {
        let obj = one_d(1.0, 0.0, 0.0);
        let c = check_lemma1(&obj, &[1.0], &[0.0]).unwrap();
        assert_eq!((c.lhs, c.rhs), (1.0, 1.0));
        assert!(c.holds);
        let z = check_lemma1(&obj, &[0.0], &[0.0]).unwrap();
        assert_eq!((z.lhs, z.rhs), (0.0, 0.0));
    }

    #[test]
    fn contraction_precondition_and_fixed_point() {
        let obj = synth::dense_toy(10, 3, LossKind::Logistic, 0.1, 4).unwrap();
        let l_max = obj.smoothness().unwrap().l_max;
        let xs = vec![0.0; 3];
        let c = check_contraction(&obj, &xs, &xs, 1.0 / l_max).unwrap();
        assert_eq!((c.lhs, c.rhs), (0.0, 0.0));
        assert!(matches!(
            check_contraction(&obj, &xs, &xs, 1.0 / l_max * (1.0 + 1e-9)),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn gap_by_hand_and_infeasible() {
        let obj = one_d(1.0, 1.0, 1.0);
        let dual = DualState::zeros(&obj).unwrap();
        assert_eq!(duality_gap(&obj, &dual).unwrap(), 0.5);
        let ds = Dataset::from_dense(&[vec![1.0]], vec![1.0]).unwrap();
        let logit = GlmObjective::new(Arc::new(ds), LossKind::Logistic, 1.0, 0.0).unwrap();
        let bad = DualState::from_dual(&logit, vec![2.0]).unwrap();
        assert_eq!(duality_gap(&logit, &bad).unwrap(), f64::INFINITY);
    }

    #[test]
    fn golden_section_finds_parabola_peak() {
        let m = golden_section_max(|t| -(t - 0.3) * (t - 0.3), -5.0, 5.0, 200);
        assert!((m - 0.3).abs() <= 1e-7);
    }

    #[test]
    fn numeric_conjugate_matches_closed_form() {
        for (loss, u, b) in [
            (LossKind::HalfSquared, 0.7, 1.5),
            (LossKind::Logistic, -0.3, 1.0),
            (LossKind::Hinge, 0.4, -1.0),
        ] {
            let num = numeric_conjugate(loss, u, b, 50.0).unwrap();
            let exact = conjugate_value(loss, u, b);
            assert!((num - exact).abs() <= 1e-6, "{loss:?}: {num} vs {exact}");
        }
    }
}
