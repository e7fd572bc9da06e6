//! Stochastic dual coordinate ascent for L2-regularized GLMs.

use crate::error::{Error, Result};
use crate::objective::{conjugate_value, sq_norm, GlmObjective, LossKind};

/// Iteration cap of the logistic coordinate solver.
pub const SDCA_MAX_NEWTON: usize = 100;
/// Tolerance on the coordinate derivative of the dual.
pub const SDCA_COORD_TOL: f64 = 1e-12;

/// Dual variables `v` and the primal image `w = (1/(λn)) Σ v_i a_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct DualState {
    pub v: Vec<f64>,
    pub w: Vec<f64>,
}

fn require_dual(obj: &GlmObjective) -> Result<()> {
    if !(obj.l2() > 0.0) {
        return Err(Error::Precondition("the dual method needs λ > 0".into()));
    }
    if obj.l1() > 0.0 {
        return Err(Error::config("the dual method does not support an L1 term"));
    }
    Ok(())
}

impl DualState {
    /// `v = 0`, which is feasible for every supported loss.
    pub fn zeros(obj: &GlmObjective) -> Result<Self> {
        require_dual(obj)?;
        Ok(DualState {
            v: vec![0.0; obj.n()],
            w: vec![0.0; obj.d()],
        })
    }

    pub fn from_dual(obj: &GlmObjective, v: Vec<f64>) -> Result<Self> {
        require_dual(obj)?;
        if v.len() != obj.n() {
            return Err(Error::Dimension {
                expected: obj.n(),
                got: v.len(),
            });
        }
        let w = primal_image(obj, &v);
        Ok(DualState { v, w })
    }

    /// `w` recomputed from `v`.
    pub fn recompute_w(&self, obj: &GlmObjective) -> Vec<f64> {
        primal_image(obj, &self.v)
    }
}

fn primal_image(obj: &GlmObjective, v: &[f64]) -> Vec<f64> {
    let scale = 1.0 / (obj.l2() * obj.n() as f64);
    let mut w = vec![0.0; obj.d()];
    for (i, vi) in v.iter().enumerate() {
        obj.row(i).axpy_unchecked(vi * scale, &mut w);
    }
    w
}

/// `D(v) = (1/n) Σ −ℓ*(−v_i) − (λ/2)‖w‖²`; `−∞` outside the domain.
pub fn dual_objective(obj: &GlmObjective, dual: &DualState) -> f64 {
    let n = obj.n() as f64;
    let mut acc = 0.0;
    for (i, vi) in dual.v.iter().enumerate() {
        acc -= conjugate_value(obj.loss(), -vi, obj.label(i));
    }
    acc / n - 0.5 * obj.l2() * sq_norm(&dual.w)
}

/// Change of the dual objective (times `n`) when coordinate `i` moves by
/// `delta` with everything else fixed: `−ℓ*(−(v_i+δ)) + ℓ*(−v_i) − δα − δ²q/(2λn)`,
/// where `α = a_iᵀw` and `q = ‖a_i‖²`. `−∞` outside the domain.
pub fn coordinate_gain(obj: &GlmObjective, dual: &DualState, i: usize, delta: f64) -> f64 {
    let lam_n = obj.l2() * obj.n() as f64;
    let row = obj.row(i);
    let q: f64 = row.values().iter().map(|a| a * a).sum();
    let alpha = row.dot_unchecked(&dual.w);
    let (b, v) = (obj.label(i), dual.v[i]);
    let conj_new = conjugate_value(obj.loss(), -(v + delta), b);
    if conj_new == f64::INFINITY {
        return f64::NEG_INFINITY;
    }
    let conj_old = conjugate_value(obj.loss(), -v, b);
    (conj_old - conj_new) - delta * alpha - delta * delta * q / (2.0 * lam_n)
}

#[inline]
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

#[inline]
fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    (p, a.mul_add(b, -p))
}

/// `δ·(c − δ·k)` as a normalized double-double.
fn dd_quadratic(delta: f64, c: f64, k: f64) -> (f64, f64) {
    let (p, p_err) = two_prod(delta, k);
    let (t, t_err) = two_sum(c, -p);
    let t_lo = t_err - p_err;
    let (r, r_err) = two_prod(delta, t);
    let lo = r_err + delta * t_lo;
    let hi = r + lo;
    (hi, lo - (hi - r))
}

/// Twice [`coordinate_gain`] in double-double precision for the losses
/// with closed-form updates, `None` for logistic. Values outside the
/// domain are `(−∞, 0)`. Pairs compare lexicographically, which lets a
/// comparison-based search resolve the maximizer far below `√ε`.
pub fn coordinate_gain_dd(obj: &GlmObjective, dual: &DualState, i: usize, delta: f64) -> Option<(f64, f64)> {
    let lam_n = obj.l2() * obj.n() as f64;
    let row = obj.row(i);
    let q: f64 = row.values().iter().map(|a| a * a).sum();
    let alpha = row.dot_unchecked(&dual.w);
    let (b, v) = (obj.label(i), dual.v[i]);
    match obj.loss() {
        // 2·gain = δ(2(b − v − α) − δ(1 + q/(λn)))
        LossKind::HalfSquared => Some(dd_quadratic(delta, 2.0 * (b - alpha - v), 1.0 + q / lam_n)),
        // with s = b·v: 2·gain = δ_s(2(1 − bα) − δ_s·q/(λn)) on s + δ_s ∈ [0, 1]
        LossKind::Hinge => {
            let ds = b * delta;
            let s_new = b * v + ds;
            if !(0.0..=1.0).contains(&s_new) {
                return Some((f64::NEG_INFINITY, 0.0));
            }
            Some(dd_quadratic(ds, 2.0 * (1.0 - b * alpha), q / lam_n))
        }
        LossKind::Logistic => None,
    }
}

fn sigmoid(u: f64) -> f64 {
    if u >= 0.0 {
        1.0 / (1.0 + (-u).exp())
    } else {
        let e = u.exp();
        e / (1.0 + e)
    }
}

/// Exact maximization of the dual along coordinate `i`.
///
/// Returns the change `Δv_i`; `w` is updated incrementally.
pub fn sdca_step(dual: &mut DualState, obj: &GlmObjective, i: usize) -> Result<f64> {
    sdca_step_with_gain(dual, obj, i).map(|(delta, _)| delta)
}

/// [`sdca_step`] that also returns the dual increase `D(v⁺) − D(v)`,
/// evaluated from the pre-step quantities.
pub fn sdca_step_with_gain(dual: &mut DualState, obj: &GlmObjective, i: usize) -> Result<(f64, f64)> {
    if i >= obj.n() {
        return Err(Error::IndexOutOfRange { index: i, len: obj.n() });
    }
    let lam_n = obj.l2() * obj.n() as f64;
    let row = obj.row(i);
    let q: f64 = row.values().iter().map(|a| a * a).sum();
    let alpha = row.dot_unchecked(&dual.w);
    let b = obj.label(i);
    let v = dual.v[i];
    let v_new = match obj.loss() {
        LossKind::HalfSquared => v + (b - alpha - v) / (1.0 + q / lam_n),
        LossKind::Hinge => {
            let s = b * v;
            let s_new = if q > 0.0 {
                (s + (1.0 - b * alpha) * lam_n / q).clamp(0.0, 1.0)
            } else if 1.0 - b * alpha > 0.0 {
                1.0
            } else {
                0.0
            };
            b * s_new
        }
        LossKind::Logistic => b * logistic_coordinate(b * v, b * alpha, q / lam_n)?,
    };
    let delta = v_new - v;
    let gain = if delta != 0.0 {
        let conj = |t: f64| conjugate_value(obj.loss(), -t, b);
        ((conj(v) - conj(v_new)) - delta * alpha - delta * delta * q / (2.0 * lam_n)) / obj.n() as f64
    } else {
        0.0
    };
    if delta != 0.0 {
        dual.v[i] = v_new;
        row.axpy_unchecked(delta / lam_n, &mut dual.w);
    }
    Ok((delta, gain))
}

/// Solves `−logit(s') − c − (s' − s)·r = 0` for `s' ∈ (0,1)`, where `c = bα`
/// and `r = q/(λn)`. Works on the logit scale `u = logit(s')`, where the
/// residual has slope below `−1`, with a bisection safeguard.
fn logistic_coordinate(s: f64, c: f64, r: f64) -> Result<f64> {
    let resid = |u: f64| -u - c - (sigmoid(u) - s) * r;
    let u0 = -c;
    // the root lies within r of −c because |σ(u) − s| ≤ 1
    let (mut lo, mut hi) = (u0 - r - 1.0, u0 + r + 1.0);
    let mut u = if s > 0.0 && s < 1.0 {
        (s / (1.0 - s)).ln().clamp(lo, hi)
    } else {
        u0
    };
    // Newton steps are taken only while they land inside the bracket and
    // shrink the residual fast enough; otherwise bisect (Newton alone can
    // cycle across the sigmoid's inflection)
    let (mut dx, mut dx_old) = (hi - lo, hi - lo);
    for _ in 0..SDCA_MAX_NEWTON {
        let g = resid(u);
        if g.abs() <= SDCA_COORD_TOL {
            return Ok(sigmoid(u));
        }
        if g > 0.0 {
            lo = u;
        } else {
            hi = u;
        }
        if hi - lo <= 4.0 * f64::EPSILON * u.abs().max(1.0) {
            return Ok(sigmoid(u));
        }
        let p = sigmoid(u);
        let slope = -1.0 - p * (1.0 - p) * r;
        let next = u - g / slope;
        let slow = 2.0 * g.abs() > (dx_old * slope).abs();
        dx_old = dx;
        if next > lo && next < hi && !slow {
            dx = next - u;
            u = next;
        } else {
            dx = 0.5 * (hi - lo);
            u = lo + dx;
        }
    }
    Err(Error::LineSearch(SDCA_MAX_NEWTON))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Dataset;
    use crate::diag::golden_section_max;
    use crate::synth;
    use std::sync::Arc;

    #[test]
    fn one_example_gap_by_hand() {
        let ds = Dataset::from_dense(&[vec![1.0]], vec![1.0]).unwrap();
        let obj = GlmObjective::new(Arc::new(ds), LossKind::HalfSquared, 1.0, 0.0).unwrap();
        let dual = DualState::zeros(&obj).unwrap();
        assert_eq!(dual_objective(&obj, &dual), 0.0);
        assert_eq!(obj.full_value(&dual.w).unwrap(), 0.5);
    }

    #[test]
    fn closed_forms_match_golden_section() {
        for loss in [LossKind::HalfSquared, LossKind::Hinge] {
            let obj = synth::dense_toy(20, 5, loss, 0.05, 4).unwrap();
            let mut dual = DualState::zeros(&obj).unwrap();
            for k in 0..60 {
                let i = (k * 7) % 20;
                let b = obj.label(i);
                let v = dual.v[i];
                let (lo, hi) = match loss {
                    LossKind::HalfSquared => (-5.0, 5.0),
                    _ => (b.min(0.0) - v, b.max(0.0) - v),
                };
                let before = dual.clone();
                let best = v + golden_section_max(
                    |t| coordinate_gain_dd(&obj, &before, i, t).unwrap(),
                    lo,
                    hi,
                    400,
                );
                sdca_step(&mut dual, &obj, i).unwrap();
                assert!(
                    (dual.v[i] - best).abs() <= 1e-8,
                    "{loss:?} coordinate {i}: {} vs {best}",
                    dual.v[i]
                );
            }
        }
    }

    #[test]
    fn logistic_coordinate_is_a_maximizer() {
        let obj = synth::dense_toy(20, 5, LossKind::Logistic, 0.05, 4).unwrap();
        let mut dual = DualState::zeros(&obj).unwrap();
        for k in 0..60 {
            let i = (k * 7) % 20;
            let b = obj.label(i);
            let v = dual.v[i];
            let before = dual.clone();
            let (lo, hi) = (b.min(0.0) - v, b.max(0.0) - v);
            let t_gold = golden_section_max(|t| coordinate_gain(&obj, &before, i, t), lo, hi, 400);
            let delta = sdca_step(&mut dual, &obj, i).unwrap();
            // plain f64 values only resolve the maximizer to about √ε
            assert!((delta - t_gold).abs() <= 1e-6, "coordinate {i}: {delta} vs {t_gold}");
            let g_step = coordinate_gain(&obj, &before, i, delta);
            let g_gold = coordinate_gain(&obj, &before, i, t_gold);
            assert!(g_step >= g_gold - 4.0 * f64::EPSILON * g_gold.abs().max(1.0));
        }
    }

    #[test]
    fn dual_never_decreases_and_w_tracks_v() {
        for loss in [LossKind::HalfSquared, LossKind::Hinge, LossKind::Logistic] {
            let obj = synth::sparse_toy(40, 10, 0.3, loss, 0.02, 5).unwrap();
            let mut dual = DualState::zeros(&obj).unwrap();
            let mut prev = dual_objective(&obj, &dual);
            for k in 0..400 {
                sdca_step(&mut dual, &obj, (k * 13) % 40).unwrap();
                let d = dual_objective(&obj, &dual);
                assert!(d >= prev - 1e-13 * prev.abs().max(1.0), "{loss:?}: {d} < {prev}");
                prev = d;
            }
            let w = dual.recompute_w(&obj);
            for (a, b) in w.iter().zip(&dual.w) {
                assert!((a - b).abs() <= 1e-10 * a.abs().max(1e-3));
            }
        }
    }

    #[test]
    fn optimal_coordinate_is_fixed_point() {
        let obj = synth::dense_toy(10, 3, LossKind::HalfSquared, 0.1, 2).unwrap();
        let mut dual = DualState::zeros(&obj).unwrap();
        sdca_step(&mut dual, &obj, 3).unwrap();
        let w = dual.w.clone();
        let delta = sdca_step(&mut dual, &obj, 3).unwrap();
        assert!(delta.abs() <= 1e-15);
        for (a, b) in w.iter().zip(&dual.w) {
            assert!((a - b).abs() <= 1e-15);
        }
    }

    #[test]
    fn logistic_solver_survives_newton_cycling() {
        // plain Newton bounces between both ends of the bracket here
        let s_new = logistic_coordinate(0.0, -3.1513772876892183, 22.0).unwrap();
        let u = (s_new / (1.0 - s_new)).ln();
        assert!((-u + 3.1513772876892183 - s_new * 22.0).abs() <= 1e-11);
    }

    #[test]
    fn needs_positive_l2() {
        let obj = synth::dense_toy(5, 2, LossKind::HalfSquared, 0.0, 1).unwrap();
        assert!(matches!(DualState::zeros(&obj), Err(Error::Precondition(_))));
    }
}
