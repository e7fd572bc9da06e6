//! Lazy ("just-in-time") execution of SAG and SAGA on sparse rows.
//!
//! Between two touches of coordinate `j`, each step applies
//! `x_j ← ρ·x_j − γ·ḡ_j` with `ρ = 1 − γλ` and a constant `ḡ_j`, because
//! `ḡ_j` only changes when a row whose support contains `j` is sampled.
//! `m` skipped steps therefore collapse to
//! `x_j ← ρ^m·x_j − γ·ḡ_j·(1 − ρ^m)/(1 − ρ)`, which is what
//! [`LazyIterate::touch`] applies before a coordinate is read.

use crate::error::{Error, Result};
use crate::objective::GlmObjective;

use super::table::{GradientTable, TableMode};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LazyRule {
    Sag,
    Saga,
}

/// Iterate whose coordinates may lag behind the global step counter.
#[derive(Debug, Clone)]
pub struct LazyIterate {
    x: Vec<f64>,
    last_touch: Vec<u64>,
    k: u64,
    gamma: f64,
    lambda: f64,
    ln_rho: f64,
    touched: u64,
}

impl LazyIterate {
    pub fn new(x0: Vec<f64>, gamma: f64, lambda: f64) -> Result<Self> {
        if !(gamma > 0.0) {
            return Err(Error::invalid(format!("stepsize must be > 0, got {gamma}")));
        }
        let rho = 1.0 - gamma * lambda;
        if !(rho > 0.0) {
            return Err(Error::config(format!(
                "lazy updates need γλ < 1 (got γ = {gamma}, λ = {lambda}); use the dense executor"
            )));
        }
        let d = x0.len();
        Ok(LazyIterate {
            x: x0,
            last_touch: vec![0; d],
            k: 0,
            gamma,
            lambda,
            ln_rho: (-gamma * lambda).ln_1p(),
            touched: 0,
        })
    }

    /// Number of steps taken.
    pub fn k(&self) -> u64 {
        self.k
    }

    /// Coordinates updated by steps so far (catch-up during
    /// materialization is not counted).
    pub fn touched(&self) -> u64 {
        self.touched
    }

    pub fn last_touch(&self) -> &[u64] {
        &self.last_touch
    }

    /// Raw coordinate values, each as of its own last touch.
    pub fn raw(&self) -> &[f64] {
        &self.x
    }

    fn advanced(&self, j: usize, gbar_j: f64) -> f64 {
        let m = self.k - self.last_touch[j];
        if m == 0 {
            return self.x[j];
        }
        let m = m as f64;
        if self.lambda == 0.0 {
            return self.x[j] - self.gamma * m * gbar_j;
        }
        let l = m * self.ln_rho;
        // (1 − ρ^m)·γ/(1 − ρ) = (1 − ρ^m)/λ
        self.x[j] * l.exp() + gbar_j * l.exp_m1() / self.lambda
    }

    /// Brings the given coordinates up to the current step.
    pub fn touch(&mut self, coords: &[usize], table: &GradientTable) -> Result<()> {
        for &j in coords {
            if j >= self.x.len() {
                return Err(Error::IndexOutOfRange {
                    index: j,
                    len: self.x.len(),
                });
            }
            self.x[j] = self.advanced(j, table.mean_at(j));
            self.last_touch[j] = self.k;
        }
        Ok(())
    }

    /// Advances every coordinate and returns the dense iterate.
    pub fn materialize(&mut self, table: &GradientTable) -> &[f64] {
        let div = table.divisor();
        for j in 0..self.x.len() {
            self.x[j] = self.advanced(j, table.sum()[j] / div);
            self.last_touch[j] = self.k;
        }
        &self.x
    }

    /// Dense iterate without modifying the state.
    pub fn snapshot(&self, table: &GradientTable) -> Vec<f64> {
        let div = table.divisor();
        (0..self.x.len())
            .map(|j| self.advanced(j, table.sum()[j] / div))
            .collect()
    }
}

/// Checks that a table can drive the lazy executor.
pub fn lazy_compatible(table: &GradientTable, obj: &GlmObjective) -> Result<()> {
    if table.mode() != TableMode::Scalar {
        return Err(Error::config("lazy updates need the scalar gradient table"));
    }
    if table.seen_normalization() {
        return Err(Error::config(
            "lazy updates need a fixed divisor; seen-count normalization changes every coordinate",
        ));
    }
    if obj.l1() > 0.0 {
        return Err(Error::config(
            "lazy updates do not support the L1 prox; use the dense executor",
        ));
    }
    Ok(())
}

/// One SAG or SAGA step on example `i` that reads and writes only the
/// support of `a_i`.
pub fn lazy_step(
    state: &mut LazyIterate,
    table: &mut GradientTable,
    obj: &GlmObjective,
    i: usize,
    rule: LazyRule,
) -> Result<()> {
    lazy_compatible(table, obj)?;
    if i >= obj.n() {
        return Err(Error::IndexOutOfRange { index: i, len: obj.n() });
    }
    if state.x.len() != obj.d() {
        return Err(Error::Dimension {
            expected: obj.d(),
            got: state.x.len(),
        });
    }
    let row = obj.row(i);
    state.touch(row.indices(), table)?;
    let s_new = obj.loss_deriv_i(i, &state.x)?;
    let (gamma, lambda) = (state.gamma, state.lambda);
    match rule {
        LazyRule::Saga => {
            let coef = s_new - table.scalar_unchecked(i);
            let div = table.divisor();
            for (j, a) in row.iter() {
                let mut g = table.sum()[j] / div + lambda * state.x[j];
                g += coef * a;
                state.x[j] -= gamma * g;
            }
            table.set_scalar_sparse(obj, i, s_new);
        }
        LazyRule::Sag => {
            table.set_scalar_sparse(obj, i, s_new);
            let div = table.divisor();
            for (j, _) in row.iter() {
                let g = table.sum()[j] / div + lambda * state.x[j];
                state.x[j] -= gamma * g;
            }
        }
    }
    for &j in row.indices() {
        if !state.x[j].is_finite() {
            return Err(Error::Divergence { gamma });
        }
    }
    state.k += 1;
    for &j in row.indices() {
        state.last_touch[j] = state.k;
    }
    state.touched += row.nnz() as u64;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Dataset, SparseRow};
    use crate::objective::LossKind;
    use crate::optim::methods::{sag_step, saga_step};
    use crate::schedule::Batch;
    use crate::synth;
    use std::sync::Arc;

    fn rel_diff(a: &[f64], b: &[f64]) -> f64 {
        let scale = b.iter().map(|v| v.abs()).fold(0.0, f64::max).max(1e-300);
        a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max) / scale
    }

    #[test]
    fn zero_skips_is_identity() {
        let table = GradientTable::new(TableMode::Scalar, 3, 2);
        let mut s = LazyIterate::new(vec![1.0, 2.0], 0.1, 0.5).unwrap();
        s.touch(&[0, 1], &table).unwrap();
        assert_eq!(s.raw(), &[1.0, 2.0]);
        let a = s.materialize(&table).to_vec();
        let b = s.materialize(&table).to_vec();
        assert_eq!(a, b);
        assert_eq!(a, vec![1.0, 2.0]);
    }

    #[test]
    fn collapsed_sum_without_l2() {
        // one example whose row is e_0 with ℓ' = 1 stored, n = 1 → ḡ_0 = 1
        let ds = Dataset::new(vec![SparseRow::new(vec![0], vec![1.0], 2).unwrap()], vec![0.0]).unwrap();
        let obj = GlmObjective::new(Arc::new(ds), LossKind::HalfSquared, 0.0, 0.0).unwrap();
        let mut table = GradientTable::new(TableMode::Scalar, 1, 2);
        table.set_scalar(&obj, 0, 1.0);
        let mut s = LazyIterate::new(vec![5.0, 0.0], 0.1, 0.0).unwrap();
        s.k = 3;
        s.touch(&[0], &table).unwrap();
        assert!((s.raw()[0] - 4.7).abs() <= 1e-15);
    }

    #[test]
    fn collapsed_sum_with_l2_matches_loop() {
        let ds = Dataset::new(vec![SparseRow::new(vec![0], vec![1.0], 1).unwrap()], vec![0.0]).unwrap();
        let obj = GlmObjective::new(Arc::new(ds), LossKind::HalfSquared, 0.3, 0.0).unwrap();
        let mut table = GradientTable::new(TableMode::Scalar, 1, 1);
        table.set_scalar(&obj, 0, -0.7);
        let (gamma, lambda) = (0.2, 0.3);
        let mut s = LazyIterate::new(vec![2.0], gamma, lambda).unwrap();
        s.k = 25;
        s.touch(&[0], &table).unwrap();
        let mut x: f64 = 2.0;
        for _ in 0..25 {
            x -= gamma * (-0.7 + lambda * x);
        }
        assert!((s.raw()[0] - x).abs() <= 1e-14);
    }

    #[test]
    fn large_stepsize_rejected() {
        assert!(matches!(LazyIterate::new(vec![0.0], 2.0, 0.5), Err(Error::Config(_))));
    }

    fn compare(obj: &GlmObjective, rule: LazyRule, steps: usize, seed: u64) -> f64 {
        let d = obj.d();
        let x0: Vec<f64> = (0..d).map(|j| (j % 3) as f64 * 0.1).collect();
        let gamma = 0.25 / obj.smoothness().unwrap().l_max;
        let mut dense_table = GradientTable::new(TableMode::Dense, obj.n(), d);
        let mut lazy_table = GradientTable::new(TableMode::Scalar, obj.n(), d);
        let mut x = x0.clone();
        let mut lazy = LazyIterate::new(x0, gamma, obj.l2()).unwrap();
        let mut rng = crate::data::RandomSource::new(seed);
        let mut nnz = 0;
        for _ in 0..steps {
            let i = rng.draw_index(obj.n()).unwrap();
            nnz += obj.row(i).nnz() as u64;
            match rule {
                LazyRule::Saga => saga_step(&mut dense_table, obj, &mut x, &Batch::single(i), gamma).unwrap(),
                LazyRule::Sag => sag_step(&mut dense_table, obj, &mut x, &Batch::single(i), gamma).unwrap(),
            }
            lazy_step(&mut lazy, &mut lazy_table, obj, i, rule).unwrap();
        }
        assert_eq!(lazy.touched(), nnz);
        let snap = lazy.snapshot(&lazy_table);
        let mat = lazy.materialize(&lazy_table).to_vec();
        assert_eq!(snap, mat);
        rel_diff(&mat, &x)
    }

    #[test]
    fn lazy_matches_dense_on_sparse_data() {
        let obj = synth::sparse_toy(60, 40, 0.05, LossKind::Logistic, 0.01, 3).unwrap();
        assert!(compare(&obj, LazyRule::Saga, 600, 1) <= 1e-9);
        assert!(compare(&obj, LazyRule::Sag, 600, 2) <= 1e-9);
    }

    #[test]
    fn dense_rows_match_dense_steps() {
        let obj = synth::dense_toy(8, 4, LossKind::Logistic, 0.1, 3).unwrap();
        assert!(compare(&obj, LazyRule::Saga, 50, 4) <= 1e-13);
    }

    #[test]
    fn disjoint_supports_advance_on_their_turns() {
        let rows = vec![
            SparseRow::new(vec![0, 1], vec![1.0, -0.5], 4).unwrap(),
            SparseRow::new(vec![2, 3], vec![0.3, 2.0], 4).unwrap(),
        ];
        let ds = Dataset::new(rows, vec![1.0, -1.0]).unwrap();
        let obj = GlmObjective::new(Arc::new(ds), LossKind::Logistic, 0.05, 0.0).unwrap();
        let mut table = GradientTable::new(TableMode::Scalar, 2, 4);
        let mut lazy = LazyIterate::new(vec![0.1; 4], 0.3, 0.05).unwrap();
        for k in 0..10 {
            lazy_step(&mut lazy, &mut table, &obj, k % 2, LazyRule::Saga).unwrap();
            let (on, off) = if k % 2 == 0 { ([0, 1], [2, 3]) } else { ([2, 3], [0, 1]) };
            assert!(on.iter().all(|&j| lazy.last_touch()[j] == lazy.k()));
            assert!(off.iter().all(|&j| lazy.last_touch()[j] < lazy.k()));
        }
        assert!(compare(&obj, LazyRule::Saga, 40, 9) <= 1e-12);
    }
}
