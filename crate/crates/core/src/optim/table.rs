use crate::error::{Error, Result};
use crate::objective::GlmObjective;

/// Storage layout of the per-example gradient memory.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableMode {
    /// One length-`d` vector per example.
    Dense,
    /// One scalar `ℓ'(a_iᵀx̄_i)` per example; the vector is `ℓ'·a_i`.
    Scalar,
}

impl std::str::FromStr for TableMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dense" => Ok(TableMode::Dense),
            "scalar" => Ok(TableMode::Scalar),
            other => Err(Error::invalid(format!(
                "unknown table mode '{other}' (expected dense or scalar)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TableInit {
    #[default]
    Zero,
    /// Fill every entry with the gradient at the starting point (n evaluations).
    AtStart,
}

/// Gradient memory `v^i` of SAG/SAGA together with its running sum.
///
/// Entries hold the loss part of `∇f_i` only; the L2 term `λx` is applied
/// exactly at the current iterate by the steps that use the table. The
/// running average is `ḡ = sum / divisor`, where the divisor is `n`, or the
/// number of examples seen so far under seen-count normalization.
#[derive(Debug, Clone)]
pub struct GradientTable {
    mode: TableMode,
    n: usize,
    d: usize,
    entries: Vec<f64>,
    sum: Vec<f64>,
    seen: Vec<bool>,
    seen_count: usize,
    seen_normalization: bool,
    pub(crate) scratch: Vec<f64>,
}

impl GradientTable {
    pub fn new(mode: TableMode, n: usize, d: usize) -> Self {
        let len = match mode {
            TableMode::Dense => n * d,
            TableMode::Scalar => n,
        };
        GradientTable {
            mode,
            n,
            d,
            entries: vec![0.0; len],
            sum: vec![0.0; d],
            seen: vec![false; n],
            seen_count: 0,
            seen_normalization: false,
            scratch: vec![0.0; d],
        }
    }

    pub fn with_seen_normalization(mut self, on: bool) -> Self {
        self.seen_normalization = on;
        self
    }

    pub fn mode(&self) -> TableMode {
        self.mode
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn seen_count(&self) -> usize {
        self.seen_count
    }

    pub fn seen_normalization(&self) -> bool {
        self.seen_normalization
    }

    /// Sets every entry to the loss gradient at `x`.
    pub fn initialize_at(&mut self, obj: &GlmObjective, x: &[f64]) -> Result<()> {
        for i in 0..self.n {
            let s = obj.loss_deriv_i(i, x)?;
            self.set_scalar(obj, i, s);
        }
        Ok(())
    }

    pub fn divisor(&self) -> f64 {
        if self.seen_normalization {
            self.seen_count.max(1) as f64
        } else {
            self.n as f64
        }
    }

    #[inline]
    pub(crate) fn sum(&self) -> &[f64] {
        &self.sum
    }

    #[inline]
    pub fn mean_at(&self, j: usize) -> f64 {
        self.sum[j] / self.divisor()
    }

    /// Running average `ḡ` of the stored loss gradients.
    pub fn mean(&self) -> Vec<f64> {
        let div = self.divisor();
        self.sum.iter().map(|s| s / div).collect()
    }

    /// Average of the entries recomputed from scratch.
    pub fn recompute_mean(&self, obj: &GlmObjective) -> Vec<f64> {
        let mut acc = vec![0.0; self.d];
        for i in 0..self.n {
            match self.mode {
                TableMode::Dense => {
                    for (a, v) in acc.iter_mut().zip(self.dense_entry(i)) {
                        *a += v;
                    }
                }
                TableMode::Scalar => obj.row(i).axpy_unchecked(self.entries[i], &mut acc),
            }
        }
        let div = self.divisor();
        acc.iter_mut().for_each(|a| *a /= div);
        acc
    }

    /// Stored vector `v^i` (loss part), dense.
    pub fn entry(&self, obj: &GlmObjective, i: usize) -> Vec<f64> {
        match self.mode {
            TableMode::Dense => self.dense_entry(i).to_vec(),
            TableMode::Scalar => {
                let mut out = vec![0.0; self.d];
                obj.row(i).axpy_unchecked(self.entries[i], &mut out);
                out
            }
        }
    }

    /// Stored scalar (scalar mode only).
    pub fn scalar(&self, i: usize) -> Option<f64> {
        match self.mode {
            TableMode::Scalar => Some(self.entries[i]),
            TableMode::Dense => None,
        }
    }

    #[inline]
    pub(crate) fn dense_entry(&self, i: usize) -> &[f64] {
        &self.entries[i * self.d..(i + 1) * self.d]
    }

    #[inline]
    pub(crate) fn scalar_unchecked(&self, i: usize) -> f64 {
        self.entries[i]
    }

    pub fn is_seen(&self, i: usize) -> bool {
        self.seen[i]
    }

    fn mark_seen(&mut self, i: usize) {
        if !self.seen[i] {
            self.seen[i] = true;
            self.seen_count += 1;
        }
    }

    /// Adds `Σ weight·(new_i − v^i)` over the batch into `out` (the
    /// covariate correction), where `new_i = s_i·a_i`.
    pub(crate) fn add_corrections(
        &self,
        obj: &GlmObjective,
        batch: &[(usize, f64, f64)],
        out: &mut [f64],
    ) {
        for &(i, coef, s_new) in batch {
            let row = obj.row(i);
            match self.mode {
                TableMode::Scalar => row.axpy_unchecked(coef * (s_new - self.entries[i]), out),
                TableMode::Dense => {
                    let old = self.dense_entry(i);
                    let mut new_dense = vec![0.0; self.d];
                    row.axpy_unchecked(s_new, &mut new_dense);
                    for ((o, nv), ov) in out.iter_mut().zip(&new_dense).zip(old) {
                        *o += coef * (nv - ov);
                    }
                }
            }
        }
    }

    /// Replaces `v^i` by `s·a_i` and updates the running sum.
    pub(crate) fn set_scalar(&mut self, obj: &GlmObjective, i: usize, s: f64) {
        let row = obj.row(i);
        match self.mode {
            TableMode::Scalar => {
                let delta = s - self.entries[i];
                row.axpy_unchecked(delta, &mut self.sum);
                self.entries[i] = s;
            }
            TableMode::Dense => {
                let d = self.d;
                let mut new_dense = std::mem::take(&mut self.scratch);
                new_dense.iter_mut().for_each(|v| *v = 0.0);
                row.axpy_unchecked(s, &mut new_dense);
                let old = &mut self.entries[i * d..(i + 1) * d];
                for ((sum, o), nv) in self.sum.iter_mut().zip(old.iter_mut()).zip(&new_dense) {
                    *sum += nv - *o;
                    *o = *nv;
                }
                self.scratch = new_dense;
            }
        }
        self.mark_seen(i);
    }

    /// Adds the sum delta for a scalar-mode replacement restricted to the
    /// row support; used by the lazy executor.
    pub(crate) fn set_scalar_sparse(&mut self, obj: &GlmObjective, i: usize, s: f64) -> f64 {
        debug_assert_eq!(self.mode, TableMode::Scalar);
        let delta = s - self.entries[i];
        obj.row(i).axpy_unchecked(delta, &mut self.sum);
        self.entries[i] = s;
        self.mark_seen(i);
        delta
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objective::LossKind;
    use crate::synth;

    #[test]
    fn modes_agree_on_contents() {
        let obj = synth::sparse_toy(30, 12, 0.3, LossKind::Logistic, 0.1, 1).unwrap();
        let mut dense = GradientTable::new(TableMode::Dense, 30, 12);
        let mut scalar = GradientTable::new(TableMode::Scalar, 30, 12);
        let x: Vec<f64> = (0..12).map(|j| (j as f64 - 6.0) / 5.0).collect();
        dense.initialize_at(&obj, &x).unwrap();
        scalar.initialize_at(&obj, &x).unwrap();
        for i in 0..30 {
            assert_eq!(dense.entry(&obj, i), scalar.entry(&obj, i));
        }
        let (m1, m2) = (dense.mean(), scalar.mean());
        for (a, b) in m1.iter().zip(&m2) {
            assert!((a - b).abs() <= 1e-14);
        }
        let full = obj.full_grad(&x).unwrap();
        for j in 0..12 {
            // ḡ plus the exact L2 term is the full gradient
            assert!((m1[j] + 0.1 * x[j] - full[j]).abs() <= 1e-14);
        }
        assert_eq!(dense.seen_count(), 30);
        assert!(scalar.scalar(0).is_some() && dense.scalar(0).is_none());
    }

    #[test]
    fn seen_count_divisor() {
        let obj = synth::dense_toy(5, 3, LossKind::HalfSquared, 0.0, 2).unwrap();
        let mut t = GradientTable::new(TableMode::Scalar, 5, 3).with_seen_normalization(true);
        assert_eq!(t.divisor(), 1.0);
        t.set_scalar(&obj, 2, 1.5);
        t.set_scalar(&obj, 2, 0.5);
        assert_eq!(t.seen_count(), 1);
        t.set_scalar(&obj, 4, 0.5);
        assert_eq!(t.divisor(), 2.0);
    }
}
