//! Shared fixtures for the benchmarks.

use vropt_core::optim::{GradientTable, TableMode};
use vropt_core::{synth, GlmObjective, LossKind, RandomSource, Result};

/// A sparse logistic problem with a fixed draw of example indices.
pub struct Fixture {
    pub obj: GlmObjective,
    pub gamma: f64,
    /// Indices to visit, one epoch's worth.
    pub order: Vec<usize>,
}

impl Fixture {
    pub fn sparse(n: usize, d: usize, density: f64, seed: u64) -> Result<Self> {
        let obj = synth::sparse_toy(n, d, density, LossKind::Logistic, 1.0 / n as f64, seed)?;
        let gamma = 1.0 / obj.smoothness()?.l_max;
        let mut rng = RandomSource::new(seed);
        let order = (0..n).map(|_| rng.draw_index(n)).collect::<Result<Vec<_>>>()?;
        Ok(Fixture { obj, gamma, order })
    }

    pub fn table(&self) -> GradientTable {
        GradientTable::new(TableMode::Scalar, self.obj.n(), self.obj.d())
    }

    pub fn zeros(&self) -> Vec<f64> {
        vec![0.0; self.obj.d()]
    }
}
