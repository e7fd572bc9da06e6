//! Seeded synthetic problems used by tests, the validation suite and benches.

use std::sync::Arc;

use rand::seq::index;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::data::{Dataset, RandomSource, SparseRow, STREAM_SYNTHETIC};
use crate::error::Result;
use crate::objective::{GlmObjective, LossKind};

fn label_for(loss: LossKind, margin: f64, rng: &mut RandomSource) -> f64 {
    let noise: f64 = rng.rng().sample(StandardNormal);
    match loss {
        LossKind::HalfSquared => margin + 0.1 * noise,
        // noisy labels keep the classes overlapping
        _ => {
            if margin + 0.5 * noise >= 0.0 {
                1.0
            } else {
                -1.0
            }
        }
    }
}

/// Gaussian features with labels from a planted linear model.
pub fn dense_dataset(n: usize, d: usize, loss: LossKind, seed: u64) -> Result<Dataset> {
    let mut rng = RandomSource::with_stream(seed, STREAM_SYNTHETIC);
    let planted: Vec<f64> = (0..d).map(|_| rng.rng().sample(StandardNormal)).collect();
    let mut rows = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let a: Vec<f64> = (0..d)
            .map(|_| rng.rng().sample::<f64, _>(StandardNormal) / (d as f64).sqrt())
            .collect();
        let m: f64 = a.iter().zip(&planted).map(|(x, y)| x * y).sum();
        labels.push(label_for(loss, m, &mut rng));
        rows.push(SparseRow::from_dense(&a));
    }
    Dataset::new(rows, labels)
}

pub fn dense_toy(n: usize, d: usize, loss: LossKind, l2: f64, seed: u64) -> Result<GlmObjective> {
    GlmObjective::new(Arc::new(dense_dataset(n, d, loss, seed)?), loss, l2, 0.0)
}

/// Rows with `max(1, round(density·d))` nonzeros at uniformly random columns.
pub fn sparse_dataset(n: usize, d: usize, density: f64, loss: LossKind, seed: u64) -> Result<Dataset> {
    let mut rng = RandomSource::with_stream(seed, STREAM_SYNTHETIC);
    let k = ((density * d as f64).round() as usize).clamp(1, d);
    let planted: Vec<f64> = (0..d).map(|_| rng.rng().sample(StandardNormal)).collect();
    let mut rows = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let mut cols = index::sample(rng.rng(), d, k).into_vec();
        cols.sort_unstable();
        let vals: Vec<f64> = cols.iter().map(|_| rng.rng().sample(StandardNormal)).collect();
        let row = SparseRow::new(cols, vals, d)?;
        let m = row.dot_unchecked(&planted);
        labels.push(label_for(loss, m, &mut rng));
        rows.push(row);
    }
    Dataset::new(rows, labels)
}

pub fn sparse_toy(
    n: usize,
    d: usize,
    density: f64,
    loss: LossKind,
    l2: f64,
    seed: u64,
) -> Result<GlmObjective> {
    GlmObjective::new(
        Arc::new(sparse_dataset(n, d, density, loss, seed)?),
        loss,
        l2,
        0.0,
    )
}

/// Two overlapping Gaussian clouds in the plane, labelled ±1.
pub fn blobs_2d(n: usize, seed: u64) -> Result<Dataset> {
    let mut rng = RandomSource::with_stream(seed, STREAM_SYNTHETIC);
    let mut rows = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let (label, cx, cy) = if i % 2 == 0 {
            (1.0, 1.0, 0.5)
        } else {
            (-1.0, -0.5, -1.0)
        };
        let x: f64 = cx + 1.2 * rng.rng().sample::<f64, _>(StandardNormal);
        let y: f64 = cy + 1.2 * rng.rng().sample::<f64, _>(StandardNormal);
        rows.push(SparseRow::from_dense(&[x, y]));
        labels.push(label);
    }
    Dataset::new(rows, labels)
}
