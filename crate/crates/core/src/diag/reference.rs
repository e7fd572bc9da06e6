//! High-accuracy reference solutions and their on-disk cache.

use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::objective::{loss_second_deriv, sq_norm, GlmObjective};
use crate::vecfile;

pub const DEFAULT_REFERENCE_TOL: f64 = 1e-12;
pub const MAX_REFERENCE_ITERS: usize = 1_000_000;
const NEWTON_MAX_ITERS: usize = 200;
/// Dense Newton is used only up to this dimension.
const NEWTON_MAX_DIM: usize = 2_000;

#[derive(Debug, Clone, PartialEq)]
pub struct Reference {
    pub x: Vec<f64>,
    /// Composite objective value at `x`.
    pub f: f64,
    /// Stationarity residual reached (gradient norm, or gradient-mapping
    /// norm with an L1 term).
    pub residual: f64,
    pub tol: f64,
    pub iterations: usize,
}

/// Minimizes the (composite) objective to `‖residual‖ ≤ tol`.
///
/// Smooth problems with `λ > 0` use damped Newton when `d` is moderate.
/// Everything else uses proximal gradient descent with `γ = 1/L`.
pub fn solve_reference(obj: &GlmObjective, tol: f64) -> Result<Reference> {
    if !(tol > 0.0) {
        return Err(Error::invalid(format!("tolerance must be > 0, got {tol}")));
    }
    if !obj.loss().is_smooth() {
        return Err(Error::NonSmoothLoss("the reference solver needs a differentiable loss"));
    }
    if obj.l1() == 0.0 && obj.l2() > 0.0 && obj.d() <= NEWTON_MAX_DIM {
        match newton(obj, tol) {
            Ok(r) => return Ok(r),
            Err(e) => log::warn!("Newton failed ({e}); falling back to gradient descent"),
        }
    }
    prox_gradient(obj, tol, vec![0.0; obj.d()])
}

fn newton(obj: &GlmObjective, tol: f64) -> Result<Reference> {
    let (n, d) = (obj.n(), obj.d());
    let mut x = vec![0.0; d];
    let mut f = obj.full_value(&x)?;
    let mut g = obj.full_grad(&x)?;
    for it in 0..NEWTON_MAX_ITERS {
        let gnorm = sq_norm(&g).sqrt();
        if gnorm <= tol {
            return Ok(Reference {
                x,
                f,
                residual: gnorm,
                tol,
                iterations: it,
            });
        }
        let mut h = DMatrix::<f64>::zeros(d, d);
        for i in 0..n {
            let row = obj.row(i);
            let c = loss_second_deriv(obj.loss(), obj.margin(i, &x), obj.label(i)) / n as f64;
            if c == 0.0 {
                continue;
            }
            for (p, ap) in row.iter() {
                for (q, aq) in row.iter() {
                    h[(p, q)] += c * ap * aq;
                }
            }
        }
        for j in 0..d {
            h[(j, j)] += obj.l2();
        }
        let chol = h
            .cholesky()
            .ok_or_else(|| Error::NotConverged("Hessian is not positive definite".into()))?;
        let step = chol.solve(&DVector::from_column_slice(&g));
        let decrement: f64 = step.iter().zip(&g).map(|(s, gj)| s * gj).sum();
        let mut t = 1.0;
        let mut trial = vec![0.0; d];
        let g_new = loop {
            for j in 0..d {
                trial[j] = x[j] - t * step[j];
            }
            let ft = obj.full_value(&trial)?;
            if ft <= f - 0.25 * t * decrement {
                break obj.full_grad(&trial)?;
            }
            // near the optimum f no longer resolves decreases; judge by the gradient
            if ft <= f + 4.0 * f64::EPSILON * f.abs() {
                let gt = obj.full_grad(&trial)?;
                if sq_norm(&gt) < sq_norm(&g) {
                    break gt;
                }
            }
            t *= 0.5;
            if t < 1e-12 {
                return Err(Error::NotConverged(format!(
                    "Newton line search stalled at gradient norm {gnorm:e}"
                )));
            }
        };
        x.copy_from_slice(&trial);
        f = obj.full_value(&x)?;
        g = g_new;
    }
    Err(Error::NotConverged(format!(
        "Newton did not reach {tol:e} in {NEWTON_MAX_ITERS} iterations"
    )))
}

/// Proximal gradient descent from `x0` with `γ = 1/L`.
pub fn prox_gradient(obj: &GlmObjective, tol: f64, x0: Vec<f64>) -> Result<Reference> {
    let l = obj.smoothness()?.l_full;
    let gamma = 1.0 / l;
    let mut x = x0;
    let mut g = vec![0.0; obj.d()];
    for it in 0..MAX_REFERENCE_ITERS {
        obj.full_grad_into(&x, &mut g)?;
        let residual = obj.stationarity(&x, &g, l);
        if residual <= tol {
            return Ok(Reference {
                f: obj.composite_value(&x)?,
                x,
                residual,
                tol,
                iterations: it,
            });
        }
        for (xj, gj) in x.iter_mut().zip(&g) {
            *xj -= gamma * gj;
        }
        obj.prox_in_place(gamma, &mut x)?;
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence { gamma });
        }
    }
    Err(Error::NotConverged(format!(
        "proximal gradient did not reach {tol:e} in {MAX_REFERENCE_ITERS} iterations"
    )))
}

/// Directory of cached reference solutions keyed by problem fingerprint.
#[derive(Debug, Clone)]
pub struct ReferenceCache {
    dir: PathBuf,
}

impl ReferenceCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        ReferenceCache { dir: dir.into() }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// Hex SHA-256 of the dataset fingerprint, loss and regularization.
    pub fn key(obj: &GlmObjective) -> String {
        let mut h = Sha256::new();
        h.update(obj.data().fingerprint().as_bytes());
        h.update(obj.loss().name().as_bytes());
        h.update(obj.l2().to_le_bytes());
        h.update(obj.l1().to_le_bytes());
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn paths(&self, obj: &GlmObjective) -> (PathBuf, PathBuf) {
        let key = Self::key(obj);
        (
            self.dir.join(format!("{key}.xstar")),
            self.dir.join(format!("{key}.fstar")),
        )
    }

    /// Cached solution solved at least as tightly as `tol`, if any.
    pub fn load(&self, obj: &GlmObjective, tol: f64) -> Result<Option<Reference>> {
        let (xp, fp) = self.paths(obj);
        if !xp.exists() || !fp.exists() {
            return Ok(None);
        }
        let (f, cached_tol) = read_fstar(&fp)?;
        if cached_tol > tol {
            return Ok(None);
        }
        let x = vecfile::read_vector_file(&xp)?;
        if x.len() != obj.d() {
            return Ok(None);
        }
        let g = obj.full_grad(&x)?;
        let residual = obj.stationarity(&x, &g, obj.smoothness()?.l_full);
        Ok(Some(Reference {
            x,
            f,
            residual,
            tol: cached_tol,
            iterations: 0,
        }))
    }

    pub fn store(&self, obj: &GlmObjective, r: &Reference) -> Result<()> {
        std::fs::create_dir_all(&self.dir).map_err(|e| vecfile::annotate(e, &self.dir))?;
        let (xp, fp) = self.paths(obj);
        vecfile::write_vector_file(&xp, &r.x)?;
        write_fstar(&fp, r.f, r.tol)
    }

    /// Loads or solves and stores. The flag reports a cache hit.
    pub fn solve(&self, obj: &GlmObjective, tol: f64) -> Result<(Reference, bool)> {
        if let Some(r) = self.load(obj, tol)? {
            return Ok((r, true));
        }
        let r = solve_reference(obj, tol)?;
        self.store(obj, &r)?;
        Ok((r, false))
    }
}

/// `f*` text file: the value with 17 significant digits, then the tolerance.
pub fn write_fstar(path: &Path, f: f64, tol: f64) -> Result<()> {
    vecfile::atomic_write(path, format!("{f:.16e}\ntol {tol:.16e}\n").as_bytes())
}

/// Reads `(f*, tol)`; a file holding only the value reports `tol = ∞`.
pub fn read_fstar(path: &Path) -> Result<(f64, f64)> {
    let text = std::fs::read_to_string(path).map_err(|e| vecfile::annotate(e, path))?;
    let mut lines = text.lines();
    let bad = |m: &str| Error::Format(format!("{}: {m}", path.display()));
    let f = lines
        .next()
        .and_then(|l| l.trim().parse::<f64>().ok())
        .ok_or_else(|| bad("first line must be the optimal value"))?;
    let tol = match lines.next() {
        Some(l) => l
            .trim()
            .strip_prefix("tol")
            .and_then(|v| v.trim().parse::<f64>().ok())
            .ok_or_else(|| bad("second line must be 'tol <value>'"))?,
        None => f64::INFINITY,
    };
    Ok((f, tol))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Dataset;
    use crate::objective::LossKind;
    use crate::synth;
    use std::sync::Arc;

    #[test]
    fn one_d_quadratic() {
        let ds = Dataset::from_dense(&[vec![1.0]], vec![3.0]).unwrap();
        let obj = GlmObjective::new(Arc::new(ds), LossKind::HalfSquared, 0.0, 0.0).unwrap();
        let r = solve_reference(&obj, 1e-12).unwrap();
        assert!((r.x[0] - 3.0).abs() <= 1e-12);
        assert!(r.f.abs() <= 1e-24);
    }

    #[test]
    fn newton_and_gd_agree() {
        let obj = synth::dense_toy(60, 5, LossKind::Logistic, 0.05, 7).unwrap();
        let a = solve_reference(&obj, 1e-12).unwrap();
        let b = prox_gradient(&obj, 1e-11, vec![0.0; 5]).unwrap();
        assert!(a.residual <= 1e-12);
        for (u, v) in a.x.iter().zip(&b.x) {
            assert!((u - v).abs() <= 1e-9);
        }
        // the per-example gradients at x* average to zero
        let mut mean = vec![0.0; 5];
        for i in 0..60 {
            for (m, g) in mean.iter_mut().zip(obj.grad_i(i, &a.x).unwrap()) {
                *m += g / 60.0;
            }
        }
        assert!(sq_norm(&mean).sqrt() <= 1e-12);
    }

    #[test]
    fn composite_fixed_point() {
        let obj = synth::dense_toy(40, 8, LossKind::HalfSquared, 0.01, 3)
            .unwrap()
            .with_l1(0.05)
            .unwrap();
        let r = solve_reference(&obj, 1e-10).unwrap();
        assert!(r.residual <= 1e-10);
        assert!(r.x.contains(&0.0));
    }

    #[test]
    fn cache_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let cache = ReferenceCache::new(dir.path());
        let obj = synth::dense_toy(20, 3, LossKind::Logistic, 0.1, 1).unwrap();
        let (a, hit) = cache.solve(&obj, 1e-12).unwrap();
        assert!(!hit);
        let (b, hit) = cache.solve(&obj, 1e-12).unwrap();
        assert!(hit);
        assert_eq!(a.x, b.x);
        assert_eq!(a.f, b.f);
        // a tighter request is not served from a looser cache entry
        assert!(cache.load(&obj, 1e-13).unwrap().is_none());
        let other = synth::dense_toy(20, 3, LossKind::Logistic, 0.2, 1).unwrap();
        assert_ne!(ReferenceCache::key(&obj), ReferenceCache::key(&other));
    }
}
