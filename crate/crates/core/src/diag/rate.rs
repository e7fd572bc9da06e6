use crate::error::{Error, Result};

use super::trace::TraceRecord;

/// Suboptimality at or below this is treated as underflow and ends the
/// fitted window.
pub const SUBOPT_FLOOR: f64 = 1e-15;
pub const MIN_FIT_POINTS: usize = 5;

/// Fitted model `subopt ≈ Ĉ·(1 − ρ̂)^k`, with `k` counted in gradient
/// evaluations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateFit {
    pub rho_hat: f64,
    pub c_hat: f64,
    pub r2: f64,
    pub points: usize,
}

/// Least-squares fit of `ln(subopt)` against `grad_evals` over the
/// records past `burn_in` evaluations.
pub fn fit_linear_rate(trace: &[TraceRecord], burn_in: u64) -> Result<RateFit> {
    let mut pts: Vec<(f64, f64)> = Vec::new();
    for r in trace.iter().filter(|r| r.grad_evals >= burn_in) {
        match r.subopt {
            Some(s) if s > SUBOPT_FLOOR => pts.push((r.grad_evals as f64, s.ln())),
            Some(_) => break,
            None => {
                return Err(Error::invalid(
                    "rate fitting needs suboptimality values; supply f*",
                ))
            }
        }
    }
    if pts.len() < MIN_FIT_POINTS {
        return Err(Error::invalid(format!(
            "rate fitting needs at least {MIN_FIT_POINTS} usable checkpoints, found {}",
            pts.len()
        )));
    }
    let m = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        return Err(Error::invalid("checkpoints share one gradient count"));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_tot: f64 = pts.iter().map(|p| (p.1 - my) * (p.1 - my)).sum();
    let ss_res: f64 = pts
        .iter()
        .map(|p| {
            let e = p.1 - (intercept + slope * p.0);
            e * e
        })
        .sum();
    let r2 = if ss_tot == 0.0 { 1.0 } else { 1.0 - ss_res / ss_tot };
    let rho_hat = -slope.exp_m1();
    if rho_hat < 0.0 {
        return Err(Error::invalid(format!(
            "suboptimality grows along the trace (fitted factor {:.6})",
            slope.exp()
        )));
    }
    Ok(RateFit {
        rho_hat,
        c_hat: intercept.exp(),
        r2,
        points: pts.len(),
    })
}
