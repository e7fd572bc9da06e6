use crate::error::{Error, Result};

use super::trace::TraceRecord;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StopRule {
    /// `‖∇f(x)‖ ≤ ε` (gradient mapping with an L1 term).
    GradNorm(f64),
    /// Norm of the method's own estimate `≤ ε`.
    GbarNorm(f64),
    /// Duality gap `≤ ε`.
    Gap(f64),
    MaxEpochs(f64),
}

impl std::str::FromStr for StopRule {
    type Err = Error;

    /// `grad:ε`, `gbar:ε`, `gap:ε`, `epochs` or `epochs:N`.
    fn from_str(s: &str) -> Result<Self> {
        let (kind, value) = match s.split_once(':') {
            Some((k, v)) => (k, Some(v)),
            None => (s, None),
        };
        let num = |v: Option<&str>| -> Result<f64> {
            let v = v.ok_or_else(|| Error::invalid(format!("stop rule '{s}' needs a threshold")))?;
            match v.parse::<f64>() {
                Ok(x) if x >= 0.0 => Ok(x),
                _ => Err(Error::invalid(format!("bad threshold in stop rule '{s}'"))),
            }
        };
        match kind {
            "grad" => Ok(StopRule::GradNorm(num(value)?)),
            "gbar" => Ok(StopRule::GbarNorm(num(value)?)),
            "gap" => Ok(StopRule::Gap(num(value)?)),
            "epochs" => match value {
                None => Ok(StopRule::MaxEpochs(f64::INFINITY)),
                v => Ok(StopRule::MaxEpochs(num(v)?)),
            },
            _ => Err(Error::invalid(format!(
                "unknown stop rule '{s}' (expected grad:ε, gbar:ε, gap:ε or epochs)"
            ))),
        }
    }
}

/// Evaluates `rule` on a checkpoint.
pub fn should_stop(rule: &StopRule, record: &TraceRecord) -> Result<bool> {
    let need = |v: Option<f64>, what: &str| {
        v.ok_or_else(|| Error::config(format!("stop rule needs {what}, which this run does not record")))
    };
    Ok(match *rule {
        StopRule::GradNorm(eps) => need(record.grad_norm, "the gradient norm")? <= eps,
        StopRule::GbarNorm(eps) => need(record.estimate_norm, "a gradient-estimate norm")? <= eps,
        StopRule::Gap(eps) => need(record.gap, "a duality gap")? <= eps,
        StopRule::MaxEpochs(e) => record.epoch >= e,
    })
}
