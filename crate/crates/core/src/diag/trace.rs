use std::io::{BufRead, Write};

use crate::error::{Error, Result};

pub const TRACE_HEADER: &str = "epoch,grad_evals,f,subopt,grad_norm,var_est,gap,time_s";

/// One checkpoint of a run.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TraceRecord {
    /// Gradient evaluations divided by `n`.
    pub epoch: f64,
    pub grad_evals: u64,
    pub f: f64,
    pub subopt: Option<f64>,
    pub grad_norm: Option<f64>,
    pub var_est: Option<f64>,
    pub gap: Option<f64>,
    pub time_s: Option<f64>,
    /// Norm of the method's own gradient estimate (‖ḡ + λx‖ for table
    /// methods, ‖∇f(x̄)‖ for SVRG). Kept in memory only.
    pub estimate_norm: Option<f64>,
}

fn fmt_real(v: f64) -> String {
    format!("{v:.16e}")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_real).unwrap_or_default()
}

/// Writes the CSV header and one line per record.
pub fn write_trace<W: Write>(records: &[TraceRecord], mut sink: W) -> Result<()> {
    writeln!(sink, "{TRACE_HEADER}")?;
    for r in records {
        writeln!(
            sink,
            "{},{},{},{},{},{},{},{}",
            fmt_real(r.epoch),
            r.grad_evals,
            fmt_real(r.f),
            fmt_opt(r.subopt),
            fmt_opt(r.grad_norm),
            fmt_opt(r.var_est),
            fmt_opt(r.gap),
            fmt_opt(r.time_s),
        )?;
    }
    sink.flush()?;
    Ok(())
}

pub fn trace_to_string(records: &[TraceRecord]) -> String {
    let mut buf = Vec::new();
    write_trace(records, &mut buf).expect("writing to memory cannot fail");
    String::from_utf8(buf).expect("trace is ASCII")
}

fn parse_field(s: &str, line: usize, name: &str) -> Result<Option<f64>> {
    if s.is_empty() {
        return Ok(None);
    }
    s.parse::<f64>().map(Some).map_err(|_| Error::Parse {
        line,
        message: format!("bad {name} value '{s}'"),
    })
}

/// Parses a trace written by [`write_trace`].
pub fn read_trace<R: BufRead>(reader: R) -> Result<Vec<TraceRecord>> {
    let mut lines = reader.lines();
    match lines.next().transpose()? {
        Some(h) if h.trim_end() == TRACE_HEADER => {}
        _ => {
            return Err(Error::Parse {
                line: 1,
                message: format!("expected header '{TRACE_HEADER}'"),
            })
        }
    }
    let mut out = Vec::new();
    for (k, line) in lines.enumerate() {
        let line = line?;
        let lineno = k + 2;
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.trim_end().split(',').collect();
        if cells.len() != 8 {
            return Err(Error::Parse {
                line: lineno,
                message: format!("expected 8 cells, found {}", cells.len()),
            });
        }
        let required = |s: &str, name: &str| {
            parse_field(s, lineno, name)?.ok_or_else(|| Error::Parse {
                line: lineno,
                message: format!("missing {name}"),
            })
        };
        out.push(TraceRecord {
            epoch: required(cells[0], "epoch")?,
            grad_evals: cells[1].parse().map_err(|_| Error::Parse {
                line: lineno,
                message: format!("bad grad_evals value '{}'", cells[1]),
            })?,
            f: required(cells[2], "f")?,
            subopt: parse_field(cells[3], lineno, "subopt")?,
            grad_norm: parse_field(cells[4], lineno, "grad_norm")?,
            var_est: parse_field(cells[5], lineno, "var_est")?,
            gap: parse_field(cells[6], lineno, "gap")?,
            time_s: parse_field(cells[7], lineno, "time_s")?,
            estimate_norm: None,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn empty_trace_is_header_only() {
        assert_eq!(trace_to_string(&[]), format!("{TRACE_HEADER}\n"));
    }

    #[test]
    fn absent_fields_are_empty_cells() {
        let r = TraceRecord {
            epoch: 1.0,
            grad_evals: 10,
            f: 0.5,
            ..Default::default()
        };
        let s = trace_to_string(&[r]);
        assert!(s.lines().nth(1).unwrap().ends_with(",,,,,"));
    }

    #[test]
    fn rejects_bad_header() {
        assert!(read_trace("a,b\n".as_bytes()).is_err());
    }

    proptest! {
        #[test]
        fn round_trip_exact(
            vals in proptest::collection::vec(
                (any::<f64>().prop_filter("finite", |v| v.is_finite()), 0u64..1_000_000,
                 proptest::option::of(-1e300f64..1e300)),
                0..20)
        ) {
            let recs: Vec<TraceRecord> = vals.iter().map(|&(f, g, o)| TraceRecord {
                epoch: g as f64 / 7.0,
                grad_evals: g,
                f,
                subopt: o,
                grad_norm: o.map(|v| v.abs()),
                var_est: None,
                gap: o,
                time_s: None,
                estimate_norm: None,
            }).collect();
            let back = read_trace(trace_to_string(&recs).as_bytes()).unwrap();
            prop_assert_eq!(back, recs);
        }
    }
}
