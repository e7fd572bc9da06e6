//! Subcommand implementations.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use vropt_core::diag::reference::{read_fstar, write_fstar};
use vropt_core::diag::{fit_linear_rate, trace_to_string, Reference, DEFAULT_REFERENCE_TOL};
use vropt_core::optim::StopReason;
use vropt_core::validate::{report_csv, run_suite, Fault, SuiteConfig};
use vropt_core::vecfile::{atomic_write, read_vector_file, write_vector_file};
use vropt_core::{run as run_method, GlmObjective, Method, RunConfig, Trace};

use crate::error::{CliError, CliResult, Kind};
use crate::experiment::parse_experiment;
use crate::setup::{fmt_f, load_problem, reference_cache, sidecar, Meta, MethodSpec, ProblemSpec};

fn write_file(path: &Path, text: &str) -> CliResult<()> {
    atomic_write(path, text.as_bytes()).map_err(|e| CliError::from(e).context(format!("writing {}", path.display())))
}

fn ensure_dir(dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(format!("creating {}: {e}", dir.display())))
}

/// Cached or freshly solved reference for a smooth problem.
fn reference(obj: &GlmObjective, tol: f64, meta: &mut Meta) -> CliResult<Reference> {
    let cache = reference_cache();
    let (r, hit) = cache.solve(obj, tol)?;
    meta.push("fstar", format!("{:.16e}", r.f));
    meta.push("reference_residual", fmt_f(r.residual));
    log::info!("reference {} ({})", if hit { "loaded from cache" } else { "solved" }, cache.dir().display());
    Ok(r)
}

fn stop_label(t: &Trace) -> String {
    match t.stop_reason {
        StopReason::Budget => "budget".into(),
        StopReason::Rule(r) => format!("{r:?}"),
    }
}

fn record_outcome(meta: &mut Meta, trace: &Trace) {
    if let Some(g) = trace.stepsize {
        meta.push("stepsize_used", fmt_f(g));
    }
    meta.push("used_jit", trace.used_jit);
    meta.push("grad_evals", trace.grad_evals);
    meta.push("stop_reason", stop_label(trace));
}

pub fn solve_ref(problem: &ProblemSpec, tol: f64, out: Option<&Path>) -> CliResult<()> {
    let mut meta = Meta::default();
    let obj = load_problem(problem, &mut meta)?;
    let cache = reference_cache();
    let (r, hit) = cache.solve(&obj, tol)?;
    let (xp, fp) = cache.paths(&obj);
    if let Some(prefix) = out {
        let (xo, fo) = (sidecar(prefix, ".xstar"), sidecar(prefix, ".fstar"));
        write_vector_file(&xo, &r.x)?;
        write_fstar(&fo, r.f, r.tol)?;
        println!("wrote {} and {}", xo.display(), fo.display());
    }
    println!(
        "{} f* = {:.16e} residual = {:e} ({})",
        if hit { "cache hit:" } else { "solved:" },
        r.f,
        r.residual,
        xp.with_extension("").display()
    );
    log::debug!("cache files {} {}", xp.display(), fp.display());
    Ok(())
}

/// `--fstar` takes either a number or a file written by `solve-ref`.
fn parse_fstar(arg: &str) -> CliResult<f64> {
    if let Ok(v) = arg.trim().parse::<f64>() {
        return Ok(v);
    }
    Ok(read_fstar(Path::new(arg))?.0)
}

pub fn run(
    problem: &ProblemSpec,
    spec: &MethodSpec,
    seed: u64,
    xstar: Option<&Path>,
    fstar: Option<&str>,
    out: Option<&Path>,
) -> CliResult<()> {
    if spec.method == Method::SgdStar && xstar.is_none() {
        return Err(CliError::usage("sgd_star needs --xstar"));
    }
    let mut meta = Meta::default();
    meta.push("command", "run");
    let obj = load_problem(problem, &mut meta)?;
    let mut config = spec.to_config(&obj, seed, &mut meta)?;
    if let Some(p) = xstar {
        let x = read_vector_file(p).map_err(|e| CliError::from(e).context("reading --xstar"))?;
        if x.len() != obj.d() {
            return Err(CliError::usage(format!("--xstar has {} entries, the problem has d = {}", x.len(), obj.d())));
        }
        meta.push("xstar", p.display());
        config.x_star = Some(x);
    }
    config.f_star = match (fstar, &config.x_star) {
        (Some(a), _) => Some(parse_fstar(a)?),
        (None, Some(x)) => Some(obj.composite_value(x)?),
        (None, None) => None,
    };
    if let Some(f) = config.f_star {
        meta.push("fstar", format!("{f:.16e}"));
    }
    let (trace, failure) = match run_method(&config, &obj) {
        Ok(t) => (t, None),
        Err(f) => (f.partial, Some(CliError::from(f.error))),
    };
    record_outcome(&mut meta, &trace);
    if let Some(e) = &failure {
        meta.push("status", format!("failed: {e}"));
    }
    let csv = trace_to_string(&trace.records);
    match out {
        Some(path) => {
            write_file(path, &csv)?;
            write_file(&sidecar(path, ".meta"), &meta.render())?;
        }
        None => print!("{csv}"),
    }
    failure.map_or(Ok(()), Err)
}

struct JobResult {
    label: String,
    method: Method,
    seed: u64,
    trace: Trace,
    meta: Meta,
    error: Option<CliError>,
}

pub const SUMMARY_HEADER: &str = "label,method,seed,epochs,final_subopt,final_gap,rho_hat,status";

pub fn compare(spec_path: &Path, jobs: Option<usize>) -> CliResult<()> {
    let text = std::fs::read_to_string(spec_path)
        .map_err(|e| CliError::io(format!("reading {}: {e}", spec_path.display())))?;
    let base = spec_path.parent().map(Path::to_path_buf).unwrap_or_default();
    let exp = parse_experiment(&text, &base).map_err(|e| e.context(spec_path.display()))?;

    let mut shared = Meta::default();
    shared.push("command", "compare");
    shared.push("experiment", spec_path.display());
    let obj = load_problem(&exp.problem, &mut shared)?;

    // Every configuration is built and dry-run before the grid starts.
    let mut planned: Vec<(String, Method, u64, RunConfig, Meta)> = Vec::new();
    for entry in &exp.methods {
        for &seed in &exp.seeds {
            let mut meta = shared.clone();
            meta.push("label", &entry.label);
            let config = entry
                .spec
                .to_config(&obj, seed, &mut meta)
                .map_err(|e| e.context(format!("method {}", entry.label)))?;
            let mut probe = config.clone();
            probe.epochs = 0.0;
            probe.x_star = Some(vec![0.0; obj.d()]);
            if let Err(f) = run_method(&probe, &obj) {
                return Err(CliError::from(f.error).context(format!("method {}", entry.label)));
            }
            planned.push((entry.label.clone(), entry.spec.method, seed, config, meta));
        }
    }
    ensure_dir(&exp.out)?;
    write_file(&exp.out.join(".write-probe"), "")?;
    let _ = std::fs::remove_file(exp.out.join(".write-probe"));

    let reference = if obj.loss().is_smooth() {
        Some(reference(&obj, DEFAULT_REFERENCE_TOL, &mut Meta::default())?)
    } else {
        None
    };
    for (_, _, _, config, meta) in &mut planned {
        if let Some(r) = &reference {
            config.f_star = Some(r.f);
            config.x_star = Some(r.x.clone());
            meta.push("fstar", format!("{:.16e}", r.f));
        }
    }

    let execute = |(label, method, seed, config, mut meta): (String, Method, u64, RunConfig, Meta)| {
        let (trace, error) = match run_method(&config, &obj) {
            Ok(t) => (t, None),
            Err(f) => (f.partial, Some(CliError::from(f.error))),
        };
        record_outcome(&mut meta, &trace);
        JobResult {
            label,
            method,
            seed,
            trace,
            meta,
            error,
        }
    };
    let results: Vec<JobResult> = match jobs {
        Some(j) => rayon::ThreadPoolBuilder::new()
            .num_threads(j.max(1))
            .build()
            .map_err(|e| CliError::usage(format!("thread pool: {e}")))?
            .install(|| planned.into_par_iter().map(execute).collect()),
        None => planned.into_par_iter().map(execute).collect(),
    };

    let mut summary = format!("{SUMMARY_HEADER}\n");
    let mut worst: Option<Kind> = None;
    for r in &results {
        let stem = format!("{}_seed{}", r.label, r.seed);
        let path = exp.out.join(format!("{stem}.csv"));
        let mut meta = r.meta.clone();
        if let Some(e) = &r.error {
            meta.push("status", format!("failed: {e}"));
        }
        write_file(&path, &trace_to_string(&r.trace.records))?;
        write_file(&sidecar(&path, ".meta"), &meta.render())?;
        let last = r.trace.last();
        let rho = fit_linear_rate(&r.trace.records, 0).ok().map(|f| fmt_f(f.rho_hat)).unwrap_or_default();
        let status = match &r.error {
            None => "ok".to_string(),
            Some(e) if e.kind == Kind::Divergence => "diverged".into(),
            Some(_) => "error".into(),
        };
        if let Some(e) = &r.error {
            worst = Some(match (worst, e.kind) {
                (Some(Kind::Divergence), _) | (_, Kind::Divergence) => Kind::Divergence,
                (_, k) => k,
            });
        }
        summary.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.label,
            r.method,
            r.seed,
            last.map(|l| l.epoch.to_string()).unwrap_or_default(),
            last.and_then(|l| l.subopt).map(fmt_f).unwrap_or_default(),
            last.and_then(|l| l.gap).map(fmt_f).unwrap_or_default(),
            rho,
            status
        ));
    }
    write_file(&exp.out.join("summary.csv"), &summary)?;
    print!("{summary}");
    match worst {
        None => Ok(()),
        Some(kind) => Err(CliError {
            kind,
            message: "some runs failed; see summary.csv".into(),
        }),
    }
}

/// Bounding box of the points with a relative margin, never degenerate.
fn bounding_box(points: &[[f64; 2]]) -> ([f64; 2], [f64; 2]) {
    let mut lo = [f64::INFINITY; 2];
    let mut hi = [f64::NEG_INFINITY; 2];
    for p in points {
        for k in 0..2 {
            if p[k].is_finite() {
                lo[k] = lo[k].min(p[k]);
                hi[k] = hi[k].max(p[k]);
            }
        }
    }
    for k in 0..2 {
        if !lo[k].is_finite() {
            (lo[k], hi[k]) = (-1.0, 1.0);
        }
        let pad = (0.1 * (hi[k] - lo[k])).max(1e-3 * (1.0 + lo[k].abs().max(hi[k].abs())));
        lo[k] -= pad;
        hi[k] += pad;
    }
    (lo, hi)
}

pub fn trace2d(problem: &ProblemSpec, spec: &MethodSpec, seed: u64, out: &Path, grid: usize) -> CliResult<()> {
    if grid < 2 {
        return Err(CliError::usage("--grid needs at least 2 points per axis"));
    }
    let mut meta = Meta::default();
    meta.push("command", "trace2d");
    let obj = load_problem(problem, &mut meta)?;
    if obj.d() != 2 {
        return Err(CliError::usage(format!("trace2d needs a 2-feature dataset, this one has d = {}", obj.d())));
    }
    let mut config = spec.to_config(&obj, seed, &mut meta)?;
    config.record_iterates = true;
    let x_star = if obj.loss().is_smooth() {
        let r = reference(&obj, DEFAULT_REFERENCE_TOL, &mut meta)?;
        config.f_star = Some(r.f);
        config.x_star = Some(r.x.clone());
        meta.push("xstar", format!("{:.16e} {:.16e}", r.x[0], r.x[1]));
        Some(r.x)
    } else {
        None
    };
    ensure_dir(out)?;
    let (trace, failure) = match run_method(&config, &obj) {
        Ok(t) => (t, None),
        Err(f) => (f.partial, Some(CliError::from(f.error))),
    };
    record_outcome(&mut meta, &trace);

    let mut iter_csv = String::from("k,x1,x2\n");
    let mut pts: Vec<[f64; 2]> = Vec::with_capacity(trace.iterates.len() + 1);
    for (k, x) in trace.iterates.iter().enumerate() {
        iter_csv.push_str(&format!("{k},{:.16e},{:.16e}\n", x[0], x[1]));
        pts.push([x[0], x[1]]);
    }
    if let Some(x) = &x_star {
        let tail = &pts[pts.len().saturating_sub(100)..];
        let min_dist = tail
            .iter()
            .map(|p| ((p[0] - x[0]).powi(2) + (p[1] - x[1]).powi(2)).sqrt())
            .fold(f64::INFINITY, f64::min);
        let initial = pts.first().map(|p| ((p[0] - x[0]).powi(2) + (p[1] - x[1]).powi(2)).sqrt());
        meta.push("tail_min_distance", fmt_f(min_dist));
        if let Some(d0) = initial {
            meta.push("initial_distance", fmt_f(d0));
        }
        pts.push([x[0], x[1]]);
    }
    let (lo, hi) = bounding_box(&pts);
    let mut grid_csv = String::from("x1,x2,f\n");
    for i in 0..grid {
        let a = lo[0] + (hi[0] - lo[0]) * i as f64 / (grid - 1) as f64;
        for j in 0..grid {
            let b = lo[1] + (hi[1] - lo[1]) * j as f64 / (grid - 1) as f64;
            let f = obj.composite_value(&[a, b])?;
            grid_csv.push_str(&format!("{a:.16e},{b:.16e},{f:.16e}\n"));
        }
    }
    meta.push("grid", format!("{grid}x{grid} over [{:e}, {:e}] x [{:e}, {:e}]", lo[0], hi[0], lo[1], hi[1]));
    if let Some(e) = &failure {
        meta.push("status", format!("failed: {e}"));
    }
    write_file(&out.join("iterates.csv"), &iter_csv)?;
    write_file(&out.join("grid.csv"), &grid_csv)?;
    write_file(&out.join("trace.csv"), &trace_to_string(&trace.records))?;
    write_file(&out.join("run.meta"), &meta.render())?;
    failure.map_or(Ok(()), Err)
}

pub fn validate(only: Option<&str>, data_dir: &Path, fault: Option<&str>, report: Option<&Path>) -> CliResult<()> {
    let mut cfg = SuiteConfig::new(PathBuf::from(data_dir));
    cfg.fault = match fault {
        None => None,
        Some("saga-sign-flip") => Some(Fault::SagaSignFlip),
        Some(other) => return Err(CliError::usage(format!("unknown fault '{other}' (valid: saga-sign-flip)"))),
    };
    let outcomes = run_suite(&cfg, only)?;
    let csv = report_csv(&outcomes);
    print!("{csv}");
    if let Some(path) = report {
        write_file(path, &csv)?;
    }
    let failed: Vec<String> = outcomes
        .iter()
        .filter(|o| !o.passed)
        .map(|o| {
            if o.note.is_empty() {
                format!("{}/{}", o.group, o.check)
            } else {
                format!("{}/{} ({})", o.group, o.check, o.note)
            }
        })
        .collect();
    if failed.is_empty() {
        eprintln!("validate: all {} checks passed", outcomes.len());
        Ok(())
    } else {
        Err(CliError {
            kind: Kind::Divergence,
            message: format!("{} of {} checks failed: {}", failed.len(), outcomes.len(), failed.join("; ")),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fstar_accepts_numbers_and_files() {
        assert_eq!(parse_fstar("0.25").unwrap(), 0.25);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("f");
        write_fstar(&p, 1.5, 1e-12).unwrap();
        assert_eq!(parse_fstar(p.to_str().unwrap()).unwrap(), 1.5);
        assert_eq!(parse_fstar("/no/such/file").unwrap_err().kind, Kind::Io);
    }

    #[test]
    fn bounding_box_pads_and_handles_single_points() {
        let (lo, hi) = bounding_box(&[[0.0, 0.0], [1.0, 2.0]]);
        assert!(lo[0] < 0.0 && hi[0] > 1.0 && lo[1] < 0.0 && hi[1] > 2.0);
        let (lo, hi) = bounding_box(&[[3.0, 3.0]]);
        assert!(lo[0] < 3.0 && hi[0] > 3.0);
    }
}
