//! `solve` and `bench`: run configured solvers from a JSON experiment file.

use std::path::PathBuf;

use anyhow::Result;
use clap::Args;
use serde::Serialize;

use sapd::bench::{collect_rows, run_bench, run_solver, summarize, BenchConfig, SummaryRow, TraceRow};
use sapd::solvers::RunConfig;

use crate::config::{read_json, resolve_solvers, Built, ExperimentConfig, ResolvedSolver};
use crate::rundir::{slug, RunDir};
use crate::Status;

#[derive(Args, Debug)]
pub struct ExperimentArgs {
    /// Versioned JSON experiment configuration.
    #[arg(long)]
    config: PathBuf,
    /// Run directory (default runs/<command>-<unix ms>).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override the iteration count.
    #[arg(long)]
    iters: Option<usize>,
    /// Override the number of paths (bench only).
    #[arg(long)]
    paths: Option<usize>,
    /// Override the base seed; path i uses seed + i.
    #[arg(long)]
    seed: Option<u64>,
    /// Write one trace file per path instead of a combined file (bench only).
    #[arg(long)]
    per_path: bool,
}

fn load(a: &ExperimentArgs) -> Result<ExperimentConfig> {
    let mut cfg: ExperimentConfig = read_json(&a.config)?;
    if let Some(v) = a.iters {
        cfg.iters = v;
    }
    if let Some(v) = a.paths {
        cfg.paths = v;
    }
    if let Some(v) = a.seed {
        cfg.base_seed = v;
    }
    cfg.validate()
}

struct Prepared {
    built: Built,
    x0: Vec<f64>,
    y0: Vec<f64>,
    x_ref: Vec<f64>,
    y_ref: Vec<f64>,
    solvers: Vec<ResolvedSolver>,
}

fn prepare(cfg: &ExperimentConfig) -> Result<Prepared> {
    let built = Built::new(&cfg.problem, cfg.base_seed)?;
    let (x0, y0) = cfg.start.point(built.problem(), built.is_dro());
    let (x_ref, y_ref) = built.reference()?;
    let solvers = resolve_solvers(&cfg.solvers, built.problem(), cfg.base_seed)?;
    for s in &solvers {
        if let Some(c) = &s.certificate {
            log::info!("{}: certified rate {:.6} (feasible: {})", s.spec.label(), c.rho, c.feasible);
        }
    }
    Ok(Prepared { built, x0, y0, x_ref, y_ref, solvers })
}

/// One trace line of `solve`.
#[derive(Serialize)]
struct SolveRow {
    k: usize,
    dist_sq: f64,
    gap: Option<f64>,
    seed: u64,
}

#[derive(Serialize)]
struct SolveFinal {
    solver: String,
    seed: u64,
    iters: usize,
    final_dist_sq: Option<f64>,
    final_gap: Option<f64>,
    /// Gap at the ergodic average.
    average_gap: Option<f64>,
    error: Option<String>,
}

pub fn cmd_solve(a: &ExperimentArgs) -> Result<Status> {
    let cfg = load(a)?;
    let mut dir = RunDir::create(a.out.as_deref(), "solve", &cfg)?;
    let prep = prepare(&cfg)?;
    dir.write_json("solvers.json", &prep.solvers)?;
    let mut finals = Vec::new();
    for s in &prep.solvers {
        let label = s.spec.label();
        let mut run_cfg = RunConfig::new(cfg.iters, cfg.base_seed);
        run_cfg.record_every = cfg.record_every;
        run_cfg.record_gap = !prep.built.is_dro();
        let result = run_solver(prep.built.problem(), &s.spec, &prep.x0, &prep.y0, &run_cfg, Some((&prep.x_ref, &prep.y_ref)));
        let fin = match result {
            Ok(run) => {
                let rows: Vec<SolveRow> =
                    run.trace.iter().map(|r| SolveRow { k: r.k, dist_sq: r.dist_sq, gap: r.gap, seed: r.seed }).collect();
                dir.write_csv(&format!("trace_{}.csv", slug(&label)), &rows)?;
                let last = run.trace.last();
                SolveFinal {
                    solver: label,
                    seed: cfg.base_seed,
                    iters: cfg.iters,
                    final_dist_sq: last.map(|r| r.dist_sq),
                    final_gap: last.and_then(|r| r.gap),
                    average_gap: prep.built.gap(&run.x_bar, &run.y_bar),
                    error: None,
                }
            }
            Err(e) => {
                log::warn!("{label} failed: {e}");
                SolveFinal {
                    solver: label,
                    seed: cfg.base_seed,
                    iters: cfg.iters,
                    final_dist_sq: None,
                    final_gap: None,
                    average_gap: None,
                    error: Some(e.to_string()),
                }
            }
        };
        println!(
            "{:<24} final dist_sq {:>12} average gap {:>12}",
            fin.solver,
            fmt_opt(fin.final_dist_sq),
            fmt_opt(fin.average_gap)
        );
        finals.push(fin);
    }
    let ok = finals.iter().all(|f| f.error.is_none());
    dir.write_json("final.json", &finals)?;
    dir.finish(Status::from_ok(ok))
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), |v| format!("{v:.4e}"))
}

#[derive(Serialize)]
struct FailureRow {
    solver: String,
    path: usize,
    seed: u64,
    error: String,
}

/// Last-iteration statistics per solver.
#[derive(Serialize)]
struct FinalStats<'a> {
    solver: &'a str,
    k: usize,
    paths: usize,
    failed_paths: usize,
    mean_dist_sq: f64,
    median_dist_sq: f64,
    se_dist_sq: f64,
}

pub fn cmd_bench(a: &ExperimentArgs) -> Result<Status> {
    let cfg = load(a)?;
    let mut dir = RunDir::create(a.out.as_deref(), "bench", &cfg)?;
    let prep = prepare(&cfg)?;
    dir.write_json("solvers.json", &prep.solvers)?;
    let bench = BenchConfig { iters: cfg.iters, paths: cfg.paths, base_seed: cfg.base_seed, record_every: cfg.record_every };
    let specs: Vec<_> = prep.solvers.iter().map(|s| s.spec.clone()).collect();
    let results = run_bench(prep.built.problem(), &specs, &prep.x0, &prep.y0, (&prep.x_ref, &prep.y_ref), &bench)?;

    let rows = collect_rows(&results);
    if a.per_path {
        for r in results.iter().filter(|r| r.outcome.is_ok()) {
            let path_rows: Vec<&TraceRow> = rows.iter().filter(|t| t.solver == r.solver && t.path == r.path).collect();
            dir.write_csv(&format!("traces/{}_path{:04}.csv", slug(&r.solver), r.path), &path_rows)?;
        }
    } else {
        dir.write_csv("traces.csv", &rows)?;
    }
    let failures: Vec<FailureRow> = results
        .iter()
        .filter_map(|r| {
            r.outcome.as_ref().err().map(|e| FailureRow { solver: r.solver.clone(), path: r.path, seed: r.seed, error: e.clone() })
        })
        .collect();
    if !failures.is_empty() {
        dir.write_csv("failures.csv", &failures)?;
    }
    let summary = summarize(&rows);
    dir.write_csv("summary.csv", &summary)?;

    let finals: Vec<FinalStats> = specs
        .iter()
        .filter_map(|s| {
            let label = s.label();
            let last: &SummaryRow = summary.iter().filter(|r| r.solver == label).max_by_key(|r| r.k)?;
            Some(FinalStats {
                solver: &last.solver,
                k: last.k,
                paths: last.paths,
                failed_paths: failures.iter().filter(|f| f.solver == label).count(),
                mean_dist_sq: last.mean_dist_sq,
                median_dist_sq: last.median_dist_sq,
                se_dist_sq: last.se_dist_sq,
            })
        })
        .collect();
    println!("{:<24} {:>6} {:>6} {:>12} {:>12} {:>12}", "solver", "k", "paths", "mean", "median", "se");
    for f in &finals {
        println!(
            "{:<24} {:>6} {:>6} {:>12.4e} {:>12.4e} {:>12.4e}",
            f.solver, f.k, f.paths, f.mean_dist_sq, f.median_dist_sq, f.se_dist_sq
        );
    }
    for f in &failures {
        eprintln!("{} path {} (seed {}) failed: {}", f.solver, f.path, f.seed, f.error);
    }
    dir.write_json("final.json", &finals)?;
    dir.finish(Status::from_ok(failures.is_empty()))
}
