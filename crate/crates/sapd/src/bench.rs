//! Multi-path benchmark harness: independent sample paths per solver,
//! long-format traces and per-iteration summary statistics.

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problem::SaddlePointProblem;
use crate::solvers::{run_baseline, run_sapd, run_sgda, BaselineKind, RunConfig, RunRecord, SapdParams, SapdRun, SmdSetup};

/// A solver with its parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum SolverSpec {
    Sapd { label: String, params: SapdParams },
    Sgda { label: String, tau: f64, sigma: f64 },
    Sogda,
    Smp,
    Smd { radius: f64, g_bound: f64 },
}

impl SolverSpec {
    pub fn label(&self) -> String {
        match self {
            SolverSpec::Sapd { label, .. } | SolverSpec::Sgda { label, .. } => label.clone(),
            SolverSpec::Sogda => BaselineKind::Sogda.name().into(),
            SolverSpec::Smp => BaselineKind::Smp.name().into(),
            SolverSpec::Smd { .. } => BaselineKind::Smd.name().into(),
        }
    }
}

/// One trace line of the long-format output.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub solver: String,
    pub path: usize,
    pub seed: u64,
    pub k: usize,
    pub dist_sq: f64,
}

/// Outcome of one path; failures are kept so a run can continue.
#[derive(Clone, Debug)]
pub struct PathResult {
    pub solver: String,
    pub path: usize,
    pub seed: u64,
    pub outcome: std::result::Result<Vec<TraceRow>, String>,
}

/// Run length, path count and seeding.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchConfig {
    pub iters: usize,
    pub paths: usize,
    pub base_seed: u64,
    pub record_every: usize,
}

impl BenchConfig {
    pub fn validate(self) -> Result<Self> {
        if self.iters == 0 {
            return Err(Error::InvalidArgument("iters must be at least 1".into()));
        }
        if self.paths == 0 {
            return Err(Error::InvalidArgument("paths must be at least 1".into()));
        }
        if self.record_every == 0 {
            return Err(Error::InvalidArgument("record_every must be at least 1".into()));
        }
        Ok(self)
    }

    /// Path i uses seed base_seed + i.
    pub fn seed(&self, path: usize) -> u64 {
        self.base_seed.wrapping_add(path as u64)
    }
}

/// Runs one path of `solver`.
pub fn run_solver<P: SaddlePointProblem + ?Sized>(
    problem: &P,
    solver: &SolverSpec,
    x0: &[f64],
    y0: &[f64],
    cfg: &RunConfig,
    reference: Option<(&[f64], &[f64])>,
) -> Result<SapdRun> {
    match solver {
        SolverSpec::Sapd { params, .. } => run_sapd(problem, params, x0, y0, cfg, reference),
        SolverSpec::Sgda { tau, sigma, .. } => run_sgda(problem, *tau, *sigma, x0, y0, cfg, reference),
        SolverSpec::Sogda => run_baseline(BaselineKind::Sogda, problem, x0, y0, cfg, None, reference),
        SolverSpec::Smp => run_baseline(BaselineKind::Smp, problem, x0, y0, cfg, None, reference),
        SolverSpec::Smd { radius, g_bound } => {
            let smd = SmdSetup { radius: *radius, g_bound: *g_bound };
            run_baseline(BaselineKind::Smd, problem, x0, y0, cfg, Some(smd), reference)
        }
    }
}

fn finite_trace(run: SapdRun) -> Result<Vec<RunRecord>> {
    if let Some(bad) = run.trace.iter().find(|r| !r.dist_sq.is_finite()) {
        return Err(Error::NonFinite(if bad.k == 0 { "initial distance" } else { "iterate distance" }));
    }
    Ok(run.trace)
}

/// Runs every solver on `bench.paths` independent paths in parallel.
pub fn run_bench<P: SaddlePointProblem + ?Sized>(
    problem: &P,
    solvers: &[SolverSpec],
    x0: &[f64],
    y0: &[f64],
    reference: (&[f64], &[f64]),
    bench: &BenchConfig,
) -> Result<Vec<PathResult>> {
    let bench = bench.validate()?;
    let jobs: Vec<(usize, usize)> = (0..solvers.len()).flat_map(|s| (0..bench.paths).map(move |p| (s, p))).collect();
    Ok(jobs
        .into_par_iter()
        .map(|(s, path)| {
            let solver = &solvers[s];
            let seed = bench.seed(path);
            let mut cfg = RunConfig::new(bench.iters, seed);
            cfg.record_every = bench.record_every;
            let label = solver.label();
            let outcome = run_solver(problem, solver, x0, y0, &cfg, Some(reference))
                .and_then(finite_trace)
                .map(|trace| {
                    trace
                        .into_iter()
                        .map(|r| TraceRow { solver: label.clone(), path, seed, k: r.k, dist_sq: r.dist_sq })
                        .collect()
                })
                .map_err(|e| e.to_string());
            if let Err(e) = &outcome {
                log::warn!("{label} path {path} failed: {e}");
            }
            PathResult { solver: label, path, seed, outcome }
        })
        .collect())
}

/// Per-solver, per-iteration statistics across successful paths.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub solver: String,
    pub k: usize,
    pub paths: usize,
    pub mean_dist_sq: f64,
    pub median_dist_sq: f64,
    /// Standard error of the mean.
    pub se_dist_sq: f64,
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Summarizes trace rows grouped by (solver, k), in first-seen solver order.
pub fn summarize(rows: &[TraceRow]) -> Vec<SummaryRow> {
    let mut order: Vec<String> = Vec::new();
    let mut groups: std::collections::BTreeMap<(usize, usize), Vec<f64>> = Default::default();
    for r in rows {
        let s = match order.iter().position(|o| *o == r.solver) {
            Some(s) => s,
            None => {
                order.push(r.solver.clone());
                order.len() - 1
            }
        };
        groups.entry((s, r.k)).or_default().push(r.dist_sq);
    }
    groups
        .into_iter()
        .map(|((s, k), mut vals)| {
            let n = vals.len();
            let mean = vals.iter().sum::<f64>() / n as f64;
            let var = if n > 1 { vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64 } else { 0.0 };
            SummaryRow {
                solver: order[s].clone(),
                k,
                paths: n,
                mean_dist_sq: mean,
                median_dist_sq: median(&mut vals),
                se_dist_sq: (var / n as f64).sqrt(),
            }
        })
        .collect()
}

/// Successful rows of all paths.
pub fn collect_rows(results: &[PathResult]) -> Vec<TraceRow> {
    results.iter().filter_map(|r| r.outcome.as_ref().ok()).flatten().cloned().collect()
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes rows to any writer as CSV with a header line.
pub fn write_csv_to<T: Serialize, W: Write>(out: W, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_even_and_odd() {
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&mut [4.0, 1.0, 2.0, 3.0]), 2.5);
    }

    #[test]
    fn summary_groups_by_solver_and_k() {
        let row = |s: &str, p, k, v| TraceRow { solver: s.into(), path: p, seed: p as u64, k, dist_sq: v };
        let rows = vec![row("a", 0, 0, 1.0), row("a", 1, 0, 3.0), row("b", 0, 0, 5.0), row("a", 0, 1, 2.0)];
        let s = summarize(&rows);
        assert_eq!(s.len(), 3);
        assert_eq!(s[0].solver, "a");
        assert_eq!(s[0].mean_dist_sq, 2.0);
        assert_eq!(s[0].paths, 2);
        assert_eq!(s[2].solver, "b");
    }
}
