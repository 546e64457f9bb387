//! `scan` and `pareto`: exact robustness over step-size grids and the
//! robustness-optimal frontier.

use std::path::PathBuf;

use anyhow::Result;
use clap::Args;
use rayon::prelude::*;
use serde::Serialize;

use sapd::robustness::{grid_scan, pareto_point, ParetoConfig, ScanConfig};
use sapd::tuning::rho_star;
use sapd::{NoiseProfile, QuadraticBilinearProblem, QuadraticSpec, SaddlePointProblem, SmoothnessProfile};

use crate::config::load_profile;
use crate::rundir::RunDir;
use crate::{usage, Status};

/// Random quadratic instance; defaults give the benchmark problem.
#[derive(Args, Debug, Clone)]
pub struct QuadArgs {
    #[arg(long, default_value_t = 30)]
    dim: usize,
    #[arg(long, default_value_t = 10.0)]
    spectral_norm: f64,
    #[arg(long, default_value_t = 1.0)]
    mu_x: f64,
    #[arg(long, default_value_t = 1.0)]
    mu_y: f64,
    /// Seed of the coupling matrix.
    #[arg(long, default_value_t = 1)]
    instance_seed: u64,
}

impl QuadArgs {
    fn spec(&self) -> QuadraticSpec {
        QuadraticSpec { d: self.dim, spectral_norm: self.spectral_norm, mu_x: self.mu_x, mu_y: self.mu_y, delta: 1.0, seed: self.instance_seed }
    }

    fn build(&self) -> Result<QuadraticBilinearProblem> {
        QuadraticBilinearProblem::from_spec(&self.spec()).map_err(|e| usage(format!("quadratic instance: {e}")))
    }
}

#[derive(Args, Debug)]
pub struct ScanArgs {
    #[command(flatten)]
    quad: QuadArgs,
    #[arg(long, default_value_t = 0.5)]
    tau_max: f64,
    #[arg(long, default_value_t = 0.5)]
    sigma_max: f64,
    #[arg(long, default_value_t = 2.0)]
    theta_max: f64,
    /// Grid points along τ, σ and θ.
    #[arg(long, num_args = 3, value_names = ["N_TAU", "N_SIGMA", "N_THETA"], default_values_t = [60, 60, 60])]
    counts: Vec<usize>,
    /// Restrict to θ = 0 (plain gradient descent-ascent).
    #[arg(long)]
    theta_zero: bool,
    /// Number of rate bins of the envelope.
    #[arg(long, default_value_t = 200)]
    bins: usize,
    /// Run directory (default runs/scan-<unix ms>).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Serialize)]
struct ScanRun {
    instance: QuadraticSpec,
    grid: ScanConfig,
}

#[derive(Serialize)]
struct ScanSummary {
    points: usize,
    unstable: usize,
    min_rho_true: Option<f64>,
    argmin: Option<sapd::robustness::ScanPoint>,
}

pub fn cmd_scan(a: &ScanArgs) -> Result<Status> {
    let mut grid = ScanConfig {
        tau_range: (0.0, a.tau_max),
        sigma_range: (0.0, a.sigma_max),
        theta_range: (0.0, a.theta_max),
        counts: (a.counts[0], a.counts[1], a.counts[2]),
        bins: a.bins,
    };
    if a.theta_zero {
        grid.theta_range = (0.0, 0.0);
        grid.counts.2 = 1;
    }
    let q = a.quad.build()?;
    let mut dir = RunDir::create(a.out.as_deref(), "scan", &ScanRun { instance: a.quad.spec(), grid })?;
    let scan = grid_scan(&q, &grid)?;
    dir.write_csv("points.csv", &scan.points)?;
    let env: Vec<_> = scan.envelope.iter().filter(|b| b.j_min.is_finite()).copied().collect();
    dir.write_csv("envelope.csv", &env)?;
    dir.write_csv("levels.csv", &scan.levels)?;
    let argmin = scan.points.iter().min_by(|x, y| x.rho_true.total_cmp(&y.rho_true)).copied();
    let summary = ScanSummary { points: scan.points.len(), unstable: scan.unstable, min_rho_true: scan.min_rho_true(), argmin };
    println!("{}", serde_json::to_string_pretty(&summary)?);
    dir.write_json("summary.json", &summary)?;
    dir.finish(Status::from_ok(summary.min_rho_true.is_some()))
}

#[derive(Args, Debug)]
pub struct ParetoArgs {
    #[command(flatten)]
    quad: QuadArgs,
    /// Custom constants instead of a quadratic instance (J is then not computed).
    #[arg(long)]
    profile: Option<String>,
    /// Target rates; overrides the range.
    #[arg(long, value_delimiter = ',')]
    rho: Vec<f64>,
    /// Lower end of the rate range (default: ρ* + 10⁻⁴).
    #[arg(long)]
    rho_min: Option<f64>,
    #[arg(long, default_value_t = 0.999)]
    rho_max: f64,
    #[arg(long, default_value_t = 20)]
    points: usize,
    #[arg(long, default_value_t = 50)]
    k_c: usize,
    #[arg(long, default_value_t = 100)]
    k_theta: usize,
    /// Noise standard deviation fed to the bound.
    #[arg(long, default_value_t = 1.0)]
    delta: f64,
    /// Run directory (default runs/pareto-<unix ms>).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Serialize)]
struct ParetoRun {
    instance: Option<QuadraticSpec>,
    profile: SmoothnessProfile,
    rhos: Vec<f64>,
    k_c: usize,
    k_theta: usize,
    delta: f64,
}

/// One row of `pareto.csv`.
#[derive(Serialize)]
struct ParetoRow {
    rho: f64,
    tau: f64,
    sigma: f64,
    theta: f64,
    c: f64,
    r_bar: f64,
    j: Option<f64>,
    rho_true: Option<f64>,
}

#[derive(Serialize)]
struct ParetoFailure {
    rho: f64,
    error: String,
}

pub fn cmd_pareto(a: &ParetoArgs) -> Result<Status> {
    let (quad, profile) = match &a.profile {
        Some(p) => (None, load_profile(p)?),
        None => {
            let q = a.quad.build()?;
            let p = *q.profile();
            (Some(q), p)
        }
    };
    if a.points == 0 || a.k_c == 0 || a.k_theta == 0 {
        return Err(usage("--points, --k-c and --k-theta must be positive"));
    }
    let rhos = if !a.rho.is_empty() {
        a.rho.clone()
    } else {
        let lo = match a.rho_min {
            Some(v) => v,
            None => rho_star(&profile, 1e-5)?.rho + 1e-4,
        };
        if !(lo < a.rho_max && a.rho_max < 1.0) {
            return Err(usage(format!("empty rate range [{lo}, {}]", a.rho_max)));
        }
        let n = a.points;
        (0..n).map(|i| if n == 1 { lo } else { lo + (a.rho_max - lo) * i as f64 / (n - 1) as f64 }).collect()
    };
    let run = ParetoRun {
        instance: quad.as_ref().map(|_| a.quad.spec()),
        profile,
        rhos: rhos.clone(),
        k_c: a.k_c,
        k_theta: a.k_theta,
        delta: a.delta,
    };
    let mut dir = RunDir::create(a.out.as_deref(), "pareto", &run)?;
    let noise = NoiseProfile::isotropic(a.delta);
    let cfg = ParetoConfig { k_c: a.k_c, k_theta: a.k_theta };
    let results: Vec<_> = rhos.par_iter().map(|&rho| (rho, pareto_point(&profile, rho, &noise, &cfg, quad.as_ref()))).collect();
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for (rho, r) in results {
        match r {
            Ok(p) => rows.push(ParetoRow {
                rho: p.rho,
                tau: p.tau,
                sigma: p.sigma,
                theta: p.theta,
                c: p.c,
                r_bar: p.r_bar,
                j: p.j,
                rho_true: p.rho_true,
            }),
            Err(e) => {
                log::warn!("rho = {rho}: {e}");
                failures.push(ParetoFailure { rho, error: e.to_string() });
            }
        }
    }
    dir.write_csv("pareto.csv", &rows)?;
    if !failures.is_empty() {
        dir.write_csv("failures.csv", &failures)?;
    }
    println!("{:>10} {:>10} {:>10} {:>8} {:>12} {:>12}", "rho", "tau", "sigma", "theta", "r_bar", "j");
    for r in &rows {
        let j = r.j.map_or_else(|| "-".into(), |v| format!("{v:.4e}"));
        println!("{:>10.6} {:>10.4e} {:>10.4e} {:>8.5} {:>12.4e} {:>12}", r.rho, r.tau, r.sigma, r.theta, r.r_bar, j);
    }
    dir.finish(Status::from_ok(failures.is_empty()))
}
