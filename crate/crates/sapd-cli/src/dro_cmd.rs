//! `dro`: SAPD on distributionally robust logistic regression with
//! per-path traces of distance, training error and test error.

use std::path::PathBuf;

use anyhow::Result;
use clap::{Args, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;

use sapd::bench::{summarize, TraceRow};
use sapd::dro::{dro_gap, test_error, DataFormat, DroDataset, DroProblem, Normalization};
use sapd::numerics::dist_sq;
use sapd::problem::path_rng;
use sapd::solvers::{sapd_step, ErgodicAverage, IterateState};
use sapd::tuning::Certificate;
use sapd::{NoiseProfile, SaddlePointProblem, SapdParams};

use crate::config::{dro_reference, resolve_sapd, DroSpec, SapdTuning, SyntheticSpec};
use crate::rundir::RunDir;
use crate::{usage, Status};

#[derive(Clone, Copy, Debug, ValueEnum)]
enum FormatArg {
    Csv,
    Libsvm,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum NormArg {
    ColumnMinmax,
    GlobalScale,
    None,
}

#[derive(Args, Debug)]
pub struct DroArgs {
    /// Data file (CSV with the label last, or libsvm).
    #[arg(long, conflicts_with = "synthetic", required_unless_present = "synthetic")]
    data: Option<PathBuf>,
    /// Synthetic Gaussian data instead of a file: n,d,flip,seed.
    #[arg(long)]
    synthetic: Option<SyntheticSpec>,
    #[arg(long, value_enum, default_value = "csv")]
    format: FormatArg,
    #[arg(long, value_enum, default_value = "column-minmax")]
    norm: NormArg,
    /// Label mapped to +1 for multiclass data; all others become −1.
    #[arg(long)]
    positive_class: Option<String>,
    /// Primal regularization μx.
    #[arg(long)]
    mu_x: f64,
    /// Smoothing accuracy; μy = ε/2.
    #[arg(long, default_value_t = 1.0)]
    eps: f64,
    /// Uncertainty radius (default 2√n).
    #[arg(long)]
    r: Option<f64>,
    /// Squared radius of the model ball (default 100·d).
    #[arg(long)]
    d_x: Option<f64>,
    #[arg(long, default_value_t = 1)]
    batch: usize,
    /// Held-out fraction for the test error; 0 disables it.
    #[arg(long, default_value_t = 0.2)]
    holdout: f64,
    #[arg(long, default_value_t = 0)]
    split_seed: u64,
    #[arg(long, default_value_t = 10_000)]
    iters: usize,
    #[arg(long, default_value_t = 10)]
    paths: usize,
    /// Base seed; path i uses seed + i.
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 100)]
    record_every: usize,
    /// Target rate of the robustness-optimal tuner (default: explicit rule).
    #[arg(long)]
    rho: Option<f64>,
    /// Run directory (default runs/dro-<unix ms>).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Serialize)]
struct DroRun {
    problem: DroSpec,
    tuning: SapdTuning,
    iters: usize,
    paths: usize,
    base_seed: u64,
    record_every: usize,
}

impl DroArgs {
    fn run_config(&self) -> Result<DroRun> {
        if self.iters == 0 || self.paths == 0 || self.record_every == 0 {
            return Err(usage("--iters, --paths and --record-every must be at least 1"));
        }
        let problem = DroSpec {
            data: self.data.clone(),
            synthetic: self.synthetic,
            format: match self.format {
                FormatArg::Csv => DataFormat::Csv,
                FormatArg::Libsvm => DataFormat::Libsvm,
            },
            normalization: match self.norm {
                NormArg::ColumnMinmax => Normalization::ColumnMinmax,
                NormArg::GlobalScale => Normalization::GlobalScale,
                NormArg::None => Normalization::None,
            },
            positive_class: self.positive_class.clone(),
            mu_x: self.mu_x,
            eps: self.eps,
            r: self.r,
            d_x: self.d_x,
            batch: self.batch,
            holdout: self.holdout,
            split_seed: self.split_seed,
        };
        problem.validate()?;
        let tuning = match self.rho {
            Some(rho) => SapdTuning::Pareto { rho, k_c: Some(20), k_theta: Some(40) },
            None => SapdTuning::Explicit { beta: None },
        };
        Ok(DroRun { problem, tuning, iters: self.iters, paths: self.paths, base_seed: self.seed, record_every: self.record_every })
    }
}

/// One line of a per-path trace.
#[derive(Clone, Debug, Serialize)]
struct DroRow {
    k: usize,
    dist_sq: f64,
    train_err: f64,
    test_err: Option<f64>,
}

#[derive(Serialize)]
struct PathFinal {
    path: usize,
    seed: u64,
    dist_sq: f64,
    train_err: f64,
    test_err: Option<f64>,
    average_gap: Option<f64>,
}

#[derive(Serialize)]
struct DroFinal<'a> {
    n_train: usize,
    n_holdout: usize,
    d: usize,
    params: SapdParams,
    certificate: Option<Certificate>,
    estimated_noise: NoiseProfile,
    reference_gap: f64,
    paths: &'a [PathFinal],
    failed_paths: Vec<usize>,
}

struct Ctx<'a> {
    problem: &'a DroProblem,
    train: &'a DroDataset,
    holdout: Option<&'a DroDataset>,
    params: SapdParams,
    weighting_rho: f64,
    x_ref: &'a [f64],
    y_ref: &'a [f64],
}

fn run_path(ctx: &Ctx, run: &DroRun, path: usize) -> Result<(Vec<DroRow>, PathFinal)> {
    let seed = run.base_seed.wrapping_add(path as u64);
    let (d, n) = ctx.problem.dims();
    let mut st = IterateState::new(vec![0.0; d], ctx.problem.uniform_y());
    let mut avg = ErgodicAverage::new(ctx.weighting_rho, d, n)?;
    let mut rng = path_rng(seed);
    let row = |k: usize, st: &IterateState| -> Result<DroRow> {
        Ok(DroRow {
            k,
            dist_sq: dist_sq(&st.x, ctx.x_ref) + dist_sq(&st.y, ctx.y_ref),
            train_err: test_error(&st.x, ctx.train)?,
            test_err: ctx.holdout.map(|h| test_error(&st.x, h)).transpose()?,
        })
    };
    let mut rows = vec![row(0, &st)?];
    for k in 1..=run.iters {
        sapd_step(&mut st, &ctx.params, ctx.problem, &mut rng);
        avg.push(&st.x, &st.y);
        if k % run.record_every == 0 || k == run.iters {
            let r = row(k, &st)?;
            if !r.dist_sq.is_finite() {
                anyhow::bail!("non-finite iterate at k = {k}");
            }
            rows.push(r);
        }
    }
    let last = rows.last().expect("at least the initial row").clone();
    let average_gap = dro_gap(ctx.problem, avg.x(), avg.y(), 1e-9, 200_000).ok();
    let fin = PathFinal { path, seed, dist_sq: last.dist_sq, train_err: last.train_err, test_err: last.test_err, average_gap };
    Ok((rows, fin))
}

pub fn cmd_dro(a: &DroArgs) -> Result<Status> {
    let run = a.run_config()?;
    let mut dir = RunDir::create(a.out.as_deref(), "dro", &run)?;
    let setup = run.problem.load(run.base_seed)?;
    let problem = &setup.problem;
    let (d, n) = problem.dims();
    log::info!("training rows {n}, features {d}, estimated noise {:?}", problem.noise());
    let (x_ref, y_ref) = dro_reference(problem)?;
    let reference_gap = dro_gap(problem, &x_ref, &y_ref, 1e-10, 200_000)?;
    let (params, certificate, label) = resolve_sapd(&run.tuning, problem.profile(), problem.noise())?;
    let weighting_rho = certificate.map_or(1.0, |c| c.rho);
    let ctx = Ctx {
        problem,
        train: &setup.train,
        holdout: setup.holdout.as_ref(),
        params,
        weighting_rho,
        x_ref: &x_ref,
        y_ref: &y_ref,
    };
    let results: Vec<(usize, Result<(Vec<DroRow>, PathFinal)>)> =
        (0..run.paths).into_par_iter().map(|p| (p, run_path(&ctx, &run, p))).collect();

    let mut finals = Vec::new();
    let mut failed = Vec::new();
    let mut long = Vec::new();
    for (path, r) in results {
        match r {
            Ok((rows, fin)) => {
                long.extend(rows.iter().map(|r| TraceRow { solver: label.clone(), path, seed: fin.seed, k: r.k, dist_sq: r.dist_sq }));
                dir.write_csv(&format!("traces/path_{path:04}.csv"), &rows)?;
                finals.push(fin);
            }
            Err(e) => {
                eprintln!("path {path} failed: {e:#}");
                failed.push(path);
            }
        }
    }
    dir.write_csv("summary.csv", &summarize(&long))?;
    let out = DroFinal {
        n_train: n,
        n_holdout: setup.holdout.as_ref().map_or(0, DroDataset::n),
        d,
        params,
        certificate,
        estimated_noise: problem.noise(),
        reference_gap,
        paths: &finals,
        failed_paths: failed.clone(),
    };
    dir.write_json("final.json", &out)?;

    let mean = |f: &dyn Fn(&PathFinal) -> Option<f64>| {
        let v: Vec<f64> = finals.iter().filter_map(f).collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    };
    let show = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |v| format!("{v:.4e}"));
    println!("parameters: tau {:.4e}, sigma {:.4e}, theta {:.6}", params.tau, params.sigma, params.theta);
    if let Some(c) = certificate {
        println!("certified rate {:.6} (feasible: {})", c.rho, c.feasible);
    }
    println!("reference gap {reference_gap:.2e}");
    println!(
        "mean over {} paths: dist_sq {}, train error {}, test error {}, gap at average {}",
        finals.len(),
        show(mean(&|f| Some(f.dist_sq))),
        show(mean(&|f| Some(f.train_err))),
        show(mean(&|f| f.test_err)),
        show(mean(&|f| f.average_gap)),
    );
    dir.finish(Status::from_ok(failed.is_empty()))
}
