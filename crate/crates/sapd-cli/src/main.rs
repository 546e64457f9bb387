//! Command-line front end for the sapd toolkit.
//!
//! Exit codes: 0 success, 1 infeasible request or failed run, 2 usage error.

mod analysis;
mod config;
mod dro_cmd;
mod experiment;
mod project;
mod rundir;
mod tune;

use std::fmt;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(name = "sapd", version, about = "Stochastic accelerated primal-dual methods with certified tuning")]
struct Cli {
    /// Worker threads for path- and grid-level parallelism.
    #[arg(long, global = true, env = "SAPD_THREADS")]
    threads: Option<usize>,
    /// More log output (-v info, -vv debug). RUST_LOG overrides.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Select parameters by a tuning rule and print the certificate.
    Tune(tune::TuneArgs),
    /// Check a parameter tuple against the rate certificate.
    Certify(tune::CertifyArgs),
    /// Smallest certifiable rate.
    RhoStar(tune::RhoStarArgs),
    /// One path per configured solver with full traces.
    Solve(experiment::ExperimentArgs),
    /// Many paths per configured solver with summary statistics.
    Bench(experiment::ExperimentArgs),
    /// Exact rate and robustness over a step-size grid.
    Scan(analysis::ScanArgs),
    /// Robustness-optimal parameters across target rates.
    Pareto(analysis::ParetoArgs),
    /// Euclidean projection with an optimality check.
    Project(project::ProjectArgs),
    /// Distributionally robust logistic regression.
    Dro(dro_cmd::DroArgs),
}

/// An error caused by the invocation rather than by the computation.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

/// How a command that ran to completion ended.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Status {
    Success,
    /// Infeasible certificate or failed paths.
    Failed,
}

impl Status {
    pub fn from_ok(ok: bool) -> Self {
        if ok {
            Status::Success
        } else {
            Status::Failed
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Status::Success => "success",
            Status::Failed => "failed",
        }
    }
}

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new().filter_level(level).parse_default_env().format_timestamp(None).init();
}

fn init_threads(threads: Option<usize>) -> anyhow::Result<()> {
    match threads {
        Some(0) => Err(usage("--threads must be at least 1")),
        Some(n) => {
            rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
            Ok(())
        }
        None => Ok(()),
    }
}

fn run(cli: Cli) -> anyhow::Result<Status> {
    init_threads(cli.threads)?;
    match cli.command {
        Command::Tune(a) => tune::cmd_tune(&a),
        Command::Certify(a) => tune::cmd_certify(&a),
        Command::RhoStar(a) => tune::cmd_rho_star(&a),
        Command::Solve(a) => experiment::cmd_solve(&a),
        Command::Bench(a) => experiment::cmd_bench(&a),
        Command::Scan(a) => analysis::cmd_scan(&a),
        Command::Pareto(a) => analysis::cmd_pareto(&a),
        Command::Project(a) => project::cmd_project(&a),
        Command::Dro(a) => dro_cmd::cmd_dro(&a),
    }
}

/// Usage errors and rejected arguments map to 2, everything else to 1.
fn exit_code(err: &anyhow::Error) -> u8 {
    let rejected = matches!(err.downcast_ref::<sapd::Error>(), Some(sapd::Error::InvalidArgument(_)));
    if err.downcast_ref::<UsageError>().is_some() || rejected {
        2
    } else {
        1
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    init_logging(cli.verbose);
    match run(cli) {
        Ok(Status::Success) => ExitCode::SUCCESS,
        Ok(Status::Failed) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
