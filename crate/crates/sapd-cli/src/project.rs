//! `project`: Euclidean projections read from JSON, with a KKT check.

use std::io::Read;
use std::path::PathBuf;

use anyhow::Result;
use clap::Args;
use serde::{Deserialize, Serialize};

use sapd::numerics::{dist_sq, norm_sq};
use sapd::projection::{
    ball_kkt_residual, kkt_residual, project_ball, project_simplex, project_simplex_ball, qp_projection_oracle, SimplexBallSpec,
};

use crate::config::parse_json;
use crate::rundir::RunDir;
use crate::{usage, Status};

#[derive(Args, Debug)]
pub struct ProjectArgs {
    /// JSON request file, or `-` for stdin.
    #[arg(long, default_value = "-")]
    input: String,
    /// Also write the request and result to this run directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum TargetSet {
    Simplex,
    /// Simplex cut by a ball of this radius around the uniform vector.
    SimplexBall { radius: f64 },
    Ball {
        radius: f64,
        #[serde(default)]
        center: Option<Vec<f64>>,
    },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProjectRequest {
    pub v: Vec<f64>,
    pub set: TargetSet,
}

#[derive(Serialize)]
struct ProjectResult {
    p: Vec<f64>,
    norm_sq: f64,
    kkt_residual: f64,
    /// Distance to the independent QP solution (simplex-ball only).
    oracle_distance: Option<f64>,
}

fn solve(req: &ProjectRequest) -> Result<ProjectResult> {
    if req.v.is_empty() || req.v.iter().any(|x| !x.is_finite()) {
        return Err(usage("v must be a non-empty vector of finite numbers"));
    }
    let (p, kkt, oracle) = match &req.set {
        TargetSet::Simplex => {
            let p = project_simplex(&req.v);
            let r = kkt_residual(&req.v, &p, None)?;
            (p, r, None)
        }
        TargetSet::SimplexBall { radius } => {
            let spec = SimplexBallSpec::new(req.v.len(), *radius)?;
            let p = project_simplex_ball(&req.v, &spec)?;
            let r = kkt_residual(&req.v, &p, Some(&spec))?;
            let o = dist_sq(&p, &qp_projection_oracle(&req.v, &spec)).sqrt();
            (p, r, Some(o))
        }
        TargetSet::Ball { radius, center } => {
            if center.as_ref().is_some_and(|c| c.len() != req.v.len()) {
                return Err(usage("center and v have different lengths"));
            }
            let p = project_ball(&req.v, center.as_deref(), *radius)?;
            let r = ball_kkt_residual(&req.v, &p, center.as_deref(), *radius)?;
            (p, r, None)
        }
    };
    Ok(ProjectResult { norm_sq: norm_sq(&p), p, kkt_residual: kkt, oracle_distance: oracle })
}

pub fn cmd_project(a: &ProjectArgs) -> Result<Status> {
    let text = if a.input == "-" {
        let mut s = String::new();
        std::io::stdin().read_to_string(&mut s)?;
        s
    } else {
        std::fs::read_to_string(&a.input).map_err(|e| usage(format!("cannot read {}: {e}", a.input)))?
    };
    let req: ProjectRequest = parse_json(&text).map_err(|e| usage(format!("projection request: {e}")))?;
    let res = solve(&req)?;
    println!("{}", serde_json::to_string_pretty(&res)?);
    match &a.out {
        Some(out) => {
            let mut dir = RunDir::create(Some(out), "project", &req)?;
            dir.write_json("result.json", &res)?;
            dir.finish(Status::Success)
        }
        None => Ok(Status::Success),
    }
}
