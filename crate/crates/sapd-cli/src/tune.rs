//! `tune`, `certify` and `rho-star`: JSON certificates on stdout.

use anyhow::Result;
use clap::{Args, ValueEnum};
use serde::Serialize;

use sapd::tuning::{
    check_general, cp_params, cp_theta_interval, epsilon_params_mc, epsilon_params_scsc, rho_star, scsc_explicit_params,
    sgda_certificate, sgda_explicit_params, sgda_rho_star, Certificate, CertificateSource, CertifiedParams,
};
use sapd::{NoiseProfile, SapdParams, SmoothnessProfile};

use crate::config::load_profile;
use crate::{usage, Status};

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum TuneMode {
    /// Explicit strongly convex–strongly concave rule.
    Scsc,
    /// Noise-aware rule for a target accuracy.
    EpsScsc,
    /// Merely convex–concave rule (θ = 1).
    Mc,
    /// Explicit SGDA rule.
    Sgda,
    /// Chambolle–Pock family at a given momentum.
    Cp,
    /// Smallest certifiable rate.
    RhoStar,
}

#[derive(Args, Debug)]
pub struct TuneArgs {
    /// Smoothness profile: inline JSON or a JSON file.
    #[arg(long)]
    profile: String,
    #[arg(long, value_enum, default_value_t = TuneMode::Scsc)]
    mode: TuneMode,
    /// Coupling split β (scsc, eps-scsc) or β₁ (sgda).
    #[arg(long)]
    beta: Option<f64>,
    /// β₂ of the SGDA rule.
    #[arg(long, default_value_t = 0.25)]
    beta2: f64,
    /// Target accuracy (eps-scsc, mc).
    #[arg(long)]
    eps: Option<f64>,
    /// Oracle noise standard deviation, same in x and y.
    #[arg(long, default_value_t = 0.0)]
    delta: f64,
    /// Momentum of the Chambolle–Pock family (default: lower end of its interval).
    #[arg(long)]
    theta: Option<f64>,
    /// Bisection width for rho-star.
    #[arg(long, default_value_t = 1e-4)]
    tol: f64,
}

#[derive(Args, Debug)]
pub struct CertifyArgs {
    /// Smoothness profile: inline JSON or a JSON file.
    #[arg(long)]
    profile: String,
    #[arg(long)]
    tau: f64,
    #[arg(long)]
    sigma: f64,
    #[arg(long)]
    theta: f64,
    #[arg(long)]
    rho: f64,
    /// Certificate multiplier; searched over [0, 1/σ] when absent.
    #[arg(long)]
    alpha: Option<f64>,
    /// Use the SGDA certificate (θ must be 0).
    #[arg(long)]
    sgda: bool,
}

#[derive(Args, Debug)]
pub struct RhoStarArgs {
    /// Smoothness profile: inline JSON or a JSON file.
    #[arg(long)]
    profile: String,
    #[arg(long, default_value_t = 1e-4)]
    tol: f64,
    /// Best SGDA rate instead of SAPD.
    #[arg(long)]
    sgda: bool,
}

#[derive(Serialize)]
struct CertificateOut {
    tau: f64,
    sigma: f64,
    theta: f64,
    rho: f64,
    alpha: f64,
    psd_margin: f64,
    feasible: bool,
    source: CertificateSource,
}

impl CertificateOut {
    fn new(params: &SapdParams, c: &Certificate) -> Self {
        Self {
            tau: params.tau,
            sigma: params.sigma,
            theta: params.theta,
            rho: c.rho,
            alpha: c.alpha,
            psd_margin: c.psd_margin,
            feasible: c.feasible,
            source: c.source,
        }
    }
}

fn emit(params: &SapdParams, c: &Certificate) -> Result<Status> {
    println!("{}", serde_json::to_string_pretty(&CertificateOut::new(params, c))?);
    if !c.feasible {
        eprintln!("infeasible: PSD margin {:.3e} (tolerance {:.1e})", c.psd_margin, c.tolerance);
    }
    Ok(Status::from_ok(c.feasible))
}

/// Certificate with the largest PSD margin over α = c/σ, c on a uniform grid.
pub fn best_alpha(p: &SmoothnessProfile, params: &SapdParams, rho: f64) -> Result<Certificate> {
    let mut best: Option<Certificate> = None;
    for i in 0..=200 {
        let alpha = i as f64 / 200.0 / params.sigma;
        let c = check_general(p, params, rho, alpha)?;
        if best.is_none_or(|b| (c.feasible, c.psd_margin) > (b.feasible, b.psd_margin)) {
            best = Some(c);
        }
    }
    Ok(best.expect("non-empty grid"))
}

fn need_eps(eps: Option<f64>, mode: &str) -> Result<f64> {
    eps.ok_or_else(|| usage(format!("--mode {mode} needs --eps")))
}

pub fn cmd_tune(a: &TuneArgs) -> Result<Status> {
    let p = load_profile(&a.profile)?;
    let noise = NoiseProfile::isotropic(a.delta).validate().map_err(|e| usage(e.to_string()))?;
    let c: CertifiedParams = match a.mode {
        TuneMode::Scsc => scsc_explicit_params(&p, a.beta)?,
        TuneMode::EpsScsc => epsilon_params_scsc(&p, &noise, need_eps(a.eps, "eps-scsc")?, a.beta)?,
        TuneMode::Mc => epsilon_params_mc(&p, &noise, need_eps(a.eps, "mc")?)?,
        TuneMode::Sgda => sgda_explicit_params(&p, a.beta.unwrap_or(0.25), a.beta2)?,
        TuneMode::Cp => {
            let theta = match a.theta {
                Some(t) => t,
                None => cp_theta_interval(&p)?.0,
            };
            let params = cp_params(&p, theta)?;
            let mut cert = best_alpha(&p, &params, theta)?;
            cert.source = CertificateSource::Explicit;
            CertifiedParams { params, certificate: cert }
        }
        TuneMode::RhoStar => {
            let s = rho_star(&p, a.tol)?;
            let mut cert = check_general(&p, &s.witness.params(), s.rho, s.witness.alpha)?;
            cert.source = CertificateSource::Bisection;
            CertifiedParams { params: s.witness.params(), certificate: cert }
        }
    };
    emit(&c.params, &c.certificate)
}

pub fn cmd_certify(a: &CertifyArgs) -> Result<Status> {
    let p = load_profile(&a.profile)?;
    let params = SapdParams::new(a.tau, a.sigma, a.theta).validate().map_err(|e| usage(e.to_string()))?;
    let cert = if a.sgda {
        if a.theta != 0.0 {
            return Err(usage("--sgda needs --theta 0"));
        }
        sgda_certificate(&p, a.tau, a.sigma, a.rho)?
    } else {
        match a.alpha {
            Some(alpha) => check_general(&p, &params, a.rho, alpha)?,
            None => best_alpha(&p, &params, a.rho)?,
        }
    };
    emit(&params, &cert)
}

pub fn cmd_rho_star(a: &RhoStarArgs) -> Result<Status> {
    let p = load_profile(&a.profile)?;
    if a.sgda {
        let c = sgda_rho_star(&p, a.tol)?;
        return emit(&c.params, &c.certificate);
    }
    let s = rho_star(&p, a.tol)?;
    let mut cert = check_general(&p, &s.witness.params(), s.rho, s.witness.alpha)?;
    cert.source = CertificateSource::Bisection;
    emit(&s.witness.params(), &cert)
}
