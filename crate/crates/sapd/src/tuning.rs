//! Parameter certification and selection.
//!
//! A tuple (τ, σ, θ) is certified at rate ρ by a scalar α when the 5×5
//! matrix returned by [`assemble_g`] is positive semidefinite. This module
//! assembles and checks that matrix, produces the explicit parameter rules
//! (strongly convex, noise-aware, merely convex, SGDA, Chambolle–Pock) and
//! searches for the best certifiable rate.
//!
//! The feasibility search works in the variables t = 1/τ, s = 1/σ, in which
//! the matrix is affine. Its smallest eigenvalue is therefore concave, and
//! nested golden-section searches locate its maximum over a box without
//! multi-start heuristics.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{psd_margin, psd_tolerance, SymMatrix};
use crate::problem::{NoiseProfile, SmoothnessProfile};
use crate::solvers::SapdParams;

/// Bisection width for β*.
pub const BETA_TOL: f64 = 1e-10;
/// Default bisection width for ρ*.
pub const RHO_TOL: f64 = 1e-3;
/// Golden-section iterations per nesting level.
const GOLDEN_ITERS: usize = 48;
const INV_PHI: f64 = 0.618_033_988_749_894_8;

/// Where a certificate came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CertificateSource {
    Explicit,
    Bisection,
    Search,
    User,
}

/// Rate certificate for a parameter tuple.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub rho: f64,
    pub alpha: f64,
    pub psd_margin: f64,
    pub tolerance: f64,
    pub feasible: bool,
    pub source: CertificateSource,
}

/// Parameters together with the certificate that validates them.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CertifiedParams {
    pub params: SapdParams,
    pub certificate: Certificate,
}

/// A point of the set P_ρ in the variables t = 1/τ, s = 1/σ.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeasiblePoint {
    pub t: f64,
    pub s: f64,
    pub theta: f64,
    pub alpha: f64,
}

impl FeasiblePoint {
    pub fn params(&self) -> SapdParams {
        SapdParams::new(1.0 / self.t, 1.0 / self.s, self.theta)
    }
}

/// Matrix of the general certificate in the variables t = 1/τ, s = 1/σ.
pub fn g_rho(p: &SmoothnessProfile, t: f64, s: f64, theta: f64, alpha: f64, rho: f64) -> SymMatrix {
    let c = theta / rho;
    let mut g = SymMatrix::zeros(5);
    g.set(0, 0, (1.0 - 1.0 / rho) * t + p.mu_x);
    g.set(1, 1, (1.0 - 1.0 / rho) * s + p.mu_y);
    g.set(2, 2, t - p.l_xx);
    g.set(3, 3, s - alpha);
    g.set(4, 4, alpha / rho);
    g.set(1, 2, (c - 1.0) * p.l_yx);
    g.set(1, 3, (c - 1.0) * p.l_yy);
    g.set(2, 4, -c * p.l_yx);
    g.set(3, 4, -c * p.l_yy);
    g
}

/// The 5×5 certificate matrix for (τ, σ, θ) at rate ρ with scalar α.
pub fn assemble_g(p: &SmoothnessProfile, tau: f64, sigma: f64, theta: f64, rho: f64, alpha: f64) -> Result<SymMatrix> {
    if !(tau > 0.0) || !(sigma > 0.0) {
        return Err(Error::InvalidArgument("tau and sigma must be positive".into()));
    }
    check_rate(rho)?;
    if !(theta >= 0.0) || !(alpha >= 0.0) {
        return Err(Error::InvalidArgument("theta and alpha must be non-negative".into()));
    }
    Ok(g_rho(p, 1.0 / tau, 1.0 / sigma, theta, alpha, rho))
}

fn check_rate(rho: f64) -> Result<()> {
    if !(rho > 0.0 && rho <= 1.0) {
        return Err(Error::InvalidArgument(format!("rho must lie in (0, 1], got {rho}")));
    }
    Ok(())
}

/// Checks the general certificate for given (params, ρ, α).
pub fn check_general(p: &SmoothnessProfile, params: &SapdParams, rho: f64, alpha: f64) -> Result<Certificate> {
    let g = assemble_g(p, params.tau, params.sigma, params.theta, rho, alpha)?;
    let margin = psd_margin(&g)?;
    let tol = psd_tolerance(&g);
    let alpha_ok = alpha <= 1.0 / params.sigma * (1.0 + 1e-12);
    Ok(Certificate { rho, alpha, psd_margin: margin, tolerance: tol, feasible: margin >= -tol && alpha_ok, source: CertificateSource::User })
}

/// Checks the simplified system obtained for ρ = θ.
pub fn check_simple_system(p: &SmoothnessProfile, tau: f64, sigma: f64, theta: f64, alpha: f64) -> Result<Certificate> {
    if !(theta > 0.0 && theta <= 1.0) {
        return Err(Error::InvalidArgument(format!("simplified system needs theta in (0, 1], got {theta}")));
    }
    if !(tau > 0.0 && sigma > 0.0 && alpha >= 0.0) {
        return Err(Error::InvalidArgument("tau, sigma must be positive and alpha non-negative".into()));
    }
    let mut m = SymMatrix::zeros(3);
    m.set(0, 0, 1.0 / tau - p.l_xx);
    m.set(1, 1, 1.0 / sigma - alpha);
    m.set(2, 2, alpha / theta);
    m.set(0, 2, -p.l_yx);
    m.set(1, 2, -p.l_yy);
    let margin = psd_margin(&m)?;
    let tol = psd_tolerance(&m);
    let need = (1.0 - theta) / theta;
    let scalar = (tau * p.mu_x).min(sigma * p.mu_y);
    let scalar_ok = scalar >= need - 1e-12 * need.max(1.0);
    let alpha_ok = alpha <= 1.0 / sigma * (1.0 + 1e-12);
    Ok(Certificate {
        rho: theta,
        alpha,
        psd_margin: margin,
        tolerance: tol,
        feasible: margin >= -tol && scalar_ok && alpha_ok,
        source: CertificateSource::User,
    })
}

fn require_scsc(p: &SmoothnessProfile) -> Result<()> {
    if !(p.mu_x > 0.0 && p.mu_y > 0.0) {
        return Err(Error::InvalidArgument("this rule needs mu_x > 0 and mu_y > 0".into()));
    }
    Ok(())
}

/// θ̄₁(β), decreasing in β.
pub fn theta_bar_1(p: &SmoothnessProfile, beta: f64) -> f64 {
    let a_times_c = 2.0 * p.mu_x / (p.l_xx + p.mu_x);
    let c = 4.0 * p.mu_x * p.l_yx * p.l_yx / (beta * p.mu_y * (p.l_xx + p.mu_x).powi(2));
    1.0 - a_times_c / ((1.0 + c).sqrt() + 1.0)
}

/// θ̄₂(β), increasing in β; zero when L_yy = 0.
pub fn theta_bar_2(p: &SmoothnessProfile, beta: f64) -> f64 {
    if p.l_yy == 0.0 {
        return 0.0;
    }
    let om = 1.0 - beta;
    let c = 16.0 * p.l_yy * p.l_yy / (om * om * p.mu_y * p.mu_y);
    // a·c = 2 for this pair; the stable form avoids cancellation for small c.
    1.0 - 2.0 / ((1.0 + c).sqrt() + 1.0)
}

/// β* together with a flag set when L_yy = 0 forced β* = 1.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BetaChoice {
    pub beta: f64,
    pub forced: bool,
}

/// Root of θ̄₁(β) = θ̄₂(β) on (0, 1).
pub fn optimal_beta(p: &SmoothnessProfile) -> Result<BetaChoice> {
    require_scsc(p)?;
    if p.l_yy == 0.0 {
        return Ok(BetaChoice { beta: 1.0, forced: true });
    }
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    while hi - lo > BETA_TOL {
        let mid = 0.5 * (lo + hi);
        if theta_bar_1(p, mid) > theta_bar_2(p, mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(BetaChoice { beta: 0.5 * (lo + hi), forced: false })
}

fn resolve_beta(p: &SmoothnessProfile, beta: Option<f64>) -> Result<f64> {
    match beta {
        _ if p.l_yy == 0.0 => Ok(1.0),
        None => Ok(optimal_beta(p)?.beta),
        Some(b) if b > 0.0 && b < 1.0 => Ok(b),
        Some(1.0) => Err(Error::InvalidArgument("beta = 1 is only allowed when L_yy = 0".into())),
        Some(b) => Err(Error::InvalidArgument(format!("beta must lie in (0, 1], got {b}"))),
    }
}

/// Parameters of the strongly convex rule for a momentum θ ≥ θ̄.
fn params_from_theta(p: &SmoothnessProfile, theta: f64, source: CertificateSource) -> Result<CertifiedParams> {
    let tau = (1.0 - theta) / (p.mu_x * theta);
    let sigma = (1.0 - theta) / (p.mu_y * theta);
    let alpha = 1.0 / sigma - theta.sqrt() * p.l_yy;
    let mut cert = check_simple_system(p, tau, sigma, theta, alpha)?;
    cert.source = source;
    Ok(CertifiedParams { params: SapdParams::new(tau, sigma, theta), certificate: cert })
}

/// Explicit strongly convex parameters with θ = max{θ̄₁(β), θ̄₂(β)}.
///
/// `beta = None` selects β* (or 1 when L_yy = 0).
pub fn scsc_explicit_params(p: &SmoothnessProfile, beta: Option<f64>) -> Result<CertifiedParams> {
    require_scsc(p)?;
    let beta = resolve_beta(p, beta)?;
    let theta = theta_bar_1(p, beta).max(theta_bar_2(p, beta));
    if !(theta > 0.0 && theta < 1.0) {
        return Err(Error::Infeasible(format!("explicit momentum {theta} outside (0, 1)")));
    }
    params_from_theta(p, theta, CertificateSource::Explicit)
}

fn psi(p: &SmoothnessProfile, beta: f64) -> f64 {
    let a = (beta * p.mu_x / p.mu_y).sqrt();
    let b = if p.l_yy == 0.0 { f64::INFINITY } else { (1.0 - beta) * p.l_yx / (2.0 * p.l_yy) };
    a.min(b)
}

/// Noise thresholds θ̿₁, θ̿₂ for target accuracy ε.
pub fn noise_thresholds(p: &SmoothnessProfile, noise: &NoiseProfile, eps: f64, beta: f64) -> (f64, f64) {
    let psi = psi(p, beta);
    let xi_x = 3.0 + 2.0 * psi;
    let xi_y = 33.0 + 6.0 * beta * (2.0 * p.l_xy / p.l_yx - 1.0) + 2.0 * (p.mu_y / p.mu_x) * psi;
    let th = |xi: f64, mu: f64, d2: f64| {
        if d2 == 0.0 {
            0.0
        } else {
            (1.0 - (2.0 / (3.0 * xi)) * (mu / d2) * eps).max(0.0)
        }
    };
    (th(xi_x, p.mu_x, noise.delta_x_sq), th(xi_y, p.mu_y, noise.delta_y_sq))
}

/// Noise-aware strongly convex parameters: θ = max{θ̄, θ̿₁, θ̿₂}.
pub fn epsilon_params_scsc(p: &SmoothnessProfile, noise: &NoiseProfile, eps: f64, beta: Option<f64>) -> Result<CertifiedParams> {
    require_scsc(p)?;
    if !(eps > 0.0) {
        return Err(Error::InvalidArgument(format!("epsilon must be positive, got {eps}")));
    }
    let beta = resolve_beta(p, beta)?;
    let bar = theta_bar_1(p, beta).max(theta_bar_2(p, beta));
    let (n1, n2) = noise_thresholds(p, noise, eps, beta);
    let theta = bar.max(n1).max(n2);
    if !(theta > 0.0 && theta < 1.0) {
        return Err(Error::Infeasible(format!("momentum {theta} outside (0, 1)")));
    }
    params_from_theta(p, theta, CertificateSource::Explicit)
}

/// Merely convex parameters with θ = 1. Zero noise means no noise cap.
pub fn epsilon_params_mc(p: &SmoothnessProfile, noise: &NoiseProfile, eps: f64) -> Result<CertifiedParams> {
    if p.mu_x != 0.0 || p.mu_y != 0.0 {
        return Err(Error::InvalidArgument("merely convex rule expects mu_x = mu_y = 0".into()));
    }
    if !(eps > 0.0) {
        return Err(Error::InvalidArgument(format!("epsilon must be positive, got {eps}")));
    }
    let cap = |scale: f64, d2: f64| if d2 == 0.0 { f64::INFINITY } else { scale * eps / d2 };
    let inv = |v: f64| if v == 0.0 { f64::INFINITY } else { 1.0 / v };
    let tau = inv(p.l_yx + p.l_xx).min(cap(2.0 / 15.0, noise.delta_x_sq));
    let sigma = inv(p.l_yx + 2.0 * p.l_yy).min(inv(p.l_xy)).min(cap(1.0 / 72.0, noise.delta_y_sq));
    let alpha = p.l_yx + p.l_yy;
    let mut cert = check_simple_system(p, tau, sigma, 1.0, alpha)?;
    cert.source = CertificateSource::Explicit;
    Ok(CertifiedParams { params: SapdParams::new(tau, sigma, 1.0), certificate: cert })
}

/// Golden-section maximization of a concave function on [lo, hi].
fn golden_max(lo: f64, hi: f64, mut f: impl FnMut(f64) -> f64) -> (f64, f64) {
    if hi <= lo {
        return (lo, f(lo));
    }
    let (mut a, mut b) = (lo, hi);
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    let mut best = if fc >= fd { (c, fc) } else { (d, fd) };
    for _ in 0..GOLDEN_ITERS {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
            if fc > best.1 {
                best = (c, fc);
            }
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
            if fd > best.1 {
                best = (d, fd);
            }
        }
        if best.1 == f64::INFINITY {
            break;
        }
    }
    for x in [lo, hi] {
        let fx = f(x);
        if fx > best.1 {
            best = (x, fx);
        }
    }
    best
}

/// Largest t allowed by the (1,1) entry; Lemma 4.4 makes it optimal.
pub fn t_max(p: &SmoothnessProfile, rho: f64) -> f64 {
    p.mu_x * rho / (1.0 - rho)
}

/// Largest s allowed by the (2,2) entry.
pub fn s_max(p: &SmoothnessProfile, rho: f64) -> f64 {
    p.mu_y * rho / (1.0 - rho)
}

/// Range of θ allowed by the 2×2 minor on rows (2,3).
pub fn theta_range(p: &SmoothnessProfile, rho: f64, t: f64) -> Option<(f64, f64)> {
    let slack = p.mu_y * (t - p.l_xx);
    if slack < 0.0 {
        return None;
    }
    let w = slack.sqrt() / p.l_yx;
    Some((rho * (1.0 - w)).max(0.0)).map(|lo| (lo, rho * (1.0 + w)))
}

/// λ_min of the certificate with t fixed; the decoupled (1,1) entry is
/// folded in through the minimum.
fn margin_at(p: &SmoothnessProfile, rho: f64, t: f64, s: f64, theta: f64, alpha: f64) -> (f64, f64) {
    let g = g_rho(p, t, s, theta, alpha, rho);
    let m = psd_margin(&g.principal(&[1, 2, 3, 4])).unwrap_or(f64::NEG_INFINITY).min(g.get(0, 0));
    (m, psd_tolerance(&g))
}

/// Outcome of a feasibility query.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Feasibility {
    pub feasible: bool,
    pub margin: f64,
    pub witness: Option<FeasiblePoint>,
}

/// Decides whether P_ρ is non-empty.
pub fn feasibility_p_rho(p: &SmoothnessProfile, rho: f64) -> Result<Feasibility> {
    require_scsc(p)?;
    if !(rho > 0.0 && rho < 1.0) {
        return Err(Error::InvalidArgument(format!("rho must lie in (0, 1), got {rho}")));
    }
    // Explicit witness: the strongly convex rule with θ = ρ ≥ θ̄.
    let beta = resolve_beta(p, None)?;
    let bar = theta_bar_1(p, beta).max(theta_bar_2(p, beta));
    if rho >= bar {
        let t = t_max(p, rho);
        let s = s_max(p, rho);
        let alpha = (s - rho.sqrt() * p.l_yy).max(0.0);
        let (m, tol) = margin_at(p, rho, t, s, rho, alpha);
        if m >= -tol {
            return Ok(Feasibility { feasible: true, margin: m, witness: Some(FeasiblePoint { t, s, theta: rho, alpha }) });
        }
    }
    let t = t_max(p, rho);
    let Some((th_lo, th_hi)) = theta_range(p, rho, t) else {
        return Ok(Feasibility { feasible: false, margin: f64::NEG_INFINITY, witness: None });
    };
    let smax = s_max(p, rho);
    let mut found: Option<(FeasiblePoint, f64)> = None;
    let mut best: (f64, Option<FeasiblePoint>) = (f64::NEG_INFINITY, None);
    golden_max(th_lo, th_hi, |theta| {
        if found.is_some() {
            return f64::INFINITY;
        }
        golden_max(0.0, smax, |s| {
            if found.is_some() {
                return f64::INFINITY;
            }
            golden_max(0.0, s, |alpha| {
                if found.is_some() {
                    return f64::INFINITY;
                }
                let (m, tol) = margin_at(p, rho, t, s, theta, alpha);
                let pt = FeasiblePoint { t, s, theta, alpha };
                if m > best.0 {
                    best = (m, Some(pt));
                }
                if m >= -tol {
                    found = Some((pt, m));
                }
                m
            })
            .1
        })
        .1
    });
    Ok(match found {
        Some((pt, m)) => Feasibility { feasible: true, margin: m, witness: Some(pt) },
        None => Feasibility { feasible: false, margin: best.0, witness: best.1 },
    })
}

/// Best certifiable rate and the witness attaining it.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RhoStar {
    pub rho: f64,
    pub witness: FeasiblePoint,
}

/// Smallest ρ with P_ρ non-empty, by bisection to width `tol`.
pub fn rho_star(p: &SmoothnessProfile, tol: f64) -> Result<RhoStar> {
    require_scsc(p)?;
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument("tolerance must be positive".into()));
    }
    let explicit = scsc_explicit_params(p, None)?;
    let mut hi = explicit.certificate.rho;
    let mut witness = feasibility_p_rho(p, hi)?
        .witness
        .ok_or_else(|| Error::Infeasible("explicit witness rejected".into()))?;
    let mut lo = 0.0;
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        let f = feasibility_p_rho(p, mid)?;
        if f.feasible {
            hi = mid;
            witness = f.witness.expect("feasible point has a witness");
        } else {
            lo = mid;
        }
    }
    Ok(RhoStar { rho: hi, witness })
}

/// Checks the SGDA certificate (θ = 0) for steps (τ, σ) at rate ρ.
pub fn sgda_certificate(p: &SmoothnessProfile, tau: f64, sigma: f64, rho: f64) -> Result<Certificate> {
    if !(p.mu_x > 0.0 && p.mu_y > 0.0) {
        return Err(Error::InvalidArgument("SGDA has no admissible steps unless mu_x, mu_y > 0".into()));
    }
    if !(rho > 0.0 && rho < 1.0) {
        return Err(Error::InvalidArgument(format!("rho must lie in (0, 1), got {rho}")));
    }
    if !(tau > 0.0 && sigma > 0.0) {
        return Err(Error::InvalidArgument("tau and sigma must be positive".into()));
    }
    let m = sgda_matrix(p, 1.0 / tau, 1.0 / sigma, rho);
    let margin = psd_margin(&m)?;
    let tol = psd_tolerance(&m);
    let need = (1.0 - rho) / rho;
    let scalar_ok = tau * p.mu_x >= need * (1.0 - 1e-12);
    Ok(Certificate { rho, alpha: 0.0, psd_margin: margin, tolerance: tol, feasible: margin >= -tol && scalar_ok, source: CertificateSource::User })
}

fn sgda_matrix(p: &SmoothnessProfile, t: f64, s: f64, rho: f64) -> SymMatrix {
    let mut m = SymMatrix::zeros(3);
    m.set(0, 0, s + p.mu_y - s / rho);
    m.set(1, 1, t - p.l_xx);
    m.set(2, 2, s);
    m.set(0, 1, -p.l_yx);
    m.set(0, 2, -p.l_yy);
    m
}

fn check_betas(b1: f64, b2: f64) -> Result<()> {
    if !(b1 > 0.0 && b2 > 0.0 && b1 + b2 < 1.0) {
        return Err(Error::InvalidArgument(format!("need beta1, beta2 > 0 with beta1 + beta2 < 1, got ({b1}, {b2})")));
    }
    Ok(())
}

/// SGDA steps at rate ρ for given (β₁, β₂).
fn sgda_steps_at(p: &SmoothnessProfile, rho: f64, b1: f64, b2: f64) -> SapdParams {
    let tau = (1.0 - rho) / (rho * p.mu_x);
    let sigma = (1.0 - rho) / ((1.0 - b1 - b2) * rho * p.mu_y);
    SapdParams::new(tau, sigma, 0.0)
}

/// Explicit SGDA rate ρ̄ = (1 + 1/L(β₁, β₂))⁻¹ and its steps.
pub fn sgda_explicit_params(p: &SmoothnessProfile, b1: f64, b2: f64) -> Result<CertifiedParams> {
    require_scsc(p)?;
    check_betas(b1, b2)?;
    let l1 = p.l_xx / p.mu_x + p.l_yx * p.l_yx / (b1 * p.mu_x * p.mu_y);
    let l2 = p.l_yy * p.l_yy / (b2 * (1.0 - b1 - b2) * p.mu_y * p.mu_y);
    let l = l1.max(l2);
    let rho = 1.0 / (1.0 + 1.0 / l);
    let params = sgda_steps_at(p, rho, b1, b2);
    let mut cert = sgda_certificate(p, params.tau, params.sigma, rho)?;
    cert.source = CertificateSource::Explicit;
    Ok(CertifiedParams { params, certificate: cert })
}

/// Noise-aware SGDA: ρ = max{ρ̄, ρ̿₁, ρ̿₂}.
pub fn sgda_epsilon_params(p: &SmoothnessProfile, noise: &NoiseProfile, eps: f64, b1: f64, b2: f64) -> Result<CertifiedParams> {
    if !(eps > 0.0) {
        return Err(Error::InvalidArgument(format!("epsilon must be positive, got {eps}")));
    }
    let base = sgda_explicit_params(p, b1, b2)?;
    let r1 = if noise.delta_x_sq == 0.0 { 0.0 } else { (1.0 - p.mu_x * eps / (6.0 * noise.delta_x_sq)).max(0.0) };
    let r2 = if noise.delta_y_sq == 0.0 {
        0.0
    } else {
        let num = 6.0 * noise.delta_y_sq - eps * p.mu_y;
        let den = 6.0 * noise.delta_y_sq - eps * p.mu_y * (b1 + b2);
        (num / den).max(0.0)
    };
    let rho = base.certificate.rho.max(r1).max(r2);
    if rho == base.certificate.rho {
        return Ok(base);
    }
    let params = sgda_steps_at(p, rho, b1, b2);
    let mut cert = sgda_certificate(p, params.tau, params.sigma, rho)?;
    cert.source = CertificateSource::Explicit;
    Ok(CertifiedParams { params, certificate: cert })
}

/// Best SGDA rate: bisection on ρ with a concave line search over s.
pub fn sgda_rho_star(p: &SmoothnessProfile, tol: f64) -> Result<CertifiedParams> {
    require_scsc(p)?;
    let feasible_at = |rho: f64| -> Option<SapdParams> {
        let t = t_max(p, rho);
        if t < p.l_xx {
            return None;
        }
        let (s, m) = golden_max(0.0, s_max(p, rho), |s| psd_margin(&sgda_matrix(p, t, s, rho)).unwrap_or(f64::NEG_INFINITY));
        let tol = psd_tolerance(&sgda_matrix(p, t, s, rho));
        (m >= -tol && s > 0.0).then(|| SapdParams::new(1.0 / t, 1.0 / s, 0.0))
    };
    let explicit = sgda_explicit_params(p, 1.0 / 3.0, 1.0 / 3.0)?;
    let mut hi = explicit.certificate.rho;
    let mut best = feasible_at(hi).unwrap_or(explicit.params);
    let mut lo = 0.0;
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        match feasible_at(mid) {
            Some(params) => {
                hi = mid;
                best = params;
            }
            None => lo = mid,
        }
    }
    let mut cert = sgda_certificate(p, best.tau, best.sigma, hi)?;
    cert.source = CertificateSource::Bisection;
    Ok(CertifiedParams { params: best, certificate: cert })
}

/// Admissible momentum interval of the Chambolle–Pock family.
pub fn cp_theta_interval(p: &SmoothnessProfile) -> Result<(f64, f64)> {
    require_scsc(p)?;
    if p.l_xx != 0.0 || p.l_yy != 0.0 {
        return Err(Error::InvalidArgument("Chambolle–Pock family needs a bilinear profile".into()));
    }
    let a = 1.0 + p.mu_x * p.mu_y / (2.0 * p.l_yx * p.l_yx);
    Ok((a - (a * a - 1.0).sqrt(), 1.0))
}

/// Chambolle–Pock steps: 1 + μxτ = 1 + μyσ = 1/θ.
pub fn cp_params(p: &SmoothnessProfile, theta: f64) -> Result<SapdParams> {
    let (lo, hi) = cp_theta_interval(p)?;
    if !(theta >= lo * (1.0 - 1e-12) && theta < hi) {
        return Err(Error::InvalidArgument(format!("theta {theta} outside the admissible interval [{lo}, {hi})")));
    }
    Ok(SapdParams::new((1.0 / theta - 1.0) / p.mu_x, (1.0 / theta - 1.0) / p.mu_y, theta))
}

/// Noise amplification terms and bound coefficients.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct VarianceTerms {
    pub xi_x: f64,
    pub xi_y: f64,
    pub xi: f64,
    pub eta_x: f64,
    pub eta_y: f64,
    /// ½(1/τ + ηx), the weight of the primal squared distance.
    pub coef_x: f64,
    /// ½(1/σ + (1+2θ)ηy), the weight of the dual squared distance.
    pub coef_y: f64,
}

impl VarianceTerms {
    /// Ω for squared domain diameters Ω_X, Ω_Y.
    pub fn omega(&self, omega_x: f64, omega_y: f64) -> f64 {
        self.coef_x * omega_x + self.coef_y * omega_y
    }

    /// Initial-distance term for ‖x₀−x*‖², ‖y₀−y*‖².
    pub fn delta0(&self, dx_sq: f64, dy_sq: f64) -> f64 {
        self.coef_x * dx_sq + self.coef_y * dy_sq
    }
}

/// Evaluates Ξˣ, Ξʸ, Ξ and the Ω/Δ coefficients. `eta = None` uses
/// ηx = 1/τ + μx and ηy = 1/σ + μy.
pub fn variance_majorants(p: &SmoothnessProfile, params: &SapdParams, noise: &NoiseProfile, eta: Option<(f64, f64)>) -> VarianceTerms {
    let SapdParams { tau, sigma, theta } = *params;
    let (eta_x, eta_y) = eta.unwrap_or((1.0 / tau + p.mu_x, 1.0 / sigma + p.mu_y));
    let cx = 1.0 + tau * p.mu_x;
    let cy = 1.0 + sigma * p.mu_y;
    let tt = theta * (1.0 + theta);
    let xi_x = 1.0 + sigma * tt * p.l_yx / (2.0 * cy);
    let inner = 1.0 + 2.0 * theta + (theta + sigma * tt * p.l_yy) / cy + tau * sigma * tt * p.l_yx * p.l_xy / (cx * cy);
    let xi_y = inner * (1.0 + 2.0 * theta) + tau * tt * p.l_yx / (2.0 * cx);
    let xi = (tau / cx * xi_x + 1.0 / (2.0 * eta_x)) * noise.delta_x_sq
        + (sigma / cy * xi_y + (1.0 + 2.0 * theta) / (2.0 * eta_y)) * noise.delta_y_sq;
    VarianceTerms {
        xi_x,
        xi_y,
        xi,
        eta_x,
        eta_y,
        coef_x: 0.5 * (1.0 / tau + eta_x),
        coef_y: 0.5 * (1.0 / sigma + (1.0 + 2.0 * theta) * eta_y),
    }
}
