//! Noise robustness of SAPD on quadratic bilinear problems.
//!
//! For `L(x, y) = (μx/2)‖x‖² + ⟨Kx, y⟩ − (μy/2)‖y‖²` with symmetric K the
//! iteration is linear in the stacked state `[x_k; y_k; x_{k−1}; y_{k−1}]`
//! and splits into one 4×4 block per eigenvalue of K. The stationary noise
//! covariance of each block solves a discrete Lyapunov equation.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::numerics::{jacobi_eigen, psd_margin, psd_tolerance, spectral_radius, solve_linear, Matrix};
use crate::problem::{NoiseProfile, QuadraticBilinearProblem, SmoothnessProfile};
use crate::solvers::SapdParams;
use crate::tuning::{check_general, feasibility_p_rho, g_rho, s_max, t_max, theta_range, Certificate};

type M4 = [[f64; 4]; 4];

const BISECT_ITERS: usize = 40;
const GOLDEN_ITERS: usize = 48;
const INV_PHI: f64 = 0.618_033_988_749_894_9;

/// The 4×4 recursion and noise-input matrices for one eigenvalue λ of K.
pub fn block_matrices(lambda: f64, params: &SapdParams, mu_x: f64, mu_y: f64) -> (Matrix, Matrix) {
    let (a, b) = block_arrays(lambda, params, mu_x, mu_y);
    (m4_to_matrix(&a), m4_to_matrix(&b))
}

fn block_arrays(lambda: f64, params: &SapdParams, mu_x: f64, mu_y: f64) -> (M4, M4) {
    let SapdParams { tau, sigma, theta } = *params;
    let a = 1.0 / (1.0 + tau * mu_x);
    let b = 1.0 / (1.0 + sigma * mu_y);
    let l = lambda;
    let l2 = l * l;
    let am = [
        [a - tau * sigma * (1.0 + theta) * a * b * l2, -tau * a * b * l, tau * sigma * theta * a * b * l2, 0.0],
        [sigma * (1.0 + theta) * b * l, b, -sigma * theta * b * l, 0.0],
        [1.0, 0.0, 0.0, 0.0],
        [0.0, 1.0, 0.0, 0.0],
    ];
    // Noise columns: [ωx_k, ωy_k, ωx_{k−1}, ωy_{k−1}].
    let bm = [
        [-tau * a, -tau * sigma * (1.0 + theta) * a * b * l, 0.0, tau * sigma * theta * a * b * l],
        [0.0, sigma * (1.0 + theta) * b, 0.0, -sigma * theta * b],
        [0.0; 4],
        [0.0; 4],
    ];
    (am, bm)
}

fn m4_to_matrix(m: &M4) -> Matrix {
    Matrix::from_fn(4, 4, |i, j| m[i][j])
}

fn matrix_to_m4(m: &Matrix) -> M4 {
    let mut out = [[0.0; 4]; 4];
    for (i, row) in out.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = m[(i, j)];
        }
    }
    out
}

/// Dense recursion `z_{k+1} = A z_k + B w_k` on `[x; y; x_prev; y_prev]`
/// with noise `w = [ωx_k; ωy_k; ωx_{k−1}; ωy_{k−1}]`.
pub fn dense_dynamics(k: &Matrix, params: &SapdParams, mu_x: f64, mu_y: f64) -> Result<(Matrix, Matrix)> {
    if !k.is_square() {
        return Err(Error::InvalidArgument("K must be square".into()));
    }
    let d = k.rows();
    let SapdParams { tau, sigma, theta } = *params;
    let a = 1.0 / (1.0 + tau * mu_x);
    let b = 1.0 / (1.0 + sigma * mu_y);
    let k2 = k.matmul(k);
    let eye = |i: usize, j: usize| if i == j { 1.0 } else { 0.0 };
    let mut am = Matrix::zeros(4 * d, 4 * d);
    let mut bm = Matrix::zeros(4 * d, 4 * d);
    for i in 0..d {
        for j in 0..d {
            am[(i, j)] = a * eye(i, j) - tau * sigma * (1.0 + theta) * a * b * k2[(i, j)];
            am[(i, d + j)] = -tau * a * b * k[(i, j)];
            am[(i, 2 * d + j)] = tau * sigma * theta * a * b * k2[(i, j)];
            am[(d + i, j)] = sigma * (1.0 + theta) * b * k[(i, j)];
            am[(d + i, d + j)] = b * eye(i, j);
            am[(d + i, 2 * d + j)] = -sigma * theta * b * k[(i, j)];
            am[(2 * d + i, j)] = eye(i, j);
            am[(3 * d + i, d + j)] = eye(i, j);

            bm[(i, j)] = -tau * a * eye(i, j);
            bm[(i, d + j)] = -tau * sigma * (1.0 + theta) * a * b * k[(i, j)];
            bm[(i, 3 * d + j)] = tau * sigma * theta * a * b * k[(i, j)];
            bm[(d + i, d + j)] = sigma * (1.0 + theta) * b * eye(i, j);
            bm[(d + i, 3 * d + j)] = -sigma * theta * b * eye(i, j);
        }
    }
    Ok((am, bm))
}

/// One eigen-block of the SAPD recursion.
#[derive(Clone, Debug)]
pub struct Block {
    pub lambda: f64,
    pub a: Matrix,
    pub b: Matrix,
}

/// Block-diagonalized SAPD dynamics for a quadratic bilinear problem.
#[derive(Clone, Debug)]
pub struct BlockDynamics {
    /// Eigenvalues of K, ascending.
    pub eigenvalues: Vec<f64>,
    pub params: SapdParams,
    pub mu_x: f64,
    pub mu_y: f64,
    pub blocks: Vec<Block>,
}

impl BlockDynamics {
    pub fn from_spectrum(eigenvalues: &[f64], params: &SapdParams, mu_x: f64, mu_y: f64) -> Result<Self> {
        if eigenvalues.is_empty() {
            return Err(Error::InvalidArgument("spectrum is empty".into()));
        }
        if eigenvalues.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("spectrum"));
        }
        let mut eigenvalues = eigenvalues.to_vec();
        eigenvalues.sort_by(f64::total_cmp);
        let blocks = eigenvalues
            .iter()
            .map(|&lambda| {
                let (a, b) = block_matrices(lambda, params, mu_x, mu_y);
                Block { lambda, a, b }
            })
            .collect();
        Ok(Self { eigenvalues, params: *params, mu_x, mu_y, blocks })
    }

    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }
}

/// Eigendecomposes K and fills the per-eigenvalue blocks.
pub fn build_block_dynamics(q: &QuadraticBilinearProblem, params: &SapdParams) -> Result<BlockDynamics> {
    let (vals, _) = jacobi_eigen(q.k())?;
    BlockDynamics::from_spectrum(&vals, params, q.mu_x(), q.mu_y())
}

/// ρ_true = ρ(A)², the exact asymptotic rate of E‖z_k‖².
pub fn exact_rho_true(bd: &BlockDynamics) -> Result<f64> {
    let mut r: f64 = 0.0;
    for blk in &bd.blocks {
        r = r.max(spectral_radius(&blk.a)?);
    }
    Ok(r * r)
}

/// Solves `S = A S Aᵀ + Q` through the vectorized system
/// `(I − A⊗A) vec(S) = vec(Q)`.
pub fn lyapunov_solve(a: &Matrix, q: &Matrix) -> Result<Matrix> {
    let n = a.rows();
    if !a.is_square() || q.rows() != n || q.cols() != n {
        return Err(Error::InvalidArgument("Lyapunov shape mismatch".into()));
    }
    let nn = n * n;
    let mut m = Matrix::identity(nn);
    for j in 0..n {
        for i in 0..n {
            let r = i + n * j;
            for l in 0..n {
                for k in 0..n {
                    m[(r, k + n * l)] -= a[(j, l)] * a[(i, k)];
                }
            }
        }
    }
    let v = solve_linear(&m, &q.vec_cols())?;
    let s = Matrix::from_vec_cols(n, n, &v);
    Ok(s.add(&s.transpose()).scale(0.5))
}

/// ‖S − ASAᵀ − Q‖_F.
pub fn lyapunov_residual(a: &Matrix, s: &Matrix, q: &Matrix) -> f64 {
    s.sub(&a.matmul(s).matmul(&a.transpose())).sub(q).frobenius()
}

fn lyap4(a: &M4, q: &M4) -> Option<M4> {
    // Column-major vec: S[i][j] sits at i + 4j.
    let mut m = [[0.0f64; 17]; 16];
    for j in 0..4 {
        for i in 0..4 {
            let r = i + 4 * j;
            for l in 0..4 {
                for k in 0..4 {
                    m[r][k + 4 * l] = -a[j][l] * a[i][k];
                }
            }
            m[r][r] += 1.0;
            m[r][16] = q[i][j];
        }
    }
    for col in 0..16 {
        let mut piv = col;
        for r in col + 1..16 {
            if m[r][col].abs() > m[piv][col].abs() {
                piv = r;
            }
        }
        if m[piv][col].abs() < 1e-14 {
            return None;
        }
        m.swap(piv, col);
        let pv = m[col][col];
        for r in col + 1..16 {
            let f = m[r][col] / pv;
            if f != 0.0 {
                for c in col..17 {
                    m[r][c] -= f * m[col][c];
                }
            }
        }
    }
    let mut x = [0.0; 16];
    for col in (0..16).rev() {
        let mut s = m[col][16];
        for c in col + 1..16 {
            s -= m[col][c] * x[c];
        }
        x[col] = s / m[col][col];
    }
    let mut out = [[0.0; 4]; 4];
    for j in 0..4 {
        for i in 0..4 {
            out[i][j] = 0.5 * (x[i + 4 * j] + x[j + 4 * i]);
        }
    }
    Some(out)
}

fn bbt_scaled(b: &M4, scale: f64) -> M4 {
    let mut q = [[0.0; 4]; 4];
    for i in 0..4 {
        for j in 0..4 {
            q[i][j] = scale * (0..4).map(|k| b[i][k] * b[j][k]).sum::<f64>();
        }
    }
    q
}

fn block_radius(a: &M4) -> Result<f64> {
    spectral_radius(&m4_to_matrix(a))
}

fn require_stable(bd: &BlockDynamics) -> Result<()> {
    let rho = exact_rho_true(bd)?;
    if rho >= 1.0 {
        return Err(Error::Unstable(rho));
    }
    Ok(())
}

/// Stationary block covariances S̃_i for isotropic noise of total variance δ².
pub fn block_covariances(bd: &BlockDynamics, delta: f64) -> Result<Vec<Matrix>> {
    require_stable(bd)?;
    let scale = delta * delta / bd.dim() as f64;
    bd.blocks
        .iter()
        .map(|blk| {
            let q = blk.b.matmul(&blk.b.transpose()).scale(scale);
            lyapunov_solve(&blk.a, &q)
        })
        .collect()
}

/// Robustness J = (1/(2δ²)) Σ_i tr S̃_i, treating the four noise inputs of
/// each step as independent. The value does not depend on δ.
pub fn exact_j(bd: &BlockDynamics) -> Result<f64> {
    require_stable(bd)?;
    let scale = 1.0 / bd.dim() as f64;
    let mut total = 0.0;
    for blk in &bd.blocks {
        let a = matrix_to_m4(&blk.a);
        let q = bbt_scaled(&matrix_to_m4(&blk.b), scale);
        let s = lyap4(&a, &q).ok_or(Error::Singular { pivot: 0.0 })?;
        total += (0..4).map(|i| s[i][i]).sum::<f64>();
    }
    Ok(0.5 * total)
}

/// Robustness of the iteration as executed: the lagged dual noise in the
/// momentum term is the same sample that drove the previous step. Computed
/// from the augmented state `[z_k; ωx_{k−1}; ωy_{k−1}]`.
pub fn exact_j_correlated(bd: &BlockDynamics) -> Result<f64> {
    require_stable(bd)?;
    let scale = 1.0 / bd.dim() as f64;
    let mut total = 0.0;
    for blk in &bd.blocks {
        let mut aa = Matrix::zeros(6, 6);
        let mut ba = Matrix::zeros(6, 2);
        for i in 0..4 {
            for j in 0..4 {
                aa[(i, j)] = blk.a[(i, j)];
            }
            aa[(i, 4)] = blk.b[(i, 2)];
            aa[(i, 5)] = blk.b[(i, 3)];
            ba[(i, 0)] = blk.b[(i, 0)];
            ba[(i, 1)] = blk.b[(i, 1)];
        }
        ba[(4, 0)] = 1.0;
        ba[(5, 1)] = 1.0;
        let q = ba.matmul(&ba.transpose()).scale(scale);
        let s = lyapunov_solve(&aa, &q)?;
        total += (0..4).map(|i| s[(i, i)]).sum::<f64>();
    }
    Ok(0.5 * total)
}

/// Upper bound R = Ξ/((1−ρ)δ²C) with C = min{1/(2ρτ), (1−ασ)/(2ρσ)},
/// valid only when (params, ρ, α) is certified. Returns +∞ when ασ = 1.
pub fn robustness_bound(p: &SmoothnessProfile, params: &SapdParams, rho: f64, alpha: f64, noise: &NoiseProfile) -> Result<f64> {
    if !(rho > 0.0 && rho < 1.0) {
        return Err(Error::InvalidArgument(format!("rho must lie in (0, 1), got {rho}")));
    }
    if !(alpha >= 0.0 && alpha * params.sigma <= 1.0) {
        return Err(Error::InvalidArgument(format!("alpha*sigma must lie in [0, 1], got {}", alpha * params.sigma)));
    }
    let cert = check_general(p, params, rho, alpha)?;
    if !cert.feasible {
        return Err(Error::Infeasible(format!("parameters not certified at rho = {rho} (margin {:e})", cert.psd_margin)));
    }
    let delta_sq = noise.delta_x_sq.min(noise.delta_y_sq);
    if !(delta_sq > 0.0) {
        return Err(Error::InvalidArgument("noise variances must be positive".into()));
    }
    let xi = crate::tuning::variance_majorants(p, params, noise, None).xi;
    let c = (1.0 / (2.0 * rho * params.tau)).min((1.0 - alpha * params.sigma) / (2.0 * rho * params.sigma));
    if c <= 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(xi / ((1.0 - rho) * delta_sq * c))
}

// ---------------------------------------------------------------------------
// Pareto tuner

/// Grid sizes of the Pareto tuner.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ParetoConfig {
    pub k_c: usize,
    pub k_theta: usize,
}

impl Default for ParetoConfig {
    fn default() -> Self {
        Self { k_c: 50, k_theta: 100 }
    }
}

/// R̄-optimal parameters at one target rate.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ParetoPoint {
    pub rho: f64,
    pub tau: f64,
    pub sigma: f64,
    pub theta: f64,
    pub alpha: f64,
    pub c: f64,
    pub r_bar: f64,
    pub j: Option<f64>,
    pub rho_true: Option<f64>,
    pub certificate: Certificate,
}

impl ParetoPoint {
    pub fn params(&self) -> SapdParams {
        SapdParams::new(self.tau, self.sigma, self.theta)
    }
}

struct Slice<'a> {
    p: &'a SmoothnessProfile,
    rho: f64,
    t: f64,
}

impl Slice<'_> {
    fn margin(&self, s: f64, theta: f64, alpha: f64) -> f64 {
        let g = g_rho(self.p, self.t, s, theta, alpha, self.rho);
        let m = psd_margin(&g.principal(&[1, 2, 3, 4])).unwrap_or(f64::NEG_INFINITY).min(g.get(0, 0));
        m + psd_tolerance(&g)
    }

    fn feasible(&self, s: f64, theta: f64, c: f64) -> bool {
        self.margin(s, theta, c * s) >= 0.0
    }

    /// Feasible s for fixed (c, θ), if any.
    fn find_s(&self, theta: f64, c: f64) -> Option<f64> {
        let smax = s_max(self.p, self.rho);
        if self.feasible(smax, theta, c) {
            return Some(smax);
        }
        let (s, m) = golden(0.0, smax, |s| self.margin(s, theta, c * s));
        (m >= 0.0).then_some(s)
    }

    /// Feasible (s, θ) for fixed c, if any.
    fn find_theta(&self, c: f64) -> Option<(f64, f64)> {
        let (lo, hi) = theta_range(self.p, self.rho, self.t)?;
        let mut hit = None;
        golden(lo, hi, |theta| {
            if hit.is_some() {
                return f64::INFINITY;
            }
            match self.find_s(theta, c) {
                Some(s) => {
                    hit = Some((s, theta));
                    f64::INFINITY
                }
                None => {
                    let smax = s_max(self.p, self.rho);
                    golden(0.0, smax, |s| self.margin(s, theta, c * s)).1
                }
            }
        });
        hit
    }

    /// Largest feasible s for fixed (c, θ), starting from a feasible s0.
    fn max_s(&self, theta: f64, c: f64, s0: f64) -> f64 {
        let smax = s_max(self.p, self.rho);
        if self.feasible(smax, theta, c) {
            return smax;
        }
        bisect_edge(s0, smax, |s| self.feasible(s, theta, c))
    }
}

/// Golden-section maximization; returns the best point seen.
fn golden(lo: f64, hi: f64, mut f: impl FnMut(f64) -> f64) -> (f64, f64) {
    let (mut a, mut b) = (lo, hi);
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    let mut best = if fc >= fd { (c, fc) } else { (d, fd) };
    for _ in 0..GOLDEN_ITERS {
        if best.1 == f64::INFINITY {
            break;
        }
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
    }
    best
}

/// Boundary of a convex feasible set between a feasible point `inside` and
/// an infeasible point `outside`; returns the last feasible point.
fn bisect_edge(inside: f64, outside: f64, mut feasible: impl FnMut(f64) -> bool) -> f64 {
    let (mut a, mut b) = (inside, outside);
    for _ in 0..BISECT_ITERS {
        let m = 0.5 * (a + b);
        if feasible(m) {
            a = m;
        } else {
            b = m;
        }
    }
    a
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![0.5 * (lo + hi)],
        _ => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
    }
}

/// Minimizes R̄_c(ρ, θ) over the (c, θ) grids at one rate.
pub fn pareto_point(
    p: &SmoothnessProfile,
    rho: f64,
    noise: &NoiseProfile,
    cfg: &ParetoConfig,
    quad: Option<&QuadraticBilinearProblem>,
) -> Result<ParetoPoint> {
    if cfg.k_c == 0 || cfg.k_theta == 0 {
        return Err(Error::InvalidArgument("grid sizes must be positive".into()));
    }
    let delta_sq = noise.delta_x_sq.min(noise.delta_y_sq);
    if !(delta_sq > 0.0) {
        return Err(Error::InvalidArgument("noise variances must be positive".into()));
    }
    let feas = feasibility_p_rho(p, rho)?;
    let w = match (feas.feasible, feas.witness) {
        (true, Some(w)) => w,
        _ => return Err(Error::Infeasible(format!("no certificate at rho = {rho}; the rate is below rho*"))),
    };
    let sl = Slice { p, rho, t: t_max(p, rho) };
    let c0 = if w.s > 0.0 { (w.alpha / w.s).min(1.0 - 1e-9) } else { 0.0 };
    let c_ok = |c: f64| sl.find_theta(c).is_some();
    let c_lo = if c_ok(0.0) { 0.0 } else { bisect_edge(c0, 0.0, c_ok) };
    let c_top = 1.0 - 1e-9;
    let c_hi = if c_ok(c_top) { c_top } else { bisect_edge(c0, c_top, c_ok) };

    let tau = 1.0 / sl.t;
    let mut best: Option<(f64, f64, f64, f64)> = None;
    for c in linspace(c_lo, c_hi, cfg.k_c) {
        let Some((_, th0)) = sl.find_theta(c) else { continue };
        let (r_lo, r_hi) = theta_range(p, rho, sl.t).unwrap_or((th0, th0));
        let th_ok = |th: f64| sl.find_s(th, c).is_some();
        let th_lo = if th_ok(r_lo) { r_lo } else { bisect_edge(th0, r_lo, th_ok) };
        let th_hi = if th_ok(r_hi) { r_hi } else { bisect_edge(th0, r_hi, th_ok) };
        for theta in linspace(th_lo, th_hi, cfg.k_theta) {
            let Some(s_feas) = sl.find_s(theta, c) else { continue };
            let s = sl.max_s(theta, c, s_feas);
            if !(s > 0.0) {
                continue;
            }
            let sigma = 1.0 / s;
            let params = SapdParams::new(tau, sigma, theta);
            let xi = crate::tuning::variance_majorants(p, &params, noise, None).xi;
            let r = (2.0 / p.mu_x).max(2.0 * rho * sigma / ((1.0 - c) * (1.0 - rho))) * xi / delta_sq;
            if best.is_none_or(|b| r < b.0) {
                best = Some((r, c, theta, sigma));
            }
        }
    }
    let (r_bar, c, theta, sigma) =
        best.ok_or_else(|| Error::Infeasible(format!("empty feasible set at rho = {rho}")))?;
    let params = SapdParams::new(tau, sigma, theta);
    let alpha = c / sigma;
    let certificate = check_general(p, &params, rho, alpha)?;
    let (j, rho_true) = match quad {
        Some(q) => {
            let bd = build_block_dynamics(q, &params)?;
            (Some(exact_j(&bd)?), Some(exact_rho_true(&bd)?))
        }
        None => (None, None),
    };
    Ok(ParetoPoint { rho, tau, sigma, theta, alpha, c, r_bar, j, rho_true, certificate })
}

/// Pareto points for every target rate, solved in parallel.
pub fn pareto_frontier(
    p: &SmoothnessProfile,
    rhos: &[f64],
    noise: &NoiseProfile,
    cfg: &ParetoConfig,
    quad: Option<&QuadraticBilinearProblem>,
) -> Result<Vec<ParetoPoint>> {
    rhos.par_iter().map(|&rho| pareto_point(p, rho, noise, cfg, quad)).collect()
}

// ---------------------------------------------------------------------------
// Grid scan

/// Uniform (τ, σ, θ) grid.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ScanConfig {
    pub tau_range: (f64, f64),
    pub sigma_range: (f64, f64),
    pub theta_range: (f64, f64),
    pub counts: (usize, usize, usize),
    /// Number of ρ bins for the envelope.
    pub bins: usize,
}

impl Default for ScanConfig {
    fn default() -> Self {
        Self { tau_range: (0.0, 0.5), sigma_range: (0.0, 0.5), theta_range: (0.0, 2.0), counts: (60, 60, 60), bins: 200 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ScanPoint {
    pub tau: f64,
    pub sigma: f64,
    pub theta: f64,
    pub rho_true: f64,
    pub j: f64,
}

impl ScanPoint {
    pub fn params(&self) -> SapdParams {
        SapdParams::new(self.tau, self.sigma, self.theta)
    }
}

/// Smallest J among cloud points whose ρ_true falls in `[rho_lo, rho_hi)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EnvelopeBin {
    pub rho_lo: f64,
    pub rho_hi: f64,
    pub j_min: f64,
}

/// Per-(τ, σ) optima over θ.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LevelPoint {
    pub tau: f64,
    pub sigma: f64,
    pub rho_min: f64,
    pub theta_rho: f64,
    pub j_min: f64,
    pub theta_j: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ScanResult {
    pub points: Vec<ScanPoint>,
    pub unstable: usize,
    pub envelope: Vec<EnvelopeBin>,
    pub levels: Vec<LevelPoint>,
}

impl ScanResult {
    pub fn min_rho_true(&self) -> Option<f64> {
        self.points.iter().map(|p| p.rho_true).reduce(f64::min)
    }

    /// Smallest ρ_true over the θ = 0 plane (plain SGDA).
    pub fn min_rho_true_sgda(&self) -> Option<f64> {
        self.points.iter().filter(|p| p.theta == 0.0).map(|p| p.rho_true).reduce(f64::min)
    }

    /// Envelope value of the bin containing `rho`.
    pub fn envelope_at(&self, rho: f64) -> Option<f64> {
        self.envelope.iter().find(|b| rho >= b.rho_lo && rho < b.rho_hi).map(|b| b.j_min).filter(|v| v.is_finite())
    }

    /// Smallest J over all cloud points with ρ_true ≤ `rho`.
    pub fn frontier_at(&self, rho: f64) -> Option<f64> {
        self.frontier_point_at(rho).map(|p| p.j)
    }

    pub fn frontier_point_at(&self, rho: f64) -> Option<ScanPoint> {
        self.points.iter().filter(|p| p.rho_true <= rho).min_by(|a, b| a.j.total_cmp(&b.j)).copied()
    }

    /// Smallest ρ_true over cloud points with τ ≤ `tau_max` and σ ≤ `sigma_max`.
    pub fn min_rho_true_within(&self, tau_max: f64, sigma_max: f64, theta_zero: bool) -> Option<f64> {
        self.points
            .iter()
            .filter(|p| p.tau <= tau_max && p.sigma <= sigma_max && (!theta_zero || p.theta == 0.0))
            .map(|p| p.rho_true)
            .reduce(f64::min)
    }
}

/// Minimizes J over (τ, σ, θ) subject to ρ_true ≤ `rho_cap` by compass search
/// in (ln τ, ln σ, θ), starting from a point that satisfies the cap.
pub fn refine_frontier(q: &QuadraticBilinearProblem, rho_cap: f64, start: &SapdParams, max_evals: usize) -> Result<Option<ScanPoint>> {
    let (vals, _) = jacobi_eigen(q.k())?;
    let (mu_x, mu_y) = (q.mu_x(), q.mu_y());
    let eval = |z: &[f64; 3]| -> Option<(f64, f64)> {
        if z[2] < 0.0 {
            return None;
        }
        let prm = SapdParams::new(z[0].exp(), z[1].exp(), z[2]);
        block_rho_and_trace(&vals, &prm, mu_x, mu_y).filter(|(r, _)| *r <= rho_cap)
    };
    if !(start.tau > 0.0 && start.sigma > 0.0) {
        return Err(Error::InvalidArgument("start point needs positive steps".into()));
    }
    let mut z = [start.tau.ln(), start.sigma.ln(), start.theta];
    let Some(mut cur) = eval(&z) else { return Ok(None) };
    let mut step = [0.5, 0.5, 0.25];
    let mut evals = 1;
    while evals < max_evals && step.iter().any(|&h| h > 1e-9) {
        let mut moved = false;
        for i in 0..3 {
            for dir in [1.0, -1.0] {
                let mut cand = z;
                cand[i] += dir * step[i];
                evals += 1;
                if let Some(v) = eval(&cand) {
                    if v.1 < cur.1 {
                        z = cand;
                        cur = v;
                        moved = true;
                        break;
                    }
                }
            }
        }
        if !moved {
            step.iter_mut().for_each(|h| *h *= 0.5);
        }
    }
    Ok(Some(ScanPoint { tau: z[0].exp(), sigma: z[1].exp(), theta: z[2], rho_true: cur.0, j: cur.1 }))
}

fn block_rho_and_trace(lams: &[f64], params: &SapdParams, mu_x: f64, mu_y: f64) -> Option<(f64, f64)> {
    let scale = 1.0 / lams.len() as f64;
    let mut blocks = Vec::with_capacity(lams.len());
    let mut r: f64 = 0.0;
    for &l in lams {
        let (a, b) = block_arrays(l, params, mu_x, mu_y);
        r = r.max(block_radius(&a).ok()?);
        if r >= 1.0 {
            return None;
        }
        blocks.push((a, b));
    }
    let mut total = 0.0;
    for (a, b) in &blocks {
        let s = lyap4(a, &bbt_scaled(b, scale))?;
        total += (0..4).map(|i| s[i][i]).sum::<f64>();
    }
    Some((r * r, 0.5 * total))
}

/// Evaluates (ρ_true, J) on a uniform grid. Points with τ or σ at zero or
/// with unstable dynamics are skipped and counted.
pub fn grid_scan(q: &QuadraticBilinearProblem, cfg: &ScanConfig) -> Result<ScanResult> {
    let (nt, ns, nth) = cfg.counts;
    if nt == 0 || ns == 0 || nth == 0 || cfg.bins == 0 {
        return Err(Error::InvalidArgument("grid counts must be positive".into()));
    }
    for (name, (lo, hi)) in [("tau", cfg.tau_range), ("sigma", cfg.sigma_range), ("theta", cfg.theta_range)] {
        if !(lo >= 0.0 && hi >= lo && hi.is_finite()) {
            return Err(Error::InvalidArgument(format!("{name} range must be non-negative and ordered")));
        }
    }
    let (vals, _) = jacobi_eigen(q.k())?;
    let (mu_x, mu_y) = (q.mu_x(), q.mu_y());
    let taus = linspace(cfg.tau_range.0, cfg.tau_range.1, nt);
    let sigmas = linspace(cfg.sigma_range.0, cfg.sigma_range.1, ns);
    let thetas = linspace(cfg.theta_range.0, cfg.theta_range.1, nth);

    let per_pair: Vec<(Vec<ScanPoint>, usize, Option<LevelPoint>)> = (0..nt * ns)
        .into_par_iter()
        .map(|idx| {
            let (tau, sigma) = (taus[idx / ns], sigmas[idx % ns]);
            let mut pts = Vec::new();
            let mut unstable = 0;
            if tau <= 0.0 || sigma <= 0.0 {
                return (pts, nth, None);
            }
            for &theta in &thetas {
                match block_rho_and_trace(&vals, &SapdParams::new(tau, sigma, theta), mu_x, mu_y) {
                    Some((rho_true, j)) => pts.push(ScanPoint { tau, sigma, theta, rho_true, j }),
                    None => unstable += 1,
                }
            }
            let level = (!pts.is_empty()).then(|| {
                let br = pts.iter().min_by(|a, b| a.rho_true.total_cmp(&b.rho_true)).expect("non-empty");
                let bj = pts.iter().min_by(|a, b| a.j.total_cmp(&b.j)).expect("non-empty");
                LevelPoint { tau, sigma, rho_min: br.rho_true, theta_rho: br.theta, j_min: bj.j, theta_j: bj.theta }
            });
            (pts, unstable, level)
        })
        .collect();

    let mut points = Vec::new();
    let mut levels = Vec::new();
    let mut unstable = 0;
    for (pts, u, l) in per_pair {
        points.extend(pts);
        unstable += u;
        levels.extend(l);
    }
    let envelope = match points.iter().map(|p| p.rho_true).reduce(f64::min) {
        Some(lo) => {
            let width = (1.0 - lo) / cfg.bins as f64;
            let mut env: Vec<EnvelopeBin> = (0..cfg.bins)
                .map(|i| EnvelopeBin { rho_lo: lo + width * i as f64, rho_hi: lo + width * (i + 1) as f64, j_min: f64::INFINITY })
                .collect();
            for p in &points {
                let i = (((p.rho_true - lo) / width) as usize).min(cfg.bins - 1);
                env[i].j_min = env[i].j_min.min(p.j);
            }
            env
        }
        None => Vec::new(),
    };
    Ok(ScanResult { points, unstable, envelope, levels })
}

/// Closed-form E[G(x_k, y_k)] for the quadratic problem started at
/// (x0, y0) with x_{−1} = x0, y_{−1} = y0. The covariance follows the
/// iteration as executed: the first step reuses its dual sample as the lagged
/// one, later steps carry the previous sample in an augmented state.
pub fn expected_gap_quadratic(
    q: &QuadraticBilinearProblem,
    params: &SapdParams,
    x0: &[f64],
    y0: &[f64],
    k: usize,
) -> Result<f64> {
    let d = q.dim();
    if x0.len() != d || y0.len() != d {
        return Err(Error::InvalidArgument("start point has the wrong dimension".into()));
    }
    let (vals, vecs) = jacobi_eigen(q.k())?;
    let (mu_x, mu_y) = (q.mu_x(), q.mu_y());
    let delta = q.delta();
    let bd = BlockDynamics::from_spectrum(&vals, params, mu_x, mu_y)?;
    if delta > 0.0 {
        require_stable(&bd)?;
    }
    let xh = vecs.tr_mul_vec(x0);
    let yh = vecs.tr_mul_vec(y0);
    let noise_scale = delta * delta / d as f64;
    let mut total = 0.0;
    for (i, &lam) in vals.iter().enumerate() {
        let (a, b) = block_arrays(lam, params, mu_x, mu_y);
        let wx = 0.5 * mu_x + lam * lam / (2.0 * mu_y);
        let wy = 0.5 * mu_y + lam * lam / (2.0 * mu_x);
        let mut z = [xh[i], yh[i], xh[i], yh[i]];
        for _ in 0..k {
            z = mat_vec4(&a, &z);
        }
        let (vx, vy) = if noise_scale > 0.0 && k > 0 { noise_variances(&a, &b, k, noise_scale) } else { (0.0, 0.0) };
        total += wx * (z[0] * z[0] + vx) + wy * (z[1] * z[1] + vy);
    }
    Ok(total)
}

/// Variances of (x_k, y_k) for one block after k ≥ 1 steps from a fixed start.
fn noise_variances(a: &M4, b: &M4, k: usize, scale: f64) -> (f64, f64) {
    let mut aa = Matrix::zeros(6, 6);
    let mut ba = Matrix::zeros(6, 2);
    let mut first = Matrix::zeros(6, 2);
    for r in 0..4 {
        for c in 0..4 {
            aa[(r, c)] = a[r][c];
        }
        aa[(r, 4)] = b[r][2];
        aa[(r, 5)] = b[r][3];
        ba[(r, 0)] = b[r][0];
        ba[(r, 1)] = b[r][1];
        first[(r, 0)] = b[r][0] + b[r][2];
        first[(r, 1)] = b[r][1] + b[r][3];
    }
    for m in [&mut ba, &mut first] {
        m[(4, 0)] = 1.0;
        m[(5, 1)] = 1.0;
    }
    let qn = ba.matmul(&ba.transpose()).scale(scale);
    let mut cov = first.matmul(&first.transpose()).scale(scale);
    for _ in 1..k {
        cov = aa.matmul(&cov).matmul(&aa.transpose()).add(&qn);
    }
    (cov[(0, 0)], cov[(1, 1)])
}

fn mat_vec4(a: &M4, z: &[f64; 4]) -> [f64; 4] {
    let mut out = [0.0; 4];
    for i in 0..4 {
        out[i] = (0..4).map(|j| a[i][j] * z[j]).sum();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn zero_coupling_block_is_diagonal() {
        let prm = SapdParams::new(1.0, 1.0, 0.5);
        let bd = BlockDynamics::from_spectrum(&[0.0], &prm, 1.0, 1.0).unwrap();
        assert_relative_eq!(exact_rho_true(&bd).unwrap(), 0.25, epsilon = 1e-14);
    }

    #[test]
    fn lyap4_matches_generic_solver() {
        let prm = SapdParams::new(0.1, 0.1, 0.9);
        let (a, b) = block_arrays(10.0, &prm, 1.0, 1.0);
        let q = bbt_scaled(&b, 1.0);
        let s4 = lyap4(&a, &q).unwrap();
        let sg = lyapunov_solve(&m4_to_matrix(&a), &m4_to_matrix(&q)).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                assert_relative_eq!(s4[i][j], sg[(i, j)], epsilon = 1e-10, max_relative = 1e-10);
            }
        }
    }

    #[test]
    fn white_and_correlated_j_on_scalar_example() {
        let th = 1.0 - (401f64.sqrt() - 1.0) / 200.0;
        let step = (1.0 - th) / th;
        let prm = SapdParams::new(step, step, th);
        let bd = BlockDynamics::from_spectrum(&[10.0], &prm, 1.0, 1.0).unwrap();
        assert_relative_eq!(exact_j(&bd).unwrap(), 0.15351, epsilon = 2e-5);
        assert_relative_eq!(exact_j_correlated(&bd).unwrap(), 0.17479, epsilon = 2e-5);
    }

    #[test]
    fn sgda_has_identical_white_and_correlated_j() {
        let prm = SapdParams::new(0.05, 0.05, 0.0);
        let bd = BlockDynamics::from_spectrum(&[3.0, -1.0, 7.0], &prm, 1.0, 1.0).unwrap();
        assert_relative_eq!(exact_j(&bd).unwrap(), exact_j_correlated(&bd).unwrap(), max_relative = 1e-10);
    }

    #[test]
    fn linspace_endpoints() {
        assert_eq!(linspace(0.0, 1.0, 3), vec![0.0, 0.5, 1.0]);
        assert_eq!(linspace(2.0, 4.0, 1), vec![3.0]);
    }
}
