//! SAPD iteration, its SGDA and deterministic specializations, the
//! gradient-type baselines and geometric ergodic averaging.

use std::time::Instant;

use rand::{Rng, RngCore};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{dist_sq, norm_sq};
use crate::problem::{path_rng, ExactOracle, SaddlePointProblem, SmoothnessProfile};

/// Primal step τ, dual step σ and momentum θ.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SapdParams {
    pub tau: f64,
    pub sigma: f64,
    pub theta: f64,
}

impl SapdParams {
    pub fn new(tau: f64, sigma: f64, theta: f64) -> Self {
        Self { tau, sigma, theta }
    }

    pub fn validate(self) -> Result<Self> {
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::InvalidArgument(format!("tau must be positive, got {}", self.tau)));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::InvalidArgument(format!("sigma must be positive, got {}", self.sigma)));
        }
        if !(self.theta >= 0.0 && self.theta.is_finite()) {
            return Err(Error::InvalidArgument(format!("theta must be finite and non-negative, got {}", self.theta)));
        }
        Ok(self)
    }
}

/// Current and previous iterates plus the cached dual sample.
#[derive(Clone, Debug, PartialEq)]
pub struct IterateState {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub x_prev: Vec<f64>,
    pub y_prev: Vec<f64>,
    /// ∇̃yΦ(x_{k−1}, y_{k−1}); `None` before the first step, meaning the
    /// previous point equals the current one and q̃_0 = 0.
    pub grad_y_prev: Option<Vec<f64>>,
    pub k: usize,
}

impl IterateState {
    pub fn new(x0: Vec<f64>, y0: Vec<f64>) -> Self {
        Self { x_prev: x0.clone(), y_prev: y0.clone(), x: x0, y: y0, grad_y_prev: None, k: 0 }
    }

    pub fn dist_sq_to(&self, x: &[f64], y: &[f64]) -> f64 {
        dist_sq(&self.x, x) + dist_sq(&self.y, y)
    }
}

/// One SAPD iteration. Draws exactly one dual and then one primal sample.
pub fn sapd_step<P: SaddlePointProblem + ?Sized>(
    state: &mut IterateState,
    params: &SapdParams,
    problem: &P,
    rng: &mut dyn RngCore,
) {
    let gy = problem.grad_y(&state.x, &state.y, rng);
    let (tau, sigma, theta) = (params.tau, params.sigma, params.theta);
    let w: Vec<f64> = if theta == 0.0 {
        state.y.iter().zip(&gy).map(|(y, g)| y + sigma * g).collect()
    } else {
        let prev = state.grad_y_prev.as_deref().unwrap_or(&gy);
        state
            .y
            .iter()
            .zip(&gy)
            .zip(prev)
            .map(|((y, g), gp)| y + sigma * (g + theta * (g - gp)))
            .collect()
    };
    let y_next = problem.prox_y(&w, sigma);
    let gx = problem.grad_x(&state.x, &y_next, rng);
    let v: Vec<f64> = state.x.iter().zip(&gx).map(|(x, g)| x - tau * g).collect();
    let x_next = problem.prox_x(&v, tau);
    state.x_prev = std::mem::replace(&mut state.x, x_next);
    state.y_prev = std::mem::replace(&mut state.y, y_next);
    state.grad_y_prev = Some(gy);
    state.k += 1;
}

/// Sequential stochastic gradient descent-ascent: dual ascent step, then a
/// primal descent step at the new dual point.
pub fn sgda_step<P: SaddlePointProblem + ?Sized>(
    state: &mut IterateState,
    tau: f64,
    sigma: f64,
    problem: &P,
    rng: &mut dyn RngCore,
) {
    let gy = problem.grad_y(&state.x, &state.y, rng);
    let w: Vec<f64> = state.y.iter().zip(&gy).map(|(y, g)| y + sigma * g).collect();
    let y_next = problem.prox_y(&w, sigma);
    let gx = problem.grad_x(&state.x, &y_next, rng);
    let v: Vec<f64> = state.x.iter().zip(&gx).map(|(x, g)| x - tau * g).collect();
    let x_next = problem.prox_x(&v, tau);
    state.x_prev = std::mem::replace(&mut state.x, x_next);
    state.y_prev = std::mem::replace(&mut state.y, y_next);
    state.grad_y_prev = Some(gy);
    state.k += 1;
}

/// K_N(ρ) = (1−ρ^N)/((1−ρ)ρ^{N−1}) for ρ < 1 and N for ρ = 1.
pub fn k_n(rho: f64, n: usize) -> Result<f64> {
    check_rho(rho)?;
    if n == 0 {
        return Err(Error::InvalidArgument("N must be at least 1".into()));
    }
    if rho == 1.0 {
        return Ok(n as f64);
    }
    let ln = rho.ln();
    let num = -(n as f64 * ln).exp_m1();
    Ok(num / ((1.0 - rho) * ((n - 1) as f64 * ln).exp()))
}

fn check_rho(rho: f64) -> Result<()> {
    if !(rho > 0.0 && rho <= 1.0) {
        return Err(Error::InvalidArgument(format!("rho must lie in (0, 1], got {rho}")));
    }
    Ok(())
}

/// Running average of z_1..z_N with weights ρ^{−k+1}.
#[derive(Clone, Debug)]
pub struct ErgodicAverage {
    rho: f64,
    x_bar: Vec<f64>,
    y_bar: Vec<f64>,
    weight: f64,
    // Σ_{i<k} ρ^i; its inverse is the weight share of the newest iterate.
    share_norm: f64,
    count: usize,
}

impl ErgodicAverage {
    pub fn new(rho: f64, nx: usize, ny: usize) -> Result<Self> {
        check_rho(rho)?;
        Ok(Self { rho, x_bar: vec![0.0; nx], y_bar: vec![0.0; ny], weight: 0.0, share_norm: 0.0, count: 0 })
    }

    pub fn push(&mut self, x: &[f64], y: &[f64]) {
        self.count += 1;
        self.weight = 1.0 + self.weight / self.rho;
        self.share_norm = 1.0 + self.rho * self.share_norm;
        let c = 1.0 / self.share_norm;
        self.x_bar.iter_mut().zip(x).for_each(|(b, v)| *b += c * (v - *b));
        self.y_bar.iter_mut().zip(y).for_each(|(b, v)| *b += c * (v - *b));
    }

    pub fn x(&self) -> &[f64] {
        &self.x_bar
    }

    pub fn y(&self) -> &[f64] {
        &self.y_bar
    }

    /// Accumulated weight, normalized by ρ^{N−1}; equals K_N(ρ).
    pub fn weight(&self) -> f64 {
        self.weight
    }

    pub fn count(&self) -> usize {
        self.count
    }
}

/// One trace line.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunRecord {
    pub k: usize,
    pub dist_sq: f64,
    pub gap: Option<f64>,
    pub elapsed_s: f64,
    pub seed: u64,
}

/// Run length, averaging rate and trace options.
#[derive(Clone, Debug)]
pub struct RunConfig {
    pub iters: usize,
    pub weighting_rho: f64,
    pub seed: u64,
    /// Record every `record_every`-th iterate (and the last one); 0 disables.
    pub record_every: usize,
    pub record_gap: bool,
}

impl RunConfig {
    pub fn new(iters: usize, seed: u64) -> Self {
        Self { iters, weighting_rho: 1.0, seed, record_every: 1, record_gap: false }
    }
}

/// Output of a SAPD run.
#[derive(Clone, Debug)]
pub struct SapdRun {
    pub x_bar: Vec<f64>,
    pub y_bar: Vec<f64>,
    pub weight: f64,
    pub state: IterateState,
    pub trace: Vec<RunRecord>,
}

struct Recorder<'a> {
    reference: Option<(&'a [f64], &'a [f64])>,
    every: usize,
    gap: bool,
    seed: u64,
    start: Instant,
    trace: Vec<RunRecord>,
}

impl<'a> Recorder<'a> {
    fn new(reference: Option<(&'a [f64], &'a [f64])>, cfg: &RunConfig) -> Self {
        Self { reference, every: cfg.record_every, gap: cfg.record_gap, seed: cfg.seed, start: Instant::now(), trace: Vec::new() }
    }

    fn observe<P: SaddlePointProblem + ?Sized>(&mut self, k: usize, last: bool, x: &[f64], y: &[f64], problem: &P) {
        if self.every == 0 || (k % self.every != 0 && !last) {
            return;
        }
        let Some((xr, yr)) = self.reference else { return };
        let gap = if self.gap { problem.gap(x, y) } else { None };
        self.trace.push(RunRecord {
            k,
            dist_sq: dist_sq(x, xr) + dist_sq(y, yr),
            gap,
            elapsed_s: self.start.elapsed().as_secs_f64(),
            seed: self.seed,
        });
    }
}

fn check_start<P: SaddlePointProblem + ?Sized>(problem: &P, x0: &[f64], y0: &[f64]) -> Result<()> {
    let (nx, ny) = problem.dims();
    if x0.len() != nx || y0.len() != ny {
        return Err(Error::InvalidArgument(format!(
            "initial point has dimensions ({}, {}), problem expects ({nx}, {ny})",
            x0.len(),
            y0.len()
        )));
    }
    Ok(())
}

fn run_with<P, F>(
    problem: &P,
    x0: &[f64],
    y0: &[f64],
    cfg: &RunConfig,
    reference: Option<(&[f64], &[f64])>,
    mut step: F,
) -> Result<SapdRun>
where
    P: SaddlePointProblem + ?Sized,
    F: FnMut(&mut IterateState, &mut dyn RngCore),
{
    if cfg.iters == 0 {
        return Err(Error::InvalidArgument("iteration count must be at least 1".into()));
    }
    check_start(problem, x0, y0)?;
    let (nx, ny) = problem.dims();
    let mut avg = ErgodicAverage::new(cfg.weighting_rho, nx, ny)?;
    let mut rng = path_rng(cfg.seed);
    let mut state = IterateState::new(x0.to_vec(), y0.to_vec());
    let mut rec = Recorder::new(reference, cfg);
    rec.observe(0, false, &state.x, &state.y, problem);
    for k in 1..=cfg.iters {
        step(&mut state, &mut rng);
        avg.push(&state.x, &state.y);
        rec.observe(k, k == cfg.iters, &state.x, &state.y, problem);
    }
    Ok(SapdRun { x_bar: avg.x_bar, y_bar: avg.y_bar, weight: avg.weight, state, trace: rec.trace })
}

/// Runs SAPD for `cfg.iters` steps from (x0, y0).
pub fn run_sapd<P: SaddlePointProblem + ?Sized>(
    problem: &P,
    params: &SapdParams,
    x0: &[f64],
    y0: &[f64],
    cfg: &RunConfig,
    reference: Option<(&[f64], &[f64])>,
) -> Result<SapdRun> {
    let params = params.validate()?;
    run_with(problem, x0, y0, cfg, reference, |s, rng| sapd_step(s, &params, problem, rng))
}

/// Runs SGDA with steps (τ, σ).
pub fn run_sgda<P: SaddlePointProblem + ?Sized>(
    problem: &P,
    tau: f64,
    sigma: f64,
    x0: &[f64],
    y0: &[f64],
    cfg: &RunConfig,
    reference: Option<(&[f64], &[f64])>,
) -> Result<SapdRun> {
    SapdParams::new(tau, sigma, 0.0).validate()?;
    run_with(problem, x0, y0, cfg, reference, |s, rng| sgda_step(s, tau, sigma, problem, rng))
}

/// Deterministic APD with exact oracles until ‖z_{k+1} − z_k‖ ≤ tol.
///
/// Returns the last iterate and the number of steps taken.
pub fn solve_reference<P: SaddlePointProblem + ?Sized>(
    problem: &P,
    params: &SapdParams,
    x0: &[f64],
    y0: &[f64],
    tol: f64,
    max_iters: usize,
) -> Result<(Vec<f64>, Vec<f64>, usize)> {
    let params = params.validate()?;
    check_start(problem, x0, y0)?;
    let exact = ExactOracle::new(problem)?;
    let mut rng = path_rng(0);
    let mut state = IterateState::new(x0.to_vec(), y0.to_vec());
    for _ in 0..max_iters {
        sapd_step(&mut state, &params, &exact, &mut rng);
        let step = dist_sq(&state.x, &state.x_prev) + dist_sq(&state.y, &state.y_prev);
        if step.sqrt() <= tol {
            return Ok((state.x, state.y, state.k));
        }
    }
    Err(Error::NoConvergence("deterministic reference solve"))
}

/// Gradient-type methods used for comparison.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BaselineKind {
    /// Stochastic optimistic gradient descent-ascent.
    Sogda,
    /// Stochastic mirror-prox (Euclidean extragradient).
    Smp,
    /// Stochastic mirror descent over Euclidean balls.
    Smd,
}

impl BaselineKind {
    pub fn name(&self) -> &'static str {
        match self {
            BaselineKind::Sogda => "S-OGDA",
            BaselineKind::Smp => "SMP",
            BaselineKind::Smd => "SMD",
        }
    }
}

/// Ball radius and squared-gradient bound needed by SMD.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SmdSetup {
    pub radius: f64,
    pub g_bound: f64,
}

/// L = max{μx, μy, L_xy, L_yx, L_xx + μx}, the step-size constant of the baselines.
pub fn baseline_lipschitz(p: &SmoothnessProfile) -> f64 {
    [p.mu_x, p.mu_y, p.l_xy, p.l_yx, p.l_xx + p.mu_x].into_iter().fold(0.0, f64::max)
}

pub fn sogda_step_size(p: &SmoothnessProfile) -> f64 {
    1.0 / (8.0 * baseline_lipschitz(p))
}

pub fn smp_step_size(p: &SmoothnessProfile) -> f64 {
    1.0 / (3f64.sqrt() * baseline_lipschitz(p))
}

pub fn smd_step_size(g_bound: f64, horizon: usize) -> f64 {
    2.0 / (5.0 * g_bound * horizon as f64).sqrt()
}

/// Stochastic monotone operator F(z) = (∇x L, −∇y L).
fn field<P: SaddlePointProblem + ?Sized>(problem: &P, x: &[f64], y: &[f64], rng: &mut dyn RngCore) -> (Vec<f64>, Vec<f64>) {
    let mut gx = problem.grad_x(x, y, rng);
    problem.reg_grad_x(x).iter().zip(gx.iter_mut()).for_each(|(r, g)| *g += r);
    let gy = problem.grad_y(x, y, rng);
    let ry = problem.reg_grad_y(y);
    let fy = gy.iter().zip(&ry).map(|(g, r)| r - g).collect();
    (gx, fy)
}

fn axpy(z: &[f64], a: f64, d: &[f64]) -> Vec<f64> {
    z.iter().zip(d).map(|(z, d)| z + a * d).collect()
}

/// Estimates G as twice the largest squared stochastic field norm over
/// `samples` points drawn uniformly from the balls of radius `radius`.
pub fn estimate_smd_g<P: SaddlePointProblem + ?Sized>(problem: &P, radius: f64, samples: usize, seed: u64) -> f64 {
    let (nx, ny) = problem.dims();
    let mut rng = path_rng(seed);
    let uniform_ball = |n: usize, rng: &mut crate::problem::PathRng| -> Vec<f64> {
        let g: Vec<f64> = (0..n).map(|_| StandardNormal.sample(rng)).collect();
        let norm = norm_sq(&g).sqrt().max(f64::MIN_POSITIVE);
        let r = radius * rng.random::<f64>().powf(1.0 / n as f64);
        g.into_iter().map(|v| v * r / norm).collect()
    };
    let mut worst: f64 = 0.0;
    for _ in 0..samples {
        let x = problem.project_x(&uniform_ball(nx, &mut rng));
        let y = problem.project_y(&uniform_ball(ny, &mut rng));
        let (fx, fy) = field(problem, &x, &y, &mut rng);
        worst = worst.max(norm_sq(&fx) + norm_sq(&fy));
    }
    2.0 * worst
}

/// Runs a baseline for `cfg.iters` steps and returns the last-iterate trace.
pub fn run_baseline<P: SaddlePointProblem + ?Sized>(
    kind: BaselineKind,
    problem: &P,
    x0: &[f64],
    y0: &[f64],
    cfg: &RunConfig,
    smd: Option<SmdSetup>,
    reference: Option<(&[f64], &[f64])>,
) -> Result<SapdRun> {
    let p = *problem.profile();
    match kind {
        BaselineKind::Sogda => {
            let eta = sogda_step_size(&p);
            let mut prev: Option<(Vec<f64>, Vec<f64>)> = None;
            run_with(problem, x0, y0, cfg, reference, |s, rng| {
                let (gx, gy) = field(problem, &s.x, &s.y, rng);
                let (px, py) = prev.take().unwrap_or_else(|| (gx.clone(), gy.clone()));
                let dx: Vec<f64> = gx.iter().zip(&px).map(|(g, q)| 2.0 * g - q).collect();
                let dy: Vec<f64> = gy.iter().zip(&py).map(|(g, q)| 2.0 * g - q).collect();
                let xn = problem.project_x(&axpy(&s.x, -eta, &dx));
                let yn = problem.project_y(&axpy(&s.y, -eta, &dy));
                advance(s, xn, yn);
                prev = Some((gx, gy));
            })
        }
        BaselineKind::Smp => {
            let gamma = smp_step_size(&p);
            run_with(problem, x0, y0, cfg, reference, |s, rng| {
                let (gx, gy) = field(problem, &s.x, &s.y, rng);
                let xh = problem.project_x(&axpy(&s.x, -gamma, &gx));
                let yh = problem.project_y(&axpy(&s.y, -gamma, &gy));
                let (hx, hy) = field(problem, &xh, &yh, rng);
                let xn = problem.project_x(&axpy(&s.x, -gamma, &hx));
                let yn = problem.project_y(&axpy(&s.y, -gamma, &hy));
                advance(s, xn, yn);
            })
        }
        BaselineKind::Smd => {
            let setup = smd.ok_or_else(|| Error::InvalidArgument("SMD needs a domain radius and a G estimate".into()))?;
            if !(setup.radius > 0.0 && setup.g_bound > 0.0) {
                return Err(Error::InvalidArgument("SMD radius and G must be positive".into()));
            }
            let gamma = smd_step_size(setup.g_bound, cfg.iters);
            let clip = |v: Vec<f64>| crate::projection::project_ball(&v, None, setup.radius).expect("positive radius");
            run_with(problem, x0, y0, cfg, reference, |s, rng| {
                let (gx, gy) = field(problem, &s.x, &s.y, rng);
                let xn = clip(problem.project_x(&axpy(&s.x, -gamma, &gx)));
                let yn = clip(problem.project_y(&axpy(&s.y, -gamma, &gy)));
                advance(s, xn, yn);
            })
        }
    }
}

fn advance(s: &mut IterateState, x: Vec<f64>, y: Vec<f64>) {
    s.x_prev = std::mem::replace(&mut s.x, x);
    s.y_prev = std::mem::replace(&mut s.y, y);
    s.k += 1;
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Matrix;
    use crate::problem::QuadraticBilinearProblem;
    use approx::assert_relative_eq;

    #[test]
    fn k_n_values() {
        assert_eq!(k_n(1.0, 7).unwrap(), 7.0);
        assert_relative_eq!(k_n(0.5, 2).unwrap(), 3.0, epsilon = 1e-15);
        assert_relative_eq!(k_n(0.3, 1).unwrap(), 1.0, epsilon = 1e-15);
        assert!(k_n(0.0, 3).is_err());
        assert!(k_n(1.1, 3).is_err());
    }

    #[test]
    fn baseline_step_sizes() {
        let p = SmoothnessProfile::bilinear(1.0, 10.0);
        assert_relative_eq!(sogda_step_size(&p), 0.0125, epsilon = 1e-15);
        assert_relative_eq!(smd_step_size(100.0, 10_000), 2.0 / 5e6f64.sqrt(), epsilon = 1e-15);
        assert_relative_eq!(smd_step_size(100.0, 10_000), 8.944e-4, epsilon = 1e-6);
    }

    #[test]
    fn zero_problem_keeps_origin() {
        let q = QuadraticBilinearProblem::new(Matrix::zeros(2, 2), 1.0, 1.0, 0.0).unwrap();
        let mut s = IterateState::new(vec![0.0; 2], vec![0.0; 2]);
        let mut rng = path_rng(1);
        sapd_step(&mut s, &SapdParams::new(0.1, 0.1, 0.5), &q, &mut rng);
        assert_eq!(s.x, vec![0.0; 2]);
        assert_eq!(s.y, vec![0.0; 2]);
    }

    #[test]
    fn single_iterate_average_is_the_iterate() {
        let mut avg = ErgodicAverage::new(0.7, 1, 1).unwrap();
        avg.push(&[3.0], &[-2.0]);
        assert_eq!(avg.x(), &[3.0]);
        assert_eq!(avg.y(), &[-2.0]);
        assert_eq!(avg.weight(), 1.0);
    }

    #[test]
    fn smd_requires_setup() {
        let q = QuadraticBilinearProblem::new(Matrix::identity(2), 1.0, 1.0, 0.0).unwrap();
        let cfg = RunConfig::new(3, 0);
        let err = run_baseline(BaselineKind::Smd, &q, &[0.0; 2], &[0.0; 2], &cfg, None, None);
        assert!(err.is_err());
    }
}
