//! Saddle-point problem abstraction and the quadratic problem families.
//!
//! A problem is `min_x max_y f(x) + Φ(x,y) − g(y)`. Solvers see it through
//! stochastic gradient oracles for Φ, proximal maps for f and g, and the
//! block smoothness constants.

use rand::RngCore;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{self, dot, jacobi_eigen, norm_sq, Matrix};
use crate::projection::project_ball;

/// Per-path random stream. Same seed, same noise sequence.
pub type PathRng = ChaCha8Rng;

pub fn path_rng(seed: u64) -> PathRng {
    PathRng::seed_from_u64(seed)
}

/// Strong convexity/concavity moduli and block Lipschitz constants.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SmoothnessProfile {
    pub mu_x: f64,
    pub mu_y: f64,
    pub l_xx: f64,
    pub l_xy: f64,
    pub l_yx: f64,
    pub l_yy: f64,
}

impl SmoothnessProfile {
    pub fn new(mu_x: f64, mu_y: f64, l_xx: f64, l_xy: f64, l_yx: f64, l_yy: f64) -> Self {
        Self { mu_x, mu_y, l_xx, l_xy, l_yx, l_yy }
    }

    /// Bilinear coupling with ‖K‖ = `l` and equal moduli.
    pub fn bilinear(mu: f64, l: f64) -> Self {
        Self::new(mu, mu, 0.0, l, l, 0.0)
    }

    pub fn validate(self) -> Result<Self> {
        let fields = [
            ("mu_x", self.mu_x),
            ("mu_y", self.mu_y),
            ("L_xx", self.l_xx),
            ("L_xy", self.l_xy),
            ("L_yx", self.l_yx),
            ("L_yy", self.l_yy),
        ];
        for (name, v) in fields {
            if !v.is_finite() {
                return Err(Error::InvalidProfile { field: name, reason: "must be finite".into() });
            }
            if v < 0.0 {
                return Err(Error::InvalidProfile { field: name, reason: format!("must be non-negative, got {v}") });
            }
        }
        if self.l_yx == 0.0 {
            return Err(Error::InvalidProfile { field: "L_yx", reason: "must be positive".into() });
        }
        if self.l_xy == 0.0 {
            return Err(Error::InvalidProfile { field: "L_xy", reason: "must be positive".into() });
        }
        Ok(self)
    }

    pub fn is_strongly_convex_concave(&self) -> bool {
        self.mu_x > 0.0 && self.mu_y > 0.0
    }
}

/// Bounds on the oracle noise variance.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseProfile {
    pub delta_x_sq: f64,
    pub delta_y_sq: f64,
}

impl NoiseProfile {
    pub fn isotropic(delta: f64) -> Self {
        Self { delta_x_sq: delta * delta, delta_y_sq: delta * delta }
    }

    pub fn validate(self) -> Result<Self> {
        for (name, v) in [("delta_x_sq", self.delta_x_sq), ("delta_y_sq", self.delta_y_sq)] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::InvalidArgument(format!("{name} must be finite and non-negative, got {v}")));
            }
        }
        Ok(self)
    }
}

/// Lipschitz constants of the best-response maps x*(y) and y*(x).
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ImplicitLipschitz {
    pub l_xstar: f64,
    pub l_ystar: f64,
}

pub fn implicit_lipschitz(p: &SmoothnessProfile) -> Result<ImplicitLipschitz> {
    if p.mu_x <= 0.0 || p.mu_y <= 0.0 {
        return Err(Error::InvalidArgument("best-response constants need mu_x, mu_y > 0".into()));
    }
    let kxy = p.l_xy / p.mu_x;
    let kyx = p.l_yx / p.mu_y;
    Ok(ImplicitLipschitz { l_xstar: (2.0 * kxy * kxy + 1.0).sqrt(), l_ystar: (2.0 * kyx * kyx + 1.0).sqrt() })
}

/// Oracle interface used by every solver.
pub trait SaddlePointProblem: Sync {
    fn dims(&self) -> (usize, usize);
    fn profile(&self) -> &SmoothnessProfile;
    fn noise(&self) -> NoiseProfile;

    /// Unbiased estimate of ∇xΦ(x, y).
    fn grad_x(&self, x: &[f64], y: &[f64], rng: &mut dyn RngCore) -> Vec<f64>;
    /// Unbiased estimate of ∇yΦ(x, y).
    fn grad_y(&self, x: &[f64], y: &[f64], rng: &mut dyn RngCore) -> Vec<f64>;

    fn exact_grad_x(&self, _x: &[f64], _y: &[f64]) -> Option<Vec<f64>> {
        None
    }
    fn exact_grad_y(&self, _x: &[f64], _y: &[f64]) -> Option<Vec<f64>> {
        None
    }

    /// argmin_u f(u) + ‖u − v‖²/(2τ).
    fn prox_x(&self, v: &[f64], tau: f64) -> Vec<f64>;
    /// argmin_u g(u) + ‖u − w‖²/(2σ).
    fn prox_y(&self, w: &[f64], sigma: f64) -> Vec<f64>;

    /// Gradient of the smooth part of f. Gradient-type baselines use it.
    fn reg_grad_x(&self, x: &[f64]) -> Vec<f64> {
        vec![0.0; x.len()]
    }
    /// Gradient of the smooth part of g.
    fn reg_grad_y(&self, y: &[f64]) -> Vec<f64> {
        vec![0.0; y.len()]
    }
    /// Projection onto dom f.
    fn project_x(&self, v: &[f64]) -> Vec<f64> {
        v.to_vec()
    }
    /// Projection onto dom g.
    fn project_y(&self, w: &[f64]) -> Vec<f64> {
        w.to_vec()
    }

    /// Known saddle point, if any.
    fn saddle_point(&self) -> Option<(Vec<f64>, Vec<f64>)> {
        None
    }
    /// Closed-form gap sup_y L(x, ·) − inf_x L(·, y), if available.
    fn gap(&self, _x: &[f64], _y: &[f64]) -> Option<f64> {
        None
    }
}

/// Adapter replacing the stochastic oracles by the exact ones.
pub struct ExactOracle<'a, P: SaddlePointProblem + ?Sized> {
    inner: &'a P,
}

impl<'a, P: SaddlePointProblem + ?Sized> ExactOracle<'a, P> {
    pub fn new(inner: &'a P) -> Result<Self> {
        let (nx, ny) = inner.dims();
        let (x, y) = (vec![0.0; nx], vec![0.0; ny]);
        if inner.exact_grad_x(&x, &y).is_none() || inner.exact_grad_y(&x, &y).is_none() {
            return Err(Error::InvalidArgument("problem has no exact gradient oracle".into()));
        }
        Ok(Self { inner })
    }
}

impl<P: SaddlePointProblem + ?Sized> SaddlePointProblem for ExactOracle<'_, P> {
    fn dims(&self) -> (usize, usize) {
        self.inner.dims()
    }
    fn profile(&self) -> &SmoothnessProfile {
        self.inner.profile()
    }
    fn noise(&self) -> NoiseProfile {
        NoiseProfile::default()
    }
    fn grad_x(&self, x: &[f64], y: &[f64], _rng: &mut dyn RngCore) -> Vec<f64> {
        self.inner.exact_grad_x(x, y).expect("checked at construction")
    }
    fn grad_y(&self, x: &[f64], y: &[f64], _rng: &mut dyn RngCore) -> Vec<f64> {
        self.inner.exact_grad_y(x, y).expect("checked at construction")
    }
    fn exact_grad_x(&self, x: &[f64], y: &[f64]) -> Option<Vec<f64>> {
        self.inner.exact_grad_x(x, y)
    }
    fn exact_grad_y(&self, x: &[f64], y: &[f64]) -> Option<Vec<f64>> {
        self.inner.exact_grad_y(x, y)
    }
    fn prox_x(&self, v: &[f64], tau: f64) -> Vec<f64> {
        self.inner.prox_x(v, tau)
    }
    fn prox_y(&self, w: &[f64], sigma: f64) -> Vec<f64> {
        self.inner.prox_y(w, sigma)
    }
    fn reg_grad_x(&self, x: &[f64]) -> Vec<f64> {
        self.inner.reg_grad_x(x)
    }
    fn reg_grad_y(&self, y: &[f64]) -> Vec<f64> {
        self.inner.reg_grad_y(y)
    }
    fn project_x(&self, v: &[f64]) -> Vec<f64> {
        self.inner.project_x(v)
    }
    fn project_y(&self, w: &[f64]) -> Vec<f64> {
        self.inner.project_y(w)
    }
    fn saddle_point(&self) -> Option<(Vec<f64>, Vec<f64>)> {
        self.inner.saddle_point()
    }
    fn gap(&self, x: &[f64], y: &[f64]) -> Option<f64> {
        self.inner.gap(x, y)
    }
}

/// JSON description of a random quadratic instance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadraticSpec {
    pub d: usize,
    pub spectral_norm: f64,
    pub mu_x: f64,
    pub mu_y: f64,
    pub delta: f64,
    pub seed: u64,
}

impl QuadraticSpec {
    /// The benchmark instance: d = 30, ‖K‖ = 10, unit moduli.
    pub fn benchmark(delta: f64, seed: u64) -> Self {
        Self { d: 30, spectral_norm: 10.0, mu_x: 1.0, mu_y: 1.0, delta, seed }
    }
}

/// L(x,y) = (μx/2)‖x‖² + ⟨Kx, y⟩ − (μy/2)‖y‖² with symmetric K and
/// isotropic Gaussian oracle noise of covariance (δ²/d)·I.
#[derive(Clone, Debug)]
pub struct QuadraticBilinearProblem {
    k: Matrix,
    mu_x: f64,
    mu_y: f64,
    delta: f64,
    profile: SmoothnessProfile,
}

impl QuadraticBilinearProblem {
    pub fn new(k: Matrix, mu_x: f64, mu_y: f64, delta: f64) -> Result<Self> {
        if !k.is_square() {
            return Err(Error::InvalidArgument("K must be square".into()));
        }
        if !k.is_finite() {
            return Err(Error::NonFinite("K"));
        }
        let d = k.rows();
        for i in 0..d {
            for j in i + 1..d {
                if k[(i, j)] != k[(j, i)] {
                    return Err(Error::InvalidArgument("K must be symmetric".into()));
                }
            }
        }
        if !(mu_x > 0.0 && mu_y > 0.0) {
            return Err(Error::InvalidArgument("mu_x and mu_y must be positive".into()));
        }
        if !(delta >= 0.0 && delta.is_finite()) {
            return Err(Error::InvalidArgument("delta must be finite and non-negative".into()));
        }
        let norm = numerics::spectral_norm(&k);
        let profile = SmoothnessProfile::new(mu_x, mu_y, 0.0, norm, norm, 0.0);
        Ok(Self { k, mu_x, mu_y, delta, profile })
    }

    /// K = Q diag(λ) Qᵀ with Q, λ taken from a symmetrized Gaussian matrix
    /// and λ rescaled so that max |λ| equals the requested norm.
    pub fn from_spec(spec: &QuadraticSpec) -> Result<Self> {
        if spec.d == 0 {
            return Err(Error::InvalidArgument("d must be positive".into()));
        }
        if !(spec.spectral_norm > 0.0) {
            return Err(Error::InvalidArgument("spectral_norm must be positive".into()));
        }
        let d = spec.d;
        let mut rng = path_rng(spec.seed);
        let g = Matrix::from_fn(d, d, |_, _| StandardNormal.sample(&mut rng));
        let sym = g.add(&g.transpose()).scale(0.5);
        let (vals, q) = jacobi_eigen(&sym)?;
        let top = vals.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        let lam: Vec<f64> = vals.iter().map(|v| v * spec.spectral_norm / top).collect();
        let mut k = q.matmul(&Matrix::diag(&lam)).matmul(&q.transpose());
        for i in 0..d {
            for j in i + 1..d {
                let v = 0.5 * (k[(i, j)] + k[(j, i)]);
                k[(i, j)] = v;
                k[(j, i)] = v;
            }
        }
        let mut out = Self::new(k, spec.mu_x, spec.mu_y, spec.delta)?;
        // The construction fixes ‖K‖ exactly; avoid power-iteration drift.
        out.profile.l_xy = spec.spectral_norm;
        out.profile.l_yx = spec.spectral_norm;
        Ok(out)
    }

    pub fn k(&self) -> &Matrix {
        &self.k
    }

    pub fn dim(&self) -> usize {
        self.k.rows()
    }

    pub fn mu_x(&self) -> f64 {
        self.mu_x
    }

    pub fn mu_y(&self) -> f64 {
        self.mu_y
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn with_delta(&self, delta: f64) -> Self {
        Self { delta, ..self.clone() }
    }

    fn noisy(&self, mut g: Vec<f64>, rng: &mut dyn RngCore) -> Vec<f64> {
        if self.delta > 0.0 {
            let s = self.delta / (self.dim() as f64).sqrt();
            for v in g.iter_mut() {
                let z: f64 = StandardNormal.sample(rng);
                *v += s * z;
            }
        }
        g
    }
}

impl SaddlePointProblem for QuadraticBilinearProblem {
    fn dims(&self) -> (usize, usize) {
        (self.dim(), self.dim())
    }
    fn profile(&self) -> &SmoothnessProfile {
        &self.profile
    }
    fn noise(&self) -> NoiseProfile {
        NoiseProfile::isotropic(self.delta)
    }
    fn grad_x(&self, x: &[f64], y: &[f64], rng: &mut dyn RngCore) -> Vec<f64> {
        let g = self.k.tr_mul_vec(y);
        let _ = x;
        self.noisy(g, rng)
    }
    fn grad_y(&self, x: &[f64], _y: &[f64], rng: &mut dyn RngCore) -> Vec<f64> {
        self.noisy(self.k.mul_vec(x), rng)
    }
    fn exact_grad_x(&self, _x: &[f64], y: &[f64]) -> Option<Vec<f64>> {
        Some(self.k.tr_mul_vec(y))
    }
    fn exact_grad_y(&self, x: &[f64], _y: &[f64]) -> Option<Vec<f64>> {
        Some(self.k.mul_vec(x))
    }
    fn prox_x(&self, v: &[f64], tau: f64) -> Vec<f64> {
        let c = 1.0 / (1.0 + tau * self.mu_x);
        v.iter().map(|a| a * c).collect()
    }
    fn prox_y(&self, w: &[f64], sigma: f64) -> Vec<f64> {
        let c = 1.0 / (1.0 + sigma * self.mu_y);
        w.iter().map(|a| a * c).collect()
    }
    fn reg_grad_x(&self, x: &[f64]) -> Vec<f64> {
        x.iter().map(|a| a * self.mu_x).collect()
    }
    fn reg_grad_y(&self, y: &[f64]) -> Vec<f64> {
        y.iter().map(|a| a * self.mu_y).collect()
    }
    fn saddle_point(&self) -> Option<(Vec<f64>, Vec<f64>)> {
        Some((vec![0.0; self.dim()], vec![0.0; self.dim()]))
    }
    fn gap(&self, x: &[f64], y: &[f64]) -> Option<f64> {
        let kx = self.k.mul_vec(x);
        let kty = self.k.tr_mul_vec(y);
        Some(
            0.5 * self.mu_x * norm_sq(x)
                + norm_sq(&kx) / (2.0 * self.mu_y)
                + 0.5 * self.mu_y * norm_sq(y)
                + norm_sq(&kty) / (2.0 * self.mu_x),
        )
    }
}

/// Merely convex-concave instance L(x,y) = ⟨Kx, y⟩ + cᵀx − bᵀy over
/// Euclidean balls of radius `radius` in both blocks.
#[derive(Clone, Debug)]
pub struct BilinearBallProblem {
    k: Matrix,
    c: Vec<f64>,
    b: Vec<f64>,
    radius: f64,
    delta: f64,
    profile: SmoothnessProfile,
}

impl BilinearBallProblem {
    pub fn new(k: Matrix, c: Vec<f64>, b: Vec<f64>, radius: f64, delta: f64) -> Result<Self> {
        if c.len() != k.cols() || b.len() != k.rows() {
            return Err(Error::InvalidArgument("linear terms do not match K".into()));
        }
        if !(radius > 0.0) {
            return Err(Error::InvalidArgument("radius must be positive".into()));
        }
        let norm = numerics::spectral_norm(&k);
        let profile = SmoothnessProfile::new(0.0, 0.0, 0.0, norm, norm, 0.0);
        Ok(Self { k, c, b, radius, delta, profile })
    }

    /// Random instance with Gaussian K, c, b drawn from `seed`.
    pub fn random(nx: usize, ny: usize, radius: f64, seed: u64) -> Result<Self> {
        let mut rng = path_rng(seed);
        let k = Matrix::from_fn(ny, nx, |_, _| StandardNormal.sample(&mut rng));
        let c = (0..nx).map(|_| StandardNormal.sample(&mut rng)).collect();
        let b = (0..ny).map(|_| StandardNormal.sample(&mut rng)).collect();
        Self::new(k, c, b, radius, 0.0)
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    /// Squared diameter of either ball.
    pub fn diameter_sq(&self) -> f64 {
        4.0 * self.radius * self.radius
    }

    fn noisy(&self, mut g: Vec<f64>, rng: &mut dyn RngCore) -> Vec<f64> {
        if self.delta > 0.0 {
            let s = self.delta / (g.len() as f64).sqrt();
            for v in g.iter_mut() {
                let z: f64 = StandardNormal.sample(rng);
                *v += s * z;
            }
        }
        g
    }
}

impl SaddlePointProblem for BilinearBallProblem {
    fn dims(&self) -> (usize, usize) {
        (self.k.cols(), self.k.rows())
    }
    fn profile(&self) -> &SmoothnessProfile {
        &self.profile
    }
    fn noise(&self) -> NoiseProfile {
        NoiseProfile::isotropic(self.delta)
    }
    fn grad_x(&self, x: &[f64], y: &[f64], rng: &mut dyn RngCore) -> Vec<f64> {
        self.noisy(self.exact_grad_x(x, y).expect("exact"), rng)
    }
    fn grad_y(&self, x: &[f64], y: &[f64], rng: &mut dyn RngCore) -> Vec<f64> {
        self.noisy(self.exact_grad_y(x, y).expect("exact"), rng)
    }
    fn exact_grad_x(&self, _x: &[f64], y: &[f64]) -> Option<Vec<f64>> {
        let mut g = self.k.tr_mul_vec(y);
        g.iter_mut().zip(&self.c).for_each(|(a, b)| *a += b);
        Some(g)
    }
    fn exact_grad_y(&self, x: &[f64], _y: &[f64]) -> Option<Vec<f64>> {
        let mut g = self.k.mul_vec(x);
        g.iter_mut().zip(&self.b).for_each(|(a, b)| *a -= b);
        Some(g)
    }
    fn prox_x(&self, v: &[f64], _tau: f64) -> Vec<f64> {
        self.project_x(v)
    }
    fn prox_y(&self, w: &[f64], _sigma: f64) -> Vec<f64> {
        self.project_y(w)
    }
    fn project_x(&self, v: &[f64]) -> Vec<f64> {
        project_ball(v, None, self.radius).expect("radius checked")
    }
    fn project_y(&self, w: &[f64]) -> Vec<f64> {
        project_ball(w, None, self.radius).expect("radius checked")
    }
    fn gap(&self, x: &[f64], y: &[f64]) -> Option<f64> {
        let kx_b = self.exact_grad_y(x, y)?;
        let kty_c = self.exact_grad_x(x, y)?;
        Some(
            dot(&self.c, x)
                + self.radius * norm_sq(&kx_b).sqrt()
                + self.radius * norm_sq(&kty_c).sqrt()
                + dot(&self.b, y),
        )
    }
}
