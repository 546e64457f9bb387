//! Euclidean projections onto the simplex, the simplex cut by a ball around
//! the uniform distribution, and plain norm balls.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{dist_sq, norm_sq};

/// Slack used when testing the support conditions of the sorted scan.
const SUPPORT_TOL: f64 = 1e-12;
const ORACLE_ENUM_MAX: usize = 15;
const DYKSTRA_MAX_ITERS: usize = 200_000;

/// The set {p ≥ 0, 1ᵀp = 1, ‖p − 1/n‖ ≤ R}.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimplexBallSpec {
    pub n: usize,
    pub radius: f64,
}

impl SimplexBallSpec {
    pub fn new(n: usize, radius: f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidArgument("simplex dimension must be positive".into()));
        }
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::InvalidArgument(format!("ball radius must be positive, got {radius}")));
        }
        Ok(Self { n, radius })
    }

    /// Radius of the equivalent ball around the origin: R̄² = R² + 1/n.
    pub fn r_bar_sq(&self) -> f64 {
        self.radius * self.radius + 1.0 / self.n as f64
    }

    pub fn contains(&self, p: &[f64], tol: f64) -> bool {
        p.len() == self.n
            && p.iter().all(|&v| v >= -tol)
            && (p.iter().sum::<f64>() - 1.0).abs() <= tol
            && norm_sq(p) <= self.r_bar_sq() + tol
    }
}

fn sorted_desc(v: &[f64]) -> (Vec<usize>, Vec<f64>) {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    // Stable sort keeps ties in index order.
    idx.sort_by(|&a, &b| v[b].total_cmp(&v[a]));
    let u = idx.iter().map(|&i| v[i]).collect();
    (idx, u)
}

/// Projection onto the probability simplex by the sorted-threshold rule.
pub fn project_simplex(v: &[f64]) -> Vec<f64> {
    if v.is_empty() {
        return Vec::new();
    }
    let (_, u) = sorted_desc(v);
    let mut s = 0.0;
    let mut q = 0.0;
    for (k, &uk) in u.iter().enumerate() {
        s += uk;
        let cand = (s - 1.0) / (k + 1) as f64;
        if cand < uk {
            q = cand;
        } else {
            break;
        }
    }
    v.iter().map(|&vi| (vi - q).max(0.0)).collect()
}

/// Projection onto the simplex intersected with the ball of `spec`.
pub fn project_simplex_ball(pbar: &[f64], spec: &SimplexBallSpec) -> Result<Vec<f64>> {
    if pbar.len() != spec.n {
        return Err(Error::InvalidArgument(format!("expected length {}, got {}", spec.n, pbar.len())));
    }
    if pbar.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("projection input"));
    }
    let r2 = spec.r_bar_sq();
    let ps = project_simplex(pbar);
    if norm_sq(&ps) <= r2 {
        return Ok(ps);
    }
    let (idx, u) = sorted_desc(pbar);
    let n = spec.n;
    let mut s1 = 0.0;
    let mut s2 = 0.0;
    for k in 1..=n {
        s1 += u[k - 1];
        s2 += u[k - 1] * u[k - 1];
        let kf = k as f64;
        let num = r2 - 1.0 / kf;
        let den = s2 - s1 * s1 / kf;
        if num < 0.0 || den <= 0.0 {
            continue;
        }
        let gamma = (num / den).sqrt();
        if !(gamma > 0.0 && gamma < 1.0 + SUPPORT_TOL) {
            continue;
        }
        let q = (gamma * s1 - 1.0) / kf;
        let upper_ok = q < gamma * u[k - 1] + SUPPORT_TOL;
        let lower_ok = k == n || gamma * u[k] <= q + SUPPORT_TOL;
        if upper_ok && lower_ok {
            let mut p = vec![0.0; n];
            for i in 0..k {
                p[idx[i]] = (gamma * u[i] - q).max(0.0);
            }
            return Ok(p);
        }
    }
    log::warn!("sorted scan found no support size, falling back to the QP oracle (n = {n})");
    Ok(qp_projection_oracle(pbar, spec))
}

/// Radial clipping onto {‖v − center‖ ≤ r}; `None` centers at the origin.
pub fn project_ball(v: &[f64], center: Option<&[f64]>, r: f64) -> Result<Vec<f64>> {
    if !(r > 0.0) {
        return Err(Error::InvalidArgument(format!("ball radius must be positive, got {r}")));
    }
    let diff: Vec<f64> = match center {
        Some(c) => v.iter().zip(c).map(|(a, b)| a - b).collect(),
        None => v.to_vec(),
    };
    let nrm = norm_sq(&diff).sqrt();
    if nrm <= r {
        return Ok(v.to_vec());
    }
    let s = r / nrm;
    Ok(match center {
        Some(c) => diff.iter().zip(c).map(|(d, b)| b + s * d).collect(),
        None => diff.iter().map(|d| s * d).collect(),
    })
}

/// Reference projection. Enumerates every support and both active-set
/// patterns for n ≤ 15; runs Dykstra's alternating projections otherwise.
pub fn qp_projection_oracle(pbar: &[f64], spec: &SimplexBallSpec) -> Vec<f64> {
    if spec.n <= ORACLE_ENUM_MAX {
        enumerate_supports(pbar, spec)
    } else {
        dykstra(pbar, spec)
    }
}

fn enumerate_supports(pbar: &[f64], spec: &SimplexBallSpec) -> Vec<f64> {
    let n = spec.n;
    let r2 = spec.r_bar_sq();
    let tol = 1e-12;
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut consider = |p: Vec<f64>| {
        if p.iter().any(|&v| v < -tol) || norm_sq(&p) > r2 + tol {
            return;
        }
        let p: Vec<f64> = p.into_iter().map(|v| v.max(0.0)).collect();
        let d = dist_sq(&p, pbar);
        if best.as_ref().is_none_or(|(bd, _)| d < *bd) {
            best = Some((d, p));
        }
    };
    for mask in 1u32..(1u32 << n) {
        let support: Vec<usize> = (0..n).filter(|i| mask & (1 << i) != 0).collect();
        let k = support.len() as f64;
        let s1: f64 = support.iter().map(|&i| pbar[i]).sum();
        let s2: f64 = support.iter().map(|&i| pbar[i] * pbar[i]).sum();
        // Ball inactive: projection onto the affine hull of the face.
        let q = (s1 - 1.0) / k;
        let mut p = vec![0.0; n];
        for &i in &support {
            p[i] = pbar[i] - q;
        }
        consider(p);
        // Ball active: stationary points on the sphere within the face.
        let den = s2 - s1 * s1 / k;
        let num = r2 - 1.0 / k;
        if den > 0.0 && num >= 0.0 {
            for gamma in [(num / den).sqrt(), -(num / den).sqrt()] {
                let q = (gamma * s1 - 1.0) / k;
                let mut p = vec![0.0; n];
                for &i in &support {
                    p[i] = gamma * pbar[i] - q;
                }
                consider(p);
            }
        }
    }
    best.map(|(_, p)| p).unwrap_or_else(|| vec![1.0 / n as f64; n])
}

fn dykstra(pbar: &[f64], spec: &SimplexBallSpec) -> Vec<f64> {
    let n = spec.n;
    let r = spec.r_bar_sq().sqrt();
    let mut x = pbar.to_vec();
    let mut p = vec![0.0; n];
    let mut q = vec![0.0; n];
    for _ in 0..DYKSTRA_MAX_ITERS {
        let a: Vec<f64> = x.iter().zip(&p).map(|(x, p)| x + p).collect();
        let y = project_simplex(&a);
        p = a.iter().zip(&y).map(|(a, y)| a - y).collect();
        let b: Vec<f64> = y.iter().zip(&q).map(|(y, q)| y + q).collect();
        let next = project_ball(&b, None, r).expect("positive radius");
        q = b.iter().zip(&next).map(|(b, x)| b - x).collect();
        let change = dist_sq(&next, &x);
        x = next;
        if change <= 1e-30 {
            break;
        }
    }
    project_simplex(&x)
}

/// Largest violation of the optimality conditions of p as the projection of
/// v onto the simplex, or onto the simplex-ball set when `spec` is given.
/// Multipliers are fitted by least squares on the support of p.
pub fn kkt_residual(v: &[f64], p: &[f64], spec: Option<&SimplexBallSpec>) -> Result<f64> {
    let n = v.len();
    if n == 0 || p.len() != n || spec.is_some_and(|s| s.n != n) {
        return Err(Error::InvalidArgument("projection and input have mismatched dimensions".into()));
    }
    let c = 1.0 / n as f64;
    let a: Vec<f64> = p.iter().map(|x| x - c).collect();
    let g: Vec<f64> = p.iter().zip(v).map(|(p, v)| p - v).collect();
    let slack = spec.map(|s| s.radius * s.radius - norm_sq(&a));
    let support: Vec<usize> = (0..n).filter(|&i| p[i] > SUPPORT_TOL).collect();
    let k = support.len().max(1) as f64;
    // Stationarity: p − v + ν(p − 1/n) − λ1 − s = 0 with s ≥ 0, sᵀp = 0.
    let mut nu = 0.0;
    if slack.is_some_and(|sl| sl <= 1e-9) {
        let ma = support.iter().map(|&i| a[i]).sum::<f64>() / k;
        let mg = support.iter().map(|&i| g[i]).sum::<f64>() / k;
        let saa: f64 = support.iter().map(|&i| (a[i] - ma).powi(2)).sum();
        let sag: f64 = support.iter().map(|&i| (a[i] - ma) * (g[i] - mg)).sum();
        if saa > 0.0 {
            nu = (-sag / saa).max(0.0);
        }
    }
    let lambda = support.iter().map(|&i| g[i] + nu * a[i]).sum::<f64>() / k;
    let s = |i: usize| g[i] + nu * a[i] - lambda;
    let stationarity = support.iter().map(|&i| s(i).abs()).fold(0.0, f64::max);
    let dual = (0..n).filter(|&i| p[i] <= SUPPORT_TOL).map(|i| (-s(i)).max(0.0)).fold(0.0, f64::max);
    let complementarity = slack.map_or(0.0, |sl| nu * sl.abs());
    let primal = (p.iter().sum::<f64>() - 1.0)
        .abs()
        .max(p.iter().map(|&x| (-x).max(0.0)).fold(0.0, f64::max))
        .max(slack.map_or(0.0, |sl| (-sl).max(0.0)));
    Ok(stationarity.max(dual).max(complementarity).max(primal))
}

/// Optimality residual of p as the projection of v onto {‖u − center‖ ≤ r}.
pub fn ball_kkt_residual(v: &[f64], p: &[f64], center: Option<&[f64]>, r: f64) -> Result<f64> {
    if p.len() != v.len() || center.is_some_and(|c| c.len() != v.len()) {
        return Err(Error::InvalidArgument("projection and input have mismatched dimensions".into()));
    }
    let a: Vec<f64> = match center {
        Some(c) => p.iter().zip(c).map(|(p, c)| p - c).collect(),
        None => p.to_vec(),
    };
    let g: Vec<f64> = p.iter().zip(v).map(|(p, v)| p - v).collect();
    let aa = norm_sq(&a);
    // p − v + ν(p − center) = 0 with ν ≥ 0.
    let nu = if aa > 0.0 { (-g.iter().zip(&a).map(|(g, a)| g * a).sum::<f64>() / aa).max(0.0) } else { 0.0 };
    let stationarity = g.iter().zip(&a).map(|(g, a)| (g + nu * a).abs()).fold(0.0, f64::max);
    let slack = r * r - aa;
    Ok(stationarity.max(nu * slack.abs()).max((-slack).max(0.0)))
}
