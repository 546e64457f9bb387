//! Distributionally robust logistic regression.
//!
//! ```text
//! min_{‖x‖² ≤ D_x} max_{y ∈ P_r}  Σ_i y_i φ_i(x) + (μx/2)‖x‖² − (μy/2)‖y‖²
//! φ_i(x) = log(1 + exp(−b_i a_iᵀx)),   P_r = {y ∈ Δ_n : ‖y − 1/n‖² ≤ r/n²}
//! ```

use std::collections::BTreeSet;
use std::path::Path;

use rand::seq::index::sample;
use rand::seq::SliceRandom;
use rand::{Rng, RngCore};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{dot, norm_sq, spectral_norm, Matrix};
use crate::problem::{path_rng, NoiseProfile, SaddlePointProblem, SmoothnessProfile};
use crate::projection::{project_ball, project_simplex_ball, SimplexBallSpec};

/// Feature scaling applied after loading.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Normalization {
    /// Each column mapped onto [0, 1]; constant columns become 0.
    ColumnMinmax,
    /// Whole matrix divided by min{√d, √n}.
    GlobalScale,
    None,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataFormat {
    /// Dense rows, label in the last column, optional header.
    Csv,
    /// `label idx:val ...` with 1-based indices.
    Libsvm,
}

/// Binary classification data with labels in {−1, +1}.
#[derive(Clone, Debug)]
pub struct DroDataset {
    pub a: Matrix,
    pub b: Vec<f64>,
    pub normalization: Normalization,
    /// Columns that were constant under min-max scaling.
    pub constant_columns: Vec<usize>,
    pub source: Option<String>,
}

impl DroDataset {
    pub fn new(a: Matrix, b: Vec<f64>) -> Result<Self> {
        if a.rows() == 0 || a.cols() == 0 {
            return Err(Error::Dataset("empty feature matrix".into()));
        }
        if a.rows() != b.len() {
            return Err(Error::Dataset(format!("{} rows but {} labels", a.rows(), b.len())));
        }
        if !a.is_finite() {
            return Err(Error::Dataset("non-finite feature value".into()));
        }
        if let Some(v) = b.iter().find(|&&v| v != 1.0 && v != -1.0) {
            return Err(Error::Dataset(format!("label {v} is not in {{-1, +1}}")));
        }
        Ok(Self { a, b, normalization: Normalization::None, constant_columns: Vec::new(), source: None })
    }

    pub fn n(&self) -> usize {
        self.a.rows()
    }

    pub fn d(&self) -> usize {
        self.a.cols()
    }

    pub fn normalized(mut self, mode: Normalization) -> Self {
        let (n, d) = (self.n(), self.d());
        match mode {
            Normalization::ColumnMinmax => {
                let mut a = self.a.clone();
                self.constant_columns.clear();
                for j in 0..d {
                    let (lo, hi) = (0..n).fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), i| {
                        (lo.min(self.a[(i, j)]), hi.max(self.a[(i, j)]))
                    });
                    let width = hi - lo;
                    if width > 0.0 {
                        (0..n).for_each(|i| a[(i, j)] = (self.a[(i, j)] - lo) / width);
                    } else {
                        (0..n).for_each(|i| a[(i, j)] = 0.0);
                        self.constant_columns.push(j);
                    }
                }
                if !self.constant_columns.is_empty() {
                    log::warn!("constant feature columns mapped to 0: {:?}", self.constant_columns);
                }
                self.a = a;
            }
            Normalization::GlobalScale => {
                self.a = self.a.scale(1.0 / (d as f64).sqrt().min((n as f64).sqrt()));
            }
            Normalization::None => {}
        }
        self.normalization = mode;
        self
    }

    fn subset(&self, rows: &[usize]) -> Self {
        let a = Matrix::from_fn(rows.len(), self.d(), |i, j| self.a[(rows[i], j)]);
        let b = rows.iter().map(|&i| self.b[i]).collect();
        Self { a, b, normalization: self.normalization, constant_columns: self.constant_columns.clone(), source: self.source.clone() }
    }

    /// Random split into (train, holdout) with `holdout_frac` of the rows held out.
    pub fn split(&self, holdout_frac: f64, seed: u64) -> Result<(Self, Self)> {
        if !(0.0..1.0).contains(&holdout_frac) {
            return Err(Error::InvalidArgument(format!("holdout fraction must lie in [0, 1), got {holdout_frac}")));
        }
        let mut idx: Vec<usize> = (0..self.n()).collect();
        idx.shuffle(&mut path_rng(seed));
        let n_test = (holdout_frac * self.n() as f64).round() as usize;
        if n_test == 0 || n_test == self.n() {
            return Err(Error::InvalidArgument("split leaves an empty part".into()));
        }
        let (test, train) = idx.split_at(n_test);
        Ok((self.subset(train), self.subset(test)))
    }
}

fn parse_label(raw: &str, positive_class: Option<&str>) -> Option<f64> {
    let raw = raw.trim();
    if let Some(pos) = positive_class {
        return Some(if raw == pos { 1.0 } else { -1.0 });
    }
    match raw.parse::<f64>().ok()? {
        v if v == 1.0 => Some(1.0),
        v if v == -1.0 || v == 0.0 => Some(-1.0),
        _ => None,
    }
}

/// Reads a dataset and applies `normalization`. Multiclass labels need
/// `positive_class`; that class becomes +1 and all others −1.
pub fn load_dataset(path: &Path, format: DataFormat, normalization: Normalization, positive_class: Option<&str>) -> Result<DroDataset> {
    let (rows, labels) = match format {
        DataFormat::Csv => read_csv(path, positive_class)?,
        DataFormat::Libsvm => read_libsvm(path, positive_class)?,
    };
    let d = rows.first().map_or(0, Vec::len);
    let n = rows.len();
    let a = Matrix::from_vec(n, d, rows.into_iter().flatten().collect());
    let mut ds = DroDataset::new(a, labels)?;
    ds.source = Some(format!("{} ({format:?})", path.display()));
    Ok(ds.normalized(normalization))
}

fn read_csv(path: &Path, positive_class: Option<&str>) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).from_path(path)?;
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if rec.len() < 2 {
            return Err(Error::Dataset(format!("line {}: need at least one feature and a label", line + 1)));
        }
        let feats: std::result::Result<Vec<f64>, _> = rec.iter().take(rec.len() - 1).map(str::parse::<f64>).collect();
        let feats = match feats {
            Ok(f) => f,
            // A non-numeric first line is a header.
            Err(_) if line == 0 => continue,
            Err(e) => return Err(Error::Dataset(format!("line {}: {e}", line + 1))),
        };
        if let Some(first) = rows.first() {
            let first: &Vec<f64> = first;
            if first.len() != feats.len() {
                return Err(Error::Dataset(format!("line {}: expected {} features, found {}", line + 1, first.len(), feats.len())));
            }
        }
        let raw = &rec[rec.len() - 1];
        let label = parse_label(raw, positive_class)
            .ok_or_else(|| Error::Dataset(format!("line {}: label {raw:?} is not binary; pass a positive class", line + 1)))?;
        rows.push(feats);
        labels.push(label);
    }
    if rows.is_empty() {
        return Err(Error::Dataset("no data rows".into()));
    }
    Ok((rows, labels))
}

fn read_libsvm(path: &Path, positive_class: Option<&str>) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    let text = std::fs::read_to_string(path)?;
    let mut sparse = Vec::new();
    let mut labels = Vec::new();
    let mut d = 0;
    for (line, raw) in text.lines().enumerate() {
        let raw = raw.trim();
        if raw.is_empty() || raw.starts_with('#') {
            continue;
        }
        let mut parts = raw.split_whitespace();
        let lab = parts.next().ok_or_else(|| Error::Dataset(format!("line {}: missing label", line + 1)))?;
        let label = parse_label(lab, positive_class)
            .ok_or_else(|| Error::Dataset(format!("line {}: label {lab:?} is not binary; pass a positive class", line + 1)))?;
        let mut entries = Vec::new();
        for tok in parts {
            let (i, v) = tok.split_once(':').ok_or_else(|| Error::Dataset(format!("line {}: malformed entry {tok:?}", line + 1)))?;
            let i: usize = i.parse().map_err(|_| Error::Dataset(format!("line {}: bad index {i:?}", line + 1)))?;
            let v: f64 = v.parse().map_err(|_| Error::Dataset(format!("line {}: bad value {v:?}", line + 1)))?;
            if i == 0 {
                return Err(Error::Dataset(format!("line {}: indices are 1-based", line + 1)));
            }
            d = d.max(i);
            entries.push((i - 1, v));
        }
        sparse.push(entries);
        labels.push(label);
    }
    if sparse.is_empty() {
        return Err(Error::Dataset("no data rows".into()));
    }
    if d == 0 {
        return Err(Error::Dataset("no features".into()));
    }
    let rows = sparse
        .into_iter()
        .map(|entries| {
            let mut row = vec![0.0; d];
            entries.into_iter().for_each(|(i, v)| row[i] = v);
            row
        })
        .collect();
    Ok((rows, labels))
}

/// Gaussian features, labels from a random linear rule, each flipped with
/// probability `flip`.
pub fn synthetic_dataset(n: usize, d: usize, flip: f64, seed: u64) -> Result<DroDataset> {
    if n == 0 || d == 0 {
        return Err(Error::InvalidArgument("synthetic dataset needs n, d > 0".into()));
    }
    if !(0.0..=1.0).contains(&flip) {
        return Err(Error::InvalidArgument(format!("flip probability must lie in [0, 1], got {flip}")));
    }
    let mut rng = path_rng(seed);
    let w: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
    let a = Matrix::from_fn(n, d, |_, _| StandardNormal.sample(&mut rng));
    let b = (0..n)
        .map(|i| {
            let s = if dot(a.row(i), &w) >= 0.0 { 1.0 } else { -1.0 };
            if rng.random::<f64>() < flip { -s } else { s }
        })
        .collect();
    let mut ds = DroDataset::new(a, b)?;
    ds.source = Some(format!("synthetic(n={n}, d={d}, flip={flip}, seed={seed})"));
    Ok(ds)
}

/// Regularization, radii and batch size.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DroConfig {
    pub mu_x: f64,
    pub mu_y: f64,
    /// Uncertainty radius; the dual ball has squared radius r/n².
    pub r: f64,
    /// Squared radius of the model ball.
    pub d_x: f64,
    pub batch: usize,
}

impl DroConfig {
    /// r = 2√n, D_x = 100·d, μy = ε/2 and single-sample batches.
    pub fn with_defaults(ds: &DroDataset, mu_x: f64, eps: f64) -> Result<Self> {
        Ok(Self { mu_x, mu_y: smoothing_mu_y(eps, 1.0)?, r: 2.0 * (ds.n() as f64).sqrt(), d_x: 100.0 * ds.d() as f64, batch: 1 })
    }

    pub fn validate(self, n: usize) -> Result<Self> {
        if !(self.mu_x > 0.0 && self.mu_y > 0.0) {
            return Err(Error::InvalidArgument("mu_x and mu_y must be positive".into()));
        }
        if !(self.r > 0.0 && self.r.is_finite()) {
            return Err(Error::InvalidArgument(format!("r must be positive, got {}", self.r)));
        }
        if !(self.d_x > 0.0 && self.d_x.is_finite()) {
            return Err(Error::InvalidArgument(format!("D_x must be positive, got {}", self.d_x)));
        }
        if self.batch == 0 || self.batch > n {
            return Err(Error::InvalidArgument(format!("batch must lie in [1, {n}], got {}", self.batch)));
        }
        Ok(self)
    }
}

/// μy = ε/(2D_y).
pub fn smoothing_mu_y(eps: f64, d_y: f64) -> Result<f64> {
    if !(eps > 0.0 && d_y > 0.0) {
        return Err(Error::InvalidArgument("eps and D_y must be positive".into()));
    }
    Ok(eps / (2.0 * d_y))
}

/// sup ‖y‖² over P_r, which is min{1, r/n² + 1/n}.
pub fn dual_diameter_sq(n: usize, r: f64) -> f64 {
    let n = n as f64;
    (r / (n * n) + 1.0 / n).min(1.0)
}

/// L_xy = L_yx = ‖A‖₂, L_xx = max_i ‖a_i‖²/4, L_yy = 0.
pub fn dro_profile(ds: &DroDataset, cfg: &DroConfig) -> SmoothnessProfile {
    let norm = spectral_norm(&ds.a);
    let l_xx = (0..ds.n()).map(|i| norm_sq(ds.a.row(i))).fold(0.0, f64::max) / 4.0;
    SmoothnessProfile::new(cfg.mu_x, cfg.mu_y, l_xx, norm, norm, 0.0)
}

/// log(1 + exp(t)) without overflow.
fn softplus(t: f64) -> f64 {
    t.max(0.0) + (-t.abs()).exp().ln_1p()
}

/// 1/(1 + exp(−t)).
fn logistic(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// The smoothed DRO saddle problem.
#[derive(Clone, Debug)]
pub struct DroProblem {
    ds: DroDataset,
    cfg: DroConfig,
    profile: SmoothnessProfile,
    spec: SimplexBallSpec,
    noise: NoiseProfile,
}

impl DroProblem {
    pub fn new(ds: DroDataset, cfg: DroConfig) -> Result<Self> {
        let cfg = cfg.validate(ds.n())?;
        let profile = dro_profile(&ds, &cfg).validate()?;
        let spec = SimplexBallSpec::new(ds.n(), cfg.r.sqrt() / ds.n() as f64)?;
        Ok(Self { ds, cfg, profile, spec, noise: NoiseProfile { delta_x_sq: 0.0, delta_y_sq: 0.0 } })
    }

    pub fn dataset(&self) -> &DroDataset {
        &self.ds
    }

    pub fn config(&self) -> &DroConfig {
        &self.cfg
    }

    pub fn dual_spec(&self) -> &SimplexBallSpec {
        &self.spec
    }

    /// Losses φ_i(x).
    pub fn losses(&self, x: &[f64]) -> Vec<f64> {
        (0..self.ds.n()).map(|i| self.loss(i, x)).collect()
    }

    fn loss(&self, i: usize, x: &[f64]) -> f64 {
        softplus(-self.ds.b[i] * dot(self.ds.a.row(i), x))
    }

    fn add_loss_grad(&self, i: usize, x: &[f64], weight: f64, out: &mut [f64]) {
        let bi = self.ds.b[i];
        let row = self.ds.a.row(i);
        let c = -weight * bi * logistic(-bi * dot(row, x));
        out.iter_mut().zip(row).for_each(|(o, a)| *o += c * a);
    }

    /// L(x, y) including both regularizers.
    pub fn lagrangian(&self, x: &[f64], y: &[f64]) -> f64 {
        dot(&self.losses(x), y) + 0.5 * self.cfg.mu_x * norm_sq(x) - 0.5 * self.cfg.mu_y * norm_sq(y)
    }

    /// The uniform weights 1/n.
    pub fn uniform_y(&self) -> Vec<f64> {
        vec![1.0 / self.ds.n() as f64; self.ds.n()]
    }

    /// Empirical per-coordinate-summed oracle variances at (x, y).
    pub fn estimate_noise(&self, x: &[f64], y: &[f64], samples: usize, seed: u64) -> NoiseProfile {
        if self.cfg.batch == self.ds.n() || samples < 2 {
            return NoiseProfile { delta_x_sq: 0.0, delta_y_sq: 0.0 };
        }
        let gx = self.exact_grad_x(x, y).expect("exact oracle");
        let gy = self.exact_grad_y(x, y).expect("exact oracle");
        let mut rng = path_rng(seed);
        let (mut vx, mut vy) = (0.0, 0.0);
        for _ in 0..samples {
            vx += self.grad_x(x, y, &mut rng).iter().zip(&gx).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
            vy += self.grad_y(x, y, &mut rng).iter().zip(&gy).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
        }
        NoiseProfile { delta_x_sq: vx / samples as f64, delta_y_sq: vy / samples as f64 }
    }

    /// Stores an empirical noise estimate at (0, 1/n) for reporting.
    pub fn with_estimated_noise(mut self, samples: usize, seed: u64) -> Self {
        let x = vec![0.0; self.ds.d()];
        let y = self.uniform_y();
        self.noise = self.estimate_noise(&x, &y, samples, seed);
        self
    }

    fn batch(&self, rng: &mut dyn RngCore) -> Option<Vec<usize>> {
        (self.cfg.batch < self.ds.n()).then(|| sample(rng, self.ds.n(), self.cfg.batch).into_vec())
    }
}

/// Builds the problem and estimates the oracle noise from 10³ samples.
pub fn build_dro_problem(ds: DroDataset, cfg: DroConfig, seed: u64) -> Result<DroProblem> {
    Ok(DroProblem::new(ds, cfg)?.with_estimated_noise(1000, seed))
}

impl SaddlePointProblem for DroProblem {
    fn dims(&self) -> (usize, usize) {
        (self.ds.d(), self.ds.n())
    }
    fn profile(&self) -> &SmoothnessProfile {
        &self.profile
    }
    fn noise(&self) -> NoiseProfile {
        self.noise
    }
    fn grad_x(&self, x: &[f64], y: &[f64], rng: &mut dyn RngCore) -> Vec<f64> {
        let Some(idx) = self.batch(rng) else {
            return self.exact_grad_x(x, y).expect("exact oracle");
        };
        let scale = self.ds.n() as f64 / idx.len() as f64;
        let mut g = vec![0.0; self.ds.d()];
        for i in idx {
            self.add_loss_grad(i, x, scale * y[i], &mut g);
        }
        g
    }
    fn grad_y(&self, x: &[f64], y: &[f64], rng: &mut dyn RngCore) -> Vec<f64> {
        let Some(idx) = self.batch(rng) else {
            return self.exact_grad_y(x, y).expect("exact oracle");
        };
        let scale = self.ds.n() as f64 / idx.len() as f64;
        let mut g = vec![0.0; self.ds.n()];
        for i in idx {
            g[i] = scale * self.loss(i, x);
        }
        g
    }
    fn exact_grad_x(&self, x: &[f64], y: &[f64]) -> Option<Vec<f64>> {
        let mut g = vec![0.0; self.ds.d()];
        for (i, &w) in y.iter().enumerate() {
            if w != 0.0 {
                self.add_loss_grad(i, x, w, &mut g);
            }
        }
        Some(g)
    }
    fn exact_grad_y(&self, x: &[f64], _y: &[f64]) -> Option<Vec<f64>> {
        Some(self.losses(x))
    }
    fn prox_x(&self, v: &[f64], tau: f64) -> Vec<f64> {
        let c = 1.0 / (1.0 + tau * self.cfg.mu_x);
        let shrunk: Vec<f64> = v.iter().map(|a| a * c).collect();
        project_ball(&shrunk, None, self.cfg.d_x.sqrt()).expect("positive radius")
    }
    fn prox_y(&self, w: &[f64], sigma: f64) -> Vec<f64> {
        let c = 1.0 / (1.0 + sigma * self.cfg.mu_y);
        let shrunk: Vec<f64> = w.iter().map(|a| a * c).collect();
        project_simplex_ball(&shrunk, &self.spec).expect("finite dual point")
    }
    fn reg_grad_x(&self, x: &[f64]) -> Vec<f64> {
        x.iter().map(|a| a * self.cfg.mu_x).collect()
    }
    fn reg_grad_y(&self, y: &[f64]) -> Vec<f64> {
        y.iter().map(|a| a * self.cfg.mu_y).collect()
    }
    fn project_x(&self, x: &[f64]) -> Vec<f64> {
        project_ball(x, None, self.cfg.d_x.sqrt()).expect("positive radius")
    }
    fn project_y(&self, y: &[f64]) -> Vec<f64> {
        project_simplex_ball(y, &self.spec).expect("finite dual point")
    }
}

/// Gap sup_y L(x̄, y) − inf_x L(x, ȳ). The dual part is a projection; the
/// primal part runs projected accelerated gradient until the gradient
/// mapping falls below `inner_tol`.
pub fn dro_gap(problem: &DroProblem, x_bar: &[f64], y_bar: &[f64], inner_tol: f64, max_inner: usize) -> Result<f64> {
    let (d, n) = problem.dims();
    if x_bar.len() != d || y_bar.len() != n {
        return Err(Error::InvalidArgument("gap point has the wrong dimensions".into()));
    }
    let cfg = problem.cfg;
    let phi = problem.losses(x_bar);
    let target: Vec<f64> = phi.iter().map(|v| v / cfg.mu_y).collect();
    let y_plus = project_simplex_ball(&target, &problem.spec)?;
    let upper = problem.lagrangian(x_bar, &y_plus);

    // inf over the model ball of h(x) = Σ ȳ_i φ_i(x) + (μx/2)‖x‖².
    let weight_sum: f64 = y_bar.iter().map(|v| v.abs()).sum();
    let l_h = cfg.mu_x + weight_sum * problem.profile.l_xx;
    let step = 1.0 / l_h;
    let q = cfg.mu_x / l_h;
    let beta = (1.0 - q.sqrt()) / (1.0 + q.sqrt());
    let radius = cfg.d_x.sqrt();
    let grad_h = |x: &[f64]| -> Vec<f64> {
        let mut g = problem.exact_grad_x(x, y_bar).expect("exact oracle");
        g.iter_mut().zip(x).for_each(|(g, x)| *g += cfg.mu_x * x);
        g
    };
    let mut x = x_bar.to_vec();
    let mut x_prev = x.clone();
    let mut converged = false;
    for _ in 0..max_inner {
        let v: Vec<f64> = x.iter().zip(&x_prev).map(|(a, b)| a + beta * (a - b)).collect();
        let g = grad_h(&v);
        let next = project_ball(&v.iter().zip(&g).map(|(v, g)| v - step * g).collect::<Vec<_>>(), None, radius)?;
        x_prev = std::mem::replace(&mut x, next);
        // Gradient mapping at the new point.
        let gx = grad_h(&x);
        let moved = project_ball(&x.iter().zip(&gx).map(|(x, g)| x - step * g).collect::<Vec<_>>(), None, radius)?;
        let gm = x.iter().zip(&moved).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt() / step;
        if gm <= inner_tol {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NoConvergence("inner primal solve of the DRO gap"));
    }
    let lower = problem.lagrangian(&x, y_bar);
    Ok(upper - lower)
}

/// Fraction of rows with sign(a_iᵀx) ≠ b_i; a zero score predicts +1.
pub fn test_error(x: &[f64], holdout: &DroDataset) -> Result<f64> {
    if holdout.n() == 0 {
        return Err(Error::InvalidArgument("empty holdout set".into()));
    }
    if x.len() != holdout.d() {
        return Err(Error::InvalidArgument("model dimension does not match the data".into()));
    }
    let wrong = (0..holdout.n())
        .filter(|&i| {
            let pred = if dot(holdout.a.row(i), x) >= 0.0 { 1.0 } else { -1.0 };
            pred != holdout.b[i]
        })
        .count();
    Ok(wrong as f64 / holdout.n() as f64)
}

/// Labels present in a CSV label column, for choosing a positive class.
pub fn csv_classes(path: &Path) -> Result<BTreeSet<String>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).from_path(path)?;
    let mut out = BTreeSet::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if line == 0 && rec.iter().take(rec.len().saturating_sub(1)).any(|f| f.parse::<f64>().is_err()) {
            continue;
        }
        if let Some(l) = rec.iter().last() {
            out.insert(l.to_string());
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn softplus_is_stable() {
        assert_relative_eq!(softplus(0.0), 2f64.ln(), epsilon = 1e-15);
        assert_relative_eq!(softplus(800.0), 800.0, epsilon = 1e-12);
        assert!(softplus(-800.0) >= 0.0 && softplus(-800.0) < 1e-300);
        assert_relative_eq!(logistic(0.0), 0.5);
        assert!(logistic(-800.0).is_finite() && logistic(800.0) == 1.0);
    }

    #[test]
    fn identity_profile() {
        let ds = DroDataset::new(Matrix::identity(2), vec![1.0, -1.0]).unwrap();
        let cfg = DroConfig { mu_x: 0.1, mu_y: 0.2, r: 1.0, d_x: 10.0, batch: 1 };
        let p = dro_profile(&ds, &cfg);
        assert_relative_eq!(p.l_xy, 1.0, epsilon = 1e-12);
        assert_relative_eq!(p.l_xx, 0.25, epsilon = 1e-15);
        assert_eq!(p.l_yy, 0.0);
    }

    #[test]
    fn smoothing_examples() {
        assert_eq!(smoothing_mu_y(1.0, 1.0).unwrap(), 0.5);
        assert_eq!(smoothing_mu_y(0.1, 1.0).unwrap(), 0.05);
        assert!(smoothing_mu_y(0.0, 1.0).is_err());
    }

    #[test]
    fn full_batch_oracle_is_exact() {
        let ds = synthetic_dataset(20, 3, 0.1, 4).unwrap();
        let cfg = DroConfig { mu_x: 0.1, mu_y: 0.1, r: 2.0 * 20f64.sqrt(), d_x: 300.0, batch: 20 };
        let pb = DroProblem::new(ds, cfg).unwrap();
        let x = vec![0.3, -0.2, 0.5];
        let y = pb.uniform_y();
        let mut rng = path_rng(1);
        assert_eq!(pb.grad_x(&x, &y, &mut rng), pb.exact_grad_x(&x, &y).unwrap());
        assert_eq!(pb.grad_y(&x, &y, &mut rng), pb.exact_grad_y(&x, &y).unwrap());
    }
}
