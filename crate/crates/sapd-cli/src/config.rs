//! Versioned JSON experiment configuration and its resolution into
//! problems, start points and solver parameters.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{Context, Result};
use rand_distr::{Distribution, StandardNormal};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use sapd::bench::SolverSpec;
use sapd::dro::{build_dro_problem, load_dataset, synthetic_dataset, DataFormat, DroConfig, DroDataset, DroProblem, Normalization};
use sapd::problem::path_rng;
use sapd::robustness::{pareto_point, ParetoConfig};
use sapd::solvers::{estimate_smd_g, solve_reference};
use sapd::tuning::{cp_params, epsilon_params_scsc, rho_star, scsc_explicit_params, sgda_rho_star, Certificate};
use sapd::{NoiseProfile, QuadraticBilinearProblem, QuadraticSpec, SaddlePointProblem, SapdParams, SmoothnessProfile};

use crate::usage;

pub const SCHEMA_VERSION: u32 = 1;

/// Parses a JSON file; malformed input and unknown keys are usage errors.
pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| usage(format!("cannot read {}: {e}", path.display())))?;
    parse_json(&text).map_err(|e| usage(format!("{}: {e}", path.display())))
}

pub fn parse_json<T: DeserializeOwned>(text: &str) -> std::result::Result<T, serde_json::Error> {
    serde_json::from_str(text)
}

/// A profile given inline as JSON or as a path to a JSON file.
pub fn load_profile(arg: &str) -> Result<SmoothnessProfile> {
    let p: SmoothnessProfile = if arg.trim_start().starts_with('{') {
        parse_json(arg).map_err(|e| usage(format!("profile: {e}")))?
    } else {
        read_json(Path::new(arg))?
    };
    p.validate().map_err(|e| usage(format!("profile: {e}")))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub version: u32,
    pub problem: ProblemConfig,
    pub solvers: Vec<SolverConfig>,
    pub iters: usize,
    pub paths: usize,
    #[serde(default = "default_seed")]
    pub base_seed: u64,
    #[serde(default = "default_record_every")]
    pub record_every: usize,
    #[serde(default)]
    pub start: StartPoint,
}

fn default_seed() -> u64 {
    1
}

fn default_record_every() -> usize {
    10
}

impl ExperimentConfig {
    pub fn validate(self) -> Result<Self> {
        if self.version != SCHEMA_VERSION {
            return Err(usage(format!("unsupported config version {} (expected {SCHEMA_VERSION})", self.version)));
        }
        if self.solvers.is_empty() {
            return Err(usage("config lists no solvers"));
        }
        if self.iters == 0 || self.paths == 0 || self.record_every == 0 {
            return Err(usage("iters, paths and record_every must be at least 1"));
        }
        if let ProblemConfig::Dro(d) = &self.problem {
            d.validate()?;
        }
        Ok(self)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ProblemConfig {
    Quadratic(QuadraticSpec),
    Dro(DroSpec),
}

/// Gaussian classification data: `n,d,flip,seed`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub n: usize,
    pub d: usize,
    pub flip: f64,
    pub seed: u64,
}

impl FromStr for SyntheticSpec {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let parts: Vec<&str> = s.split(',').map(str::trim).collect();
        if parts.len() != 4 {
            return Err("expected n,d,flip,seed".into());
        }
        let bad = |what: &str| format!("invalid {what} in {s:?}");
        Ok(Self {
            n: parts[0].parse().map_err(|_| bad("n"))?,
            d: parts[1].parse().map_err(|_| bad("d"))?,
            flip: parts[2].parse().map_err(|_| bad("flip"))?,
            seed: parts[3].parse().map_err(|_| bad("seed"))?,
        })
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DroSpec {
    #[serde(default)]
    pub data: Option<PathBuf>,
    #[serde(default)]
    pub synthetic: Option<SyntheticSpec>,
    #[serde(default = "default_format")]
    pub format: DataFormat,
    #[serde(default = "default_normalization")]
    pub normalization: Normalization,
    #[serde(default)]
    pub positive_class: Option<String>,
    pub mu_x: f64,
    pub eps: f64,
    /// Defaults to 2√n.
    #[serde(default)]
    pub r: Option<f64>,
    /// Defaults to 100·d.
    #[serde(default)]
    pub d_x: Option<f64>,
    #[serde(default = "default_batch")]
    pub batch: usize,
    /// Held-out fraction for the test error; 0 disables it.
    #[serde(default = "default_holdout")]
    pub holdout: f64,
    #[serde(default)]
    pub split_seed: u64,
}

fn default_format() -> DataFormat {
    DataFormat::Csv
}

fn default_normalization() -> Normalization {
    Normalization::ColumnMinmax
}

fn default_batch() -> usize {
    1
}

fn default_holdout() -> f64 {
    0.2
}

/// Loaded DRO data and the problem built on the training part.
pub struct DroSetup {
    pub problem: DroProblem,
    pub train: DroDataset,
    pub holdout: Option<DroDataset>,
}

impl DroSpec {
    pub fn validate(&self) -> Result<()> {
        match (&self.data, &self.synthetic) {
            (Some(p), None) if !p.is_file() => Err(usage(format!("data file {} does not exist", p.display()))),
            (Some(_), None) | (None, Some(_)) => Ok(()),
            _ => Err(usage("give exactly one of a data file and a synthetic spec")),
        }?;
        if !(0.0..1.0).contains(&self.holdout) {
            return Err(usage(format!("holdout must lie in [0, 1), got {}", self.holdout)));
        }
        Ok(())
    }

    pub fn load(&self, noise_seed: u64) -> Result<DroSetup> {
        self.validate()?;
        let ds = match (&self.data, &self.synthetic) {
            (Some(path), _) => load_dataset(path, self.format, self.normalization, self.positive_class.as_deref())?,
            (None, Some(s)) => synthetic_dataset(s.n, s.d, s.flip, s.seed)?.normalized(self.normalization),
            (None, None) => unreachable!("validated"),
        };
        let (train, holdout) =
            if self.holdout > 0.0 { ds.split(self.holdout, self.split_seed).map(|(a, b)| (a, Some(b)))? } else { (ds, None) };
        let mut cfg = DroConfig::with_defaults(&train, self.mu_x, self.eps)?;
        if let Some(r) = self.r {
            cfg.r = r;
        }
        if let Some(d_x) = self.d_x {
            cfg.d_x = d_x;
        }
        cfg.batch = self.batch;
        let problem = build_dro_problem(train.clone(), cfg, noise_seed).map_err(|e| usage(format!("dro config: {e}")))?;
        Ok(DroSetup { problem, train, holdout })
    }
}

/// Full-batch deterministic solve to 10⁻¹⁰, used as the distance reference.
pub fn dro_reference(problem: &DroProblem) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = problem.dataset().n();
    let exact = DroProblem::new(problem.dataset().clone(), DroConfig { batch: n, ..*problem.config() })?;
    let params = scsc_explicit_params(exact.profile(), None)?.params;
    let x0 = vec![0.0; problem.dataset().d()];
    let (x, y, iters) =
        solve_reference(&exact, &params, &x0, &exact.uniform_y(), 1e-10, 5_000_000).context("reference solve")?;
    log::info!("reference solve converged in {iters} iterations");
    Ok((x, y))
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum StartPoint {
    /// Ones for quadratics; zero model and uniform weights for DRO.
    #[default]
    Default,
    Zeros,
    Ones,
    /// Independent N(0, scale²) entries; y uses seed + 1.
    Gaussian { seed: u64, scale: f64 },
}

impl StartPoint {
    pub fn point<P: SaddlePointProblem + ?Sized>(&self, problem: &P, dro: bool) -> (Vec<f64>, Vec<f64>) {
        let (nx, ny) = problem.dims();
        let gauss = |n: usize, seed: u64, scale: f64| -> Vec<f64> {
            let mut rng = path_rng(seed);
            (0..n).map(|_| scale * Distribution::<f64>::sample(&StandardNormal, &mut rng)).collect()
        };
        let (x, y) = match self {
            StartPoint::Default if dro => (vec![0.0; nx], vec![1.0 / ny as f64; ny]),
            StartPoint::Default | StartPoint::Ones => (vec![1.0; nx], vec![1.0; ny]),
            StartPoint::Zeros => (vec![0.0; nx], vec![0.0; ny]),
            StartPoint::Gaussian { seed, scale } => (gauss(nx, *seed, *scale), gauss(ny, seed + 1, *scale)),
        };
        (problem.project_x(&x), problem.project_y(&y))
    }
}

/// How SAPD parameters are chosen.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SapdTuning {
    Params {
        tau: f64,
        sigma: f64,
        theta: f64,
    },
    Explicit {
        #[serde(default)]
        beta: Option<f64>,
    },
    EpsScsc {
        eps: f64,
        #[serde(default)]
        beta: Option<f64>,
    },
    RhoStar {
        #[serde(default = "default_rho_tol")]
        tol: f64,
    },
    Pareto {
        rho: f64,
        #[serde(default)]
        k_c: Option<usize>,
        #[serde(default)]
        k_theta: Option<usize>,
    },
    Cp {
        theta: f64,
    },
}

fn default_rho_tol() -> f64 {
    1e-4
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum SolverConfig {
    Sapd {
        #[serde(default)]
        label: Option<String>,
        tuning: SapdTuning,
    },
    /// Steps default to the best certified SGDA rate.
    Sgda {
        #[serde(default)]
        label: Option<String>,
        #[serde(default)]
        tau: Option<f64>,
        #[serde(default)]
        sigma: Option<f64>,
    },
    Sogda {},
    Smp {},
    /// Radius defaults to √d; G is estimated when absent.
    Smd {
        #[serde(default)]
        radius: Option<f64>,
        #[serde(default)]
        g_bound: Option<f64>,
    },
}

/// A solver with resolved parameters and, if any, its certificate.
#[derive(Clone, Debug, Serialize)]
pub struct ResolvedSolver {
    pub spec: SolverSpec,
    pub certificate: Option<Certificate>,
}

/// Noise used by the robustness tuner: the problem's own bounds when they are
/// positive, unit isotropic otherwise.
pub fn tuner_noise(problem_noise: NoiseProfile) -> NoiseProfile {
    if problem_noise.delta_x_sq > 0.0 && problem_noise.delta_y_sq > 0.0 {
        problem_noise
    } else {
        NoiseProfile::isotropic(1.0)
    }
}

pub fn resolve_sapd(tuning: &SapdTuning, p: &SmoothnessProfile, noise: NoiseProfile) -> Result<(SapdParams, Option<Certificate>, String)> {
    Ok(match *tuning {
        SapdTuning::Params { tau, sigma, theta } => (SapdParams::new(tau, sigma, theta).validate()?, None, "sapd".into()),
        SapdTuning::Explicit { beta } => {
            let c = scsc_explicit_params(p, beta)?;
            (c.params, Some(c.certificate), "sapd-explicit".into())
        }
        SapdTuning::EpsScsc { eps, beta } => {
            let c = epsilon_params_scsc(p, &noise, eps, beta)?;
            (c.params, Some(c.certificate), format!("sapd(eps={eps})"))
        }
        SapdTuning::RhoStar { tol } => {
            let s = rho_star(p, tol)?;
            let cert = sapd::tuning::check_general(p, &s.witness.params(), s.rho, s.witness.alpha)?;
            (s.witness.params(), Some(cert), "sapd-rho-star".into())
        }
        SapdTuning::Pareto { rho, k_c, k_theta } => {
            let d = ParetoConfig::default();
            let cfg = ParetoConfig { k_c: k_c.unwrap_or(d.k_c), k_theta: k_theta.unwrap_or(d.k_theta) };
            let pt = pareto_point(p, rho, &tuner_noise(noise), &cfg, None)?;
            (pt.params(), Some(pt.certificate), format!("sapd(rho={rho})"))
        }
        SapdTuning::Cp { theta } => (cp_params(p, theta)?, None, format!("cp(theta={theta})")),
    })
}

pub fn resolve_solvers<P: SaddlePointProblem + ?Sized>(
    configs: &[SolverConfig],
    problem: &P,
    seed: u64,
) -> Result<Vec<ResolvedSolver>> {
    let p = problem.profile();
    let mut out: Vec<ResolvedSolver> = Vec::new();
    for c in configs {
        let (spec, certificate) = match c {
            SolverConfig::Sapd { label, tuning } => {
                let (params, cert, default_label) = resolve_sapd(tuning, p, problem.noise())?;
                (SolverSpec::Sapd { label: label.clone().unwrap_or(default_label), params }, cert)
            }
            SolverConfig::Sgda { label, tau, sigma } => {
                let label = label.clone().unwrap_or_else(|| "sgda".into());
                match (tau, sigma) {
                    (Some(tau), Some(sigma)) => (SolverSpec::Sgda { label, tau: *tau, sigma: *sigma }, None),
                    (None, None) => {
                        let c = sgda_rho_star(p, 1e-5)?;
                        (SolverSpec::Sgda { label, tau: c.params.tau, sigma: c.params.sigma }, Some(c.certificate))
                    }
                    _ => return Err(usage("sgda needs both tau and sigma or neither")),
                }
            }
            SolverConfig::Sogda {} => (SolverSpec::Sogda, None),
            SolverConfig::Smp {} => (SolverSpec::Smp, None),
            SolverConfig::Smd { radius, g_bound } => {
                let (nx, ny) = problem.dims();
                let radius = radius.unwrap_or((nx.max(ny) as f64).sqrt());
                let g_bound = g_bound.unwrap_or_else(|| estimate_smd_g(problem, radius, 1000, seed));
                (SolverSpec::Smd { radius, g_bound }, None)
            }
        };
        if out.iter().any(|o| o.spec.label() == spec.label()) {
            return Err(usage(format!("duplicate solver label {:?}", spec.label())));
        }
        out.push(ResolvedSolver { spec, certificate });
    }
    Ok(out)
}

/// A configured problem ready to run.
pub enum Built {
    Quadratic(QuadraticBilinearProblem),
    Dro(Box<DroSetup>),
}

impl Built {
    pub fn new(cfg: &ProblemConfig, seed: u64) -> Result<Self> {
        Ok(match cfg {
            ProblemConfig::Quadratic(spec) => {
                Built::Quadratic(QuadraticBilinearProblem::from_spec(spec).map_err(|e| usage(format!("quadratic problem: {e}")))?)
            }
            ProblemConfig::Dro(spec) => Built::Dro(Box::new(spec.load(seed)?)),
        })
    }

    pub fn problem(&self) -> &dyn SaddlePointProblem {
        match self {
            Built::Quadratic(q) => q,
            Built::Dro(d) => &d.problem,
        }
    }

    pub fn is_dro(&self) -> bool {
        matches!(self, Built::Dro(_))
    }

    /// The saddle point used for distances.
    pub fn reference(&self) -> Result<(Vec<f64>, Vec<f64>)> {
        match self {
            Built::Quadratic(q) => Ok(q.saddle_point().expect("quadratic saddle point is known")),
            Built::Dro(d) => dro_reference(&d.problem),
        }
    }

    /// Duality gap at (x, y) where one is computable.
    pub fn gap(&self, x: &[f64], y: &[f64]) -> Option<f64> {
        match self {
            Built::Quadratic(q) => q.gap(x, y),
            Built::Dro(d) => sapd::dro::dro_gap(&d.problem, x, y, 1e-9, 200_000).ok(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const EXAMPLE: &str = r#"{
        "version": 1,
        "problem": {"kind": "quadratic", "d": 30, "spectral_norm": 10.0, "mu_x": 1.0, "mu_y": 1.0, "delta": 5.0, "seed": 1},
        "solvers": [
            {"kind": "sapd", "tuning": {"mode": "pareto", "rho": 0.995}},
            {"kind": "sgda", "tau": 0.01, "sigma": 0.01},
            {"kind": "sogda"}
        ],
        "iters": 100,
        "paths": 3
    }"#;

    #[test]
    fn example_config_parses_with_defaults() {
        let cfg: ExperimentConfig = parse_json(EXAMPLE).unwrap();
        let cfg = cfg.validate().unwrap();
        assert_eq!(cfg.base_seed, 1);
        assert_eq!(cfg.record_every, 10);
        assert!(matches!(cfg.start, StartPoint::Default));
        assert_eq!(cfg.solvers.len(), 3);
    }

    #[test]
    fn unknown_keys_are_rejected_at_every_level() {
        let top = EXAMPLE.replace("\"paths\": 3", "\"paths\": 3, \"extra\": 1");
        assert!(parse_json::<ExperimentConfig>(&top).is_err());
        let problem = EXAMPLE.replace("\"seed\": 1}", "\"seed\": 1, \"noise\": 2}");
        assert!(parse_json::<ExperimentConfig>(&problem).is_err());
        let tuning = EXAMPLE.replace("\"rho\": 0.995}", "\"rho\": 0.995, \"c\": 0.5}");
        assert!(parse_json::<ExperimentConfig>(&tuning).is_err());
        let solver = EXAMPLE.replace("{\"kind\": \"sogda\"}", "{\"kind\": \"sogda\", \"eta\": 1}");
        assert!(parse_json::<ExperimentConfig>(&solver).is_err());
    }

    #[test]
    fn version_is_checked() {
        let cfg: ExperimentConfig = parse_json(&EXAMPLE.replace("\"version\": 1", "\"version\": 2")).unwrap();
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn synthetic_spec_parses() {
        let s: SyntheticSpec = "200, 10, 0.1, 7".parse().unwrap();
        assert_eq!(s, SyntheticSpec { n: 200, d: 10, flip: 0.1, seed: 7 });
        assert!("1,2,3".parse::<SyntheticSpec>().is_err());
    }

    #[test]
    fn solvers_resolve_with_unique_labels() {
        let cfg: ExperimentConfig = parse_json(EXAMPLE).unwrap();
        let built = Built::new(&cfg.problem, 0).unwrap();
        let r = resolve_solvers(&cfg.solvers, built.problem(), 1).unwrap();
        assert_eq!(r[0].spec.label(), "sapd(rho=0.995)");
        assert!(r[0].certificate.unwrap().feasible);
        let dup = [cfg.solvers[2].clone(), cfg.solvers[2].clone()];
        assert!(resolve_solvers(&dup, built.problem(), 1).is_err());
    }
}
