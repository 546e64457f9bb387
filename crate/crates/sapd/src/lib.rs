//! Stochastic accelerated primal-dual (SAPD) toolkit for saddle-point
//! problems `min_x max_y f(x) + Φ(x,y) − g(y)`.
//!
//! - [`problem`]: oracle interface and quadratic problem families
//! - [`numerics`]: small dense linear algebra
//! - [`solvers`]: SAPD, SGDA and gradient-type baselines
//! - [`tuning`]: rate certificates and parameter rules
//! - [`robustness`]: exact rate/robustness for quadratics and the Pareto tuner
//! - [`projection`]: simplex, simplex-ball and ball projections
//! - [`dro`]: distributionally robust logistic regression
//! - [`bench`]: multi-path benchmark harness

pub mod bench;
pub mod dro;
pub mod error;
pub mod numerics;
pub mod problem;
pub mod projection;
pub mod robustness;
pub mod solvers;
pub mod tuning;

/// Library version, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub use error::{Error, Result};
pub use problem::{NoiseProfile, QuadraticBilinearProblem, QuadraticSpec, SaddlePointProblem, SmoothnessProfile};
pub use solvers::SapdParams;
