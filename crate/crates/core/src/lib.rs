//! Guided diffusion sampling over analytic Gaussian-mixture priors.
//!
//! Everything here is built around one idea: when the data prior is a
//! Gaussian mixture, the noised marginals, scores, and posteriors of a
//! variance-preserving diffusion are available in closed form. That turns
//! guidance strategies (DPS, LGD-MC, DSG, ABMS) into objects whose gradient
//! quality, estimator bias, and Jensen-gap bounds can be checked against
//! exact oracles instead of eyeballed.
//!
//! Crate layout:
//! - [`schedule`], [`diffusion`]: discrete-time VP noise schedules and
//!   forward/reverse/Tweedie/DDIM steps.
//! - [`gmm`], [`prior`]: mixture priors, exact noised marginals, scores,
//!   score Hessian-vector products, and exact posteriors `p(x0|xt)` and
//!   `p(x_{t-1}|x_t)`.
//! - [`engine`]: a small reverse-mode tape over the closed set of
//!   primitives the guidance pipelines need.
//! - [`conditions`]: differentiable condition losses (linear inverse,
//!   property targets, decoupled dual-attribute tasks) with computable
//!   Lipschitz constants.
//! - [`guidance`]: the four guided-step strategies behind one interface.
//! - [`estimator`], [`evaluation`], [`metrics`]: the oracle lab — estimator
//!   error reports, bound checks, dual-focus sweeps, and two-sample
//!   distribution distances.
//!
//! Core numerics are generic over [`scalar::Scalar`] (`f32` or `f64`);
//! every public type defaults its scalar parameter to `f64`, which is what
//! the lab layer and the CLI use throughout.

pub mod cli;
pub mod conditions;
pub mod configs;
pub mod diffusion;
pub mod engine;
pub mod error;
pub mod estimator;
pub mod evaluation;
pub mod gmm;
pub mod guidance;
pub mod linalg;
pub mod metrics;
pub mod prior;
pub mod report;
pub mod rng;
pub mod sampler;
pub mod scalar;
pub mod schedule;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Concrete (f64) aliases; the generic names default to f64 as well.
pub type Point = Vec<f64>;
pub type Matrix = linalg::Mat<f64>;
pub type Schedule = schedule::NoiseSchedule<f64>;
pub type Mixture = gmm::GaussianMixture<f64>;
pub type Prior = prior::AnalyticPrior<f64>;
pub type Posterior = prior::PosteriorGmm<f64>;
pub type Gradient = engine::DualGradient<f64>;
pub type Condition = conditions::ConditionFn<f64>;

