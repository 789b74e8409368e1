//! MAP estimation for Bayesian inverse problems with sparsity-promoting
//! `B^s_1` Besov priors on the periodic torus, plus a Monte Carlo laboratory
//! for checking small-ball probability identities of these measures.
//!
//! The prior is the truncated product measure on wavelet coefficients
//! `c_ℓ = ℓ^{-(s/d-1/2)} X_ℓ` with `X_ℓ` i.i.d. unit Laplace, so that its
//! formal density is proportional to `exp(-‖u‖_{B^s_1})`. Everything is
//! computed exactly in `N` dimensions; infinite-dimensional statements are
//! probed through sweeps over `N` and the ball radius.
//!
//! Modules:
//!
//! - [`wavelet`]: periodic Haar basis with a single global index.
//! - [`besov`]: prior parameters, norms, sampling, Radon–Nikodym derivative,
//!   Hellinger factors and the logarithmic derivative.
//! - [`forward`]: forward maps, Gaussian noise and the misfit potential.
//! - [`solver`]: proximal-gradient minimisation of `Φ + ‖·‖_{B^s_1}` with
//!   optimality and weak-MAP certificates.
//! - [`lab`]: small-ball probability estimators and limit experiments.
//! - [`consistency`]: repeated-observation consistency runs.
//! - [`config`]: experiment configuration shared with the command line tool.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod besov;
pub mod config;
pub mod consistency;
mod error;
pub mod forward;
pub mod lab;
pub mod rng;
pub mod solver;
mod sum;
pub mod wavelet;

pub use besov::{BesovParams, CoefficientField};
pub use consistency::{ConsistencyRow, ConsistencySchedule, ConsistencySummary};
pub use error::{Error, Result};
pub use forward::{ForwardModel, ForwardProblem, Misfit, ModelKind, NoiseCovariance, Observation};
pub use lab::{BallSpec, MonteCarloEstimate};
pub use solver::{MapResult, SolverConfig};
