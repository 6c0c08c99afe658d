//! Lazy reversible Markov chain Monte Carlo with explicit error bounds.
//!
//! The crate has two halves. The discrete half ([`chain`], [`bounds`],
//! [`estimator::exact`], [`verify`]) represents finite-state kernels as
//! row-stochastic matrices and evaluates every quantity exactly, so the
//! closed-form bounds can be checked against ground truth. The continuous
//! half ([`density`], [`metropolis`], [`estimator`], [`quadrature`]) runs
//! the lazy Metropolis ball walk on the closed unit ball and measures its
//! mean-square error against the same bounds.
//!
//! ```
//! use lazymc_core::bounds;
//!
//! // Certified conductance of the lazy ball walk for d = 3, alpha = 2.
//! let phi = bounds::lazification_conductance(bounds::ball_walk_conductance_lower(3, 2.0)).unwrap();
//! assert_eq!(phi, 0.0003125);
//! ```

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bounds;
pub mod chain;
pub mod density;
pub mod error;
pub mod estimator;
pub mod metropolis;
pub mod quadrature;
pub mod random;
pub mod verify;

pub use bounds::{BallPlan, BoundReport, ConductanceValue, Cost};
pub use chain::{DiscreteKernel, KernelDocument, Norm, ProbabilityVector, StateFunction};
pub use density::{ClassCheck, DensityOracle, Integrand};
pub use error::{Error, Result};
pub use estimator::{ChainRun, MseReport, RunConfig};
pub use metropolis::{ChainState, StepOutcome, WalkConfig};

/// Row sums and entry ranges of a kernel are validated to this tolerance.
pub const STOCHASTIC_TOL: f64 = 1e-12;

/// Tolerance for derived identities (stationarity, detailed balance, swaps).
pub const IDENTITY_TOL: f64 = 1e-10;
