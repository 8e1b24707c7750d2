//! Dropout as a Bayesian likelihood modification for linear and logistic
//! regression.
//!
//! * [`linreg`]: closed-form posterior under the expected dropout likelihood.
//! * [`logreg`]: Gaussian-approximated dropout likelihood for logistic regression.
//! * [`hmc`]: Hamiltonian Monte Carlo with a Metropolis step on the precision.
//! * [`svb`]: stochastic variational Bayes that corrupts weights directly.
//! * [`harness`]: replicated experiments and reports.

pub mod data;
pub mod error;
pub mod harness;
pub mod hmc;
pub mod linreg;
pub mod logreg;
pub mod metrics;
pub mod parallel;
pub mod rng;
pub mod scenario;
pub mod svb;

pub use error::{Error, Result};
pub use parallel::Execution;
pub use rng::RngStream;
