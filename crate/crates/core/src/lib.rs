//! Bayesian seemingly unrelated local projections.

pub mod baselines;
pub mod dataset;
pub mod dgp;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod model;
pub mod power_posterior;
pub mod priors;
pub mod random;
pub mod sampler;
pub mod summary;

pub use error::{Result, SulpError};
