//! De-sparsified (debiased) Lasso inference for high-dimensional linear and
//! logistic regression.
//!
//! The pipeline is: an ℓ1-penalized fit ([`lasso`], [`glm`]), a relaxed
//! inverse of the Gram or Hessian matrix by nodewise regression
//! ([`nodewise`]), a one-step bias correction with standard errors
//! ([`inference`], [`glm`]), and multiplicity adjustment
//! ([`multiplicity`]). [`pipeline`] chains these steps for one data set and
//! [`simbench`] drives coverage and error-rate studies.

pub mod error;
pub mod glm;
pub mod inference;
pub mod io;
pub mod lasso;
pub mod multiplicity;
pub mod nodewise;
pub mod numerics;
pub mod pipeline;
pub mod simbench;

pub use error::{Error, Result};
