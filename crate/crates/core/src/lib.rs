//! Conditional-mean identities for additive Gaussian noise: the score-based
//! posterior mean, conditional moments and cumulants through Bell
//! polynomials, Lanczos differentiation, series inversion, laws of the
//! estimator and its error, MMSE bounds and empirical-Bayes estimators.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analytic;
pub mod channel;
pub mod distributions;
pub mod empirical_bayes;
pub mod error;
pub mod identities;
pub mod infodensity;
pub mod lanczos;
pub mod mmse;
pub mod multivar;
pub mod polybasis;
pub mod prior_spec;
pub mod quadrature;

pub use channel::{EventSet, PosteriorOracle, Prior, ScalarChannel};
pub use error::{CmeError, Result};
