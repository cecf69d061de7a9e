//! Numerical laboratory for the local semicircle law of Wigner matrices.
//!
//! The crate samples Wigner ensembles, evaluates resolvents `G(z) = (H - z)^-1`
//! and their entry-zeroed minors, checks the exact algebraic identities that
//! hold for every Hermitian matrix, and turns the high-probability bounds of
//! local-law theory into Monte Carlo experiments with explicit acceptance
//! thresholds.
//!
//! Module map:
//!
//! - [`ensemble`]: entry laws, reproducible sampling, minors and their rank-2 perturbations
//! - [`spectral`]: eigendecompositions, resolvents, minor updates, identity residuals
//! - [`semicircle`]: density, Stieltjes transform, stability function
//! - [`concentration`]: conditional expectations over the first row, Efron–Stein statistics, events
//! - [`domination`]: finite-N surrogates for stochastic domination, tail tables, slope fits
//! - [`bootstrap`]: the multi-scale ladder and the end-to-end local-law sweep
//! - [`harness`]: configuration, parallel execution, CSV persistence, reporting
//!
//! Indices are zero-based throughout: the distinguished "first row" is row `0`.

// `!(x > 0.0)` style guards are used on purpose: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bootstrap;
pub mod concentration;
pub mod domination;
pub mod ensemble;
pub mod harness;
pub mod seed;
pub mod semicircle;
pub mod spectral;
pub mod summary;

mod par;

pub use faer::Mat;
pub use num_complex::Complex64 as c64;
