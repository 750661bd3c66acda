//! Covariate-balancing weights for treatments of arbitrary type.
//!
//! The observational sample is reweighted so that the joint distribution of
//! (treatment, covariates) looks like the product of its marginals — the
//! distribution an experiment would have produced. The distance between the
//! reweighted sample and that pseudo-interventional target is an integral
//! probability metric over a user-chosen function class: an RKHS ball (MMD),
//! a finite class of moment functions, or 1-Lipschitz functions
//! (Wasserstein-1). Weights minimize the squared IPM plus an optional
//! regularizer that trades balance against effective sample size.
//!
//! The pipeline is two-step: [`solver`] produces the weights, [`regression`]
//! fits a weighted dose-response model on top of them. [`tuning`] has the
//! diagnostics (effective sample size, balance tables, regularization
//! frontiers), [`sim`] a benchmark harness over synthetic confounded
//! scenarios, and [`cli`] the command-line entry points.

pub mod cli;
pub mod data;
pub mod discrepancy;
pub mod error;
pub mod kernel;
pub mod linalg;
pub mod regression;
pub mod seed;
pub mod sim;
pub mod solver;
pub mod target;
pub mod tuning;

pub use data::{Dataset, StandardizationInfo, WeightSolution};
pub use error::{Error, Result};
pub use kernel::KernelSpec;
pub use target::TargetSample;
