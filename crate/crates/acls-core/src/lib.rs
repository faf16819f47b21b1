//! Adaptive capped least squares regression toolkit.
//!
//! The capped loss is quadratic up to a resistance parameter tau and flat
//! beyond it, so samples with residuals past the cap drop out of the
//! estimating equations entirely. Growing tau with the sample size keeps
//! the estimator efficient while the flat region preserves a high breakdown
//! point. This crate provides:
//!
//! - the loss, score, and tau selection rules ([`loss`]);
//! - an exact small-instance solver, randomized gradient descent, a
//!   subsample-initialized hybrid, and OLS / adaptive Huber / least trimmed
//!   squares baselines ([`estimators`]);
//! - plug-in asymptotic inference and fit metrics ([`inference`]);
//! - scenario generators, a replication harness, loss-landscape profiles,
//!   and an empirical breakdown probe ([`simulation`]);
//! - robust low-rank subspace recovery for background extraction
//!   ([`subspace`]);
//! - blind inpainting by capped-loss sparse coding ([`inpaint`]).
//!
//! The `acls` binary exposes all of it as batch subcommands.

pub mod container;
pub mod error;
pub mod estimators;
pub mod inference;
pub mod inpaint;
pub mod loss;
pub mod numerics;
pub mod pgm;
pub mod simulation;
pub mod subspace;

pub use error::{AclsError, Result};
pub use estimators::{
    fit_ahr, fit_exact, fit_hybrid, fit_lts, fit_ols, fit_rgd, fit_rgd_single, ExactConfig,
    ExactStrategy, FitResult, RgdConfig, Solver,
};
pub use inference::{mape, mse, residual_variance_ols, robust_inference, InferenceReport};
pub use loss::{
    cls_loss, cls_score, empirical_gradient, empirical_loss, select_tau, Dataset, LossConfig,
    TauRule,
};
pub use numerics::Matrix;
