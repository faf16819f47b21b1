//! Regression estimators: the exact capped-least-squares optimum, randomized
//! gradient descent, the subsample-initialized hybrid, and the OLS, adaptive
//! Huber, and least-trimmed-squares baselines.

mod ahr;
mod exact;
mod hybrid;
mod lts;
mod rgd;

pub use ahr::fit_ahr;
pub use exact::{fit_exact, ExactConfig, ExactStrategy};
pub use hybrid::fit_hybrid;
pub use lts::{default_lts_h, fit_lts};
pub use rgd::{fit_rgd, fit_rgd_single, sample_ball, RgdConfig};

use crate::error::Result;
use crate::loss::{empirical_loss, Dataset, LossConfig};
use crate::numerics::solve_least_squares;
use serde::{Deserialize, Serialize};
use std::time::Instant;

/// Which routine produced a fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Solver {
    Exact,
    Rgd,
    Hybrid,
    Ols,
    Ahr,
    Lts,
}

impl std::fmt::Display for Solver {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Solver::Exact => "exact",
            Solver::Rgd => "rgd",
            Solver::Hybrid => "hybrid",
            Solver::Ols => "ols",
            Solver::Ahr => "ahr",
            Solver::Lts => "lts",
        };
        f.write_str(s)
    }
}

/// Output of any estimator.
///
/// `loss` is the solver's own objective at `beta`: the mean capped loss for
/// the CLS solvers, the mean squared-residual/2 for OLS (the capped loss with
/// the cap never binding), the mean Huber loss for AHR, and the trimmed sum
/// of squares for LTS.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitResult {
    pub beta: Vec<f64>,
    pub loss: f64,
    pub inlier_mask: Vec<bool>,
    pub iterations: usize,
    pub restarts_used: usize,
    pub solver: Solver,
    pub elapsed_seconds: f64,
    /// Set when every RGD restart landed in the flat region (zero gradient
    /// everywhere); the fit is then only as good as the best start.
    #[serde(default)]
    pub all_starts_flat: bool,
}

impl FitResult {
    pub(crate) fn inlier_mask_for(data: &Dataset, beta: &[f64], tau: f64) -> Vec<bool> {
        data.residuals(beta)
            .map(|r| r.iter().map(|ri| ri.abs() <= tau).collect())
            .unwrap_or_default()
    }
}

/// Ordinary least squares; the inlier mask is all true by the tau = infinity
/// convention and `loss` is the mean squared residual over two.
pub fn fit_ols(data: &Dataset) -> Result<FitResult> {
    let start = Instant::now();
    let design = data.design();
    let beta = solve_least_squares(&design, data.y())?;
    let r = data.residuals(&beta)?;
    let loss = r.iter().map(|v| 0.5 * v * v).sum::<f64>() / data.n() as f64;
    Ok(FitResult {
        beta,
        loss,
        inlier_mask: vec![true; data.n()],
        iterations: 1,
        restarts_used: 0,
        solver: Solver::Ols,
        elapsed_seconds: start.elapsed().as_secs_f64(),
        all_starts_flat: false,
    })
}

/// Recomputes the capped empirical loss and mask at `beta` so the stored
/// fields always agree with the returned coefficients.
pub(crate) fn finish_cls_fit(
    data: &Dataset,
    cfg: &LossConfig,
    beta: Vec<f64>,
    iterations: usize,
    restarts_used: usize,
    solver: Solver,
    start: Instant,
) -> Result<FitResult> {
    let loss = empirical_loss(data, &beta, cfg)?;
    let inlier_mask = FitResult::inlier_mask_for(data, &beta, cfg.tau);
    Ok(FitResult {
        beta,
        loss,
        inlier_mask,
        iterations,
        restarts_used,
        solver,
        elapsed_seconds: start.elapsed().as_secs_f64(),
        all_starts_flat: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Matrix;

    #[test]
    fn ols_identity_fit() {
        let x = Matrix::identity(3);
        let data = Dataset::new(x, vec![1.0, 2.0, 3.0], false).unwrap();
        let fit = fit_ols(&data).unwrap();
        assert_eq!(fit.beta, vec![1.0, 2.0, 3.0]);
        assert_eq!(fit.loss, 0.0);
        assert!(fit.inlier_mask.iter().all(|&b| b));
        assert_eq!(fit.solver, Solver::Ols);
    }
}
