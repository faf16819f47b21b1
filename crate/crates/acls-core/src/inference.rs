//! Plug-in asymptotic inference for capped-least-squares fits, plus the
//! MSE / MAPE fit-quality metrics.
//!
//! The residual variance and the design second-moment matrix are both
//! estimated over the n_e samples whose absolute residuals stay within tau;
//! the coefficient covariance is assembled as (sigma2_hat / n_e) *
//! sigma_tau_hat^{-1} and p-values come from the two-sided normal tail.

use crate::error::{AclsError, Result};
use crate::estimators::FitResult;
use crate::loss::{Dataset, LossConfig};
use crate::numerics::{inverse_spd, Matrix};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InferenceReport {
    pub beta: Vec<f64>,
    pub se: Vec<f64>,
    pub p_values: Vec<f64>,
    pub sigma2_hat: f64,
    pub n_effective: usize,
    pub sigma_tau_hat: Vec<Vec<f64>>,
}

/// Standard normal CDF through erfc.
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / std::f64::consts::SQRT_2)
}

/// Two-sided p-value for the standardized statistic t = |beta_j| / se_j.
fn two_sided_p(t: f64) -> f64 {
    libm::erfc(t / std::f64::consts::SQRT_2)
}

pub fn robust_inference(
    data: &Dataset,
    fit: &FitResult,
    cfg: &LossConfig,
) -> Result<InferenceReport> {
    let tau = cfg.tau;
    let design = data.design();
    let p = design.cols();
    let r = data.residuals(&fit.beta)?;

    let inliers: Vec<usize> = (0..data.n()).filter(|&i| r[i].abs() <= tau).collect();
    let n_e = inliers.len();
    if n_e <= p {
        return Err(AclsError::InsufficientInliers {
            n_effective: n_e,
            p,
        });
    }

    let mut sigma2 = 0.0;
    let mut sigma_tau = Matrix::zeros(p, p);
    for &i in &inliers {
        sigma2 += r[i] * r[i];
        let xi = design.row(i);
        for a in 0..p {
            for b in 0..p {
                sigma_tau[(a, b)] += xi[a] * xi[b];
            }
        }
    }
    sigma2 /= n_e as f64;
    for a in 0..p {
        for b in 0..p {
            sigma_tau[(a, b)] /= n_e as f64;
        }
    }

    let sigma_tau_inv = inverse_spd(&sigma_tau).map_err(|_| {
        AclsError::DegenerateDesign("sigma_tau_hat is not positive definite".into())
    })?;

    let mut se = Vec::with_capacity(p);
    let mut p_values = Vec::with_capacity(p);
    for j in 0..p {
        let var = sigma2 / n_e as f64 * sigma_tau_inv[(j, j)];
        let s = var.max(0.0).sqrt();
        se.push(s);
        let pv = if s > 0.0 {
            two_sided_p(fit.beta[j].abs() / s)
        } else if fit.beta[j] == 0.0 {
            1.0
        } else {
            0.0
        };
        p_values.push(pv);
    }

    let sigma_tau_rows = (0..p).map(|i| sigma_tau.row(i).to_vec()).collect();
    Ok(InferenceReport {
        beta: fit.beta.clone(),
        se,
        p_values,
        sigma2_hat: sigma2,
        n_effective: n_e,
        sigma_tau_hat: sigma_tau_rows,
    })
}

/// Squared l2 distance between an estimate and the truth.
pub fn mse(beta_hat: &[f64], beta_star: &[f64]) -> Result<f64> {
    if beta_hat.len() != beta_star.len() {
        return Err(AclsError::invalid("mse: length mismatch"));
    }
    Ok(beta_hat
        .iter()
        .zip(beta_star)
        .map(|(a, b)| (a - b) * (a - b))
        .sum())
}

/// Mean absolute residual.
pub fn mape(data: &Dataset, beta_hat: &[f64]) -> Result<f64> {
    let r = data.residuals(beta_hat)?;
    Ok(r.iter().map(|v| v.abs()).sum::<f64>() / data.n() as f64)
}

/// Mean squared OLS residual.
pub fn residual_variance_ols(data: &Dataset) -> Result<f64> {
    let ols = crate::estimators::fit_ols(data)?;
    let r = data.residuals(&ols.beta)?;
    Ok(r.iter().map(|v| v * v).sum::<f64>() / data.n() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::fit_ols;
    use crate::loss::LossConfig;
    use rand::prelude::*;
    use rand_chacha::ChaCha12Rng;

    fn clean_dataset(seed: u64, n: usize, d: usize) -> (Dataset, Vec<f64>) {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let beta_star: Vec<f64> = (0..d).map(|j| (j as f64) - 1.0).collect();
        let mut rows = Vec::with_capacity(n);
        let mut y = Vec::with_capacity(n);
        for _ in 0..n {
            let x: Vec<f64> = (0..d)
                .map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal))
                .collect();
            let e: f64 = rng.sample(rand_distr::StandardNormal);
            y.push(crate::numerics::dot(&x, &beta_star) + e);
            rows.push(x);
        }
        (
            Dataset::new(Matrix::from_rows(&rows).unwrap(), y, false).unwrap(),
            beta_star,
        )
    }

    #[test]
    fn clean_data_reduces_to_classical_moments() {
        let (data, _) = clean_dataset(3, 60, 3);
        let fit = fit_ols(&data).unwrap();
        let r = data.residuals(&fit.beta).unwrap();
        let tau = r.iter().fold(0.0f64, |m, v| m.max(v.abs())) + 1.0;
        let cfg = LossConfig::explicit(tau).unwrap();
        let rep = robust_inference(&data, &fit, &cfg).unwrap();
        assert_eq!(rep.n_effective, 60);
        let msr = r.iter().map(|v| v * v).sum::<f64>() / 60.0;
        assert!((rep.sigma2_hat - msr).abs() < 1e-12);
        // sigma_tau_hat = X^T X / n when every indicator is 1.
        let design = data.design();
        let gram = design.transpose().matmul(&design);
        for a in 0..3 {
            for b in 0..3 {
                assert!((rep.sigma_tau_hat[a][b] - gram[(a, b)] / 60.0).abs() < 1e-12);
            }
        }
        // And the classical standard error identity holds.
        let inv = inverse_spd(&Matrix::from_rows(&rep.sigma_tau_hat).unwrap()).unwrap();
        for j in 0..3 {
            let expect = (rep.sigma2_hat * inv[(j, j)] / 60.0).sqrt();
            assert!((rep.se[j] - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_coefficient_gets_p_value_one() {
        let (data, _) = clean_dataset(8, 40, 2);
        let fit = fit_ols(&data).unwrap();
        let mut fit = fit;
        fit.beta[0] = 0.0;
        let cfg = LossConfig::explicit(100.0).unwrap();
        let rep = robust_inference(&data, &fit, &cfg).unwrap();
        assert_eq!(rep.p_values[0], 1.0);
        assert!(rep.se.iter().all(|&s| s > 0.0));
    }

    #[test]
    fn insufficient_inliers_error() {
        let (data, _) = clean_dataset(1, 10, 2);
        let mut fit = fit_ols(&data).unwrap();
        fit.beta = vec![1e6, 1e6]; // every residual blows past tau
        let cfg = LossConfig::explicit(0.5).unwrap();
        assert!(matches!(
            robust_inference(&data, &fit, &cfg),
            Err(AclsError::InsufficientInliers { .. })
        ));
    }

    #[test]
    fn permutation_invariance_of_moment_estimates() {
        let (data, _) = clean_dataset(21, 30, 2);
        let fit = fit_ols(&data).unwrap();
        let cfg = LossConfig::explicit(2.0).unwrap();
        let rep1 = robust_inference(&data, &fit, &cfg).unwrap();

        let mut idx: Vec<usize> = (0..30).collect();
        let mut rng = ChaCha12Rng::seed_from_u64(2);
        idx.shuffle(&mut rng);
        let permuted = data.subset(&idx).unwrap();
        let rep2 = robust_inference(&permuted, &fit, &cfg).unwrap();
        assert!((rep1.sigma2_hat - rep2.sigma2_hat).abs() < 1e-12);
        for a in 0..2 {
            for b in 0..2 {
                assert!((rep1.sigma_tau_hat[a][b] - rep2.sigma_tau_hat[a][b]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn metric_examples() {
        assert_eq!(mse(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(mse(&[0.0, 3.0], &[0.0, 0.0]).unwrap(), 9.0);

        let x = Matrix::from_row_major(2, 1, vec![1.0, 1.0]).unwrap();
        let data = Dataset::new(x, vec![1.0, 3.0], false).unwrap();
        assert_eq!(mape(&data, &[0.0]).unwrap(), 2.0);
        let x = Matrix::from_row_major(2, 1, vec![1.0, 2.0]).unwrap();
        let perfect = Dataset::new(x, vec![2.0, 4.0], false).unwrap();
        assert_eq!(mape(&perfect, &[2.0]).unwrap(), 0.0);
        assert_eq!(residual_variance_ols(&perfect).unwrap(), 0.0);
    }

    #[test]
    fn metrics_match_recomputation() {
        let (data, beta_star) = clean_dataset(77, 25, 3);
        let fit = fit_ols(&data).unwrap();
        let m = mse(&fit.beta, &beta_star).unwrap();
        let direct: f64 = fit
            .beta
            .iter()
            .zip(&beta_star)
            .map(|(a, b)| (a - b).powi(2))
            .sum();
        assert!((m - direct).abs() < 1e-15);

        let r = data.residuals(&fit.beta).unwrap();
        let expect_mape = r.iter().map(|v| v.abs()).sum::<f64>() / 25.0;
        assert!((mape(&data, &fit.beta).unwrap() - expect_mape).abs() < 1e-15);
        let expect_var = r.iter().map(|v| v * v).sum::<f64>() / 25.0;
        assert!((residual_variance_ols(&data).unwrap() - expect_var).abs() < 1e-15);
    }

    #[test]
    fn normal_cdf_reference_values() {
        assert!((normal_cdf(0.0) - 0.5).abs() < 1e-15);
        assert!((normal_cdf(1.959963984540054) - 0.975).abs() < 1e-12);
        assert!((normal_cdf(-1.959963984540054) - 0.025).abs() < 1e-12);
    }
}
