//! The capped least squares loss, its score function, empirical loss and
//! gradient, and the rules for choosing the resistance parameter.

use crate::error::{AclsError, Result};
use crate::numerics::Matrix;
use serde::{Deserialize, Serialize};

/// Rule used to pick the resistance parameter tau.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TauRule {
    /// Caller supplies tau directly.
    Explicit,
    /// tau = sqrt(n) / log(log(n)), natural logs.
    SqrtNOverLogLogN,
    /// tau = c * sigma_hat * sqrt(n) / log(log(n)).
    MadScaled { c: f64 },
}

/// Resistance parameter together with the rule that produced it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub tau: f64,
    pub rule: TauRule,
}

impl LossConfig {
    pub fn explicit(tau: f64) -> Result<Self> {
        if !(tau.is_finite() && tau > 0.0) {
            return Err(AclsError::invalid("tau must be positive and finite"));
        }
        Ok(LossConfig {
            tau,
            rule: TauRule::Explicit,
        })
    }

    /// Applies `rule` at sample size `n` (sigma_hat only needed for the
    /// MAD-scaled rule).
    pub fn from_rule(rule: TauRule, n: usize, sigma_hat: Option<f64>) -> Result<Self> {
        let tau = select_tau(n, rule, sigma_hat)?;
        Ok(LossConfig { tau, rule })
    }
}

/// Selects tau per the requested rule. The loglog rules require n >= 16 so
/// that log(log(n)) is safely positive.
pub fn select_tau(n: usize, rule: TauRule, sigma_hat: Option<f64>) -> Result<f64> {
    match rule {
        TauRule::Explicit => Err(AclsError::invalid(
            "explicit rule carries no formula; construct LossConfig::explicit instead",
        )),
        TauRule::SqrtNOverLogLogN => {
            if n < 16 {
                return Err(AclsError::invalid(format!(
                    "sqrt-n-over-loglog-n rule requires n >= 16, got {n}"
                )));
            }
            Ok((n as f64).sqrt() / (n as f64).ln().ln())
        }
        TauRule::MadScaled { c } => {
            if !(c.is_finite() && c > 0.0) {
                return Err(AclsError::invalid("mad-scaled constant c must be positive"));
            }
            let sigma = sigma_hat
                .ok_or_else(|| AclsError::invalid("mad-scaled rule requires sigma_hat"))?;
            if !(sigma.is_finite() && sigma >= 0.0) {
                return Err(AclsError::invalid("sigma_hat must be nonnegative"));
            }
            if sigma == 0.0 {
                return Err(AclsError::DegenerateScale);
            }
            if n < 16 {
                return Err(AclsError::invalid(format!(
                    "mad-scaled rule requires n >= 16, got {n}"
                )));
            }
            Ok(c * sigma * (n as f64).sqrt() / (n as f64).ln().ln())
        }
    }
}

/// Capped least squares loss: x^2/2 inside the cap, tau^2/2 beyond it.
pub fn cls_loss(x: f64, tau: f64) -> Result<f64> {
    if !x.is_finite() {
        return Err(AclsError::invalid("cls_loss: x must be finite"));
    }
    if !(tau.is_finite() && tau > 0.0) {
        return Err(AclsError::invalid("cls_loss: tau must be positive"));
    }
    Ok(cls_loss_raw(x, tau))
}

#[inline]
pub(crate) fn cls_loss_raw(x: f64, tau: f64) -> f64 {
    if x.abs() <= tau {
        0.5 * x * x
    } else {
        0.5 * tau * tau
    }
}

/// Score function psi_tau(x) = x * 1(|x| <= tau); the boundary counts as
/// inside the cap.
pub fn cls_score(x: f64, tau: f64) -> Result<f64> {
    if !x.is_finite() {
        return Err(AclsError::invalid("cls_score: x must be finite"));
    }
    if !(tau.is_finite() && tau > 0.0) {
        return Err(AclsError::invalid("cls_score: tau must be positive"));
    }
    Ok(if x.abs() <= tau { x } else { 0.0 })
}

/// Regression data: n-by-d predictor matrix, length-n response, and an
/// intercept convention. Estimators operate on [1 | X] when `add_intercept`
/// is set.
#[derive(Debug, Clone)]
pub struct Dataset {
    x: Matrix,
    y: Vec<f64>,
    add_intercept: bool,
}

impl Dataset {
    pub fn new(x: Matrix, y: Vec<f64>, add_intercept: bool) -> Result<Self> {
        if x.rows() == 0 || x.cols() == 0 {
            return Err(AclsError::invalid("dataset needs n >= 1 and d >= 1"));
        }
        if y.len() != x.rows() {
            return Err(AclsError::invalid(format!(
                "response length {} does not match {} rows",
                y.len(),
                x.rows()
            )));
        }
        if !y.iter().all(|v| v.is_finite()) {
            return Err(AclsError::invalid("response entries must be finite"));
        }
        Ok(Dataset {
            x,
            y,
            add_intercept,
        })
    }

    pub fn n(&self) -> usize {
        self.x.rows()
    }

    /// Column count of the design matrix the estimators actually see.
    pub fn p(&self) -> usize {
        self.x.cols() + usize::from(self.add_intercept)
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn raw_x(&self) -> &Matrix {
        &self.x
    }

    pub fn add_intercept(&self) -> bool {
        self.add_intercept
    }

    /// The (possibly intercept-augmented) design matrix.
    pub fn design(&self) -> Matrix {
        if !self.add_intercept {
            return self.x.clone();
        }
        let (n, d) = (self.x.rows(), self.x.cols());
        let mut out = Matrix::zeros(n, d + 1);
        for i in 0..n {
            out[(i, 0)] = 1.0;
            out.row_mut(i)[1..].copy_from_slice(self.x.row(i));
        }
        out
    }

    /// Residuals y - X beta over the augmented design.
    pub fn residuals(&self, beta: &[f64]) -> Result<Vec<f64>> {
        if beta.len() != self.p() {
            return Err(AclsError::invalid(format!(
                "beta length {} does not match design columns {}",
                beta.len(),
                self.p()
            )));
        }
        let off = usize::from(self.add_intercept);
        let b0 = if self.add_intercept { beta[0] } else { 0.0 };
        Ok((0..self.n())
            .map(|i| {
                let mut f = b0;
                for (xij, bj) in self.x.row(i).iter().zip(&beta[off..]) {
                    f += xij * bj;
                }
                self.y[i] - f
            })
            .collect())
    }

    /// Restricts the dataset to the given rows.
    pub fn subset(&self, rows: &[usize]) -> Result<Dataset> {
        let mut data = Vec::with_capacity(rows.len() * self.x.cols());
        let mut y = Vec::with_capacity(rows.len());
        for &i in rows {
            data.extend_from_slice(self.x.row(i));
            y.push(self.y[i]);
        }
        Dataset::new(
            Matrix::from_row_major(rows.len(), self.x.cols(), data)?,
            y,
            self.add_intercept,
        )
    }
}

/// Mean capped least squares loss over the residuals.
pub fn empirical_loss(data: &Dataset, beta: &[f64], cfg: &LossConfig) -> Result<f64> {
    let r = data.residuals(beta)?;
    Ok(r.iter().map(|&ri| cls_loss_raw(ri, cfg.tau)).sum::<f64>() / data.n() as f64)
}

/// Gradient of the empirical loss wherever it is differentiable:
/// -(1/n) sum psi_tau(r_i) x_i over the augmented design.
pub fn empirical_gradient(data: &Dataset, beta: &[f64], cfg: &LossConfig) -> Result<Vec<f64>> {
    let r = data.residuals(beta)?;
    let n = data.n() as f64;
    let off = usize::from(data.add_intercept);
    let mut grad = vec![0.0; data.p()];
    for (i, &ri) in r.iter().enumerate() {
        if ri.abs() > cfg.tau || ri == 0.0 {
            continue;
        }
        if data.add_intercept {
            grad[0] -= ri;
        }
        for (g, &xij) in grad[off..].iter_mut().zip(data.raw_x().row(i)) {
            *g -= ri * xij;
        }
    }
    for g in &mut grad {
        *g /= n;
    }
    Ok(grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn toy(xs: &[f64], ys: &[f64]) -> Dataset {
        let x = Matrix::from_row_major(xs.len(), 1, xs.to_vec()).unwrap();
        Dataset::new(x, ys.to_vec(), false).unwrap()
    }

    #[test]
    fn loss_branches() {
        assert_eq!(cls_loss(1.0, 2.0).unwrap(), 0.5);
        assert_eq!(cls_loss(5.0, 2.0).unwrap(), 2.0);
        assert_eq!(cls_loss(0.0, 7.3).unwrap(), 0.0);
        // Continuity at the cap: both branches agree at |x| = tau.
        assert_eq!(cls_loss(2.0, 2.0).unwrap(), cls_loss(2.0 + 1e-300, 2.0).unwrap());
    }

    #[test]
    fn loss_rejects_bad_input() {
        assert!(cls_loss(f64::NAN, 1.0).is_err());
        assert!(cls_loss(1.0, 0.0).is_err());
        assert!(cls_loss(1.0, -3.0).is_err());
    }

    #[test]
    fn score_boundary_and_cap() {
        assert_eq!(cls_score(2.0, 2.0).unwrap(), 2.0);
        assert_eq!(cls_score(2.1, 2.0).unwrap(), 0.0);
        assert_eq!(cls_score(-1.0, 2.0).unwrap(), -1.0);
    }

    #[test]
    fn empirical_loss_examples() {
        let data = toy(&[1.0, 1.0, 1.0], &[0.0, 0.0, 10.0]);
        let cfg = LossConfig::explicit(2.0).unwrap();
        // residuals (0, 0, 10): (0 + 0 + 2) / 3
        let l = empirical_loss(&data, &[0.0], &cfg).unwrap();
        assert!((l - 2.0 / 3.0).abs() < 1e-15);
        // all residuals capped -> exactly tau^2/2
        let l = empirical_loss(&data, &[100.0], &cfg).unwrap();
        assert_eq!(l, 2.0);
        // perfect fit -> 0
        let data = toy(&[1.0, 2.0], &[3.0, 6.0]);
        assert_eq!(empirical_loss(&data, &[3.0], &cfg).unwrap(), 0.0);
    }

    #[test]
    fn empirical_loss_dimension_mismatch() {
        let data = toy(&[1.0], &[1.0]);
        let cfg = LossConfig::explicit(1.0).unwrap();
        assert!(empirical_loss(&data, &[1.0, 2.0], &cfg).is_err());
    }

    #[test]
    fn gradient_examples() {
        let cfg = LossConfig::explicit(5.0).unwrap();
        let data = toy(&[2.0], &[1.0]);
        let g = empirical_gradient(&data, &[0.0], &cfg).unwrap();
        assert!((g[0] + 2.0).abs() < 1e-15);

        let cfg = LossConfig::explicit(2.0).unwrap();
        let data = toy(&[1.0], &[3.0]);
        let g = empirical_gradient(&data, &[0.0], &cfg).unwrap();
        assert_eq!(g[0], 0.0);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        // Central differences at a point with residuals well away from the cap.
        use rand::prelude::*;
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(5);
        let n = 30;
        let xs: Vec<Vec<f64>> = (0..n)
            .map(|_| {
                (0..3)
                    .map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal))
                    .collect()
            })
            .collect();
        let beta_star = [1.0, -2.0, 0.5];
        let ys: Vec<f64> = xs
            .iter()
            .map(|x| {
                crate::numerics::dot(x, &beta_star)
                    + 0.1 * rng.sample::<f64, _>(rand_distr::StandardNormal)
            })
            .collect();
        let data = Dataset::new(Matrix::from_rows(&xs).unwrap(), ys, false).unwrap();
        let cfg = LossConfig::explicit(3.0).unwrap();
        let beta = [0.9, -1.8, 0.6];
        let h = 1e-6;
        let r = data.residuals(&beta).unwrap();
        assert!(r.iter().all(|ri| (ri.abs() - cfg.tau).abs() > 10.0 * h));

        let grad = empirical_gradient(&data, &beta, &cfg).unwrap();
        for j in 0..3 {
            let mut bp = beta.to_vec();
            let mut bm = beta.to_vec();
            bp[j] += h;
            bm[j] -= h;
            let fd = (empirical_loss(&data, &bp, &cfg).unwrap()
                - empirical_loss(&data, &bm, &cfg).unwrap())
                / (2.0 * h);
            let denom = grad[j].abs().max(1e-8);
            assert!(
                ((grad[j] - fd) / denom).abs() <= 1e-6,
                "component {j}: analytic {} vs fd {fd}",
                grad[j]
            );
        }
    }

    #[test]
    fn tau_rule_values() {
        let t = select_tau(50, TauRule::SqrtNOverLogLogN, None).unwrap();
        let expect = 50.0_f64.sqrt() / 50.0_f64.ln().ln();
        assert!((t - expect).abs() < 1e-15);
        assert!((t - 5.1839).abs() < 1e-3);

        // MAD-scaled check against the sigma_hat = 0.1512 -> tau = 2.9811 pair
        // at n = 1546.
        let t = select_tau(1546, TauRule::MadScaled { c: 1.0 }, Some(0.1512)).unwrap();
        assert!((t - 2.9811).abs() < 1e-3, "got {t}");

        assert!(select_tau(8, TauRule::SqrtNOverLogLogN, None).is_err());
        assert!(matches!(
            select_tau(100, TauRule::MadScaled { c: 1.0 }, Some(0.0)),
            Err(AclsError::DegenerateScale)
        ));
    }

    #[test]
    fn explicit_config_passthrough() {
        let cfg = LossConfig::explicit(3.0).unwrap();
        assert_eq!(cfg.tau, 3.0);
        assert!(LossConfig::explicit(f64::INFINITY).is_err());
    }

    proptest! {
        #[test]
        fn loss_bounds_and_evenness(x in -100.0..100.0f64, tau in 1e-3..50.0f64) {
            let l = cls_loss(x, tau).unwrap();
            prop_assert!(l >= 0.0 && l <= 0.5 * tau * tau + 1e-15);
            prop_assert_eq!(l, cls_loss(-x, tau).unwrap());
        }

        #[test]
        fn loss_nondecreasing_in_magnitude(x in 0.0..50.0f64, dx in 0.0..50.0f64, tau in 1e-3..20.0f64) {
            prop_assert!(cls_loss(x + dx, tau).unwrap() >= cls_loss(x, tau).unwrap());
        }

        #[test]
        fn score_zero_iff_origin_or_capped(x in -50.0..50.0f64, tau in 1e-3..20.0f64) {
            let s = cls_score(x, tau).unwrap();
            prop_assert_eq!(s == 0.0, x == 0.0 || x.abs() > tau);
        }

        #[test]
        fn loss_permutation_invariant(seed in 0u64..1000) {
            use rand::prelude::*;
            let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(seed);
            let n = 12;
            let xs: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal)).collect();
            let ys: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal)).collect();
            let cfg = LossConfig::explicit(1.5).unwrap();
            let l1 = empirical_loss(&toy(&xs, &ys), &[0.7], &cfg).unwrap();
            let mut idx: Vec<usize> = (0..n).collect();
            idx.shuffle(&mut rng);
            let xs2: Vec<f64> = idx.iter().map(|&i| xs[i]).collect();
            let ys2: Vec<f64> = idx.iter().map(|&i| ys[i]).collect();
            let l2 = empirical_loss(&toy(&xs2, &ys2), &[0.7], &cfg).unwrap();
            prop_assert!((l1 - l2).abs() < 1e-12);
        }

        #[test]
        fn large_tau_recovers_ols_objective(seed in 0u64..1000) {
            use rand::prelude::*;
            let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(seed);
            let n = 10;
            let xs: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal)).collect();
            let ys: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal)).collect();
            let data = toy(&xs, &ys);
            let beta = [0.3];
            let r = data.residuals(&beta).unwrap();
            let tau = r.iter().fold(0.0f64, |m, v| m.max(v.abs())) + 1.0;
            let cfg = LossConfig::explicit(tau).unwrap();
            let cls = empirical_loss(&data, &beta, &cfg).unwrap();
            let ols = r.iter().map(|v| 0.5 * v * v).sum::<f64>() / n as f64;
            prop_assert_eq!(cls, ols);
        }
    }
}
