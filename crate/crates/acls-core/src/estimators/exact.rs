//! Exact global minimization of the capped empirical loss.
//!
//! For a fixed outlier indicator vector z the inner problem is ordinary
//! least squares on the rows with z_i = 0, contributing their squared
//! residuals, while every z_i = 1 row contributes the flat tau^2/2. The
//! joint optimum over (beta, z) therefore equals the best subset-OLS value
//! over all 2^n indicator vectors, and no big-M constant is ever needed.
//! Both an exhaustive enumeration and a branch-and-bound search over z are
//! provided; they must agree to near machine precision.

use super::{finish_cls_fit, FitResult, Solver};
use crate::error::{AclsError, Result};
use crate::loss::{Dataset, LossConfig};
use crate::numerics::{
    cholesky, cholesky_solve, dot, least_squares_min_norm, solve_least_squares, Matrix, RANK_TOL,
};
use serde::{Deserialize, Serialize};
use std::time::Instant;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExactStrategy {
    Enumerate,
    BranchAndBound,
}

/// Settings for the exact solver. `max_n` is a refusal threshold: beyond it
/// the 2^n search space is no longer desk-scale.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ExactConfig {
    pub max_n: usize,
    pub strategy: ExactStrategy,
}

impl Default for ExactConfig {
    fn default() -> Self {
        ExactConfig {
            max_n: 24,
            strategy: ExactStrategy::BranchAndBound,
        }
    }
}

/// Global minimizer of the capped empirical loss.
pub fn fit_exact(data: &Dataset, cfg: &LossConfig, xcfg: &ExactConfig) -> Result<FitResult> {
    let start = Instant::now();
    let n = data.n();
    if n > xcfg.max_n {
        return Err(AclsError::InstanceTooLarge {
            n,
            max_n: xcfg.max_n,
        });
    }
    let design = data.design();
    let p = design.cols();
    // If the full design is column-rank-deficient, no inlier subset can
    // determine beta either.
    if let Err(AclsError::SingularSystem { effective_rank, .. }) =
        solve_least_squares(&design, data.y())
    {
        return Err(AclsError::DegenerateDesign(format!(
            "design has column rank {effective_rank} < {p}"
        )));
    }
    let (beta, iterations) = match xcfg.strategy {
        ExactStrategy::Enumerate => enumerate(&design, data.y(), cfg.tau)?,
        ExactStrategy::BranchAndBound => branch_and_bound(&design, data.y(), cfg.tau)?,
    };
    finish_cls_fit(data, cfg, beta, iterations, 0, Solver::Exact, start)
}

/// Least squares on the selected rows; falls back to the minimum-norm
/// solution when the subset does not pin beta down. Returns (beta, rss).
fn subset_fit(design: &Matrix, y: &[f64], rows: &[usize]) -> Result<(Vec<f64>, f64)> {
    let p = design.cols();
    if rows.is_empty() {
        return Ok((vec![0.0; p], 0.0));
    }
    let mut sub = Matrix::zeros(rows.len(), p);
    let mut ysub = Vec::with_capacity(rows.len());
    for (k, &i) in rows.iter().enumerate() {
        sub.row_mut(k).copy_from_slice(design.row(i));
        ysub.push(y[i]);
    }
    match solve_least_squares(&sub, &ysub) {
        Ok(beta) => {
            let rss = rows
                .iter()
                .map(|&i| {
                    let r = y[i] - dot(design.row(i), &beta);
                    r * r
                })
                .sum::<f64>();
            Ok((beta, rss))
        }
        Err(AclsError::SingularSystem { .. }) => {
            let (beta, rss) = least_squares_min_norm(&sub, &ysub)?;
            Ok((beta, rss))
        }
        Err(e) => Err(e),
    }
}

/// Exhaustive sweep over all 2^n outlier indicators; first-found wins ties.
fn enumerate(design: &Matrix, y: &[f64], tau: f64) -> Result<(Vec<f64>, usize)> {
    let n = design.rows();
    let half_tau2 = 0.5 * tau * tau;
    let mut best_value = f64::INFINITY;
    let mut best_beta: Option<Vec<f64>> = None;
    let mut rows = Vec::with_capacity(n);
    for mask in 0u64..(1u64 << n) {
        rows.clear();
        for i in 0..n {
            if mask & (1 << i) == 0 {
                rows.push(i);
            }
        }
        let n_out = n - rows.len();
        if (n_out as f64 * half_tau2) / n as f64 >= best_value {
            continue;
        }
        let (beta, rss) = subset_fit(design, y, &rows)?;
        let value = (0.5 * rss + n_out as f64 * half_tau2) / n as f64;
        if value < best_value {
            best_value = value;
            best_beta = Some(beta);
        }
    }
    let beta = best_beta.ok_or_else(|| AclsError::DegenerateDesign("no subset fit".into()))?;
    Ok((beta, 1 << n))
}

/// Incremental normal equations over the currently assigned inlier rows.
struct Node {
    gram: Matrix,
    xty: Vec<f64>,
    yty: f64,
    n_in: usize,
}

impl Node {
    fn new(p: usize) -> Self {
        Node {
            gram: Matrix::zeros(p, p),
            xty: vec![0.0; p],
            yty: 0.0,
            n_in: 0,
        }
    }

    fn push(&mut self, x: &[f64], y: f64) {
        let p = x.len();
        for i in 0..p {
            for j in 0..p {
                self.gram[(i, j)] += x[i] * x[j];
            }
            self.xty[i] += x[i] * y;
        }
        self.yty += y * y;
        self.n_in += 1;
    }

    fn pop(&mut self, x: &[f64], y: f64) {
        let p = x.len();
        for i in 0..p {
            for j in 0..p {
                self.gram[(i, j)] -= x[i] * x[j];
            }
            self.xty[i] -= x[i] * y;
        }
        self.yty -= y * y;
        self.n_in -= 1;
    }

    /// Lower bound on the inlier residual sum of squares: the exact OLS rss
    /// when the Gram matrix is invertible, zero otherwise.
    fn rss_lower_bound(&self) -> f64 {
        if self.n_in == 0 {
            return 0.0;
        }
        let scale = self.gram.max_abs().max(1.0);
        match cholesky(&self.gram, RANK_TOL * scale) {
            Ok(l) => {
                let beta = cholesky_solve(&l, &self.xty);
                (self.yty - dot(&self.xty, &beta)).max(0.0)
            }
            Err(_) => 0.0,
        }
    }
}

/// Depth-first branch and bound over the outlier indicators. Rows are
/// visited in descending order of a refined fit's absolute residuals so the
/// ambiguous ones are decided early, and each partial assignment is pruned
/// against the incumbent using the bound: assigned-inlier OLS rss plus
/// tau^2/2 per assigned outlier (unassigned rows contribute >= 0).
fn branch_and_bound(design: &Matrix, y: &[f64], tau: f64) -> Result<(Vec<f64>, usize)> {
    let n = design.rows();
    let half_tau2 = 0.5 * tau * tau;

    // Incumbent from alternating subset-OLS / mask refinement started at OLS.
    let all_rows: Vec<usize> = (0..n).collect();
    let (mut beta_ref, rss_all) = subset_fit(design, y, &all_rows)?;
    let mut best_value = (0.5 * rss_all) / n as f64;
    let mut best_beta = beta_ref.clone();
    let mut mask: Vec<bool> = vec![false; n];
    for _ in 0..20 {
        let new_mask: Vec<bool> = (0..n)
            .map(|i| (y[i] - dot(design.row(i), &beta_ref)).abs() > tau)
            .collect();
        if new_mask == mask {
            break;
        }
        mask = new_mask;
        let rows: Vec<usize> = (0..n).filter(|&i| !mask[i]).collect();
        let n_out = n - rows.len();
        let (beta, rss) = subset_fit(design, y, &rows)?;
        let value = (0.5 * rss + n_out as f64 * half_tau2) / n as f64;
        if value < best_value {
            best_value = value;
            best_beta = beta.clone();
        }
        beta_ref = beta;
    }

    // Visit rows with the largest refined residuals first; branch toward the
    // side the refined fit suggests.
    let mut order: Vec<usize> = (0..n).collect();
    let resid: Vec<f64> = (0..n)
        .map(|i| (y[i] - dot(design.row(i), &beta_ref)).abs())
        .collect();
    order.sort_by(|&a, &b| resid[b].partial_cmp(&resid[a]).unwrap().then(a.cmp(&b)));
    let suggest_outlier: Vec<bool> = order.iter().map(|&i| resid[i] > tau).collect();

    let p = design.cols();
    let mut node = Node::new(p);
    let mut inlier_rows: Vec<usize> = Vec::with_capacity(n);
    let mut nodes_visited = 0usize;

    struct Ctx<'a> {
        design: &'a Matrix,
        y: &'a [f64],
        order: &'a [usize],
        suggest_outlier: &'a [bool],
        half_tau2: f64,
        n: usize,
    }

    fn recurse(
        ctx: &Ctx,
        depth: usize,
        n_out: usize,
        node: &mut Node,
        inlier_rows: &mut Vec<usize>,
        best_value: &mut f64,
        best_beta: &mut Vec<f64>,
        nodes_visited: &mut usize,
    ) -> Result<()> {
        *nodes_visited += 1;
        let slack = 1e-11 * (1.0 + best_value.abs());
        let bound =
            (0.5 * node.rss_lower_bound() + n_out as f64 * ctx.half_tau2) / ctx.n as f64;
        if bound >= *best_value + slack {
            return Ok(());
        }
        if depth == ctx.n {
            // Leaf: exact subset value via the QR path for accuracy.
            let (beta, rss) = subset_fit(ctx.design, ctx.y, inlier_rows)?;
            let value = (0.5 * rss + n_out as f64 * ctx.half_tau2) / ctx.n as f64;
            if value < *best_value {
                *best_value = value;
                *best_beta = beta;
            }
            return Ok(());
        }
        let row = ctx.order[depth];
        let branches = if ctx.suggest_outlier[depth] {
            [true, false]
        } else {
            [false, true]
        };
        for outlier in branches {
            if outlier {
                recurse(
                    ctx,
                    depth + 1,
                    n_out + 1,
                    node,
                    inlier_rows,
                    best_value,
                    best_beta,
                    nodes_visited,
                )?;
            } else {
                node.push(ctx.design.row(row), ctx.y[row]);
                inlier_rows.push(row);
                recurse(
                    ctx,
                    depth + 1,
                    n_out,
                    node,
                    inlier_rows,
                    best_value,
                    best_beta,
                    nodes_visited,
                )?;
                inlier_rows.pop();
                node.pop(ctx.design.row(row), ctx.y[row]);
            }
        }
        Ok(())
    }

    let ctx = Ctx {
        design,
        y,
        order: &order,
        suggest_outlier: &suggest_outlier,
        half_tau2,
        n,
    };
    recurse(
        &ctx,
        0,
        0,
        &mut node,
        &mut inlier_rows,
        &mut best_value,
        &mut best_beta,
        &mut nodes_visited,
    )?;
    Ok((best_beta, nodes_visited))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::loss::empirical_loss;
    use rand::prelude::*;
    use rand_chacha::ChaCha12Rng;

    fn dataset(xs: &[f64], ys: &[f64]) -> Dataset {
        let x = Matrix::from_row_major(xs.len(), 1, xs.to_vec()).unwrap();
        Dataset::new(x, ys.to_vec(), false).unwrap()
    }

    /// Brute-force oracle: try every subset, fit it by the closed-form
    /// simple-regression formula, and return the best capped value.
    fn brute_force_1d(xs: &[f64], ys: &[f64], tau: f64) -> (f64, f64) {
        let n = xs.len();
        let mut best = (f64::INFINITY, 0.0);
        for mask in 0u32..(1 << n) {
            let rows: Vec<usize> = (0..n).filter(|i| mask & (1 << i) == 0).collect();
            let (sxx, sxy): (f64, f64) = rows
                .iter()
                .fold((0.0, 0.0), |(a, b), &i| (a + xs[i] * xs[i], b + xs[i] * ys[i]));
            let beta = if sxx > 0.0 { sxy / sxx } else { 0.0 };
            let rss: f64 = rows
                .iter()
                .map(|&i| (ys[i] - beta * xs[i]).powi(2))
                .sum();
            let value = (0.5 * rss + (n - rows.len()) as f64 * 0.5 * tau * tau) / n as f64;
            if value < best.0 {
                best = (value, beta);
            }
        }
        best
    }

    #[test]
    fn exact_three_point_example() {
        // Points (1,1), (1,1), (1,10) with tau = 2: the outlier is dropped.
        let data = dataset(&[1.0, 1.0, 1.0], &[1.0, 1.0, 10.0]);
        let cfg = LossConfig::explicit(2.0).unwrap();
        let (oracle_value, oracle_beta) = brute_force_1d(&[1.0, 1.0, 1.0], &[1.0, 1.0, 10.0], 2.0);
        assert!((oracle_beta - 1.0).abs() < 1e-12);
        assert!((oracle_value - 2.0 / 3.0).abs() < 1e-12);
        for strategy in [ExactStrategy::Enumerate, ExactStrategy::BranchAndBound] {
            let fit = fit_exact(
                &data,
                &cfg,
                &ExactConfig {
                    max_n: 24,
                    strategy,
                },
            )
            .unwrap();
            assert!((fit.beta[0] - 1.0).abs() < 1e-12);
            assert!((fit.loss - 2.0 / 3.0).abs() < 1e-12);
            assert_eq!(fit.inlier_mask, vec![true, true, false]);
        }
    }

    #[test]
    fn exact_collinear_perfect_fit() {
        let data = dataset(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]);
        let cfg = LossConfig::explicit(1.0).unwrap();
        let fit = fit_exact(&data, &cfg, &ExactConfig::default()).unwrap();
        assert!((fit.beta[0] - 2.0).abs() < 1e-12);
        assert!(fit.loss < 1e-25);
    }

    #[test]
    fn exact_reduces_to_ols_for_large_tau() {
        let mut rng = ChaCha12Rng::seed_from_u64(9);
        let xs: Vec<f64> = (0..8)
            .map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal))
            .collect();
        let ys: Vec<f64> = xs
            .iter()
            .map(|x| 2.0 * x + 0.1 * rng.sample::<f64, _>(rand_distr::StandardNormal))
            .collect();
        let data = dataset(&xs, &ys);
        let ols = super::super::fit_ols(&data).unwrap();
        let r = data.residuals(&ols.beta).unwrap();
        // tau above the full residual norm: dropping any point costs more
        // than the whole OLS sum of squares.
        let tau = r.iter().map(|v| v * v).sum::<f64>().sqrt() + 1.0;
        let cfg = LossConfig::explicit(tau).unwrap();
        let fit = fit_exact(&data, &cfg, &ExactConfig::default()).unwrap();
        assert!((fit.beta[0] - ols.beta[0]).abs() < 1e-10);
    }

    #[test]
    fn exact_refuses_large_instances() {
        let xs: Vec<f64> = (0..30).map(|i| i as f64 + 1.0).collect();
        let ys = xs.clone();
        let data = dataset(&xs, &ys);
        let cfg = LossConfig::explicit(1.0).unwrap();
        assert!(matches!(
            fit_exact(&data, &cfg, &ExactConfig::default()),
            Err(AclsError::InstanceTooLarge { n: 30, max_n: 24 })
        ));
    }

    #[test]
    fn exact_rejects_rank_deficient_design() {
        let x = Matrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 4.0], vec![3.0, 6.0]]).unwrap();
        let data = Dataset::new(x, vec![1.0, 2.0, 3.0], false).unwrap();
        let cfg = LossConfig::explicit(1.0).unwrap();
        assert!(matches!(
            fit_exact(&data, &cfg, &ExactConfig::default()),
            Err(AclsError::DegenerateDesign(_))
        ));
    }

    #[test]
    fn strategies_agree_on_random_instances() {
        let mut rng = ChaCha12Rng::seed_from_u64(31);
        for trial in 0..20 {
            let n = 8 + (trial % 5);
            let xs: Vec<f64> = (0..n)
                .map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal))
                .collect();
            let ys: Vec<f64> = xs
                .iter()
                .enumerate()
                .map(|(i, x)| {
                    let noise: f64 = rng.sample(rand_distr::StandardNormal);
                    let outlier = if i % 7 == 0 { 15.0 } else { 0.0 };
                    1.5 * x + noise + outlier
                })
                .collect();
            let data = dataset(&xs, &ys);
            let cfg = LossConfig::explicit(2.5).unwrap();
            let fe = fit_exact(
                &data,
                &cfg,
                &ExactConfig {
                    max_n: 24,
                    strategy: ExactStrategy::Enumerate,
                },
            )
            .unwrap();
            let fb = fit_exact(
                &data,
                &cfg,
                &ExactConfig {
                    max_n: 24,
                    strategy: ExactStrategy::BranchAndBound,
                },
            )
            .unwrap();
            let denom = fe.loss.abs().max(1e-300);
            assert!(
                ((fe.loss - fb.loss) / denom).abs() <= 1e-12,
                "trial {trial}: enumerate {} vs bnb {}",
                fe.loss,
                fb.loss
            );
        }
    }

    #[test]
    fn scale_equivariance_of_fit_and_mask() {
        let mut rng = ChaCha12Rng::seed_from_u64(77);
        let xs: Vec<f64> = (0..10)
            .map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal))
            .collect();
        let ys: Vec<f64> = xs
            .iter()
            .enumerate()
            .map(|(i, x)| 2.0 * x + if i == 3 { 9.0 } else { 0.0 })
            .collect();
        let data = dataset(&xs, &ys);
        let cfg = LossConfig::explicit(1.5).unwrap();
        let fit = fit_exact(&data, &cfg, &ExactConfig::default()).unwrap();

        let c = 3.7;
        let ys_scaled: Vec<f64> = ys.iter().map(|v| c * v).collect();
        let data2 = dataset(&xs, &ys_scaled);
        let cfg2 = LossConfig::explicit(1.5 * c).unwrap();
        let fit2 = fit_exact(&data2, &cfg2, &ExactConfig::default()).unwrap();
        assert!((fit2.beta[0] - c * fit.beta[0]).abs() < 1e-9 * c);
        assert_eq!(fit.inlier_mask, fit2.inlier_mask);
    }

    #[test]
    fn loss_field_matches_empirical_loss() {
        let data = dataset(&[1.0, 1.0, 1.0], &[1.0, 1.0, 10.0]);
        let cfg = LossConfig::explicit(2.0).unwrap();
        let fit = fit_exact(&data, &cfg, &ExactConfig::default()).unwrap();
        let recomputed = empirical_loss(&data, &fit.beta, &cfg).unwrap();
        assert!(((fit.loss - recomputed) / recomputed.max(1e-300)).abs() < 1e-12);
    }
}
