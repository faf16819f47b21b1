//! Least trimmed squares via random elemental subsets refined by C-steps.
//!
//! Each candidate starts from an exact fit through p random rows, then
//! repeatedly refits OLS on the h rows with the smallest squared residuals
//! until that h-subset stabilizes. The trimmed sum of squares never
//! increases across C-steps, so the best candidate over all starts is a
//! strong local optimum of the trimmed objective.

use super::{FitResult, Solver};
use crate::error::{AclsError, Result};
use crate::loss::Dataset;
use crate::numerics::{dot, solve_least_squares, Matrix};
use rand::prelude::*;
use rand_chacha::ChaCha12Rng;
use std::time::Instant;

const MAX_C_STEPS: usize = 50;

/// Default trim count: floor((n + d + 1) / 2) with d the augmented column
/// count.
pub fn default_lts_h(n: usize, p: usize) -> usize {
    (n + p + 1) / 2
}

/// Trimmed sum of squares and the h-subset (sorted indices) at `beta`.
fn trimmed_objective(
    design: &Matrix,
    y: &[f64],
    beta: &[f64],
    h: usize,
) -> (f64, Vec<usize>) {
    let n = design.rows();
    let mut sq: Vec<(f64, usize)> = (0..n)
        .map(|i| {
            let r = y[i] - dot(design.row(i), beta);
            (r * r, i)
        })
        .collect();
    sq.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
    let mut subset: Vec<usize> = sq[..h].iter().map(|&(_, i)| i).collect();
    let obj: f64 = sq[..h].iter().map(|&(s, _)| s).sum();
    subset.sort_unstable();
    (obj, subset)
}

fn ols_on(design: &Matrix, y: &[f64], rows: &[usize]) -> Result<Vec<f64>> {
    let p = design.cols();
    let mut sub = Matrix::zeros(rows.len(), p);
    let mut ysub = Vec::with_capacity(rows.len());
    for (k, &i) in rows.iter().enumerate() {
        sub.row_mut(k).copy_from_slice(design.row(i));
        ysub.push(y[i]);
    }
    solve_least_squares(&sub, &ysub)
}

/// Least trimmed squares fit. `loss` stores the trimmed sum of squares (not
/// the capped loss) and the inlier mask marks the final h-subset.
pub fn fit_lts(
    data: &Dataset,
    h: Option<usize>,
    n_subsets: usize,
    seed: u64,
) -> Result<FitResult> {
    let start = Instant::now();
    let n = data.n();
    let design = data.design();
    let p = design.cols();
    let h = h.unwrap_or_else(|| default_lts_h(n, p));
    if h < p || h > n {
        return Err(AclsError::invalid(format!(
            "h = {h} must satisfy p = {p} <= h <= n = {n}"
        )));
    }
    if n_subsets == 0 {
        return Err(AclsError::invalid("n_subsets must be >= 1"));
    }

    let mut best: Option<(f64, Vec<f64>, Vec<usize>)> = None;
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut any_ok = false;
    for _ in 0..n_subsets {
        // Elemental start: exact fit through p random rows.
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(&mut rng);
        idx.truncate(p);
        idx.sort_unstable();
        let mut beta = match ols_on(&design, data.y(), &idx) {
            Ok(b) => b,
            Err(AclsError::SingularSystem { .. }) => continue,
            Err(e) => return Err(e),
        };
        any_ok = true;

        let (mut obj, mut subset) = trimmed_objective(&design, data.y(), &beta, h);
        for _ in 0..MAX_C_STEPS {
            let new_beta = match ols_on(&design, data.y(), &subset) {
                Ok(b) => b,
                Err(AclsError::SingularSystem { .. }) => break,
                Err(e) => return Err(e),
            };
            let (new_obj, new_subset) = trimmed_objective(&design, data.y(), &new_beta, h);
            beta = new_beta;
            obj = new_obj;
            if new_subset == subset {
                break;
            }
            subset = new_subset;
        }
        let better = best.as_ref().is_none_or(|(b, _, _)| obj < *b);
        if better {
            best = Some((obj, beta, subset));
        }
    }

    let (obj, beta, subset) = best.ok_or_else(|| {
        if any_ok {
            AclsError::DegenerateDesign("no LTS candidate survived".into())
        } else {
            AclsError::DegenerateDesign("all elemental subsets were singular".into())
        }
    })?;
    let mut inlier_mask = vec![false; n];
    for &i in &subset {
        inlier_mask[i] = true;
    }
    Ok(FitResult {
        beta,
        loss: obj,
        inlier_mask,
        iterations: n_subsets,
        restarts_used: n_subsets,
        solver: Solver::Lts,
        elapsed_seconds: start.elapsed().as_secs_f64(),
        all_starts_flat: false,
    })
}
