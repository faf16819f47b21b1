//! Randomized gradient descent for the capped empirical loss.
//!
//! Each descent step searches the geometric step ladder eta0, gamma_u*eta0,
//! gamma_u^2*eta0, ... and keeps inflating while the larger trial step still
//! strictly lowers the trial loss. The accepted update uses the last step
//! that won that comparison; if even the smallest step fails to improve on
//! the current loss, the base step is halved a few times before the iterate
//! is declared stationary. Restarts are drawn uniformly from the l2 ball of
//! radius tau and the best final loss wins.

use super::{FitResult, Solver};
use crate::error::{AclsError, Result};
use crate::loss::{empirical_gradient, empirical_loss, Dataset, LossConfig};
use crate::numerics::norm2;
use rand::prelude::*;
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::time::Instant;

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct RgdConfig {
    pub eta0: f64,
    pub gamma_u: f64,
    pub eps_opt: f64,
    pub max_iters: usize,
    pub restarts: usize,
    pub seed: u64,
}

impl Default for RgdConfig {
    fn default() -> Self {
        RgdConfig {
            eta0: 0.001,
            gamma_u: 2.0,
            eps_opt: 1e-6,
            max_iters: 500,
            restarts: 200,
            seed: 0,
        }
    }
}

impl RgdConfig {
    fn validate(&self) -> Result<()> {
        if !(self.eta0 > 0.0 && self.eta0.is_finite()) {
            return Err(AclsError::invalid("eta0 must be positive"));
        }
        if !(self.gamma_u > 1.0 && self.gamma_u.is_finite()) {
            return Err(AclsError::invalid("gamma_u must exceed 1"));
        }
        if self.eps_opt.is_nan() || self.eps_opt <= 0.0 {
            return Err(AclsError::invalid("eps_opt must be positive"));
        }
        Ok(())
    }
}

/// Uniform draw from the l2 ball of radius `radius`: Gaussian direction,
/// radius scaled by U^(1/p).
pub fn sample_ball(rng: &mut ChaCha12Rng, dim: usize, radius: f64) -> Vec<f64> {
    loop {
        let dir: Vec<f64> = (0..dim)
            .map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal))
            .collect();
        let nrm = norm2(&dir);
        if nrm == 0.0 {
            continue;
        }
        let u: f64 = rng.random::<f64>();
        let r = radius * u.powf(1.0 / dim as f64);
        return dir.iter().map(|d| d / nrm * r).collect();
    }
}

const MAX_INFLATIONS: usize = 100;
const MAX_HALVINGS: usize = 30;

/// Trial loss at beta - eta * grad; non-finite candidates rank as +inf so
/// they are never accepted.
fn trial(
    data: &Dataset,
    cfg: &LossConfig,
    beta: &[f64],
    grad: &[f64],
    eta: f64,
) -> (Vec<f64>, f64) {
    let cand: Vec<f64> = beta
        .iter()
        .zip(grad)
        .map(|(b, g)| b - eta * g)
        .collect();
    if !cand.iter().all(|v| v.is_finite()) {
        return (cand, f64::INFINITY);
    }
    let loss = empirical_loss(data, &cand, cfg).unwrap_or(f64::INFINITY);
    (cand, loss)
}

/// Single gradient-descent run from `beta0`.
pub fn fit_rgd_single(
    data: &Dataset,
    cfg: &LossConfig,
    rcfg: &RgdConfig,
    beta0: &[f64],
) -> Result<FitResult> {
    let start = Instant::now();
    rcfg.validate()?;
    if !beta0.iter().all(|v| v.is_finite()) {
        return Err(AclsError::invalid("beta0 must be finite"));
    }
    let mut beta = beta0.to_vec();
    let mut loss = empirical_loss(data, &beta, cfg)?;
    if !loss.is_finite() {
        return Err(AclsError::Divergence { last_finite: beta });
    }
    let mut iterations = 0usize;
    let mut flat = false;

    while iterations < rcfg.max_iters {
        let grad = empirical_gradient(data, &beta, cfg)?;
        if grad.iter().all(|&g| g == 0.0) {
            flat = iterations == 0;
            break;
        }
        // Inflate the step while the larger trial keeps strictly improving.
        let mut m = 0usize;
        let (mut cand, mut cand_loss) = trial(data, cfg, &beta, &grad, rcfg.eta0);
        while m < MAX_INFLATIONS {
            let eta_next = rcfg.gamma_u.powi(m as i32 + 1) * rcfg.eta0;
            let (next, next_loss) = trial(data, cfg, &beta, &grad, eta_next);
            if cand_loss > next_loss {
                m += 1;
                cand = next;
                cand_loss = next_loss;
            } else {
                break;
            }
        }
        // The ladder never checked descent against the current loss; enforce
        // it, shrinking the base step if necessary.
        if cand_loss >= loss {
            let mut eta = rcfg.eta0;
            let mut accepted = false;
            for _ in 0..MAX_HALVINGS {
                eta *= 0.5;
                let (c, l) = trial(data, cfg, &beta, &grad, eta);
                if l < loss {
                    cand = c;
                    cand_loss = l;
                    accepted = true;
                    break;
                }
            }
            if !accepted {
                break; // stationary to line-search resolution
            }
        }
        let step: f64 = cand
            .iter()
            .zip(&beta)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        beta = cand;
        loss = cand_loss;
        iterations += 1;
        if step <= rcfg.eps_opt {
            break;
        }
    }

    let inlier_mask = FitResult::inlier_mask_for(data, &beta, cfg.tau);
    Ok(FitResult {
        beta,
        loss,
        inlier_mask,
        iterations,
        restarts_used: 1,
        solver: Solver::Rgd,
        elapsed_seconds: start.elapsed().as_secs_f64(),
        all_starts_flat: flat,
    })
}

/// Best-of-`restarts` randomized gradient descent. Start k draws its
/// initializer from stream k of the seeded generator, so the outcome does
/// not depend on how the runs are scheduled; ties go to the lowest start
/// index.
pub fn fit_rgd(data: &Dataset, cfg: &LossConfig, rcfg: &RgdConfig) -> Result<FitResult> {
    let start = Instant::now();
    rcfg.validate()?;
    if rcfg.restarts == 0 {
        return Err(AclsError::invalid("restarts must be >= 1"));
    }
    let p = data.p();
    let results: Vec<Result<FitResult>> = (0..rcfg.restarts)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha12Rng::seed_from_u64(rcfg.seed);
            rng.set_stream(k as u64);
            let beta0 = sample_ball(&mut rng, p, cfg.tau);
            fit_rgd_single(data, cfg, rcfg, &beta0)
        })
        .collect();

    let mut best: Option<FitResult> = None;
    let mut all_flat = true;
    let mut first_err = None;
    for res in results {
        match res {
            Ok(fit) => {
                all_flat &= fit.all_starts_flat;
                let better = match &best {
                    None => true,
                    Some(b) => fit.loss < b.loss,
                };
                if better {
                    best = Some(fit);
                }
            }
            Err(e) => {
                if first_err.is_none() {
                    first_err = Some(e);
                }
            }
        }
    }
    match best {
        Some(mut fit) => {
            fit.restarts_used = rcfg.restarts;
            fit.all_starts_flat = all_flat;
            fit.elapsed_seconds = start.elapsed().as_secs_f64();
            Ok(fit)
        }
        None => Err(first_err.unwrap_or_else(|| AclsError::invalid("no restart succeeded"))),
    }
}
