//! Subsample-initialized descent: exact solves on small seeded row
//! subsamples provide a coarse estimate, and gradient descent polishes the
//! candidate with the smallest full-data capped loss.

use super::{fit_exact, fit_rgd_single, ExactConfig, FitResult, RgdConfig, Solver};
use crate::error::{AclsError, Result};
use crate::loss::{empirical_loss, Dataset, LossConfig};
use rand::prelude::*;
use rand_chacha::ChaCha12Rng;
use std::time::Instant;

pub fn fit_hybrid(
    data: &Dataset,
    cfg: &LossConfig,
    rcfg: &RgdConfig,
    xcfg: &ExactConfig,
    subsample_fraction: f64,
    subsample_runs: usize,
) -> Result<FitResult> {
    let start = Instant::now();
    if !(subsample_fraction > 0.0 && subsample_fraction <= 1.0) {
        return Err(AclsError::invalid("subsample_fraction must be in (0, 1]"));
    }
    if subsample_runs == 0 {
        return Err(AclsError::invalid("subsample_runs must be >= 1"));
    }
    let n = data.n();
    let m = ((subsample_fraction * n as f64).ceil() as usize).clamp(1, n);
    if m > xcfg.max_n {
        return Err(AclsError::InstanceTooLarge {
            n: m,
            max_n: xcfg.max_n,
        });
    }

    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut skipped = 0usize;
    for run in 0..subsample_runs {
        let mut rng = ChaCha12Rng::seed_from_u64(rcfg.seed);
        rng.set_stream(run as u64);
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(&mut rng);
        idx.truncate(m);
        idx.sort_unstable();
        let sub = data.subset(&idx)?;
        match fit_exact(&sub, cfg, xcfg) {
            Ok(fit) => {
                let full_loss = empirical_loss(data, &fit.beta, cfg)?;
                let better = best.as_ref().is_none_or(|(l, _)| full_loss < *l);
                if better {
                    best = Some((full_loss, fit.beta));
                }
            }
            Err(AclsError::DegenerateDesign(_)) | Err(AclsError::SingularSystem { .. }) => {
                skipped += 1;
            }
            Err(e) => return Err(e),
        }
    }
    let (_, beta0) = best.ok_or_else(|| {
        AclsError::DegenerateDesign(format!(
            "all {skipped} subsample runs were rank-deficient"
        ))
    })?;

    let mut fit = fit_rgd_single(data, cfg, rcfg, &beta0)?;
    fit.solver = Solver::Hybrid;
    fit.restarts_used = subsample_runs;
    fit.elapsed_seconds = start.elapsed().as_secs_f64();
    Ok(fit)
}
