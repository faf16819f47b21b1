//! Scenario generators, the replication harness, loss-landscape profiles,
//! and the empirical breakdown probe.

use crate::error::{AclsError, Result};
use crate::estimators::{
    fit_ahr, fit_exact, fit_hybrid, fit_lts, fit_ols, fit_rgd, ExactConfig, FitResult, RgdConfig,
    Solver,
};
use crate::inference::{mse, residual_variance_ols};
use crate::loss::{empirical_loss, Dataset, LossConfig, TauRule};
use crate::numerics::{cholesky, dot, norm2, Matrix};
use rand::prelude::*;
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Contamination scenario of the finite-sample study: 1 = clean, 2 =
/// response outliers, 3 = response and covariate outliers.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub scenario: u8,
    pub n: usize,
    /// Column count of the model including the intercept.
    pub d: usize,
    pub lambda: f64,
    /// Outlier mean of the contaminating normal component.
    pub a: f64,
    /// AR correlation of the covariates.
    pub rho: f64,
    pub seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            scenario: 1,
            n: 50,
            d: 6,
            lambda: 0.10,
            a: 10.0,
            rho: 0.5,
            seed: 0,
        }
    }
}

impl ScenarioConfig {
    fn validate(&self) -> Result<()> {
        if !(1..=3).contains(&self.scenario) {
            return Err(AclsError::invalid("scenario must be 1, 2 or 3"));
        }
        if self.d < 2 {
            return Err(AclsError::invalid("d must be >= 2 (intercept + covariates)"));
        }
        if !(0.0..0.5).contains(&self.lambda) {
            return Err(AclsError::invalid("lambda must lie in [0, 0.5)"));
        }
        Ok(())
    }

    /// True coefficient vector: (0, 3, 4, 1, 2, 0) padded or truncated to d.
    pub fn beta_star(&self) -> Vec<f64> {
        const BASE: [f64; 6] = [0.0, 3.0, 4.0, 1.0, 2.0, 0.0];
        (0..self.d).map(|j| BASE.get(j).copied().unwrap_or(0.0)).collect()
    }
}

/// One generated replicate.
#[derive(Debug, Clone)]
pub struct GeneratedData {
    pub data: Dataset,
    pub contamination_mask: Vec<bool>,
    pub beta_star: Vec<f64>,
}

fn ar_cholesky(dim: usize, rho: f64) -> Result<Matrix> {
    let mut sigma = Matrix::zeros(dim, dim);
    for j in 0..dim {
        for k in 0..dim {
            sigma[(j, k)] = rho.powi((j as i32 - k as i32).abs());
        }
    }
    cholesky(&sigma, 0.0)
}

/// Draws a replicate: covariates N(0, Sigma) with Sigma_jk = rho^|j-k|,
/// standard normal errors, and per-row Bernoulli(lambda) contamination.
/// Scenario 2 replaces the contaminated errors with N(a, 1) draws; Scenario
/// 3 additionally shifts the same rows' covariates by N(a*1, I).
pub fn generate_scenario(cfg: &ScenarioConfig) -> Result<GeneratedData> {
    cfg.validate()?;
    let d_cov = cfg.d - 1;
    let chol = ar_cholesky(d_cov, cfg.rho)?;
    let beta_star = cfg.beta_star();
    let mut rng = ChaCha12Rng::seed_from_u64(cfg.seed);

    let mut rows = Vec::with_capacity(cfg.n);
    let mut y = Vec::with_capacity(cfg.n);
    let mut mask = vec![false; cfg.n];
    for i in 0..cfg.n {
        let z: Vec<f64> = (0..d_cov)
            .map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal))
            .collect();
        let mut x: Vec<f64> = (0..d_cov).map(|j| dot(&chol.row(j)[..=j], &z[..=j])).collect();

        let contaminated = cfg.scenario >= 2 && rng.random::<f64>() < cfg.lambda;
        mask[i] = contaminated;
        let eps: f64 = if contaminated {
            cfg.a + rng.sample::<f64, _>(rand_distr::StandardNormal)
        } else {
            rng.sample(rand_distr::StandardNormal)
        };
        // The response always comes from the clean covariates; Scenario 3
        // corrupts the observed covariates afterwards, so contaminated rows
        // sit off the regression plane with leverage.
        let yi = beta_star[0] + dot(&x, &beta_star[1..]) + eps;
        if cfg.scenario == 3 && contaminated {
            for xj in x.iter_mut() {
                let shift: f64 = rng.sample(rand_distr::StandardNormal);
                *xj += cfg.a + shift;
            }
        }
        rows.push(x);
        y.push(yi);
    }
    let data = Dataset::new(Matrix::from_rows(&rows)?, y, true)?;
    Ok(GeneratedData {
        data,
        contamination_mask: mask,
        beta_star,
    })
}

/// Estimators the replication harness can run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EstimatorKind {
    Exact,
    Rgd,
    Hybrid,
    Ols,
    Ahr,
    Lts,
}

impl EstimatorKind {
    pub fn name(&self) -> &'static str {
        match self {
            EstimatorKind::Exact => "exact",
            EstimatorKind::Rgd => "rgd",
            EstimatorKind::Hybrid => "hybrid",
            EstimatorKind::Ols => "ols",
            EstimatorKind::Ahr => "ahr",
            EstimatorKind::Lts => "lts",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "exact" => Ok(EstimatorKind::Exact),
            "rgd" | "acls" => Ok(EstimatorKind::Rgd),
            "hybrid" | "acls-h" => Ok(EstimatorKind::Hybrid),
            "ols" => Ok(EstimatorKind::Ols),
            "ahr" => Ok(EstimatorKind::Ahr),
            "lts" => Ok(EstimatorKind::Lts),
            other => Err(AclsError::invalid(format!("unknown estimator '{other}'"))),
        }
    }
}

/// Per-replicate knobs shared across estimators.
#[derive(Debug, Clone)]
pub struct HarnessConfig {
    pub rgd: RgdConfig,
    pub exact: ExactConfig,
    pub subsample_fraction: f64,
    pub subsample_runs: usize,
    pub lts_h: Option<usize>,
    pub lts_subsets: usize,
}

impl Default for HarnessConfig {
    fn default() -> Self {
        HarnessConfig {
            rgd: RgdConfig::default(),
            exact: ExactConfig::default(),
            subsample_fraction: 0.3,
            subsample_runs: 10,
            lts_h: None,
            lts_subsets: 500,
        }
    }
}

fn run_estimator(
    kind: EstimatorKind,
    data: &Dataset,
    cfg: &LossConfig,
    h: &HarnessConfig,
    seed: u64,
) -> Result<FitResult> {
    let rcfg = RgdConfig { seed, ..h.rgd };
    match kind {
        EstimatorKind::Exact => fit_exact(data, cfg, &h.exact),
        EstimatorKind::Rgd => fit_rgd(data, cfg, &rcfg),
        EstimatorKind::Hybrid => fit_hybrid(
            data,
            cfg,
            &rcfg,
            &h.exact,
            h.subsample_fraction,
            h.subsample_runs,
        ),
        EstimatorKind::Ols => fit_ols(data),
        EstimatorKind::Ahr => {
            // The Huber loss is not scale invariant, so the threshold is
            // applied on the standardized-residual scale: tau times the OLS
            // residual SD. On clean data this leaves every weight at one and
            // AHR coincides with OLS.
            let sd = residual_variance_ols(data)?.sqrt();
            let cfg_ahr = LossConfig::explicit((cfg.tau * sd).max(f64::MIN_POSITIVE))?;
            fit_ahr(data, &cfg_ahr)
        }
        EstimatorKind::Lts => fit_lts(data, h.lts_h, h.lts_subsets, seed),
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EstimatorSummary {
    pub estimator: EstimatorKind,
    pub median_mse: f64,
    pub median_sd: f64,
    pub mean_cpu_s: f64,
    pub replicates: usize,
    pub failures: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReplicationSummary {
    pub scenario: u8,
    pub a: f64,
    pub n: usize,
    pub d: usize,
    pub replicates: usize,
    pub per_estimator: Vec<EstimatorSummary>,
}

pub(crate) fn median(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mid = values.len() / 2;
    if values.len() % 2 == 1 {
        values[mid]
    } else {
        0.5 * (values[mid - 1] + values[mid])
    }
}

/// Runs `replicates` seeded replicates of a scenario, fitting every
/// requested estimator with tau from the sqrt-n-over-loglog-n rule, and
/// aggregates median MSE, median SD, and mean CPU time. Failed fits are
/// recorded as NaN replicates and excluded from the medians.
pub fn run_replication(
    cfg: &ScenarioConfig,
    estimators: &[EstimatorKind],
    replicates: usize,
    harness: &HarnessConfig,
) -> Result<ReplicationSummary> {
    cfg.validate()?;
    if replicates == 0 || estimators.is_empty() {
        return Err(AclsError::invalid("need >= 1 replicate and >= 1 estimator"));
    }
    let loss_cfg = LossConfig::from_rule(TauRule::SqrtNOverLogLogN, cfg.n, None)?;

    struct Rep {
        mse: Vec<f64>,
        cpu: Vec<f64>,
        sd: f64,
        failed: Vec<bool>,
    }

    let reps: Vec<Rep> = (0..replicates)
        .into_par_iter()
        .map(|r| {
            let rep_cfg = ScenarioConfig {
                seed: derive_seed(cfg.seed, r as u64),
                ..*cfg
            };
            let gen = generate_scenario(&rep_cfg)?;
            let sd = residual_variance_ols(&gen.data)?.sqrt();
            let mut mses = Vec::with_capacity(estimators.len());
            let mut cpus = Vec::with_capacity(estimators.len());
            let mut failed = Vec::with_capacity(estimators.len());
            for &kind in estimators {
                match run_estimator(kind, &gen.data, &loss_cfg, harness, rep_cfg.seed) {
                    Ok(fit) => {
                        mses.push(mse(&fit.beta, &gen.beta_star)?);
                        cpus.push(fit.elapsed_seconds);
                        failed.push(false);
                    }
                    Err(_) => {
                        mses.push(f64::NAN);
                        cpus.push(f64::NAN);
                        failed.push(true);
                    }
                }
            }
            Ok(Rep {
                mse: mses,
                cpu: cpus,
                sd,
                failed,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut per_estimator = Vec::with_capacity(estimators.len());
    for (k, &kind) in estimators.iter().enumerate() {
        let mut mses: Vec<f64> = reps.iter().map(|r| r.mse[k]).filter(|v| v.is_finite()).collect();
        let cpus: Vec<f64> = reps.iter().map(|r| r.cpu[k]).filter(|v| v.is_finite()).collect();
        let mut sds: Vec<f64> = reps
            .iter()
            .filter(|r| !r.failed[k])
            .map(|r| r.sd)
            .collect();
        let failures = reps.iter().filter(|r| r.failed[k]).count();
        per_estimator.push(EstimatorSummary {
            estimator: kind,
            median_mse: median(&mut mses),
            median_sd: median(&mut sds),
            mean_cpu_s: if cpus.is_empty() {
                f64::NAN
            } else {
                cpus.iter().sum::<f64>() / cpus.len() as f64
            },
            replicates,
            failures,
        });
    }
    Ok(ReplicationSummary {
        scenario: cfg.scenario,
        a: cfg.a,
        n: cfg.n,
        d: cfg.d,
        replicates,
        per_estimator,
    })
}

/// Stable per-replicate seed derivation (splitmix64 over master ^ index).
pub fn derive_seed(master: u64, index: u64) -> u64 {
    let mut z = master ^ index.wrapping_mul(0x9E3779B97F4A7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

/// One evaluated landscape point.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LandscapePoint {
    pub case: u8,
    pub n: usize,
    pub beta: f64,
    pub loss: f64,
}

/// Univariate data for landscape case 1-4 with beta_star = 5.
fn landscape_data(case: u8, n: usize, seed: u64) -> Result<Dataset> {
    let a = 10.0;
    let lambda = 0.1;
    let beta_star = 5.0;
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut xs = Vec::with_capacity(n);
    let mut ys = Vec::with_capacity(n);
    // Case 3 contaminates a fixed count of rows; cases 2 and 4 contaminate a
    // Bernoulli(lambda) subset.
    let fixed_count = if case == 3 { 5.min(n) } else { 0 };
    for i in 0..n {
        let mut x: f64 = rng.sample(rand_distr::StandardNormal);
        let contaminated = match case {
            1 => false,
            2 | 4 => rng.random::<f64>() < lambda,
            3 => i < fixed_count,
            _ => return Err(AclsError::invalid("case must be 1..=4")),
        };
        let mut eps: f64 = rng.sample(rand_distr::StandardNormal);
        if contaminated {
            eps += a;
        }
        // As in the scenario generator: the response comes from the clean
        // covariate; cases 3 and 4 corrupt the observed covariate afterwards.
        ys.push(beta_star * x + eps);
        if contaminated && case >= 3 {
            let shift: f64 = rng.sample(rand_distr::StandardNormal);
            x += a + shift;
        }
        xs.push(x);
    }
    Dataset::new(Matrix::from_row_major(n, 1, xs)?, ys, false)
}

/// Evaluates the capped empirical loss over a beta grid for each requested
/// sample size, with tau = sqrt(n)/loglog(n) per curve.
pub fn landscape_profile(
    case: u8,
    n_values: &[usize],
    grid: (f64, f64, usize),
    seed: u64,
) -> Result<Vec<LandscapePoint>> {
    let (lo, hi, steps) = grid;
    if steps < 2 || hi <= lo || !lo.is_finite() || !hi.is_finite() {
        return Err(AclsError::invalid("grid needs finite hi > lo and steps >= 2"));
    }
    let mut out = Vec::new();
    for (idx, &n) in n_values.iter().enumerate() {
        let data = landscape_data(case, n, derive_seed(seed, idx as u64))?;
        let cfg = LossConfig::from_rule(TauRule::SqrtNOverLogLogN, n, None)?;
        for s in 0..steps {
            let beta = lo + (hi - lo) * s as f64 / (steps - 1) as f64;
            let loss = empirical_loss(&data, &[beta], &cfg)?;
            out.push(LandscapePoint {
                case,
                n,
                beta,
                loss,
            });
        }
    }
    Ok(out)
}

/// Counts strict interior local minima of a loss curve sampled on a grid.
pub fn count_grid_local_minima(losses: &[f64]) -> usize {
    losses
        .windows(3)
        .filter(|w| w[1] < w[0] && w[1] < w[2])
        .count()
}

/// Estimators the breakdown probe can exercise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BreakdownEstimator {
    Exact,
    Ahr,
    Ols,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BreakdownRow {
    pub contaminated: usize,
    pub magnitude: f64,
    pub beta_norm: f64,
}

/// Builds a clean n x d instance (standard normal covariates, beta_star of
/// ones, unit noise, no intercept), then for each (m, t) replaces the first
/// m rows with leverage points x = t*u, y = t^2 and reports the norm of the
/// requested estimator.
pub fn breakdown_probe(
    n: usize,
    d: usize,
    contam_counts: &[usize],
    magnitude_ladder: &[f64],
    estimator: BreakdownEstimator,
    seed: u64,
) -> Result<Vec<BreakdownRow>> {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let beta_star = vec![1.0; d];
    let mut rows = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let x: Vec<f64> = (0..d)
            .map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal))
            .collect();
        let e: f64 = rng.sample(rand_distr::StandardNormal);
        y.push(dot(&x, &beta_star) + e);
        rows.push(x);
    }
    // One fixed unit direction per potentially contaminated row.
    let max_m = contam_counts.iter().copied().max().unwrap_or(0);
    if max_m > n {
        return Err(AclsError::invalid("contaminated count exceeds n"));
    }
    let directions: Vec<Vec<f64>> = (0..max_m)
        .map(|_| {
            let v: Vec<f64> = (0..d)
                .map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal))
                .collect();
            let nrm = norm2(&v);
            v.iter().map(|c| c / nrm).collect()
        })
        .collect();

    let cfg = LossConfig::from_rule(TauRule::SqrtNOverLogLogN, n, None)?;
    let mut out = Vec::new();
    for &m in contam_counts {
        for &t in magnitude_ladder {
            let mut xs = rows.clone();
            let mut ys = y.clone();
            for j in 0..m {
                xs[j] = directions[j].iter().map(|c| c * t).collect();
                ys[j] = t * t;
            }
            let data = Dataset::new(Matrix::from_rows(&xs)?, ys, false)?;
            let fit = match estimator {
                BreakdownEstimator::Exact => fit_exact(&data, &cfg, &ExactConfig::default())?,
                BreakdownEstimator::Ahr => fit_ahr(&data, &cfg)?,
                BreakdownEstimator::Ols => fit_ols(&data)?,
            };
            debug_assert!(matches!(
                fit.solver,
                Solver::Exact | Solver::Ahr | Solver::Ols
            ));
            out.push(BreakdownRow {
                contaminated: m,
                magnitude: t,
                beta_norm: norm2(&fit.beta),
            });
        }
    }
    Ok(out)
}
