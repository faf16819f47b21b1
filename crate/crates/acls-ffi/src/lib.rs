//! C ABI for the capped least squares toolkit.
//!
//! Handles are opaque: construct a dataset, fit it with one of the solvers,
//! read the results out through accessors, and free everything through the
//! matching `_free` functions. Every fallible call returns an [`AclsStatus`];
//! on failure `acls_last_error_message` holds a thread-local description.

use acls_core::estimators::{
    fit_ahr, fit_exact, fit_hybrid, fit_lts, fit_ols, fit_rgd, ExactConfig, ExactStrategy,
    FitResult, RgdConfig,
};
use acls_core::inference::{robust_inference, InferenceReport};
use acls_core::loss::{select_tau, Dataset, LossConfig, TauRule};
use acls_core::numerics::Matrix;
use acls_core::AclsError;
use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

/// Result codes for every fallible entry point.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AclsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    SingularSystem = 3,
    DegenerateDesign = 4,
    InstanceTooLarge = 5,
    InsufficientInliers = 6,
    DegenerateScale = 7,
    DegenerateMask = 8,
    Divergence = 9,
    Io = 10,
    BufferTooSmall = 11,
    InternalPanic = 12,
}

/// Regression solvers reachable through `acls_fit`.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AclsSolver {
    Exact = 0,
    Rgd = 1,
    Hybrid = 2,
    Ols = 3,
    Ahr = 4,
    Lts = 5,
}

/// Plain-old-data knob block for `acls_fit`. Obtain defaults from
/// `acls_fit_options_default` and override what you need. A nonpositive
/// `tau` means "apply the sqrt(n)/loglog(n) rule".
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct AclsFitOptions {
    pub tau: f64,
    pub seed: u64,
    pub restarts: u64,
    pub eta0: f64,
    pub gamma_u: f64,
    pub eps_opt: f64,
    pub max_iters: u64,
    pub exact_max_n: u64,
    /// Nonzero switches the exact solver from branch and bound to full
    /// enumeration.
    pub exact_enumerate: u8,
    pub subsample_fraction: f64,
    pub subsample_runs: u64,
    /// Zero picks the default trim count floor((n + p + 1) / 2).
    pub lts_h: u64,
    pub lts_subsets: u64,
}

pub struct AclsDataset {
    inner: Dataset,
}

pub struct AclsFit {
    inner: FitResult,
}

pub struct AclsInference {
    inner: InferenceReport,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(err: &AclsError) -> AclsStatus {
    match err {
        AclsError::InvalidArgument(_) | AclsError::Parse(_) => AclsStatus::InvalidArgument,
        AclsError::SingularSystem { .. } => AclsStatus::SingularSystem,
        AclsError::DegenerateDesign(_) => AclsStatus::DegenerateDesign,
        AclsError::InstanceTooLarge { .. } => AclsStatus::InstanceTooLarge,
        AclsError::InsufficientInliers { .. } => AclsStatus::InsufficientInliers,
        AclsError::DegenerateScale => AclsStatus::DegenerateScale,
        AclsError::DegenerateMask { .. } => AclsStatus::DegenerateMask,
        AclsError::Divergence { .. } => AclsStatus::Divergence,
        AclsError::Io(_) => AclsStatus::Io,
    }
}

fn fail(err: AclsError) -> AclsStatus {
    let status = status_of(&err);
    set_error(&err.to_string());
    status
}

/// Message for the most recent failure on this thread; valid until the next
/// failing call. Never null.
#[no_mangle]
pub extern "C" fn acls_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static C string.
#[no_mangle]
pub extern "C" fn acls_version() -> *const c_char {
    static VERSION: &str = concat!(env!("CARGO_PKG_VERSION"), "\0");
    VERSION.as_ptr() as *const c_char
}

/// Builds a dataset from a row-major n-by-d predictor block and an n-vector
/// of responses. The data are copied; the caller keeps ownership of the
/// input buffers.
///
/// # Safety
/// `x` must point to n*d doubles, `y` to n doubles, and `out` must be a
/// valid location to store the handle.
#[no_mangle]
pub unsafe extern "C" fn acls_dataset_new(
    x: *const f64,
    n: u64,
    d: u64,
    y: *const f64,
    add_intercept: u8,
    out: *mut *mut AclsDataset,
) -> AclsStatus {
    if x.is_null() || y.is_null() || out.is_null() {
        set_error("null pointer");
        return AclsStatus::NullPointer;
    }
    let (n, d) = (n as usize, d as usize);
    let xs = std::slice::from_raw_parts(x, n * d).to_vec();
    let ys = std::slice::from_raw_parts(y, n).to_vec();
    let matrix = match Matrix::from_row_major(n, d, xs) {
        Ok(m) => m,
        Err(e) => return fail(e),
    };
    match Dataset::new(matrix, ys, add_intercept != 0) {
        Ok(ds) => {
            *out = Box::into_raw(Box::new(AclsDataset { inner: ds }));
            AclsStatus::Ok
        }
        Err(e) => fail(e),
    }
}

/// # Safety
/// `ds` must come from `acls_dataset_new` and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn acls_dataset_free(ds: *mut AclsDataset) {
    if !ds.is_null() {
        drop(Box::from_raw(ds));
    }
}

/// Default options: the documented solver defaults with seed 0.
#[no_mangle]
pub extern "C" fn acls_fit_options_default() -> AclsFitOptions {
    let rgd = RgdConfig::default();
    AclsFitOptions {
        tau: 0.0,
        seed: 0,
        restarts: rgd.restarts as u64,
        eta0: rgd.eta0,
        gamma_u: rgd.gamma_u,
        eps_opt: rgd.eps_opt,
        max_iters: rgd.max_iters as u64,
        exact_max_n: ExactConfig::default().max_n as u64,
        exact_enumerate: 0,
        subsample_fraction: 0.3,
        subsample_runs: 10,
        lts_h: 0,
        lts_subsets: 500,
    }
}

/// tau = sqrt(n) / loglog(n); requires n >= 16.
///
/// # Safety
/// `out` must be valid for one double.
#[no_mangle]
pub unsafe extern "C" fn acls_tau_sqrt_rule(n: u64, out: *mut f64) -> AclsStatus {
    if out.is_null() {
        set_error("null pointer");
        return AclsStatus::NullPointer;
    }
    match select_tau(n as usize, TauRule::SqrtNOverLogLogN, None) {
        Ok(t) => {
            *out = t;
            AclsStatus::Ok
        }
        Err(e) => fail(e),
    }
}

/// tau = c * sigma_hat * sqrt(n) / loglog(n); requires n >= 16 and a
/// positive scale.
///
/// # Safety
/// `out` must be valid for one double.
#[no_mangle]
pub unsafe extern "C" fn acls_tau_mad_rule(
    n: u64,
    sigma_hat: f64,
    c: f64,
    out: *mut f64,
) -> AclsStatus {
    if out.is_null() {
        set_error("null pointer");
        return AclsStatus::NullPointer;
    }
    match select_tau(n as usize, TauRule::MadScaled { c }, Some(sigma_hat)) {
        Ok(t) => {
            *out = t;
            AclsStatus::Ok
        }
        Err(e) => fail(e),
    }
}

fn run_fit(ds: &Dataset, solver: AclsSolver, opts: &AclsFitOptions) -> Result<FitResult, AclsError> {
    // OLS and LTS never look at tau, so only resolve it where needed.
    let cfg = || -> Result<LossConfig, AclsError> {
        if opts.tau > 0.0 {
            LossConfig::explicit(opts.tau)
        } else {
            LossConfig::from_rule(TauRule::SqrtNOverLogLogN, ds.n(), None)
        }
    };
    let rcfg = RgdConfig {
        eta0: opts.eta0,
        gamma_u: opts.gamma_u,
        eps_opt: opts.eps_opt,
        max_iters: opts.max_iters as usize,
        restarts: opts.restarts as usize,
        seed: opts.seed,
    };
    let xcfg = ExactConfig {
        max_n: opts.exact_max_n as usize,
        strategy: if opts.exact_enumerate != 0 {
            ExactStrategy::Enumerate
        } else {
            ExactStrategy::BranchAndBound
        },
    };
    match solver {
        AclsSolver::Exact => fit_exact(ds, &cfg()?, &xcfg),
        AclsSolver::Rgd => fit_rgd(ds, &cfg()?, &rcfg),
        AclsSolver::Hybrid => fit_hybrid(
            ds,
            &cfg()?,
            &rcfg,
            &xcfg,
            opts.subsample_fraction,
            opts.subsample_runs as usize,
        ),
        AclsSolver::Ols => fit_ols(ds),
        AclsSolver::Ahr => fit_ahr(ds, &cfg()?),
        AclsSolver::Lts => fit_lts(
            ds,
            (opts.lts_h > 0).then_some(opts.lts_h as usize),
            opts.lts_subsets as usize,
            opts.seed,
        ),
    }
}

/// Fits `solver` to the dataset. `opts` may be null for defaults.
///
/// # Safety
/// `ds` must be a live dataset handle and `out` valid for one pointer.
#[no_mangle]
pub unsafe extern "C" fn acls_fit(
    ds: *const AclsDataset,
    solver: AclsSolver,
    opts: *const AclsFitOptions,
    out: *mut *mut AclsFit,
) -> AclsStatus {
    if ds.is_null() || out.is_null() {
        set_error("null pointer");
        return AclsStatus::NullPointer;
    }
    let opts = if opts.is_null() {
        acls_fit_options_default()
    } else {
        *opts
    };
    let dataset = &(*ds).inner;
    let result = catch_unwind(AssertUnwindSafe(|| run_fit(dataset, solver, &opts)));
    match result {
        Ok(Ok(fit)) => {
            *out = Box::into_raw(Box::new(AclsFit { inner: fit }));
            AclsStatus::Ok
        }
        Ok(Err(e)) => fail(e),
        Err(_) => {
            set_error("internal panic");
            AclsStatus::InternalPanic
        }
    }
}

/// # Safety
/// `fit` must come from `acls_fit` and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn acls_fit_free(fit: *mut AclsFit) {
    if !fit.is_null() {
        drop(Box::from_raw(fit));
    }
}

/// Coefficient count of a fit (0 for a null handle).
///
/// # Safety
/// `fit` must be live or null.
#[no_mangle]
pub unsafe extern "C" fn acls_fit_dim(fit: *const AclsFit) -> u64 {
    if fit.is_null() {
        return 0;
    }
    (*fit).inner.beta.len() as u64
}

/// Sample count of the fitted dataset (mask length).
///
/// # Safety
/// `fit` must be live or null.
#[no_mangle]
pub unsafe extern "C" fn acls_fit_n(fit: *const AclsFit) -> u64 {
    if fit.is_null() {
        return 0;
    }
    (*fit).inner.inlier_mask.len() as u64
}

/// Copies the coefficients into `buf`.
///
/// # Safety
/// `buf` must hold at least `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn acls_fit_coefficients(
    fit: *const AclsFit,
    buf: *mut f64,
    len: u64,
) -> AclsStatus {
    if fit.is_null() || buf.is_null() {
        set_error("null pointer");
        return AclsStatus::NullPointer;
    }
    let beta = &(*fit).inner.beta;
    if (len as usize) < beta.len() {
        set_error("coefficient buffer too small");
        return AclsStatus::BufferTooSmall;
    }
    std::ptr::copy_nonoverlapping(beta.as_ptr(), buf, beta.len());
    AclsStatus::Ok
}

/// Copies the inlier mask (1 = inside the cap) into `buf`.
///
/// # Safety
/// `buf` must hold at least `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn acls_fit_inlier_mask(
    fit: *const AclsFit,
    buf: *mut u8,
    len: u64,
) -> AclsStatus {
    if fit.is_null() || buf.is_null() {
        set_error("null pointer");
        return AclsStatus::NullPointer;
    }
    let mask = &(*fit).inner.inlier_mask;
    if (len as usize) < mask.len() {
        set_error("mask buffer too small");
        return AclsStatus::BufferTooSmall;
    }
    for (i, &m) in mask.iter().enumerate() {
        *buf.add(i) = u8::from(m);
    }
    AclsStatus::Ok
}

/// Achieved objective value (NaN for a null handle).
///
/// # Safety
/// `fit` must be live or null.
#[no_mangle]
pub unsafe extern "C" fn acls_fit_loss(fit: *const AclsFit) -> f64 {
    if fit.is_null() {
        return f64::NAN;
    }
    (*fit).inner.loss
}

/// # Safety
/// `fit` must be live or null.
#[no_mangle]
pub unsafe extern "C" fn acls_fit_iterations(fit: *const AclsFit) -> u64 {
    if fit.is_null() {
        return 0;
    }
    (*fit).inner.iterations as u64
}

/// # Safety
/// `fit` must be live or null.
#[no_mangle]
pub unsafe extern "C" fn acls_fit_restarts_used(fit: *const AclsFit) -> u64 {
    if fit.is_null() {
        return 0;
    }
    (*fit).inner.restarts_used as u64
}

/// Plug-in inference at the given tau (nonpositive tau applies the sqrt
/// rule).
///
/// # Safety
/// `ds` and `fit` must be live handles; `out` valid for one pointer.
#[no_mangle]
pub unsafe extern "C" fn acls_inference_new(
    ds: *const AclsDataset,
    fit: *const AclsFit,
    tau: f64,
    out: *mut *mut AclsInference,
) -> AclsStatus {
    if ds.is_null() || fit.is_null() || out.is_null() {
        set_error("null pointer");
        return AclsStatus::NullPointer;
    }
    let dataset = &(*ds).inner;
    let fitted = &(*fit).inner;
    let run = || -> Result<InferenceReport, AclsError> {
        let cfg = if tau > 0.0 {
            LossConfig::explicit(tau)?
        } else {
            LossConfig::from_rule(TauRule::SqrtNOverLogLogN, dataset.n(), None)?
        };
        robust_inference(dataset, fitted, &cfg)
    };
    match catch_unwind(AssertUnwindSafe(run)) {
        Ok(Ok(rep)) => {
            *out = Box::into_raw(Box::new(AclsInference { inner: rep }));
            AclsStatus::Ok
        }
        Ok(Err(e)) => fail(e),
        Err(_) => {
            set_error("internal panic");
            AclsStatus::InternalPanic
        }
    }
}

/// # Safety
/// `inf` must come from `acls_inference_new` and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn acls_inference_free(inf: *mut AclsInference) {
    if !inf.is_null() {
        drop(Box::from_raw(inf));
    }
}

/// # Safety
/// `inf` must be live or null.
#[no_mangle]
pub unsafe extern "C" fn acls_inference_dim(inf: *const AclsInference) -> u64 {
    if inf.is_null() {
        return 0;
    }
    (*inf).inner.se.len() as u64
}

/// Copies the coefficient standard errors into `buf`.
///
/// # Safety
/// `buf` must hold at least `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn acls_inference_standard_errors(
    inf: *const AclsInference,
    buf: *mut f64,
    len: u64,
) -> AclsStatus {
    if inf.is_null() || buf.is_null() {
        set_error("null pointer");
        return AclsStatus::NullPointer;
    }
    let se = &(*inf).inner.se;
    if (len as usize) < se.len() {
        set_error("standard-error buffer too small");
        return AclsStatus::BufferTooSmall;
    }
    std::ptr::copy_nonoverlapping(se.as_ptr(), buf, se.len());
    AclsStatus::Ok
}

/// Copies the two-sided p-values into `buf`.
///
/// # Safety
/// `buf` must hold at least `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn acls_inference_p_values(
    inf: *const AclsInference,
    buf: *mut f64,
    len: u64,
) -> AclsStatus {
    if inf.is_null() || buf.is_null() {
        set_error("null pointer");
        return AclsStatus::NullPointer;
    }
    let pv = &(*inf).inner.p_values;
    if (len as usize) < pv.len() {
        set_error("p-value buffer too small");
        return AclsStatus::BufferTooSmall;
    }
    std::ptr::copy_nonoverlapping(pv.as_ptr(), buf, pv.len());
    AclsStatus::Ok
}

/// # Safety
/// `inf` must be live or null.
#[no_mangle]
pub unsafe extern "C" fn acls_inference_sigma2(inf: *const AclsInference) -> f64 {
    if inf.is_null() {
        return f64::NAN;
    }
    (*inf).inner.sigma2_hat
}

/// # Safety
/// `inf` must be live or null.
#[no_mangle]
pub unsafe extern "C" fn acls_inference_n_effective(inf: *const AclsInference) -> u64 {
    if inf.is_null() {
        return 0;
    }
    (*inf).inner.n_effective as u64
}
