#ifndef ACLS_H
#define ACLS_H

/* Generated by cbindgen from acls-ffi; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

// Result codes for every fallible entry point.
typedef enum {
  ACLS_STATUS_OK = 0,
  ACLS_STATUS_NULL_POINTER = 1,
  ACLS_STATUS_INVALID_ARGUMENT = 2,
  ACLS_STATUS_SINGULAR_SYSTEM = 3,
  ACLS_STATUS_DEGENERATE_DESIGN = 4,
  ACLS_STATUS_INSTANCE_TOO_LARGE = 5,
  ACLS_STATUS_INSUFFICIENT_INLIERS = 6,
  ACLS_STATUS_DEGENERATE_SCALE = 7,
  ACLS_STATUS_DEGENERATE_MASK = 8,
  ACLS_STATUS_DIVERGENCE = 9,
  ACLS_STATUS_IO = 10,
  ACLS_STATUS_BUFFER_TOO_SMALL = 11,
  ACLS_STATUS_INTERNAL_PANIC = 12,
} AclsStatus;

// Regression solvers reachable through `acls_fit`.
typedef enum {
  ACLS_SOLVER_EXACT = 0,
  ACLS_SOLVER_RGD = 1,
  ACLS_SOLVER_HYBRID = 2,
  ACLS_SOLVER_OLS = 3,
  ACLS_SOLVER_AHR = 4,
  ACLS_SOLVER_LTS = 5,
} AclsSolver;

typedef struct AclsDataset AclsDataset;

typedef struct AclsFit AclsFit;

typedef struct AclsInference AclsInference;

// Plain-old-data knob block for `acls_fit`. Obtain defaults from
// `acls_fit_options_default` and override what you need. A nonpositive
// `tau` means "apply the sqrt(n)/loglog(n) rule".
typedef struct {
  double tau;
  uint64_t seed;
  uint64_t restarts;
  double eta0;
  double gamma_u;
  double eps_opt;
  uint64_t max_iters;
  uint64_t exact_max_n;
  // Nonzero switches the exact solver from branch and bound to full
  // enumeration.
  uint8_t exact_enumerate;
  double subsample_fraction;
  uint64_t subsample_runs;
  // Zero picks the default trim count floor((n + p + 1) / 2).
  uint64_t lts_h;
  uint64_t lts_subsets;
} AclsFitOptions;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the most recent failure on this thread; valid until the next
// failing call. Never null.
const char *acls_last_error_message(void);

// Library version as a static C string.
const char *acls_version(void);

// Builds a dataset from a row-major n-by-d predictor block and an n-vector
// of responses. The data are copied; the caller keeps ownership of the
// input buffers.
//
// # Safety
// `x` must point to n*d doubles, `y` to n doubles, and `out` must be a
// valid location to store the handle.
AclsStatus acls_dataset_new(const double *x,
                            uint64_t n,
                            uint64_t d,
                            const double *y,
                            uint8_t add_intercept,
                            AclsDataset **out);

// # Safety
// `ds` must come from `acls_dataset_new` and not be freed twice.
void acls_dataset_free(AclsDataset *ds);

// Default options: the documented solver defaults with seed 0.
AclsFitOptions acls_fit_options_default(void);

// tau = sqrt(n) / loglog(n); requires n >= 16.
//
// # Safety
// `out` must be valid for one double.
AclsStatus acls_tau_sqrt_rule(uint64_t n, double *out);

// tau = c * sigma_hat * sqrt(n) / loglog(n); requires n >= 16 and a
// positive scale.
//
// # Safety
// `out` must be valid for one double.
AclsStatus acls_tau_mad_rule(uint64_t n, double sigma_hat, double c, double *out);

// Fits `solver` to the dataset. `opts` may be null for defaults.
//
// # Safety
// `ds` must be a live dataset handle and `out` valid for one pointer.
AclsStatus acls_fit(const AclsDataset *ds,
                    AclsSolver solver,
                    const AclsFitOptions *opts,
                    AclsFit **out);

// # Safety
// `fit` must come from `acls_fit` and not be freed twice.
void acls_fit_free(AclsFit *fit);

// Coefficient count of a fit (0 for a null handle).
//
// # Safety
// `fit` must be live or null.
uint64_t acls_fit_dim(const AclsFit *fit);

// Sample count of the fitted dataset (mask length).
//
// # Safety
// `fit` must be live or null.
uint64_t acls_fit_n(const AclsFit *fit);

// Copies the coefficients into `buf`.
//
// # Safety
// `buf` must hold at least `len` doubles.
AclsStatus acls_fit_coefficients(const AclsFit *fit, double *buf, uint64_t len);

// Copies the inlier mask (1 = inside the cap) into `buf`.
//
// # Safety
// `buf` must hold at least `len` bytes.
AclsStatus acls_fit_inlier_mask(const AclsFit *fit, uint8_t *buf, uint64_t len);

// Achieved objective value (NaN for a null handle).
//
// # Safety
// `fit` must be live or null.
double acls_fit_loss(const AclsFit *fit);

// # Safety
// `fit` must be live or null.
uint64_t acls_fit_iterations(const AclsFit *fit);

// # Safety
// `fit` must be live or null.
uint64_t acls_fit_restarts_used(const AclsFit *fit);

// Plug-in inference at the given tau (nonpositive tau applies the sqrt
// rule).
//
// # Safety
// `ds` and `fit` must be live handles; `out` valid for one pointer.
AclsStatus acls_inference_new(const AclsDataset *ds,
                              const AclsFit *fit,
                              double tau,
                              AclsInference **out);

// # Safety
// `inf` must come from `acls_inference_new` and not be freed twice.
void acls_inference_free(AclsInference *inf);

// # Safety
// `inf` must be live or null.
uint64_t acls_inference_dim(const AclsInference *inf);

// Copies the coefficient standard errors into `buf`.
//
// # Safety
// `buf` must hold at least `len` doubles.
AclsStatus acls_inference_standard_errors(const AclsInference *inf, double *buf, uint64_t len);

// Copies the two-sided p-values into `buf`.
//
// # Safety
// `buf` must hold at least `len` doubles.
AclsStatus acls_inference_p_values(const AclsInference *inf, double *buf, uint64_t len);

// # Safety
// `inf` must be live or null.
double acls_inference_sigma2(const AclsInference *inf);

// # Safety
// `inf` must be live or null.
uint64_t acls_inference_n_effective(const AclsInference *inf);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ACLS_H */
