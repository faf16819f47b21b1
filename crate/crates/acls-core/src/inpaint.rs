//! Blind inpainting: capped-loss sparse coding against a fixed dictionary
//! with an entrywise corruption mask, plus patch extraction and PSNR.
//!
//! The alternation starts from an all-ones mask, so the first Lasso pass
//! fits the fully weighted-out problem (alpha = 0 at any positive lambda)
//! and the first real mask simply flags entries larger than tau. Each later
//! round refits the sparse codes on the currently trusted entries and
//! re-derives the mask from the residuals until the mask stops changing.

use crate::error::{AclsError, Result};
use crate::numerics::{dot, Matrix};
use rayon::prelude::*;

/// Fixed synthesis dictionary: columns are unit-norm-ish atoms of dimension
/// n (the patch pixel count).
#[derive(Debug, Clone)]
pub struct Dictionary {
    d: Matrix,
    atom_norms: Vec<f64>,
}

impl Dictionary {
    pub fn new(d: Matrix) -> Result<Self> {
        let norms: Vec<f64> = (0..d.cols()).map(|j| crate::numerics::norm2(&d.col(j))).collect();
        if norms.contains(&0.0) {
            return Err(AclsError::invalid("dictionary contains a zero atom"));
        }
        Ok(Dictionary {
            d,
            atom_norms: norms,
        })
    }

    pub fn matrix(&self) -> &Matrix {
        &self.d
    }

    pub fn atom_norms(&self) -> &[f64] {
        &self.atom_norms
    }

    pub fn signal_dim(&self) -> usize {
        self.d.rows()
    }

    pub fn atoms(&self) -> usize {
        self.d.cols()
    }
}

/// Overcomplete 2-D DCT dictionary: `n` must be a square patch pixel count;
/// atoms are outer products of 1-D cosine vectors sampled on a ceil(sqrt(m))
/// frequency grid, taken in zigzag order and unit-normalized. With m = n the
/// result is the orthonormal 2-D DCT basis.
pub fn dct_dictionary(n: usize, m: usize) -> Result<Dictionary> {
    let s = (n as f64).sqrt().round() as usize;
    if s * s != n {
        return Err(AclsError::invalid(format!(
            "patch pixel count {n} is not a perfect square"
        )));
    }
    if m == 0 {
        return Err(AclsError::invalid("dictionary needs at least one atom"));
    }
    let k = (m as f64).sqrt().ceil() as usize;

    // 1-D cosine atoms on the k-point frequency grid, unit-normalized.
    let mut base = vec![vec![0.0; s]; k];
    for (t, atom) in base.iter_mut().enumerate() {
        for (x, v) in atom.iter_mut().enumerate() {
            *v = (std::f64::consts::PI * (2 * x + 1) as f64 * t as f64 / (2 * k) as f64).cos();
        }
        let nrm = crate::numerics::norm2(atom);
        for v in atom.iter_mut() {
            *v /= nrm;
        }
    }

    // Frequency pairs in zigzag order.
    let mut pairs: Vec<(usize, usize)> = (0..k)
        .flat_map(|t1| (0..k).map(move |t2| (t1, t2)))
        .collect();
    pairs.sort_by_key(|&(t1, t2)| (t1 + t2, t1, t2));
    pairs.truncate(m);

    let mut d = Matrix::zeros(n, m);
    for (j, &(t1, t2)) in pairs.iter().enumerate() {
        for c in 0..s {
            for r in 0..s {
                // Column-major pixel layout to match patchify.
                d[(c * s + r, j)] = base[t1][r] * base[t2][c];
            }
        }
    }
    Dictionary::new(d)
}

/// Patch layout bookkeeping for reassembly.
#[derive(Debug, Clone)]
pub struct PatchGeometry {
    pub height: usize,
    pub width: usize,
    pub patch: usize,
    /// (top, left) corner of each extracted patch, in extraction order.
    pub positions: Vec<(usize, usize)>,
}

fn stride_positions(extent: usize, patch: usize, stride: usize) -> Vec<usize> {
    let last = extent - patch;
    let mut pos: Vec<usize> = (0..=last).step_by(stride.max(1)).collect();
    if *pos.last().unwrap() != last {
        pos.push(last); // keep the image fully covered
    }
    pos
}

/// Slices an H x W image into s x s patches on a stride grid; each patch is
/// flattened column-major into one column of the signal matrix.
pub fn patchify(image: &Matrix, patch: usize, stride: usize) -> Result<(Matrix, PatchGeometry)> {
    let (h, w) = (image.rows(), image.cols());
    if patch == 0 || patch > h.min(w) {
        return Err(AclsError::invalid(format!(
            "patch size {patch} does not fit a {h}x{w} image"
        )));
    }
    let tops = stride_positions(h, patch, stride);
    let lefts = stride_positions(w, patch, stride);
    let mut positions = Vec::with_capacity(tops.len() * lefts.len());
    for &t in &tops {
        for &l in &lefts {
            positions.push((t, l));
        }
    }
    let n = patch * patch;
    let mut y = Matrix::zeros(n, positions.len());
    for (col, &(t, l)) in positions.iter().enumerate() {
        for c in 0..patch {
            for r in 0..patch {
                y[(c * patch + r, col)] = image[(t + r, l + c)];
            }
        }
    }
    Ok((
        y,
        PatchGeometry {
            height: h,
            width: w,
            patch,
            positions,
        },
    ))
}

/// Reassembles an image from a patch matrix, averaging overlapping pixels.
pub fn reassemble(y: &Matrix, geom: &PatchGeometry) -> Result<Matrix> {
    if y.cols() != geom.positions.len() || y.rows() != geom.patch * geom.patch {
        return Err(AclsError::invalid("patch matrix does not match geometry"));
    }
    let mut acc = Matrix::zeros(geom.height, geom.width);
    let mut count = Matrix::zeros(geom.height, geom.width);
    let s = geom.patch;
    for (col, &(t, l)) in geom.positions.iter().enumerate() {
        for c in 0..s {
            for r in 0..s {
                acc[(t + r, l + c)] += y[(c * s + r, col)];
                count[(t + r, l + c)] += 1.0;
            }
        }
    }
    for i in 0..geom.height {
        for j in 0..geom.width {
            if count[(i, j)] == 0.0 {
                return Err(AclsError::invalid(format!(
                    "pixel ({i}, {j}) not covered by any patch; use stride <= patch"
                )));
            }
            acc[(i, j)] /= count[(i, j)];
        }
    }
    Ok(acc)
}

#[derive(Debug, Clone)]
pub struct SparseCodeResult {
    /// Sparse codes, one column per patch (m x p).
    pub alpha: Matrix,
    /// Entrywise corruption flags, same shape as the signal matrix.
    pub mask: Vec<Vec<bool>>,
    /// Y on trusted entries, D alpha on flagged ones.
    pub restored: Matrix,
    pub lambda: f64,
    pub tau: f64,
    pub rounds: usize,
    pub converged: bool,
    /// The mask entered a two-cycle instead of a fixed point.
    pub cycled: bool,
}

const CD_TOL: f64 = 1e-8;
const CD_MAX_SWEEPS: usize = 2000;

/// Cyclic coordinate descent for one masked Lasso column:
/// min 0.5 ||(y - D a) .* w||^2 + lambda ||a||_1 with binary weights w.
fn lasso_column(d: &Matrix, y: &[f64], w: &[bool], lambda: f64, alpha: &mut [f64]) {
    let (n, m) = (d.rows(), d.cols());
    // Masked squared atom norms.
    let mut diag = vec![0.0; m];
    for j in 0..m {
        let mut s = 0.0;
        for r in 0..n {
            if w[r] {
                let v = d[(r, j)];
                s += v * v;
            }
        }
        diag[j] = s;
    }
    // Full residual; inner products read only unmasked rows.
    let mut resid: Vec<f64> = (0..n).map(|r| y[r] - dot(d.row(r), alpha)).collect();
    for _ in 0..CD_MAX_SWEEPS {
        let mut max_delta = 0.0f64;
        for j in 0..m {
            if diag[j] == 0.0 {
                // Atom invisible under this mask; keep the coefficient at
                // its (zero) value.
                continue;
            }
            let mut rho = 0.0;
            for r in 0..n {
                if w[r] {
                    rho += d[(r, j)] * resid[r];
                }
            }
            rho += diag[j] * alpha[j];
            let new = soft_threshold(rho, lambda) / diag[j];
            let delta = new - alpha[j];
            if delta != 0.0 {
                for r in 0..n {
                    resid[r] -= d[(r, j)] * delta;
                }
                alpha[j] = new;
                max_delta = max_delta.max(delta.abs());
            }
        }
        if max_delta <= CD_TOL {
            break;
        }
    }
}

#[inline]
fn soft_threshold(x: f64, lambda: f64) -> f64 {
    if x > lambda {
        x - lambda
    } else if x < -lambda {
        x + lambda
    } else {
        0.0
    }
}

/// Alternating sparse coding and corruption masking. Stops when the mask
/// reaches a fixed point, enters a two-cycle (reported), or `max_rounds` is
/// hit.
pub fn fit_inpaint(
    y: &Matrix,
    dict: &Dictionary,
    lambda: f64,
    tau: f64,
    max_rounds: usize,
) -> Result<SparseCodeResult> {
    if lambda < 0.0 || !lambda.is_finite() {
        return Err(AclsError::invalid("lambda must be nonnegative"));
    }
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(AclsError::invalid("tau must be positive"));
    }
    if y.rows() != dict.signal_dim() {
        return Err(AclsError::invalid(format!(
            "signal dimension {} does not match dictionary {}",
            y.rows(),
            dict.signal_dim()
        )));
    }
    let (n, p) = (y.rows(), y.cols());
    let m = dict.atoms();
    let d = dict.matrix();

    let mut mask: Vec<Vec<bool>> = vec![vec![true; n]; p]; // per-column masks
    let mut prev_mask: Option<Vec<Vec<bool>>> = None;
    let mut alpha_cols: Vec<Vec<f64>> = vec![vec![0.0; m]; p];
    let mut rounds = 0usize;
    let mut converged = false;
    let mut cycled = false;

    while rounds < max_rounds {
        rounds += 1;
        // Sparse codes per column on the currently trusted entries.
        let cols: Vec<usize> = (0..p).collect();
        let new_alphas: Vec<Vec<f64>> = cols
            .par_iter()
            .map(|&i| {
                let yi = y.col(i);
                let w: Vec<bool> = mask[i].iter().map(|&flag| !flag).collect();
                let mut a = alpha_cols[i].clone();
                lasso_column(d, &yi, &w, lambda, &mut a);
                a
            })
            .collect();
        alpha_cols = new_alphas;

        // Mask from the feasibility condition on full residuals.
        let new_mask: Vec<Vec<bool>> = (0..p)
            .map(|i| {
                let yi = y.col(i);
                (0..n)
                    .map(|r| {
                        let fit = dot(d.row(r), &alpha_cols[i]);
                        (yi[r] - fit).abs() > tau
                    })
                    .collect()
            })
            .collect();
        if new_mask == mask {
            converged = true;
            break;
        }
        if prev_mask.as_ref() == Some(&new_mask) {
            mask = new_mask;
            cycled = true;
            break;
        }
        prev_mask = Some(std::mem::replace(&mut mask, new_mask));
    }

    let mut alpha = Matrix::zeros(m, p);
    for i in 0..p {
        for j in 0..m {
            alpha[(j, i)] = alpha_cols[i][j];
        }
    }
    let mut restored = Matrix::zeros(n, p);
    for i in 0..p {
        for r in 0..n {
            restored[(r, i)] = if mask[i][r] {
                dot(d.row(r), &alpha_cols[i])
            } else {
                y[(r, i)]
            };
        }
    }
    // Re-index the mask to match the signal layout (row r, column i).
    let mask_rows: Vec<Vec<bool>> = (0..n).map(|r| (0..p).map(|i| mask[i][r]).collect()).collect();
    Ok(SparseCodeResult {
        alpha,
        mask: mask_rows,
        restored,
        lambda,
        tau,
        rounds,
        converged,
        cycled,
    })
}

/// Peak signal-to-noise ratio in decibels; identical inputs map to +inf.
pub fn psnr(x_hat: &Matrix, x: &Matrix, peak: f64) -> Result<f64> {
    if x_hat.rows() != x.rows() || x_hat.cols() != x.cols() {
        return Err(AclsError::invalid("psnr: shape mismatch"));
    }
    if !(peak > 0.0 && peak.is_finite()) {
        return Err(AclsError::invalid("psnr: peak must be positive"));
    }
    let d = x_hat.rows() * x_hat.cols();
    let mse: f64 = x_hat
        .data()
        .iter()
        .zip(x.data())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / d as f64;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (peak * peak / mse).log10())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha12Rng;

    fn random_image(rng: &mut ChaCha12Rng, h: usize, w: usize) -> Matrix {
        Matrix::from_row_major(h, w, (0..h * w).map(|_| rng.random::<f64>()).collect()).unwrap()
    }

    #[test]
    fn patchify_single_patch_is_identity() {
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        let img = random_image(&mut rng, 5, 5);
        let (y, geom) = patchify(&img, 5, 3).unwrap();
        assert_eq!(y.cols(), 1);
        let back = reassemble(&y, &geom).unwrap();
        assert_eq!(back, img);
    }

    #[test]
    fn patchify_counts_sliding_patches() {
        let mut rng = ChaCha12Rng::seed_from_u64(2);
        let img = random_image(&mut rng, 16, 16);
        let (y, _) = patchify(&img, 15, 1).unwrap();
        assert_eq!(y.cols(), 4); // (16 - 15 + 1)^2
    }

    #[test]
    fn patchify_roundtrip_with_overlap() {
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        let img = random_image(&mut rng, 17, 13);
        for stride in [1, 2, 3, 4] {
            let (y, geom) = patchify(&img, 4, stride).unwrap();
            let back = reassemble(&y, &geom).unwrap();
            for i in 0..17 {
                for j in 0..13 {
                    assert!((back[(i, j)] - img[(i, j)]).abs() <= 1e-12);
                }
            }
        }
    }

    #[test]
    fn dct_complete_basis_is_orthonormal() {
        let dict = dct_dictionary(16, 16).unwrap();
        let d = dict.matrix();
        let gram = d.transpose().matmul(d);
        for i in 0..16 {
            for j in 0..16 {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((gram[(i, j)] - expect).abs() <= 1e-10);
            }
        }
    }

    #[test]
    fn dct_atoms_unit_norm() {
        let dict = dct_dictionary(25, 40).unwrap();
        for &n in dict.atom_norms() {
            assert!((n - 1.0).abs() <= 1e-12);
        }
        assert_eq!(dict.atoms(), 40);
    }

    #[test]
    fn dct_reconstructs_smooth_ramp() {
        // Complete basis, lambda = 0, nothing masked: the coded patch must
        // reproduce the ramp to numerical precision.
        let s = 6;
        let dict = dct_dictionary(s * s, s * s).unwrap();
        let mut y = vec![0.0; s * s];
        for c in 0..s {
            for r in 0..s {
                y[c * s + r] = 0.1 * r as f64 + 0.05 * c as f64;
            }
        }
        let mut alpha = vec![0.0; s * s];
        lasso_column(dict.matrix(), &y, &vec![true; s * s], 0.0, &mut alpha);
        let fit: Vec<f64> = (0..s * s)
            .map(|r| dot(dict.matrix().row(r), &alpha))
            .collect();
        for (a, b) in fit.iter().zip(&y) {
            assert!((a - b).abs() <= 1e-8);
        }
    }

    #[test]
    fn perfect_representation_converges_immediately() {
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        let dict = dct_dictionary(16, 16).unwrap();
        let mut alpha0 = Matrix::zeros(16, 3);
        for i in 0..3 {
            alpha0[(i, i)] = 1.0 + rng.random::<f64>();
        }
        let y = dict.matrix().matmul(&alpha0);
        let res = fit_inpaint(&y, &dict, 1e-10, 0.9, 50).unwrap();
        assert!(res.converged);
        assert!(res.mask.iter().flatten().all(|&f| !f));
        for i in 0..16 {
            for j in 0..3 {
                assert!((res.restored[(i, j)] - y[(i, j)]).abs() <= 1e-6);
            }
        }
    }

    #[test]
    fn huge_lambda_kills_every_coefficient() {
        let mut rng = ChaCha12Rng::seed_from_u64(6);
        let dict = dct_dictionary(16, 25).unwrap();
        let y = Matrix::from_row_major(16, 2, (0..32).map(|_| rng.random::<f64>()).collect())
            .unwrap();
        let res = fit_inpaint(&y, &dict, 1e6, 10.0, 10).unwrap();
        assert!(res.alpha.data().iter().all(|&a| a == 0.0));
    }

    #[test]
    fn restored_agrees_with_input_on_trusted_entries() {
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        let dict = dct_dictionary(16, 20).unwrap();
        let y = Matrix::from_row_major(
            16,
            5,
            (0..80)
                .map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal))
                .collect(),
        )
        .unwrap();
        let res = fit_inpaint(&y, &dict, 0.05, 1.0, 30).unwrap();
        for r in 0..16 {
            for c in 0..5 {
                if !res.mask[r][c] {
                    assert_eq!(res.restored[(r, c)], y[(r, c)]);
                }
            }
        }
    }

    #[test]
    fn lasso_satisfies_subgradient_conditions() {
        let mut rng = ChaCha12Rng::seed_from_u64(8);
        let n = 20;
        let m = 30;
        let d = Matrix::from_row_major(
            n,
            m,
            (0..n * m)
                .map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal))
                .collect(),
        )
        .unwrap();
        let dict = Dictionary::new(d).unwrap();
        let y: Vec<f64> = (0..n)
            .map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal))
            .collect();
        let mut w = vec![true; n];
        w[3] = false;
        w[11] = false;
        let lambda = 0.3;
        let mut alpha = vec![0.0; m];
        lasso_column(dict.matrix(), &y, &w, lambda, &mut alpha);
        for j in 0..m {
            let mut g = 0.0;
            for r in 0..n {
                if w[r] {
                    g += dict.matrix()[(r, j)] * (y[r] - dot(dict.matrix().row(r), &alpha));
                }
            }
            if alpha[j] == 0.0 {
                assert!(g.abs() <= lambda + 1e-6, "atom {j}: |{g}| > lambda");
            } else {
                assert!(
                    (g - lambda * alpha[j].signum()).abs() <= 1e-6,
                    "atom {j}: g = {g}, alpha = {}",
                    alpha[j]
                );
            }
        }
    }

    #[test]
    fn coordinate_descent_never_increases_objective() {
        let mut rng = ChaCha12Rng::seed_from_u64(9);
        let n = 15;
        let m = 25;
        let d = Matrix::from_row_major(
            n,
            m,
            (0..n * m)
                .map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal))
                .collect(),
        )
        .unwrap();
        let y: Vec<f64> = (0..n)
            .map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal))
            .collect();
        let mut w = vec![true; n];
        w[4] = false;
        let lambda = 0.2;
        let objective = |alpha: &[f64]| -> f64 {
            let mut q = 0.0;
            for r in 0..n {
                if w[r] {
                    let res = y[r] - dot(d.row(r), alpha);
                    q += 0.5 * res * res;
                }
            }
            q + lambda * alpha.iter().map(|a| a.abs()).sum::<f64>()
        };
        // From a cold start and from a random warm start, the solve must
        // land at or below the starting objective.
        for start_seed in 0..5u64 {
            let mut alpha: Vec<f64> = if start_seed == 0 {
                vec![0.0; m]
            } else {
                let mut r2 = ChaCha12Rng::seed_from_u64(start_seed);
                (0..m)
                    .map(|_| r2.sample::<f64, _>(rand_distr::StandardNormal))
                    .collect()
            };
            let before = objective(&alpha);
            lasso_column(&d, &y, &w, lambda, &mut alpha);
            let after = objective(&alpha);
            assert!(after <= before + 1e-12, "objective rose: {before} -> {after}");
        }
    }

    #[test]
    fn psnr_reference_points() {
        let a = Matrix::from_row_major(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(psnr(&a, &a, 255.0).unwrap(), f64::INFINITY);
        let b = Matrix::from_row_major(2, 2, vec![256.0, 257.0, 258.0, 259.0]).unwrap();
        assert!((psnr(&a, &b, 255.0).unwrap() - 0.0).abs() < 1e-12);
        assert!(psnr(&a, &Matrix::zeros(3, 2), 255.0).is_err());
    }

    proptest! {
        #[test]
        fn psnr_is_symmetric(seed in 0u64..500) {
            let mut rng = ChaCha12Rng::seed_from_u64(seed);
            let a = random_image(&mut rng, 4, 4);
            let b = random_image(&mut rng, 4, 4);
            let p1 = psnr(&a, &b, 255.0).unwrap();
            let p2 = psnr(&b, &a, 255.0).unwrap();
            prop_assert!((p1 - p2).abs() < 1e-10);
        }

        #[test]
        fn psnr_matches_direct_formula(seed in 0u64..500) {
            let mut rng = ChaCha12Rng::seed_from_u64(seed);
            let a = random_image(&mut rng, 3, 5);
            let b = random_image(&mut rng, 3, 5);
            let mse: f64 = a.data().iter().zip(b.data())
                .map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / 15.0;
            let expect = 10.0 * (255.0f64 * 255.0 / mse).log10();
            prop_assert!((psnr(&a, &b, 255.0).unwrap() - expect).abs() < 1e-10);
        }
    }
}
