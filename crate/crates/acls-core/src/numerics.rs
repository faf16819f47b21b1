//! Small dense linear algebra: least-squares solve, thin SVD, SPD inverse.
//!
//! Everything here targets the desk-scale problems the estimators produce
//! (a few dozen rows, ten or fewer columns), so the implementations favor
//! determinism and accuracy over BLAS-level throughput.

use crate::error::{AclsError, Result};

/// Relative singular-value / pivot threshold used for rank decisions.
pub const RANK_TOL: f64 = 1e-10;

/// Dense row-major matrix of `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    /// Builds a matrix from a row-major slice. Length must equal rows*cols.
    pub fn from_row_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(AclsError::invalid(format!(
                "matrix data length {} does not match {}x{}",
                data.len(),
                rows,
                cols
            )));
        }
        if !data.iter().all(|v| v.is_finite()) {
            return Err(AclsError::invalid("matrix entries must be finite"));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map(|v| v.len()).unwrap_or(0);
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            if row.len() != c {
                return Err(AclsError::invalid("ragged rows"));
            }
            data.extend_from_slice(row);
        }
        Matrix::from_row_major(r, c, data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn col(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    /// Matrix product self * other.
    pub fn matmul(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.cols, other.rows, "matmul dimension mismatch");
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                let orow = other.row(k);
                let out_row = out.row_mut(i);
                for j in 0..other.cols {
                    out_row[j] += a * orow[j];
                }
            }
        }
        out
    }

    /// Matrix-vector product self * v.
    pub fn matvec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(self.cols, v.len(), "matvec dimension mismatch");
        (0..self.rows).map(|i| dot(self.row(i), v)).collect()
    }

    /// v^T * self, returned as a vector of length cols.
    pub fn tr_matvec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(self.rows, v.len(), "tr_matvec dimension mismatch");
        let mut out = vec![0.0; self.cols];
        for i in 0..self.rows {
            let vi = v[i];
            if vi == 0.0 {
                continue;
            }
            for (o, &a) in out.iter_mut().zip(self.row(i)) {
                *o += vi * a;
            }
        }
        out
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

impl std::ops::Index<(usize, usize)> for Matrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

/// Solves min_beta ||A beta - b||_2 for a full-column-rank A via Householder
/// QR with column pivoting. Rank deficiency (pivot below `RANK_TOL` relative
/// to the largest) reports the effective rank.
pub fn solve_least_squares(a: &Matrix, b: &[f64]) -> Result<Vec<f64>> {
    let (n, p) = (a.rows(), a.cols());
    if b.len() != n {
        return Err(AclsError::invalid("rhs length does not match rows"));
    }
    if n < p {
        return Err(AclsError::SingularSystem {
            effective_rank: n,
            required: p,
        });
    }
    let (qtb, r, perm, rank) = householder_qr(a, b);
    if rank < p {
        return Err(AclsError::SingularSystem {
            effective_rank: rank,
            required: p,
        });
    }
    // Back substitution on the p x p upper triangle, then undo the pivot.
    let mut z = vec![0.0; p];
    for i in (0..p).rev() {
        let mut s = qtb[i];
        for j in i + 1..p {
            s -= r[(i, j)] * z[j];
        }
        z[i] = s / r[(i, i)];
    }
    let mut beta = vec![0.0; p];
    for (j, &pj) in perm.iter().enumerate() {
        beta[pj] = z[j];
    }
    Ok(beta)
}

/// Householder QR with column pivoting applied to the stacked system.
/// Returns (Q^T b, R, column permutation, effective rank).
fn householder_qr(a: &Matrix, b: &[f64]) -> (Vec<f64>, Matrix, Vec<usize>, usize) {
    let (n, p) = (a.rows(), a.cols());
    let mut r = a.clone();
    let mut qtb = b.to_vec();
    let mut perm: Vec<usize> = (0..p).collect();
    let mut rank = 0usize;
    let mut first_pivot = 0.0_f64;

    for k in 0..p.min(n) {
        // Pivot: move the column with the largest remaining norm to position k.
        let mut best = k;
        let mut best_norm = 0.0;
        for j in k..p {
            let s: f64 = (k..n).map(|i| r[(i, j)] * r[(i, j)]).sum();
            if s > best_norm {
                best_norm = s;
                best = j;
            }
        }
        if best != k {
            for i in 0..n {
                let tmp = r[(i, k)];
                r[(i, k)] = r[(i, best)];
                r[(i, best)] = tmp;
            }
            perm.swap(k, best);
        }
        let col_norm = best_norm.sqrt();
        if k == 0 {
            first_pivot = col_norm;
        }
        if col_norm <= RANK_TOL * first_pivot.max(f64::MIN_POSITIVE) {
            break;
        }
        rank += 1;

        // Householder reflector for column k.
        let alpha = if r[(k, k)] >= 0.0 { -col_norm } else { col_norm };
        let mut v: Vec<f64> = (k..n).map(|i| r[(i, k)]).collect();
        v[0] -= alpha;
        let vnorm2 = dot(&v, &v);
        if vnorm2 == 0.0 {
            continue;
        }
        r[(k, k)] = alpha;
        for i in k + 1..n {
            r[(i, k)] = 0.0;
        }
        for j in k + 1..p {
            let s: f64 = (k..n).map(|i| v[i - k] * r[(i, j)]).sum();
            let scale = 2.0 * s / vnorm2;
            for i in k..n {
                r[(i, j)] -= scale * v[i - k];
            }
        }
        let s: f64 = (k..n).map(|i| v[i - k] * qtb[i]).sum();
        let scale = 2.0 * s / vnorm2;
        for i in k..n {
            qtb[i] -= scale * v[i - k];
        }
    }
    (qtb, r, perm, rank)
}

/// Minimum-norm least-squares solution via the thin SVD; tolerates rank
/// deficiency and underdetermined systems. Returns (beta, residual sum of
/// squares).
pub fn least_squares_min_norm(a: &Matrix, b: &[f64]) -> Result<(Vec<f64>, f64)> {
    let (l, d, r) = thin_svd(a)?;
    let tol = RANK_TOL * d.first().copied().unwrap_or(0.0);
    let mut beta = vec![0.0; a.cols()];
    for (j, &dj) in d.iter().enumerate() {
        if dj <= tol {
            break;
        }
        let lj = l.col(j);
        let c = dot(&lj, b) / dj;
        for (bk, &rkj) in beta.iter_mut().zip(r.col(j).iter()) {
            *bk += c * rkj;
        }
    }
    let fitted = a.matvec(&beta);
    let rss = b
        .iter()
        .zip(&fitted)
        .map(|(y, f)| (y - f) * (y - f))
        .sum::<f64>();
    Ok((beta, rss))
}

/// Thin SVD A = L diag(D) R^T with L n-by-k, R p-by-k, k = min(n, p), and
/// D sorted descending. One-sided Jacobi on the column space; deterministic
/// output with the sign convention that the first nonzero entry of each left
/// singular vector is nonnegative.
pub fn thin_svd(a: &Matrix) -> Result<(Matrix, Vec<f64>, Matrix)> {
    if !a.data().iter().all(|v| v.is_finite()) {
        return Err(AclsError::invalid("thin_svd: non-finite entries"));
    }
    if a.rows() < a.cols() {
        let (l, d, r) = thin_svd(&a.transpose())?;
        return Ok((r, d, l));
    }
    let (n, p) = (a.rows(), a.cols());
    let k = p;
    let mut w = a.clone();
    let mut v = Matrix::identity(p);

    // Sweep column pairs until every pair is numerically orthogonal.
    let max_sweeps = 60;
    for _ in 0..max_sweeps {
        let mut rotated = false;
        for i in 0..p {
            for j in i + 1..p {
                let mut aii = 0.0;
                let mut ajj = 0.0;
                let mut aij = 0.0;
                for row in 0..n {
                    let wi = w[(row, i)];
                    let wj = w[(row, j)];
                    aii += wi * wi;
                    ajj += wj * wj;
                    aij += wi * wj;
                }
                if aij.abs() <= 1e-15 * (aii * ajj).sqrt() || aij == 0.0 {
                    continue;
                }
                rotated = true;
                let zeta = (ajj - aii) / (2.0 * aij);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for row in 0..n {
                    let wi = w[(row, i)];
                    let wj = w[(row, j)];
                    w[(row, i)] = c * wi - s * wj;
                    w[(row, j)] = s * wi + c * wj;
                }
                for row in 0..p {
                    let vi = v[(row, i)];
                    let vj = v[(row, j)];
                    v[(row, i)] = c * vi - s * vj;
                    v[(row, j)] = s * vi + c * vj;
                }
            }
        }
        if !rotated {
            break;
        }
    }

    // Column norms are the singular values; sort descending.
    let mut order: Vec<usize> = (0..p).collect();
    let norms: Vec<f64> = (0..p).map(|j| norm2(&w.col(j))).collect();
    order.sort_by(|&x, &y| norms[y].partial_cmp(&norms[x]).unwrap().then(x.cmp(&y)));

    let mut l = Matrix::zeros(n, k);
    let mut r = Matrix::zeros(p, k);
    let mut d = vec![0.0; k];
    let tiny = f64::MIN_POSITIVE.sqrt();
    for (out_j, &src_j) in order.iter().enumerate() {
        d[out_j] = norms[src_j];
        if norms[src_j] > tiny {
            for row in 0..n {
                l[(row, out_j)] = w[(row, src_j)] / norms[src_j];
            }
        }
        for row in 0..p {
            r[(row, out_j)] = v[(row, src_j)];
        }
    }

    // Complete L to an orthonormal set where singular values vanished.
    for j in 0..k {
        if d[j] > tiny {
            continue;
        }
        d[j] = 0.0;
        'candidate: for e in 0..n {
            let mut cand = vec![0.0; n];
            cand[e] = 1.0;
            // Two rounds of Gram-Schmidt against the filled columns.
            for _ in 0..2 {
                for q in 0..k {
                    if q == j || (d[q] == 0.0 && q > j) {
                        continue;
                    }
                    let lq = l.col(q);
                    let c = dot(&cand, &lq);
                    for (cv, &lv) in cand.iter_mut().zip(&lq) {
                        *cv -= c * lv;
                    }
                }
            }
            let nrm = norm2(&cand);
            if nrm > 0.5 {
                for row in 0..n {
                    l[(row, j)] = cand[row] / nrm;
                }
                break 'candidate;
            }
        }
    }

    // Sign convention: first nonzero entry of each left singular vector >= 0.
    for j in 0..k {
        let mut sign = 0.0;
        for row in 0..n {
            if l[(row, j)] != 0.0 {
                sign = l[(row, j)].signum();
                break;
            }
        }
        if sign < 0.0 {
            for row in 0..n {
                l[(row, j)] = -l[(row, j)];
            }
            for row in 0..p {
                r[(row, j)] = -r[(row, j)];
            }
        }
    }
    Ok((l, d, r))
}

/// Cholesky factor (lower triangular) of a symmetric positive-definite
/// matrix; fails when a pivot drops below `tol`.
pub fn cholesky(a: &Matrix, tol: f64) -> Result<Matrix> {
    let p = a.rows();
    if a.cols() != p {
        return Err(AclsError::invalid("cholesky: matrix not square"));
    }
    let mut l = Matrix::zeros(p, p);
    for i in 0..p {
        for j in 0..=i {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            if i == j {
                if s <= tol {
                    return Err(AclsError::SingularSystem {
                        effective_rank: j,
                        required: p,
                    });
                }
                l[(i, i)] = s.sqrt();
            } else {
                l[(i, j)] = s / l[(j, j)];
            }
        }
    }
    Ok(l)
}

/// Solves A x = b given the Cholesky factor L of A.
pub fn cholesky_solve(l: &Matrix, b: &[f64]) -> Vec<f64> {
    let p = l.rows();
    let mut y = vec![0.0; p];
    for i in 0..p {
        let mut s = b[i];
        for k in 0..i {
            s -= l[(i, k)] * y[k];
        }
        y[i] = s / l[(i, i)];
    }
    let mut x = vec![0.0; p];
    for i in (0..p).rev() {
        let mut s = y[i];
        for k in i + 1..p {
            s -= l[(k, i)] * x[k];
        }
        x[i] = s / l[(i, i)];
    }
    x
}

/// Inverse of a symmetric positive-definite matrix via Cholesky.
pub fn inverse_spd(a: &Matrix) -> Result<Matrix> {
    let p = a.rows();
    if a.cols() != p {
        return Err(AclsError::invalid("inverse_spd: matrix not square"));
    }
    let scale = a.max_abs().max(1.0);
    for i in 0..p {
        for j in 0..i {
            if (a[(i, j)] - a[(j, i)]).abs() > 1e-10 * scale {
                return Err(AclsError::invalid("inverse_spd: matrix not symmetric"));
            }
        }
    }
    let l = cholesky(a, RANK_TOL * scale)?;
    let mut inv = Matrix::zeros(p, p);
    for j in 0..p {
        let mut e = vec![0.0; p];
        e[j] = 1.0;
        let x = cholesky_solve(&l, &e);
        for i in 0..p {
            inv[(i, j)] = x[i];
        }
    }
    // Symmetrize to kill the last rounding asymmetry.
    for i in 0..p {
        for j in 0..i {
            let m = 0.5 * (inv[(i, j)] + inv[(j, i)]);
            inv[(i, j)] = m;
            inv[(j, i)] = m;
        }
    }
    Ok(inv)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha12Rng;

    fn random_matrix(rng: &mut ChaCha12Rng, n: usize, p: usize) -> Matrix {
        let data: Vec<f64> = (0..n * p)
            .map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal))
            .collect();
        Matrix::from_row_major(n, p, data).unwrap()
    }

    #[test]
    fn least_squares_exact_fit() {
        let a = Matrix::from_rows(&[vec![1.0], vec![2.0]]).unwrap();
        let beta = solve_least_squares(&a, &[2.0, 4.0]).unwrap();
        assert!((beta[0] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn least_squares_identity() {
        let a = Matrix::identity(3);
        let beta = solve_least_squares(&a, &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(beta, vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn least_squares_normal_equations_residual() {
        // Residual must be orthogonal to the column space.
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        let a = random_matrix(&mut rng, 20, 4);
        let b: Vec<f64> = (0..20)
            .map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal))
            .collect();
        let beta = solve_least_squares(&a, &b).unwrap();
        let fitted = a.matvec(&beta);
        let resid: Vec<f64> = b.iter().zip(&fitted).map(|(y, f)| y - f).collect();
        let at_r = a.tr_matvec(&resid);
        let bn = norm2(&b);
        for g in at_r {
            assert!(g.abs() <= 1e-8 * bn, "normal equations violated: {g}");
        }
    }

    #[test]
    fn least_squares_rank_deficient_errors() {
        let a = Matrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 4.0], vec![3.0, 6.0]]).unwrap();
        match solve_least_squares(&a, &[1.0, 2.0, 3.0]) {
            Err(AclsError::SingularSystem { effective_rank, .. }) => {
                assert_eq!(effective_rank, 1)
            }
            other => panic!("expected SingularSystem, got {other:?}"),
        }
    }

    #[test]
    fn svd_diagonal() {
        let a = Matrix::from_rows(&[vec![3.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let (l, d, r) = thin_svd(&a).unwrap();
        assert!((d[0] - 3.0).abs() < 1e-12 && (d[1] - 1.0).abs() < 1e-12);
        // L and R are signed permutations of the identity here.
        for m in [&l, &r] {
            for i in 0..2 {
                for j in 0..2 {
                    let expect = if i == j { 1.0 } else { 0.0 };
                    assert!((m[(i, j)].abs() - expect).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn svd_rank_one() {
        let u = [1.0, -2.0, 0.5];
        let v = [2.0, 1.0];
        let mut a = Matrix::zeros(3, 2);
        for i in 0..3 {
            for j in 0..2 {
                a[(i, j)] = u[i] * v[j];
            }
        }
        let (_, d, _) = thin_svd(&a).unwrap();
        let expect = norm2(&u) * norm2(&v);
        assert!((d[0] - expect).abs() < 1e-10);
        assert!(d[1].abs() < 1e-10);
    }

    #[test]
    fn svd_reconstruction_and_orthonormality() {
        let mut rng = ChaCha12Rng::seed_from_u64(42);
        let a = random_matrix(&mut rng, 10, 6);
        let (l, d, r) = thin_svd(&a).unwrap();
        let scale = a.max_abs();
        // A = L D R^T elementwise to 1e-10 * ||A||.
        for i in 0..10 {
            for j in 0..6 {
                let mut s = 0.0;
                for k in 0..6 {
                    s += l[(i, k)] * d[k] * r[(j, k)];
                }
                assert!((s - a[(i, j)]).abs() <= 1e-10 * scale);
            }
        }
        for m in [&l, &r] {
            let g = m.transpose().matmul(m);
            for i in 0..6 {
                for j in 0..6 {
                    let expect = if i == j { 1.0 } else { 0.0 };
                    assert!((g[(i, j)] - expect).abs() <= 1e-10);
                }
            }
        }
        assert!(d.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn svd_wide_matrix() {
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        let a = random_matrix(&mut rng, 4, 9);
        let (l, d, r) = thin_svd(&a).unwrap();
        assert_eq!((l.rows(), l.cols()), (4, 4));
        assert_eq!((r.rows(), r.cols()), (9, 4));
        let scale = a.max_abs();
        for i in 0..4 {
            for j in 0..9 {
                let mut s = 0.0;
                for k in 0..4 {
                    s += l[(i, k)] * d[k] * r[(j, k)];
                }
                assert!((s - a[(i, j)]).abs() <= 1e-10 * scale);
            }
        }
    }

    #[test]
    fn svd_zero_matrix_completes_basis() {
        let a = Matrix::zeros(4, 3);
        let (l, d, _) = thin_svd(&a).unwrap();
        assert!(d.iter().all(|&x| x == 0.0));
        let g = l.transpose().matmul(&l);
        for i in 0..3 {
            for j in 0..3 {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((g[(i, j)] - expect).abs() <= 1e-10);
            }
        }
    }

    #[test]
    fn spd_inverse_identity_and_diagonal() {
        let inv = inverse_spd(&Matrix::identity(3)).unwrap();
        assert_eq!(inv, Matrix::identity(3));
        let a = Matrix::from_rows(&[vec![2.0, 0.0], vec![0.0, 4.0]]).unwrap();
        let inv = inverse_spd(&a).unwrap();
        assert!((inv[(0, 0)] - 0.5).abs() < 1e-14);
        assert!((inv[(1, 1)] - 0.25).abs() < 1e-14);
    }

    #[test]
    fn spd_inverse_multiply_back() {
        let mut rng = ChaCha12Rng::seed_from_u64(11);
        let b = random_matrix(&mut rng, 6, 6);
        let mut a = b.transpose().matmul(&b);
        for i in 0..6 {
            a[(i, i)] += 1.0;
        }
        let inv = inverse_spd(&a).unwrap();
        let prod = a.matmul(&inv);
        for i in 0..6 {
            for j in 0..6 {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((prod[(i, j)] - expect).abs() <= 1e-8);
            }
        }
    }

    #[test]
    fn spd_inverse_rejects_indefinite() {
        let a = Matrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 1.0]]).unwrap();
        assert!(matches!(
            inverse_spd(&a),
            Err(AclsError::SingularSystem { .. })
        ));
    }

    #[test]
    fn min_norm_handles_underdetermined() {
        let a = Matrix::from_rows(&[vec![1.0, 1.0]]).unwrap();
        let (beta, rss) = least_squares_min_norm(&a, &[2.0]).unwrap();
        assert!(rss < 1e-20);
        assert!((beta[0] - 1.0).abs() < 1e-12 && (beta[1] - 1.0).abs() < 1e-12);
    }
}
