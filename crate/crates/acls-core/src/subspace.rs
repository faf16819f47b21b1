//! Robust low-rank recovery: alternating minimization with a capped frame
//! loss, the orthogonal Procrustes basis update, and the plain PCA baseline.
//!
//! Frames are the rows of Y (n frames of dimension p). A frame whose
//! residual norm exceeds tau is flagged and drops out of the mean, score,
//! and basis updates; the flat tau^2 charge it pays keeps the full
//! objective comparable across sweeps.

use crate::error::{AclsError, Result};
use crate::numerics::{thin_svd, Matrix};

#[derive(Debug, Clone)]
pub struct SubspaceModel {
    /// Mean vector, length p.
    pub m: Vec<f64>,
    /// Orthonormal basis, p x q.
    pub u: Matrix,
    /// Scores, n x q (row i holds s_i).
    pub s: Matrix,
    /// Frame-level outlier flags, length n.
    pub delta: Vec<bool>,
    pub tau: f64,
    pub objective: f64,
    pub sweeps: usize,
}

impl SubspaceModel {
    /// Reconstruction m + U s_i of frame i.
    pub fn background(&self, i: usize) -> Vec<f64> {
        let p = self.m.len();
        let q = self.u.cols();
        (0..p)
            .map(|j| {
                let mut v = self.m[j];
                for k in 0..q {
                    v += self.u[(j, k)] * self.s[(i, k)];
                }
                v
            })
            .collect()
    }

    /// Residual of frame i masked by its outlier flag: zero for unflagged
    /// frames, y_i - m - U s_i for flagged ones.
    pub fn foreground(&self, y: &Matrix, i: usize) -> Vec<f64> {
        let bg = self.background(i);
        if !self.delta[i] {
            return vec![0.0; bg.len()];
        }
        y.row(i).iter().zip(&bg).map(|(a, b)| a - b).collect()
    }
}

fn check_shape(y: &Matrix, q: usize) -> Result<()> {
    if q == 0 || q > y.rows().min(y.cols()) {
        return Err(AclsError::invalid(format!(
            "rank q = {q} must satisfy 1 <= q <= min(n, p) = {}",
            y.rows().min(y.cols())
        )));
    }
    Ok(())
}

/// Full objective of the masked quadratic program:
/// (1/2n) (sum over unflagged ||y_i - m - U s_i||^2 + tau^2 * #flagged).
fn objective(y: &Matrix, m: &[f64], u: &Matrix, s: &Matrix, delta: &[bool], tau: f64) -> f64 {
    let n = y.rows();
    let mut acc = 0.0;
    for i in 0..n {
        if delta[i] {
            acc += tau * tau;
        } else {
            acc += frame_residual_sq(y, m, u, s, i);
        }
    }
    acc / (2.0 * n as f64)
}

fn frame_residual_sq(y: &Matrix, m: &[f64], u: &Matrix, s: &Matrix, i: usize) -> f64 {
    let p = y.cols();
    let q = u.cols();
    let mut acc = 0.0;
    for j in 0..p {
        let mut fit = m[j];
        for k in 0..q {
            fit += u[(j, k)] * s[(i, k)];
        }
        let r = y[(i, j)] - fit;
        acc += r * r;
    }
    acc
}

/// Alternating minimization for the capped low-rank model. Updates run in
/// the order m -> scores -> basis -> flags each sweep, starting from a zero
/// basis and no flags, and stop when the objective change drops to
/// `eps_opt`.
pub fn fit_subspace_acls(
    y: &Matrix,
    q: usize,
    tau: f64,
    eps_opt: f64,
    max_sweeps: usize,
) -> Result<SubspaceModel> {
    check_shape(y, q)?;
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(AclsError::invalid("tau must be positive"));
    }
    let (n, p) = (y.rows(), y.cols());
    let mut u = Matrix::zeros(p, q);
    let mut s = Matrix::zeros(n, q);
    let mut delta = vec![false; n];
    let mut m = vec![0.0; p];
    let mut last_obj = f64::INFINITY;
    let mut obj = f64::INFINITY;
    let mut sweeps = 0usize;

    for sweep in 0..max_sweeps {
        sweeps = sweep + 1;
        let n_in = delta.iter().filter(|&&d| !d).count();
        if n_in == 0 {
            return Err(AclsError::DegenerateMask { sweep });
        }

        // Mean over unflagged frames of y_i - U s_i.
        for j in 0..p {
            m[j] = 0.0;
        }
        for i in 0..n {
            if delta[i] {
                continue;
            }
            for j in 0..p {
                let mut us = 0.0;
                for k in 0..q {
                    us += u[(j, k)] * s[(i, k)];
                }
                m[j] += y[(i, j)] - us;
            }
        }
        for j in 0..p {
            m[j] /= n_in as f64;
        }

        // Scores: U^T (y_i - m) on unflagged frames, zero on flagged ones.
        for i in 0..n {
            if delta[i] {
                for k in 0..q {
                    s[(i, k)] = 0.0;
                }
                continue;
            }
            for k in 0..q {
                let mut acc = 0.0;
                for j in 0..p {
                    acc += u[(j, k)] * (y[(i, j)] - m[j]);
                }
                s[(i, k)] = acc;
            }
        }

        // Procrustes basis update: U = L R^T from the SVD of Yo^T S, where
        // flagged rows of both factors vanish.
        let mut cross = Matrix::zeros(p, q);
        for i in 0..n {
            if delta[i] {
                continue;
            }
            for j in 0..p {
                let centered = y[(i, j)] - m[j];
                for k in 0..q {
                    cross[(j, k)] += centered * s[(i, k)];
                }
            }
        }
        let (l, _, r) = thin_svd(&cross)?;
        for j in 0..p {
            for k in 0..q {
                let mut acc = 0.0;
                for t in 0..q {
                    acc += l[(j, t)] * r[(k, t)];
                }
                u[(j, k)] = acc;
            }
        }

        // Flags from the feasibility condition.
        for i in 0..n {
            delta[i] = frame_residual_sq(y, &m, &u, &s, i).sqrt() > tau;
        }

        obj = objective(y, &m, &u, &s, &delta, tau);
        if (last_obj - obj).abs() <= eps_opt {
            break;
        }
        last_obj = obj;
    }

    Ok(SubspaceModel {
        m,
        u,
        s,
        delta,
        tau,
        objective: obj,
        sweeps,
    })
}

/// Uncapped baseline: mean plus the top-q right singular directions of the
/// centered frame matrix, in a single pass.
pub fn fit_subspace_ols(y: &Matrix, q: usize) -> Result<SubspaceModel> {
    check_shape(y, q)?;
    let (n, p) = (y.rows(), y.cols());
    let mut m = vec![0.0; p];
    for i in 0..n {
        for j in 0..p {
            m[j] += y[(i, j)];
        }
    }
    for mj in m.iter_mut() {
        *mj /= n as f64;
    }
    let mut centered = Matrix::zeros(n, p);
    for i in 0..n {
        for j in 0..p {
            centered[(i, j)] = y[(i, j)] - m[j];
        }
    }
    let (_, _, r) = thin_svd(&centered)?;
    let mut u = Matrix::zeros(p, q);
    for j in 0..p {
        for k in 0..q {
            u[(j, k)] = r[(j, k)];
        }
    }
    let mut s = Matrix::zeros(n, q);
    for i in 0..n {
        for k in 0..q {
            let mut acc = 0.0;
            for j in 0..p {
                acc += u[(j, k)] * centered[(i, j)];
            }
            s[(i, k)] = acc;
        }
    }
    let delta = vec![false; n];
    // No frame is flagged, so tau never enters the objective.
    let obj = objective(y, &m, &u, &s, &delta, f64::INFINITY);
    Ok(SubspaceModel {
        m,
        u,
        s,
        delta,
        tau: f64::INFINITY,
        objective: obj,
        sweeps: 1,
    })
}

/// Median of a mutable slice (sorted in place; even lengths average the
/// middle pair).
pub fn median_slice(values: &mut [f64]) -> f64 {
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let k = values.len();
    if k % 2 == 1 {
        values[k / 2]
    } else {
        0.5 * (values[k / 2 - 1] + values[k / 2])
    }
}

/// MAD scale over a frame matrix: subtract each row's median, then take
/// 1.4826 times the median absolute deviation over all entries.
pub fn mad_sigma(y: &Matrix) -> Result<f64> {
    if y.rows() == 0 || y.cols() == 0 {
        return Err(AclsError::invalid("mad_sigma: empty matrix"));
    }
    let mut devs = Vec::with_capacity(y.rows() * y.cols());
    for i in 0..y.rows() {
        let mut row = y.row(i).to_vec();
        let med = median_slice(&mut row);
        for &v in y.row(i) {
            devs.push((v - med).abs());
        }
    }
    Ok(1.4826 * median_slice(&mut devs))
}

/// Principal angles (radians, ascending) between the column spaces of two
/// orthonormal bases via the singular values of U1^T U2.
pub fn principal_angles(u1: &Matrix, u2: &Matrix) -> Result<Vec<f64>> {
    let cross = u1.transpose().matmul(u2);
    let (_, d, _) = thin_svd(&cross)?;
    let mut angles: Vec<f64> = d.iter().map(|&c| c.clamp(-1.0, 1.0).acos()).collect();
    angles.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(angles)
}
