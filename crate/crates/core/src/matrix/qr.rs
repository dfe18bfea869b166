use super::{default_rank_tol, DenseMatrix};
use crate::error::{Error, Result};

/// Thin QR factorisation `A = Q R` with `Q` of orthonormal columns.
#[derive(Clone, Debug)]
pub struct QrResult {
    pub q: DenseMatrix,
    pub r: DenseMatrix,
    /// Set when some `|R_ii|` is negligible relative to the largest diagonal entry.
    pub rank_deficient: bool,
}

impl QrResult {
    /// `R⁻¹`, failing when `R` is numerically singular.
    pub fn r_inverse(&self) -> Result<DenseMatrix> {
        if self.rank_deficient {
            return Err(Error::RankDeficient(format!(
                "R of a {}x{} QR factor is singular",
                self.q.rows(),
                self.q.cols()
            )));
        }
        upper_inverse(&self.r)
    }
}

/// Householder QR of a matrix with `rows >= cols`.
pub fn qr(a: &DenseMatrix) -> Result<QrResult> {
    let (m, n) = a.shape();
    if m < n {
        return Err(Error::Dimension(format!("qr needs rows >= cols, got {m}x{n}")));
    }
    // Column-major working copy: each column contiguous.
    let mut w: Vec<Vec<f64>> = (0..n).map(|j| a.col(j)).collect();
    let mut vs: Vec<Vec<f64>> = Vec::with_capacity(n);
    let mut r = DenseMatrix::zeros(n, n);
    for k in 0..n {
        let x = &w[k][k..];
        let alpha = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        let mut v = x.to_vec();
        let beta = if x[0] >= 0.0 { -alpha } else { alpha };
        v[0] -= beta;
        let vnorm = v.iter().map(|t| t * t).sum::<f64>().sqrt();
        if vnorm > 0.0 {
            v.iter_mut().for_each(|t| *t /= vnorm);
            for col in w.iter_mut().skip(k) {
                let s: f64 = 2.0 * v.iter().zip(&col[k..]).map(|(a, b)| a * b).sum::<f64>();
                for (c, vi) in col[k..].iter_mut().zip(&v) {
                    *c -= s * vi;
                }
            }
        }
        for j in k..n {
            r[(k, j)] = w[j][k];
        }
        vs.push(v);
    }
    // Accumulate thin Q by applying the reflectors to the first n unit vectors.
    let mut q = DenseMatrix::zeros(m, n);
    for j in 0..n {
        let mut e = vec![0.0; m];
        e[j] = 1.0;
        for k in (0..n).rev() {
            let v = &vs[k];
            let s: f64 = 2.0 * v.iter().zip(&e[k..]).map(|(a, b)| a * b).sum::<f64>();
            for (c, vi) in e[k..].iter_mut().zip(v) {
                *c -= s * vi;
            }
        }
        q.set_col(j, &e);
    }
    let dmax = (0..n).fold(0.0f64, |acc, i| acc.max(r[(i, i)].abs()));
    let tol = default_rank_tol(m, n) * dmax;
    let rank_deficient = n > 0 && (dmax == 0.0 || (0..n).any(|i| r[(i, i)].abs() <= tol));
    Ok(QrResult { q, r, rank_deficient })
}

/// Solves `R x = b` for upper-triangular `R`.
pub fn solve_upper(r: &DenseMatrix, b: &[f64]) -> Result<Vec<f64>> {
    let n = r.rows();
    if r.cols() != n || b.len() != n {
        return Err(Error::Dimension("solve_upper: shape mismatch".into()));
    }
    let mut x = b.to_vec();
    for i in (0..n).rev() {
        let mut s = x[i];
        for j in i + 1..n {
            s -= r[(i, j)] * x[j];
        }
        if r[(i, i)] == 0.0 {
            return Err(Error::RankDeficient(format!("zero pivot at {i} in triangular solve")));
        }
        x[i] = s / r[(i, i)];
    }
    Ok(x)
}

pub fn upper_inverse(r: &DenseMatrix) -> Result<DenseMatrix> {
    let n = r.rows();
    let mut inv = DenseMatrix::zeros(n, n);
    for j in 0..n {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        inv.set_col(j, &solve_upper(r, &e)?);
    }
    Ok(inv)
}

/// Orthonormal basis for the column space via QR with rank check.
pub fn orthonormal_basis(a: &DenseMatrix) -> Result<DenseMatrix> {
    let f = qr(a)?;
    if f.rank_deficient {
        return Err(Error::RankDeficient(format!("{}x{} input to orthonormalisation", a.rows(), a.cols())));
    }
    Ok(f.q)
}
