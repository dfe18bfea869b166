use super::{default_rank_tol, dot, qr, DenseMatrix};
use crate::error::{Error, Result};

const MAX_SWEEPS: usize = 60;

/// Thin SVD truncated to numerical rank: `A ≈ U diag(sigma) Vt`.
#[derive(Clone, Debug)]
pub struct SvdResult {
    pub u: DenseMatrix,
    pub sigma: Vec<f64>,
    pub vt: DenseMatrix,
}

impl SvdResult {
    pub fn rank(&self) -> usize {
        self.sigma.len()
    }

    /// Keeps the leading `k` triplets (or all, if fewer).
    pub fn truncate(&self, k: usize) -> SvdResult {
        let k = k.min(self.rank());
        let idx: Vec<usize> = (0..k).collect();
        SvdResult {
            u: self.u.select_cols(&idx),
            sigma: self.sigma[..k].to_vec(),
            vt: self.vt.select_rows(&idx),
        }
    }

    pub fn reconstruct(&self) -> DenseMatrix {
        self.u.scale_cols(&self.sigma).matmul(&self.vt).expect("factor shapes agree")
    }

    /// Right singular vectors as columns.
    pub fn v(&self) -> DenseMatrix {
        self.vt.transpose()
    }
}

/// One-sided Jacobi SVD; singular values `<= rank_tol * σ_max` are dropped.
pub fn svd(a: &DenseMatrix, rank_tol: f64) -> Result<SvdResult> {
    if !(rank_tol >= 0.0) {
        return Err(Error::InvalidArgument(format!("rank_tol must be non-negative, got {rank_tol}")));
    }
    let (u, sigma, v) = full(a)?;
    let smax = sigma.first().copied().unwrap_or(0.0);
    let rho = sigma.iter().take_while(|&&s| s > rank_tol * smax && s > 0.0).count();
    let idx: Vec<usize> = (0..rho).collect();
    Ok(SvdResult {
        u: u.select_cols(&idx),
        sigma: sigma[..rho].to_vec(),
        vt: v.select_cols(&idx).transpose(),
    })
}

/// SVD at the default numerical-rank threshold.
pub fn svd_default(a: &DenseMatrix) -> Result<SvdResult> {
    svd(a, default_rank_tol(a.rows(), a.cols()))
}

/// All `min(rows, cols)` singular values, non-increasing, zeros included.
pub fn singular_values(a: &DenseMatrix) -> Result<Vec<f64>> {
    Ok(full(a)?.1)
}

/// Moore-Penrose pseudoinverse `V Σ† Uᵀ`.
pub fn pinv(a: &DenseMatrix, rank_tol: f64) -> Result<DenseMatrix> {
    let s = svd(a, rank_tol)?;
    let inv: Vec<f64> = s.sigma.iter().map(|x| 1.0 / x).collect();
    if s.rank() == 0 {
        return Ok(DenseMatrix::zeros(a.cols(), a.rows()));
    }
    s.vt.transpose().scale_cols(&inv).matmul_t(&s.u)
}

pub fn pinv_default(a: &DenseMatrix) -> Result<DenseMatrix> {
    pinv(a, default_rank_tol(a.rows(), a.cols()))
}

/// Full thin decomposition: `U` is m×p, `V` is n×p, p = min(m, n).
fn full(a: &DenseMatrix) -> Result<(DenseMatrix, Vec<f64>, DenseMatrix)> {
    let (m, n) = a.shape();
    if m < n {
        let (u, s, v) = full(&a.transpose())?;
        return Ok((v, s, u));
    }
    if n == 0 {
        return Ok((DenseMatrix::zeros(m, 0), Vec::new(), DenseMatrix::zeros(0, 0)));
    }
    if m > n {
        let f = qr::qr(a)?;
        let (ur, s, v) = jacobi(&f.r, m, n)?;
        return Ok((f.q.matmul(&ur)?, s, v));
    }
    jacobi(a, m, n)
}

/// Hestenes rotations on the columns of a square or tall matrix.
fn jacobi(a: &DenseMatrix, m0: usize, n0: usize) -> Result<(DenseMatrix, Vec<f64>, DenseMatrix)> {
    let (m, n) = a.shape();
    let mut w: Vec<Vec<f64>> = (0..n).map(|j| a.col(j)).collect();
    let mut v: Vec<Vec<f64>> = (0..n)
        .map(|j| {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            e
        })
        .collect();
    let tol = f64::EPSILON * (m as f64).sqrt();
    // Columns at round-off level carry no information and never become orthogonal.
    let floor = (f64::EPSILON * a.frobenius_norm()).powi(2);
    let mut converged = false;
    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let alpha = dot(&w[p], &w[p]);
                let beta = dot(&w[q], &w[q]);
                let gamma = dot(&w[p], &w[q]);
                if gamma == 0.0 || alpha <= floor || beta <= floor || gamma.abs() <= tol * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate(&mut w, p, q, c, s);
                rotate(&mut v, p, q, c, s);
            }
        }
        if !rotated {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NotConverged { rows: m0, cols: n0, sweeps: MAX_SWEEPS });
    }
    let norms: Vec<f64> = w.iter().map(|c| dot(c, c).sqrt()).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| norms[j].total_cmp(&norms[i]));
    let mut u = DenseMatrix::zeros(m, n);
    let mut vm = DenseMatrix::zeros(n, n);
    let mut sigma = Vec::with_capacity(n);
    for (k, &j) in order.iter().enumerate() {
        let s = norms[j];
        sigma.push(s);
        if s > 0.0 {
            let col: Vec<f64> = w[j].iter().map(|x| x / s).collect();
            u.set_col(k, &col);
        }
        vm.set_col(k, &v[j]);
    }
    Ok((u, sigma, vm))
}

fn rotate(cols: &mut [Vec<f64>], p: usize, q: usize, c: f64, s: f64) {
    let (lo, hi) = cols.split_at_mut(q);
    let (cp, cq) = (&mut lo[p], &mut hi[0]);
    for (x, y) in cp.iter_mut().zip(cq.iter_mut()) {
        let (a, b) = (*x, *y);
        *x = c * a - s * b;
        *y = s * a + c * b;
    }
}

/// Orthonormal basis of the column space at the default rank threshold.
pub fn range_basis(a: &DenseMatrix) -> Result<DenseMatrix> {
    Ok(svd_default(a)?.u)
}
