//! Sketched low-rank approximation: Frobenius error via two sparse embeddings,
//! spectral error via the subspace power method.

use serde::{Deserialize, Serialize};

use crate::constants::{LOWRANK_ROWS, POWER_ITERATIONS};
use crate::error::{Error, Result};
use crate::matrix::svd::{pinv_default, svd_default};
use crate::matrix::{qr, sym_eigvals, DenseMatrix};
use crate::rng::{self, with_reseed};
use crate::sketch::make_sparse_embedding;

/// Largest `n·d` for which [`FactoredLowRank::to_dense`] will materialise the product.
pub const DENSE_LIMIT: usize = 1_000_000;

/// `L · U · R` with `R` having orthonormal rows.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FactoredLowRank {
    pub l: DenseMatrix,
    pub u: DenseMatrix,
    pub r: DenseMatrix,
    pub rank: usize,
}

impl FactoredLowRank {
    pub fn shape(&self) -> (usize, usize) {
        (self.l.rows(), self.r.cols())
    }

    pub fn to_dense(&self) -> Result<DenseMatrix> {
        let (n, d) = self.shape();
        if n * d > DENSE_LIMIT {
            return Err(Error::InvalidArgument(format!("refusing to densify a {n}x{d} product")));
        }
        self.l.matmul(&self.u)?.matmul(&self.r)
    }

    /// `‖A − LUR‖_F`, one row at a time.
    pub fn frobenius_residual(&self, a: &DenseMatrix) -> Result<f64> {
        if a.shape() != self.shape() {
            return Err(Error::Dimension(format!("residual of {:?} against {:?}", a.shape(), self.shape())));
        }
        let ur = self.u.matmul(&self.r)?;
        let mut acc = 0.0;
        for i in 0..a.rows() {
            let row = ur.t_matvec(self.l.row(i))?;
            acc += a.row(i).iter().zip(&row).map(|(p, q)| (p - q) * (p - q)).sum::<f64>();
        }
        Ok(acc.sqrt())
    }
}

/// Factors `U Σ Vᵀ` of `m` truncated to rank `k`.
fn truncated(m: &DenseMatrix, k: usize) -> Result<(DenseMatrix, Vec<f64>, DenseMatrix)> {
    let f = svd_default(m)?.truncate(k);
    Ok((f.u, f.sigma, f.vt))
}

/// `[A U]_k Uᵀ`: the best rank-`k` approximation of `A` inside the row space of `Uᵀ`.
pub fn best_rank_k_in_rowspace(a: &DenseMatrix, ut: &DenseMatrix, k: usize) -> Result<FactoredLowRank> {
    if ut.cols() != a.cols() {
        return Err(Error::Dimension(format!("basis has {} columns, A has {}", ut.cols(), a.cols())));
    }
    if k == 0 || k > ut.rows() {
        return Err(Error::InvalidArgument(format!("need 1 <= k <= {}, got {k}", ut.rows())));
    }
    let defect = ut.transpose().orthonormality_defect();
    if defect > 1e-8 {
        return Err(Error::InvalidArgument(format!("rows of Ut are not orthonormal (defect {defect:.3e})")));
    }
    let (l, sigma, vt) = truncated(&a.matmul_t(ut)?, k)?;
    let rank = sigma.len();
    Ok(FactoredLowRank { l, u: DenseMatrix::diag(&sigma), r: vt.matmul(ut)?, rank })
}

/// Left sketch size `m = C (k² + k/ε)`.
pub fn lowrank_sketch_rows(k: usize, eps: f64) -> usize {
    let kf = k as f64;
    ((LOWRANK_ROWS * (kf * kf + kf / eps)).ceil() as usize).max(k)
}

/// `[ARU]_k Uᵀ (SAR)† SA` with sparse embeddings `S` (left) and `R` (right).
///
/// The right sketch has `min(d, m²)` columns; at the cap it is the identity.
pub fn frobenius_lowrank(a: &DenseMatrix, k: usize, eps: f64, seed: u64) -> Result<FactoredLowRank> {
    let (n, d) = a.shape();
    if k == 0 || k > n.min(d) {
        return Err(Error::InvalidArgument(format!("need 1 <= k <= {}, got {k}", n.min(d))));
    }
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::InvalidArgument(format!("eps must lie in (0,1), got {eps}")));
    }
    let m = lowrank_sketch_rows(k, eps).min(n);
    let t = m.saturating_mul(m).min(d);
    with_reseed(seed, |s| {
        let left = make_sparse_embedding(m, n, 1, rng::derive(s, 1))?;
        let sa = left.apply(a)?;
        let (ar, sar) = if t == d {
            (a.clone(), sa.clone())
        } else {
            let ar = make_sparse_embedding(t, d, 1, rng::derive(s, 2))?.apply(&a.transpose())?.transpose();
            let sar = left.apply(&ar)?;
            (ar, sar)
        };
        let f = svd_default(&sar)?;
        if f.rank() == 0 {
            return Err(Error::RankDeficient(format!("sketch SAR of a {n}x{d} matrix is zero")));
        }
        let (ut, u_basis) = (f.vt.clone(), f.v());
        let (lu, sigma, vt) = truncated(&ar.matmul(&u_basis)?, k)?;
        let rank = sigma.len();
        // M = Ṽᵀ Uᵀ (SAR)† SA, then re-split M = Tᵀ Qᵀ so the right factor has orthonormal rows.
        let m_full = vt.matmul(&ut)?.matmul(&pinv_default(&sar)?)?.matmul(&sa)?;
        let fq = qr(&m_full.transpose())?;
        let l = lu.scale_cols(&sigma);
        Ok(FactoredLowRank { l, u: fq.r.transpose(), r: fq.q.transpose(), rank })
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PowerResult {
    /// `n x k` with orthonormal columns.
    pub z: DenseMatrix,
    /// `Zᵀ A`, so the approximation is `Z · coeffs`.
    pub coeffs: DenseMatrix,
    pub iterations: usize,
}

impl PowerResult {
    pub fn factored(&self) -> FactoredLowRank {
        let f = qr(&self.coeffs.transpose()).expect("k <= d");
        FactoredLowRank { l: self.z.clone(), u: f.r.transpose(), r: f.q.transpose(), rank: self.z.cols() }
    }
}

/// `q = ⌈C ln(n d) / ε⌉`.
pub fn power_iterations(n: usize, d: usize, eps: f64) -> usize {
    ((POWER_ITERATIONS * ((n * d).max(2) as f64).ln() / eps).ceil() as usize).max(1)
}

/// Subspace power method with the iteration count chosen from `ε`.
pub fn spectral_lowrank_power(a: &DenseMatrix, k: usize, eps: f64, seed: u64) -> Result<PowerResult> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::InvalidArgument(format!("eps must lie in (0,1), got {eps}")));
    }
    spectral_power_q(a, k, power_iterations(a.rows(), a.cols(), eps), seed)
}

/// `Y = (AAᵀ)^q A G` by alternating products, re-orthonormalised after every step; `Z` spans `Y`.
pub fn spectral_power_q(a: &DenseMatrix, k: usize, q: usize, seed: u64) -> Result<PowerResult> {
    let (n, d) = a.shape();
    if k == 0 || k > n.min(d) {
        return Err(Error::InvalidArgument(format!("need 1 <= k <= {}, got {k}", n.min(d))));
    }
    with_reseed(seed, |s| {
        let mut g = rng::seeded(s, 21);
        let gm = DenseMatrix::from_fn(d, k, |_, _| rng::normal(&mut g));
        let basis = |y: &DenseMatrix| -> Result<DenseMatrix> {
            let f = qr(y)?;
            if f.rank_deficient {
                return Err(Error::RankDeficient(format!("power iterate of a {n}x{d} matrix lost rank")));
            }
            Ok(f.q)
        };
        let mut z = basis(&a.matmul(&gm)?)?;
        for _ in 0..q {
            let w = basis(&a.t_matmul(&z)?)?;
            z = basis(&a.matmul(&w)?)?;
        }
        let coeffs = z.t_matmul(a)?;
        Ok(PowerResult { z, coeffs, iterations: q })
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ResidualNorm {
    Frobenius,
    Spectral,
}

/// `‖A − Z Zᵀ A‖` for `Z` with orthonormal columns.
pub fn project_residual_norm(a: &DenseMatrix, z: &DenseMatrix, norm: ResidualNorm) -> Result<f64> {
    if z.rows() != a.rows() {
        return Err(Error::Dimension(format!("Z has {} rows, A has {}", z.rows(), a.rows())));
    }
    let c = z.t_matmul(a)?;
    let (n, d) = a.shape();
    let residual_row = |i: usize| -> Result<Vec<f64>> {
        let p = c.t_matvec(z.row(i))?;
        Ok(a.row(i).iter().zip(&p).map(|(x, y)| x - y).collect())
    };
    match norm {
        ResidualNorm::Frobenius => {
            let mut acc = 0.0;
            for i in 0..n {
                acc += residual_row(i)?.iter().map(|v| v * v).sum::<f64>();
            }
            Ok(acc.sqrt())
        }
        ResidualNorm::Spectral => {
            let gram = if d <= n {
                let mut g = DenseMatrix::zeros(d, d);
                for i in 0..n {
                    let e = residual_row(i)?;
                    for p in 0..d {
                        for (q, eq) in e.iter().enumerate() {
                            g[(p, q)] += e[p] * eq;
                        }
                    }
                }
                g
            } else {
                let rows = (0..n).map(residual_row).collect::<Result<Vec<_>>>()?;
                let e = DenseMatrix::from_fn(n, d, |i, j| rows[i][j]);
                e.matmul_t(&e)?
            };
            let top = sym_eigvals(&gram)?.last().copied().unwrap_or(0.0);
            Ok(top.max(0.0).sqrt())
        }
    }
}
