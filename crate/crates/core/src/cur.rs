//! CUR decomposition: dual-set (BSS) sparsification, adaptive residual sampling
//! and the combined column/row selection pipeline.

use serde::{Deserialize, Serialize};

use crate::constants::{CUR_ADAPTIVE, CUR_LEVERAGE_SAMPLES, SPARSE_EMBEDDING_ROWS};
use crate::error::{Error, Result};
use crate::leverage::rand_sampling;
use crate::lowrank::frobenius_lowrank;
use crate::matrix::svd::{pinv_default, svd_default};
use crate::matrix::{range_basis, sym_eig, DenseMatrix};
use crate::rng;
use crate::sketch::make_sparse_embedding;

/// Barrier state after one greedy step.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BssStep {
    pub index: usize,
    /// Unscaled weight `t` added to `s_index`.
    pub weight: f64,
    pub lower: f64,
    pub upper: f64,
    /// `φ(L, M)` after the step.
    pub phi: f64,
    /// `Tr(Σ s_i a_i a_iᵀ)` after the step.
    pub trace_w: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BssWeights {
    pub s: Vec<f64>,
    pub r: usize,
    pub k: usize,
    pub steps: Vec<BssStep>,
}

impl BssWeights {
    /// Indices with positive weight and the matching `√s_i`, i.e. the columns of `S`.
    pub fn selection(&self) -> (Vec<usize>, Vec<f64>) {
        self.s.iter().enumerate().filter(|(_, &w)| w > 0.0).map(|(i, &w)| (i, w.sqrt())).unzip()
    }
}

fn phi(lambda: &[f64], l: f64) -> f64 {
    lambda.iter().map(|x| 1.0 / (x - l)).sum()
}

fn invariant(msg: String) -> Error {
    Error::InvalidArgument(format!("dual-set sparsification: {msg}"))
}

/// Deterministic dual-set spectral-Frobenius sparsification.
///
/// `v` is `n x k` with `VᵀV = I`, `avecs` is `n x ℓ`. Returns weights with at most `r`
/// non-zeros such that `λ_k(Σ s_i v_i v_iᵀ) ≥ (1 − √(k/r))²` and `Σ s_i ‖a_i‖² ≤ Σ ‖a_i‖²`.
pub fn bss_sampling(v: &DenseMatrix, avecs: &DenseMatrix, r: usize) -> Result<BssWeights> {
    let (n, k) = v.shape();
    if avecs.rows() != n {
        return Err(Error::Dimension(format!("{n} spectral vectors but {} Frobenius vectors", avecs.rows())));
    }
    if !(k < r && r <= n) {
        return Err(Error::InvalidArgument(format!("need k < r <= n, got k={k} r={r} n={n}")));
    }
    let defect = v.orthonormality_defect();
    if defect > 1e-8 {
        return Err(Error::InvalidArgument(format!("VᵀV is not the identity (defect {defect:.3e})")));
    }
    let (kf, rf) = (k as f64, r as f64);
    let root = (kf / rf).sqrt();
    let norms = avecs.row_norms_sq();
    let frob: f64 = norms.iter().sum();
    let delta_up = frob / (1.0 - root);
    let up = |j: usize| if delta_up > 0.0 { norms[j] / delta_up } else { 0.0 };

    let mut s = vec![0.0; n];
    let mut m = DenseMatrix::zeros(k, k);
    let mut trace_w = 0.0;
    let mut steps = Vec::with_capacity(r);
    let mut prev_phi = kf / (rf * kf).sqrt();
    for tau in 0..r {
        let l = tau as f64 - (rf * kf).sqrt();
        let l1 = l + 1.0;
        let eig = sym_eig(&m)?;
        let lam = &eig.values;
        let dphi = phi(lam, l1) - phi(lam, l);
        let low = |j: usize| -> Result<f64> {
            let y = eig.vectors.t_matvec(v.row(j))?;
            let (mut q1, mut q2) = (0.0, 0.0);
            for (yi, li) in y.iter().zip(lam) {
                let g = 1.0 / (li - l1);
                q1 += yi * yi * g;
                q2 += yi * yi * g * g;
            }
            Ok(q2 / dphi - q1)
        };
        let scale = 1.0 + frob;
        let mut pick = None;
        for slack in [0.0, 1e-12 * scale] {
            for j in 0..n {
                let lo = low(j)?;
                if lo > 0.0 && up(j) <= lo + slack {
                    pick = Some((j, lo));
                    break;
                }
            }
            if pick.is_some() {
                break;
            }
        }
        let (j, lo) = pick.ok_or(Error::NoCandidate(format!("no index passes the barrier test at step {tau}")))?;
        let t = 2.0 / (up(j) + lo);
        s[j] += t;
        let vj = v.row(j);
        for p in 0..k {
            for q in 0..k {
                m[(p, q)] += t * vj[p] * vj[q];
            }
        }
        trace_w += t * norms[j];

        let lam_next = sym_eig(&m)?.values;
        let phi_next = phi(&lam_next, l1);
        let upper = (tau + 1) as f64 * delta_up;
        if lam_next[0] <= l1 {
            return Err(invariant(format!("λ_min {} fell below the lower barrier {l1}", lam_next[0])));
        }
        if phi_next > prev_phi * (1.0 + 1e-9) + 1e-12 {
            return Err(invariant(format!("potential rose from {prev_phi} to {phi_next}")));
        }
        if trace_w > upper * (1.0 + 1e-12) + 1e-300 {
            return Err(invariant(format!("trace {trace_w} crossed the upper barrier {upper}")));
        }
        prev_phi = phi_next;
        steps.push(BssStep { index: j, weight: t, lower: l1, upper, phi: phi_next, trace_w });
    }

    let c = (1.0 - root) / rf;
    s.iter_mut().for_each(|x| *x *= c);
    let out = BssWeights { s, r, k, steps };
    check_exit(v, &norms, &out)?;
    Ok(out)
}

fn check_exit(v: &DenseMatrix, norms: &[f64], w: &BssWeights) -> Result<()> {
    let k = v.cols();
    let mut m = DenseMatrix::zeros(k, k);
    for (i, &si) in w.s.iter().enumerate().filter(|(_, &si)| si > 0.0) {
        let vi = v.row(i);
        for p in 0..k {
            for q in 0..k {
                m[(p, q)] += si * vi[p] * vi[q];
            }
        }
    }
    let bound = (1.0 - (k as f64 / w.r as f64).sqrt()).powi(2);
    let lk = sym_eig(&m)?.values[0];
    if lk < bound - 1e-10 {
        return Err(invariant(format!("λ_k = {lk} below {bound}")));
    }
    let total: f64 = norms.iter().sum();
    let kept: f64 = w.s.iter().zip(norms).map(|(s, a)| s * a).sum();
    if kept > total + 1e-10 * total.max(1.0) {
        return Err(invariant(format!("kept Frobenius mass {kept} exceeds {total}")));
    }
    if w.s.iter().filter(|&&x| x > 0.0).count() > w.r {
        return Err(invariant("more than r non-zero weights".into()));
    }
    Ok(())
}

/// As [`bss_sampling`] after compressing the `a_i` with a sparse embedding of `min(n²/ε², ℓ)` rows.
pub fn bss_sampling_sparse(v: &DenseMatrix, avecs: &DenseMatrix, r: usize, eps: f64, seed: u64) -> Result<BssWeights> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::InvalidArgument(format!("eps must lie in (0,1), got {eps}")));
    }
    let (n, ell) = avecs.shape();
    let xi = ((n * n) as f64 / (eps * eps)).ceil() as usize;
    if xi >= ell {
        return bss_sampling(v, avecs, r);
    }
    let w = make_sparse_embedding(xi, ell, 1, rng::derive(seed, 61))?;
    let b = w.apply(&avecs.transpose())?.transpose();
    bss_sampling(v, &b, r)
}

/// Estimated squared column norms of `b`, accurate enough that sampling by them has
/// `p_i ≥ α ‖b_i‖² / ‖B‖_F²`. `α = 1` uses the exact norms.
fn residual_distribution(b: &DenseMatrix, alpha: f64, seed: u64) -> Result<Vec<f64>> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::InvalidArgument(format!("alpha must lie in (0,1], got {alpha}")));
    }
    if alpha == 1.0 {
        return Ok(b.col_norms_sq());
    }
    // (1 − e)/(1 + e) = α, and a JL width that holds ±e for all columns with probability 1 − 1/n.
    let e = (1.0 - alpha) / (1.0 + alpha);
    let n = b.cols().max(2) as f64;
    let t = (4.0 * n.ln() / (e * e / 2.0 - e * e * e / 3.0)).ceil() as usize;
    let mut g = rng::seeded(seed, 63);
    let sd = 1.0 / (t as f64).sqrt();
    let gm = DenseMatrix::from_fn(t, b.rows(), |_, _| sd * rng::normal(&mut g));
    Ok(gm.matmul(b)?.col_norms_sq())
}

fn projection_residual(a: &DenseMatrix, c: &DenseMatrix) -> Result<DenseMatrix> {
    if c.cols() == 0 {
        return Ok(a.clone());
    }
    let q = range_basis(c)?;
    a.sub(&q.matmul(&q.t_matmul(a)?)?)
}

fn sample_residual(a: &DenseMatrix, v: &DenseMatrix, alpha: f64, c2: usize, seed: u64) -> Result<Vec<usize>> {
    let b = projection_residual(a, v)?;
    if b.frobenius_norm() <= 1e-12 * a.frobenius_norm() || c2 == 0 {
        return Ok(Vec::new());
    }
    let p = residual_distribution(&b, alpha, seed)?;
    Ok(rand_sampling(&p, c2, rng::derive(seed, 64))?.indices)
}

/// `c₂` i.i.d. column draws from the residual `A − V V† A`.
pub fn adaptive_cols(a: &DenseMatrix, v: &DenseMatrix, alpha: f64, c2: usize, seed: u64) -> Result<Vec<usize>> {
    if v.rows() != a.rows() {
        return Err(Error::Dimension(format!("V has {} rows, A has {}", v.rows(), a.rows())));
    }
    sample_residual(a, v, alpha, c2, seed)
}

/// Adaptive column sampling against the residual of `C₁`, for use with a row set `R`
/// satisfying `rank(R) = rank(A R† R)`.
pub fn adaptive_cols_residual(
    a: &DenseMatrix,
    rrows: &DenseMatrix,
    c1: &DenseMatrix,
    alpha: f64,
    c2: usize,
    seed: u64,
) -> Result<Vec<usize>> {
    if rrows.cols() != a.cols() || c1.rows() != a.rows() {
        return Err(Error::Dimension("R must share A's columns and C₁ its rows".into()));
    }
    let rho = svd_default(rrows)?.rank();
    let arr = a.matmul(&pinv_default(rrows)?)?.matmul(rrows)?;
    let rho2 = svd_default(&arr)?.rank();
    if rho != rho2 {
        return Err(Error::InvalidArgument(format!("rank(R) = {rho} but rank(A R† R) = {rho2}")));
    }
    sample_residual(a, c1, alpha, c2, seed)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CurResult {
    pub c: DenseMatrix,
    pub col_indices: Vec<usize>,
    pub col_scales: Vec<f64>,
    pub r: DenseMatrix,
    pub row_indices: Vec<usize>,
    pub row_scales: Vec<f64>,
    pub u: DenseMatrix,
}

impl CurResult {
    pub fn product(&self) -> Result<DenseMatrix> {
        self.c.matmul(&self.u)?.matmul(&self.r)
    }

    pub fn frobenius_residual(&self, a: &DenseMatrix) -> Result<f64> {
        Ok(a.sub(&self.product()?)?.frobenius_norm())
    }
}

/// Leverage sampling on `z`, BSS down to `4k`, then adaptive residual sampling.
/// Returns distinct column indices of `a` with their scales.
fn select_columns(a: &DenseMatrix, z: &DenseMatrix, eps: f64, seed: u64) -> Result<(Vec<usize>, Vec<f64>)> {
    let k = z.cols();
    let lev: Vec<f64> = z.row_norms_sq();
    let s = (CUR_LEVERAGE_SAMPLES * k as f64 * (2.0 * k as f64 / 0.1).ln().max(1.0) / 0.25).ceil() as usize;
    let plan = rand_sampling(&lev, s, rng::derive(seed, 1)).map_err(Error::at("leverage sampling"))?;
    let (idx, sc) = plan.merged();

    // M = Zᵀ Ω D and the residual columns (A − A Z Zᵀ) Ω D.
    let m = z.select_rows(&idx).scale_rows(&sc).transpose();
    let e = a.sub(&a.matmul(z)?.matmul_t(z)?)?;
    let r1 = 4 * k;
    let (c1_idx, c1_sc) = if idx.len() > r1 {
        let vm = svd_default(&m)?.v();
        if vm.cols() < k {
            return Err(Error::at("leverage sampling")(Error::RankDeficient(format!("sampled Zᵀ has rank {} < {k}", vm.cols()))));
        }
        let avecs = e.select_cols(&idx).scale_cols(&sc).transpose();
        let w = bss_sampling_sparse(&vm, &avecs, r1, 0.5, rng::derive(seed, 2)).map_err(Error::at("dual-set sparsification"))?;
        let (sel, ws) = w.selection();
        (sel.iter().map(|&i| idx[i]).collect::<Vec<_>>(), sel.iter().zip(&ws).map(|(&i, w)| sc[i] * w).collect())
    } else {
        (idx, sc)
    };

    let c1 = a.select_cols(&c1_idx).scale_cols(&c1_sc);
    let c2 = (CUR_ADAPTIVE * k as f64 / eps).ceil() as usize;
    let extra = adaptive_cols(a, &c1, 1.0 / 3.0, c2, rng::derive(seed, 3)).map_err(Error::at("adaptive sampling"))?;
    let mut cols = c1_idx;
    let mut scales = c1_sc;
    let mut seen: std::collections::BTreeSet<usize> = cols.iter().copied().collect();
    for j in extra {
        if seen.insert(j) {
            cols.push(j);
            scales.push(1.0);
        }
    }
    Ok((cols, scales))
}

/// `A ≈ C U R` with `C`, `R` scaled columns and rows of `A` and `rank(U) ≤ k`.
pub fn cur_decompose(a: &DenseMatrix, k: usize, eps: f64, seed: u64) -> Result<CurResult> {
    let (m, n) = a.shape();
    if k == 0 || k >= m.min(n) {
        return Err(Error::InvalidArgument(format!("need 1 <= k < {}, got {k}", m.min(n))));
    }
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::InvalidArgument(format!("eps must lie in (0,1), got {eps}")));
    }
    let z = frobenius_lowrank(a, k, 1.0 / 9.0, rng::derive(seed, 10)).map_err(Error::at("low-rank basis"))?.r.transpose();
    let (col_indices, col_scales) = select_columns(a, &z, eps, rng::derive(seed, 11))?;
    let c = a.select_cols(&col_indices).scale_cols(&col_scales);

    // L′: top-k left singular vectors of U_C U_Cᵀ A W, W a sparse embedding on the right.
    let uc = range_basis(&c)?;
    let width = ((SPARSE_EMBEDDING_ROWS * (uc.cols() * uc.cols()) as f64 / (0.1 * 0.25)).ceil() as usize).max(1);
    let proj = uc.t_matmul(a)?;
    let projw = if width >= n {
        proj
    } else {
        make_sparse_embedding(width, n, 1, rng::derive(seed, 12))?.apply(&proj.transpose())?.transpose()
    };
    let lp = uc.matmul(&svd_default(&projw)?.truncate(k).u)?;
    if lp.cols() < k {
        return Err(Error::at("row basis")(Error::RankDeficient(format!("column space of C has rank {} < {k}", lp.cols()))));
    }

    let at = a.transpose();
    let (row_indices, row_scales) = select_columns(&at, &lp, eps, rng::derive(seed, 13)).map_err(Error::at("row selection"))?;
    let r = a.select_rows(&row_indices).scale_rows(&row_scales);

    let left = pinv_default(&c)?.matmul(&lp)?;
    let right = lp.t_matmul(a)?.matmul(&pinv_default(&r)?)?;
    let u = left.matmul(&right)?;
    Ok(CurResult { c, col_indices, col_scales, r, row_indices, row_scales, u })
}
