//! Leverage scores and the RandSampling primitive.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::constants::{FAST_LEVERAGE_ROWS, FAST_LEVERAGE_WIDTH};
use crate::error::{Error, Result};
use crate::matrix::svd::svd;
use crate::matrix::{default_rank_tol, qr, DenseMatrix};
use crate::rng;
use crate::sketch::make_sparse_embedding;

/// `ℓ_i² = ‖e_iᵀ U‖²` for an orthonormal basis `U` of the column space.
pub fn leverage_exact(a: &DenseMatrix) -> Result<Vec<f64>> {
    let f = svd(a, default_rank_tol(a.rows(), a.cols()))?;
    if f.rank() == 0 {
        return Err(Error::RankDeficient("leverage scores of a zero matrix".into()));
    }
    Ok(f.u.row_norms_sq())
}

/// Largest `γ = 2^-j` with `(1 − γ)(1 − 2γ) ≥ β`.
pub fn gamma_for_beta(beta: f64) -> Result<f64> {
    if !(beta > 0.0 && beta < 1.0) {
        return Err(Error::InvalidArgument(format!("beta must lie in (0,1), got {beta}")));
    }
    let mut g = 0.25;
    while (1.0 - g) * (1.0 - 2.0 * g) < beta {
        g /= 2.0;
    }
    Ok(g)
}

/// Sampling distribution `q` with `q_i ≥ β p_i` (w.h.p.), from `‖e_iᵀ A R⁻¹ G‖²`.
pub fn leverage_approx(a: &DenseMatrix, beta_target: f64, seed: u64) -> Result<Vec<f64>> {
    leverage_approx_with(a, beta_target, FAST_LEVERAGE_WIDTH, seed)
}

/// As [`leverage_approx`] with an explicit Gaussian width constant `c` in `t = ⌈c ln n / γ²⌉`.
pub fn leverage_approx_with(a: &DenseMatrix, beta_target: f64, width: f64, seed: u64) -> Result<Vec<f64>> {
    let gamma = gamma_for_beta(beta_target)?;
    let (n, k) = a.shape();
    let r = ((FAST_LEVERAGE_ROWS * (k * k) as f64 / (gamma * gamma)).ceil() as usize).max(k);
    let mut factor = None;
    for attempt in 0..2u64 {
        let s = make_sparse_embedding(r, n, 1, rng::derive(seed, 100 + attempt))?;
        let f = qr(&s.apply(a)?)?;
        if !f.rank_deficient {
            factor = Some(f);
            break;
        }
    }
    let f = factor.ok_or_else(|| Error::RankDeficient(format!("sketch of {n}x{k} input stayed singular after retry")))?;
    let rinv = f.r_inverse()?;
    let t = ((width * (n.max(2) as f64).ln() / (gamma * gamma)).ceil() as usize).max(1);
    let mut g = rng::seeded(seed, 7);
    let sd = 1.0 / (t as f64).sqrt();
    let gm = DenseMatrix::from_fn(k, t, |_, _| sd * rng::normal(&mut g));
    let w = a.matmul(&rinv.matmul(&gm)?)?.row_norms_sq();
    let total: f64 = w.iter().sum();
    Ok(w.into_iter().map(|x| x / total).collect())
}

/// The `(Ω, D)` pair of RandSampling, stored as index and scale lists.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SamplingPlan {
    pub s: usize,
    pub indices: Vec<usize>,
    pub scales: Vec<f64>,
    pub q: Vec<f64>,
}

/// `s` i.i.d. draws from `q` (normalised if needed), each scaled by `1/√(q_i s)`.
pub fn rand_sampling(q: &[f64], s: usize, seed: u64) -> Result<SamplingPlan> {
    if s == 0 {
        return Err(Error::InvalidArgument("sample count must be positive".into()));
    }
    if let Some(i) = q.iter().position(|x| !x.is_finite() || *x < 0.0) {
        return Err(Error::InvalidArgument(format!("q[{i}] = {} is not a probability", q[i])));
    }
    let total: f64 = q.iter().sum();
    if total <= 0.0 {
        return Err(Error::InvalidArgument("sampling distribution is all zero".into()));
    }
    let q: Vec<f64> = q.iter().map(|x| x / total).collect();
    let mut prefix = Vec::with_capacity(q.len());
    let mut acc = 0.0;
    for x in &q {
        acc += x;
        prefix.push(acc);
    }
    let mut g = rng::seeded(seed, 11);
    let mut indices = Vec::with_capacity(s);
    for _ in 0..s {
        let u: f64 = g.random::<f64>() * acc;
        let mut i = prefix.partition_point(|&c| c <= u).min(q.len() - 1);
        // Never land on a zero-probability index through round-off.
        while q[i] == 0.0 {
            i -= 1;
        }
        indices.push(i);
    }
    let scales = indices.iter().map(|&i| 1.0 / (q[i] * s as f64).sqrt()).collect();
    Ok(SamplingPlan { s, indices, scales, q })
}

impl SamplingPlan {
    /// `Dᵀ Ωᵀ A`: the sampled, rescaled rows of `A`.
    pub fn sample_rows(&self, a: &DenseMatrix) -> DenseMatrix {
        a.select_rows(&self.indices).scale_rows(&self.scales)
    }

    /// Distinct indices with merged scales: `m` copies of row `i` become one row scaled `√m / √(q_i s)`.
    pub fn merged(&self) -> (Vec<usize>, Vec<f64>) {
        let mut counts = std::collections::BTreeMap::new();
        for &i in &self.indices {
            *counts.entry(i).or_insert(0usize) += 1;
        }
        let idx: Vec<usize> = counts.keys().copied().collect();
        let sc = counts.iter().map(|(&i, &m)| ((m as f64) / (self.q[i] * self.s as f64)).sqrt()).collect();
        (idx, sc)
    }
}
