//! Synthetic inputs: random matrices with a planted spectrum and random graphs.

use rand::Rng;

use crate::error::{Error, Result};
use crate::matrix::{qr, DenseMatrix};
use crate::rng;

/// Entries i.i.d. `N(0, 1)`.
pub fn gaussian_matrix(n: usize, d: usize, seed: u64) -> DenseMatrix {
    let mut g = rng::seeded(seed, 51);
    DenseMatrix::from_fn(n, d, |_, _| rng::normal(&mut g))
}

pub fn gaussian_vector(n: usize, seed: u64) -> Vec<f64> {
    let mut g = rng::seeded(seed, 52);
    (0..n).map(|_| rng::normal(&mut g)).collect()
}

fn orthonormal(n: usize, k: usize, seed: u64) -> Result<DenseMatrix> {
    Ok(qr(&gaussian_matrix(n, k, seed))?.q)
}

/// `U diag(σ) Vᵀ` with Haar-like random orthonormal `U`, `V` and the given singular values.
pub fn with_spectrum(n: usize, d: usize, sigma: &[f64], seed: u64) -> Result<DenseMatrix> {
    let k = sigma.len();
    if k > n.min(d) {
        return Err(Error::InvalidArgument(format!("{k} singular values for a {n}x{d} matrix")));
    }
    let u = orthonormal(n, k, rng::derive(seed, 1))?;
    let v = orthonormal(d, k, rng::derive(seed, 2))?;
    u.scale_cols(sigma).matmul_t(&v)
}

/// Rank-`k` signal with singular values `k, k−1, …, 1` scaled by `strength`, plus
/// `noise · N(0,1)` entries.
pub fn planted_rank(n: usize, d: usize, k: usize, strength: f64, noise: f64, seed: u64) -> Result<DenseMatrix> {
    let sigma: Vec<f64> = (0..k).map(|i| strength * (k - i) as f64).collect();
    let signal = with_spectrum(n, d, &sigma, seed)?;
    if noise == 0.0 {
        return Ok(signal);
    }
    signal.add(&gaussian_matrix(n, d, rng::derive(seed, 3)).scale(noise))
}

/// Weighted undirected edge list `(u, v, w)` with `u < v`.
pub type EdgeList = Vec<(usize, usize, f64)>;

pub fn complete_graph(n: usize) -> EdgeList {
    (0..n).flat_map(|u| (u + 1..n).map(move |v| (u, v, 1.0))).collect()
}

/// Erdős–Rényi `G(n, p)` with unit weights.
pub fn erdos_renyi(n: usize, p: f64, seed: u64) -> EdgeList {
    let mut g = rng::seeded(seed, 53);
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            if g.random::<f64>() < p {
                edges.push((u, v, 1.0));
            }
        }
    }
    edges
}

/// `G(n, p)` with weights drawn uniformly from `[lo, hi]`.
pub fn weighted_erdos_renyi(n: usize, p: f64, lo: f64, hi: f64, seed: u64) -> EdgeList {
    let mut g = rng::seeded(seed, 54);
    erdos_renyi(n, p, seed).into_iter().map(|(u, v, _)| (u, v, lo + (hi - lo) * g.random::<f64>())).collect()
}
