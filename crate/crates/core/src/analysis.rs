//! Multi-pass Schatten-norm estimation and the adaptive attack on Johnson-Lindenstrauss
//! norm sketches.

use serde::{Deserialize, Serialize};

use crate::constants::SCHATTEN_PROBES;
use crate::error::{Error, Result};
use crate::matrix::svd::singular_values;
use crate::matrix::{sym_eig, DenseMatrix};
use crate::rng;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SchattenEstimate {
    pub p: u32,
    /// Estimate of `‖A‖_p^p`, clamped at zero.
    pub estimate: f64,
    /// Unclamped probe mean of `gᵀ Bᵖ g`, an estimate of `‖B‖_p^p = 2 ‖A‖_p^p` when `p` is even.
    pub probe_mean: f64,
    pub trials: usize,
    pub passes: usize,
}

/// `Σ σ_iᵖ` from the full spectrum.
pub fn schatten_exact(a: &DenseMatrix, p: u32) -> Result<f64> {
    Ok(singular_values(a)?.iter().map(|s| s.powi(p as i32)).sum())
}

/// Probe count `⌈C / ε²⌉`.
pub fn schatten_trials(eps: f64) -> usize {
    (SCHATTEN_PROBES / (eps * eps)).ceil() as usize
}

/// One pass: `B Y` for the symmetrisation `B = [[0, Aᵀ], [A, 0]]`, without forming `B`.
fn apply_sym(a: &DenseMatrix, y: &DenseMatrix) -> Result<DenseMatrix> {
    let (n, d) = a.shape();
    let top = a.t_matmul(&y.submatrix(d, d + n, 0, y.cols()))?;
    let bottom = a.matmul(&y.submatrix(0, d, 0, y.cols()))?;
    top.vstack(&bottom)
}

/// `⌈p/2⌉` passes of Gaussian probes through `B`, pairing `Bˢ g` with `Bᵗ g`, `s + t = p`.
pub fn schatten_estimate(a: &DenseMatrix, p: u32, eps: f64, seed: u64) -> Result<SchattenEstimate> {
    if p == 0 {
        return Err(Error::InvalidArgument("p must be at least 1".into()));
    }
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::InvalidArgument(format!("eps must lie in (0,1), got {eps}")));
    }
    let r = schatten_trials(eps);
    let dim = a.rows() + a.cols();
    let mut g = rng::seeded(seed, 81);
    let probes = DenseMatrix::from_fn(dim, r, |_, _| rng::normal(&mut g));
    let (s, t) = (p.div_ceil(2) as usize, (p / 2) as usize);
    let mut cur = probes.clone();
    let mut at_t = if t == 0 { Some(probes.clone()) } else { None };
    for i in 1..=s {
        cur = apply_sym(a, &cur)?;
        if i == t {
            at_t = Some(cur.clone());
        }
    }
    let at_t = at_t.expect("t <= s");
    let mut total = 0.0;
    for j in 0..r {
        total += (0..dim).map(|i| cur[(i, j)] * at_t[(i, j)]).sum::<f64>();
    }
    let probe_mean = total / r as f64;
    Ok(SchattenEstimate { p, estimate: (probe_mean / 2.0).max(0.0), probe_mean, trials: r, passes: s })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AttackResult {
    /// Non-zero query supported on the first `k + 1` coordinates with `S v ≈ 0`.
    pub v: Vec<f64>,
    /// The oracle's answer on `v`.
    pub answer: f64,
    pub queries: usize,
    /// Recovered `(k+1) x (k+1)` block of `SᵀS`.
    pub gram: DenseMatrix,
}

/// Finds `v ≠ 0` in the kernel of a JL sketch with at most `k` rows, given only
/// `x ↦ ‖S x‖²` on vectors of length `n`.
pub fn jl_attack(oracle: &mut dyn FnMut(&[f64]) -> f64, k: usize, n: usize) -> Result<AttackResult> {
    if k == 0 || n <= k {
        return Err(Error::InvalidArgument(format!("need 1 <= k < n, got k={k} n={n}")));
    }
    let m = k + 1;
    let mut queries = 0;
    let mut ask = |x: &[f64]| {
        queries += 1;
        oracle(x)
    };
    let unit = |idx: &[usize]| {
        let mut x = vec![0.0; n];
        idx.iter().for_each(|&i| x[i] = 1.0);
        x
    };
    let sq: Vec<f64> = (0..m).map(|i| ask(&unit(&[i]))).collect();
    let mut gram = DenseMatrix::diag(&sq);
    for i in 0..m {
        for j in i + 1..m {
            let ip = 0.5 * (ask(&unit(&[i, j])) - sq[i] - sq[j]);
            gram[(i, j)] = ip;
            gram[(j, i)] = ip;
        }
    }
    let e = sym_eig(&gram)?;
    let top = e.values.last().copied().unwrap_or(0.0);
    let tol = 1e-10 * m as f64 * top.abs().max(f64::MIN_POSITIVE);
    if e.values[0] > tol {
        return Err(Error::AttackInapplicable(format!(
            "the {m}x{m} Gram block has full rank (λ_min = {:e}); the sketch has more than {k} rows",
            e.values[0]
        )));
    }
    let mut v = vec![0.0; n];
    for (i, vi) in v.iter_mut().take(m).enumerate() {
        *vi = e.vectors[(i, 0)];
    }
    let answer = ask(&v);
    Ok(AttackResult { v, answer, queries, gram })
}

/// `C(k+1, 2) + (k + 1) + 1`.
pub fn attack_query_count(k: usize) -> usize {
    (k + 1) * k / 2 + (k + 1) + 1
}
