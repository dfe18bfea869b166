//! Oblivious sketching operators and the checks built on them.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::constants::{BOOST_BASE_DELTA, BOOST_REPEATS};
use crate::error::{Error, Result};
use crate::matrix::svd::{singular_values, svd};
use crate::matrix::{default_rank_tol, norm2, DenseMatrix, SparseMatrix};
use crate::rng::{self, SeededRng};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SketchKind {
    Gaussian,
    SparseEmbedding,
    Srht,
    Sign,
    Cauchy,
    ExpReciprocalDiag,
}

impl SketchKind {
    fn stream(self) -> u64 {
        match self {
            SketchKind::Gaussian => 1,
            SketchKind::SparseEmbedding => 2,
            SketchKind::Srht => 3,
            SketchKind::Sign => 4,
            SketchKind::Cauchy => 5,
            SketchKind::ExpReciprocalDiag => 6,
        }
    }
}

impl FromStr for SketchKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.to_ascii_lowercase().as_str() {
            "gaussian" => SketchKind::Gaussian,
            "sparse" | "sparse-embedding" | "countsketch" => SketchKind::SparseEmbedding,
            "srht" => SketchKind::Srht,
            "sign" => SketchKind::Sign,
            "cauchy" => SketchKind::Cauchy,
            "exp" | "exponential" => SketchKind::ExpReciprocalDiag,
            other => return Err(Error::InvalidArgument(format!("unknown sketch kind `{other}`"))),
        })
    }
}

impl fmt::Display for SketchKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            SketchKind::Gaussian => "gaussian",
            SketchKind::SparseEmbedding => "sparse",
            SketchKind::Srht => "srht",
            SketchKind::Sign => "sign",
            SketchKind::Cauchy => "cauchy",
            SketchKind::ExpReciprocalDiag => "exp",
        };
        f.write_str(s)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Payload {
    /// Explicit `r x n` entries (Gaussian, sign, Cauchy).
    Dense(DenseMatrix),
    /// For each input coordinate, its target rows and signed values.
    Hashed { rows: Vec<Vec<usize>>, values: Vec<Vec<f64>> },
    Srht { n_pad: usize, signs: Vec<f64>, sampled: Vec<usize> },
    Diag(Vec<f64>),
}

/// A random linear map `S: R^n -> R^r`, reproducible from `(kind, r, n, seed)`.
#[derive(Clone, Debug, PartialEq)]
pub struct SketchOperator {
    pub kind: SketchKind,
    pub out_dim: usize,
    pub in_dim: usize,
    pub seed: u64,
    pub payload: Payload,
    /// Set for sparse embeddings with more rows than columns.
    pub wasteful: bool,
}

pub fn make_sketch(kind: SketchKind, r: usize, n: usize, seed: u64) -> Result<SketchOperator> {
    if kind == SketchKind::SparseEmbedding {
        return make_sparse_embedding(r, n, 1, seed);
    }
    if r == 0 || n == 0 {
        return Err(Error::InvalidArgument(format!("sketch dimensions must be positive, got {r}x{n}")));
    }
    let mut g = rng::seeded(seed, kind.stream());
    let payload = match kind {
        SketchKind::Gaussian => {
            let s = 1.0 / (r as f64).sqrt();
            Payload::Dense(DenseMatrix::from_fn(r, n, |_, _| s * rng::normal(&mut g)))
        }
        SketchKind::Sign => {
            let s = 1.0 / (r as f64).sqrt();
            Payload::Dense(DenseMatrix::from_fn(r, n, |_, _| s * rng::sign(&mut g)))
        }
        SketchKind::Cauchy => Payload::Dense(DenseMatrix::from_fn(r, n, |_, _| cauchy(&mut g))),
        SketchKind::Srht => {
            let n_pad = n.next_power_of_two();
            if r > n_pad {
                return Err(Error::InvalidArgument(format!("SRHT needs r <= {n_pad}, got {r}")));
            }
            let signs = (0..n_pad).map(|_| rng::sign(&mut g)).collect();
            Payload::Srht { n_pad, signs, sampled: sample_without_replacement(&mut g, n_pad, r) }
        }
        SketchKind::ExpReciprocalDiag => {
            if r != n {
                return Err(Error::InvalidArgument(format!("exponential diagonal is square, got {r}x{n}")));
            }
            Payload::Diag((0..n).map(|_| 1.0 / -rng::open01(&mut g).ln()).collect())
        }
        SketchKind::SparseEmbedding => unreachable!(),
    };
    Ok(SketchOperator { kind, out_dim: r, in_dim: n, seed, payload, wasteful: false })
}

/// Sparse embedding with `s` non-zeros per column, each `±1/√s` in distinct rows.
pub fn make_sparse_embedding(r: usize, n: usize, s: usize, seed: u64) -> Result<SketchOperator> {
    if r == 0 || n == 0 || s == 0 || s > r {
        return Err(Error::InvalidArgument(format!(
            "sparse embedding needs 1 <= nnz_per_col <= r and n >= 1, got r={r} n={n} s={s}"
        )));
    }
    let mut g = rng::seeded(seed, SketchKind::SparseEmbedding.stream());
    let v = 1.0 / (s as f64).sqrt();
    let mut rows = Vec::with_capacity(n);
    let mut values = Vec::with_capacity(n);
    for _ in 0..n {
        let h = if s == 1 { vec![rng::index(&mut g, r)] } else { sample_without_replacement(&mut g, r, s) };
        values.push(h.iter().map(|_| v * rng::sign(&mut g)).collect());
        rows.push(h);
    }
    Ok(SketchOperator {
        kind: SketchKind::SparseEmbedding,
        out_dim: r,
        in_dim: n,
        seed,
        payload: Payload::Hashed { rows, values },
        wasteful: r > n,
    })
}

fn cauchy(g: &mut SeededRng) -> f64 {
    (PI * (rng::open01(g) - 0.5)).tan()
}

/// Floyd's algorithm, returned sorted.
fn sample_without_replacement(g: &mut SeededRng, n: usize, k: usize) -> Vec<usize> {
    let mut chosen = std::collections::BTreeSet::new();
    for j in n - k..n {
        let t = rng::index(g, j + 1);
        if !chosen.insert(t) {
            chosen.insert(j);
        }
    }
    chosen.into_iter().collect()
}

/// In-place unnormalised Walsh-Hadamard transform over the rows of a row-major block.
fn fwht_rows(data: &mut [f64], n_pad: usize, width: usize) {
    let mut h = 1;
    while h < n_pad {
        for start in (0..n_pad).step_by(2 * h) {
            for i in start..start + h {
                let (lo, hi) = data.split_at_mut((i + h) * width);
                let a = &mut lo[i * width..(i + 1) * width];
                let b = &mut hi[..width];
                for (x, y) in a.iter_mut().zip(b.iter_mut()) {
                    let (u, v) = (*x, *y);
                    *x = u + v;
                    *y = u - v;
                }
            }
        }
        h *= 2;
    }
}

impl SketchOperator {
    fn check(&self, rows: usize) -> Result<()> {
        if rows != self.in_dim {
            return Err(Error::Dimension(format!(
                "{} sketch with input dimension {} applied to {} rows",
                self.kind, self.in_dim, rows
            )));
        }
        Ok(())
    }

    /// `S A`.
    pub fn apply(&self, a: &DenseMatrix) -> Result<DenseMatrix> {
        self.check(a.rows())?;
        let d = a.cols();
        match &self.payload {
            Payload::Dense(s) => s.matmul(a),
            Payload::Hashed { rows, values } => {
                let mut out = DenseMatrix::zeros(self.out_dim, d);
                for i in 0..a.rows() {
                    let src = a.row(i);
                    for (&h, &v) in rows[i].iter().zip(&values[i]) {
                        crate::matrix::axpy(v, src, out.row_mut(h));
                    }
                }
                Ok(out)
            }
            Payload::Srht { n_pad, signs, sampled } => {
                let mut buf = vec![0.0; n_pad * d];
                for i in 0..a.rows() {
                    for (b, x) in buf[i * d..(i + 1) * d].iter_mut().zip(a.row(i)) {
                        *b = signs[i] * x;
                    }
                }
                fwht_rows(&mut buf, *n_pad, d);
                let scale = 1.0 / (self.out_dim as f64).sqrt();
                let mut out = DenseMatrix::zeros(self.out_dim, d);
                for (k, &row) in sampled.iter().enumerate() {
                    for (o, x) in out.row_mut(k).iter_mut().zip(&buf[row * d..(row + 1) * d]) {
                        *o = scale * x;
                    }
                }
                Ok(out)
            }
            Payload::Diag(v) => Ok(a.scale_rows(v)),
        }
    }

    /// `S A` for sparse `A`, touching each stored entry once for hashed sketches.
    pub fn apply_sparse(&self, a: &SparseMatrix) -> Result<DenseMatrix> {
        self.check(a.rows())?;
        let mut out = DenseMatrix::zeros(self.out_dim, a.cols());
        match &self.payload {
            Payload::Hashed { rows, values } => {
                for (i, j, x) in a.triplets() {
                    for (&h, &v) in rows[i].iter().zip(&values[i]) {
                        out[(h, j)] += v * x;
                    }
                }
            }
            Payload::Dense(s) => {
                for (i, j, x) in a.triplets() {
                    for k in 0..self.out_dim {
                        out[(k, j)] += s[(k, i)] * x;
                    }
                }
            }
            Payload::Diag(v) => {
                for (i, j, x) in a.triplets() {
                    out[(i, j)] = v[i] * x;
                }
            }
            Payload::Srht { .. } => return self.apply(&a.to_dense()),
        }
        Ok(out)
    }

    pub fn apply_vec(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.apply(&DenseMatrix::column_vector(x))?.into_data())
    }

    /// The operator as an explicit `r x n` matrix.
    pub fn to_dense(&self) -> DenseMatrix {
        self.apply(&DenseMatrix::identity(self.in_dim)).expect("identity has matching rows")
    }
}

/// Singular values of `S U` for an orthonormal basis `U` of the tested column space.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EmbeddingReport {
    pub singular_values: Vec<f64>,
    /// `max_i |σ_i² − 1|`, the operator norm of `I − UᵀSᵀSU`.
    pub distortion: f64,
    /// `max_i |σ_i − 1|`, the distortion of norms rather than squared norms.
    pub norm_distortion: f64,
}

pub fn verify_embedding(s: &SketchOperator, a: &DenseMatrix, basis_tol: f64) -> Result<EmbeddingReport> {
    let f = svd(a, basis_tol)?;
    if f.rank() == 0 {
        return Err(Error::RankDeficient("cannot verify an embedding of a rank-0 matrix".into()));
    }
    embedding_report_for_basis(s, &f.u)
}

/// As [`verify_embedding`], for a basis that is already orthonormal.
pub fn embedding_report_for_basis(s: &SketchOperator, u: &DenseMatrix) -> Result<EmbeddingReport> {
    Ok(report_from_values(singular_values(&s.apply(u)?)?))
}

pub fn report_from_values(sv: Vec<f64>) -> EmbeddingReport {
    let distortion = sv.iter().fold(0.0f64, |m, x| m.max((x * x - 1.0).abs()));
    let norm_distortion = sv.iter().fold(0.0f64, |m, x| m.max((x - 1.0).abs()));
    EmbeddingReport { singular_values: sv, distortion, norm_distortion }
}

/// `(SA)ᵀ(SB)`, an estimate of `AᵀB`.
pub fn approx_matmul(s: &SketchOperator, a: &DenseMatrix, b: &DenseMatrix) -> Result<DenseMatrix> {
    if a.rows() != b.rows() {
        return Err(Error::Dimension(format!("approx_matmul: {} vs {} rows", a.rows(), b.rows())));
    }
    s.apply(a)?.t_matmul(&s.apply(b)?)
}

/// Monte-Carlo estimate of `E |‖Sx‖² − 1|^ell` over `trials` fresh sketches.
///
/// `apply(seed, x)` draws the sketch for `seed` and returns `Sx`; `x` should be a unit vector.
pub fn jl_moment_estimate(
    mut apply: impl FnMut(u64, &[f64]) -> Result<Vec<f64>>,
    x: &[f64],
    ell: u32,
    trials: usize,
) -> Result<f64> {
    if ell != 2 && ell != 4 {
        return Err(Error::InvalidArgument(format!("moment order must be 2 or 4, got {ell}")));
    }
    if trials < 100 {
        return Err(Error::InvalidArgument(format!("need at least 100 trials, got {trials}")));
    }
    let mut acc = 0.0;
    for t in 0..trials {
        let y = apply(t as u64, x)?;
        let dev = (norm2(&y).powi(2) - 1.0).abs();
        acc += dev.powi(ell as i32);
    }
    Ok(acc / trials as f64)
}

#[derive(Clone, Debug)]
pub struct BoostResult {
    /// Index of the accepted sketch among the `trials` candidates.
    pub chosen: usize,
    pub trials: usize,
    pub operator: SketchOperator,
    pub sketched: DenseMatrix,
}

/// Cross-validated choice among independent sparse embeddings.
pub fn boost_embedding(a: &DenseMatrix, eps: f64, delta: f64, seed: u64) -> Result<BoostResult> {
    if !(eps > 0.0 && eps < 1.0 && delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidArgument(format!("need eps, delta in (0,1), got {eps}, {delta}")));
    }
    let t = ((BOOST_REPEATS * (1.0 / delta).ln()).ceil() as usize).max(3);
    let d = a.cols() as f64;
    let acc = eps / 6.0;
    let r = ((d * d / (BOOST_BASE_DELTA * acc * acc)).ceil() as usize).max(1);
    let ops = (0..t)
        .map(|j| make_sparse_embedding(r, a.rows(), 1, rng::derive(seed, j as u64)))
        .collect::<Result<Vec<_>>>()?;
    boost_with(a, eps, ops)
}

/// Runs the cross-validation test over the supplied candidate sketches.
pub fn boost_with(a: &DenseMatrix, eps: f64, ops: Vec<SketchOperator>) -> Result<BoostResult> {
    let t = ops.len();
    let sketched = ops.iter().map(|s| s.apply(a)).collect::<Result<Vec<_>>>()?;
    // D_j V_jᵀ and V_j D_j^{-1} per candidate.
    let mut fwd = Vec::with_capacity(t);
    let mut inv = Vec::with_capacity(t);
    for sa in &sketched {
        let f = svd(sa, default_rank_tol(sa.rows(), sa.cols()))?;
        fwd.push(f.vt.scale_rows(&f.sigma));
        let rinv: Vec<f64> = f.sigma.iter().map(|x| 1.0 / x).collect();
        inv.push(f.v().scale_cols(&rinv));
    }
    for j in 0..t {
        let mut agree = 0;
        for jp in (0..t).filter(|&jp| jp != j) {
            if fwd[j].cols() != inv[jp].rows() || fwd[j].rows() != inv[jp].cols() {
                continue;
            }
            let sv = singular_values(&fwd[j].matmul(&inv[jp])?)?;
            if sv.iter().all(|&x| (x - 1.0).abs() <= eps / 2.0) {
                agree += 1;
            }
        }
        if 2 * agree >= t - 1 {
            let operator = ops[j].clone();
            return Ok(BoostResult { chosen: j, trials: t, operator, sketched: sketched[j].clone() });
        }
    }
    Err(Error::NoCandidate(format!("none of {t} sketches agreed with half of the others")))
}
