//! Constants standing in for the unspecified factors in the sample-size
//! bounds. Every size formula in the crate reads from here.

/// Sparse embedding rows: `r = C * d^2 / (delta * eps^2)`.
pub const SPARSE_EMBEDDING_ROWS: f64 = 1.0;

/// Approximate matrix product rows: `r = C / (eps^2 * delta)`.
pub const AMM_ROWS: f64 = 2.0;

/// Boosting repetitions: `t = ceil(C * ln(1/delta))`.
pub const BOOST_REPEATS: f64 = 1.0;
/// Failure probability of each individual sketch inside boosting.
pub const BOOST_BASE_DELTA: f64 = 0.1;

/// Gaussian width in approximate leverage scores: `t = ceil(C * ln n / gamma^2)`.
pub const FAST_LEVERAGE_WIDTH: f64 = 1.0;
/// Sparse embedding rows in approximate leverage scores: `r = C * k^2 / gamma^2`.
pub const FAST_LEVERAGE_ROWS: f64 = 1.0;

/// Leverage-score sample size: `s = C * k * ln(2k/delta) / (beta * eps^2)`.
pub const LEVERAGE_SAMPLES: f64 = 144.0;

/// Sketch-and-solve rows: `r = C * d^2 / eps` (sparse embedding).
pub const SKETCH_SOLVE_ROWS: f64 = 1.0;

/// Preconditioner sketch rows: `r = C * d^2 / (delta * eps0^2)`.
pub const PRECONDITIONER_ROWS: f64 = 1.0;
/// Failure probability used to size the preconditioner sketch.
pub const PRECONDITIONER_DELTA: f64 = 0.1;

/// Cauchy sketch rows: `r = C * d * ln d` (at least `d + 1`).
pub const CAUCHY_ROWS: f64 = 2.0;
/// Extra contraction applied to Cauchy sketches: `S / (C * r * d * ln(r d))`.
pub const CAUCHY_SCALE: f64 = 4.0;
/// Exponential-diagonal embedding rows: `r = C * d * ln^2 d` (at least `d + 1`).
pub const EXP_ROWS: f64 = 1.0;
/// Contraction applied to exponential-diagonal embeddings: `1 / (C * d * ln d)`.
pub const EXP_SCALE: f64 = 1.0;
/// Probes used to certify the well-conditioned basis parameter beta.
pub const BETA_PROBES: usize = 64;
/// Gaussian width for ℓ1 row-norm estimates: `t = ceil(C * ln n)`.
pub const L1_GAUSSIAN_WIDTH: f64 = 4.0;

/// ℓ1 sampling: `r = C * d^{2.5} / (eps^2 * zeta)`.
pub const L1_SAMPLES: f64 = 1.0;

/// Low rank: `m = C * (k^2 + k / eps)` left-sketch rows.
pub const LOWRANK_ROWS: f64 = 1.0;

/// Subspace power method: `q = ceil(C * ln(m n) / eps)` iterations.
pub const POWER_ITERATIONS: f64 = 4.0;

/// CUR adaptive sampling: `c2 = C * k / eps` extra columns.
pub const CUR_ADAPTIVE: f64 = 270.0;
/// CUR leverage-sample size multiplier: `s = C * k * ln(2k / 0.1) / 0.5^2`.
pub const CUR_LEVERAGE_SAMPLES: f64 = 144.0;

/// Distributed protocol left sketch: `m = C * k / eps` sign rows.
pub const DIST_SKETCH_ROWS: f64 = 2.0;
/// Distributed protocol second sketch: `p = C * k / eps^3` rows.
pub const DIST_PROJ_ROWS: f64 = 1.0;

/// Spectral sparsifier samples: `s = C * n ln n / eps^2`.
pub const SPARSIFIER_SAMPLES: f64 = 3.0;

/// Schatten estimator probes: `r = ceil(C / eps^2)`.
pub const SCHATTEN_PROBES: f64 = 40.0;
