//! Sketched ℓ2 and ℓ1 regression.

pub mod l1;
pub mod l2;

pub use l1::{
    exact_row_shares, l1_cost, l1_hyperplane_fit, l1_row_shares, l1_sample_target, l1_sampling_probs, solve_l1_sketched, solve_l1_small, wcb_from_sketch,
    HyperplaneFit, L1Embedding, L1SketchResult, L1Solution, WellConditionedBasis,
};
pub use l2::{
    iterate_preconditioned, l2_cost, precond_iterations, precond_solve_l2, residual_gap, sketch_solve_l2,
    sketch_solve_l2_constrained, solve_l2_exact, IterationTrace,
};

use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;

fn check_problem(a: &DenseMatrix, b: &[f64]) -> Result<()> {
    let (n, d) = a.shape();
    if d == 0 || n < d {
        return Err(Error::Dimension(format!("regression needs n >= d >= 1, got {n}x{d}")));
    }
    if b.len() != n {
        return Err(Error::Dimension(format!("right-hand side has {} entries for {n} rows", b.len())));
    }
    if let Some(i) = b.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite { row: i, col: 0 });
    }
    Ok(())
}
