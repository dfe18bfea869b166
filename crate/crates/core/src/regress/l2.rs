use serde::{Deserialize, Serialize};

use super::check_problem;
use crate::rng::with_reseed;
use crate::constants::{PRECONDITIONER_DELTA, PRECONDITIONER_ROWS, SKETCH_SOLVE_ROWS};
use crate::error::{Error, Result};
use crate::matrix::svd::{pinv_default, singular_values};
use crate::matrix::{norm2, qr, DenseMatrix};
use crate::sketch::make_sparse_embedding;

/// Accuracy of the preconditioning sketch.
pub const EPS0: f64 = 0.5;

pub fn l2_cost(a: &DenseMatrix, b: &[f64], x: &[f64]) -> f64 {
    let ax = a.matvec(x).expect("x matches columns");
    ax.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt()
}

/// Minimum-norm least-squares solution `A† b`.
pub fn solve_l2_exact(a: &DenseMatrix, b: &[f64]) -> Result<Vec<f64>> {
    check_problem(a, b)?;
    pinv_default(a)?.matvec(b)
}

fn sketch_rows(d: usize, eps: f64) -> usize {
    ((SKETCH_SOLVE_ROWS * (d * d) as f64 / eps).ceil() as usize).max(d + 1)
}

/// Solves the `r x d` sketched problem `min ‖S(Ax − b)‖` with a sparse embedding of `d²/ε` rows.
pub fn sketch_solve_l2(a: &DenseMatrix, b: &[f64], eps: f64, seed: u64) -> Result<Vec<f64>> {
    sketch_solve_l2_constrained(a, b, eps, seed, |sa, sb| {
        if qr(sa)?.rank_deficient {
            return Err(Error::RankDeficient(format!("sketched {}x{} matrix", sa.rows(), sa.cols())));
        }
        pinv_default(sa)?.matvec(sb)
    })
}

/// Hands `(SA, Sb)` to a caller-supplied solver for the constrained small problem.
pub fn sketch_solve_l2_constrained(
    a: &DenseMatrix,
    b: &[f64],
    eps: f64,
    seed: u64,
    mut solver: impl FnMut(&DenseMatrix, &[f64]) -> Result<Vec<f64>>,
) -> Result<Vec<f64>> {
    check_problem(a, b)?;
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::InvalidArgument(format!("eps must lie in (0,1), got {eps}")));
    }
    let (n, d) = a.shape();
    let r = sketch_rows(d, eps);
    with_reseed(seed, |s| {
        let op = make_sparse_embedding(r, n, 1, s)?;
        let sa = op.apply(a)?;
        let sb = op.apply_vec(b)?;
        solver(&sa, &sb)
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct IterationTrace {
    /// `‖Ax − b‖` for the starting point and after every iteration.
    pub residuals: Vec<f64>,
    /// Every iterate, starting with `x⁰`.
    pub iterates: Vec<Vec<f64>>,
    pub x: Vec<f64>,
    pub iterations: usize,
    /// `σ_max(AR) / σ_min(AR)`.
    pub cond: f64,
    /// `κ(RᵀAᵀAR) = cond²`.
    pub kappa: f64,
    pub sketch_rows: usize,
}

/// Iteration count used by [`precond_solve_l2`] for target accuracy `eps`.
pub fn precond_iterations(eps: f64) -> usize {
    ((1.0 / eps).ln() / 3f64.ln()).ceil() as usize + 2
}

/// Preconditioned iterative improvement: `y ← y + (AR)ᵀ(b − ARy)`, `x = Ry`, with `R⁻¹` from QR of `SA`.
pub fn precond_solve_l2(a: &DenseMatrix, b: &[f64], eps: f64, seed: u64) -> Result<IterationTrace> {
    check_problem(a, b)?;
    if !(eps > 0.0 && eps <= 0.5) {
        return Err(Error::InvalidArgument(format!("eps must lie in (0, 1/2], got {eps}")));
    }
    let (n, d) = a.shape();
    let r = ((PRECONDITIONER_ROWS * (d * d) as f64 / (PRECONDITIONER_DELTA * EPS0 * EPS0)).ceil() as usize).max(d);
    let (op, f) = with_reseed(seed, |s| {
        let op = make_sparse_embedding(r, n, 1, s)?;
        let f = qr(&op.apply(a)?)?;
        if f.rank_deficient {
            return Err(Error::RankDeficient(format!("sketch of {n}x{d} matrix")));
        }
        Ok((op, f))
    })?;
    let rinv = f.r_inverse()?;
    let ar = a.matmul(&rinv)?;
    let sv = singular_values(&ar)?;
    let cond = sv[0] / sv[d - 1];

    // Start from the sketched solution, y⁰ = Qᵀ S b.
    let y0 = f.q.t_matvec(&op.apply_vec(b)?)?;
    let iterations = precond_iterations(eps);
    let iterates = iterate_preconditioned(a, b, &rinv, y0, iterations)?;
    let residuals = iterates.iter().map(|x| l2_cost(a, b, x)).collect();
    let x = iterates.last().expect("starting point is recorded").clone();
    Ok(IterationTrace { residuals, iterates, x, iterations, cond, kappa: cond * cond, sketch_rows: r })
}

/// Runs `y ← y + (AR)ᵀ(b − ARy)` from `y0`, returning `x = Ry` for the start and every step.
pub fn iterate_preconditioned(
    a: &DenseMatrix,
    b: &[f64],
    rinv: &DenseMatrix,
    mut y: Vec<f64>,
    iterations: usize,
) -> Result<Vec<Vec<f64>>> {
    let ar = a.matmul(rinv)?;
    let mut out = vec![rinv.matvec(&y)?];
    for _ in 0..iterations {
        let ary = ar.matvec(&y)?;
        let res: Vec<f64> = b.iter().zip(&ary).map(|(p, q)| p - q).collect();
        let step = ar.t_matvec(&res)?;
        for (yi, si) in y.iter_mut().zip(&step) {
            *yi += si;
        }
        out.push(rinv.matvec(&y)?);
    }
    Ok(out)
}

/// `(‖Ax − b‖² − OPT²) / (‖Ax⁰ − b‖² − OPT²)` computed as `‖A(x − x*)‖² / ‖A(x⁰ − x*)‖²`.
pub fn residual_gap(a: &DenseMatrix, x: &[f64], x0: &[f64], xstar: &[f64]) -> f64 {
    let diff = |u: &[f64]| -> f64 {
        let e: Vec<f64> = u.iter().zip(xstar).map(|(p, q)| p - q).collect();
        norm2(&a.matvec(&e).expect("dims")).powi(2)
    };
    let den = diff(x0);
    if den == 0.0 {
        0.0
    } else {
        diff(x) / den
    }
}
