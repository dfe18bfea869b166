//! Dense and sparse kernels: products, QR, SVD, symmetric eigensolves, Matrix Market I/O.

mod dense;
pub mod eig;
pub mod mm;
pub mod qr;
mod sparse;
pub mod svd;

pub use dense::{axpy, dot, norm1, norm2, DenseMatrix};
pub use eig::{sym_eig, sym_eigvals, SymEig};
pub use qr::{qr, QrResult};
pub use sparse::SparseMatrix;
pub use svd::{pinv, range_basis, svd, SvdResult};

/// Relative numerical-rank threshold for a `rows x cols` matrix; multiply by σ_max.
pub fn default_rank_tol(rows: usize, cols: usize) -> f64 {
    1e-10 * rows.max(cols).max(1) as f64
}
