//! Randomized sketching for numerical linear algebra.
//!
//! The crate is organised bottom-up: [`matrix`] holds the dense and sparse
//! kernels, [`sketch`] the oblivious random maps, and the remaining modules
//! build regression, low-rank, CUR, distributed, graph and norm-estimation
//! algorithms on top of them.

pub mod analysis;
pub mod constants;
pub mod cur;
pub mod distributed;
pub mod error;
pub mod gen;
pub mod graph;
pub mod leverage;
pub mod lowrank;
pub mod matrix;
pub mod regress;
pub mod rng;
pub mod sketch;

pub use error::{Error, Result};
pub use matrix::{DenseMatrix, SparseMatrix};
