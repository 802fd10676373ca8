//! Minimal dense-matrix engine with reverse-mode differentiation.
//!
//! Only the operations the models and losses need are provided: matrix
//! products, row-bias addition, relu, scalar affine maps, row gather and
//! concatenation, reductions, row normalization, masked row log-sum-exp and
//! constant-weighted sums. Broadcasting is limited to the row bias.

mod graph;
mod matrix;

pub use graph::{log_sum_exp, Graph, Tensor, NORM_EPS};
pub use matrix::{dot, norm, Matrix};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiffError {
    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },
    #[error("row {row} has norm {norm:e}, too small to normalize")]
    DegenerateRow { row: usize, norm: f64 },
    #[error("backward needs a 1x1 loss, got {shape:?}")]
    NonScalarLoss { shape: (usize, usize) },
    #[error("{0} on empty input")]
    Empty(&'static str),
    #[error("row index {index} out of range for {len} rows")]
    IndexOutOfRange { index: usize, len: usize },
}
