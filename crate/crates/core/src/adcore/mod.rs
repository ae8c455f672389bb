//! Reverse-mode automatic differentiation over dense `f64` matrices.
//!
//! The graph is rebuilt for every minibatch. Nodes are evaluated when they are
//! created, [`Graph::backward`] accumulates gradients in reverse creation
//! order, and [`gradcheck`] compares those gradients against central
//! differences obtained by replaying [`Graph::forward`].

mod gradcheck;
mod graph;
mod tensor;

pub use gradcheck::{gradcheck, relative_error, GradcheckReport};
pub use graph::{sigmoid, Gradients, Graph, OpKind, Var};
pub use tensor::Tensor;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AdError {
    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: (usize, usize),
        rhs: (usize, usize),
    },
    #[error("{op} produced a non-finite value")]
    NonFinite { op: &'static str },
    #[error("{op} of an empty tensor")]
    Empty { op: &'static str },
    #[error("backward needs a scalar root, got {rows}x{cols}")]
    NonScalarRoot { rows: usize, cols: usize },
    #[error("data of length {len} cannot fill a {rows}x{cols} tensor")]
    BadLength { len: usize, rows: usize, cols: usize },
    #[error("node {0} is not an input or parameter")]
    NotLeaf(usize),
}
