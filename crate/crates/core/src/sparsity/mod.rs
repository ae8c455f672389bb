//! Jacobian sparsity: extraction, the masked finite-difference surrogate,
//! the randomized l0 probe estimator with its sandwich bound, and the
//! structural-sparsity checker.

mod jacobian;
mod probe;
mod structure;
mod study;
mod surrogate;

pub use jacobian::{
    analytic_mlp_jacobian_graph, exact_jacobian, jacobian_l1_mean_graph, FnMap, JacobianMatrix,
    VectorMap,
};
pub use probe::{
    binomial, check_sandwich_bound, draw_probe, lower_bound_factor, q_estimate,
    q_exact_enumeration, McEstimate, ProbeSample, ProbeSpec, SandwichCheck, MAX_ENUMERATION_DIM,
};
pub use structure::{check_structural_sparsity, StructuralReport, SupportPattern};
pub use study::{
    probe_bias_variance_study, random_sparse_jacobian, write_study_csv, MatrixRecord, StudyParams,
    StudyResult, StudyRow,
};
pub use surrogate::{fd_sparsity_batch_graph, fd_sparsity_surrogate};

use thiserror::Error;

use crate::adcore::AdError;
use crate::nets::NetError;

/// Absolute cutoff below which an entry counts as zero for l0 purposes.
pub const DEFAULT_ZERO_THRESHOLD: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum SparsityError {
    #[error("expected a square map, got {inputs} inputs and {outputs} outputs")]
    NonSquare { inputs: usize, outputs: usize },
    #[error("invalid probe spec: {0}")]
    InvalidSpec(String),
    #[error("dimension {0} is too large to enumerate masks; use q_estimate")]
    TooLarge(usize),
    #[error("unsupported activation for an analytic Jacobian: {0}")]
    UnsupportedActivation(&'static str),
    #[error("support index ({row}, {col}) out of range for dimension {dim}")]
    IndexOutOfRange { row: usize, col: usize, dim: usize },
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Ad(#[from] AdError),
}
