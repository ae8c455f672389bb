use super::{ProbeSample, SparsityError};
use crate::adcore::{Graph, Tensor, Var};
use crate::nets::BoundMlp;

/// `||(g(x + δz) - g(x)) / δ||_1` for one point and one probe, built from two
/// forward passes so it backpropagates like any other loss.
pub fn fd_sparsity_surrogate(
    graph: &mut Graph,
    bound: &BoundMlp,
    x: &[f64],
    probe: &ProbeSample,
    delta: f64,
) -> Result<Var, SparsityError> {
    fd_sparsity_batch_graph(graph, bound, &Tensor::row(x), &Tensor::row(&probe.z), delta)
}

/// Mean over rows of the forward-difference l1 surrogate; row `i` of `z` is
/// the probe applied to row `i` of `x`.
pub fn fd_sparsity_batch_graph(
    graph: &mut Graph,
    bound: &BoundMlp,
    x: &Tensor,
    z: &Tensor,
    delta: f64,
) -> Result<Var, SparsityError> {
    if !(delta > 0.0) {
        return Err(SparsityError::InvalidSpec(format!("delta must be positive, got {delta}")));
    }
    if x.shape() != z.shape() {
        return Err(crate::adcore::AdError::ShapeMismatch {
            op: "fd_sparsity",
            lhs: x.shape(),
            rhs: z.shape(),
        }
        .into());
    }
    let shifted: Vec<f64> = x.data().iter().zip(z.data()).map(|(a, b)| a + delta * b).collect();
    let shifted = graph.input(Tensor::new(x.rows(), x.cols(), shifted)?);
    let base = graph.input(x.clone());
    let out_shifted = bound.forward(graph, shifted)?;
    let out_base = bound.forward(graph, base)?;
    let diff = graph.sub(out_shifted, out_base)?;
    let total = graph.abs_sum(diff)?;
    Ok(graph.scale(total, 1.0 / (delta * x.rows() as f64))?)
}
