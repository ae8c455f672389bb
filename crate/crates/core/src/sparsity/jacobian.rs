use super::SparsityError;
use crate::adcore::{Graph, Tensor, Var};
use crate::nets::{BoundMlp, HiddenActivation, MlpModel, OutputActivation};

/// Anything that maps `R^n -> R^m` pointwise.
pub trait VectorMap {
    fn input_dim(&self) -> usize;
    fn output_dim(&self) -> usize;
    fn eval(&self, x: &[f64]) -> Vec<f64>;
}

impl VectorMap for MlpModel {
    fn input_dim(&self) -> usize {
        MlpModel::input_dim(self)
    }

    fn output_dim(&self) -> usize {
        MlpModel::output_dim(self)
    }

    fn eval(&self, x: &[f64]) -> Vec<f64> {
        self.eval_point(x).expect("input width checked by caller")
    }
}

/// Adapts a closure into a [`VectorMap`].
pub struct FnMap<F> {
    pub inputs: usize,
    pub outputs: usize,
    pub f: F,
}

impl<F: Fn(&[f64]) -> Vec<f64>> VectorMap for FnMap<F> {
    fn input_dim(&self) -> usize {
        self.inputs
    }

    fn output_dim(&self) -> usize {
        self.outputs
    }

    fn eval(&self, x: &[f64]) -> Vec<f64> {
        (self.f)(x)
    }
}

/// A `D x D` Jacobian, `entries[i][j] = d g_i / d x_j`.
#[derive(Clone, Debug, PartialEq)]
pub struct JacobianMatrix {
    entries: Tensor,
    basepoint: Vec<f64>,
}

impl JacobianMatrix {
    pub fn new(entries: Tensor, basepoint: Vec<f64>) -> Result<Self, SparsityError> {
        if entries.rows() != entries.cols() {
            return Err(SparsityError::NonSquare {
                inputs: entries.cols(),
                outputs: entries.rows(),
            });
        }
        Ok(Self { entries, basepoint })
    }

    /// A matrix not tied to any evaluation point.
    pub fn from_entries(entries: Tensor) -> Result<Self, SparsityError> {
        Self::new(entries, Vec::new())
    }

    pub fn dim(&self) -> usize {
        self.entries.rows()
    }

    pub fn entries(&self) -> &Tensor {
        &self.entries
    }

    pub fn basepoint(&self) -> &[f64] {
        &self.basepoint
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.entries.get(row, col)
    }

    /// Column indices with `|J_dj| > threshold`, per row.
    pub fn row_supports(&self, threshold: f64) -> Vec<Vec<usize>> {
        (0..self.dim())
            .map(|r| {
                self.entries
                    .row_slice(r)
                    .iter()
                    .enumerate()
                    .filter(|(_, v)| v.abs() > threshold)
                    .map(|(c, _)| c)
                    .collect()
            })
            .collect()
    }

    pub fn l0(&self, threshold: f64) -> usize {
        self.entries.data().iter().filter(|v| v.abs() > threshold).count()
    }

    /// Largest row support size.
    pub fn max_row_support(&self, threshold: f64) -> usize {
        self.row_supports(threshold).iter().map(Vec::len).max().unwrap_or(0)
    }
}

/// Jacobian by central differences, one column per input coordinate.
///
/// Evaluation only; nothing here is differentiable with respect to the
/// parameters of `map`.
pub fn exact_jacobian<M: VectorMap + ?Sized>(
    map: &M,
    x: &[f64],
    step: f64,
) -> Result<JacobianMatrix, SparsityError> {
    let (n, m) = (map.input_dim(), map.output_dim());
    if n != m {
        return Err(SparsityError::NonSquare {
            inputs: n,
            outputs: m,
        });
    }
    if !(step > 0.0) {
        return Err(SparsityError::InvalidSpec(format!("step must be positive, got {step}")));
    }
    assert_eq!(x.len(), n, "basepoint has wrong dimension");
    let mut entries = Tensor::zeros(n, n);
    let mut probe = x.to_vec();
    for d in 0..n {
        probe[d] = x[d] + step;
        let plus = map.eval(&probe);
        probe[d] = x[d] - step;
        let minus = map.eval(&probe);
        probe[d] = x[d];
        for i in 0..n {
            entries.set(i, d, (plus[i] - minus[i]) / (2.0 * step));
        }
    }
    JacobianMatrix::new(entries, x.to_vec())
}

fn check_jacobian_support(model: &BoundMlp) -> Result<(), SparsityError> {
    let d_in = model.sizes[0];
    let d_out = *model.sizes.last().expect("sizes");
    if d_in != d_out {
        return Err(SparsityError::NonSquare {
            inputs: d_in,
            outputs: d_out,
        });
    }
    if model.output != OutputActivation::Identity {
        return Err(SparsityError::UnsupportedActivation(model.output.name()));
    }
    Ok(())
}

/// Activation-derivative masks at each hidden layer for the rows of `x`.
fn derivative_masks(model: &MlpModel, x: &Tensor) -> Result<Vec<Tensor>, SparsityError> {
    let trace = model.forward_trace(x)?;
    let hidden = model.hidden();
    Ok(trace[..trace.len() - 1]
        .iter()
        .map(|pre| pre.map(|a| hidden.derivative(a)))
        .collect())
}

/// Builds `J(x)` (`D x D`) inside `graph` as the ordered product of per-layer
/// Jacobians.
///
/// The activation derivatives enter as constant inputs (stop-gradient), so
/// backpropagating through the result differentiates only the weights. For
/// leaky ReLU units this is an almost-everywhere exact gradient; for tanh
/// units only the value is exact.
pub fn analytic_mlp_jacobian_graph(
    graph: &mut Graph,
    model: &MlpModel,
    bound: &BoundMlp,
    x: &[f64],
) -> Result<Var, SparsityError> {
    check_jacobian_support(bound)?;
    let masks = derivative_masks(model, &Tensor::row(x))?;
    // J^T = W_1 diag(m_1) W_2 diag(m_2) ... W_L in the row-vector convention.
    let mut acc = bound.weights[0];
    for (mask, &w) in masks.into_iter().zip(&bound.weights[1..]) {
        let m = graph.input(mask);
        let masked = graph.mul(acc, m)?;
        acc = graph.matmul(masked, w)?;
    }
    Ok(graph.transpose(acc)?)
}

/// Batch mean of `||J(x)||_1` using the same per-layer product, evaluated for
/// every row of `x` at once by pushing each basis direction through the
/// linearized network.
pub fn jacobian_l1_mean_graph(
    graph: &mut Graph,
    model: &MlpModel,
    bound: &BoundMlp,
    x: &Tensor,
) -> Result<Var, SparsityError> {
    check_jacobian_support(bound)?;
    if !matches!(model.hidden(), HiddenActivation::LeakyRelu(_)) {
        return Err(SparsityError::UnsupportedActivation(
            "tanh hidden units (stop-gradient Jacobian would be biased)",
        ));
    }
    let (batch, dim) = x.shape();
    let masks = derivative_masks(model, x)?;
    // Row (b * dim + d) carries the tangent of sample b along basis direction d.
    let mut basis = Tensor::zeros(batch * dim, dim);
    for b in 0..batch {
        for d in 0..dim {
            basis.set(b * dim + d, d, 1.0);
        }
    }
    let basis = graph.input(basis);
    let mut tangent = graph.matmul(basis, bound.weights[0])?;
    for (mask, &w) in masks.into_iter().zip(&bound.weights[1..]) {
        let width = mask.cols();
        let mut repeated = Tensor::zeros(batch * dim, width);
        for b in 0..batch {
            for d in 0..dim {
                repeated
                    .data_mut()[(b * dim + d) * width..(b * dim + d + 1) * width]
                    .copy_from_slice(mask.row_slice(b));
            }
        }
        let m = graph.input(repeated);
        let masked = graph.mul(tangent, m)?;
        tangent = graph.matmul(masked, w)?;
    }
    let total = graph.abs_sum(tangent)?;
    Ok(graph.scale(total, 1.0 / batch as f64)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adcore::gradcheck;
    use crate::nets::init_mlp;

    #[test]
    fn linear_map_is_recovered_exactly() {
        let a = Tensor::new(2, 2, vec![1.5, -2.0, 0.25, 3.0]).unwrap();
        // Row convention: g(x) = x W, so J = W^T.
        let model = MlpModel::linear(a.transpose(), Tensor::zeros(1, 2)).unwrap();
        let j = exact_jacobian(&model, &[0.3, -0.8], 1e-3).unwrap();
        assert!(j.entries().max_abs_diff(&a) < 1e-12);
    }

    #[test]
    fn quadratic_map_matches_analytic() {
        let map = FnMap {
            inputs: 2,
            outputs: 2,
            f: |x: &[f64]| vec![x[0] * x[0], x[1]],
        };
        let j = exact_jacobian(&map, &[1.0, 1.0], 1e-4).unwrap();
        let want = Tensor::new(2, 2, vec![2.0, 0.0, 0.0, 1.0]).unwrap();
        assert!(j.entries().max_abs_diff(&want) < 1e-6);
    }

    #[test]
    fn identity_map() {
        let map = FnMap {
            inputs: 3,
            outputs: 3,
            f: |x: &[f64]| x.to_vec(),
        };
        let j = exact_jacobian(&map, &[0.1, 0.2, 0.3], 1e-5).unwrap();
        assert!(j.entries().max_abs_diff(&Tensor::identity(3)) < 1e-10);
    }

    #[test]
    fn non_square_rejected() {
        let m = init_mlp(&[2, 4, 3], OutputActivation::Identity, 0).unwrap();
        assert!(matches!(
            exact_jacobian(&m, &[0.0, 0.0], 1e-4),
            Err(SparsityError::NonSquare { .. })
        ));
    }

    #[test]
    fn single_linear_layer_graph_value_and_sign_gradient() {
        let w = Tensor::new(2, 2, vec![0.7, -1.1, 0.0, 2.5]).unwrap();
        let model = MlpModel::linear(w.clone(), Tensor::row(&[0.1, 0.2])).unwrap();
        let mut g = Graph::new();
        let bound = model.bind(&mut g);
        let j = analytic_mlp_jacobian_graph(&mut g, &model, &bound, &[0.4, 0.4]).unwrap();
        assert_eq!(g.value(j), &w.transpose());
        let l1 = g.abs_sum(j).unwrap();
        let grads = g.backward(l1).unwrap();
        assert_eq!(grads.wrt(bound.weights[0]).data(), &[1.0, -1.0, 0.0, 1.0]);
    }

    #[test]
    fn sigmoid_output_is_unsupported() {
        let model = init_mlp(&[2, 4, 2], OutputActivation::Sigmoid, 0).unwrap();
        let mut g = Graph::new();
        let bound = model.bind(&mut g);
        assert!(matches!(
            analytic_mlp_jacobian_graph(&mut g, &model, &bound, &[0.0, 0.0]),
            Err(SparsityError::UnsupportedActivation(_))
        ));
    }

    fn kink_free_point(model: &MlpModel) -> Vec<f64> {
        for k in 0..1000 {
            let x = vec![0.37 * (k as f64).sin() + 0.1, 0.53 * (k as f64 * 1.7).cos() - 0.2];
            if model.min_abs_preactivation(&Tensor::row(&x)).unwrap() > 1e-3 {
                return x;
            }
        }
        panic!("no kink-free point found");
    }

    #[test]
    fn leaky_net_graph_matches_central_differences() {
        let model = init_mlp(&[2, 32, 32, 2], OutputActivation::Identity, 11).unwrap();
        let x = kink_free_point(&model);
        let mut g = Graph::new();
        let bound = model.bind(&mut g);
        let j = analytic_mlp_jacobian_graph(&mut g, &model, &bound, &x).unwrap();
        let fd = exact_jacobian(&model, &x, 1e-5).unwrap();
        assert!(g.value(j).max_abs_diff(fd.entries()) < 1e-6);
    }

    #[test]
    fn jacobian_sum_gradient_matches_finite_differences() {
        let model = init_mlp(&[2, 8, 8, 2], OutputActivation::Identity, 5).unwrap();
        let x = kink_free_point(&model);
        let mut g = Graph::new();
        let bound = model.bind(&mut g);
        let j = analytic_mlp_jacobian_graph(&mut g, &model, &bound, &x).unwrap();
        let s = g.sum(j).unwrap();
        let report = gradcheck(&mut g, s, 1e-5, 1e-4).unwrap();
        assert!(report.passed, "{report:?}");
    }

    #[test]
    fn batched_l1_matches_per_sample_graphs() {
        let model = init_mlp(&[2, 16, 16, 2], OutputActivation::Identity, 9).unwrap();
        let xs = Tensor::new(3, 2, vec![0.2, -0.5, 1.1, 0.3, -0.7, -0.9]).unwrap();
        let mut g = Graph::new();
        let bound = model.bind(&mut g);
        let batched = jacobian_l1_mean_graph(&mut g, &model, &bound, &xs).unwrap();
        let mut per_sample = 0.0;
        for r in 0..3 {
            let j = analytic_mlp_jacobian_graph(&mut g, &model, &bound, xs.row_slice(r)).unwrap();
            per_sample += g.value(j).abs_sum();
        }
        assert!((g.value(batched).item() - per_sample / 3.0).abs() < 1e-12);
    }

    #[test]
    fn identity_generator_l1_equals_dimension() {
        let model = MlpModel::linear(Tensor::identity(2), Tensor::zeros(1, 2)).unwrap();
        let mut g = Graph::new();
        let bound = model.bind(&mut g);
        let xs = Tensor::new(2, 2, vec![0.5, 0.1, -0.3, 0.9]).unwrap();
        let l1 = jacobian_l1_mean_graph(&mut g, &model, &bound, &xs).unwrap();
        assert_eq!(g.value(l1).item(), 2.0);
    }
}
