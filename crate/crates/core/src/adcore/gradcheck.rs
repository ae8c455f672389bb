use super::{AdError, Graph, Var};

/// Outcome of comparing backward gradients with central differences.
#[derive(Clone, Debug)]
pub struct GradcheckReport {
    /// Max relative error per parameter node, in node order.
    pub per_parameter: Vec<(Var, f64)>,
    pub max_relative_error: f64,
    pub tolerance: f64,
    pub passed: bool,
}

/// `|a - b| / max(|a|, |b|, 1e-6)`.
///
/// The floor keeps entries whose true gradient is ~0 from reporting
/// round-off as a large relative error.
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

/// Checks every parameter of `graph` that feeds `root`.
///
/// Leaf values are perturbed one entry at a time and the graph is replayed
/// with [`Graph::forward`]; the original values are restored before
/// returning. Input nodes (including stop-gradient masks) stay fixed.
pub fn gradcheck(
    graph: &mut Graph,
    root: Var,
    step: f64,
    tolerance: f64,
) -> Result<GradcheckReport, AdError> {
    assert!(step > 0.0, "gradcheck step must be positive");
    graph.forward(root)?;
    let grads = graph.backward(root)?;
    let mut per_parameter = Vec::new();
    let mut worst: f64 = 0.0;

    for param in graph.parameters().into_iter().filter(|p| *p < root) {
        let original = graph.value(param).clone();
        let analytic = grads.wrt(param).clone();
        let mut param_worst: f64 = 0.0;
        for i in 0..original.len() {
            let mut plus = original.clone();
            plus.data_mut()[i] += step;
            graph.set_value(param, plus)?;
            let f_plus = graph.forward(root)?.item();

            let mut minus = original.clone();
            minus.data_mut()[i] -= step;
            graph.set_value(param, minus)?;
            let f_minus = graph.forward(root)?.item();

            let numeric = (f_plus - f_minus) / (2.0 * step);
            param_worst = param_worst.max(relative_error(analytic.data()[i], numeric));
        }
        graph.set_value(param, original)?;
        per_parameter.push((param, param_worst));
        worst = worst.max(param_worst);
    }
    graph.forward(root)?;

    Ok(GradcheckReport {
        per_parameter,
        max_relative_error: worst,
        tolerance,
        passed: worst < tolerance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adcore::Tensor;

    #[test]
    fn linear_model_is_exact() {
        let mut g = Graph::new();
        let x = g.input(Tensor::new(3, 2, vec![0.3, -1.2, 2.0, 0.7, -0.4, 1.1]).unwrap());
        let w = g.parameter(Tensor::new(2, 1, vec![0.8, -0.5]).unwrap());
        let b = g.parameter(Tensor::scalar(0.25));
        let xw = g.matmul(x, w).unwrap();
        let y = g.add(xw, b).unwrap();
        let loss = g.sum(y).unwrap();
        let report = gradcheck(&mut g, loss, 1e-5, 1e-8).unwrap();
        assert!(report.passed, "{report:?}");
        assert_eq!(report.per_parameter.len(), 2);
    }

    #[test]
    fn leaves_graph_unchanged() {
        let mut g = Graph::new();
        let w = g.parameter(Tensor::row(&[0.5, -2.0]));
        let t = g.tanh(w).unwrap();
        let loss = g.sum(t).unwrap();
        let before = g.value(loss).item();
        gradcheck(&mut g, loss, 1e-5, 1e-4).unwrap();
        assert_eq!(g.value(loss).item(), before);
        assert_eq!(g.value(w).data(), &[0.5, -2.0]);
    }
}
