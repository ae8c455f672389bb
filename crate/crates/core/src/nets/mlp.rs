use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::NetError;
use crate::adcore::{sigmoid, Gradients, Graph, Tensor, Var};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum HiddenActivation {
    /// Leaky ReLU with the given negative slope.
    LeakyRelu(f64),
    /// Smooth hidden units; used for finite-difference convergence checks.
    Tanh,
}

impl HiddenActivation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            HiddenActivation::LeakyRelu(s) => {
                if x >= 0.0 {
                    x
                } else {
                    s * x
                }
            }
            HiddenActivation::Tanh => x.tanh(),
        }
    }

    /// Derivative, using slope 1 at exactly zero.
    pub fn derivative(self, x: f64) -> f64 {
        match self {
            HiddenActivation::LeakyRelu(s) => {
                if x >= 0.0 {
                    1.0
                } else {
                    s
                }
            }
            HiddenActivation::Tanh => {
                let t = x.tanh();
                1.0 - t * t
            }
        }
    }

    /// True when the derivative is piecewise constant in the pre-activation.
    pub fn is_piecewise_linear(self) -> bool {
        matches!(self, HiddenActivation::LeakyRelu(_))
    }
}

impl Default for HiddenActivation {
    fn default() -> Self {
        HiddenActivation::LeakyRelu(0.2)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OutputActivation {
    Identity,
    Tanh,
    Sigmoid,
}

impl OutputActivation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            OutputActivation::Identity => x,
            OutputActivation::Tanh => x.tanh(),
            OutputActivation::Sigmoid => sigmoid(x),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            OutputActivation::Identity => "identity",
            OutputActivation::Tanh => "tanh",
            OutputActivation::Sigmoid => "sigmoid",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "identity" => Some(OutputActivation::Identity),
            "tanh" => Some(OutputActivation::Tanh),
            "sigmoid" => Some(OutputActivation::Sigmoid),
            _ => None,
        }
    }
}

/// Fully connected network `x -> act(x W_1 + b_1) -> ... -> out(x W_L + b_L)`.
///
/// Weights are stored `n_in x n_out` so a `batch x n_in` input multiplies on
/// the left; biases are `1 x n_out` rows.
#[derive(Clone, Debug, PartialEq)]
pub struct MlpModel {
    pub(crate) sizes: Vec<usize>,
    pub(crate) weights: Vec<Tensor>,
    pub(crate) biases: Vec<Tensor>,
    pub(crate) hidden: HiddenActivation,
    pub(crate) output: OutputActivation,
}

/// Xavier-uniform weights, zero biases, deterministic in `seed`.
pub fn init_mlp(
    sizes: &[usize],
    output: OutputActivation,
    seed: u64,
) -> Result<MlpModel, NetError> {
    if sizes.len() < 2 {
        return Err(NetError::TooFewLayers(sizes.len()));
    }
    if sizes.contains(&0) {
        return Err(NetError::ZeroWidth);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut weights = Vec::with_capacity(sizes.len() - 1);
    let mut biases = Vec::with_capacity(sizes.len() - 1);
    for pair in sizes.windows(2) {
        let (n_in, n_out) = (pair[0], pair[1]);
        let bound = (6.0 / (n_in + n_out) as f64).sqrt();
        let data = (0..n_in * n_out)
            .map(|_| rng.random_range(-bound..bound))
            .collect();
        weights.push(Tensor::new(n_in, n_out, data)?);
        biases.push(Tensor::zeros(1, n_out));
    }
    Ok(MlpModel {
        sizes: sizes.to_vec(),
        weights,
        biases,
        hidden: HiddenActivation::default(),
        output,
    })
}

impl MlpModel {
    pub fn from_parts(
        sizes: Vec<usize>,
        weights: Vec<Tensor>,
        biases: Vec<Tensor>,
        hidden: HiddenActivation,
        output: OutputActivation,
    ) -> Result<Self, NetError> {
        if sizes.len() < 2 {
            return Err(NetError::TooFewLayers(sizes.len()));
        }
        if weights.len() != sizes.len() - 1 || biases.len() != sizes.len() - 1 {
            return Err(NetError::Checkpoint("layer count does not match sizes".into()));
        }
        for (i, pair) in sizes.windows(2).enumerate() {
            let expected_w = (pair[0], pair[1]);
            if weights[i].shape() != expected_w {
                return Err(NetError::GradientShape {
                    index: 2 * i,
                    expected: expected_w,
                    got: weights[i].shape(),
                });
            }
            if biases[i].shape() != (1, pair[1]) {
                return Err(NetError::GradientShape {
                    index: 2 * i + 1,
                    expected: (1, pair[1]),
                    got: biases[i].shape(),
                });
            }
        }
        Ok(Self {
            sizes,
            weights,
            biases,
            hidden,
            output,
        })
    }

    /// A single affine layer `x -> x W + b` with identity output.
    pub fn linear(weight: Tensor, bias: Tensor) -> Result<Self, NetError> {
        let sizes = vec![weight.rows(), weight.cols()];
        Self::from_parts(
            sizes,
            vec![weight],
            vec![bias],
            HiddenActivation::default(),
            OutputActivation::Identity,
        )
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().expect("at least two sizes")
    }

    pub fn num_layers(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[Tensor] {
        &self.weights
    }

    pub fn biases(&self) -> &[Tensor] {
        &self.biases
    }

    pub fn hidden(&self) -> HiddenActivation {
        self.hidden
    }

    pub fn with_hidden(mut self, hidden: HiddenActivation) -> Self {
        self.hidden = hidden;
        self
    }

    pub fn output(&self) -> OutputActivation {
        self.output
    }

    pub fn param_count(&self) -> usize {
        self.sizes.windows(2).map(|p| p[0] * p[1] + p[1]).sum()
    }

    /// Parameters in the order weight_0, bias_0, weight_1, ...
    pub fn params(&self) -> impl Iterator<Item = &Tensor> {
        self.weights.iter().zip(&self.biases).flat_map(|(w, b)| [w, b])
    }

    pub(crate) fn params_mut(&mut self) -> impl Iterator<Item = &mut Tensor> {
        self.weights
            .iter_mut()
            .zip(self.biases.iter_mut())
            .flat_map(|(w, b)| [w, b])
    }

    fn check_input(&self, x: &Tensor) -> Result<(), NetError> {
        if x.cols() != self.input_dim() {
            return Err(NetError::InputWidth {
                expected: self.input_dim(),
                got: x.cols(),
            });
        }
        Ok(())
    }

    /// Evaluates the network on a `batch x n_in` input without building a graph.
    pub fn predict(&self, x: &Tensor) -> Result<Tensor, NetError> {
        Ok(self.forward_trace(x)?.pop().expect("output layer"))
    }

    /// Pre-activations of every hidden layer followed by the network output.
    pub fn forward_trace(&self, x: &Tensor) -> Result<Vec<Tensor>, NetError> {
        self.check_input(x)?;
        let last = self.num_layers() - 1;
        let mut out = Vec::with_capacity(self.num_layers());
        let mut h = x.clone();
        for (i, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let mut a = h.matmul(w)?;
            let cols = a.cols();
            for (j, v) in a.data_mut().iter_mut().enumerate() {
                *v += b.data()[j % cols];
            }
            if i == last {
                out.push(a.map(|v| self.output.apply(v)));
            } else {
                h = a.map(|v| self.hidden.apply(v));
                out.push(a);
            }
        }
        Ok(out)
    }

    /// Evaluates a single point.
    pub fn eval_point(&self, x: &[f64]) -> Result<Vec<f64>, NetError> {
        Ok(self.predict(&Tensor::row(x))?.into_data())
    }

    /// Smallest |pre-activation| over all hidden units and rows of `x`.
    ///
    /// Used to keep finite-difference checks away from activation kinks.
    pub fn min_abs_preactivation(&self, x: &Tensor) -> Result<f64, NetError> {
        let trace = self.forward_trace(x)?;
        Ok(trace[..trace.len() - 1]
            .iter()
            .flat_map(|t| t.data().iter())
            .map(|v| v.abs())
            .fold(f64::INFINITY, f64::min))
    }

    /// Registers every weight and bias as a parameter node of `graph`.
    pub fn bind(&self, graph: &mut Graph) -> BoundMlp {
        let weights = self.weights.iter().map(|w| graph.parameter(w.clone())).collect();
        let biases = self.biases.iter().map(|b| graph.parameter(b.clone())).collect();
        BoundMlp {
            weights,
            biases,
            hidden: self.hidden,
            output: self.output,
            sizes: self.sizes.clone(),
        }
    }
}

/// Parameter nodes of an [`MlpModel`] inside one graph.
#[derive(Clone, Debug)]
pub struct BoundMlp {
    pub weights: Vec<Var>,
    pub biases: Vec<Var>,
    pub hidden: HiddenActivation,
    pub output: OutputActivation,
    pub sizes: Vec<usize>,
}

impl BoundMlp {
    pub fn forward(&self, graph: &mut Graph, x: Var) -> Result<Var, NetError> {
        let last = self.weights.len() - 1;
        let mut h = x;
        for (i, (&w, &b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let xw = graph.matmul(h, w)?;
            let a = graph.add(xw, b)?;
            h = if i == last {
                match self.output {
                    OutputActivation::Identity => a,
                    OutputActivation::Tanh => graph.tanh(a)?,
                    OutputActivation::Sigmoid => graph.sigmoid(a)?,
                }
            } else {
                match self.hidden {
                    HiddenActivation::LeakyRelu(s) => graph.leaky_relu(a, s)?,
                    HiddenActivation::Tanh => graph.tanh(a)?,
                }
            };
        }
        Ok(h)
    }

    pub fn gradients(&self, grads: &Gradients) -> MlpGradients {
        MlpGradients {
            weights: self.weights.iter().map(|&w| grads.wrt(w).clone()).collect(),
            biases: self.biases.iter().map(|&b| grads.wrt(b).clone()).collect(),
        }
    }

    pub fn params(&self) -> impl Iterator<Item = Var> + '_ {
        self.weights.iter().zip(&self.biases).flat_map(|(&w, &b)| [w, b])
    }
}

/// Gradients laid out like the parameters of an [`MlpModel`].
#[derive(Clone, Debug, PartialEq)]
pub struct MlpGradients {
    pub weights: Vec<Tensor>,
    pub biases: Vec<Tensor>,
}

impl MlpGradients {
    pub fn zeros_like(model: &MlpModel) -> Self {
        Self {
            weights: model.weights.iter().map(|w| Tensor::zeros(w.rows(), w.cols())).collect(),
            biases: model.biases.iter().map(|b| Tensor::zeros(b.rows(), b.cols())).collect(),
        }
    }

    pub fn params(&self) -> impl Iterator<Item = &Tensor> {
        self.weights.iter().zip(&self.biases).flat_map(|(w, b)| [w, b])
    }

    pub fn is_finite(&self) -> bool {
        self.params().all(Tensor::is_finite)
    }
}
