use super::tensor::{gemm_acc, Tensor};
use super::AdError;

/// Handle to a node of a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OpKind {
    Input,
    Parameter,
    MatMul,
    Add,
    Scale,
    LeakyRelu,
    Tanh,
    Sigmoid,
    Log,
    Square,
    AbsSum,
    Sum,
    Mean,
    Subtract,
    Mul,
    Clamp,
    Transpose,
}

#[derive(Clone, Debug)]
enum Op {
    Input,
    Parameter,
    MatMul(Var, Var),
    Add(Var, Var),
    Subtract(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    LeakyRelu(Var, f64),
    Tanh(Var),
    Sigmoid(Var),
    Log(Var),
    Square(Var),
    AbsSum(Var),
    Sum(Var),
    Mean(Var),
    Clamp(Var, f64, f64),
    Transpose(Var),
}

impl Op {
    fn kind(&self) -> OpKind {
        match self {
            Op::Input => OpKind::Input,
            Op::Parameter => OpKind::Parameter,
            Op::MatMul(..) => OpKind::MatMul,
            Op::Add(..) => OpKind::Add,
            Op::Subtract(..) => OpKind::Subtract,
            Op::Mul(..) => OpKind::Mul,
            Op::Scale(..) => OpKind::Scale,
            Op::LeakyRelu(..) => OpKind::LeakyRelu,
            Op::Tanh(_) => OpKind::Tanh,
            Op::Sigmoid(_) => OpKind::Sigmoid,
            Op::Log(_) => OpKind::Log,
            Op::Square(_) => OpKind::Square,
            Op::AbsSum(_) => OpKind::AbsSum,
            Op::Sum(_) => OpKind::Sum,
            Op::Mean(_) => OpKind::Mean,
            Op::Clamp(..) => OpKind::Clamp,
            Op::Transpose(_) => OpKind::Transpose,
        }
    }
}

#[derive(Clone, Debug)]
struct Node {
    op: Op,
    value: Tensor,
}

/// Define-by-run computation graph.
///
/// Values are computed eagerly as nodes are appended, so node indices are
/// already a topological order. [`Graph::forward`] replays the graph after
/// leaf values change; [`Graph::backward`] walks it in reverse.
#[derive(Clone, Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

/// Gradients of a scalar root with respect to every node that reaches it.
#[derive(Clone, Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, var: Var) -> Option<&Tensor> {
        self.grads.get(var.0).and_then(|g| g.as_ref())
    }

    /// Gradient for `var`, panicking if the node was not part of the pass.
    pub fn wrt(&self, var: Var) -> &Tensor {
        self.get(var).expect("no gradient recorded for node")
    }
}

// Binary elementwise ops accept equal shapes, a `1 x n` row against `m x n`,
// or a `1 x 1` scalar against anything.
fn broadcast_shape(
    op: &'static str,
    a: (usize, usize),
    b: (usize, usize),
) -> Result<(usize, usize), AdError> {
    let ok = |x: (usize, usize), y: (usize, usize)| x == y || x == (1, 1) || (x.0 == 1 && x.1 == y.1);
    if a == b || ok(b, a) {
        Ok(a)
    } else if ok(a, b) {
        Ok(b)
    } else {
        Err(AdError::ShapeMismatch { op, lhs: a, rhs: b })
    }
}

fn broadcast_zip(a: &Tensor, b: &Tensor, shape: (usize, usize), f: impl Fn(f64, f64) -> f64) -> Tensor {
    let (rows, cols) = shape;
    let mut out = Vec::with_capacity(rows * cols);
    let at = |t: &Tensor, r: usize, c: usize| {
        let rr = if t.rows() == 1 { 0 } else { r };
        let cc = if t.cols() == 1 { 0 } else { c };
        t.data()[rr * t.cols() + cc]
    };
    if a.shape() == shape && b.shape() == shape {
        out.extend(a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)));
    } else {
        for r in 0..rows {
            for c in 0..cols {
                out.push(f(at(a, r, c), at(b, r, c)));
            }
        }
    }
    Tensor::new(rows, cols, out).expect("shape computed from operands")
}

// Sums a full-shape gradient back down to a broadcast operand's shape.
fn reduce_to(grad: &Tensor, shape: (usize, usize)) -> Tensor {
    if grad.shape() == shape {
        return grad.clone();
    }
    let mut out = Tensor::zeros(shape.0, shape.1);
    for r in 0..grad.rows() {
        for c in 0..grad.cols() {
            let rr = if shape.0 == 1 { 0 } else { r };
            let cc = if shape.1 == 1 { 0 } else { c };
            let v = out.get(rr, cc) + grad.get(r, c);
            out.set(rr, cc, v);
        }
    }
    out
}

fn accumulate(slot: &mut Option<Tensor>, delta: Tensor) {
    match slot {
        Some(existing) => {
            for (e, d) in existing.data_mut().iter_mut().zip(delta.data()) {
                *e += d;
            }
        }
        None => *slot = Some(delta),
    }
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, var: Var) -> &Tensor {
        &self.nodes[var.0].value
    }

    pub fn kind(&self, var: Var) -> OpKind {
        self.nodes[var.0].op.kind()
    }

    /// Constant leaf; receives a gradient but is never updated by training.
    pub fn input(&mut self, value: Tensor) -> Var {
        self.push_leaf(Op::Input, value)
    }

    pub fn parameter(&mut self, value: Tensor) -> Var {
        self.push_leaf(Op::Parameter, value)
    }

    pub fn parameters(&self) -> Vec<Var> {
        self.nodes
            .iter()
            .enumerate()
            .filter(|(_, n)| matches!(n.op, Op::Parameter))
            .map(|(i, _)| Var(i))
            .collect()
    }

    /// Replaces the value of an input or parameter node. Call
    /// [`Graph::forward`] afterwards to refresh downstream values.
    pub fn set_value(&mut self, var: Var, value: Tensor) -> Result<(), AdError> {
        let node = &mut self.nodes[var.0];
        if !matches!(node.op, Op::Input | Op::Parameter) {
            return Err(AdError::NotLeaf(var.0));
        }
        if node.value.shape() != value.shape() {
            return Err(AdError::ShapeMismatch {
                op: "set_value",
                lhs: node.value.shape(),
                rhs: value.shape(),
            });
        }
        node.value = value;
        Ok(())
    }

    fn push_leaf(&mut self, op: Op, value: Tensor) -> Var {
        self.nodes.push(Node { op, value });
        Var(self.nodes.len() - 1)
    }

    fn push(&mut self, op: Op) -> Result<Var, AdError> {
        let value = self.eval(&op)?;
        self.nodes.push(Node { op, value });
        Ok(Var(self.nodes.len() - 1))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, AdError> {
        self.push(Op::MatMul(a, b))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, AdError> {
        self.push(Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, AdError> {
        self.push(Op::Subtract(a, b))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, AdError> {
        self.push(Op::Mul(a, b))
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Result<Var, AdError> {
        self.push(Op::Scale(a, factor))
    }

    /// Leaky ReLU; the derivative at exactly zero is taken as 1.
    pub fn leaky_relu(&mut self, a: Var, slope: f64) -> Result<Var, AdError> {
        self.push(Op::LeakyRelu(a, slope))
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var, AdError> {
        self.push(Op::Tanh(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var, AdError> {
        self.push(Op::Sigmoid(a))
    }

    pub fn log(&mut self, a: Var) -> Result<Var, AdError> {
        self.push(Op::Log(a))
    }

    pub fn square(&mut self, a: Var) -> Result<Var, AdError> {
        self.push(Op::Square(a))
    }

    /// Sum of absolute values (the entrywise l1 norm), as a scalar.
    pub fn abs_sum(&mut self, a: Var) -> Result<Var, AdError> {
        self.push(Op::AbsSum(a))
    }

    pub fn sum(&mut self, a: Var) -> Result<Var, AdError> {
        self.push(Op::Sum(a))
    }

    pub fn mean(&mut self, a: Var) -> Result<Var, AdError> {
        self.push(Op::Mean(a))
    }

    /// Clamps into `[lo, hi]`; gradient is zero where the clamp is active.
    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Result<Var, AdError> {
        self.push(Op::Clamp(a, lo, hi))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var, AdError> {
        self.push(Op::Transpose(a))
    }

    fn eval(&self, op: &Op) -> Result<Tensor, AdError> {
        let v = |x: &Var| &self.nodes[x.0].value;
        let out = match op {
            Op::Input | Op::Parameter => unreachable!("leaves are not evaluated"),
            Op::MatMul(a, b) => v(a).matmul(v(b))?,
            Op::Add(a, b) => {
                let shape = broadcast_shape("add", v(a).shape(), v(b).shape())?;
                broadcast_zip(v(a), v(b), shape, |x, y| x + y)
            }
            Op::Subtract(a, b) => {
                let shape = broadcast_shape("subtract", v(a).shape(), v(b).shape())?;
                broadcast_zip(v(a), v(b), shape, |x, y| x - y)
            }
            Op::Mul(a, b) => {
                let shape = broadcast_shape("mul", v(a).shape(), v(b).shape())?;
                broadcast_zip(v(a), v(b), shape, |x, y| x * y)
            }
            Op::Scale(a, c) => v(a).map(|x| c * x),
            Op::LeakyRelu(a, s) => v(a).map(|x| if x >= 0.0 { x } else { s * x }),
            Op::Tanh(a) => v(a).map(f64::tanh),
            Op::Sigmoid(a) => v(a).map(sigmoid),
            Op::Log(a) => v(a).map(f64::ln),
            Op::Square(a) => v(a).map(|x| x * x),
            Op::AbsSum(a) => Tensor::scalar(v(a).abs_sum()),
            Op::Sum(a) => Tensor::scalar(v(a).sum()),
            Op::Mean(a) => {
                let t = v(a);
                if t.is_empty() {
                    return Err(AdError::Empty { op: "mean" });
                }
                Tensor::scalar(t.sum() / t.len() as f64)
            }
            Op::Clamp(a, lo, hi) => v(a).map(|x| x.clamp(*lo, *hi)),
            Op::Transpose(a) => v(a).transpose(),
        };
        if !out.is_finite() {
            return Err(AdError::NonFinite {
                op: op_name(op.kind()),
            });
        }
        Ok(out)
    }

    /// Recomputes every derived node up to and including `root` from the
    /// current leaf values and returns the root value.
    pub fn forward(&mut self, root: Var) -> Result<&Tensor, AdError> {
        for i in 0..=root.0 {
            if matches!(self.nodes[i].op, Op::Input | Op::Parameter) {
                continue;
            }
            let value = self.eval(&self.nodes[i].op)?;
            self.nodes[i].value = value;
        }
        Ok(&self.nodes[root.0].value)
    }

    /// Reverse-mode pass from a scalar root. Every parameter node ends up with
    /// a gradient (zeros when it does not influence the root).
    pub fn backward(&self, root: Var) -> Result<Gradients, AdError> {
        let (rows, cols) = self.nodes[root.0].value.shape();
        if (rows, cols) != (1, 1) {
            return Err(AdError::NonScalarRoot { rows, cols });
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[root.0] = Some(Tensor::scalar(1.0));

        for i in (0..=root.0).rev() {
            let Some(upstream) = grads[i].take() else {
                continue;
            };
            let node = &self.nodes[i];
            let val = |x: &Var| &self.nodes[x.0].value;
            match &node.op {
                Op::Input | Op::Parameter => {}
                Op::MatMul(a, b) => {
                    let (va, vb) = (val(a), val(b));
                    let mut ga = Tensor::zeros(va.rows(), va.cols());
                    gemm_acc(&upstream, false, vb, true, &mut ga);
                    let mut gb = Tensor::zeros(vb.rows(), vb.cols());
                    gemm_acc(va, true, &upstream, false, &mut gb);
                    accumulate(&mut grads[a.0], ga);
                    accumulate(&mut grads[b.0], gb);
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads[a.0], reduce_to(&upstream, val(a).shape()));
                    accumulate(&mut grads[b.0], reduce_to(&upstream, val(b).shape()));
                }
                Op::Subtract(a, b) => {
                    accumulate(&mut grads[a.0], reduce_to(&upstream, val(a).shape()));
                    accumulate(&mut grads[b.0], reduce_to(&upstream.map(|g| -g), val(b).shape()));
                }
                Op::Mul(a, b) => {
                    let shape = upstream.shape();
                    let ga = broadcast_zip(&upstream, val(b), shape, |g, y| g * y);
                    let gb = broadcast_zip(&upstream, val(a), shape, |g, x| g * x);
                    accumulate(&mut grads[a.0], reduce_to(&ga, val(a).shape()));
                    accumulate(&mut grads[b.0], reduce_to(&gb, val(b).shape()));
                }
                Op::Scale(a, c) => accumulate(&mut grads[a.0], upstream.map(|g| c * g)),
                Op::LeakyRelu(a, s) => {
                    let g = zip_same(&upstream, val(a), |g, x| if x >= 0.0 { g } else { s * g });
                    accumulate(&mut grads[a.0], g);
                }
                Op::Tanh(a) => {
                    let g = zip_same(&upstream, &node.value, |g, y| g * (1.0 - y * y));
                    accumulate(&mut grads[a.0], g);
                }
                Op::Sigmoid(a) => {
                    let g = zip_same(&upstream, &node.value, |g, y| g * y * (1.0 - y));
                    accumulate(&mut grads[a.0], g);
                }
                Op::Log(a) => {
                    let g = zip_same(&upstream, val(a), |g, x| g / x);
                    accumulate(&mut grads[a.0], g);
                }
                Op::Square(a) => {
                    let g = zip_same(&upstream, val(a), |g, x| 2.0 * g * x);
                    accumulate(&mut grads[a.0], g);
                }
                Op::AbsSum(a) => {
                    let s = upstream.item();
                    let g = val(a).map(|x| {
                        if x > 0.0 {
                            s
                        } else if x < 0.0 {
                            -s
                        } else {
                            0.0
                        }
                    });
                    accumulate(&mut grads[a.0], g);
                }
                Op::Sum(a) => {
                    let (r, c) = val(a).shape();
                    accumulate(&mut grads[a.0], Tensor::filled(r, c, upstream.item()));
                }
                Op::Mean(a) => {
                    let (r, c) = val(a).shape();
                    let n = (r * c) as f64;
                    accumulate(&mut grads[a.0], Tensor::filled(r, c, upstream.item() / n));
                }
                Op::Clamp(a, lo, hi) => {
                    let g = zip_same(&upstream, val(a), |g, x| if x >= *lo && x <= *hi { g } else { 0.0 });
                    accumulate(&mut grads[a.0], g);
                }
                Op::Transpose(a) => accumulate(&mut grads[a.0], upstream.transpose()),
            }
            grads[i] = Some(upstream);
        }

        for (i, node) in self.nodes.iter().enumerate() {
            if matches!(node.op, Op::Parameter) && grads[i].is_none() {
                let (r, c) = node.value.shape();
                grads[i] = Some(Tensor::zeros(r, c));
            }
        }
        Ok(Gradients { grads })
    }
}

fn zip_same(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    Tensor::new(a.rows(), a.cols(), data).expect("same shape")
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn op_name(kind: OpKind) -> &'static str {
    match kind {
        OpKind::Input => "input",
        OpKind::Parameter => "parameter",
        OpKind::MatMul => "matmul",
        OpKind::Add => "add",
        OpKind::Scale => "scale",
        OpKind::LeakyRelu => "leaky_relu",
        OpKind::Tanh => "tanh",
        OpKind::Sigmoid => "sigmoid",
        OpKind::Log => "log",
        OpKind::Square => "square",
        OpKind::AbsSum => "abs_sum",
        OpKind::Sum => "sum",
        OpKind::Mean => "mean",
        OpKind::Subtract => "subtract",
        OpKind::Mul => "mul",
        OpKind::Clamp => "clamp",
        OpKind::Transpose => "transpose",
    }
}
