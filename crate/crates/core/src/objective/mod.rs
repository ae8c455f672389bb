//! Loss terms of the anchored transfer objective: adversarial distribution
//! matching, anchor regression, invertibility and Jacobian sparsity.

use rand::Rng;
use thiserror::Error;

use crate::adcore::{AdError, Graph, Tensor, Var};
use crate::nets::{BoundMlp, MlpModel, NetError};
use crate::sparsity::{
    draw_probe, fd_sparsity_batch_graph, jacobian_l1_mean_graph, ProbeSpec, SparsityError,
};

/// Discriminator outputs are clamped into `[ε, 1 - ε]` before any log.
pub const DISC_CLAMP_EPS: f64 = 1e-7;

#[derive(Debug, Error)]
pub enum ObjectiveError {
    #[error("empty batch")]
    EmptyBatch,
    #[error("anchor loss requested with no anchors")]
    NoAnchors,
    #[error("loss weight {name} must be finite and non-negative, got {value}")]
    BadWeight { name: &'static str, value: f64 },
    #[error("weight {0} is positive but the matching loss term was not built")]
    MissingPart(&'static str),
    #[error("anchor {index} has dimension {got}, expected {expected}")]
    AnchorShape {
        index: usize,
        expected: usize,
        got: usize,
    },
    #[error(transparent)]
    Sparsity(#[from] SparsityError),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Ad(#[from] AdError),
}

impl ObjectiveError {
    /// True when the failure is a NaN/Inf somewhere in the graph.
    pub fn is_non_finite(&self) -> bool {
        let ad = match self {
            ObjectiveError::Ad(e) => Some(e),
            ObjectiveError::Net(NetError::Ad(e)) => Some(e),
            ObjectiveError::Sparsity(SparsityError::Ad(e)) => Some(e),
            ObjectiveError::Sparsity(SparsityError::Net(NetError::Ad(e))) => Some(e),
            _ => None,
        };
        matches!(ad, Some(AdError::NonFinite { .. }))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossWeights {
    pub anchor: f64,
    pub sparsity: f64,
    pub inv: f64,
}

impl LossWeights {
    pub fn new(anchor: f64, sparsity: f64, inv: f64) -> Result<Self, ObjectiveError> {
        let w = Self {
            anchor,
            sparsity,
            inv,
        };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<(), ObjectiveError> {
        for (name, value) in [
            ("anchor", self.anchor),
            ("sparsity", self.sparsity),
            ("inv", self.inv),
        ] {
            if !(value >= 0.0) || !value.is_finite() {
                return Err(ObjectiveError::BadWeight { name, value });
            }
        }
        Ok(())
    }
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            anchor: 1.0,
            sparsity: 0.1,
            inv: 1.0,
        }
    }
}

/// Aligned pairs `(x, y = g*(x))` available as supervision.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct AnchorSet {
    pub pairs: Vec<(Vec<f64>, Vec<f64>)>,
}

impl AnchorSet {
    pub fn new(pairs: Vec<(Vec<f64>, Vec<f64>)>) -> Self {
        Self { pairs }
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn sources(&self) -> Tensor {
        Tensor::from_rows(&self.pairs.iter().map(|p| p.0.clone()).collect::<Vec<_>>())
    }

    pub fn targets(&self) -> Tensor {
        Tensor::from_rows(&self.pairs.iter().map(|p| p.1.clone()).collect::<Vec<_>>())
    }
}

fn clamped_log(graph: &mut Graph, p: Var) -> Result<Var, AdError> {
    let c = graph.clamp(p, DISC_CLAMP_EPS, 1.0 - DISC_CLAMP_EPS)?;
    graph.log(c)
}

/// `-[mean log d(real) + mean log(1 - d(fake))]`.
pub fn discriminator_loss(
    graph: &mut Graph,
    disc: &BoundMlp,
    real: Var,
    fake: Var,
) -> Result<Var, ObjectiveError> {
    if graph.value(real).rows() == 0 || graph.value(fake).rows() == 0 {
        return Err(ObjectiveError::EmptyBatch);
    }
    let d_real = disc.forward(graph, real)?;
    let log_real = clamped_log(graph, d_real)?;
    let real_term = graph.mean(log_real)?;

    let d_fake = disc.forward(graph, fake)?;
    let d_fake = graph.clamp(d_fake, DISC_CLAMP_EPS, 1.0 - DISC_CLAMP_EPS)?;
    let one = graph.input(Tensor::scalar(1.0));
    let miss = graph.sub(one, d_fake)?;
    let log_miss = graph.log(miss)?;
    let fake_term = graph.mean(log_miss)?;

    let both = graph.add(real_term, fake_term)?;
    Ok(graph.scale(both, -1.0)?)
}

/// Non-saturating generator loss `-mean log d(fake)`.
pub fn generator_adversarial_loss(
    graph: &mut Graph,
    disc: &BoundMlp,
    fake: Var,
) -> Result<Var, ObjectiveError> {
    if graph.value(fake).rows() == 0 {
        return Err(ObjectiveError::EmptyBatch);
    }
    let d_fake = disc.forward(graph, fake)?;
    let log_fake = clamped_log(graph, d_fake)?;
    let m = graph.mean(log_fake)?;
    Ok(graph.scale(m, -1.0)?)
}

/// Both adversarial losses over one graph; returns `(disc_loss, gen_loss)`.
pub fn gan_losses(
    graph: &mut Graph,
    generator: &BoundMlp,
    discriminator: &BoundMlp,
    x: &Tensor,
    y: &Tensor,
) -> Result<(Var, Var), ObjectiveError> {
    if x.rows() == 0 || y.rows() == 0 {
        return Err(ObjectiveError::EmptyBatch);
    }
    let xv = graph.input(x.clone());
    let yv = graph.input(y.clone());
    let fake = generator.forward(graph, xv)?;
    let disc_loss = discriminator_loss(graph, discriminator, yv, fake)?;
    let gen_loss = generator_adversarial_loss(graph, discriminator, fake)?;
    Ok((disc_loss, gen_loss))
}

/// Mean over anchors of `||g(x_l) - y_l||_2^2`.
pub fn anchor_loss(
    graph: &mut Graph,
    generator: &BoundMlp,
    anchors: &AnchorSet,
) -> Result<Var, ObjectiveError> {
    if anchors.is_empty() {
        return Err(ObjectiveError::NoAnchors);
    }
    let d_in = generator.sizes[0];
    let d_out = *generator.sizes.last().expect("sizes");
    for (index, (x, y)) in anchors.pairs.iter().enumerate() {
        if x.len() != d_in {
            return Err(ObjectiveError::AnchorShape {
                index,
                expected: d_in,
                got: x.len(),
            });
        }
        if y.len() != d_out {
            return Err(ObjectiveError::AnchorShape {
                index,
                expected: d_out,
                got: y.len(),
            });
        }
    }
    let xs = graph.input(anchors.sources());
    let ys = graph.input(anchors.targets());
    let pred = generator.forward(graph, xs)?;
    let resid = graph.sub(pred, ys)?;
    let sq = graph.square(resid)?;
    let total = graph.sum(sq)?;
    Ok(graph.scale(total, 1.0 / anchors.len() as f64)?)
}

/// Mean over the batch of `||f(g(x)) - x||_1`, given `translated = g(x)`.
pub fn inv_loss_from_output(
    graph: &mut Graph,
    translated: Var,
    reconstructor: &BoundMlp,
    x: Var,
) -> Result<Var, ObjectiveError> {
    let n = graph.value(x).rows();
    if n == 0 {
        return Err(ObjectiveError::EmptyBatch);
    }
    let back = reconstructor.forward(graph, translated)?;
    let resid = graph.sub(back, x)?;
    let total = graph.abs_sum(resid)?;
    Ok(graph.scale(total, 1.0 / n as f64)?)
}

pub fn inv_loss(
    graph: &mut Graph,
    generator: &BoundMlp,
    reconstructor: &BoundMlp,
    x: &Tensor,
) -> Result<Var, ObjectiveError> {
    let xv = graph.input(x.clone());
    let translated = generator.forward(graph, xv)?;
    inv_loss_from_output(graph, translated, reconstructor, xv)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SparsityMode {
    /// Batch mean of `||J(x)||_1` from the analytic per-layer product.
    ExactJacobianL1,
    /// Batch mean of the forward-difference surrogate under fresh sparse probes.
    MaskedFiniteDifference,
}

impl SparsityMode {
    pub fn name(self) -> &'static str {
        match self {
            SparsityMode::ExactJacobianL1 => "exact-jacobian-l1",
            SparsityMode::MaskedFiniteDifference => "masked-fd",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "exact-jacobian-l1" => Some(SparsityMode::ExactJacobianL1),
            "masked-fd" => Some(SparsityMode::MaskedFiniteDifference),
            _ => None,
        }
    }
}

pub fn sparsity_loss<R: Rng + ?Sized>(
    graph: &mut Graph,
    model: &MlpModel,
    bound: &BoundMlp,
    x: &Tensor,
    spec: &ProbeSpec,
    mode: SparsityMode,
    rng: &mut R,
) -> Result<Var, ObjectiveError> {
    if x.rows() == 0 {
        return Err(ObjectiveError::EmptyBatch);
    }
    match mode {
        SparsityMode::ExactJacobianL1 => Ok(jacobian_l1_mean_graph(graph, model, bound, x)?),
        SparsityMode::MaskedFiniteDifference => {
            spec.validate()?;
            if spec.dim != x.cols() {
                return Err(SparsityError::InvalidSpec(format!(
                    "probe dimension {} differs from data dimension {}",
                    spec.dim,
                    x.cols()
                ))
                .into());
            }
            let reps = spec.probes_per_sample;
            let mut xs = Vec::with_capacity(x.len() * reps);
            let mut zs = Vec::with_capacity(x.len() * reps);
            for r in 0..x.rows() {
                for _ in 0..reps {
                    xs.extend_from_slice(x.row_slice(r));
                    zs.extend(draw_probe(spec, rng).z);
                }
            }
            let rows = x.rows() * reps;
            let xs = Tensor::new(rows, x.cols(), xs)?;
            let zs = Tensor::new(rows, x.cols(), zs)?;
            Ok(fd_sparsity_batch_graph(graph, bound, &xs, &zs, spec.delta)?)
        }
    }
}

/// Nodes of the individual generator-side loss terms.
#[derive(Clone, Copy, Debug)]
pub struct LossParts {
    pub adversarial: Var,
    pub anchor: Option<Var>,
    pub sparsity: Option<Var>,
    pub inv: Option<Var>,
}

/// `adversarial + λ_anch anchor + λ_sp sparsity + λ_inv inv`; terms with zero
/// weight are skipped.
pub fn total_generator_loss(
    graph: &mut Graph,
    parts: &LossParts,
    weights: &LossWeights,
) -> Result<Var, ObjectiveError> {
    weights.validate()?;
    let mut total = parts.adversarial;
    for (name, weight, part) in [
        ("anchor", weights.anchor, parts.anchor),
        ("sparsity", weights.sparsity, parts.sparsity),
        ("inv", weights.inv, parts.inv),
    ] {
        if weight == 0.0 {
            continue;
        }
        let part = part.ok_or(ObjectiveError::MissingPart(name))?;
        let scaled = graph.scale(part, weight)?;
        total = graph.add(total, scaled)?;
    }
    Ok(total)
}

#[cfg(test)]
mod tests;
