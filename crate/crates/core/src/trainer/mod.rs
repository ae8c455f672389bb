//! Alternating adversarial training of the generator/reconstructor pair
//! against a discriminator, plus evaluation and multi-run harnesses.

mod ablation;
mod metrics;

use std::io::Write;
use std::time::{Duration, Instant};

use rand::{Rng, RngCore};
use thiserror::Error;

use crate::adcore::{Graph, Tensor};
use crate::nets::{adam_step, init_mlp, AdamConfig, AdamState, MlpModel, NetError, OutputActivation};
use crate::objective::{
    anchor_loss, discriminator_loss, generator_adversarial_loss, inv_loss_from_output,
    sparsity_loss, total_generator_loss, AnchorSet, LossParts, LossWeights, ObjectiveError,
    SparsityMode,
};
use crate::rng::stream_rng;
use crate::sparsity::{ProbeSpec, SparsityError};
use crate::synthdata::{gather_rows, shuffle_unpaired, PairedDataset, SynthError};

pub use ablation::{
    anchor_sensitivity, run_ablation, AblationCase, AblationRow, AblationTable, SensitivityReport,
    SensitivityRow,
};
pub use metrics::{
    energy_distance, median, per_sample_translation_error, translation_error, TeSummary,
};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("{0} is empty")]
    EmptyData(&'static str),
    #[error("config expects {expected} anchors but {got} were supplied")]
    AnchorCount { expected: usize, got: usize },
    #[error("non-finite value at iteration {iteration}: {cause}")]
    NonFinite {
        iteration: usize,
        cause: String,
        /// Models as they were before the failing iteration.
        last_good: Box<TrainedModels>,
        trace: Vec<LossRecord>,
    },
    #[error(transparent)]
    Objective(#[from] ObjectiveError),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Sparsity(#[from] SparsityError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub weights: LossWeights,
    pub anchor_count: usize,
    pub sparsity_mode: SparsityMode,
    pub probe: ProbeSpec,
    pub adam: AdamConfig,
    pub batch_size: usize,
    pub iterations: usize,
    pub disc_steps: usize,
    pub seed: u64,
    pub generator_hidden: Vec<usize>,
    pub discriminator_hidden: Vec<usize>,
    /// Record the energy-distance diagnostic every this many iterations
    /// (0 disables it).
    pub diagnostic_every: usize,
    pub diagnostic_samples: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            weights: LossWeights::default(),
            anchor_count: 1,
            sparsity_mode: SparsityMode::ExactJacobianL1,
            probe: ProbeSpec {
                dim: 2,
                mask_size: 1,
                delta: 0.01,
                probes_per_sample: 1,
            },
            adam: AdamConfig::default(),
            batch_size: 1024,
            iterations: 7000,
            disc_steps: 1,
            seed: 0,
            generator_hidden: vec![32, 32],
            discriminator_hidden: vec![64, 64],
            diagnostic_every: 0,
            diagnostic_samples: 256,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        self.weights.validate()?;
        let bad = |m: &str| Err(TrainError::InvalidConfig(m.to_string()));
        if self.batch_size == 0 {
            return bad("batch size must be positive");
        }
        if self.disc_steps == 0 {
            return bad("need at least one discriminator step per generator step");
        }
        if self.generator_hidden.contains(&0) || self.discriminator_hidden.contains(&0) {
            return bad("hidden widths must be positive");
        }
        if !(self.adam.learning_rate > 0.0) {
            return bad("learning rate must be positive");
        }
        if self.weights.anchor > 0.0 && self.anchor_count == 0 {
            return bad("anchor weight is positive but the anchor count is zero");
        }
        if self.weights.sparsity > 0.0 && self.sparsity_mode == SparsityMode::MaskedFiniteDifference {
            self.probe.validate()?;
        }
        if self.diagnostic_every > 0 && self.diagnostic_samples == 0 {
            return bad("diagnostic needs at least one sample");
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainedModels {
    pub generator: MlpModel,
    pub reconstructor: MlpModel,
    pub discriminator: MlpModel,
}

impl TrainedModels {
    /// Freshly initialized networks, deterministic in the run seed.
    pub fn init(config: &TrainConfig, dim: usize) -> Result<Self, TrainError> {
        let mut seeds = stream_rng(config.seed, 0);
        let sizes = |hidden: &[usize], out: usize| {
            let mut s = vec![dim];
            s.extend_from_slice(hidden);
            s.push(out);
            s
        };
        let generator = init_mlp(
            &sizes(&config.generator_hidden, dim),
            OutputActivation::Identity,
            seeds.next_u64(),
        )?;
        let reconstructor = init_mlp(
            &sizes(&config.generator_hidden, dim),
            OutputActivation::Identity,
            seeds.next_u64(),
        )?;
        let discriminator = init_mlp(
            &sizes(&config.discriminator_hidden, 1),
            OutputActivation::Sigmoid,
            seeds.next_u64(),
        )?;
        Ok(Self {
            generator,
            reconstructor,
            discriminator,
        })
    }
}

/// Losses of one iteration; optional terms are `None` when not built.
#[derive(Clone, Debug, PartialEq)]
pub struct LossRecord {
    pub iteration: usize,
    pub discriminator: f64,
    pub adversarial: f64,
    pub anchor: Option<f64>,
    pub sparsity: Option<f64>,
    pub inv: Option<f64>,
    pub total: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunReport {
    pub config: TrainConfig,
    pub trace: Vec<LossRecord>,
    /// `(iteration, energy distance between g(x) and y on held-out rows)`.
    pub diagnostics: Vec<(usize, f64)>,
    pub te: Option<TeSummary>,
    /// Mean `||g(x_l) - y_l||_2` over the anchors after training.
    pub anchor_residual: Option<f64>,
    pub wall_time: Duration,
}

impl RunReport {
    /// Loss trace as CSV; absent terms are left blank.
    pub fn write_trace_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "iteration,discriminator,adversarial,anchor,sparsity,inv,total")?;
        let opt = |v: Option<f64>| v.map(|v| format!("{v:.16e}")).unwrap_or_default();
        for r in &self.trace {
            writeln!(
                out,
                "{},{:.16e},{:.16e},{},{},{},{:.16e}",
                r.iteration,
                r.discriminator,
                r.adversarial,
                opt(r.anchor),
                opt(r.sparsity),
                opt(r.inv),
                r.total
            )?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainOutcome {
    pub models: TrainedModels,
    pub report: RunReport,
}

fn sample_batch<R: Rng>(pool: &Tensor, batch: usize, rng: &mut R) -> Tensor {
    let idx: Vec<usize> = (0..batch).map(|_| rng.random_range(0..pool.rows())).collect();
    gather_rows(pool, &idx)
}

fn head_rows(t: &Tensor, n: usize) -> Tensor {
    let idx: Vec<usize> = (0..n.min(t.rows())).collect();
    gather_rows(t, &idx)
}

/// Mean Euclidean anchor residual of `generator`.
pub fn anchor_residual(generator: &MlpModel, anchors: &AnchorSet) -> Result<Option<f64>, TrainError> {
    if anchors.is_empty() {
        return Ok(None);
    }
    let pred = generator.predict(&anchors.sources())?;
    let targets = anchors.targets();
    let total: f64 = (0..anchors.len())
        .map(|i| {
            pred.row_slice(i)
                .iter()
                .zip(targets.row_slice(i))
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
                .sqrt()
        })
        .sum();
    Ok(Some(total / anchors.len() as f64))
}

struct Optimizers {
    generator: AdamState,
    reconstructor: AdamState,
    discriminator: AdamState,
}

fn discriminator_step<R: Rng>(
    models: &mut TrainedModels,
    opt: &mut AdamState,
    xs: &Tensor,
    ys: &Tensor,
    batch: usize,
    rng: &mut R,
) -> Result<f64, ObjectiveError> {
    let xb = sample_batch(xs, batch, rng);
    let yb = sample_batch(ys, batch, rng);
    let fake = models.generator.predict(&xb)?;
    let mut g = Graph::new();
    let db = models.discriminator.bind(&mut g);
    let real = g.input(yb);
    let fake = g.input(fake);
    let loss = discriminator_loss(&mut g, &db, real, fake)?;
    let grads = db.gradients(&g.backward(loss).map_err(ObjectiveError::from)?);
    if !grads.is_finite() {
        return Err(crate::adcore::AdError::NonFinite { op: "discriminator gradient" }.into());
    }
    adam_step(&mut models.discriminator, &grads, opt)?;
    Ok(g.value(loss).item())
}

#[allow(clippy::too_many_arguments)]
fn generator_step<R: Rng, P: Rng>(
    config: &TrainConfig,
    models: &mut TrainedModels,
    opts: &mut Optimizers,
    anchors: &AnchorSet,
    xs: &Tensor,
    iteration: usize,
    disc_loss: f64,
    batch_rng: &mut R,
    probe_rng: &mut P,
) -> Result<LossRecord, ObjectiveError> {
    let w = &config.weights;
    let xb = sample_batch(xs, config.batch_size, batch_rng);
    let mut g = Graph::new();
    let gb = models.generator.bind(&mut g);
    let rb = models.reconstructor.bind(&mut g);
    let db = models.discriminator.bind(&mut g);
    let xv = g.input(xb.clone());
    let fake = gb.forward(&mut g, xv)?;
    let adversarial = generator_adversarial_loss(&mut g, &db, fake)?;
    let anchor = if w.anchor > 0.0 {
        Some(anchor_loss(&mut g, &gb, anchors)?)
    } else {
        None
    };
    let inv = if w.inv > 0.0 {
        Some(inv_loss_from_output(&mut g, fake, &rb, xv)?)
    } else {
        None
    };
    let sparsity = if w.sparsity > 0.0 {
        Some(sparsity_loss(
            &mut g,
            &models.generator,
            &gb,
            &xb,
            &config.probe,
            config.sparsity_mode,
            probe_rng,
        )?)
    } else {
        None
    };
    let parts = LossParts {
        adversarial,
        anchor,
        sparsity,
        inv,
    };
    let total = total_generator_loss(&mut g, &parts, w)?;
    let grads = g.backward(total)?;
    let gen_grads = gb.gradients(&grads);
    let rec_grads = rb.gradients(&grads);
    if !gen_grads.is_finite() || !rec_grads.is_finite() {
        return Err(crate::adcore::AdError::NonFinite { op: "generator gradient" }.into());
    }
    adam_step(&mut models.generator, &gen_grads, &mut opts.generator)?;
    if inv.is_some() {
        adam_step(&mut models.reconstructor, &rec_grads, &mut opts.reconstructor)?;
    }
    let val = |v: Option<crate::adcore::Var>| v.map(|v| g.value(v).item());
    Ok(LossRecord {
        iteration,
        discriminator: disc_loss,
        adversarial: g.value(adversarial).item(),
        anchor: val(anchor),
        sparsity: val(sparsity),
        inv: val(inv),
        total: g.value(total).item(),
    })
}

/// Runs the alternating updates. `monitor`, when given, supplies held-out
/// aligned pairs for the diagnostic and the final translation error; it never
/// influences the updates.
pub fn train(
    config: &TrainConfig,
    train_data: &PairedDataset,
    anchors: &AnchorSet,
    monitor: Option<&PairedDataset>,
) -> Result<TrainOutcome, TrainError> {
    config.validate()?;
    if train_data.is_empty() {
        return Err(TrainError::EmptyData("training set"));
    }
    if config.weights.anchor > 0.0 && anchors.len() != config.anchor_count {
        return Err(TrainError::AnchorCount {
            expected: config.anchor_count,
            got: anchors.len(),
        });
    }
    let started = Instant::now();
    let dim = train_data.dim();
    let mut models = TrainedModels::init(config, dim)?;
    let mut opts = Optimizers {
        generator: AdamState::new(&models.generator, config.adam),
        reconstructor: AdamState::new(&models.reconstructor, config.adam),
        discriminator: AdamState::new(&models.discriminator, config.adam),
    };
    let (xs, ys) = shuffle_unpaired(train_data, config.seed);
    let mut batch_rng = stream_rng(config.seed, 1);
    let mut probe_rng = stream_rng(config.seed, 2);

    let diag_sets = match monitor {
        Some(m) if config.diagnostic_every > 0 => {
            if m.is_empty() {
                return Err(TrainError::EmptyData("monitor set"));
            }
            Some((
                head_rows(&m.x, config.diagnostic_samples),
                head_rows(&m.y, config.diagnostic_samples),
            ))
        }
        _ => None,
    };
    let diagnose = |models: &TrainedModels| -> Result<Option<f64>, TrainError> {
        match &diag_sets {
            Some((x, y)) => Ok(Some(energy_distance(&models.generator.predict(x)?, y))),
            None => Ok(None),
        }
    };

    let mut trace = Vec::with_capacity(config.iterations);
    let mut diagnostics = Vec::new();
    for iteration in 0..config.iterations {
        if config.diagnostic_every > 0 && iteration % config.diagnostic_every == 0 {
            if let Some(e) = diagnose(&models)? {
                diagnostics.push((iteration, e));
            }
        }
        let last_good = models.clone();
        let step = (|| {
            let mut disc_loss = 0.0;
            for _ in 0..config.disc_steps {
                disc_loss = discriminator_step(
                    &mut models,
                    &mut opts.discriminator,
                    &xs,
                    &ys,
                    config.batch_size,
                    &mut batch_rng,
                )?;
            }
            generator_step(
                config,
                &mut models,
                &mut opts,
                anchors,
                &xs,
                iteration,
                disc_loss,
                &mut batch_rng,
                &mut probe_rng,
            )
        })();
        match step {
            Ok(record) if record.total.is_finite() => trace.push(record),
            Ok(record) => {
                return Err(TrainError::NonFinite {
                    iteration,
                    cause: format!("total loss {}", record.total),
                    last_good: Box::new(last_good),
                    trace,
                })
            }
            Err(e) if e.is_non_finite() => {
                return Err(TrainError::NonFinite {
                    iteration,
                    cause: e.to_string(),
                    last_good: Box::new(last_good),
                    trace,
                })
            }
            Err(e) => return Err(e.into()),
        }
    }
    if config.diagnostic_every > 0 {
        if let Some(e) = diagnose(&models)? {
            diagnostics.push((config.iterations, e));
        }
    }
    let te = monitor.map(|m| translation_error(&models.generator, m)).transpose()?;
    let anchor_residual = anchor_residual(&models.generator, anchors)?;
    Ok(TrainOutcome {
        report: RunReport {
            config: config.clone(),
            trace,
            diagnostics,
            te,
            anchor_residual,
            wall_time: started.elapsed(),
        },
        models,
    })
}
