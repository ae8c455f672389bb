//! Synthetic 2D transfer task: `y` has correlated uniform coordinates and the
//! source is `x = t cos(Ay) + Ay` for a non-identity coordinate permutation `A`.

mod io;

use rand::seq::{index, SliceRandom};
use rand::Rng;
use thiserror::Error;

use crate::adcore::Tensor;
use crate::objective::AnchorSet;
use crate::rng::stream_rng;

pub use io::{read_dataset, read_meta, write_dataset, write_meta, DATA_DIM};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("requested {requested} anchors from a dataset of {available}")]
    TooManyAnchors { requested: usize, available: usize },
    #[error("malformed dataset file {path}: {reason}")]
    Format { path: String, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TMode {
    /// One scale drawn for the whole dataset.
    PerDataset,
    /// A fresh scale for every sample.
    PerSample,
}

impl TMode {
    pub fn name(self) -> &'static str {
        match self {
            TMode::PerDataset => "per-dataset",
            TMode::PerSample => "per-sample",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "per-dataset" => Some(TMode::PerDataset),
            "per-sample" => Some(TMode::PerSample),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthConfig {
    pub num_train: usize,
    pub num_test: usize,
    pub seed: u64,
    /// `(Ay)_i = y_{permutation[i]}`.
    pub permutation: [usize; 2],
    pub t_mode: TMode,
    pub t_range: (f64, f64),
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            num_train: 27_000,
            num_test: 3_000,
            seed: 0,
            permutation: [1, 0],
            t_mode: TMode::PerDataset,
            t_range: (0.3, 0.5),
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        if self.num_train == 0 || self.num_test == 0 {
            return Err(SynthError::InvalidConfig("sample counts must be positive".into()));
        }
        validate_permutation(self.permutation)?;
        let (lo, hi) = self.t_range;
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            return Err(SynthError::InvalidConfig(format!("bad t range ({lo}, {hi})")));
        }
        Ok(())
    }
}

fn validate_permutation(p: [usize; 2]) -> Result<(), SynthError> {
    let mut seen = [false; 2];
    for &i in &p {
        if i >= 2 || seen[i] {
            return Err(SynthError::InvalidConfig(format!("{p:?} is not a permutation")));
        }
        seen[i] = true;
    }
    if p == [0, 1] {
        return Err(SynthError::InvalidConfig("the permutation must not be the identity".into()));
    }
    Ok(())
}

/// Aligned `(x_i, y_i)` rows. Training code only ever sees them through
/// [`shuffle_unpaired`]; the alignment is reserved for anchors and evaluation.
#[derive(Clone, Debug, PartialEq)]
pub struct PairedDataset {
    pub x: Tensor,
    pub y: Tensor,
}

impl PairedDataset {
    pub fn new(x: Tensor, y: Tensor) -> Result<Self, SynthError> {
        if x.shape() != y.shape() {
            return Err(SynthError::InvalidConfig(format!(
                "x has shape {:?} but y has {:?}",
                x.shape(),
                y.shape()
            )));
        }
        Ok(Self { x, y })
    }

    pub fn len(&self) -> usize {
        self.x.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.x.rows() == 0
    }

    pub fn dim(&self) -> usize {
        self.x.cols()
    }
}

/// Everything needed to regenerate or re-verify a dataset.
#[derive(Clone, Debug, PartialEq)]
pub struct DatasetMeta {
    pub seed: u64,
    pub permutation: [usize; 2],
    pub t_mode: TMode,
    /// The shared scale in per-dataset mode.
    pub t: Option<f64>,
    pub num_train: usize,
    pub num_test: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Generated {
    pub train: PairedDataset,
    pub test: PairedDataset,
    pub meta: DatasetMeta,
}

/// `t cos(Ay) + Ay`.
pub fn source_from_target(y: [f64; 2], t: f64, permutation: [usize; 2]) -> [f64; 2] {
    let ay = [y[permutation[0]], y[permutation[1]]];
    [t * ay[0].cos() + ay[0], t * ay[1].cos() + ay[1]]
}

fn draw_split<R: Rng>(
    n: usize,
    config: &SynthConfig,
    shared_t: Option<f64>,
    rng: &mut R,
) -> PairedDataset {
    let mut xs = Vec::with_capacity(2 * n);
    let mut ys = Vec::with_capacity(2 * n);
    for _ in 0..n {
        let y1 = rng.random_range(-1.0..=1.0);
        let y2 = rng.random_range(-1.0..=1.0) + 0.5 * y1;
        let t = match shared_t {
            Some(t) => t,
            None => draw_t(config, rng),
        };
        let x = source_from_target([y1, y2], t, config.permutation);
        xs.extend_from_slice(&x);
        ys.extend_from_slice(&[y1, y2]);
    }
    PairedDataset {
        x: Tensor::new(n, 2, xs).expect("shape"),
        y: Tensor::new(n, 2, ys).expect("shape"),
    }
}

fn draw_t<R: Rng>(config: &SynthConfig, rng: &mut R) -> f64 {
    let (lo, hi) = config.t_range;
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..=hi)
    }
}

/// Deterministic in `config.seed`: the shared scale (if any) is drawn first,
/// then the training rows, then the test rows.
pub fn generate(config: &SynthConfig) -> Result<Generated, SynthError> {
    config.validate()?;
    let mut rng = stream_rng(config.seed, 0);
    let shared_t = match config.t_mode {
        TMode::PerDataset => Some(draw_t(config, &mut rng)),
        TMode::PerSample => None,
    };
    let train = draw_split(config.num_train, config, shared_t, &mut rng);
    let test = draw_split(config.num_test, config, shared_t, &mut rng);
    Ok(Generated {
        train,
        test,
        meta: DatasetMeta {
            seed: config.seed,
            permutation: config.permutation,
            t_mode: config.t_mode,
            t: shared_t,
            num_train: config.num_train,
            num_test: config.num_test,
        },
    })
}

/// Largest `|x - (t cos(Ay) + Ay)|` over the dataset.
pub fn alignment_residual(data: &PairedDataset, t: f64, permutation: [usize; 2]) -> f64 {
    (0..data.len())
        .map(|i| {
            let y = data.y.row_slice(i);
            let x = data.x.row_slice(i);
            let expect = source_from_target([y[0], y[1]], t, permutation);
            (x[0] - expect[0]).abs().max((x[1] - expect[1]).abs())
        })
        .fold(0.0, f64::max)
}

/// `count` aligned pairs drawn uniformly without replacement.
pub fn select_anchors(
    train: &PairedDataset,
    count: usize,
    seed: u64,
) -> Result<AnchorSet, SynthError> {
    if count > train.len() {
        return Err(SynthError::TooManyAnchors {
            requested: count,
            available: train.len(),
        });
    }
    let mut rng = stream_rng(seed, 1);
    let picks = index::sample(&mut rng, train.len(), count);
    Ok(AnchorSet::new(
        picks
            .iter()
            .map(|i| (train.x.row_slice(i).to_vec(), train.y.row_slice(i).to_vec()))
            .collect(),
    ))
}

/// Independently permuted copies of the two sides, so alignment is lost.
pub fn shuffle_unpaired(data: &PairedDataset, seed: u64) -> (Tensor, Tensor) {
    (
        permute_rows(&data.x, &mut stream_rng(seed, 2)),
        permute_rows(&data.y, &mut stream_rng(seed, 3)),
    )
}

fn permute_rows<R: Rng>(t: &Tensor, rng: &mut R) -> Tensor {
    let mut order: Vec<usize> = (0..t.rows()).collect();
    order.shuffle(rng);
    gather_rows(t, &order)
}

/// Rows of `t` in the order given by `indices`.
pub fn gather_rows(t: &Tensor, indices: &[usize]) -> Tensor {
    let mut data = Vec::with_capacity(indices.len() * t.cols());
    for &i in indices {
        data.extend_from_slice(t.row_slice(i));
    }
    Tensor::new(indices.len(), t.cols(), data).expect("shape")
}

#[cfg(test)]
mod tests;
