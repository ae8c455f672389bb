use rand::Rng;
use rand_distr::StandardNormal;

use super::{JacobianMatrix, SparsityError};

/// Largest dimension for which [`q_exact_enumeration`] walks all masks.
pub const MAX_ENUMERATION_DIM: usize = 20;

/// Parameters of the sparse Gaussian probe `z = r ⊙ ε`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProbeSpec {
    pub dim: usize,
    /// Number of ones in the mask `r`.
    pub mask_size: usize,
    /// Finite-difference step used by the trainable surrogate.
    pub delta: f64,
    pub probes_per_sample: usize,
}

impl ProbeSpec {
    pub fn new(
        dim: usize,
        mask_size: usize,
        delta: f64,
        probes_per_sample: usize,
    ) -> Result<Self, SparsityError> {
        let spec = Self {
            dim,
            mask_size,
            delta,
            probes_per_sample,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), SparsityError> {
        if self.mask_size < 1 || self.mask_size > self.dim {
            return Err(SparsityError::InvalidSpec(format!(
                "mask size {} must lie in [1, {}]",
                self.mask_size, self.dim
            )));
        }
        if !(self.delta > 0.0) || !self.delta.is_finite() {
            return Err(SparsityError::InvalidSpec(format!(
                "delta must be positive, got {}",
                self.delta
            )));
        }
        if self.probes_per_sample < 1 {
            return Err(SparsityError::InvalidSpec("need at least one probe per sample".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProbeSample {
    /// 0/1 mask with exactly `mask_size` ones.
    pub mask: Vec<bool>,
    /// Positions of the ones in `mask`, ascending.
    pub support: Vec<usize>,
    pub noise: Vec<f64>,
    /// `mask ⊙ noise`.
    pub z: Vec<f64>,
}

/// Uniform mask over all `C(D, S)` subsets (partial Fisher-Yates) times an
/// independent standard normal vector.
pub fn draw_probe<R: Rng + ?Sized>(spec: &ProbeSpec, rng: &mut R) -> ProbeSample {
    let d = spec.dim;
    let mut idx: Vec<usize> = (0..d).collect();
    for i in 0..spec.mask_size {
        let j = rng.random_range(i..d);
        idx.swap(i, j);
    }
    let mut support = idx[..spec.mask_size].to_vec();
    support.sort_unstable();
    let mut mask = vec![false; d];
    for &i in &support {
        mask[i] = true;
    }
    let noise: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
    let z = mask
        .iter()
        .zip(&noise)
        .map(|(&m, &e)| if m { e } else { 0.0 })
        .collect();
    ProbeSample {
        mask,
        support,
        noise,
        z,
    }
}

/// Monte Carlo mean with its spread.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct McEstimate {
    pub mean: f64,
    /// Sample variance of the per-probe values.
    pub variance: f64,
    pub std_error: f64,
    pub samples: usize,
}

impl McEstimate {
    pub fn from_samples(values: &[f64]) -> Self {
        let n = values.len();
        assert!(n > 0, "no samples");
        let mean = values.iter().sum::<f64>() / n as f64;
        let variance = if n > 1 {
            values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64
        } else {
            0.0
        };
        Self {
            mean,
            variance,
            std_error: (variance / n as f64).sqrt(),
            samples: n,
        }
    }
}

/// `#{d : |(J z)_d| > threshold}` using only the probe's nonzero columns.
/// `jt` is the transposed Jacobian, so each column is a contiguous row.
pub(crate) fn count_active_rows(jt: &crate::adcore::Tensor, probe: &ProbeSample, threshold: f64, scratch: &mut [f64]) -> usize {
    scratch.iter_mut().for_each(|v| *v = 0.0);
    for &j in &probe.support {
        let e = probe.z[j];
        for (acc, &v) in scratch.iter_mut().zip(jt.row_slice(j)) {
            *acc += v * e;
        }
    }
    scratch.iter().filter(|v| v.abs() > threshold).count()
}

/// Monte Carlo estimate of `q(J) = (D/S) E ||J z||_0`.
pub fn q_estimate<R: Rng + ?Sized>(
    jacobian: &JacobianMatrix,
    spec: &ProbeSpec,
    num_probes: usize,
    zero_threshold: f64,
    rng: &mut R,
) -> Result<McEstimate, SparsityError> {
    spec.validate()?;
    if spec.dim != jacobian.dim() {
        return Err(SparsityError::InvalidSpec(format!(
            "probe dimension {} differs from Jacobian dimension {}",
            spec.dim,
            jacobian.dim()
        )));
    }
    if num_probes == 0 {
        return Err(SparsityError::InvalidSpec("need at least one probe".into()));
    }
    let jt = jacobian.entries().transpose();
    let scale = spec.dim as f64 / spec.mask_size as f64;
    let mut scratch = vec![0.0; spec.dim];
    let values: Vec<f64> = (0..num_probes)
        .map(|_| {
            let probe = draw_probe(spec, rng);
            scale * count_active_rows(&jt, &probe, zero_threshold, &mut scratch) as f64
        })
        .collect();
    Ok(McEstimate::from_samples(&values))
}

/// `C(n, k)` as a float.
pub fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Exact `q(J)` by walking every mask of size `S`.
///
/// With Gaussian noise a row is nonzero almost surely iff the mask meets its
/// support, so only the masks need enumerating.
pub fn q_exact_enumeration(
    jacobian: &JacobianMatrix,
    mask_size: usize,
    zero_threshold: f64,
) -> Result<f64, SparsityError> {
    let d = jacobian.dim();
    if d > MAX_ENUMERATION_DIM {
        return Err(SparsityError::TooLarge(d));
    }
    if mask_size < 1 || mask_size > d {
        return Err(SparsityError::InvalidSpec(format!(
            "mask size {mask_size} must lie in [1, {d}]"
        )));
    }
    let supports: Vec<u32> = jacobian
        .row_supports(zero_threshold)
        .iter()
        .map(|cols| cols.iter().fold(0u32, |acc, &c| acc | (1 << c)))
        .collect();

    let mut hits: u64 = 0;
    let mut masks: u64 = 0;
    // Gosper's hack: all d-bit words with mask_size bits set, in order.
    let mut mask: u32 = (1u32 << mask_size) - 1;
    let limit: u64 = 1u64 << d;
    while (mask as u64) < limit {
        masks += 1;
        hits += supports.iter().filter(|&&t| t & mask != 0).count() as u64;
        let c = mask & mask.wrapping_neg();
        let r = mask.wrapping_add(c);
        if r == 0 {
            break;
        }
        mask = (((r ^ mask) >> 2) / c) | r;
    }
    Ok(d as f64 / mask_size as f64 * hits as f64 / masks as f64)
}

/// `1 - (S-1)(T-1) / (2(D-1))`, taken as 1 when `D = 1`.
pub fn lower_bound_factor(dim: usize, mask_size: usize, max_row_support: usize) -> f64 {
    if dim <= 1 {
        return 1.0;
    }
    let s = mask_size as f64;
    let t = max_row_support.max(1) as f64;
    1.0 - (s - 1.0) * (t - 1.0) / (2.0 * (dim as f64 - 1.0))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SandwichCheck {
    pub holds: bool,
    pub lower: f64,
    pub upper: f64,
    pub max_row_support: usize,
    /// Monte Carlo allowance applied on both sides (0 for exact values).
    pub slack: f64,
}

/// Checks `||J||_0 >= q >= (1 - (S-1)(T-1)/(2(D-1))) ||J||_0`.
///
/// Pass `mc_std_error` for Monte Carlo values; the interval then widens by
/// three standard errors on each side.
pub fn check_sandwich_bound(
    jacobian: &JacobianMatrix,
    mask_size: usize,
    q_value: f64,
    mc_std_error: Option<f64>,
    zero_threshold: f64,
) -> SandwichCheck {
    let upper = jacobian.l0(zero_threshold) as f64;
    let t = jacobian.max_row_support(zero_threshold);
    let lower = lower_bound_factor(jacobian.dim(), mask_size, t) * upper;
    let slack = mc_std_error.map_or(0.0, |se| 3.0 * se);
    let round_off = 1e-9 * upper.max(1.0);
    let holds = q_value >= lower - slack - round_off && q_value <= upper + slack + round_off;
    SandwichCheck {
        holds,
        lower,
        upper,
        max_row_support: t,
        slack,
    }
}
