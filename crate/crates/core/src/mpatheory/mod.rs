//! One-dimensional measure-preserving automorphisms (MPAs) and Monte Carlo
//! checks of the facts that make them the only obstruction to identifiability:
//! a non-identity MPA has exactly one fixed point, a permuted family of them
//! fixes a null set, and a 1D law admits exactly two monotone transports onto
//! another.

mod ks;

use std::fmt;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use statrs::distribution::ContinuousCDF;
use thiserror::Error;

use crate::rng::stream_rng;

pub use ks::{ks_critical_value, ks_two_sample, EmpiricalCdf};

#[derive(Debug, Error, PartialEq)]
pub enum MpaError {
    #[error("F^-1(F({x})) = {back}, off by more than {tolerance}")]
    InverseConsistency { x: f64, back: f64, tolerance: f64 },
    #[error("{0} is not a permutation")]
    NotPermutation(String),
    #[error("the identity permutation fixes every point; the probe needs a non-identity permutation")]
    IdentityPermutation,
    #[error("permutation has {perm} entries but {maps} coordinate maps were given")]
    LengthMismatch { perm: usize, maps: usize },
    #[error("invalid interval ({0}, {1})")]
    BadInterval(f64, f64),
    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
}

/// `x ↦ F^{-1}(1 - F(x))` for a strictly increasing CDF.
#[derive(Clone)]
pub struct CdfConjugate {
    name: String,
    cdf: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    /// `1 - F(x)`, kept separate so tails avoid cancellation.
    survival: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    quantile: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
}

impl fmt::Debug for CdfConjugate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "CdfConjugate({})", self.name)
    }
}

impl CdfConjugate {
    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn apply(&self, x: f64) -> f64 {
        (self.quantile)((self.survival)(x))
    }

    pub fn cdf(&self, x: f64) -> f64 {
        (self.cdf)(x)
    }
}

/// Builds the conjugated reflection from `F` and `F^{-1}`, verifying
/// `F^{-1}(F(x)) = x` at the supplied points.
pub fn cdf_conjugate_mpa(
    name: impl Into<String>,
    cdf: impl Fn(f64) -> f64 + Send + Sync + 'static,
    quantile: impl Fn(f64) -> f64 + Send + Sync + 'static,
    check_points: &[f64],
    tolerance: f64,
) -> Result<CdfConjugate, MpaError> {
    let cdf: Arc<dyn Fn(f64) -> f64 + Send + Sync> = Arc::new(cdf);
    let survival = {
        let cdf = cdf.clone();
        Arc::new(move |x: f64| 1.0 - cdf(x))
    };
    let m = CdfConjugate {
        name: name.into(),
        cdf,
        survival,
        quantile: Arc::new(quantile),
    };
    check_inverse(&m, check_points, tolerance)?;
    Ok(m)
}

/// Same construction from a `statrs` distribution, using its survival
/// function for the complement.
pub fn cdf_conjugate_of<D>(
    name: impl Into<String>,
    dist: D,
    check_points: &[f64],
    tolerance: f64,
) -> Result<CdfConjugate, MpaError>
where
    D: ContinuousCDF<f64, f64> + Clone + Send + Sync + 'static,
{
    let (a, b, c) = (dist.clone(), dist.clone(), dist);
    let m = CdfConjugate {
        name: name.into(),
        cdf: Arc::new(move |x| a.cdf(x)),
        survival: Arc::new(move |x| b.sf(x)),
        quantile: Arc::new(move |p| c.inverse_cdf(p)),
    };
    check_inverse(&m, check_points, tolerance)?;
    Ok(m)
}

fn check_inverse(m: &CdfConjugate, points: &[f64], tolerance: f64) -> Result<(), MpaError> {
    for &x in points {
        let back = (m.quantile)((m.cdf)(x));
        if !((back - x).abs() <= tolerance) {
            return Err(MpaError::InverseConsistency { x, back, tolerance });
        }
    }
    Ok(())
}

#[derive(Clone, Debug)]
pub enum MpaKind {
    Identity,
    /// `x ↦ 2μ - x`, an MPA of any law symmetric about `μ`.
    Reflection(f64),
    CdfConjugate(CdfConjugate),
    /// `x ↦ x + c`. Never an MPA of a probability law when `c ≠ 0`; kept as a
    /// negative control and as a coordinate map for permuted families.
    Translation(f64),
}

#[derive(Clone, Debug)]
pub struct MpaSpec {
    pub kind: MpaKind,
    pub domain: (f64, f64),
}

impl MpaSpec {
    pub fn new(kind: MpaKind, domain: (f64, f64)) -> Result<Self, MpaError> {
        let (lo, hi) = domain;
        if !(lo < hi) {
            return Err(MpaError::BadInterval(lo, hi));
        }
        Ok(Self { kind, domain })
    }

    pub fn apply(&self, x: f64) -> f64 {
        match &self.kind {
            MpaKind::Identity => x,
            MpaKind::Reflection(mu) => 2.0 * mu - x,
            MpaKind::CdfConjugate(c) => c.apply(x),
            MpaKind::Translation(c) => x + c,
        }
    }

    pub fn label(&self) -> String {
        match &self.kind {
            MpaKind::Identity => "identity".into(),
            MpaKind::Reflection(mu) => format!("reflection({mu})"),
            MpaKind::CdfConjugate(c) => format!("cdf-conjugate({})", c.name()),
            MpaKind::Translation(c) => format!("translation({c})"),
        }
    }
}

pub fn reflection_mpa(mu: f64) -> impl Fn(f64) -> f64 + Copy {
    move |x| 2.0 * mu - x
}

/// Smallest sample size accepted by [`pushforward_ks_check`].
pub const MIN_KS_SAMPLES: usize = 1000;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KsCheck {
    pub statistic: f64,
    pub n: usize,
}

/// KS statistic between `n` draws of `x` and `m` applied to `n` further,
/// independent draws.
pub fn pushforward_ks_check<S, M>(sampler: S, map: M, n: usize, seed: u64) -> Result<KsCheck, MpaError>
where
    S: Fn(&mut ChaCha8Rng) -> f64,
    M: Fn(f64) -> f64,
{
    if n < MIN_KS_SAMPLES {
        return Err(MpaError::TooFewSamples {
            needed: MIN_KS_SAMPLES,
            got: n,
        });
    }
    let mut rng_a = stream_rng(seed, 0);
    let mut rng_b = stream_rng(seed, 1);
    let a: Vec<f64> = (0..n).map(|_| sampler(&mut rng_a)).collect();
    let b: Vec<f64> = (0..n).map(|_| map(sampler(&mut rng_b))).collect();
    Ok(KsCheck {
        statistic: ks_two_sample(&a, &b),
        n,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct FixedPointReport {
    /// `m(x) = x` at every grid point; no isolated fixed points are listed.
    pub identity: bool,
    pub points: Vec<f64>,
}

impl FixedPointReport {
    pub fn count(&self) -> usize {
        self.points.len()
    }
}

/// Scans `m(x) - x` on an even grid, refines each sign change by bisection
/// and merges roots closer than `tolerance`.
pub fn count_fixed_points<M: Fn(f64) -> f64>(
    map: M,
    interval: (f64, f64),
    grid: usize,
    tolerance: f64,
) -> Result<FixedPointReport, MpaError> {
    let (lo, hi) = interval;
    if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(MpaError::BadInterval(lo, hi));
    }
    let grid = grid.max(2);
    let h = |x: f64| map(x) - x;
    let xs: Vec<f64> = (0..grid)
        .map(|i| lo + (hi - lo) * i as f64 / (grid - 1) as f64)
        .collect();
    let hs: Vec<f64> = xs.iter().map(|&x| h(x)).collect();
    if hs.iter().all(|v| v.abs() <= 1e-12) {
        return Ok(FixedPointReport {
            identity: true,
            points: Vec::new(),
        });
    }
    let mut points: Vec<f64> = Vec::new();
    for i in 0..grid {
        if hs[i] == 0.0 {
            points.push(xs[i]);
        }
        if i + 1 < grid && hs[i] * hs[i + 1] < 0.0 {
            let (mut a, mut b, mut ha) = (xs[i], xs[i + 1], hs[i]);
            while b - a > tolerance {
                let mid = 0.5 * (a + b);
                let hm = h(mid);
                if hm == 0.0 {
                    a = mid;
                    b = mid;
                    break;
                }
                if (hm < 0.0) == (ha < 0.0) {
                    a = mid;
                    ha = hm;
                } else {
                    b = mid;
                }
            }
            points.push(0.5 * (a + b));
        }
    }
    points.sort_by(f64::total_cmp);
    points.dedup_by(|b, a| (*b - *a).abs() <= tolerance);
    Ok(FixedPointReport {
        identity: false,
        points,
    })
}

/// `x ↦ h(Πx)` with `(Πx)_i = x_{π(i)}` and `h` applied coordinatewise.
#[derive(Clone, Debug)]
pub struct PermutedMpa {
    permutation: Vec<usize>,
    maps: Vec<MpaSpec>,
}

impl PermutedMpa {
    pub fn new(permutation: Vec<usize>, maps: Vec<MpaSpec>) -> Result<Self, MpaError> {
        let mut seen = vec![false; permutation.len()];
        for &p in &permutation {
            if p >= permutation.len() || seen[p] {
                return Err(MpaError::NotPermutation(format!("{permutation:?}")));
            }
            seen[p] = true;
        }
        if permutation.len() != maps.len() {
            return Err(MpaError::LengthMismatch {
                perm: permutation.len(),
                maps: maps.len(),
            });
        }
        Ok(Self { permutation, maps })
    }

    pub fn dim(&self) -> usize {
        self.permutation.len()
    }

    pub fn is_identity_permutation(&self) -> bool {
        self.permutation.iter().enumerate().all(|(i, &p)| i == p)
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.permutation
            .iter()
            .zip(&self.maps)
            .map(|(&p, m)| m.apply(x[p]))
            .collect()
    }
}

/// Smallest sample size accepted by [`permutation_fixed_measure_probe`].
pub const MIN_PROBE_SAMPLES: usize = 10_000;

/// Fraction of `points` with `||h(Πx) - x||_∞ < ε`.
pub fn fixed_fraction(pmpa: &PermutedMpa, points: &[Vec<f64>], epsilon: f64) -> f64 {
    let hits = points
        .iter()
        .filter(|x| {
            pmpa.apply(x)
                .iter()
                .zip(x.iter())
                .all(|(a, b)| (a - b).abs() < epsilon)
        })
        .count();
    hits as f64 / points.len() as f64
}

pub fn permutation_fixed_measure_probe<S>(
    pmpa: &PermutedMpa,
    sampler: S,
    n: usize,
    epsilon: f64,
    seed: u64,
) -> Result<f64, MpaError>
where
    S: Fn(&mut ChaCha8Rng) -> Vec<f64>,
{
    if pmpa.is_identity_permutation() {
        return Err(MpaError::IdentityPermutation);
    }
    if n < MIN_PROBE_SAMPLES {
        return Err(MpaError::TooFewSamples {
            needed: MIN_PROBE_SAMPLES,
            got: n,
        });
    }
    let mut rng = stream_rng(seed, 0);
    let points: Vec<Vec<f64>> = (0..n).map(|_| sampler(&mut rng)).collect();
    Ok(fixed_fraction(pmpa, &points, epsilon))
}

#[derive(Clone, Debug, PartialEq)]
pub struct FiniteTranslationsReport {
    pub ks_increasing: f64,
    pub ks_decreasing: f64,
    pub threshold: f64,
    /// Points where the two transports agree, found on a grid over the
    /// central 98% of the source law.
    pub crossings: Vec<f64>,
}

impl FiniteTranslationsReport {
    pub fn both_transport(&self) -> bool {
        self.ks_increasing < self.threshold && self.ks_decreasing < self.threshold
    }
}

/// The increasing and decreasing transports of `p1` onto `p2`, built from
/// empirical CDFs.
#[derive(Clone, Debug)]
pub struct Transports {
    pub source: EmpiricalCdf,
    pub target: EmpiricalCdf,
}

impl Transports {
    pub fn increasing(&self, x: f64) -> f64 {
        self.target.quantile(self.source.cdf(x))
    }

    pub fn decreasing(&self, x: f64) -> f64 {
        self.target.quantile(1.0 - self.source.cdf(x))
    }
}

pub fn fit_transports<S1, S2>(p1: &S1, p2: &S2, n: usize, rng: &mut ChaCha8Rng) -> Transports
where
    S1: Fn(&mut ChaCha8Rng) -> f64,
    S2: Fn(&mut ChaCha8Rng) -> f64,
{
    Transports {
        source: EmpiricalCdf::new((0..n).map(|_| p1(rng)).collect()),
        target: EmpiricalCdf::new((0..n).map(|_| p2(rng)).collect()),
    }
}

/// Fits both monotone transports on one set of draws, then pushes fresh `p1`
/// draws through each and compares with fresh `p2` draws. The threshold is
/// twice the 5% two-sample KS critical value, leaving room for the error of
/// the fitted CDFs.
pub fn finite_translations_check<S1, S2>(
    p1: S1,
    p2: S2,
    n: usize,
    seed: u64,
) -> Result<FiniteTranslationsReport, MpaError>
where
    S1: Fn(&mut ChaCha8Rng) -> f64,
    S2: Fn(&mut ChaCha8Rng) -> f64,
{
    if n < MIN_KS_SAMPLES {
        return Err(MpaError::TooFewSamples {
            needed: MIN_KS_SAMPLES,
            got: n,
        });
    }
    let maps = fit_transports(&p1, &p2, n, &mut stream_rng(seed, 0));
    let mut rng = stream_rng(seed, 1);
    let fresh: Vec<f64> = (0..n).map(|_| p1(&mut rng)).collect();
    let target: Vec<f64> = (0..n).map(|_| p2(&mut rng)).collect();
    let up: Vec<f64> = fresh.iter().map(|&x| maps.increasing(x)).collect();
    let down: Vec<f64> = fresh.iter().map(|&x| maps.decreasing(x)).collect();

    let lo = maps.source.quantile(0.01);
    let hi = maps.source.quantile(0.99);
    let diff = |x: f64| maps.increasing(x) - maps.decreasing(x);
    let grid = 2000;
    let mut crossings = Vec::new();
    let mut prev = (lo, diff(lo));
    for i in 1..=grid {
        let x = lo + (hi - lo) * i as f64 / grid as f64;
        let d = diff(x);
        if prev.1 == 0.0 || prev.1 * d < 0.0 {
            crossings.push(if prev.1 == 0.0 { prev.0 } else { 0.5 * (prev.0 + x) });
        }
        prev = (x, d);
    }
    Ok(FiniteTranslationsReport {
        ks_increasing: ks_two_sample(&up, &target),
        ks_decreasing: ks_two_sample(&down, &target),
        threshold: 2.0 * ks_critical_value(n, n),
        crossings,
    })
}

/// Random permutation of `0..dim` that is not the identity (`dim ≥ 2`).
pub fn random_nonidentity_permutation<R: Rng>(dim: usize, rng: &mut R) -> Vec<usize> {
    assert!(dim >= 2, "only the identity permutes one coordinate");
    loop {
        let mut p: Vec<usize> = (0..dim).collect();
        p.shuffle(rng);
        if p.iter().enumerate().any(|(i, &v)| i != v) {
            return p;
        }
    }
}
