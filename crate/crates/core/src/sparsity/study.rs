use std::io::Write;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use super::probe::count_active_rows;
use super::{
    draw_probe, lower_bound_factor, q_exact_enumeration, JacobianMatrix, McEstimate, ProbeSpec,
    SparsityError, MAX_ENUMERATION_DIM,
};
use crate::adcore::Tensor;
use crate::rng::stream_rng;

/// Random `dim x dim` matrix whose rows each have `row_support` nonzeros at
/// uniformly chosen columns, with standard normal values.
pub fn random_sparse_jacobian<R: Rng + ?Sized>(
    dim: usize,
    row_support: usize,
    rng: &mut R,
) -> JacobianMatrix {
    assert!(row_support <= dim, "row support larger than dimension");
    let mut entries = Tensor::zeros(dim, dim);
    let mut cols: Vec<usize> = (0..dim).collect();
    for r in 0..dim {
        for i in 0..row_support {
            let j = rng.random_range(i..dim);
            cols.swap(i, j);
        }
        for &c in &cols[..row_support] {
            let mut v: f64 = rng.sample(StandardNormal);
            while v == 0.0 {
                v = rng.sample(StandardNormal);
            }
            entries.set(r, c, v);
        }
    }
    JacobianMatrix::from_entries(entries).expect("square by construction")
}

#[derive(Clone, Debug, PartialEq)]
pub struct StudyParams {
    pub dim: usize,
    pub row_support: usize,
    pub mask_sizes: Vec<usize>,
    pub num_matrices: usize,
    pub mc_samples: usize,
    pub seed: u64,
    pub zero_threshold: f64,
}

impl StudyParams {
    /// 20 matrices of size 1000 with 10 nonzeros per row, 500 probes each.
    pub fn reference() -> Self {
        Self {
            dim: 1000,
            row_support: 10,
            mask_sizes: vec![1, 2, 5, 10, 20, 50],
            num_matrices: 20,
            mc_samples: 500,
            seed: 0,
            zero_threshold: super::DEFAULT_ZERO_THRESHOLD,
        }
    }
}

/// One Monte Carlo estimate of `q` for one matrix and mask size.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MatrixRecord {
    pub matrix: usize,
    pub mask_size: usize,
    pub estimate: McEstimate,
    pub l0: usize,
    pub lower: f64,
    pub upper: f64,
    /// Exact `q` by mask enumeration, for dimensions small enough to walk.
    pub exact: Option<f64>,
}

impl MatrixRecord {
    pub fn relative_bias(&self) -> f64 {
        (self.estimate.mean - self.l0 as f64) / self.l0 as f64
    }

    /// Bound interval widened by three standard errors.
    pub fn within_bounds(&self) -> bool {
        let slack = 3.0 * self.estimate.std_error + 1e-9 * self.upper;
        self.estimate.mean >= self.lower - slack && self.estimate.mean <= self.upper + slack
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StudyRow {
    pub mask_size: usize,
    pub mean_rel_bias: f64,
    /// Variance of `(D/S) ||J z||_0` across probes, averaged over matrices.
    pub variance: f64,
    pub lower_bound_factor: f64,
    /// Standard error of `mean_rel_bias`.
    pub rel_bias_std_error: f64,
    /// Mean relative bias of the exact `q`, when it was enumerated.
    pub exact_rel_bias: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StudyResult {
    pub params: StudyParams,
    pub rows: Vec<StudyRow>,
    pub records: Vec<MatrixRecord>,
}

/// Bias and variance of the probe estimator as a function of mask size.
///
/// Matrix `m` is drawn from its own RNG stream and each `(m, S)` pair gets
/// another, so the result does not depend on how rayon schedules work.
pub fn probe_bias_variance_study(params: &StudyParams) -> Result<StudyResult, SparsityError> {
    if params.dim == 0 || params.num_matrices == 0 || params.mc_samples == 0 {
        return Err(SparsityError::InvalidSpec("study sizes must be positive".into()));
    }
    if params.row_support == 0 || params.row_support > params.dim {
        return Err(SparsityError::InvalidSpec(format!(
            "row support {} must lie in [1, {}]",
            params.row_support, params.dim
        )));
    }
    let specs: Vec<ProbeSpec> = params
        .mask_sizes
        .iter()
        .map(|&s| ProbeSpec::new(params.dim, s, 1e-3, 1))
        .collect::<Result<_, _>>()?;

    let per_matrix: Vec<Vec<MatrixRecord>> = (0..params.num_matrices)
        .into_par_iter()
        .map(|m| {
            let mut gen_rng = stream_rng(params.seed, 2 * m as u64);
            let j = random_sparse_jacobian(params.dim, params.row_support, &mut gen_rng);
            let jt = j.entries().transpose();
            let l0 = j.l0(params.zero_threshold);
            let t = j.max_row_support(params.zero_threshold);
            let mut scratch = vec![0.0; params.dim];
            let mut probe_rng = stream_rng(params.seed, 2 * m as u64 + 1);
            specs
                .iter()
                .map(|spec| {
                    let scale = spec.dim as f64 / spec.mask_size as f64;
                    let values: Vec<f64> = (0..params.mc_samples)
                        .map(|_| {
                            let probe = draw_probe(spec, &mut probe_rng);
                            let active = count_active_rows(&jt, &probe, params.zero_threshold, &mut scratch);
                            scale * active as f64
                        })
                        .collect();
                    let exact = if spec.dim <= MAX_ENUMERATION_DIM {
                        Some(q_exact_enumeration(&j, spec.mask_size, params.zero_threshold)?)
                    } else {
                        None
                    };
                    Ok(MatrixRecord {
                        matrix: m,
                        mask_size: spec.mask_size,
                        estimate: McEstimate::from_samples(&values),
                        l0,
                        lower: lower_bound_factor(spec.dim, spec.mask_size, t) * l0 as f64,
                        upper: l0 as f64,
                        exact,
                    })
                })
                .collect::<Result<Vec<_>, SparsityError>>()
        })
        .collect::<Result<Vec<_>, SparsityError>>()?;
    let records: Vec<MatrixRecord> = per_matrix.into_iter().flatten().collect();

    let nm = params.num_matrices as f64;
    let rows = params
        .mask_sizes
        .iter()
        .map(|&s| {
            let recs: Vec<&MatrixRecord> = records.iter().filter(|r| r.mask_size == s).collect();
            let mean_rel_bias = recs.iter().map(|r| r.relative_bias()).sum::<f64>() / nm;
            let variance = recs.iter().map(|r| r.estimate.variance).sum::<f64>() / nm;
            let se2: f64 = recs
                .iter()
                .map(|r| (r.estimate.std_error / r.l0.max(1) as f64).powi(2))
                .sum();
            let exact_rel_bias = recs
                .iter()
                .map(|r| r.exact.map(|q| (q - r.l0 as f64) / r.l0 as f64))
                .sum::<Option<f64>>()
                .map(|total| total / nm);
            StudyRow {
                exact_rel_bias,
                mask_size: s,
                mean_rel_bias,
                variance,
                lower_bound_factor: lower_bound_factor(params.dim, s, params.row_support),
                rel_bias_std_error: se2.sqrt() / nm,
            }
        })
        .collect();

    Ok(StudyResult {
        params: params.clone(),
        rows,
        records,
    })
}

/// CSV with header `S,mean_rel_bias,variance,lower_bound_factor,exact_rel_bias`;
/// the last column is blank when no enumeration was done.
pub fn write_study_csv<W: Write>(rows: &[StudyRow], mut out: W) -> std::io::Result<()> {
    writeln!(out, "S,mean_rel_bias,variance,lower_bound_factor,exact_rel_bias")?;
    for r in rows {
        let exact = r.exact_rel_bias.map(|v| format!("{v:.16e}")).unwrap_or_default();
        writeln!(
            out,
            "{},{:.16e},{:.16e},{:.16e},{}",
            r.mask_size, r.mean_rel_bias, r.variance, r.lower_bound_factor, exact
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(row_support: usize, mask_sizes: Vec<usize>) -> StudyParams {
        StudyParams {
            dim: 200,
            row_support,
            mask_sizes,
            num_matrices: 4,
            mc_samples: 300,
            seed: 5,
            zero_threshold: 1e-9,
        }
    }

    #[test]
    fn random_matrix_has_requested_row_support() {
        let mut rng = stream_rng(1, 0);
        let j = random_sparse_jacobian(50, 4, &mut rng);
        assert!(j.row_supports(1e-9).iter().all(|s| s.len() == 4));
        assert_eq!(j.l0(1e-9), 200);
    }

    #[test]
    fn single_column_probes_are_unbiased() {
        let res = probe_bias_variance_study(&small(5, vec![1])).unwrap();
        let row = res.rows[0];
        assert_eq!(row.lower_bound_factor, 1.0);
        assert!(row.mean_rel_bias.abs() < 3.0 * row.rel_bias_std_error, "{row:?}");
    }

    #[test]
    fn unit_row_support_is_unbiased_for_every_mask_size() {
        let res = probe_bias_variance_study(&small(1, vec![1, 3, 10, 40])).unwrap();
        for row in &res.rows {
            assert_eq!(row.lower_bound_factor, 1.0);
            assert!(row.mean_rel_bias.abs() <= 3.0 * row.rel_bias_std_error + 1e-12, "{row:?}");
        }
    }

    #[test]
    fn deterministic_in_seed() {
        let a = probe_bias_variance_study(&small(3, vec![1, 4])).unwrap();
        let b = probe_bias_variance_study(&small(3, vec![1, 4])).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn csv_layout() {
        let res = probe_bias_variance_study(&small(3, vec![2])).unwrap();
        let mut buf = Vec::new();
        write_study_csv(&res.rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next(),
            Some("S,mean_rel_bias,variance,lower_bound_factor,exact_rel_bias")
        );
        let row = lines.next().unwrap();
        assert!(row.starts_with("2,") && row.ends_with(','));
        assert_eq!(lines.next(), None);
    }

    #[test]
    fn small_dimension_gets_exact_overlay() {
        let params = StudyParams {
            dim: 8,
            row_support: 3,
            mask_sizes: vec![1, 2, 4],
            num_matrices: 5,
            mc_samples: 4000,
            seed: 2,
            zero_threshold: 1e-9,
        };
        let res = probe_bias_variance_study(&params).unwrap();
        for row in &res.rows {
            let exact = row.exact_rel_bias.unwrap();
            assert!(exact <= 1e-12 && exact >= row.lower_bound_factor - 1.0 - 1e-12);
            assert!((row.mean_rel_bias - exact).abs() < 3.0 * row.rel_bias_std_error + 1e-12, "{row:?}");
        }
        assert!(res.rows[0].exact_rel_bias.unwrap().abs() < 1e-12);
    }
}
