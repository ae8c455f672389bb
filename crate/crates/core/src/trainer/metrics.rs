use crate::adcore::Tensor;
use crate::nets::MlpModel;
use crate::synthdata::PairedDataset;

use super::TrainError;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TeSummary {
    pub mean: f64,
    /// Population standard deviation over test samples.
    pub std: f64,
}

/// Per-sample `||g(x) - y||_2 / sqrt(D)` over aligned test pairs.
pub fn per_sample_translation_error(
    generator: &MlpModel,
    test: &PairedDataset,
) -> Result<Vec<f64>, TrainError> {
    if test.is_empty() {
        return Err(TrainError::EmptyData("test set"));
    }
    let pred = generator.predict(&test.x)?;
    let scale = (test.dim() as f64).sqrt();
    Ok((0..test.len())
        .map(|i| {
            let sq: f64 = pred
                .row_slice(i)
                .iter()
                .zip(test.y.row_slice(i))
                .map(|(a, b)| (a - b).powi(2))
                .sum();
            sq.sqrt() / scale
        })
        .collect())
}

pub fn translation_error(
    generator: &MlpModel,
    test: &PairedDataset,
) -> Result<TeSummary, TrainError> {
    let errs = per_sample_translation_error(generator, test)?;
    let (mean, var) = mean_and_variance(&errs);
    Ok(TeSummary {
        mean,
        std: var.sqrt(),
    })
}

/// Mean and population variance.
pub(crate) fn mean_and_variance(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var)
}

fn mean_pairwise_distance(a: &Tensor, b: &Tensor) -> f64 {
    let mut total = 0.0;
    for i in 0..a.rows() {
        let ra = a.row_slice(i);
        for j in 0..b.rows() {
            total += ra
                .iter()
                .zip(b.row_slice(j))
                .map(|(p, q)| (p - q).powi(2))
                .sum::<f64>()
                .sqrt();
        }
    }
    total / (a.rows() * b.rows()) as f64
}

/// V-statistic energy distance `2E|X-Y| - E|X-X'| - E|Y-Y'|`; zero for
/// identical samples and non-negative otherwise.
pub fn energy_distance(a: &Tensor, b: &Tensor) -> f64 {
    assert_eq!(a.cols(), b.cols(), "energy distance needs equal dimensions");
    assert!(a.rows() > 0 && b.rows() > 0, "energy distance needs samples");
    2.0 * mean_pairwise_distance(a, b) - mean_pairwise_distance(a, a) - mean_pairwise_distance(b, b)
}

/// Middle value; the mean of the two middle values for even lengths.
pub fn median(values: &[f64]) -> f64 {
    assert!(!values.is_empty(), "median of nothing");
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}
