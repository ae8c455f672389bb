use std::io::Write;
use std::time::Duration;

use rayon::prelude::*;

use super::{median, train, TrainConfig, TrainError};
use crate::objective::LossWeights;
use crate::synthdata::{select_anchors, PairedDataset};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum AblationCase {
    Full,
    NoAnchor,
    NoSparsity,
    /// Distribution matching plus invertibility only.
    Neither,
}

impl AblationCase {
    pub const ALL: [AblationCase; 4] = [
        AblationCase::Full,
        AblationCase::NoAnchor,
        AblationCase::NoSparsity,
        AblationCase::Neither,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AblationCase::Full => "full",
            AblationCase::NoAnchor => "no-anchor",
            AblationCase::NoSparsity => "no-sparsity",
            AblationCase::Neither => "neither",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.name() == name)
    }

    pub fn weights(self, base: &LossWeights) -> LossWeights {
        let mut w = *base;
        if matches!(self, AblationCase::NoAnchor | AblationCase::Neither) {
            w.anchor = 0.0;
        }
        if matches!(self, AblationCase::NoSparsity | AblationCase::Neither) {
            w.sparsity = 0.0;
        }
        w
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AblationRow {
    pub case: AblationCase,
    pub seed: u64,
    pub te_mean: f64,
    pub te_std: f64,
    pub anchor_residual: Option<f64>,
    /// Training wall time; reported but never written to CSV.
    pub wall_time: Duration,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AblationTable {
    pub rows: Vec<AblationRow>,
    /// Median over seeds of the mean TE, in case order.
    pub medians: Vec<(AblationCase, f64)>,
}

impl AblationTable {
    pub fn median_of(&self, case: AblationCase) -> Option<f64> {
        self.medians.iter().find(|m| m.0 == case).map(|m| m.1)
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "case,seed,te_mean,te_std,anchor_residual")?;
        for r in &self.rows {
            let res = r.anchor_residual.map(|v| format!("{v:.16e}")).unwrap_or_default();
            writeln!(
                out,
                "{},{},{:.16e},{:.16e},{}",
                r.case.name(),
                r.seed,
                r.te_mean,
                r.te_std,
                res
            )?;
        }
        Ok(())
    }

    pub fn write_summary_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "case,median_te")?;
        for (case, m) in &self.medians {
            writeln!(out, "{},{:.16e}", case.name(), m)?;
        }
        Ok(())
    }
}

/// One training run per `(case, seed)`. Every case of a given seed sees the
/// same initialization, minibatch stream and anchors, so cases differ only in
/// their loss weights. Runs execute concurrently and are individually
/// deterministic.
pub fn run_ablation(
    base: &TrainConfig,
    cases: &[AblationCase],
    seeds: &[u64],
    train_data: &PairedDataset,
    test: &PairedDataset,
) -> Result<AblationTable, TrainError> {
    if cases.is_empty() || seeds.is_empty() {
        return Err(TrainError::InvalidConfig("ablation needs cases and seeds".into()));
    }
    let jobs: Vec<(AblationCase, u64)> = cases
        .iter()
        .flat_map(|&c| seeds.iter().map(move |&s| (c, s)))
        .collect();
    let rows = jobs
        .par_iter()
        .map(|&(case, seed)| {
            let mut config = base.clone();
            config.seed = seed;
            config.weights = case.weights(&base.weights);
            let anchors = select_anchors(train_data, base.anchor_count, seed)?;
            let out = train(&config, train_data, &anchors, Some(test))?;
            let te = out.report.te.expect("monitor supplied");
            Ok(AblationRow {
                case,
                seed,
                te_mean: te.mean,
                te_std: te.std,
                anchor_residual: out.report.anchor_residual,
                wall_time: out.report.wall_time,
            })
        })
        .collect::<Result<Vec<_>, TrainError>>()?;
    let medians = cases
        .iter()
        .map(|&c| {
            let tes: Vec<f64> = rows.iter().filter(|r| r.case == c).map(|r| r.te_mean).collect();
            (c, median(&tes))
        })
        .collect();
    Ok(AblationTable { rows, medians })
}

#[derive(Clone, Debug, PartialEq)]
pub struct SensitivityRow {
    pub trial: usize,
    pub anchor_seed: u64,
    pub te_mean: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SensitivityReport {
    pub rows: Vec<SensitivityRow>,
    pub mean: f64,
    /// Population standard deviation across trials.
    pub std: f64,
}

impl SensitivityReport {
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "trial,anchor_seed,te_mean")?;
        for r in &self.rows {
            writeln!(out, "{},{},{:.16e}", r.trial, r.anchor_seed, r.te_mean)?;
        }
        Ok(())
    }
}

/// Retrains with a fresh anchor draw per trial while the training seed stays
/// at `base.seed`, isolating the effect of which pair is anchored.
pub fn anchor_sensitivity(
    base: &TrainConfig,
    anchor_seeds: &[u64],
    train_data: &PairedDataset,
    test: &PairedDataset,
) -> Result<SensitivityReport, TrainError> {
    if anchor_seeds.is_empty() {
        return Err(TrainError::InvalidConfig("need at least one trial".into()));
    }
    let rows = anchor_seeds
        .par_iter()
        .enumerate()
        .map(|(trial, &anchor_seed)| {
            let anchors = select_anchors(train_data, base.anchor_count, anchor_seed)?;
            let out = train(base, train_data, &anchors, Some(test))?;
            Ok(SensitivityRow {
                trial,
                anchor_seed,
                te_mean: out.report.te.expect("monitor supplied").mean,
            })
        })
        .collect::<Result<Vec<_>, TrainError>>()?;
    let tes: Vec<f64> = rows.iter().map(|r| r.te_mean).collect();
    let (mean, var) = super::metrics::mean_and_variance(&tes);
    Ok(SensitivityReport {
        rows,
        mean,
        std: var.sqrt(),
    })
}
