//! The command verbs. Each one writes its outputs, the resolved
//! configuration and a manifest into a fresh output directory so the run can
//! be replayed and compared byte for byte.

pub mod mpa_suite;

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use anchordt::adcore::Tensor;
use anchordt::nets::{read_checkpoint, write_checkpoint, MlpModel};
use anchordt::objective::AnchorSet;
use anchordt::sparsity::{
    check_structural_sparsity, probe_bias_variance_study, write_study_csv, SupportPattern,
};
use anchordt::synthdata::{
    generate, read_dataset, select_anchors, write_dataset, write_meta, PairedDataset,
};
use anchordt::trainer::{
    anchor_sensitivity, energy_distance, per_sample_translation_error, run_ablation, train,
    AblationCase, TrainError, TrainedModels,
};
use anyhow::{anyhow, bail, ensure, Context, Result};

use crate::config::{ExperimentConfig, RawConfig};
use crate::manifest::{compare_artifacts, ArtifactComparison, RunManifest, MANIFEST_FILE};
use crate::svg::{line_chart, scatter_panels, Panel};

pub const RESOLVED_CONFIG: &str = "config.resolved.txt";
/// Wall-clock times; not checksummed since they vary between runs.
pub const TIMING_FILE: &str = "timing.txt";
pub const TRAIN_FILE: &str = "train.csv";
pub const TEST_FILE: &str = "test.csv";
pub const GENERATOR_FILE: &str = "generator.ckpt";

/// One command together with its non-config inputs.
#[derive(Clone, Debug, PartialEq)]
pub enum Action {
    GenData,
    Train {
        data: PathBuf,
    },
    Eval {
        checkpoint: PathBuf,
        data: PathBuf,
    },
    Plot {
        data: PathBuf,
        unanchored: Option<PathBuf>,
        anchored: Option<PathBuf>,
        max_points: usize,
    },
    ProbeStudy,
    MpaCheck {
        inject_shift: Option<f64>,
    },
    SparsityCheck {
        support: PathBuf,
        dim: Option<usize>,
    },
    Ablate {
        data: Option<PathBuf>,
    },
    Sensitivity {
        data: Option<PathBuf>,
    },
}

impl Action {
    pub fn name(&self) -> &'static str {
        match self {
            Action::GenData => "gen-data",
            Action::Train { .. } => "train",
            Action::Eval { .. } => "eval",
            Action::Plot { .. } => "plot",
            Action::ProbeStudy => "probe-study",
            Action::MpaCheck { .. } => "mpa-check",
            Action::SparsityCheck { .. } => "sparsity-check",
            Action::Ablate { .. } => "ablate",
            Action::Sensitivity { .. } => "sensitivity",
        }
    }

    /// Inputs as manifest entries; paths are made absolute so a replay works
    /// from any directory.
    fn inputs(&self) -> Result<BTreeMap<String, String>> {
        let mut m = BTreeMap::new();
        let mut path = |key: &str, p: &Path| -> Result<()> {
            ensure!(p.exists(), "{key} path {} does not exist", p.display());
            let abs = fs::canonicalize(p).with_context(|| format!("{key} path {}", p.display()))?;
            m.insert(key.to_string(), abs.display().to_string());
            Ok(())
        };
        match self {
            Action::GenData | Action::ProbeStudy => {}
            Action::Train { data } => path("data", data)?,
            Action::Eval { checkpoint, data } => {
                path("checkpoint", checkpoint)?;
                path("data", data)?;
            }
            Action::Plot {
                data,
                unanchored,
                anchored,
                max_points,
            } => {
                path("data", data)?;
                if let Some(p) = unanchored {
                    path("unanchored", p)?;
                }
                if let Some(p) = anchored {
                    path("anchored", p)?;
                }
                m.insert("max_points".into(), max_points.to_string());
            }
            Action::MpaCheck { inject_shift } => {
                if let Some(c) = inject_shift {
                    m.insert("inject_shift".into(), c.to_string());
                }
            }
            Action::SparsityCheck { support, dim } => {
                path("support", support)?;
                if let Some(d) = dim {
                    m.insert("dim".into(), d.to_string());
                }
            }
            Action::Ablate { data } | Action::Sensitivity { data } => {
                if let Some(p) = data {
                    path("data", p)?;
                }
            }
        }
        Ok(m)
    }

    /// Rebuilds the action recorded in a manifest.
    pub fn from_manifest(command: &str, inputs: &BTreeMap<String, String>) -> Result<Self> {
        let path = |k: &str| inputs.get(k).map(PathBuf::from);
        let need = |k: &str| path(k).ok_or_else(|| anyhow!("manifest for {command} lacks input {k}"));
        let parse = |k: &str| -> Result<Option<f64>> {
            inputs
                .get(k)
                .map(|v| v.parse::<f64>().with_context(|| format!("input {k}")))
                .transpose()
        };
        let count = |k: &str| -> Result<Option<usize>> {
            inputs
                .get(k)
                .map(|v| v.parse::<usize>().with_context(|| format!("input {k}")))
                .transpose()
        };
        Ok(match command {
            "gen-data" => Action::GenData,
            "train" => Action::Train { data: need("data")? },
            "eval" => Action::Eval {
                checkpoint: need("checkpoint")?,
                data: need("data")?,
            },
            "plot" => Action::Plot {
                data: need("data")?,
                unanchored: path("unanchored"),
                anchored: path("anchored"),
                max_points: count("max_points")?.unwrap_or(usize::MAX),
            },
            "probe-study" => Action::ProbeStudy,
            "mpa-check" => Action::MpaCheck {
                inject_shift: parse("inject_shift")?,
            },
            "sparsity-check" => Action::SparsityCheck {
                support: need("support")?,
                dim: count("dim")?,
            },
            "ablate" => Action::Ablate { data: path("data") },
            "sensitivity" => Action::Sensitivity { data: path("data") },
            other => bail!("unknown command {other:?} in manifest"),
        })
    }
}

/// Where the configuration comes from, in increasing precedence.
#[derive(Clone, Debug, Default)]
pub struct ConfigSource {
    pub file: Option<PathBuf>,
    /// `section.key=value` overrides.
    pub overrides: Vec<String>,
    /// Value of the seed environment variable, if set.
    pub env_seed: Option<String>,
}

pub fn resolve_config(source: &ConfigSource) -> Result<ExperimentConfig> {
    let mut raw = match &source.file {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
            RawConfig::parse(&text).with_context(|| format!("in {}", p.display()))?
        }
        None => RawConfig::default(),
    };
    for o in &source.overrides {
        raw.apply_override(o)?;
    }
    let mut config = ExperimentConfig::from_raw(&raw)?;
    config.apply_seed_override(source.env_seed.as_deref())?;
    Ok(config)
}

/// What a verb produced: file names inside the output directory (all
/// deterministic), human-readable summary lines, and a failure to report
/// after the manifest is written.
#[derive(Debug, Default)]
struct Produced {
    artifacts: Vec<String>,
    summary: Vec<String>,
    failure: Option<anyhow::Error>,
}

impl Produced {
    fn file(&mut self, name: &str) {
        self.artifacts.push(name.to_string());
    }
}

#[derive(Debug)]
pub struct RunResult {
    pub manifest: RunManifest,
    pub summary: Vec<String>,
}

/// Runs `action` into `out_dir`, which is created if needed.
pub fn execute(action: &Action, config: &ExperimentConfig, out_dir: &Path) -> Result<RunResult> {
    let inputs = action.inputs()?;
    fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    fs::write(out_dir.join(RESOLVED_CONFIG), config.serialize())
        .with_context(|| format!("writing into {}", out_dir.display()))?;
    let started = Instant::now();
    let mut produced = match action {
        Action::GenData => gen_data(config, out_dir)?,
        Action::Train { data } => train_cmd(config, data, out_dir)?,
        Action::Eval { checkpoint, data } => eval_cmd(checkpoint, data, out_dir)?,
        Action::Plot {
            data,
            unanchored,
            anchored,
            max_points,
        } => plot_cmd(data, unanchored.as_deref(), anchored.as_deref(), *max_points, out_dir)?,
        Action::ProbeStudy => probe_study_cmd(config, out_dir)?,
        Action::MpaCheck { inject_shift } => mpa_check_cmd(config, *inject_shift, out_dir)?,
        Action::SparsityCheck { support, dim } => sparsity_check_cmd(support, *dim, out_dir)?,
        Action::Ablate { data } => ablate_cmd(config, data.as_deref(), out_dir)?,
        Action::Sensitivity { data } => sensitivity_cmd(config, data.as_deref(), out_dir)?,
    };
    let elapsed = started.elapsed();
    fs::write(
        out_dir.join(TIMING_FILE),
        format!("command = {}\nwall_seconds = {:.3}\n", action.name(), elapsed.as_secs_f64()),
    )?;
    produced.file(RESOLVED_CONFIG);
    let mut manifest = RunManifest {
        command: action.name().to_string(),
        config_file: Some(RESOLVED_CONFIG.to_string()),
        out_dir: out_dir.display().to_string(),
        seed: Some(config.train.seed),
        inputs,
        artifacts: BTreeMap::new(),
    };
    manifest.record_artifacts(out_dir, &produced.artifacts)?;
    manifest.write(out_dir)?;
    if let Some(err) = produced.failure {
        return Err(err);
    }
    Ok(RunResult {
        manifest,
        summary: produced.summary,
    })
}

/// Reruns the command recorded at `manifest_path` into `out_dir` and compares
/// every recorded artifact. The configuration is the resolved copy stored
/// next to the manifest, so environment overrides are not reapplied.
pub fn replay(manifest_path: &Path, out_dir: &Path) -> Result<Vec<ArtifactComparison>> {
    let original = RunManifest::read(manifest_path)?;
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    let config_name = original.config_file.as_deref().unwrap_or(RESOLVED_CONFIG);
    let config = resolve_config(&ConfigSource {
        file: Some(base.join(config_name)),
        ..Default::default()
    })?;
    let action = Action::from_manifest(&original.command, &original.inputs)?;
    if fs::canonicalize(out_dir).ok() == fs::canonicalize(base).ok() {
        bail!("replay output directory must differ from the original run");
    }
    execute(&action, &config, out_dir)?;
    Ok(compare_artifacts(&original, out_dir))
}

fn csv_writer(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

fn write_with<F>(out_dir: &Path, name: &str, produced: &mut Produced, body: F) -> Result<()>
where
    F: FnOnce(&mut BufWriter<File>) -> std::io::Result<()>,
{
    let mut w = csv_writer(&out_dir.join(name))?;
    body(&mut w).with_context(|| format!("writing {name}"))?;
    w.flush()?;
    produced.file(name);
    Ok(())
}

/// `path` as a dataset: a CSV file, or a directory holding `split`.
fn load_dataset(path: &Path, split: &str) -> Result<PairedDataset> {
    ensure!(path.exists(), "data path {} does not exist (run gen-data first)", path.display());
    let file = if path.is_dir() { path.join(split) } else { path.to_path_buf() };
    ensure!(file.exists(), "{} not found", file.display());
    Ok(read_dataset(&file)?)
}

/// Train and test splits, from a directory or freshly generated.
fn train_and_test(config: &ExperimentConfig, data: Option<&Path>) -> Result<(PairedDataset, PairedDataset)> {
    match data {
        Some(dir) => {
            ensure!(dir.is_dir(), "data directory {} does not exist (run gen-data first)", dir.display());
            Ok((load_dataset(dir, TRAIN_FILE)?, load_dataset(dir, TEST_FILE)?))
        }
        None => {
            let g = generate(&config.data)?;
            Ok((g.train, g.test))
        }
    }
}

fn load_generator(path: &Path) -> Result<MlpModel> {
    let file = if path.is_dir() { path.join(GENERATOR_FILE) } else { path.to_path_buf() };
    let f = File::open(&file).with_context(|| format!("opening checkpoint {}", file.display()))?;
    read_checkpoint(BufReader::new(f)).with_context(|| format!("reading checkpoint {}", file.display()))
}

fn save_models(models: &TrainedModels, out_dir: &Path, produced: &mut Produced) -> Result<()> {
    for (name, model) in [
        (GENERATOR_FILE, &models.generator),
        ("reconstructor.ckpt", &models.reconstructor),
        ("discriminator.ckpt", &models.discriminator),
    ] {
        let mut w = csv_writer(&out_dir.join(name))?;
        write_checkpoint(model, &mut w)?;
        w.flush()?;
        produced.file(name);
    }
    Ok(())
}

fn gen_data(config: &ExperimentConfig, out_dir: &Path) -> Result<Produced> {
    let g = generate(&config.data)?;
    let mut p = Produced::default();
    write_dataset(&g.train, &out_dir.join(TRAIN_FILE))?;
    p.file(TRAIN_FILE);
    write_dataset(&g.test, &out_dir.join(TEST_FILE))?;
    p.file(TEST_FILE);
    write_meta(&g.meta, &out_dir.join("metadata.txt"))?;
    p.file("metadata.txt");
    p.summary.push(format!("{} train rows, {} test rows", g.train.len(), g.test.len()));
    Ok(p)
}

fn anchors_dataset(anchors: &AnchorSet) -> Result<PairedDataset> {
    Ok(PairedDataset::new(anchors.sources(), anchors.targets())?)
}

fn fmt(v: f64) -> String {
    format!("{v:.16e}")
}

fn train_cmd(config: &ExperimentConfig, data: &Path, out_dir: &Path) -> Result<Produced> {
    let (train_data, test) = train_and_test(config, Some(data))?;
    let tc = &config.train;
    let anchors = select_anchors(&train_data, tc.anchor_count, tc.seed)?;
    let mut p = Produced::default();
    write_dataset(&anchors_dataset(&anchors)?, &out_dir.join("anchors.csv"))?;
    p.file("anchors.csv");
    let outcome = match train(tc, &train_data, &anchors, Some(&test)) {
        Ok(o) => o,
        Err(TrainError::NonFinite {
            iteration,
            cause,
            last_good,
            trace,
        }) => {
            save_models(&last_good, out_dir, &mut p)?;
            let partial = anchordt::trainer::RunReport {
                config: tc.clone(),
                trace,
                diagnostics: Vec::new(),
                te: None,
                anchor_residual: None,
                wall_time: Default::default(),
            };
            write_with(out_dir, "trace.csv", &mut p, |w| partial.write_trace_csv(w))?;
            p.failure = Some(anyhow!(
                "training diverged at iteration {iteration} ({cause}); last finite models saved in {}",
                out_dir.display()
            ));
            return Ok(p);
        }
        Err(e) => return Err(e.into()),
    };
    let report = &outcome.report;
    save_models(&outcome.models, out_dir, &mut p)?;
    write_with(out_dir, "trace.csv", &mut p, |w| report.write_trace_csv(w))?;
    write_with(out_dir, "diagnostics.csv", &mut p, |w| {
        writeln!(w, "iteration,energy_distance")?;
        for (it, d) in &report.diagnostics {
            writeln!(w, "{it},{}", fmt(*d))?;
        }
        Ok(())
    })?;
    let te = report.te.expect("test split supplied");
    write_with(out_dir, "summary.csv", &mut p, |w| {
        writeln!(w, "metric,value")?;
        writeln!(w, "te_mean,{}", fmt(te.mean))?;
        writeln!(w, "te_std,{}", fmt(te.std))?;
        if let Some(r) = report.anchor_residual {
            writeln!(w, "anchor_residual,{}", fmt(r))?;
        }
        if let Some(last) = report.trace.last() {
            writeln!(w, "final_total_loss,{}", fmt(last.total))?;
        }
        writeln!(w, "iterations,{}", tc.iterations)
    })?;
    p.summary.push(format!("test TE {:.4} (std {:.4})", te.mean, te.std));
    if let Some(r) = report.anchor_residual {
        p.summary.push(format!("anchor residual {r:.4}"));
    }
    Ok(p)
}

fn eval_cmd(checkpoint: &Path, data: &Path, out_dir: &Path) -> Result<Produced> {
    let generator = load_generator(checkpoint)?;
    let test = load_dataset(data, TEST_FILE)?;
    let errs = per_sample_translation_error(&generator, &test)?;
    let pred = generator.predict(&test.x)?;
    let n = errs.len() as f64;
    let mean = errs.iter().sum::<f64>() / n;
    let std = (errs.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / n).sqrt();
    let energy = energy_distance(&head(&pred, 2000), &head(&test.y, 2000));
    let mut p = Produced::default();
    write_with(out_dir, "eval.csv", &mut p, |w| {
        writeln!(w, "index,te")?;
        for (i, e) in errs.iter().enumerate() {
            writeln!(w, "{i},{}", fmt(*e))?;
        }
        Ok(())
    })?;
    write_with(out_dir, "eval_summary.csv", &mut p, |w| {
        writeln!(w, "metric,value")?;
        writeln!(w, "samples,{}", errs.len())?;
        writeln!(w, "te_mean,{}", fmt(mean))?;
        writeln!(w, "te_std,{}", fmt(std))?;
        writeln!(w, "energy_distance,{}", fmt(energy))
    })?;
    p.summary.push(format!("TE {mean:.4} (std {std:.4}) over {} samples", errs.len()));
    Ok(p)
}

fn head(t: &Tensor, n: usize) -> Tensor {
    let rows = n.min(t.rows());
    Tensor::new(rows, t.cols(), t.data()[..rows * t.cols()].to_vec()).expect("prefix of a tensor")
}

fn plot_cmd(
    data: &Path,
    unanchored: Option<&Path>,
    anchored: Option<&Path>,
    max_points: usize,
    out_dir: &Path,
) -> Result<Produced> {
    let test = load_dataset(data, TEST_FILE)?;
    ensure!(!test.is_empty(), "dataset {} is empty; nothing to plot", data.display());
    let mut translated = Vec::new();
    for (label, path) in [("translated, no anchor", unanchored), ("translated, anchored", anchored)] {
        if let Some(path) = path {
            translated.push((label, load_generator(path)?.predict(&test.x)?));
        }
    }
    let mut panels = vec![
        Panel {
            title: "source x".into(),
            points: &test.x,
        },
        Panel {
            title: "target y".into(),
            points: &test.y,
        },
    ];
    for (label, pts) in &translated {
        panels.push(Panel {
            title: (*label).into(),
            points: pts,
        });
    }
    let mut p = Produced::default();
    fs::write(out_dir.join("scatter.svg"), scatter_panels(&panels, max_points))?;
    p.file("scatter.svg");
    p.summary.push(format!("{} panels", panels.len()));
    Ok(p)
}

fn probe_study_cmd(config: &ExperimentConfig, out_dir: &Path) -> Result<Produced> {
    let result = probe_bias_variance_study(&config.probe_study)?;
    let mut p = Produced::default();
    write_with(out_dir, "study.csv", &mut p, |w| write_study_csv(&result.rows, w))?;
    let s = |f: &dyn Fn(&anchordt::sparsity::StudyRow) -> f64| -> Vec<(f64, f64)> {
        result.rows.iter().map(|r| (r.mask_size as f64, f(r))).collect()
    };
    let variance = line_chart(
        "estimator variance",
        "mask size S",
        "variance",
        &[("Monte Carlo".into(), s(&|r| r.variance))],
        true,
    );
    let mut bias_series = vec![
        ("Monte Carlo relative bias".to_string(), s(&|r| r.mean_rel_bias)),
        ("lower bound".to_string(), s(&|r| r.lower_bound_factor - 1.0)),
    ];
    if result.rows.iter().all(|r| r.exact_rel_bias.is_some()) {
        bias_series.push(("exact enumeration".into(), s(&|r| r.exact_rel_bias.unwrap_or(0.0))));
    }
    let bias = line_chart("relative bias", "mask size S", "relative bias", &bias_series, true);
    fs::write(out_dir.join("variance.svg"), variance)?;
    p.file("variance.svg");
    fs::write(out_dir.join("bias.svg"), bias)?;
    p.file("bias.svg");
    for r in &result.rows {
        p.summary.push(format!(
            "S={:>3}  rel. bias {:+.4e}  variance {:.4e}  bound factor {:.4}",
            r.mask_size, r.mean_rel_bias, r.variance, r.lower_bound_factor
        ));
    }
    Ok(p)
}

fn mpa_check_cmd(config: &ExperimentConfig, inject_shift: Option<f64>, out_dir: &Path) -> Result<Produced> {
    let report = mpa_suite::run_suite(config.mpa.samples, config.mpa.seed, inject_shift)?;
    let mut p = Produced::default();
    write_with(out_dir, "mpa_report.csv", &mut p, |w| report.write_csv(w))?;
    for r in &report.rows {
        p.summary.push(format!(
            "{:<8} {} (statistic {:.4e}, threshold {:.4e}, expected {})",
            r.outcome, r.check, r.statistic, r.threshold, r.expected
        ));
    }
    if !report.all_as_expected() {
        let bad: Vec<&str> = report
            .rows
            .iter()
            .filter(|r| !r.as_expected())
            .map(|r| r.check.as_str())
            .collect();
        p.failure = Some(anyhow!("unexpected outcomes: {}", bad.join("; ")));
    }
    Ok(p)
}

/// Reads `row,col` pairs (0-based, with header).
pub fn read_support_pairs(path: &Path) -> Result<Vec<(usize, usize)>> {
    let mut reader = csv::Reader::from_path(path).with_context(|| format!("opening {}", path.display()))?;
    let headers = reader.headers()?.clone();
    ensure!(
        headers.iter().map(str::trim).eq(["row", "col"]),
        "{}: expected header row,col",
        path.display()
    );
    reader
        .records()
        .enumerate()
        .map(|(i, rec)| {
            let rec = rec?;
            let cell = |j: usize| -> Result<usize> {
                rec.get(j)
                    .map(str::trim)
                    .unwrap_or("")
                    .parse()
                    .with_context(|| format!("{} line {}: bad index", path.display(), i + 2))
            };
            Ok((cell(0)?, cell(1)?))
        })
        .collect()
}

fn sparsity_check_cmd(support: &Path, dim: Option<usize>, out_dir: &Path) -> Result<Produced> {
    let pairs = read_support_pairs(support)?;
    let dim = match dim {
        Some(d) => d,
        None => pairs.iter().map(|&(r, c)| r.max(c) + 1).max().unwrap_or(0),
    };
    ensure!(dim > 0, "empty support pattern; pass --dim to size it");
    let pattern = SupportPattern::new(dim, pairs)?;
    let report = check_structural_sparsity(&pattern);
    let join = |v: &[usize]| v.iter().map(ToString::to_string).collect::<Vec<_>>().join(" ");
    let mut p = Produced::default();
    write_with(out_dir, "sparsity_check.csv", &mut p, |w| {
        writeln!(w, "column,satisfied,rows,intersection")?;
        for k in 0..dim {
            match (report.witnesses.get(&k), report.failures.get(&k)) {
                (Some(rows), _) => writeln!(w, "{k},true,{},{k}", join(rows))?,
                (None, Some(inter)) => writeln!(w, "{k},false,,{}", join(inter))?,
                (None, None) => unreachable!("every column is classified"),
            }
        }
        Ok(())
    })?;
    p.summary.push(if report.satisfied {
        format!("structurally sparse: yes ({dim} columns)")
    } else {
        let cols: Vec<usize> = report.failures.keys().copied().collect();
        format!("structurally sparse: no (failing columns {})", join(&cols))
    });
    Ok(p)
}

fn ablate_cmd(config: &ExperimentConfig, data: Option<&Path>, out_dir: &Path) -> Result<Produced> {
    let (train_data, test) = train_and_test(config, data)?;
    let settings = &config.ablation;
    let table = run_ablation(&config.train, &settings.cases, &settings.seeds, &train_data, &test)?;
    let mut p = Produced::default();
    write_with(out_dir, "ablation.csv", &mut p, |w| table.write_csv(w))?;
    write_with(out_dir, "ablation_summary.csv", &mut p, |w| table.write_summary_csv(w))?;
    for (case, m) in &table.medians {
        p.summary.push(format!("{:<12} median TE {m:.4}", case.name()));
    }
    if !settings.anchor_counts.is_empty() {
        let mut rows = Vec::new();
        for &count in &settings.anchor_counts {
            let mut base = config.train.clone();
            base.anchor_count = count;
            let t = run_ablation(&base, &[AblationCase::Full], &settings.seeds, &train_data, &test)?;
            let median = t.median_of(AblationCase::Full).expect("full case ran");
            p.summary.push(format!("|anchors|={count:<3} median TE {median:.4}"));
            rows.push((count, t, median));
        }
        write_with(out_dir, "anchor_sweep.csv", &mut p, |w| {
            writeln!(w, "anchor_count,seed,te_mean,te_std")?;
            for (count, t, _) in &rows {
                for r in &t.rows {
                    writeln!(w, "{count},{},{},{}", r.seed, fmt(r.te_mean), fmt(r.te_std))?;
                }
            }
            Ok(())
        })?;
    }
    Ok(p)
}

fn sensitivity_cmd(config: &ExperimentConfig, data: Option<&Path>, out_dir: &Path) -> Result<Produced> {
    let (train_data, test) = train_and_test(config, data)?;
    let report = anchor_sensitivity(&config.train, &config.sensitivity.anchor_seeds, &train_data, &test)?;
    let mut p = Produced::default();
    write_with(out_dir, "sensitivity.csv", &mut p, |w| report.write_csv(w))?;
    p.summary.push(format!(
        "TE over {} anchor draws: mean {:.4}, std {:.4}",
        report.rows.len(),
        report.mean,
        report.std
    ));
    Ok(p)
}

/// Path of the manifest inside a run directory.
pub fn manifest_path(run_dir: &Path) -> PathBuf {
    run_dir.join(MANIFEST_FILE)
}
