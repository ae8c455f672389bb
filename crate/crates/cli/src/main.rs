use std::path::PathBuf;
use std::process::ExitCode;

use anchordt_cli::commands::{self, Action, ConfigSource};
use anchordt_cli::config::SEED_ENV;
use anyhow::Result;
use clap::{Args, Parser, Subcommand};

/// Anchored, sparsity-regularized domain transfer experiments.
#[derive(Parser)]
#[command(name = "anchordt", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment config file; defaults apply when omitted.
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Override one config entry, e.g. `--set train.lambda_anchor=0`.
    #[arg(long = "set", value_name = "SECTION.KEY=VALUE")]
    overrides: Vec<String>,
    /// Output directory for artifacts, the resolved config and the manifest.
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Generate train/test CSVs and a metadata file.
    GenData {
        #[command(flatten)]
        common: Common,
    },
    /// Train generator, reconstructor and discriminator.
    Train {
        #[command(flatten)]
        common: Common,
        /// Directory written by gen-data.
        #[arg(long)]
        data: PathBuf,
    },
    /// Per-sample translation error of a generator on aligned data.
    Eval {
        #[command(flatten)]
        common: Common,
        /// Generator checkpoint, or a train output directory.
        #[arg(long)]
        checkpoint: PathBuf,
        /// Dataset CSV, or a gen-data directory (its test split is used).
        #[arg(long)]
        data: PathBuf,
    },
    /// Scatter plots of source, target and translated samples.
    Plot {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
        /// Generator (file or train directory) trained without anchors.
        #[arg(long)]
        unanchored: Option<PathBuf>,
        /// Generator (file or train directory) trained with anchors.
        #[arg(long)]
        anchored: Option<PathBuf>,
        #[arg(long, default_value_t = 3000)]
        max_points: usize,
    },
    /// Bias and variance of the random-probe sparsity estimator.
    ProbeStudy {
        #[command(flatten)]
        common: Common,
    },
    /// Monte Carlo checks of measure-preserving automorphisms.
    MpaCheck {
        #[command(flatten)]
        common: Common,
        /// Also test a translation by this amount as if it were an MPA.
        #[arg(long, allow_hyphen_values = true)]
        inject_shift: Option<f64>,
    },
    /// Structural-sparsity check of a Jacobian support pattern.
    SparsityCheck {
        #[command(flatten)]
        common: Common,
        /// CSV with header `row,col` and 0-based indices.
        #[arg(long)]
        support: PathBuf,
        /// Dimension; inferred from the largest index when omitted.
        #[arg(long)]
        dim: Option<usize>,
    },
    /// Train every ablation case for every seed.
    Ablate {
        #[command(flatten)]
        common: Common,
        /// gen-data directory; generated from the config when omitted.
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Retrain with several anchor draws.
    Sensitivity {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Rerun a recorded command and compare its outputs byte for byte.
    Replay {
        /// manifest.txt of the original run, or its directory.
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, short)]
        out: PathBuf,
    },
}

fn run(cli: Cli) -> Result<()> {
    let (common, action) = match cli.command {
        Command::GenData { common } => (common, Action::GenData),
        Command::Train { common, data } => (common, Action::Train { data }),
        Command::Eval {
            common,
            checkpoint,
            data,
        } => (common, Action::Eval { checkpoint, data }),
        Command::Plot {
            common,
            data,
            unanchored,
            anchored,
            max_points,
        } => (
            common,
            Action::Plot {
                data,
                unanchored,
                anchored,
                max_points,
            },
        ),
        Command::ProbeStudy { common } => (common, Action::ProbeStudy),
        Command::MpaCheck { common, inject_shift } => (common, Action::MpaCheck { inject_shift }),
        Command::SparsityCheck { common, support, dim } => (common, Action::SparsityCheck { support, dim }),
        Command::Ablate { common, data } => (common, Action::Ablate { data }),
        Command::Sensitivity { common, data } => (common, Action::Sensitivity { data }),
        Command::Replay { manifest, out } => {
            let path = if manifest.is_dir() { commands::manifest_path(&manifest) } else { manifest };
            let comparisons = commands::replay(&path, &out)?;
            for c in &comparisons {
                println!("{} {}", if c.matches() { "same   " } else { "DIFFERS" }, c.name);
            }
            return anchordt_cli::manifest::ensure_all_match(&comparisons);
        }
    };
    let config = commands::resolve_config(&ConfigSource {
        file: common.config,
        overrides: common.overrides,
        env_seed: std::env::var(SEED_ENV).ok(),
    })?;
    let result = commands::execute(&action, &config, &common.out)?;
    for line in &result.summary {
        println!("{line}");
    }
    println!("wrote {} artifacts to {}", result.manifest.artifacts.len(), common.out.display());
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
