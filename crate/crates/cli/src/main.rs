use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use exactct_cli::commands::{cmd_explain, cmd_extract, cmd_render, cmd_synth, cmd_thresholds, cmd_train};
use exactct_cli::{Config, Result};

#[derive(Parser)]
#[command(name = "exactct", version, about = "CT enterography biomarkers for CD vs ITB")]
struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Override a configuration key, e.g. `--set train.xgb.eta=0.1`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,

    /// Worker threads (0 = all cores).
    #[arg(long, global = true, env = "EXACTCT_THREADS", default_value_t = 0)]
    threads: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a labelled synthetic phantom cohort.
    Synth {
        #[arg(long)]
        out: PathBuf,
    },
    /// Extract the feature table from case manifests or `.txt` manifest lists.
    Extract {
        #[arg(required = true)]
        manifests: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Per-feature Youden thresholds and their test-set metrics.
    Thresholds {
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a classifier and write its snapshot and metrics report.
    Train {
        /// logistic, svm, gnb, forest, gbm or xgb.
        #[arg(long)]
        model: String,
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        report: PathBuf,
    },
    /// SHAP values of an xgb snapshot for every row of a feature table.
    Explain {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        features: PathBuf,
        /// Background is the training split of these labels.
        #[arg(long)]
        labels: Option<PathBuf>,
        /// Explicit background feature table.
        #[arg(long)]
        background: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write an overlay bundle for one case.
    Render {
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn run(cli: Cli) -> Result<()> {
    if cli.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global()
            .map_err(|e| exactct_cli::CliError::Config(e.to_string()))?;
    }
    let cfg = Config::load(cli.config.as_deref(), &cli.overrides)?;
    match cli.command {
        Command::Synth { out } => {
            cmd_synth(&cfg, &out)?;
        }
        Command::Extract { manifests, out } => {
            cmd_extract(&cfg, &manifests, &out)?;
        }
        Command::Thresholds { features, labels, out } => {
            cmd_thresholds(&features, &labels, &out)?;
        }
        Command::Train {
            model,
            features,
            labels,
            out,
            report,
        } => {
            let o = cmd_train(&cfg, &model, &features, &labels, &out, &report)?;
            for (name, m) in &o.report {
                log::info!("{name}: accuracy {:.4}, MCC {:.4}", m.accuracy, m.mcc);
            }
        }
        Command::Explain {
            model,
            features,
            labels,
            background,
            out,
        } => {
            cmd_explain(&model, &features, labels.as_deref(), background.as_deref(), &out)?;
        }
        Command::Render { manifest, out } => {
            cmd_render(&cfg, &manifest, &out)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
