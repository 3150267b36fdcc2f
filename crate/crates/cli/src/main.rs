//! `bnmemo` — experiment runner for the normalization/memorization toolkit.
//!
//! Every subcommand reads a JSON config, accepts a few flag overrides,
//! writes its outputs plus a `manifest.json` into `--out`, and exits 0 on
//! success, 1 on I/O failure, 2 on a config error, 3 on a numeric failure.

mod commands;
mod config;
mod error;
mod manifest;

use clap::{Args, Parser, Subcommand};
use commands::RunContext;
use config::{load_config, CorruptionSpec};
use error::CliError;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "bnmemo",
    version,
    about = "Measure and mitigate how batch normalization amplifies the \
             memorization of outlier training examples"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// JSON experiment config.
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    /// Override the config's master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (created if missing).
    #[arg(long, value_name = "DIR", default_value = ".")]
    out: PathBuf,
    /// Cap on worker threads for parallel stages. Never changes outputs.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Apply label flips or out-of-distribution injection and cache the result.
    Corrupt {
        #[command(flatten)]
        common: CommonArgs,
        /// Override the label-flip ratio (flip corruption only).
        #[arg(long)]
        k: Option<f64>,
    },
    /// Train a model (optionally a normalized/plain pair) and emit per-epoch traces.
    Train {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        learning_rate: Option<f64>,
        #[arg(long)]
        batch_size: Option<usize>,
        /// Train normalized and plain variants with shared seeds.
        #[arg(long)]
        compare_bn: bool,
    },
    /// Per-example gradient norms and scale/deviation ratios of a trained model.
    Influence {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        batch_size: Option<usize>,
    },
    /// Run the closed-form dynamics checks and emit reference trajectories.
    Theory {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Shadow-model membership-inference attack.
    Attack {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        num_shadows: Option<usize>,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Sweep the scale-regularizer mixing weight alpha.
    Mitigate {
        #[command(flatten)]
        common: CommonArgs,
        /// Comma-separated mixing weights, e.g. "1.0,0.9,0.7,0.5".
        #[arg(long, value_delimiter = ',')]
        alphas: Option<Vec<f64>>,
        #[arg(long)]
        epochs: Option<usize>,
    },
}

fn context(common: &CommonArgs) -> RunContext {
    RunContext {
        command_line: std::env::args().collect(),
        out_dir: common.out.clone(),
        config_path: common.config.clone(),
        jobs: common.jobs,
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Corrupt { common, k } => {
            let mut cfg: config::CorruptCmdConfig = load_config(&common.config, "corrupt")?;
            if let Some(seed) = common.seed {
                cfg.seed = seed;
            }
            if let Some(k) = k {
                match &mut cfg.corruption {
                    CorruptionSpec::Flip { k: ratio, .. } => *ratio = k,
                    _ => {
                        return Err(CliError::Config(
                            "--k applies only to flip corruption".into(),
                        ))
                    }
                }
            }
            commands::cmd_corrupt(&context(&common), cfg)
        }
        Command::Train {
            common,
            epochs,
            learning_rate,
            batch_size,
            compare_bn,
        } => {
            let mut cfg: config::TrainCmdConfig = load_config(&common.config, "train")?;
            if let Some(seed) = common.seed {
                cfg.seed = seed;
            }
            if let Some(e) = epochs {
                cfg.train.epochs = e;
            }
            if let Some(lr) = learning_rate {
                cfg.train.learning_rate = lr;
            }
            if let Some(b) = batch_size {
                cfg.train.batch_size = b;
            }
            if compare_bn {
                cfg.arch.compare_bn = true;
            }
            commands::cmd_train(&context(&common), cfg)
        }
        Command::Influence { common, batch_size } => {
            let mut cfg: config::InfluenceCmdConfig = load_config(&common.config, "influence")?;
            if let Some(seed) = common.seed {
                cfg.seed = seed;
            }
            if let Some(b) = batch_size {
                cfg.batch_size = b;
            }
            commands::cmd_influence(&context(&common), cfg)
        }
        Command::Theory { common } => {
            let mut cfg: config::TheoryCmdConfig = load_config(&common.config, "theory")?;
            if let Some(seed) = common.seed {
                cfg.seed = seed;
            }
            commands::cmd_theory(&context(&common), cfg)
        }
        Command::Attack {
            common,
            num_shadows,
            epochs,
        } => {
            let mut cfg: config::AttackCmdConfig = load_config(&common.config, "attack")?;
            if let Some(seed) = common.seed {
                cfg.seed = seed;
            }
            if let Some(n) = num_shadows {
                cfg.num_shadows = n;
            }
            if let Some(e) = epochs {
                cfg.train.epochs = e;
            }
            commands::cmd_attack(&context(&common), cfg)
        }
        Command::Mitigate {
            common,
            alphas,
            epochs,
        } => {
            let mut cfg: config::MitigateCmdConfig = load_config(&common.config, "mitigate")?;
            if let Some(seed) = common.seed {
                cfg.seed = seed;
            }
            if let Some(a) = alphas {
                cfg.alphas = a;
            }
            if let Some(e) = epochs {
                cfg.train.epochs = e;
            }
            commands::cmd_mitigate(&context(&common), cfg)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code())
        }
    }
}
