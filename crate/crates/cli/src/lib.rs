//! Command-line workflow: simulate, degrade, augment, train, denoise, evaluate and ablate.

pub mod commands;
pub mod config;
pub mod dataset;
pub mod error;
pub mod provenance;

use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};
use pdanet_core::data::{DomainTag, Split};
use pdanet_nn::Which;

pub use config::{Preset, RunConfig};
pub use error::{CliError, Result};

#[derive(Debug, Parser)]
#[command(name = "pdanet", version, about = "STM LDOS simulation and domain-adapted denoising")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

/// Configuration layering shared by every subcommand.
#[derive(Clone, Debug, Default, clap::Args)]
pub struct ConfigArgs {
    /// TOML configuration file layered over the preset.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Starting defaults.
    #[arg(long, value_enum, default_value_t = Preset::Full)]
    pub preset: Preset,
    /// Override one configuration key, e.g. `--set train.epochs=3`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub sets: Vec<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Target {
    /// Simulated degradation (SIM_BLUR).
    Blur,
    /// Stand-in experimental degradation (EXP).
    Exp,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SplitArg {
    Train,
    Test,
    All,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum WhichArg {
    #[value(name = "GD", alias = "gd")]
    Gd,
    #[value(name = "GDA", alias = "gda")]
    Gda,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate clean LDOS images (training and held-out test scenes).
    Simulate {
        #[arg(long)]
        out: PathBuf,
        /// Training images; overrides data.count.
        #[arg(long)]
        count: Option<usize>,
        /// Scene seed; overrides physics.seed.
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Degrade a clean dataset.
    Degrade {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = Target::Blur)]
        domain: Target,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Augment the training split of a dataset.
    Augment {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Build clean, blurry and experimental datasets in one directory.
    Prepare {
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Train the model.
    Train {
        #[arg(long)]
        clean: PathBuf,
        #[arg(long)]
        blurry: PathBuf,
        #[arg(long)]
        exp: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Continue from the checkpoint in --out.
        #[arg(long)]
        resume: bool,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Apply a trained generator to a dataset or image folder.
    Denoise {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = WhichArg::Gd)]
        which: WhichArg,
        #[arg(long, value_enum, default_value_t = SplitArg::All)]
        split: SplitArg,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Score images: full-reference metrics with --reference, no-reference metrics otherwise.
    Evaluate {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        reference: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Train and score the four ablation variants.
    Ablate {
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
}

impl Command {
    pub fn config_args(&self) -> &ConfigArgs {
        match self {
            Command::Simulate { cfg, .. }
            | Command::Degrade { cfg, .. }
            | Command::Augment { cfg, .. }
            | Command::Prepare { cfg, .. }
            | Command::Train { cfg, .. }
            | Command::Denoise { cfg, .. }
            | Command::Evaluate { cfg, .. }
            | Command::Ablate { cfg, .. } => cfg,
        }
    }
}

/// Runs one parsed command line and returns a summary line for the console.
pub fn run(cli: Cli) -> Result<String> {
    let args = cli.command.config_args();
    let mut cfg = RunConfig::resolve(args.preset, args.config.as_deref(), &args.sets)?;
    match cli.command {
        Command::Simulate { out, count, seed, .. } => {
            if let Some(c) = count {
                cfg.data.count = c;
            }
            if let Some(s) = seed {
                cfg.physics.seed = s;
            }
            cfg.validate()?;
            let n = commands::simulate(&cfg, &out)?;
            Ok(format!("wrote {n} clean images to {}", out.display()))
        }
        Command::Degrade { input, out, domain, .. } => {
            let tag = match domain {
                Target::Blur => DomainTag::SimBlur,
                Target::Exp => DomainTag::Exp,
            };
            let n = commands::degrade(&cfg, &input, &out, tag)?;
            Ok(format!("wrote {n} {tag} images to {}", out.display()))
        }
        Command::Augment { input, out, .. } => {
            let n = commands::augment(&cfg, &input, &out)?;
            Ok(format!("wrote {n} images to {}", out.display()))
        }
        Command::Prepare { out, .. } => {
            let p = commands::prepare(&cfg, &out)?;
            Ok(format!("datasets in {}, {} and {}", p.clean.display(), p.blurry.display(), p.exp.display()))
        }
        Command::Train { clean, blurry, exp, out, resume, .. } => {
            let state = commands::train(&cfg, &clean, &blurry, exp.as_deref(), &out, resume)?;
            let last = state.epochs.last().map_or(String::new(), |e| format!(", final cycle loss {:.4}", e.mean.cyc_f + e.mean.cyc_b));
            Ok(format!("trained {} epochs ({} steps){last}; checkpoint in {}", state.epochs.len(), state.step, out.display()))
        }
        Command::Denoise { checkpoint, input, out, which, split, .. } => {
            let which = match which {
                WhichArg::Gd => Which::Gd,
                WhichArg::Gda => Which::Gda,
            };
            let split = match split {
                SplitArg::Train => Some(Split::Train),
                SplitArg::Test => Some(Split::Test),
                SplitArg::All => None,
            };
            let n = commands::denoise(&cfg, &checkpoint, &input, &out, which, split)?;
            Ok(format!("denoised {n} images with {which} into {}", out.display()))
        }
        Command::Evaluate { input, reference, out, .. } => {
            let report = commands::evaluate(&cfg, &input, reference.as_deref(), &out)?;
            Ok(report.to_string())
        }
        Command::Ablate { out, .. } => Ok(commands::ablate(&cfg, &out)?.table()),
    }
}
