//! `absnet` command-line front end.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use absnet::config::{load_config, Profile, RunConfig};
use absnet::ErrorCategory;
use clap::{CommandFactory, FromArgMatches, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(
    name = "absnet",
    version,
    about = "Predict the relative abstractness of image-text pairs"
)]
pub struct Cli {
    /// TOML config file applied over the profile defaults.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// `key=value` override, applied after the config file (repeatable).
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Default profile; falls back to ABSNET_PROFILE, then desk.
    #[arg(long, global = true, value_enum)]
    pub profile: Option<ProfileArg>,
    /// Root seed for every random draw.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Bit-reproducible training and evaluation.
    #[arg(long, global = true)]
    pub deterministic: bool,
    /// Worker thread cap (0 = all cores).
    #[arg(long, global = true, value_name = "N")]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ProfileArg {
    Desk,
    PaperScale,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RegimeArg {
    Scratch,
    Freeze,
    Transfer,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse a directory of article XML files into a dataset.
    Ingest { xml_dir: PathBuf, out: PathBuf },
    /// Generate a labelled synthetic dataset with a train/test split.
    Synth {
        out: PathBuf,
        #[arg(long, value_name = "N")]
        per_class: usize,
        /// Test pairs per class (defaults to the config value).
        #[arg(long, value_name = "N")]
        test_per_class: Option<usize>,
    },
    /// Build the vocabulary of a dataset's training pairs.
    Vocab {
        dataset: PathBuf,
        #[arg(long, value_name = "N")]
        max: Option<usize>,
    },
    /// Pretrain the autoencoder.
    Pretrain {
        dataset: PathBuf,
        /// Checkpoint directory (default: <dataset>/runs/pretrain_ae).
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
    },
    /// Train the classifier under one regime, then evaluate it.
    Train {
        dataset: PathBuf,
        #[arg(long, value_enum)]
        regime: RegimeArg,
        /// Pretrained checkpoint (required by freeze and transfer).
        #[arg(long, value_name = "CKPT")]
        init: Option<PathBuf>,
        /// Checkpoint directory (default: <dataset>/runs/cl_<regime>).
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
    },
    /// Evaluate checkpoints on the test split; several produce a comparison.
    Eval {
        dataset: PathBuf,
        #[arg(long = "ckpt", value_name = "CKPT", required = true)]
        ckpts: Vec<PathBuf>,
        /// Report directory (default: the checkpoint directory).
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
    },
    /// Classify one image and text.
    Predict {
        #[arg(long, value_name = "CKPT")]
        ckpt: PathBuf,
        #[arg(long, value_name = "FILE")]
        image: PathBuf,
        #[arg(long, value_name = "FILE")]
        text: PathBuf,
        /// Image feature vector for the external-features backbone.
        #[arg(long, value_name = "FILE")]
        features: Option<PathBuf>,
    },
    /// Finite-difference gradient checks.
    Gradcheck {
        #[arg(long, value_name = "NAME")]
        block: Option<String>,
    },
    /// Write original and reconstructed images and texts side by side.
    DumpRecon {
        #[arg(long, value_name = "CKPT")]
        ckpt: PathBuf,
        #[arg(long, value_name = "K")]
        n: usize,
        #[arg(long, value_name = "DIR")]
        dataset: PathBuf,
        /// Output directory (default: <ckpt>/recon).
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
    },
}

/// Every long flag of every subcommand, appended to `--help`.
pub fn flag_index() -> String {
    let cmd = Cli::command();
    let mut s = String::from("Flags by command:\n");
    let line = |name: &str, args: Vec<String>| format!("  {name:<11} {}\n", args.join(" "));
    let flags = |c: &clap::Command| -> Vec<String> {
        c.get_arguments()
            .filter(|a| !a.is_global_set())
            .filter_map(|a| a.get_long().map(|l| format!("--{l}")))
            .collect()
    };
    for sub in cmd.get_subcommands() {
        s.push_str(&line(sub.get_name(), flags(sub)));
    }
    s
}

pub fn command() -> clap::Command {
    Cli::command().after_help(flag_index())
}

pub fn resolve_config(cli: &Cli) -> absnet::Result<RunConfig> {
    let profile = match cli.profile {
        Some(ProfileArg::Desk) => Profile::Desk,
        Some(ProfileArg::PaperScale) => Profile::PaperScale,
        None => match std::env::var("ABSNET_PROFILE") {
            Ok(p) if !p.is_empty() => p.parse()?,
            _ => Profile::Desk,
        },
    };
    let mut overrides = cli.overrides.clone();
    if let Some(seed) = cli.seed {
        overrides.push(format!("seed={seed}"));
    }
    if cli.deterministic {
        overrides.push("deterministic=true".into());
    }
    if let Some(t) = cli.threads {
        overrides.push(format!("threads={t}"));
    }
    load_config(cli.config.as_deref(), profile, &overrides)
}

fn exit_code(cat: ErrorCategory) -> u8 {
    match cat {
        ErrorCategory::Usage => 1,
        ErrorCategory::Data => 2,
        ErrorCategory::Numerical => 3,
    }
}

fn main() -> ExitCode {
    let matches = match command().try_get_matches() {
        Ok(m) => m,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let cli = Cli::from_arg_matches(&matches).expect("matches come from the same definition");
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(e.category()))
        }
    }
}
