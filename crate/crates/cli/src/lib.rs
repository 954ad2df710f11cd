//! The `umo` command-line driver: argument handling, run configuration and
//! the subcommands.

pub mod commands;
pub mod config;
pub mod error;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use error::CliError;

#[derive(Debug, Parser)]
#[command(name = "umo", about = "In-context motion generation pipeline", disable_version_flag = true)]
pub struct Cli {
    /// Worker threads; defaults to all cores.
    #[arg(long)]
    pub threads: Option<usize>,
    /// Single-threaded, ordered execution.
    #[arg(long)]
    pub deterministic: bool,
    /// `key = value` config file applied before overrides.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Print the crate and file format versions.
    #[arg(long)]
    pub version: bool,
    #[command(subcommand)]
    pub command: Option<Command>,
}

/// Settings after the subcommand are `--key value` overrides.
#[derive(Debug, Args)]
pub struct Overrides {
    #[arg(trailing_var_arg = true, allow_hyphen_values = true, num_args = 0..)]
    pub args: Vec<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate trajectory, obstacle, edit and reaction datasets.
    Datagen(Overrides),
    /// Pretrain the text-to-motion model.
    Train(Overrides),
    /// Attach an in-context architecture and train on compiled tasks.
    Finetune(Overrides),
    /// Sample motions for one task.
    Sample(Overrides),
    /// Score a checkpoint, inversion baseline or ground truth.
    Eval(Overrides),
    /// Conditioning overhead table or the token-set ablation.
    Ablate(Overrides),
}

impl Command {
    pub fn name_and_args(&self) -> (&'static str, &[String]) {
        match self {
            Command::Datagen(o) => ("datagen", &o.args),
            Command::Train(o) => ("train", &o.args),
            Command::Finetune(o) => ("finetune", &o.args),
            Command::Sample(o) => ("sample", &o.args),
            Command::Eval(o) => ("eval", &o.args),
            Command::Ablate(o) => ("ablate", &o.args),
        }
    }
}

pub fn version_text() -> String {
    format!(
        "umo {}\nmotion format {} v{}\ncheckpoint format {} v{}\nvocabulary {}\n",
        env!("CARGO_PKG_VERSION"),
        String::from_utf8_lossy(umo_core::motion::MOTION_MAGIC),
        umo_core::motion::MOTION_FORMAT_VERSION,
        String::from_utf8_lossy(umo_nn::checkpoint::CHECKPOINT_MAGIC),
        umo_nn::checkpoint::CHECKPOINT_VERSION,
        umo_core::prompt::Vocab::builtin().hash_hex(),
    )
}

/// Resolves the run configuration of a parsed invocation.
pub fn resolve(cli: &Cli) -> Result<Option<config::RunConfig>, CliError> {
    let Some(cmd) = &cli.command else {
        return Ok(None);
    };
    let (name, args) = cmd.name_and_args();
    let keys = commands::keys_for(name).ok_or_else(|| CliError::Usage(format!("unknown subcommand `{name}`")))?;
    let file = match &cli.config {
        Some(p) => config::parse_file(&std::fs::read_to_string(p)?)?,
        None => Vec::new(),
    };
    let overrides = config::parse_overrides(args)?;
    config::RunConfig::resolve(name, &keys, &file, &overrides).map(Some)
}

/// Sizes the global worker pool.
pub fn set_threads(cli: &Cli) -> Result<(), CliError> {
    let threads = if cli.deterministic { Some(1) } else { cli.threads };
    match threads {
        Some(0) => Err(CliError::Usage("--threads must be positive".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Invalid(format!("thread pool: {e}"))),
        None => Ok(()),
    }
}
