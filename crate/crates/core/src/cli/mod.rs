//! Command-line driver for the whole flow.
//!
//! Each subcommand runs one stage and reads or writes files in the output
//! directory:
//!
//! | stage | writes |
//! |---|---|
//! | `train` | `model.json`, `latent.json`, `train_log.csv` |
//! | `hat` | `hat_model.json`, `hat_latent.json`, `selected_weights.json`, `hat_log.csv` |
//! | `compile` | `netlist.json`, `netlist.v`, `stats.json` |
//! | `verify` | nothing; exit status 1 on a mismatch |
//! | `report` | `weight_areas.csv`, `stage_exploration.csv`, `comparison.csv` |
//!
//! `run` executes the configured stages in order. Exit codes: 0 success,
//! 1 verification failure, 2 configuration or I/O error, 3 internal error.

mod commands;
mod config;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};
use thiserror::Error;

pub use commands::{
    cmd_compile, cmd_explore_stages, cmd_hat, cmd_rank_weights, cmd_report, cmd_train,
    cmd_verify, CompileStats, ComparisonRow,
};
pub use config::{
    CompileConfig, ModelSource, Paths, PipelineConfig, PruneConfig, ReportConfig, Stage,
    SyntheticConfig, SyntheticKind, VerifyConfig,
};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("verification failed: {0}")]
    Verify(String),
    #[error("internal error: {0}")]
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Verify(_) => 1,
            CliError::Config(_) | CliError::Io { .. } => 2,
            CliError::Internal(_) => 3,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "nnlogic", version, about = "Compile quantized MLPs into weight-embedded logic")]
pub struct Cli {
    /// Pipeline configuration (TOML). Defaults apply when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the training and verification seeds.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Comma-separated stages for `run`, e.g. `train,compile,verify`.
    #[arg(long, global = true, value_delimiter = ',')]
    pub stages: Option<Vec<String>>,
    /// Output directory; overrides `paths.out_dir`.
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,
    /// Worker threads for parallel stages.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, Subcommand, PartialEq, Eq)]
pub enum Command {
    /// Quantization-aware training, optional pruning and width profiling.
    Train,
    /// Hardware-aware training from the QAT model.
    Hat,
    /// Flatten a model into a netlist, pipeline and retime it.
    Compile,
    /// Check the compiled netlist against reference inference.
    Verify,
    /// Write the weight-area, stage-exploration and comparison tables.
    Report,
    /// Write the weight-area table only.
    RankWeights,
    /// Write the stage-exploration table only.
    ExploreStages,
    /// Run the configured stages in order.
    Run,
}

/// Configuration after applying command-line overrides.
pub fn resolve_config(cli: &Cli) -> Result<PipelineConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.train.seed = seed;
        cfg.verify.seed = seed;
    }
    if let Some(dir) = &cli.out_dir {
        cfg.paths.out_dir = Some(dir.clone());
    }
    if let Some(stages) = &cli.stages {
        cfg.stages = stages
            .iter()
            .map(|s| Stage::parse(s).ok_or_else(|| CliError::Config(format!("--stages: unknown stage {s:?}"))))
            .collect::<Result<_, _>>()?;
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn execute(cli: &Cli) -> Result<(), CliError> {
    let cfg = resolve_config(cli)?;
    if let Some(j) = cli.jobs {
        if j == 0 {
            return Err(CliError::Config("--jobs must be positive".into()));
        }
        // a second call in one process keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(j).build_global();
    }
    let out = cfg.out_dir();
    std::fs::create_dir_all(&out).map_err(|source| CliError::Io {
        path: out.clone(),
        source,
    })?;
    match cli.command {
        Command::Train => cmd_train(&cfg),
        Command::Hat => cmd_hat(&cfg),
        Command::Compile => cmd_compile(&cfg).map(|_| ()),
        Command::Verify => cmd_verify(&cfg),
        Command::Report => cmd_report(&cfg),
        Command::RankWeights => cmd_rank_weights(&cfg),
        Command::ExploreStages => cmd_explore_stages(&cfg),
        Command::Run => {
            for stage in &cfg.stages {
                println!("== {}", stage.name());
                match stage {
                    Stage::Train => cmd_train(&cfg)?,
                    Stage::Hat => cmd_hat(&cfg)?,
                    Stage::Compile => {
                        cmd_compile(&cfg)?;
                    }
                    Stage::Verify => cmd_verify(&cfg)?,
                    Stage::Report => cmd_report(&cfg)?,
                }
            }
            Ok(())
        }
    }
}

/// Parse `args` (program name first), run, and return the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
