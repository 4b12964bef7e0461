use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{error, info};
use pcawalk_cli::{run_all, run_stage, CliError, CliResult, RunConfig, Stage};
use pcawalk_core::backend::BackendKind;

#[derive(Parser)]
#[command(name = "pcawalk", version, about = "PCA-guided mated sample generation and evaluation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample and truncate latents, render base samples
    Generate(Common),
    /// Principal components of the base latents
    Pca(Common),
    /// Apply the quality gates to every record
    Filter(Common),
    /// Walk accepted bases along principal components
    Walk(Common),
    /// Compute mated and non-mated comparison scores
    Eval(Common),
    /// Write curves, tables and the summary
    Report(Common),
    /// All stages in order
    Run(Common),
}

#[derive(Clone, Copy, ValueEnum)]
enum BackendArg {
    Toy,
    External,
}

#[derive(Args)]
struct Common {
    /// TOML or JSON run configuration; defaults apply when omitted
    #[arg(long)]
    config: Option<PathBuf>,
    /// Run directory holding every stage's outputs
    #[arg(long)]
    run_dir: PathBuf,
    /// Override backend.kind from the config
    #[arg(long, value_enum)]
    backend: Option<BackendArg>,
}

fn effective_config(c: &Common) -> CliResult<RunConfig> {
    let mut cfg = match &c.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(b) = c.backend {
        cfg.backend.kind = match b {
            BackendArg::Toy => BackendKind::Toy,
            BackendArg::External => BackendKind::External,
        };
    }
    cfg.validate()?;
    info!("effective config:\n{}", cfg.to_toml());
    Ok(cfg)
}

fn execute(command: Command) -> CliResult<()> {
    let (stage, common) = match command {
        Command::Generate(c) => (Some(Stage::Generate), c),
        Command::Pca(c) => (Some(Stage::Pca), c),
        Command::Filter(c) => (Some(Stage::Filter), c),
        Command::Walk(c) => (Some(Stage::Walk), c),
        Command::Eval(c) => (Some(Stage::Eval), c),
        Command::Report(c) => (Some(Stage::Report), c),
        Command::Run(c) => (None, c),
    };
    let cfg = effective_config(&common)?;
    match stage {
        Some(s) => run_stage(s, &cfg, &common.run_dir),
        None => run_all(&cfg, &common.run_dir),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            error!("{e}");
            let mut source = std::error::Error::source(&e);
            if matches!(e, CliError::Backend(_) | CliError::Data(_)) {
                while let Some(s) = source {
                    error!("  caused by: {s}");
                    source = s.source();
                }
            }
            e.exit_code()
        }
    }
}
