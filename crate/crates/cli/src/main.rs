//! `rdsw <command> --config <file> [--seed N] [--out DIR] [--threads K]`

mod commands;
mod config;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::Parser;

use crate::config::{CommandName, ExperimentConfig};
use crate::error::CliError;
use crate::output::{create_dir, to_json_string, write_file, Manifest};

const DEFAULT_SEED: u64 = 1;
const DEFAULT_OUT: &str = "rdsw-out";

#[derive(Debug, Parser)]
#[command(name = "rdsw", version, about = "Experiments on random dynamical systems")]
struct Cli {
    command: CommandName,
    /// TOML experiment file; optional for `verify` and `gallery`.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the seed of the configuration file.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; overrides `output` of the configuration file.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; results do not depend on this.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    threads: Option<u64>,
    /// Acceptance case for `verify` (all cases when absent).
    #[arg(long)]
    case: Option<u32>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(cli: &Cli) -> Result<(), CliError> {
    if cli.command == CommandName::Gallery {
        commands::print_gallery();
        return Ok(());
    }
    let cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None if cli.command == CommandName::Verify => ExperimentConfig::empty(),
        None => return Err(CliError::Invalid("--config is required for this command".into())),
    };
    if let Some(c) = cfg.command {
        if c != cli.command {
            return Err(CliError::Invalid(format!(
                "configuration is for `{c}` but `{}` was requested",
                cli.command
            )));
        }
    }
    let seed = cli.seed.or(cfg.seed).unwrap_or(DEFAULT_SEED);
    let threads = cli.threads.map(|t| t as usize).or(cfg.threads);
    let out_dir = cli
        .out
        .clone()
        .or_else(|| cfg.output.clone())
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.unwrap_or(0))
        .build()
        .map_err(|e| CliError::Pool(e.to_string()))?;

    let start = Instant::now();
    let mut failed = 0;
    let artifacts = pool.install(|| match cli.command {
        CommandName::Stationary => commands::stationary(&cfg, seed),
        CommandName::Sync => commands::sync(&cfg, seed),
        CommandName::Limits => commands::limits(&cfg, seed),
        CommandName::Lyapunov => commands::lyapunov(&cfg, seed),
        CommandName::Ld => commands::ld(&cfg, seed),
        CommandName::Cocycle => commands::cocycle(&cfg, seed),
        CommandName::Ulam => commands::ulam(&cfg, seed),
        CommandName::Verify => {
            let cases: Vec<u32> = match cli.case.or(cfg.params.case) {
                Some(c) => vec![c],
                None => (1..=rdsw_core::verify::CASE_COUNT).collect(),
            };
            commands::verify_cases(&cases).map(|(a, f)| {
                failed = f;
                a
            })
        }
        CommandName::Gallery => unreachable!("handled above"),
    })?;
    let wall = start.elapsed().as_secs_f64();

    let dir = create_dir(&out_dir)?;
    let files = artifacts.write(&dir, cfg.format)?;
    let manifest = Manifest {
        tool: "rdsw",
        cli_version: env!("CARGO_PKG_VERSION"),
        core_version: rdsw_core::VERSION,
        command: cli.command.to_string(),
        seed,
        threads,
        format: cfg.format,
        config_path: cli.config.as_ref().map(|p| p.display().to_string()),
        config: serde_json::to_value(&cfg.echo).expect("toml tables serialize"),
        files,
        wall_time_seconds: wall,
    };
    let value = serde_json::to_value(&manifest).expect("manifest serializes");
    write_file(&dir.join("manifest.json"), &to_json_string(&value))?;
    eprintln!("wrote {} files to {}", manifest.files.len() + 1, dir.display());
    if failed > 0 {
        return Err(CliError::Acceptance(failed));
    }
    Ok(())
}
