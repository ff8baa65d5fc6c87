use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use stablemc_cli::catalog::{self, CATALOG};
use stablemc_cli::config::{self, SEED_ENV};
use stablemc_cli::error::CliError;

/// Monte Carlo simulation and verification for stable-like jump processes.
#[derive(Parser)]
#[command(name = "stablemc", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every task of an experiment config.
    Run {
        config: PathBuf,
        /// Worker threads (overrides the config; never changes results).
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
    /// Describe the available task kinds.
    ListTasks {
        #[arg(long)]
        json: bool,
        /// Show a single kind.
        #[arg(long)]
        task: Option<String>,
    },
    /// Print the version.
    Version,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("stablemc: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn execute(command: Command) -> Result<(), CliError> {
    match command {
        Command::Run { config, workers, output_dir } => {
            let seed = std::env::var(SEED_ENV).ok();
            let mut cfg = config::load(&config, seed.as_deref())?;
            if let Some(w) = workers {
                cfg.workers = w;
            }
            if let Some(d) = output_dir {
                cfg.output_dir = d;
            }
            stablemc_cli::run(&cfg, |r| println!("{}: {}", r.name, r.summary))?;
            Ok(())
        }
        Command::ListTasks { json, task } => {
            let selected: Vec<_> = match &task {
                Some(kind) => {
                    vec![catalog::find(kind).ok_or_else(|| CliError::Config(format!("unknown task kind `{kind}`")))?]
                }
                None => CATALOG.iter().collect(),
            };
            if json {
                let text = serde_json::to_string_pretty(&selected).map_err(|e| CliError::Io(e.to_string()))?;
                println!("{text}");
            } else {
                print!("{}", catalog::render_text(&selected));
            }
            Ok(())
        }
        Command::Version => {
            println!("stablemc {}", env!("CARGO_PKG_VERSION"));
            Ok(())
        }
    }
}
