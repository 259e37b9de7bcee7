use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod commands;
mod config;
mod error;

use config::{Overrides, RunConfig};
use error::CliError;

/// Classify articles by spreading a few known labels over a k-NN graph of
/// tensor (or tf-idf) embeddings.
#[derive(Parser)]
#[command(name = "tensorprop", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the full pipeline once and write every artifact.
    Run(Overrides),
    /// Run a parameter grid across seeds and write result tables.
    Sweep {
        #[command(flatten)]
        overrides: Overrides,
        /// Grid file (.toml or .json); otherwise the config's [grid] section.
        #[arg(long)]
        grid: Option<PathBuf>,
    },
    /// Print the manifest of a finished run.
    Inspect {
        /// Run directory or manifest file.
        path: PathBuf,
    },
    /// Build the embedding and k-NN graph only.
    ExportGraph(Overrides),
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let mut out_dir = None;
    let result = (|| match cli.command {
        Command::Run(flags) => {
            let config = RunConfig::load(&flags)?;
            out_dir = config.out.clone();
            commands::run(config)
        }
        Command::Sweep { overrides, grid } => {
            let config = RunConfig::load(&overrides)?;
            out_dir = config.out.clone();
            commands::run_sweep(config, grid.as_deref())
        }
        Command::Inspect { path } => commands::inspect(&path),
        Command::ExportGraph(flags) => {
            let config = RunConfig::load(&flags)?;
            out_dir = config.out.clone();
            commands::export_graph(config)
        }
    })();
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => report(&e, out_dir),
    }
}

fn report(e: &CliError, out_dir: Option<PathBuf>) -> ExitCode {
    eprintln!("error: {e}");
    if let Some(dir) = out_dir {
        e.write_record(&dir);
    }
    e.exit_code()
}
