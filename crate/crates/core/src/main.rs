use std::path::PathBuf;
use std::process::ExitCode;

use clap::{CommandFactory, Parser, Subcommand};
use nlse_lab::experiments::{self, RunRequest};

#[derive(Parser)]
#[command(name = "nlse-lab", version, about = "Run nonlinear Schrödinger experiments from JSON configs")]
struct Cli {
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a config file.
    Run {
        config: PathBuf,
        /// Output directory (default: config, then $NLSE_LAB_OUT, then ./nlse-lab-out).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override the configured random seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Suppress the per-check report.
        #[arg(long)]
        quiet: bool,
    },
    /// List the available experiments.
    List,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let status = match cli.command {
        None => {
            print!("{}\n\nExperiments:\n{}", Cli::command().render_help(), experiments::catalog());
            0
        }
        Some(Command::List) => {
            print!("{}", experiments::catalog());
            0
        }
        Some(Command::Run { config, out, seed, quiet }) => experiments::run_file(&RunRequest {
            config_path: &config,
            out: out.as_deref(),
            seed,
            quiet,
        }),
    };
    ExitCode::from(status as u8)
}
