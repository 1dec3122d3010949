use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use mpdccp_cli::{list_plugins, paper_suite, run_scenario, CliError};
use mpdccp_core::load_scenario;

#[derive(Parser)]
#[command(name = "mpdccp-sim", version, about = "Multipath tunnel simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario file.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        /// Override the scenario seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// List schedulers and reorder modules.
    ListPlugins {
        #[arg(long)]
        json: bool,
    },
    /// Run every canned scenario into <out>/<name>/.
    PaperSuite {
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// One thread per scenario.
        #[arg(long)]
        parallel: bool,
    },
}

fn execute(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run {
            scenario,
            seed,
            out,
        } => {
            let mut cfg = load_scenario(&scenario)?;
            if let Some(seed) = seed {
                cfg.seed = seed;
            }
            let report = run_scenario(&cfg, &out)?;
            for f in &report.files {
                println!("{}", f.display());
            }
        }
        Command::ListPlugins { json } => print!("{}", list_plugins(json)),
        Command::PaperSuite { out, parallel } => {
            for (name, report) in paper_suite(&out, parallel)? {
                println!(
                    "{name}: sent {} delivered {} dropped {} discarded {}",
                    report.summary.sent,
                    report.summary.delivered,
                    report.summary.dropped,
                    report.summary.discarded
                );
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
