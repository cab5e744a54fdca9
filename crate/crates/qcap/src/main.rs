use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use qcap::{execute, Command, Invocation};

/// Capacity, modulus and distortion experiments.
#[derive(Debug, Parser)]
#[command(name = "qcap", version)]
struct Cli {
    command: Command,
    /// JSON experiment configuration.
    #[arg(long)]
    config: PathBuf,
    /// Directory for the reports.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Overrides the seed in the configuration.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if e.use_stderr() => {
            let _ = e.print();
            return ExitCode::from(2);
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
    };
    let inv = Invocation {
        command: cli.command,
        config: cli.config,
        out: cli.out,
        seed: cli.seed,
        threads: cli.threads,
    };
    let (code, report) = execute(&inv);
    match serde_json::to_string_pretty(&report) {
        Ok(text) => println!("{text}"),
        Err(e) => eprintln!("qcap: cannot print report: {e}"),
    }
    if let Some(err) = &report.error {
        eprintln!("qcap {}: {}", report.command, err.message);
    }
    ExitCode::from(code as u8)
}
