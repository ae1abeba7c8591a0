use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use ddrct::cli::{report, run, simulate, Overrides};

/// Distilled doubly robust causal trees.
#[derive(Parser)]
#[command(version, about)]
struct Args {
    #[command(subcommand)]
    command: Command,
    /// Override the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Fit the pipeline described by a TOML config or a run manifest.
    Run { config: PathBuf },
    /// Generate a synthetic dataset and its truth sidecar.
    Simulate { dgp_config: PathBuf },
    /// Re-render nodes.csv and tree.dot from a saved tree.json.
    Report { tree_json: PathBuf },
}

fn main() -> ExitCode {
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) if e.use_stderr() => {
            eprintln!("error[config]: {}", e.kind());
            let _ = e.print();
            return ExitCode::from(2);
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
    };
    let overrides = Overrides {
        seed: args.seed,
        workers: args.workers,
        out: args.out,
    };
    let result = match &args.command {
        Command::Run { config } => run(config, &overrides),
        Command::Simulate { dgp_config } => simulate(dgp_config, &overrides),
        Command::Report { tree_json } => report(tree_json, &overrides),
    };
    match result {
        Ok(out) => {
            println!("{}", out.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            let msg = e.to_string().replace('\n', " ");
            eprintln!("error[{}]: {msg}", e.kind());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
