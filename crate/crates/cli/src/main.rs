use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use subelliptic_lab::{resolve_threads, run_with_threads, CliError, Command, RunConfig, RunOptions};

#[derive(Parser)]
#[command(name = "subelliptic-lab", version, about = "Numerical checks of functional inequalities on subelliptic spaces")]
struct Cli {
    #[command(subcommand)]
    action: Action,
}

#[derive(clap::Args)]
struct Common {
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Overrides the seed in the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; falls back to SUBELLIPTIC_LAB_THREADS, then all cores.
    #[arg(long)]
    threads: Option<usize>,
    /// Overrides the output directory in the config.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Action {
    /// Run a command: check-estimates, sample, verify:<name>, spi-scan,
    /// spi-probe, isoperimetry, cheeger or report.
    Run {
        command: String,
        #[command(flatten)]
        common: Common,
    },
    /// Shorthand for `run verify:<name>`.
    Verify {
        /// ubound, merged_ubound, hardy, almost_hardy, ckn, fsobolev or spi.
        name: String,
        #[command(flatten)]
        common: Common,
    },
}

fn execute(command: &str, common: &Common) -> Result<i32, CliError> {
    let command: Command = command.parse()?;
    let config = RunConfig::load(&common.config)?;
    let threads = resolve_threads(common.threads)?;
    let opts = RunOptions {
        seed: common.seed,
        out: common.out.clone(),
    };
    let outcome = run_with_threads(command, &config, &opts, threads)?;
    println!("{}: {}", outcome.command, outcome.report_path.display());
    for f in &outcome.status.failures {
        eprintln!("failed: {f}");
    }
    for u in &outcome.status.unreliable {
        eprintln!("unreliable: {u}");
    }
    Ok(outcome.exit_code())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.action {
        Action::Run { command, common } => execute(command, common),
        Action::Verify { name, common } => execute(&format!("verify:{name}"), common),
    };
    match result {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
