use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use diwse_cli::{run, CliError, Command, ExperimentConfig, Format};

/// Simulator and security-parameter calculator for device-independent weak
/// string erasure and position verification.
#[derive(Parser)]
#[command(name = "diwse", version)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run seeded weak string erasure executions.
    SimulateWse(Common),
    /// Evaluate the rate formulas over a parameter sweep.
    Rates(Common),
    /// Run the sequential-source attack with one qubit of memory.
    AttackDemo(Common),
    /// Run position verification with an honest prover and cheaters.
    SimulatePv(Common),
    /// Run the invariant suite.
    CheckBounds(Common),
}

#[derive(Args)]
struct Common {
    /// JSON config file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    runs: Option<usize>,
    /// Write the report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    format: Option<Format>,
}

fn load(args: &Common) -> Result<ExperimentConfig, CliError> {
    let mut cfg = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
            ExperimentConfig::from_json(&text)?
        }
        None => ExperimentConfig::default(),
    };
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(r) = args.runs {
        cfg.runs = r;
    }
    if let Some(o) = &args.out {
        cfg.output = Some(o.clone());
    }
    if let Some(f) = args.format {
        cfg.format = f;
    }
    Ok(cfg)
}

fn execute(command: Command, args: &Common) -> Result<Option<String>, CliError> {
    let cfg = load(args)?;
    let out = run(command, &cfg)?;
    match &cfg.output {
        Some(path) => std::fs::write(path, &out.text)?,
        None => print!("{}", out.text),
    }
    if let Some(note) = &out.note {
        eprintln!("{note}");
    }
    Ok(out.failed)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (command, args) = match &cli.command {
        Cmd::SimulateWse(a) => (Command::SimulateWse, a),
        Cmd::Rates(a) => (Command::Rates, a),
        Cmd::AttackDemo(a) => (Command::AttackDemo, a),
        Cmd::SimulatePv(a) => (Command::SimulatePv, a),
        Cmd::CheckBounds(a) => (Command::CheckBounds, a),
    };
    match execute(command, args) {
        Ok(None) => ExitCode::SUCCESS,
        Ok(Some(failed)) => {
            eprintln!("invariant failure: {failed}");
            ExitCode::from(3)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
