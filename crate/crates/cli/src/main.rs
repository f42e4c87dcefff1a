use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

/// Numerics for the Kowalevski-type top in two constant fields: full-flow
/// simulation, separated-variable integration of the critical subsystems,
/// accessible-region data and randomized identity verification.
#[derive(Parser)]
#[command(name = "kowtop", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate the full nine-dimensional flow and report integral drift.
    Simulate(CommonArgs),
    /// Integrate the separated equations of subsystem N or O, reconstruct
    /// the phase trajectory and compare against direct integration.
    Separate(CommonArgs),
    /// Emit the accessible-region grid and boundary polylines.
    Region(CommonArgs),
    /// Run the randomized identity suites and write a machine-readable
    /// report.
    Verify(CommonArgs),
}

#[derive(clap::Args)]
struct CommonArgs {
    /// Scenario configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Overrides the seed from the configuration.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (defaults to the configuration's `output`).
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (name, args) = match &cli.command {
        Command::Simulate(a) => ("simulate", a),
        Command::Separate(a) => ("separate", a),
        Command::Region(a) => ("region", a),
        Command::Verify(a) => ("verify", a),
    };
    let code = kowtop_cli::run(name, &args.config, args.seed, args.out.as_deref());
    ExitCode::from(code as u8)
}
