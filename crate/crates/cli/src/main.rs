use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;
mod output;

/// Phonon modes, Huang–Rhys factors, emission lineshapes and defect energetics.
#[derive(Parser, Debug)]
#[command(name = "hrspec", version, about)]
pub struct Cli {
    /// Worker threads for parallel kernels; results do not depend on it.
    #[arg(long, global = true, value_parser = clap::value_parser!(u16).range(1..))]
    threads: Option<u16>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct OutputArgs {
    /// Output directory (created if missing).
    #[arg(long, short)]
    pub out: PathBuf,
    /// Replace existing output files.
    #[arg(long)]
    pub force: bool,
    /// Also write manifest.json with input and output checksums.
    #[arg(long)]
    pub manifest: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Diagonalize a Hessian into Γ-point normal modes.
    Modes(commands::ModesArgs),
    /// Partial Huang–Rhys factors from a geometry pair or force difference.
    Hr(commands::HrArgs),
    /// Emission lineshape by the generating-function route.
    Spectrum(commands::SpectrumArgs),
    /// Franck–Condon ladder spectrum by explicit enumeration.
    Oracle(commands::OracleArgs),
    /// Formation-energy diagrams and charge transition levels.
    Thermo(commands::ThermoArgs),
    /// Cluster dissociation energies.
    Dissoc(commands::DissocArgs),
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n as usize).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    let result = match &cli.command {
        Command::Modes(a) => commands::modes(a),
        Command::Hr(a) => commands::hr(a),
        Command::Spectrum(a) => commands::spectrum(a),
        Command::Oracle(a) => commands::oracle(a),
        Command::Thermo(a) => commands::thermo(a),
        Command::Dissoc(a) => commands::dissoc(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numerical() { 3 } else { 2 })
        }
    }
}
