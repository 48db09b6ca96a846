use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use phonon_readout::cli;
use phonon_readout::config::RunConfig;
use phonon_readout::Error;

#[derive(Parser)]
#[command(
    name = "phonon-readout",
    about = "Resonance-fluorescence spectra of a phonon-coupled emitter and phonon number statistics readout",
    version
)]
struct Args {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a spectrum (full, narrow, semiclassical or oracle model)
    Spectrum(CommonArgs),
    /// Fit phonon occupations to a stored spectrum
    Fit(CommonArgs),
    /// Readout-error sweep over the phonon coupling
    Sweep(CommonArgs),
    /// Wigner function of the initial or excited-state phonon density matrix
    Wigner(CommonArgs),
    /// Run the oracle-vs-analytic comparison suite
    OracleCheck(CommonArgs),
}

#[derive(clap::Args)]
struct CommonArgs {
    /// TOML run configuration
    #[arg(long)]
    config: PathBuf,
    /// Output directory (created if missing)
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Overrides the noise/jitter seed from the config
    #[arg(long)]
    seed: Option<u64>,
}

fn exit_code_for(err: &Error) -> u8 {
    match err {
        Error::Io(_) | Error::Parse { .. } => 4,
        Error::Tolerance(_) => 3,
        _ => 2,
    }
}

fn run(command: &Command) -> Result<(), Error> {
    let (name, args, runner): (&str, &CommonArgs, fn(&RunConfig, &std::path::Path, Option<u64>) -> Result<Vec<PathBuf>, Error>) =
        match command {
            Command::Spectrum(a) => ("spectrum", a, cli::run_spectrum),
            Command::Fit(a) => ("fit", a, cli::run_fit),
            Command::Sweep(a) => ("sweep", a, cli::run_sweep),
            Command::Wigner(a) => ("wigner", a, cli::run_wigner),
            Command::OracleCheck(a) => ("oracle-check", a, cli::run_oracle_check),
        };
    let cfg = RunConfig::load(&args.config)?;
    if let Some(echo) = &cfg.command {
        if echo != name {
            return Err(Error::Config(format!(
                "config is for command '{echo}', invoked as '{name}'"
            )));
        }
    }
    let files = runner(&cfg, &args.out, args.seed)?;
    for f in files {
        println!("wrote {}", f.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let args = Args::parse();
    match run(&args.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code_for(&err))
        }
    }
}
