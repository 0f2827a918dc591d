use std::path::PathBuf;
use std::process::ExitCode;

use affine_libor::pricing::PricingMethod;
use affine_libor_cli::{run_command, CliError, Command, RunConfig};
use clap::{Parser, ValueEnum};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Cmd {
    Calibrate,
    Caplet,
    Swaption,
    Surface,
    Validate,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Method {
    Fourier,
    Closed,
}

/// Affine LIBOR model: calibration, pricing, surfaces and validation.
#[derive(Debug, Parser)]
#[command(name = "affine-libor", version)]
struct Args {
    command: Cmd,
    #[arg(long)]
    config: PathBuf,
    /// Output file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides `seed` from the config.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum)]
    method: Option<Method>,
}

fn run(args: &Args) -> Result<bool, CliError> {
    let mut cfg = RunConfig::load(&args.config)?;
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    let cmd = match args.command {
        Cmd::Calibrate => Command::Calibrate,
        Cmd::Caplet => Command::Caplet,
        Cmd::Swaption => Command::Swaption,
        Cmd::Surface => Command::Surface,
        Cmd::Validate => Command::Validate,
    };
    let method = args.method.map(|m| match m {
        Method::Fourier => PricingMethod::Fourier,
        Method::Closed => PricingMethod::Closed,
    });
    let out = run_command(cmd, &cfg, method)?;
    match &args.out {
        Some(p) => std::fs::write(p, &out.text).map_err(|source| CliError::Io {
            path: p.display().to_string(),
            source,
        })?,
        None => print!("{}", out.text),
    }
    Ok(out.passed)
}

fn main() -> ExitCode {
    let args = Args::parse();
    match run(&args) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("error[validation_failed]: one or more checks failed");
            ExitCode::from(3)
        }
        Err(e) => {
            eprintln!("error[{}]: {e}", e.category());
            ExitCode::from(2)
        }
    }
}
