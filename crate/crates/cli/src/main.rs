//! `ponder`: noise spectra, squeezing summaries and parameter sweeps for a
//! detuned cavity with a movable mirror.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use commands::OracleBreach;

#[derive(Parser)]
#[command(name = "ponder", version, about = "Ponderomotive squeezing model")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct Common {
    /// Run configuration (TOML).
    #[arg(long, short)]
    config: PathBuf,
    /// Output file; defaults to the config's [output] entry, then stdout.
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Derived cavity and optical-spring quantities as JSON.
    Derive(Common),
    /// Per-source noise over the frequency × quadrature grid as long-format CSV.
    Spectrum(Common),
    /// Per-source noise at one quadrature (default: the best one) as CSV.
    Budget {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        angle_deg: Option<f64>,
    },
    /// Best squeezing, its quadrature and band as JSON.
    Summary(Common),
    /// Evaluate every configuration of the [sweep] table.
    Sweep {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Gain and phase margins of the optical-spring loop with the [lock] filter.
    Lock(Common),
    /// Configured mechanical modes and, with a [geometry] table, closed-form estimates.
    Modes(Common),
    /// Engine against closed forms for the configured optics.
    OracleCheck {
        #[arg(long, short)]
        config: PathBuf,
    },
}

fn check_threads() -> anyhow::Result<()> {
    if let Ok(v) = std::env::var(ponder::parallel::THREADS_ENV) {
        if !matches!(v.trim().parse::<usize>(), Ok(n) if n > 0) {
            anyhow::bail!(ponder::Error::invalid(ponder::parallel::THREADS_ENV, format!("must be a positive integer, got {v:?}")));
        }
    }
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<()> {
    check_threads()?;
    let load = |p: &PathBuf| config::parse_file(p);
    match cli.cmd {
        Cmd::Derive(c) => commands::derive_cmd(&load(&c.config)?, c.out.as_deref()),
        Cmd::Spectrum(c) => commands::spectrum_cmd(&load(&c.config)?, c.out.as_deref()),
        Cmd::Budget { common: c, angle_deg } => commands::budget_cmd(&load(&c.config)?, angle_deg, c.out.as_deref()),
        Cmd::Summary(c) => commands::summary_cmd(&load(&c.config)?, c.out.as_deref()),
        Cmd::Sweep { spec, out } => commands::sweep_cmd(&load(&spec)?, out.as_deref()),
        Cmd::Lock(c) => commands::lock_cmd(&load(&c.config)?, c.out.as_deref()),
        Cmd::Modes(c) => commands::modes_cmd(&load(&c.config)?, c.out.as_deref()),
        Cmd::OracleCheck { config } => commands::oracle_check_cmd(&load(&config)?),
    }
    .map(|_| ())
}

/// 1 for bad input, 2 for numerical failure, 3 for an oracle breach.
fn exit_code(e: &anyhow::Error) -> u8 {
    if e.downcast_ref::<OracleBreach>().is_some() {
        return 3;
    }
    match e.downcast_ref::<ponder::Error>() {
        Some(pe) if !pe.is_validation() => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
