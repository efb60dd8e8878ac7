//! `bifloq` command-line entry point.
//!
//! Exit status: 0 on success, 2 for configuration or I/O problems, 3 when a
//! computation fails numerically.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "bifloq", version, about = "Two-frequency Floquet heating simulations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    globals: GlobalArgs,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Multi-spin-flip resonance detunings of a pulse sequence.
    Resonances,
    /// Closed-form kick and multi-flip rates over a detuning sweep.
    RatesAnalytic,
    /// Exact nuclei + electron toy-model heating rates over a detuning sweep.
    SweepExact,
    /// Monte Carlo polarization-transport rates over a detuning sweep.
    SweepMc,
    /// Diagonal-ensemble magnetization of sampled clusters over a detuning sweep.
    Prethermal,
    /// Fit a decay trace or a resonance sweep read from CSV.
    Fit,
}

#[derive(Args)]
struct GlobalArgs {
    /// TOML configuration; defaults apply when omitted
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// output file; stdout when omitted
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// overrides the config seed
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// worker threads (default: all cores)
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// resonance window for the analytic effective generator, fraction of ω_d
    #[arg(long, global = true)]
    tol_eps_res: Option<f64>,
    /// half-width of each Lorentzian fit window, Hz
    #[arg(long, global = true)]
    tol_half_window_hz: Option<f64>,
}

#[derive(Default)]
pub struct Tolerances {
    pub eps_res: Option<f64>,
    pub half_window_hz: Option<f64>,
}

pub struct Globals {
    pub config: Option<PathBuf>,
    pub out: Option<PathBuf>,
    /// seed written to headers
    pub seed: u64,
    pub seed_override: Option<u64>,
    pub tol: Tolerances,
}

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Numerical(String),
}

impl From<bifloq::Error> for CliError {
    fn from(e: bifloq::Error) -> Self {
        use bifloq::Error as E;
        match e {
            E::Numerical(_) | E::Undefined(_) | E::InfiniteRate(_) => CliError::Numerical(e.to_string()),
            _ => CliError::Config(e.to_string()),
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let a = cli.globals;
    if let Some(j) = a.jobs {
        if j == 0 {
            eprintln!("error: --jobs must be at least 1");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(j).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    let g = Globals {
        config: a.config,
        out: a.out,
        seed: a.seed.unwrap_or(0),
        seed_override: a.seed,
        tol: Tolerances { eps_res: a.tol_eps_res, half_window_hz: a.tol_half_window_hz },
    };
    let res = match cli.command {
        Command::Resonances => commands::resonances(&g),
        Command::RatesAnalytic => commands::rates_analytic(&g),
        Command::SweepExact => commands::sweep_exact(&g),
        Command::SweepMc => commands::sweep_mc(&g),
        Command::Prethermal => commands::prethermal(&g),
        Command::Fit => commands::fit(&g),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Config(m)) => {
            eprintln!("config error: {m}");
            ExitCode::from(2)
        }
        Err(CliError::Numerical(m)) => {
            eprintln!("numerical failure: {m}");
            ExitCode::from(3)
        }
    }
}
