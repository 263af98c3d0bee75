//! Command-line front end for the `perfridge` library.

pub mod commands;
pub mod error;
pub mod output;
pub mod params;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};
use serde::Serialize;
use serde_json::Value;

use commands::{fixed_point, population_sweep, prop_sweep, real, tau, theorem3};
pub use error::CliError;
use output::{Format, Report};
use params::{read_config, resolve};

#[derive(Debug, Parser)]
#[command(name = "perfridge", version, about = "Performative ridge regression experiments")]
pub struct Cli {
    /// Master seed for every random stream.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output file; secondary tables go next to it. Stdout when omitted.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    /// JSON object with parameter values; flags take precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    Tau(tau::Flags),
    PopulationSweep(population_sweep::Flags),
    PropSweep(prop_sweep::Flags),
    Real(real::Flags),
    Theorem3(theorem3::Flags),
    FixedPoint(fixed_point::Flags),
}

fn flags_with_seed(flags: &impl Serialize, seed: Option<u64>) -> Value {
    let mut v = serde_json::to_value(flags).expect("flags serialize");
    if let Some(s) = seed {
        v["seed"] = s.into();
    }
    v
}

/// Resolve parameters and run the selected subcommand.
pub fn execute(cli: &Cli) -> Result<(Report, Format), CliError> {
    let cfg = cli.config.as_deref().map(read_config).transpose()?;
    let s = cli.seed;
    let (report, default_format) = match &cli.command {
        Command::Tau(f) => (tau::run(resolve(cfg, &flags_with_seed(f, s))?)?, Format::Text),
        Command::PopulationSweep(f) => (population_sweep::run(resolve(cfg, &flags_with_seed(f, s))?)?, Format::Csv),
        Command::PropSweep(f) => (prop_sweep::run(resolve(cfg, &flags_with_seed(f, s))?)?, Format::Csv),
        Command::Real(f) => (real::run(resolve(cfg, &flags_with_seed(f, s))?)?, Format::Csv),
        Command::Theorem3(f) => (theorem3::run(resolve(cfg, &flags_with_seed(f, s))?)?, Format::Csv),
        Command::FixedPoint(f) => (fixed_point::run(resolve(cfg, &flags_with_seed(f, s))?)?, Format::Csv),
    };
    Ok((report, cli.format.unwrap_or(default_format)))
}

/// Size the global rayon pool from `PERFRIDGE_THREADS` (0 or unset = automatic).
pub fn init_threads() -> Result<(), CliError> {
    let Ok(raw) = std::env::var("PERFRIDGE_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .map_err(|_| CliError::usage(format!("PERFRIDGE_THREADS = {raw:?} is not a non-negative integer")))?;
    if n > 0 {
        // A pool built earlier in the same process is fine to keep.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(())
}

/// Full program: parse, run, write. Returns the process exit status.
pub fn run_main<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code() as u8;
        }
    };
    let result = init_threads().and_then(|_| execute(&cli)).and_then(|(report, format)| {
        report.emit(format, cli.out.as_deref())?;
        Ok(report)
    });
    match result {
        Ok(r) if r.failures > 0 => {
            eprintln!("perfridge {}: {} point(s) failed; see the status column", r.command, r.failures);
            1
        }
        Ok(_) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
