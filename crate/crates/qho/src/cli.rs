//! Argument parsing. Flags override the `--config` file, which overrides
//! defaults.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use qho_core::fock::Scheme;
use qho_core::phasespace::GridSpec;

use crate::commands::{cmd_husimi, cmd_simulate, cmd_verify};
use crate::config::{parse_grid, parse_times, RunConfig};
use crate::error::{exit, CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "qho", version, about = "Factorized evolution of the driven time-dependent harmonic oscillator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve the auxiliary equations and export dynamics and Lie factors.
    Simulate(Common),
    /// Export Husimi Q fields at checkpoint times.
    Husimi(Common),
    /// Compare the factorized path with the Fock-basis integrator.
    Verify(VerifyArgs),
}

/// Parsed `--times` value.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeList(pub Vec<f64>);

fn parse_time_list(s: &str) -> Result<TimeList, String> {
    parse_times(s).map(TimeList)
}

#[derive(Debug, Args)]
pub struct Common {
    /// displacement | squeeze | single-pulse | train
    #[arg(long)]
    pub protocol: Option<String>,
    /// Ramp steepness in units of omega0.
    #[arg(long, allow_negative_numbers = true)]
    pub epsilon: Option<f64>,
    /// JSON run config, or a manifest from an earlier run.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory (default: $QHO_OUT_DIR, then ./qho-out).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// qmin,qmax,pmin,pmax,nq,np in q0/p0 units.
    #[arg(long, value_parser = parse_grid, allow_hyphen_values = true)]
    pub grid: Option<GridSpec>,
    /// Comma-separated omega0 t values; `pi` forms such as 3pi/2 accepted.
    #[arg(long, value_parser = parse_time_list, allow_hyphen_values = true)]
    pub times: Option<TimeList>,
    /// Fock basis size.
    #[arg(long)]
    pub fock_n: Option<usize>,
    /// ODE relative tolerance (default 1e-12).
    #[arg(long)]
    pub rtol: Option<f64>,
    /// ODE absolute tolerance (default 1e-14).
    #[arg(long)]
    pub atol: Option<f64>,
    /// Uniform samples across the window in trajectory CSVs.
    #[arg(long)]
    pub samples: Option<usize>,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[command(flatten)]
    pub common: Common,
    /// Oracle steps per period of the fastest frequency.
    #[arg(long)]
    pub steps_per_period: Option<f64>,
    /// Oracle step scheme: cf4 or midpoint.
    #[arg(long)]
    pub scheme: Option<String>,
}

impl Common {
    pub fn into_run_config(self) -> CliResult<RunConfig> {
        let mut rc = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        if let Some(p) = self.protocol {
            rc.protocol = Some(p);
            rc.signals = None;
        }
        if self.epsilon.is_some() {
            rc.epsilon = self.epsilon;
        }
        if self.out.is_some() {
            rc.out_dir = self.out;
        }
        if let Some(g) = self.grid {
            rc.grid = g;
        }
        if let Some(TimeList(ts)) = self.times {
            rc.times = Some(ts);
        }
        if let Some(n) = self.fock_n {
            rc.fock_n = n;
        }
        if let Some(r) = self.rtol {
            rc.tolerances.rtol = r;
        }
        if let Some(a) = self.atol {
            rc.tolerances.atol = a;
        }
        if let Some(s) = self.samples {
            rc.samples = s;
        }
        Ok(rc)
    }
}

impl VerifyArgs {
    pub fn into_run_config(self) -> CliResult<RunConfig> {
        let mut rc = self.common.into_run_config()?;
        if let Some(s) = self.steps_per_period {
            if !(s > 0.0) {
                return Err(CliError::Config("steps-per-period: must be positive".into()));
            }
            rc.oracle.steps_per_period = s;
        }
        if let Some(s) = self.scheme {
            rc.oracle.scheme = match s.as_str() {
                "cf4" => Scheme::Cf4,
                "midpoint" => Scheme::Midpoint,
                other => return Err(CliError::Config(format!("scheme: unknown scheme `{other}`"))),
            };
        }
        Ok(rc)
    }
}

pub fn run(cli: Cli) -> CliResult<Vec<PathBuf>> {
    match cli.command {
        Command::Simulate(c) => cmd_simulate(c.into_run_config()?),
        Command::Husimi(c) => cmd_husimi(c.into_run_config()?),
        Command::Verify(v) => cmd_verify(v.into_run_config()?),
    }
}

/// Parses `args`, runs, prints written paths or the error, and returns the
/// exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { exit::CONFIG } else { exit::OK };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(paths) => {
            for p in paths {
                println!("{}", p.display());
            }
            exit::OK
        }
        Err(e) => {
            eprintln!("qho: {e}");
            e.exit_code()
        }
    }
}
