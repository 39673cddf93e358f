//! Run configuration: what to run, where to write, and how accurately.

use std::path::{Path, PathBuf};

use qho_core::dynamics::OscillatorConfig;
use qho_core::fock::StepPolicy;
use qho_core::ode::Tolerances;
use qho_core::phasespace::GridSpec;
use qho_core::protocols::{build_protocol, custom_protocol, Protocol, ProtocolKind};
use qho_core::signals::ScalarSignal;
use qho_core::units::Units;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

pub const OUT_DIR_ENV: &str = "QHO_OUT_DIR";
pub const DEFAULT_OUT_DIR: &str = "qho-out";

/// Inline signals for a custom run, in physical units. The window and
/// checkpoints are in `omega0 t` with `omega0 = omega(0)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalSpec {
    pub omega: ScalarSignal,
    #[serde(default = "zero_signal")]
    pub drive: ScalarSignal,
    #[serde(default)]
    pub drive_frequency: f64,
    #[serde(default)]
    pub drive_phase: f64,
    pub window: (f64, f64),
    #[serde(default)]
    pub checkpoints: Vec<f64>,
}

fn zero_signal() -> ScalarSignal {
    ScalarSignal::constant(0.0)
}

/// Thresholds for `verify`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VerifyThresholds {
    /// Largest mean difference along the trajectory, `q0`/`p0` units.
    pub mean_tol: f64,
    /// Largest relative covariance difference along the trajectory.
    pub cov_rel_tol: f64,
}

impl Default for VerifyThresholds {
    fn default() -> Self {
        VerifyThresholds {
            mean_tol: 1e-4,
            cov_rel_tol: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub protocol: Option<String>,
    pub signals: Option<SignalSpec>,
    /// Ramp steepness in units of `omega0`.
    pub epsilon: Option<f64>,
    pub units: Units,
    pub out_dir: Option<PathBuf>,
    pub grid: GridSpec,
    /// Output times in `omega0 t`; defaults to the protocol checkpoints.
    pub times: Option<Vec<f64>>,
    pub tolerances: Tolerances,
    pub fock_n: usize,
    /// Uniform samples across the window for trajectory CSVs.
    pub samples: usize,
    pub oracle: StepPolicy,
    pub thresholds: VerifyThresholds,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            protocol: None,
            signals: None,
            epsilon: None,
            units: Units::default(),
            out_dir: None,
            grid: GridSpec::default(),
            times: None,
            tolerances: Tolerances::default(),
            fock_n: 128,
            samples: 201,
            oracle: StepPolicy::default(),
            thresholds: VerifyThresholds::default(),
        }
    }
}

impl RunConfig {
    /// Reads a run config, or the `run_config` block of a manifest.
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        let value: serde_json::Value = serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let inner = match value.get("run_config") {
            Some(rc) => rc.clone(),
            None => value,
        };
        serde_json::from_value(inner).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> CliResult<()> {
        self.units.validate().map_err(CliError::Core)?;
        self.grid.validate().map_err(CliError::Core)?;
        self.tolerances.validate().map_err(CliError::Core)?;
        if self.fock_n < 2 {
            return Err(CliError::Config("fock_n: need at least two levels".into()));
        }
        if self.samples < 2 {
            return Err(CliError::Config("samples: need at least two".into()));
        }
        match (&self.protocol, &self.signals) {
            (Some(_), Some(_)) => Err(CliError::Config("give either protocol or signals, not both".into())),
            (None, None) => Err(CliError::Config("protocol: no protocol or signals given".into())),
            _ => Ok(()),
        }
    }

    /// Output directory: explicit setting, then `QHO_OUT_DIR`, then
    /// `./qho-out`.
    pub fn resolved_out_dir(&self) -> PathBuf {
        self.out_dir
            .clone()
            .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR))
    }

    /// Builds the protocol in the configured units.
    pub fn resolve(&self) -> CliResult<Protocol> {
        self.validate()?;
        if let Some(spec) = &self.signals {
            let config = OscillatorConfig {
                mass: self.units.mass,
                hbar: self.units.hbar,
                omega: spec.omega.clone(),
                drive: spec.drive.clone(),
                drive_frequency: spec.drive_frequency,
                drive_phase: spec.drive_phase,
            };
            let w0 = config.omega_initial();
            if !(w0 > 0.0) {
                return Err(CliError::Config(format!("signals.omega: omega(0) = {w0} must be positive")));
            }
            let scale = 1.0 / w0;
            return custom_protocol(
                config,
                (spec.window.0 * scale, spec.window.1 * scale),
                spec.checkpoints.iter().map(|t| t * scale).collect(),
            )
            .map_err(CliError::from_build);
        }
        let name = self.protocol.as_deref().unwrap_or_default();
        let kind = ProtocolKind::parse(name).ok_or_else(|| {
            CliError::Config(format!(
                "protocol: unknown protocol `{name}` (expected displacement, squeeze, single-pulse or train)"
            ))
        })?;
        let epsilon = self
            .epsilon
            .ok_or_else(|| CliError::Config("epsilon: required for named protocols".into()))?;
        let protocol = build_protocol(kind, epsilon).map_err(CliError::from_build)?;
        if self.units == Units::default() {
            Ok(protocol)
        } else {
            protocol.in_units(self.units).map_err(CliError::from_build)
        }
    }
}

/// Parses `qmin,qmax,pmin,pmax,nq,np`.
pub fn parse_grid(s: &str) -> Result<GridSpec, String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    if parts.len() != 6 {
        return Err(format!("grid: expected qmin,qmax,pmin,pmax,nq,np, got `{s}`"));
    }
    let f = |i: usize| parts[i].parse::<f64>().map_err(|e| format!("grid: `{}`: {e}", parts[i]));
    let n = |i: usize| parts[i].parse::<usize>().map_err(|e| format!("grid: `{}`: {e}", parts[i]));
    GridSpec::new(f(0)?, f(1)?, f(2)?, f(3)?, n(4)?, n(5)?).map_err(|e| e.to_string())
}

/// Parses one time: a number, or a multiple/fraction of `pi` such as
/// `pi`, `3pi/2`, `5.772pi`.
pub fn parse_time(s: &str) -> Result<f64, String> {
    let s = s.trim();
    let bad = || format!("time: cannot parse `{s}`");
    if let Some(idx) = s.find("pi") {
        let (head, tail) = (&s[..idx], &s[idx + 2..]);
        let coeff = match head.trim_end_matches('*') {
            "" => 1.0,
            h => h.parse::<f64>().map_err(|_| bad())?,
        };
        let denom = match tail {
            "" => 1.0,
            t => t.strip_prefix('/').ok_or_else(bad)?.parse::<f64>().map_err(|_| bad())?,
        };
        return Ok(coeff * std::f64::consts::PI / denom);
    }
    s.parse::<f64>().map_err(|_| bad())
}

pub fn parse_times(s: &str) -> Result<Vec<f64>, String> {
    s.split(',').filter(|p| !p.trim().is_empty()).map(parse_time).collect()
}
