//! The three subcommands. Each returns the written paths or a [`CliError`]
//! whose exit code is the only pass/fail channel.

use std::path::PathBuf;

use qho_core::dynamics::{sample_dynamics, solve_drive, solve_ermakov, DriveSolution, ErmakovSolution, OscillatorConfig};
use qho_core::fock::{evolve, fidelity, observables, FockBasis, FockState, Moments};
use qho_core::liegroup::{assemble_factorization, propagate_gaussian, GaussianState, LieFactors};
use qho_core::ode::Tolerances;
use qho_core::phasespace::{husimi_gaussian, husimi_normalization, GridSpec};
use qho_core::protocols::{Channel, Protocol, ProtocolKind, SuccessPredicate};
use qho_core::units::Units;
use serde::{Deserialize, Serialize};

use crate::config::{RunConfig, VerifyThresholds};
use crate::error::{CliError, CliResult};
use crate::output::{time_tag, Artifact, OutputDir, Table};

pub const DYNAMICS_HEADER: [&str; 10] = ["t", "rho", "rho_dot", "r", "theta_q", "phi_q2", "phi_p2", "beta_q", "beta_p", "L"];
pub const FACTORS_HEADER: [&str; 8] = ["t", "beta_q", "beta_p", "theta_q", "r", "phi_q", "phi_p", "L"];
pub const HUSIMI_HEADER: [&str; 3] = ["q_over_q0", "p_over_p0", "Q"];
pub const ORACLE_HEADER: [&str; 7] = ["t", "mean_q", "mean_p", "var_q", "var_p", "cov_qp", "fidelity_vs_factorized"];
pub const DELTAS_HEADER: [&str; 6] = ["t", "d_mean_q", "d_mean_p", "d_var_q", "d_var_p", "d_cov_qp"];

/// A pulse edge as recorded in manifests, in `omega0 t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeRecord {
    pub channel: Channel,
    pub rise_midpoint: f64,
    pub fall_midpoint: f64,
    pub t_i: f64,
    pub t_o: f64,
    pub rule: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolRecord {
    pub name: String,
    pub kind: ProtocolKind,
    pub epsilon: f64,
    pub units: Units,
    pub window: (f64, f64),
    pub checkpoints: Vec<f64>,
    pub mirror_time: Option<f64>,
    pub edges: Vec<EdgeRecord>,
    pub success: SuccessPredicate,
    pub config: OscillatorConfig,
}

impl ProtocolRecord {
    pub fn new(p: &Protocol) -> Self {
        let w0 = p.config.omega_initial();
        let eps = p.epsilon;
        ProtocolRecord {
            name: p.name.clone(),
            kind: p.kind,
            epsilon: eps,
            units: p.units,
            window: (p.window.0 * w0, p.window.1 * w0),
            checkpoints: p.checkpoints.iter().map(|t| t * w0).collect(),
            mirror_time: p.mirror_time.map(|t| t * w0),
            edges: p
                .edges
                .iter()
                .map(|e| EdgeRecord {
                    channel: e.channel,
                    rise_midpoint: e.rise_midpoint * w0,
                    fall_midpoint: e.fall_midpoint * w0,
                    t_i: e.t_i * w0,
                    t_o: e.t_o * w0,
                    rule: format!("t_i = rise - 3/eps, t_o = fall + 3/eps (eps = {eps} omega0)"),
                })
                .collect(),
            success: p.success,
            config: p.config.clone(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub run_config: RunConfig,
    pub protocol: ProtocolRecord,
    pub tolerances: Tolerances,
    pub artifacts: Vec<Artifact>,
    pub summary: serde_json::Value,
}

fn manifest(command: &str, run: &RunConfig, p: &Protocol, out: &OutputDir, summary: serde_json::Value) -> Manifest {
    Manifest {
        tool: env!("CARGO_PKG_NAME").into(),
        version: env!("CARGO_PKG_VERSION").into(),
        command: command.into(),
        run_config: run.clone(),
        protocol: ProtocolRecord::new(p),
        tolerances: run.tolerances,
        artifacts: out.artifacts().to_vec(),
        summary,
    }
}

/// Everything a command needs, resolved once.
pub struct Prepared {
    pub run: RunConfig,
    pub protocol: Protocol,
    pub omega0: f64,
}

impl Prepared {
    pub fn new(run: RunConfig) -> CliResult<Self> {
        let protocol = run.resolve()?;
        let omega0 = protocol.config.omega_initial();
        Ok(Prepared { run, protocol, omega0 })
    }

    fn window(&self) -> (f64, f64) {
        self.protocol.window
    }

    /// Requested output times (physical), checked against the window.
    fn requested_times(&self) -> CliResult<Vec<f64>> {
        let (a, b) = self.window();
        let times: Vec<f64> = match &self.run.times {
            Some(ts) => ts.iter().map(|t| t / self.omega0).collect(),
            None => self.protocol.checkpoints.clone(),
        };
        for &t in &times {
            if !(t >= a && t <= b) {
                return Err(CliError::OutOfWindow {
                    time: t * self.omega0,
                    start: a * self.omega0,
                    end: b * self.omega0,
                });
            }
        }
        Ok(times)
    }

    /// Uniform samples across the window merged with the requested times.
    fn trajectory_times(&self) -> CliResult<Vec<f64>> {
        let (a, b) = self.window();
        let n = self.run.samples;
        let mut ts: Vec<f64> = (0..n).map(|k| a + (b - a) * k as f64 / (n - 1) as f64).collect();
        ts.extend(self.requested_times()?);
        ts.sort_by(f64::total_cmp);
        ts.dedup();
        Ok(ts)
    }

    fn solve(&self) -> CliResult<(ErmakovSolution, DriveSolution)> {
        let end = self.window().1;
        let tol = &self.run.tolerances;
        let erm = solve_ermakov(&self.protocol.config, end, tol).map_err(|e| CliError::from_solver(e, self.omega0))?;
        let drv = solve_drive(&self.protocol.config, end, tol).map_err(|e| CliError::from_solver(e, self.omega0))?;
        Ok((erm, drv))
    }

    fn vacuum(&self) -> GaussianState {
        GaussianState::vacuum(&self.protocol.config.units())
    }
}

/// End-state comparison with the initial vacuum, in `q0`/`p0` units and
/// relative covariance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EndState {
    pub mean_q: f64,
    pub mean_p: f64,
    pub max_cov_rel: f64,
}

/// `|a - b|_ij / sqrt(b_ii b_jj)`, maximised over entries.
pub fn cov_rel_delta(a: [[f64; 2]; 2], b: [[f64; 2]; 2]) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..2 {
        for j in 0..2 {
            worst = worst.max((a[i][j] - b[i][j]).abs() / (b[i][i] * b[j][j]).sqrt());
        }
    }
    worst
}

pub fn end_state(state: &GaussianState, vacuum: &GaussianState) -> EndState {
    EndState {
        mean_q: (state.mean[0] - vacuum.mean[0]) / vacuum.q0,
        mean_p: (state.mean[1] - vacuum.mean[1]) / vacuum.p0,
        max_cov_rel: cov_rel_delta(state.cov, vacuum.cov),
    }
}

fn contract_holds(e: &EndState, s: &SuccessPredicate) -> bool {
    e.mean_q.abs() <= s.mean_tol && e.mean_p.abs() <= s.mean_tol && e.max_cov_rel <= s.cov_rel_tol
}

pub fn cmd_simulate(run: RunConfig) -> CliResult<Vec<PathBuf>> {
    let prep = Prepared::new(run)?;
    let times = prep.trajectory_times()?;
    let (erm, drv) = prep.solve()?;
    let w0 = prep.omega0;
    let mut dynamics = Table::new(&DYNAMICS_HEADER);
    let mut factors = Table::new(&FACTORS_HEADER);
    for &t in &times {
        let d = sample_dynamics(&erm, &drv, t).map_err(|e| CliError::from_solver(e, w0))?;
        dynamics.push(vec![t * w0, d.rho, d.rho_dot, d.r, d.theta_q, d.phi_q2, d.phi_p2, d.beta_q, d.beta_p, d.action]);
        let f = assemble_factorization(&erm, &drv, t).map_err(|e| CliError::from_solver(e, w0))?;
        factors.push(vec![t * w0, f.beta_q, f.beta_p, f.theta_q, f.r, f.phi_q, f.phi_p, f.action]);
    }
    let end = prep.window().1;
    let f_end = assemble_factorization(&erm, &drv, end).map_err(|e| CliError::from_solver(e, w0))?;
    let vac = prep.vacuum();
    let end_state = end_state(&propagate_gaussian(&vac, &f_end), &vac);
    let summary = serde_json::json!({
        "samples": times.len(),
        "mirror_time": prep.protocol.mirror_time.map(|t| t * w0),
        "ermakov_residual_rms": erm.residual_rms(),
        "ermakov_steps": erm.trajectory().segments().len(),
        "end_state": end_state,
        "end_contract_pass": prep.protocol.kind == ProtocolKind::Custom || contract_holds(&end_state, &prep.protocol.success),
    });

    let mut out = OutputDir::create(&prep.run.resolved_out_dir())?;
    let mut paths = vec![
        out.write_table("dynamics.csv", &dynamics)?,
        out.write_table("factors.csv", &factors)?,
        out.write_json("protocol.json", &ProtocolRecord::new(&prep.protocol))?,
    ];
    paths.push(out.write_manifest("manifest.json", &manifest("simulate", &prep.run, &prep.protocol, &out, summary))?);
    Ok(paths)
}

/// JSON written next to each Husimi CSV.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HusimiSidecar {
    pub protocol: String,
    pub epsilon: f64,
    /// `omega0 t`.
    pub time: f64,
    pub grid: GridSpec,
    pub normalization: f64,
    pub peak: f64,
    pub peak_at: (f64, f64),
    pub mean: [f64; 2],
    pub cov: [[f64; 2]; 2],
    pub principal_ratio: f64,
    pub factors: LieFactors,
    pub csv: String,
}

pub fn cmd_husimi(run: RunConfig) -> CliResult<Vec<PathBuf>> {
    let prep = Prepared::new(run)?;
    let times = prep.requested_times()?;
    let (erm, drv) = prep.solve()?;
    let w0 = prep.omega0;
    let vac = prep.vacuum();
    let grid = prep.run.grid;
    let mut out = OutputDir::create(&prep.run.resolved_out_dir())?;
    let mut paths = Vec::new();
    let mut norms = Vec::new();
    for &t in &times {
        let f = assemble_factorization(&erm, &drv, t).map_err(|e| CliError::from_solver(e, w0))?;
        let state = propagate_gaussian(&vac, &f);
        let field = husimi_gaussian(&state, &grid).map_err(CliError::Core)?;
        let mut table = Table::new(&HUSIMI_HEADER);
        for ((q, p), v) in grid.points().zip(&field.values) {
            table.push(vec![q, p, *v]);
        }
        let tag = time_tag(t * w0);
        let csv_name = format!("husimi_wt{tag}.csv");
        paths.push(out.write_table(&csv_name, &table)?);
        let (i, j) = field.argmax();
        let norm = husimi_normalization(&field);
        norms.push(norm);
        let sidecar = HusimiSidecar {
            protocol: prep.protocol.name.clone(),
            epsilon: prep.protocol.epsilon,
            time: t * w0,
            grid,
            normalization: norm,
            peak: field.max(),
            peak_at: (grid.q_at(i), grid.p_at(j)),
            mean: state.mean,
            cov: state.cov,
            principal_ratio: state.principal_ratio(),
            factors: f,
            csv: csv_name,
        };
        paths.push(out.write_json(&format!("husimi_wt{tag}.json"), &sidecar)?);
    }
    let summary = serde_json::json!({
        "times": times.iter().map(|t| t * w0).collect::<Vec<_>>(),
        "normalizations": norms,
    });
    paths.push(out.write_manifest("husimi_manifest.json", &manifest("husimi", &prep.run, &prep.protocol, &out, summary))?);
    Ok(paths)
}

/// Summary written by `verify`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VerifyReport {
    pub protocol: String,
    pub epsilon: f64,
    pub fock_n: usize,
    pub samples: usize,
    pub thresholds: VerifyThresholds,
    pub success: SuccessPredicate,
    pub max_mean_delta: f64,
    pub max_cov_rel_delta: f64,
    pub min_fidelity_vs_factorized: f64,
    pub end_fidelity: f64,
    pub factorized_end: EndState,
    pub max_top_population: f64,
    pub breaches: Vec<String>,
    pub error: Option<String>,
    pub pass: bool,
    pub run_config: RunConfig,
    pub artifacts: Vec<Artifact>,
}

fn fock_moments_row(t: f64, m: &Moments, fid: f64) -> Vec<f64> {
    vec![t, m.mean_q, m.mean_p, m.var_q, m.var_p, m.cov_qp, fid]
}

pub fn cmd_verify(run: RunConfig) -> CliResult<Vec<PathBuf>> {
    let prep = Prepared::new(run)?;
    let times = prep.trajectory_times()?;
    let w0 = prep.omega0;
    let n = prep.run.fock_n;
    let cfg = &prep.protocol.config;
    let basis = FockBasis::for_config(cfg, n).map_err(CliError::Core)?;
    let start = prep.window().0;

    // The two paths share nothing but inputs.
    let (factorized, oracle) = std::thread::scope(|s| {
        let fact = s.spawn(|| -> CliResult<Vec<LieFactors>> {
            let (erm, drv) = prep.solve()?;
            times
                .iter()
                .map(|&t| assemble_factorization(&erm, &drv, t).map_err(|e| CliError::from_solver(e, w0)))
                .collect()
        });
        let fock = s.spawn(|| evolve(&basis, &FockState::vacuum(n), cfg, start, &times, &prep.run.oracle));
        (fact.join().expect("factorized path panicked"), fock.join().expect("oracle path panicked"))
    });
    let factors = factorized?;

    let mut out = OutputDir::create(&prep.run.resolved_out_dir())?;
    let vac = prep.vacuum();
    let mut report = VerifyReport {
        protocol: prep.protocol.name.clone(),
        epsilon: prep.protocol.epsilon,
        fock_n: n,
        samples: times.len(),
        thresholds: prep.run.thresholds,
        success: prep.protocol.success,
        max_mean_delta: 0.0,
        max_cov_rel_delta: 0.0,
        min_fidelity_vs_factorized: 1.0,
        end_fidelity: f64::NAN,
        factorized_end: end_state(&propagate_gaussian(&vac, factors.last().expect("samples")), &vac),
        max_top_population: 0.0,
        breaches: Vec::new(),
        error: None,
        pass: false,
        run_config: prep.run.clone(),
        artifacts: Vec::new(),
    };
    let states = match oracle {
        Ok(s) => s,
        Err(e) => {
            let err = CliError::from_solver(e, w0);
            report.error = Some(err.to_string());
            out.write_manifest("verify_report.json", &report)?;
            return Err(err);
        }
    };

    let mut oracle_table = Table::new(&ORACLE_HEADER);
    let mut deltas = Table::new(&DELTAS_HEADER);
    let th = prep.run.thresholds;
    for ((&t, f), psi) in times.iter().zip(&factors).zip(&states) {
        let g = propagate_gaussian(&vac, f);
        let m = observables(psi, &basis);
        let fid = fidelity(&FockState::vacuum(n).factorized(&basis, f), psi).map_err(CliError::Core)?;
        oracle_table.push(fock_moments_row(t * w0, &m, fid));
        let dq = (m.mean_q - g.mean[0]) / vac.q0;
        let dp = (m.mean_p - g.mean[1]) / vac.p0;
        let sc = |i: usize, j: usize| (g.cov[i][i] * g.cov[j][j]).sqrt();
        let dvq = (m.var_q - g.cov[0][0]) / sc(0, 0);
        let dvp = (m.var_p - g.cov[1][1]) / sc(1, 1);
        let dc = (m.cov_qp - g.cov[0][1]) / sc(0, 1);
        deltas.push(vec![t * w0, dq, dp, dvq, dvp, dc]);
        report.max_mean_delta = report.max_mean_delta.max(dq.abs()).max(dp.abs());
        report.max_cov_rel_delta = report.max_cov_rel_delta.max(dvq.abs()).max(dvp.abs()).max(dc.abs());
        report.min_fidelity_vs_factorized = report.min_fidelity_vs_factorized.min(fid);
        report.max_top_population = report.max_top_population.max(psi.top_population().1);
    }
    let last = states.last().expect("samples");
    report.end_fidelity = fidelity(last, &FockState::vacuum(n)).map_err(CliError::Core)?;

    if report.max_mean_delta > th.mean_tol {
        report.breaches.push(format!("mean delta {:e} > {:e}", report.max_mean_delta, th.mean_tol));
    }
    if report.max_cov_rel_delta > th.cov_rel_tol {
        report.breaches.push(format!("covariance delta {:e} > {:e}", report.max_cov_rel_delta, th.cov_rel_tol));
    }
    if prep.protocol.kind != ProtocolKind::Custom {
        let s = prep.protocol.success;
        if !(report.end_fidelity >= s.min_fidelity) {
            report.breaches.push(format!("end fidelity {} < {}", report.end_fidelity, s.min_fidelity));
        }
        if !contract_holds(&report.factorized_end, &s) {
            report.breaches.push(format!("factorized end state {:?} outside the success predicate", report.factorized_end));
        }
    }
    report.pass = report.breaches.is_empty();

    let mut paths = vec![out.write_table("oracle.csv", &oracle_table)?, out.write_table("verify_deltas.csv", &deltas)?];
    report.artifacts = out.artifacts().to_vec();
    paths.push(out.write_manifest("verify_report.json", &report)?);
    if report.pass {
        Ok(paths)
    } else {
        Err(CliError::Threshold(report.breaches.clone()))
    }
}
