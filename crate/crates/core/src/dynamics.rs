//! Ermakov and classical-drive solutions with dense output, plus event
//! detection on the Ermakov trajectory.
//!
//! Both solves start at `t = 0`. The rotation quadrature `int rho^-2` and the
//! phase action `int l(t)` are carried as extra ODE components so they share
//! the integrator's error control.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::ode::{integrate, DenseTrajectory, StepLimits, Tolerances};
use crate::signals::ScalarSignal;
use crate::units::Units;

/// Parameters of `H(t) = p^2/2m + m omega(t)^2 q^2 / 2 + Omega(t) cos(omega_d t + phi) q`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OscillatorConfig {
    pub mass: f64,
    pub hbar: f64,
    /// Trap frequency `omega(t)`; must stay positive.
    pub omega: ScalarSignal,
    /// Drive strength `Omega(t)`.
    pub drive: ScalarSignal,
    pub drive_frequency: f64,
    pub drive_phase: f64,
}

impl OscillatorConfig {
    /// Undriven oscillator with constant frequency `units.omega0`.
    pub fn constant(units: Units) -> Self {
        OscillatorConfig {
            mass: units.mass,
            hbar: units.hbar,
            omega: ScalarSignal::constant(units.omega0),
            drive: ScalarSignal::constant(0.0),
            drive_frequency: units.omega0,
            drive_phase: 0.0,
        }
    }

    pub fn omega_initial(&self) -> f64 {
        self.omega.eval(0.0)
    }

    /// Reference scales taken from the frequency at `t = 0`.
    pub fn units(&self) -> Units {
        Units {
            mass: self.mass,
            hbar: self.hbar,
            omega0: self.omega_initial(),
        }
    }

    /// Drive force term `Omega(t) cos(omega_d t + phi)`.
    pub fn forcing(&self, t: f64) -> f64 {
        self.drive.eval(t) * libm::cos(self.drive_frequency * t + self.drive_phase)
    }

    pub fn step_limits(&self) -> StepLimits {
        let mut windows = self.omega.ramp_windows();
        windows.extend(self.drive.ramp_windows());
        StepLimits {
            h_max: None,
            windows,
            max_steps: None,
        }
    }

    /// Checks the scalar parameters and samples `omega` over `[0, t_end]`.
    pub fn validate(&self, t_end: f64) -> Result<()> {
        if !(self.mass > 0.0 && self.mass.is_finite()) {
            return Err(invalid("mass", "must be positive and finite"));
        }
        if !(self.hbar > 0.0 && self.hbar.is_finite()) {
            return Err(invalid("hbar", "must be positive and finite"));
        }
        if !self.drive_frequency.is_finite() || !self.drive_phase.is_finite() {
            return Err(invalid("drive_frequency", "drive frequency and phase must be finite"));
        }
        self.omega.validate()?;
        self.drive.validate()?;
        if !(t_end > 0.0 && t_end.is_finite()) {
            return Err(invalid("t_end", "must be positive and finite"));
        }
        let mut probes: Vec<f64> = (0..=4096).map(|k| t_end * k as f64 / 4096.0).collect();
        for p in self.omega.pulses() {
            probes.extend([p.rise_midpoint(), p.fall_midpoint()]);
        }
        for t in probes.into_iter().filter(|t| *t >= 0.0 && *t <= t_end) {
            let w = self.omega.eval(t);
            if !(w > 0.0) {
                return Err(Error::NonPositiveFrequency { time: t, value: w });
            }
        }
        Ok(())
    }
}

/// Solution of `rho'' + omega^2 rho = 1/(m^2 rho^3)` with
/// `rho(0) = 1/sqrt(m omega(0))`, `rho'(0) = 0`.
///
/// Components: `rho`, `rho'`, and `I(t) = int_0^t rho^-2`.
#[derive(Debug, Clone)]
pub struct ErmakovSolution {
    traj: DenseTrajectory<3>,
    omega: ScalarSignal,
    mass: f64,
    omega0: f64,
}

impl ErmakovSolution {
    pub fn start(&self) -> f64 {
        self.traj.start()
    }

    pub fn end(&self) -> f64 {
        self.traj.end()
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub fn omega_initial(&self) -> f64 {
        self.omega0
    }

    pub fn trajectory(&self) -> &DenseTrajectory<3> {
        &self.traj
    }

    pub fn grid(&self) -> Vec<f64> {
        self.traj.grid()
    }

    /// Natural scale of `rho`, `1/sqrt(m omega(0))`.
    pub fn rho_scale(&self) -> f64 {
        1.0 / libm::sqrt(self.mass * self.omega0)
    }

    pub fn check_time(&self, t: f64) -> Result<()> {
        if self.traj.contains(t) {
            Ok(())
        } else {
            Err(Error::OutsideWindow {
                time: t,
                start: self.start(),
                end: self.end(),
            })
        }
    }

    pub fn rho(&self, t: f64) -> f64 {
        self.traj.eval(t)[0]
    }

    pub fn rho_dot(&self, t: f64) -> f64 {
        self.traj.eval(t)[1]
    }

    /// `int_0^t rho^-2`.
    pub fn inverse_square_integral(&self, t: f64) -> f64 {
        self.traj.eval(t)[2]
    }

    /// Squeeze parameter `r = ln(sqrt(m omega(0)) rho) / 2`.
    pub fn r(&self, t: f64) -> f64 {
        0.5 * libm::log(libm::sqrt(self.mass * self.omega0) * self.rho(t))
    }

    /// Shear coefficient `-(m/2) rho'/rho`, the weight of `q^2` in the shear
    /// generator.
    pub fn theta_q(&self, t: f64) -> f64 {
        let y = self.traj.eval(t);
        -0.5 * self.mass * y[1] / y[0]
    }

    pub fn phi_q2(&self, t: f64) -> f64 {
        0.5 * self.omega0 * self.inverse_square_integral(t)
    }

    pub fn phi_p2(&self, t: f64) -> f64 {
        self.inverse_square_integral(t) / (2.0 * self.mass * self.mass * self.omega0)
    }

    /// `rho'^2 + omega^2 rho^2 + 1/(m^2 rho^2)`; constant wherever `omega` is.
    pub fn invariant(&self, t: f64) -> f64 {
        let y = self.traj.eval(t);
        let w = self.omega.eval(t);
        y[1] * y[1] + w * w * y[0] * y[0] + 1.0 / (self.mass * self.mass * y[0] * y[0])
    }

    /// Ermakov residual `rho'' + omega^2 rho - 1/(m^2 rho^3)` at `t`, with
    /// `rho''` taken from the derivative of the interpolated `rho'`. Scaled by
    /// `rho_scale * omega(0)^2`.
    pub fn residual(&self, t: f64) -> f64 {
        let y = self.traj.eval(t);
        let dy = self.traj.derivative(t);
        let w = self.omega.eval(t);
        let m = self.mass;
        let res = dy[1] + w * w * y[0] - 1.0 / (m * m * y[0] * y[0] * y[0]);
        res / (self.rho_scale() * self.omega0 * self.omega0)
    }

    /// Root-mean-square residual over step midpoints. The continuous
    /// extension matches the ODE exactly at step ends, so midpoints are
    /// where interpolation error shows.
    pub fn residual_rms(&self) -> f64 {
        let segs = self.traj.segments();
        if segs.is_empty() {
            return 0.0;
        }
        let sum: f64 = segs
            .iter()
            .map(|s| {
                let r = self.residual(s.t + 0.5 * s.h);
                r * r
            })
            .sum();
        libm::sqrt(sum / segs.len() as f64)
    }
}

/// Classical drive: `beta_q'' + omega^2 beta_q = -(Omega/m) cos(omega_d t + phi)`,
/// `beta_p = -m beta_q'`, and the action `L(t) = int_0^t l`.
#[derive(Debug, Clone)]
pub struct DriveSolution {
    traj: DenseTrajectory<3>,
    initial_shift: f64,
}

impl DriveSolution {
    pub fn start(&self) -> f64 {
        self.traj.start()
    }

    pub fn end(&self) -> f64 {
        self.traj.end()
    }

    pub fn trajectory(&self) -> &DenseTrajectory<3> {
        &self.traj
    }

    pub fn check_time(&self, t: f64) -> Result<()> {
        if self.traj.contains(t) {
            Ok(())
        } else {
            Err(Error::OutsideWindow {
                time: t,
                start: self.start(),
                end: self.end(),
            })
        }
    }

    pub fn beta_q(&self, t: f64) -> f64 {
        self.traj.eval(t)[0]
    }

    pub fn beta_p(&self, t: f64) -> f64 {
        self.traj.eval(t)[1]
    }

    pub fn action(&self, t: f64) -> f64 {
        self.traj.eval(t)[2]
    }

    /// `Omega(0) cos(phi) / (m omega(0)^2)`, the position shift applied
    /// before everything else.
    pub fn initial_shift(&self) -> f64 {
        self.initial_shift
    }
}

pub fn solve_ermakov(cfg: &OscillatorConfig, t_end: f64, tol: &Tolerances) -> Result<ErmakovSolution> {
    tol.validate()?;
    cfg.validate(t_end)?;
    let m = cfg.mass;
    let w0 = cfg.omega_initial();
    let rho0 = 1.0 / libm::sqrt(m * w0);
    let omega = &cfg.omega;
    let rhs = |t: f64, y: &[f64; 3]| -> Result<[f64; 3]> {
        let w = omega.eval(t);
        if !(w > 0.0) {
            return Err(Error::NonPositiveFrequency { time: t, value: w });
        }
        let rho = y[0];
        let inv2 = 1.0 / (rho * rho);
        Ok([y[1], -w * w * rho + inv2 / (m * m * rho), inv2])
    };
    let scale = [rho0, rho0 * w0, m];
    let traj = integrate(rhs, 0.0, [rho0, 0.0, 0.0], t_end, tol, &scale, &cfg.step_limits())?;
    Ok(ErmakovSolution {
        traj,
        omega: cfg.omega.clone(),
        mass: m,
        omega0: w0,
    })
}

pub fn solve_drive(cfg: &OscillatorConfig, t_end: f64, tol: &Tolerances) -> Result<DriveSolution> {
    tol.validate()?;
    cfg.validate(t_end)?;
    let m = cfg.mass;
    let w0 = cfg.omega_initial();
    let units = cfg.units();
    let (q0, p0) = (units.q0(), units.p0());
    let initial_shift = cfg.drive.eval(0.0) * libm::cos(cfg.drive_phase) / (m * w0 * w0);
    let rhs = |t: f64, y: &[f64; 3]| -> Result<[f64; 3]> {
        let w = cfg.omega.eval(t);
        let force = cfg.forcing(t);
        let (bq, bp) = (y[0], y[1]);
        let l = bp * bp / (2.0 * m) + 0.5 * m * w * w * bq * bq + force * bq;
        Ok([-bp / m, m * w * w * bq + force, l])
    };
    let scale = [q0, p0, cfg.hbar];
    let traj = integrate(rhs, 0.0, [-initial_shift, 0.0, 0.0], t_end, tol, &scale, &cfg.step_limits())?;
    Ok(DriveSolution { traj, initial_shift })
}

/// Which feature of the Ermakov trajectory to locate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EventKind {
    /// Any zero of `rho'`.
    RhoDotZero,
    /// Zero of `rho'` crossing from positive to negative.
    RhoMax,
    /// Zero of `rho'` crossing from negative to positive.
    RhoMin,
    /// Zero of the shear coefficient; coincides with [`EventKind::RhoDotZero`].
    ShearZero,
}

/// Located events. `degenerate` is set when the event function vanishes
/// identically on the window, in which case `times` is empty.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EventSet {
    pub times: Vec<f64>,
    pub degenerate: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Crossing {
    Any,
    Falling,
    Rising,
}

/// Sign-change roots of `g` on the sample grid `ts`, refined by bisection
/// to `t_tol`.
pub(crate) fn bracketed_roots<G: Fn(f64) -> f64>(g: G, ts: &[f64], dir: Crossing, t_tol: f64) -> Vec<f64> {
    let mut roots = Vec::new();
    let mut prev_t = match ts.first() {
        Some(t) => *t,
        None => return roots,
    };
    let mut prev_g = g(prev_t);
    for &t in &ts[1..] {
        let gt = g(t);
        let hit = if prev_g == 0.0 {
            false
        } else {
            match dir {
                Crossing::Any => (prev_g < 0.0 && gt >= 0.0) || (prev_g > 0.0 && gt <= 0.0),
                Crossing::Falling => prev_g > 0.0 && gt <= 0.0,
                Crossing::Rising => prev_g < 0.0 && gt >= 0.0,
            }
        };
        if hit {
            let (mut a, mut b, mut ga, mut gb) = (prev_t, t, prev_g, gt);
            while b - a > t_tol {
                let mid = 0.5 * (a + b);
                let gm = g(mid);
                if gm == 0.0 {
                    a = mid;
                    b = mid;
                    ga = 0.0;
                    gb = 0.0;
                    break;
                }
                if (gm < 0.0) == (ga < 0.0) {
                    a = mid;
                    ga = gm;
                } else {
                    b = mid;
                    gb = gm;
                }
            }
            let root = if ga == gb { a } else { a - ga * (b - a) / (gb - ga) };
            roots.push(root);
        }
        prev_t = t;
        prev_g = gt;
    }
    roots
}

/// Event detection on the dense Ermakov output over `window = (start, end)`.
pub fn find_events(sol: &ErmakovSolution, kind: EventKind, window: (f64, f64)) -> Result<EventSet> {
    let (start, end) = window;
    if !(end > start) {
        return Err(invalid("window", "end must exceed start"));
    }
    sol.check_time(start)?;
    sol.check_time(end)?;
    let w0 = sol.omega_initial();
    let scale = sol.rho_scale() * w0;

    // Four samples per accepted step inside the window.
    let mut ts = Vec::new();
    ts.push(start);
    for seg in sol.trajectory().segments() {
        if seg.end() <= start || seg.t >= end {
            continue;
        }
        for k in 1..=4 {
            let t = seg.t + seg.h * k as f64 / 4.0;
            if t > start && t < end {
                ts.push(t);
            }
        }
    }
    ts.push(end);

    let g = |t: f64| sol.rho_dot(t) / scale;
    let peak = ts.iter().map(|&t| g(t).abs()).fold(0.0, f64::max);
    if peak < 1e-12 {
        return Ok(EventSet {
            times: Vec::new(),
            degenerate: true,
        });
    }
    let dir = match kind {
        EventKind::RhoDotZero | EventKind::ShearZero => Crossing::Any,
        EventKind::RhoMax => Crossing::Falling,
        EventKind::RhoMin => Crossing::Rising,
    };
    let times = bracketed_roots(g, &ts, dir, 1e-9 / w0);
    Ok(EventSet {
        times,
        degenerate: false,
    })
}

/// One output row of the dynamics CSV.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DynamicsSample {
    pub t: f64,
    pub rho: f64,
    pub rho_dot: f64,
    pub r: f64,
    pub theta_q: f64,
    pub phi_q2: f64,
    pub phi_p2: f64,
    pub beta_q: f64,
    pub beta_p: f64,
    pub action: f64,
}

pub fn sample_dynamics(erm: &ErmakovSolution, drv: &DriveSolution, t: f64) -> Result<DynamicsSample> {
    erm.check_time(t)?;
    drv.check_time(t)?;
    Ok(DynamicsSample {
        t,
        rho: erm.rho(t),
        rho_dot: erm.rho_dot(t),
        r: erm.r(t),
        theta_q: erm.theta_q(t),
        phi_q2: erm.phi_q2(t),
        phi_p2: erm.phi_p2(t),
        beta_q: drv.beta_q(t),
        beta_p: drv.beta_p(t),
        action: drv.action(t),
    })
}
