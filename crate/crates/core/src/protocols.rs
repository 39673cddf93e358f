//! The four pulse protocols and their timing optimisers.
//!
//! Protocols are built in oscillator units (`m = hbar = omega0 = 1`) and can be
//! rescaled with [`Protocol::in_units`]. Every pulse is placed by its ramp
//! midpoints; `t_i` and `t_o` follow as `rise - 3/eps` and `fall + 3/eps`.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use crate::dynamics::{find_events, solve_ermakov, EventKind, OscillatorConfig};
use crate::error::{invalid, Error, Result};
use crate::ode::Tolerances;
use crate::signals::{PulseSpec, ScalarSignal};
use crate::units::Units;

/// Time tolerance of every shooting solve, in units of `1/omega0`.
pub const SHOOTING_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProtocolKind {
    Displacement,
    Squeeze,
    SinglePulse,
    Train,
    /// User-supplied signals; no timing optimisation.
    Custom,
}

impl ProtocolKind {
    pub fn name(&self) -> &'static str {
        match self {
            ProtocolKind::Displacement => "displacement",
            ProtocolKind::Squeeze => "squeeze",
            ProtocolKind::SinglePulse => "single-pulse",
            ProtocolKind::Train => "train",
            ProtocolKind::Custom => "custom",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "displacement" => Some(ProtocolKind::Displacement),
            "squeeze" => Some(ProtocolKind::Squeeze),
            "single-pulse" => Some(ProtocolKind::SinglePulse),
            "train" => Some(ProtocolKind::Train),
            _ => None,
        }
    }

    pub const ALL: [ProtocolKind; 4] = [
        ProtocolKind::Displacement,
        ProtocolKind::Squeeze,
        ProtocolKind::SinglePulse,
        ProtocolKind::Train,
    ];
}

/// Which signal a pulse edge belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Channel {
    Omega,
    Drive,
}

/// A resolved pulse: ramp midpoints and the `t_i`/`t_o` they imply.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub channel: Channel,
    pub rise_midpoint: f64,
    pub fall_midpoint: f64,
    pub t_i: f64,
    pub t_o: f64,
}

impl Edge {
    fn new(channel: Channel, spec: &PulseSpec) -> Self {
        Edge {
            channel,
            rise_midpoint: spec.rise_midpoint(),
            fall_midpoint: spec.fall_midpoint(),
            t_i: spec.t_i,
            t_o: spec.t_o,
        }
    }
}

/// End-state contract: overlap with the initial state and first/second
/// moments back at the vacuum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SuccessPredicate {
    pub min_fidelity: f64,
    /// Mean tolerance in `q0`/`p0` units.
    pub mean_tol: f64,
    /// Relative covariance tolerance.
    pub cov_rel_tol: f64,
}

impl Default for SuccessPredicate {
    fn default() -> Self {
        SuccessPredicate {
            min_fidelity: 0.999,
            mean_tol: 1e-3,
            cov_rel_tol: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Protocol {
    pub name: String,
    pub kind: ProtocolKind,
    /// Ramp steepness in units of `omega0`.
    pub epsilon: f64,
    pub units: Units,
    pub config: OscillatorConfig,
    pub window: (f64, f64),
    pub checkpoints: Vec<f64>,
    /// Mirror time (squeeze, train) or pulse centre (single pulse).
    pub mirror_time: Option<f64>,
    pub edges: Vec<Edge>,
    pub success: SuccessPredicate,
}

impl Protocol {
    pub fn validate(&self) -> Result<()> {
        let (a, b) = self.window;
        if !(b > a) {
            return Err(invalid("window", "end must exceed start"));
        }
        if let Some(t) = self.checkpoints.iter().find(|&&t| t < a || t > b) {
            return Err(Error::OutsideWindow {
                time: *t,
                start: a,
                end: b,
            });
        }
        self.config.validate(b)
    }

    /// The same protocol expressed for an oscillator with the given
    /// `m`, `hbar`, `omega0`.
    pub fn in_units(&self, units: Units) -> Result<Protocol> {
        units.validate()?;
        let w0 = units.omega0;
        let ts = 1.0 / w0;
        let drive_scale = units.p0() * w0 / (self.units.p0() * self.units.omega0);
        let rel = self.units.omega0 / w0;
        let tsc = ts * self.units.omega0;
        let scale_edge = |e: &Edge| Edge {
            channel: e.channel,
            rise_midpoint: e.rise_midpoint * tsc,
            fall_midpoint: e.fall_midpoint * tsc,
            t_i: e.t_i * tsc,
            t_o: e.t_o * tsc,
        };
        let config = OscillatorConfig {
            mass: units.mass,
            hbar: units.hbar,
            omega: self.config.omega.rescaled(tsc, 1.0 / rel),
            drive: self.config.drive.rescaled(tsc, drive_scale),
            drive_frequency: self.config.drive_frequency / rel,
            drive_phase: self.config.drive_phase,
        };
        Ok(Protocol {
            name: self.name.clone(),
            kind: self.kind,
            epsilon: self.epsilon,
            units,
            config,
            window: (self.window.0 * tsc, self.window.1 * tsc),
            checkpoints: self.checkpoints.iter().map(|t| t * tsc).collect(),
            mirror_time: self.mirror_time.map(|t| t * tsc),
            edges: self.edges.iter().map(scale_edge).collect(),
            success: self.success,
        })
    }
}

fn check_epsilon(epsilon: f64) -> Result<()> {
    if epsilon > 0.0 && epsilon.is_finite() {
        Ok(())
    } else {
        Err(invalid("epsilon", "must be positive and finite"))
    }
}

/// Frequency-only oscillator `omega = 1 + amplitude * sum(Theta)`.
fn omega_config(epsilon: f64, amplitude: f64, edges: &[(f64, f64)]) -> Result<(OscillatorConfig, Vec<PulseSpec>)> {
    let specs = edges
        .iter()
        .map(|&(rise, fall)| PulseSpec::from_midpoints(rise, fall, epsilon))
        .collect::<Result<Vec<_>>>()?;
    let terms: Vec<(f64, PulseSpec)> = specs.iter().map(|s| (amplitude, *s)).collect();
    let mut cfg = OscillatorConfig::constant(Units::default());
    cfg.omega = ScalarSignal::pulse_sum(1.0, 1.0, &terms);
    Ok((cfg, specs))
}

/// `Omega = 2 [Theta(pi, 2 pi) - Theta(3 pi, 4 pi)] p0 omega0` with
/// `omega_d = omega0`, `phi = pi/2`.
pub fn displacement_protocol(epsilon: f64) -> Result<Protocol> {
    check_epsilon(epsilon)?;
    let first = PulseSpec::from_midpoints(PI, 2.0 * PI, epsilon)?;
    let second = PulseSpec::from_midpoints(3.0 * PI, 4.0 * PI, epsilon)?;
    let mut config = OscillatorConfig::constant(Units::default());
    config.drive = ScalarSignal::pulse_sum(2.0, 0.0, &[(1.0, first), (-1.0, second)]);
    config.drive_frequency = 1.0;
    config.drive_phase = 0.5 * PI;
    let protocol = Protocol {
        name: "displacement".into(),
        kind: ProtocolKind::Displacement,
        epsilon,
        units: Units::default(),
        config,
        window: (0.0, 5.0 * PI),
        checkpoints: vec![PI, 1.5 * PI, 2.5 * PI, 3.5 * PI],
        mirror_time: None,
        edges: vec![Edge::new(Channel::Drive, &first), Edge::new(Channel::Drive, &second)],
        success: SuccessPredicate::default(),
    };
    protocol.validate()?;
    Ok(protocol)
}

/// Which `rho'` zero after the last half-protocol edge becomes the mirror
/// time: the `index`-th event of `kind` within one period.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MirrorRule {
    pub kind: EventKind,
    pub index: usize,
}

/// The first half of a mirrored frequency-pulse sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HalfProtocol {
    pub epsilon: f64,
    /// Pulse height in units of `omega0`.
    pub amplitude: f64,
    /// Ramp midpoints `(rise, fall)` of each pulse.
    pub edges: Vec<(f64, f64)>,
    pub rule: MirrorRule,
}

impl HalfProtocol {
    pub fn last_edge(&self) -> f64 {
        self.edges.iter().map(|e| e.1).fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn mirrored_edges(&self, t_m: f64) -> Vec<(f64, f64)> {
        let mut all = self.edges.clone();
        all.extend(self.edges.iter().rev().map(|&(a, b)| (2.0 * t_m - b, 2.0 * t_m - a)));
        all
    }

    pub fn half_config(&self) -> Result<OscillatorConfig> {
        Ok(omega_config(self.epsilon, self.amplitude, &self.edges)?.0)
    }

    pub fn mirrored_config(&self, t_m: f64) -> Result<OscillatorConfig> {
        Ok(omega_config(self.epsilon, self.amplitude, &self.mirrored_edges(t_m))?.0)
    }
}

/// Root of `g` near `guess`, found by widening a bracket inside `window` and
/// bisecting to `tol`, with a closing secant step.
fn shoot<G: FnMut(f64) -> Result<f64>>(mut g: G, guess: f64, window: (f64, f64), tol: f64) -> Result<f64> {
    let mut delta = 0.05;
    let (mut a, mut b, mut ga, mut gb);
    loop {
        a = (guess - delta).max(window.0);
        b = (guess + delta).min(window.1);
        ga = g(a)?;
        gb = g(b)?;
        if ga == 0.0 {
            return Ok(a);
        }
        if gb == 0.0 {
            return Ok(b);
        }
        if (ga < 0.0) != (gb < 0.0) {
            break;
        }
        delta *= 2.0;
        if delta > 1.0 {
            return Err(Error::NoBracket { start: a, end: b });
        }
    }
    while b - a > tol {
        let mid = 0.5 * (a + b);
        let gm = g(mid)?;
        if gm == 0.0 {
            return Ok(mid);
        }
        if (gm < 0.0) == (ga < 0.0) {
            a = mid;
            ga = gm;
        } else {
            b = mid;
            gb = gm;
        }
    }
    Ok(a - ga * (b - a) / (gb - ga))
}

/// Candidate event of `kind` (the `index`-th) in `window`, from a solve of
/// `cfg` that covers the window.
fn candidate(cfg: &OscillatorConfig, kind: EventKind, index: usize, window: (f64, f64), tol: &Tolerances) -> Result<f64> {
    let erm = solve_ermakov(cfg, window.1, tol)?;
    let events = find_events(&erm, kind, window)?;
    if events.degenerate {
        return Err(Error::DegenerateEvent {
            start: window.0,
            end: window.1,
        });
    }
    events.times.get(index).copied().ok_or(Error::NoBracket {
        start: window.0,
        end: window.1,
    })
}

/// `rho'(t)` under `cfg`, solved from zero.
fn rho_dot_at(cfg: &OscillatorConfig, t: f64, tol: &Tolerances) -> Result<f64> {
    Ok(solve_ermakov(cfg, t, tol)?.rho_dot(t))
}

/// Shooting for the mirror time: pick the event named by the rule within one
/// period after the last edge, then make `rho'(t_m) = 0` hold under the
/// fully mirrored sequence.
pub fn optimize_mirror_time(base: &HalfProtocol, tol: &Tolerances) -> Result<f64> {
    check_epsilon(base.epsilon)?;
    if base.edges.is_empty() {
        return Err(invalid("edges", "half protocol has no pulses"));
    }
    let last = base.last_edge();
    let window = (last, last + TAU);
    let guess = candidate(&base.half_config()?, base.rule.kind, base.rule.index, window, tol)?;
    shoot(|t| rho_dot_at(&base.mirrored_config(t)?, t, tol), guess, window, SHOOTING_TOL)
}

fn mirrored_protocol(
    kind: ProtocolKind,
    half: &HalfProtocol,
    t_m: f64,
    checkpoints: Vec<f64>,
) -> Result<Protocol> {
    let (config, specs) = omega_config(half.epsilon, half.amplitude, &half.mirrored_edges(t_m))?;
    let protocol = Protocol {
        name: kind.name().into(),
        kind,
        epsilon: half.epsilon,
        units: Units::default(),
        config,
        window: (0.0, 2.0 * t_m),
        checkpoints,
        mirror_time: Some(t_m),
        edges: specs.iter().map(|s| Edge::new(Channel::Omega, s)).collect(),
        success: SuccessPredicate::default(),
    };
    protocol.validate()?;
    Ok(protocol)
}

/// First pulse of the two-pulse squeeze protocol: midpoints at
/// `9pi/10, 21pi/10` for slow ramps and `7pi/8, 17pi/8` for fast ones.
pub fn squeeze_half(epsilon: f64) -> Result<HalfProtocol> {
    check_epsilon(epsilon)?;
    let edges = if epsilon < 10.0 {
        (0.9 * PI, 2.1 * PI)
    } else {
        (7.0 * PI / 8.0, 17.0 * PI / 8.0)
    };
    Ok(HalfProtocol {
        epsilon,
        amplitude: 1.0,
        edges: vec![edges],
        rule: MirrorRule {
            kind: EventKind::RhoMax,
            index: 1,
        },
    })
}

/// `omega = [1 + Theta(t0, t1) + Theta(t2, t3)] omega0`, second pulse
/// mirrored about the shooting time `t_m`.
pub fn squeeze_protocol(epsilon: f64) -> Result<Protocol> {
    squeeze_protocol_with(epsilon, &Tolerances::default())
}

pub fn squeeze_protocol_with(epsilon: f64, tol: &Tolerances) -> Result<Protocol> {
    let half = squeeze_half(epsilon)?;
    let t_m = optimize_mirror_time(&half, tol)?;
    let (rise, fall) = half.edges[0];
    mirrored_protocol(ProtocolKind::Squeeze, &half, t_m, vec![rise, fall, 11.388, 18.064])
}

/// One frequency pulse of height `amplitude` rising at `rise`, symmetric
/// about the first `rho` minimum so that `rho` and `rho'` return to their
/// initial values.
pub fn single_pulse_return_with(epsilon: f64, amplitude: f64, rise: f64, tol: &Tolerances) -> Result<Protocol> {
    check_epsilon(epsilon)?;
    let window = (rise, rise + TAU);
    let (probe, _) = omega_config(epsilon, amplitude, &[(rise, rise + TAU)])?;
    let guess = candidate(&probe, EventKind::RhoMin, 0, window, tol)?;
    let centre = shoot(
        |t| rho_dot_at(&omega_config(epsilon, amplitude, &[(rise, 2.0 * t - rise)])?.0, t, tol),
        guess,
        (rise + 1e-6, window.1),
        SHOOTING_TOL,
    )?;
    let fall = 2.0 * centre - rise;
    let (config, specs) = omega_config(epsilon, amplitude, &[(rise, fall)])?;
    let protocol = Protocol {
        name: ProtocolKind::SinglePulse.name().into(),
        kind: ProtocolKind::SinglePulse,
        epsilon,
        units: Units::default(),
        config,
        window: (0.0, 2.0 * centre),
        checkpoints: vec![rise, centre, fall, 2.0 * centre],
        mirror_time: Some(centre),
        edges: specs.iter().map(|s| Edge::new(Channel::Omega, s)).collect(),
        success: SuccessPredicate::default(),
    };
    protocol.validate()?;
    Ok(protocol)
}

/// Frequency doubled in one pulse starting at `omega0 t = pi`.
pub fn single_pulse_return(epsilon: f64) -> Result<Protocol> {
    single_pulse_return_with(epsilon, 1.0, PI, &Tolerances::default())
}

/// Greedy edge placement for the first half of the train: each pulse rises
/// at a `rho` maximum and falls at the next `rho` minimum, both enforced under
/// the sequence that includes the pulse being placed.
pub fn train_half(epsilon: f64, half_pulses: usize, amplitude: f64, tol: &Tolerances) -> Result<HalfProtocol> {
    check_epsilon(epsilon)?;
    if half_pulses == 0 {
        return Err(invalid("n_pulses", "need at least two pulses"));
    }
    if !(amplitude > 0.0 && amplitude.is_finite()) {
        return Err(invalid("amplitude", "must be positive and finite"));
    }
    let mut edges: Vec<(f64, f64)> = Vec::with_capacity(half_pulses);
    let mut duration = 0.5 * PI / (1.0 + amplitude);
    for j in 0..half_pulses {
        let rise = if j == 0 {
            PI
        } else {
            let prev = edges[j - 1].1;
            let window = (prev, prev + TAU);
            let (base, _) = omega_config(epsilon, amplitude, &edges)?;
            let guess = candidate(&base, EventKind::RhoMax, 0, window, tol)?;
            shoot(
                |t| {
                    let mut trial = edges.clone();
                    trial.push((t, t + duration));
                    rho_dot_at(&omega_config(epsilon, amplitude, &trial)?.0, t, tol)
                },
                guess,
                (prev + 1e-6, window.1),
                SHOOTING_TOL,
            )?
        };
        let window = (rise, rise + TAU);
        let mut probe = edges.clone();
        probe.push((rise, rise + TAU));
        let guess = candidate(&omega_config(epsilon, amplitude, &probe)?.0, EventKind::RhoMin, 0, window, tol)?;
        let fall = shoot(
            |t| {
                let mut trial = edges.clone();
                trial.push((rise, t));
                rho_dot_at(&omega_config(epsilon, amplitude, &trial)?.0, t, tol)
            },
            guess,
            (rise + 1e-6, window.1),
            SHOOTING_TOL,
        )?;
        duration = fall - rise;
        edges.push((rise, fall));
    }
    Ok(HalfProtocol {
        epsilon,
        amplitude,
        edges,
        rule: MirrorRule {
            kind: EventKind::RhoMax,
            index: 0,
        },
    })
}

/// `omega = [1 + amplitude * sum_j Theta(t_2j, t_2j+1)] omega0`: a greedy
/// first train of `n_pulses / 2` pulses mirrored about `t_m`.
pub fn train_protocol_with(epsilon: f64, n_pulses: usize, amplitude: f64, tol: &Tolerances) -> Result<Protocol> {
    if n_pulses == 0 || !n_pulses.is_multiple_of(2) {
        return Err(invalid("n_pulses", "must be even and positive"));
    }
    let half = train_half(epsilon, n_pulses / 2, amplitude, tol)?;
    let t_m = optimize_mirror_time(&half, tol)?;
    mirrored_protocol(
        ProtocolKind::Train,
        &half,
        t_m,
        vec![PI, 3.363 * PI, 5.772 * PI, 9.136 * PI],
    )
}

pub fn train_protocol(epsilon: f64) -> Result<Protocol> {
    train_protocol_with(epsilon, 10, 0.1, &Tolerances::default())
}

/// Wraps user-supplied signals. Scales are taken from `omega(0)`.
pub fn custom_protocol(config: OscillatorConfig, window: (f64, f64), checkpoints: Vec<f64>) -> Result<Protocol> {
    let protocol = Protocol {
        name: ProtocolKind::Custom.name().into(),
        kind: ProtocolKind::Custom,
        epsilon: config
            .omega
            .pulses()
            .iter()
            .chain(config.drive.pulses().iter())
            .map(|p| p.epsilon / config.omega_initial())
            .fold(0.0, f64::max),
        units: config.units(),
        edges: config
            .omega
            .pulses()
            .iter()
            .map(|s| Edge::new(Channel::Omega, s))
            .chain(config.drive.pulses().iter().map(|s| Edge::new(Channel::Drive, s)))
            .collect(),
        config,
        window,
        checkpoints,
        mirror_time: None,
        success: SuccessPredicate::default(),
    };
    protocol.validate()?;
    if window.0 != 0.0 {
        return Err(invalid("window", "must start at t = 0"));
    }
    Ok(protocol)
}

/// Builds any of the four protocols by kind.
pub fn build_protocol(kind: ProtocolKind, epsilon: f64) -> Result<Protocol> {
    match kind {
        ProtocolKind::Displacement => displacement_protocol(epsilon),
        ProtocolKind::Squeeze => squeeze_protocol(epsilon),
        ProtocolKind::SinglePulse => single_pulse_return(epsilon),
        ProtocolKind::Train => train_protocol(epsilon),
        ProtocolKind::Custom => Err(invalid("protocol", "custom protocols are built from signals")),
    }
}
