//! Time-dependent parameter functions: erf ramp pulses and affine
//! combinations of them, each with an analytic first derivative.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::special::{erf, erf_prime};

/// Step cap inside ramp windows, in units of `1/epsilon`.
pub const RAMP_STEP: f64 = 0.05;

/// A smooth rectangular pulse made from two erf ramps.
///
/// The rising ramp is centred at `t_i + 3/epsilon` and the falling ramp at
/// `t_o - 3/epsilon`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PulseSpec {
    pub t_i: f64,
    pub t_o: f64,
    pub epsilon: f64,
}

impl PulseSpec {
    pub fn new(t_i: f64, t_o: f64, epsilon: f64) -> Result<Self> {
        let spec = PulseSpec { t_i, t_o, epsilon };
        spec.validate()?;
        Ok(spec)
    }

    /// Builds the pulse whose ramps have half height at `rise` and `fall`.
    pub fn from_midpoints(rise: f64, fall: f64, epsilon: f64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(invalid("epsilon", "must be positive and finite"));
        }
        PulseSpec::new(rise - 3.0 / epsilon, fall + 3.0 / epsilon, epsilon)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(invalid("epsilon", "must be positive and finite"));
        }
        if !(self.t_i.is_finite() && self.t_o.is_finite()) {
            return Err(invalid("t_i/t_o", "pulse edges must be finite"));
        }
        if !(self.t_o > self.t_i) {
            return Err(invalid("t_o", "must exceed t_i"));
        }
        if !(self.fall_midpoint() > self.rise_midpoint()) {
            return Err(invalid("t_o", "ramp midpoints overlap (need t_o - t_i > 6/epsilon)"));
        }
        Ok(())
    }

    pub fn rise_midpoint(&self) -> f64 {
        self.t_i + 3.0 / self.epsilon
    }

    pub fn fall_midpoint(&self) -> f64 {
        self.t_o - 3.0 / self.epsilon
    }

    /// Pulse amplitude in `[0, 1]`.
    pub fn eval(&self, t: f64) -> f64 {
        let (up, down) = self.factors(t);
        0.25 * up * down
    }

    pub fn derivative(&self, t: f64) -> f64 {
        let e = self.epsilon;
        let x_up = e * (t - self.rise_midpoint());
        let x_down = -e * (t - self.fall_midpoint());
        let (up, down) = (1.0 + erf(x_up), 1.0 + erf(x_down));
        0.25 * e * (erf_prime(x_up) * down - up * erf_prime(x_down))
    }

    fn factors(&self, t: f64) -> (f64, f64) {
        let e = self.epsilon;
        (
            1.0 + erf(e * (t - self.rise_midpoint())),
            1.0 + erf(-e * (t - self.fall_midpoint())),
        )
    }

    /// Windows around both ramps inside which the step size is capped.
    pub fn ramp_windows(&self) -> [RampWindow; 2] {
        let half = 6.0 / self.epsilon;
        let max_step = RAMP_STEP / self.epsilon;
        [
            RampWindow {
                start: self.t_i - half,
                end: self.t_i + half,
                max_step,
            },
            RampWindow {
                start: self.t_o - half,
                end: self.t_o + half,
                max_step,
            },
        ]
    }
}

/// Evaluates the pulse at `t`.
pub fn eval_theta(t: f64, spec: &PulseSpec) -> f64 {
    spec.eval(t)
}

/// A time interval in which integrators must not exceed `max_step`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RampWindow {
    pub start: f64,
    pub end: f64,
    pub max_step: f64,
}

/// One weighted term of a [`ScalarSignal::Sum`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Term {
    pub coeff: f64,
    pub signal: ScalarSignal,
}

/// Expression tree for a scalar function of time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ScalarSignal {
    Constant { value: f64 },
    Pulse(PulseSpec),
    /// `offset + sum(coeff_j * signal_j)`.
    Sum { offset: f64, terms: Vec<Term> },
}

impl ScalarSignal {
    pub fn constant(value: f64) -> Self {
        ScalarSignal::Constant { value }
    }

    pub fn pulse(spec: PulseSpec) -> Self {
        ScalarSignal::Pulse(spec)
    }

    /// `scale * (offset + sum(coeff * pulse))`, the shape used by every
    /// protocol.
    pub fn pulse_sum(scale: f64, offset: f64, pulses: &[(f64, PulseSpec)]) -> Self {
        ScalarSignal::Sum {
            offset: scale * offset,
            terms: pulses
                .iter()
                .map(|&(c, p)| Term {
                    coeff: scale * c,
                    signal: ScalarSignal::Pulse(p),
                })
                .collect(),
        }
    }

    pub fn eval(&self, t: f64) -> f64 {
        match self {
            ScalarSignal::Constant { value } => *value,
            ScalarSignal::Pulse(p) => p.eval(t),
            ScalarSignal::Sum { offset, terms } => {
                terms.iter().fold(*offset, |acc, term| acc + term.coeff * term.signal.eval(t))
            }
        }
    }

    pub fn derivative(&self, t: f64) -> f64 {
        match self {
            ScalarSignal::Constant { .. } => 0.0,
            ScalarSignal::Pulse(p) => p.derivative(t),
            ScalarSignal::Sum { terms, .. } => terms
                .iter()
                .fold(0.0, |acc, term| acc + term.coeff * term.signal.derivative(t)),
        }
    }

    /// True when the signal contains no pulse with a non-zero weight.
    pub fn is_constant(&self) -> bool {
        match self {
            ScalarSignal::Constant { .. } => true,
            ScalarSignal::Pulse(_) => false,
            ScalarSignal::Sum { terms, .. } => {
                terms.iter().all(|t| t.coeff == 0.0 || t.signal.is_constant())
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ScalarSignal::Constant { value } if !value.is_finite() => {
                Err(invalid("value", "constant must be finite"))
            }
            ScalarSignal::Constant { .. } => Ok(()),
            ScalarSignal::Pulse(p) => p.validate(),
            ScalarSignal::Sum { offset, terms } => {
                if !offset.is_finite() {
                    return Err(invalid("offset", "must be finite"));
                }
                for term in terms {
                    if !term.coeff.is_finite() {
                        return Err(invalid("coeff", "must be finite"));
                    }
                    term.signal.validate()?;
                }
                Ok(())
            }
        }
    }

    /// Every pulse in the tree, in depth-first order.
    pub fn pulses(&self) -> Vec<PulseSpec> {
        let mut out = Vec::new();
        self.collect_pulses(&mut out);
        out
    }

    fn collect_pulses(&self, out: &mut Vec<PulseSpec>) {
        match self {
            ScalarSignal::Constant { .. } => {}
            ScalarSignal::Pulse(p) => out.push(*p),
            ScalarSignal::Sum { terms, .. } => {
                for term in terms {
                    term.signal.collect_pulses(out);
                }
            }
        }
    }

    pub fn ramp_windows(&self) -> Vec<RampWindow> {
        self.pulses().iter().flat_map(|p| p.ramp_windows()).collect()
    }

    /// Rescales time by `time_scale` (`t_new = time_scale * t_old`) and
    /// values by `value_scale`.
    pub fn rescaled(&self, time_scale: f64, value_scale: f64) -> Self {
        match self {
            ScalarSignal::Constant { value } => ScalarSignal::Constant {
                value: value * value_scale,
            },
            ScalarSignal::Pulse(p) => {
                let pulse = ScalarSignal::Pulse(PulseSpec {
                    t_i: p.t_i * time_scale,
                    t_o: p.t_o * time_scale,
                    epsilon: p.epsilon / time_scale,
                });
                if value_scale == 1.0 {
                    pulse
                } else {
                    ScalarSignal::Sum {
                        offset: 0.0,
                        terms: alloc::vec![Term {
                            coeff: value_scale,
                            signal: pulse,
                        }],
                    }
                }
            }
            ScalarSignal::Sum { offset, terms } => ScalarSignal::Sum {
                offset: offset * value_scale,
                terms: terms
                    .iter()
                    .map(|t| Term {
                        coeff: t.coeff * value_scale,
                        signal: t.signal.rescaled(time_scale, 1.0),
                    })
                    .collect(),
            },
        }
    }
}

pub fn eval_signal(t: f64, s: &ScalarSignal) -> f64 {
    s.eval(t)
}

pub fn eval_signal_derivative(t: f64, s: &ScalarSignal) -> f64 {
    s.derivative(t)
}
