// Random draws shared by the property suite and the acceptance harness.
#![allow(dead_code)]

use proptest::prelude::*;

use qho_core::dynamics::OscillatorConfig;
use qho_core::liegroup::{propagate_gaussian, GaussianState, LieFactors};
use qho_core::signals::{PulseSpec, ScalarSignal};
use qho_core::Units;

pub const CASES: u32 = 1000;

pub fn units() -> impl Strategy<Value = Units> {
    (0.5..2.0f64, 0.5..2.0f64, 0.5..2.0f64).prop_map(|(m, h, w)| Units::new(m, h, w).unwrap())
}

/// Log-uniform steepness in `[1, 1000]`.
pub fn epsilon() -> impl Strategy<Value = f64> {
    (0.0..3.0f64).prop_map(|x| libm::pow(10.0, x))
}

/// Factor values kept small enough that map entries stay O(10).
pub fn factors() -> impl Strategy<Value = LieFactors> {
    (
        (-3.0..3.0f64, -3.0..3.0f64),
        -1.0..1.0f64,
        -1.0..1.0f64,
        (0.0..1.5f64, 0.0..1.5f64),
        -5.0..5.0f64,
        -1.0..1.0f64,
    )
        .prop_map(|((bq, bp), th, r, (fq, fp), l, shift)| LieFactors {
            beta_q: bq,
            beta_p: bp,
            theta_q: th,
            r,
            phi_q: fq,
            phi_p: fp,
            action: l,
            initial_shift: shift,
        })
}

/// Rescales dimensionless factor values to the units of `u`: displacements
/// in `q0`, `p0`, the shear in `p0/q0`, and the rotation so that
/// `phi_q/phi_p = m omega0` when the two draws are equal.
pub fn in_units(u: &Units, f: &LieFactors) -> LieFactors {
    let s = libm::sqrt(u.mass * u.omega0);
    LieFactors {
        beta_q: f.beta_q * u.q0(),
        beta_p: f.beta_p * u.p0(),
        theta_q: f.theta_q * u.p0() / u.q0(),
        r: f.r,
        phi_q: f.phi_q * s,
        phi_p: f.phi_p / s,
        action: f.action * u.hbar,
        initial_shift: f.initial_shift * u.q0(),
    }
}

/// A pure Gaussian state: vacuum pushed through random factors, in random units.
pub fn pure_state() -> impl Strategy<Value = GaussianState> {
    state_and_factors().prop_map(|(s, _)| s)
}

/// Narrower factor ranges for preparing states.
pub fn mild_factors() -> impl Strategy<Value = LieFactors> {
    (factors(), -0.5..0.5f64, -0.5..0.5f64, (0.0..1.0f64, 0.0..1.0f64)).prop_map(|(f, th, r, (fq, fp))| LieFactors {
        theta_q: th,
        r,
        phi_q: fq,
        phi_p: fp,
        ..f
    })
}

/// A pure state together with a second factor draw in the same units.
pub fn state_and_factors() -> impl Strategy<Value = (GaussianState, LieFactors)> {
    (units(), mild_factors(), factors()).prop_map(|(u, a, b)| {
        let s = propagate_gaussian(&GaussianState::vacuum(&u), &in_units(&u, &a));
        (s, in_units(&u, &b))
    })
}

/// Like [`state_and_factors`] with both draws narrow. Two full-range draws
/// reach `var_q var_p / det cov` near 1e5, and the determinant then loses
/// that many ulps to cancellation before any propagation error shows.
pub fn state_and_mild_factors() -> impl Strategy<Value = (GaussianState, LieFactors)> {
    (units(), mild_factors(), mild_factors()).prop_map(|(u, a, b)| {
        let s = propagate_gaussian(&GaussianState::vacuum(&u), &in_units(&u, &a));
        (s, in_units(&u, &b))
    })
}

/// A single pulse whose ramps are at least four ramp widths apart, plus a
/// time within two ramp widths of one of its midpoints.
pub fn pulse_near_ramp() -> impl Strategy<Value = (PulseSpec, f64)> {
    (epsilon(), -3.0..3.0f64, 4.0..24.0f64, 0.0..3.0f64, any::<bool>(), -2.0..2.0f64).prop_map(
        |(eps, rise, gap, extra, on_fall, u)| {
            let fall = rise + gap / eps + extra;
            let spec = PulseSpec::from_midpoints(rise, fall, eps).unwrap();
            let mid = if on_fall { fall } else { rise };
            (spec, mid + u / eps)
        },
    )
}

/// Frequency pulse with an optional pulsed resonant drive, and an end time
/// past the last ramp.
pub fn pulsed_config() -> impl Strategy<Value = (OscillatorConfig, f64)> {
    (
        units(),
        epsilon(),
        (0.5..3.0f64, 0.3..3.0f64, -0.5..1.0f64),
        (-0.5..0.5f64, 0.0..6.3f64),
        0.5..2.0f64,
    )
        .prop_map(|(u, eps, (rise, width, amp), (drive, phase), tail)| {
            let fall = rise + width.max(8.0 / eps);
            let pulse = PulseSpec::from_midpoints(rise, fall, eps).unwrap();
            let cfg = OscillatorConfig {
                mass: u.mass,
                hbar: u.hbar,
                omega: ScalarSignal::pulse_sum(u.omega0, 1.0, &[(amp, pulse)]),
                drive: ScalarSignal::pulse_sum(drive * u.mass * u.omega0 * u.omega0 * u.q0(), 0.0, &[(1.0, pulse)]),
                drive_frequency: u.omega0,
                drive_phase: phase,
            };
            (cfg, fall + tail)
        })
}

/// `|a - b| / max(1, |b|)`.
pub fn scaled_diff(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1.0)
}
