mod common;

use common::*;
use proptest::prelude::*;

use qho_core::dynamics::solve_ermakov;
use qho_core::fock::{evolve, FockBasis, FockState, StepPolicy};
use qho_core::liegroup::{compose, displacement_map, expectation_qp, propagate_gaussian, squeeze_map, AffineSymplectic};
use qho_core::ode::Tolerances;

fn config() -> ProptestConfig {
    ProptestConfig::with_cases(CASES)
}

proptest! {
    #![proptest_config(config())]

    #[test]
    fn factor_maps_are_symplectic(f in factors()) {
        let m = f.total_map();
        prop_assert!(m.symplectic_defect() <= 1e-12, "defect {}", m.symplectic_defect());
        let det = m.m[0][0] * m.m[1][1] - m.m[0][1] * m.m[1][0];
        prop_assert!((det - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn composition_stays_symplectic(a in factors(), b in factors()) {
        let c = compose(&a.total_map(), &b.total_map());
        // Entries of the product reach ~100, so allow for their rounding.
        let scale = c.m.iter().flatten().fold(1.0f64, |s, v| s.max(v.abs()));
        prop_assert!(c.symplectic_defect() <= 1e-12 * scale * scale);
    }

    #[test]
    fn purity_is_preserved((s, f) in state_and_mild_factors()) {
        let out = propagate_gaussian(&s, &f);
        let drift = (out.purity_ratio() - s.purity_ratio()).abs();
        prop_assert!(drift <= 1e-10, "purity drift {drift}");
        prop_assert!((out.purity_ratio() - 1.0).abs() <= 1e-10);
    }

    #[test]
    fn closed_form_means_match_matrix_path((s, f) in state_and_factors()) {
        let closed = expectation_qp(&s, &f);
        let matrix = propagate_gaussian(&s, &f).mean;
        let dq = scaled_diff(closed[0] / s.q0, matrix[0] / s.q0);
        let dp = scaled_diff(closed[1] / s.p0, matrix[1] / s.p0);
        prop_assert!(dq <= 1e-12 && dp <= 1e-12, "dq {dq} dp {dp}");
    }

    #[test]
    fn inverse_pairs_cancel(bq in -5.0..5.0f64, bp in -5.0..5.0f64, r in -1.5..1.5f64) {
        let d = compose(&displacement_map(bq, bp), &displacement_map(-bq, -bp));
        prop_assert!(d.max_abs_diff(&AffineSymplectic::IDENTITY) <= 1e-12);
        let s = compose(&squeeze_map(r), &squeeze_map(-r));
        prop_assert!(s.max_abs_diff(&AffineSymplectic::IDENTITY) <= 1e-12);
    }

    #[test]
    fn pulse_derivative_matches_finite_difference((spec, t) in pulse_near_ramp()) {
        let h = 1e-6 / spec.epsilon;
        let fd = (spec.eval(t + h) - spec.eval(t - h)) / (2.0 * h);
        let d = spec.derivative(t);
        prop_assert!((d - fd).abs() <= 1e-6 * d.abs(), "analytic {d} fd {fd}");
    }

    #[test]
    fn pulse_is_bounded_and_symmetric((spec, t) in pulse_near_ramp()) {
        let v = spec.eval(t);
        prop_assert!((0.0..=1.0).contains(&v));
        let centre = 0.5 * (spec.rise_midpoint() + spec.fall_midpoint());
        let mirrored = spec.eval(2.0 * centre - t);
        prop_assert!((v - mirrored).abs() <= 1e-12);
    }

    #[test]
    fn ermakov_residual_is_small((cfg, t_end) in pulsed_config()) {
        let sol = solve_ermakov(&cfg, t_end, &Tolerances::default()).unwrap();
        let rms = sol.residual_rms();
        prop_assert!(rms <= 1e-8, "residual rms {rms}");
        for k in 0..=50 {
            prop_assert!(sol.rho(t_end * k as f64 / 50.0) > 0.0);
        }
    }

    #[test]
    fn ermakov_invariant_holds_on_plateaus((cfg, t_end) in pulsed_config()) {
        let sol = solve_ermakov(&cfg, t_end, &Tolerances::default()).unwrap();
        let p = cfg.omega.pulses()[0];
        let pad = 8.0 / p.epsilon;
        let segments = [(0.0, p.rise_midpoint() - pad), (p.rise_midpoint() + pad, p.fall_midpoint() - pad), (p.fall_midpoint() + pad, t_end)];
        for (a, b) in segments {
            if b <= a {
                continue;
            }
            let i0 = sol.invariant(a);
            for k in 1..=20 {
                let t = a + (b - a) * k as f64 / 20.0;
                prop_assert!((sol.invariant(t) - i0).abs() <= 1e-8 * i0, "t {t}");
            }
        }
    }
}

proptest! {
    // Each case runs a full Fock evolution, so fewer draws.
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn fock_evolution_keeps_unit_norm((cfg, t_end) in pulsed_config()) {
        let basis = FockBasis::for_config(&cfg, 64).unwrap();
        let samples = [0.5 * t_end, t_end];
        let states = evolve(&basis, &FockState::vacuum(64), &cfg, 0.0, &samples, &StepPolicy::default()).unwrap();
        for s in states {
            prop_assert!((s.norm() - 1.0).abs() <= 1e-10, "norm {}", s.norm());
        }
    }
}
