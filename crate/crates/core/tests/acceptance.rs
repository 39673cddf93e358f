// Acceptance suite. Runs without the libtest harness and prints one
// PASS/FAIL line per criterion; exits non-zero if any criterion fails.

mod common;

use std::cell::Cell;
use std::f64::consts::PI;
use std::time::{Duration, Instant};

use proptest::strategy::Strategy;
use proptest::test_runner::{Config, RngAlgorithm, TestRng, TestRunner};

use qho_core::dynamics::{solve_drive, solve_ermakov, OscillatorConfig};
use qho_core::fock::{build_basis, evolve, fidelity, husimi_fock, husimi_fock_point, observables, FockBasis, FockState, StepPolicy};
use qho_core::liegroup::{assemble_factorization, displacement_map, expectation_qp, propagate_gaussian, squeeze_map, GaussianState};
use qho_core::ode::Tolerances;
use qho_core::phasespace::{husimi_gaussian, husimi_gaussian_point, husimi_normalization, GridSpec};
use qho_core::protocols::{build_protocol, optimize_mirror_time, squeeze_half, Channel, Protocol, ProtocolKind};
use qho_core::Units;

const EPSILONS: [f64; 2] = [2.0, 1000.0];
const FOCK_N: usize = 128;
const SAMPLES: usize = 201;

struct Suite {
    failed: usize,
}

impl Suite {
    fn report(&mut self, id: u32, title: &str, pass: bool, detail: String) {
        if !pass {
            self.failed += 1;
        }
        println!("{} [{id}] {title}: {detail}", if pass { "PASS" } else { "FAIL" });
    }
}

fn secs(d: Duration) -> String {
    format!("{:.3} s", d.as_secs_f64())
}

fn runner() -> TestRunner {
    let config = Config {
        cases: common::CASES,
        failure_persistence: None,
        ..Config::default()
    };
    TestRunner::new_with_rng(config, TestRng::deterministic_rng(RngAlgorithm::ChaCha))
}

/// Largest value of `measure` over the standard number of random draws.
fn worst<S: Strategy>(strategy: S, measure: impl Fn(S::Value) -> f64) -> f64 {
    let acc = Cell::new(0.0f64);
    runner()
        .run(&strategy, |v| {
            acc.set(acc.get().max(measure(v)));
            Ok(())
        })
        .expect("measurement closures never fail");
    acc.get()
}

fn constant_oscillator(suite: &mut Suite) {
    let clock = Instant::now();
    let units = Units::new(2.0, 0.5, 3.0).unwrap();
    let cfg = OscillatorConfig::constant(units);
    let t_end = 4.0 * PI / units.omega0;
    let tol = Tolerances::default();
    let erm = solve_ermakov(&cfg, t_end, &tol).unwrap();
    let drv = solve_drive(&cfg, t_end, &tol).unwrap();
    let (q0, p0) = (units.q0(), units.p0());
    let s0 = GaussianState::vacuum(&units).with_mean(0.7 * q0, -0.4 * p0);
    let (mut mean_err, mut rho_err) = (0.0f64, 0.0f64);
    let rho0 = erm.rho(0.0);
    for k in 0..=400 {
        let t = t_end * k as f64 / 400.0;
        let f = assemble_factorization(&erm, &drv, t).unwrap();
        let (c, s) = ((units.omega0 * t).cos(), (units.omega0 * t).sin());
        let mw = units.mass * units.omega0;
        let q = c * s0.mean[0] + s * s0.mean[1] / mw;
        let p = c * s0.mean[1] - mw * s * s0.mean[0];
        for got in [expectation_qp(&s0, &f), propagate_gaussian(&s0, &f).mean] {
            mean_err = mean_err.max(((got[0] - q) / q0).abs()).max(((got[1] - p) / p0).abs());
        }
        rho_err = rho_err.max((erm.rho(t) - rho0).abs() / rho0);
    }
    let el = clock.elapsed();
    let pass = mean_err <= 1e-10 && rho_err <= 1e-10 && el < Duration::from_secs(1);
    suite.report(
        1,
        "constant-oscillator reduction",
        pass,
        format!(
            "max mean error {mean_err:.2e} (tol 1e-10), rho drift {rho_err:.2e} (tol 1e-10), {} (limit 1 s)",
            secs(el)
        ),
    );
}

fn mirror_times(suite: &mut Suite) {
    let mut parts = Vec::new();
    let mut pass = true;
    for (eps, target) in [(2.0, 11.485), (1000.0, 11.388)] {
        let clock = Instant::now();
        let t_m = squeeze_half(eps).and_then(|h| optimize_mirror_time(&h, &Tolerances::default()));
        let el = clock.elapsed();
        match t_m {
            Ok(t) => {
                pass &= (t - target).abs() <= 0.01 && el < Duration::from_secs(10);
                parts.push(format!("eps={eps}: t_m={t:.5} vs {target} (tol 0.01), {}", secs(el)));
            }
            Err(e) => {
                pass = false;
                parts.push(format!("eps={eps}: {e}"));
            }
        }
    }
    suite.report(2, "mirror-time anchors", pass, parts.join("; ") + " (limit 10 s each)");
}

fn sample_times(p: &Protocol) -> Vec<f64> {
    let (a, b) = p.window;
    let mut ts: Vec<f64> = (0..SAMPLES).map(|k| a + (b - a) * k as f64 / (SAMPLES - 1) as f64).collect();
    ts.extend(&p.checkpoints);
    ts.sort_by(f64::total_cmp);
    ts.dedup();
    ts
}

#[derive(Default)]
struct Contract {
    min_end_fidelity: f64,
    max_end_mean: f64,
    max_end_cov: f64,
    max_traj_mean: f64,
    max_traj_cov: f64,
    worst_fidelity: String,
    worst_traj: String,
}

fn cov_rel(a: &[[f64; 2]; 2], b: &[[f64; 2]; 2]) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..2 {
        for j in 0..2 {
            worst = worst.max((a[i][j] - b[i][j]).abs() / (b[i][i] * b[j][j]).sqrt());
        }
    }
    worst
}

fn protocols(suite: &mut Suite) -> Vec<Protocol> {
    let clock = Instant::now();
    let tol = Tolerances::default();
    let mut c = Contract {
        min_end_fidelity: 1.0,
        ..Contract::default()
    };
    let mut built = Vec::new();
    let mut errors = Vec::new();
    for eps in EPSILONS {
        for kind in ProtocolKind::ALL {
            let label = format!("{}@eps={eps}", kind.name());
            let p = match build_protocol(kind, eps) {
                Ok(p) => p,
                Err(e) => {
                    errors.push(format!("{label}: {e}"));
                    continue;
                }
            };
            let times = sample_times(&p);
            let end = p.window.1;
            let erm = solve_ermakov(&p.config, end, &tol).unwrap();
            let drv = solve_drive(&p.config, end, &tol).unwrap();
            let basis = FockBasis::for_config(&p.config, FOCK_N).unwrap();
            let vac_fock = FockState::vacuum(FOCK_N);
            let states = match evolve(&basis, &vac_fock, &p.config, p.window.0, &times, &StepPolicy::default()) {
                Ok(s) => s,
                Err(e) => {
                    errors.push(format!("{label}: {e}"));
                    continue;
                }
            };
            let vac = GaussianState::vacuum(&p.config.units());
            let sc = |g: &GaussianState, i: usize, j: usize| (g.cov[i][i] * g.cov[j][j]).sqrt();
            for (&t, psi) in times.iter().zip(&states) {
                let g = propagate_gaussian(&vac, &assemble_factorization(&erm, &drv, t).unwrap());
                let m = observables(psi, &basis);
                let dm = ((m.mean_q - g.mean[0]) / vac.q0).abs().max(((m.mean_p - g.mean[1]) / vac.p0).abs());
                let dc = ((m.var_q - g.cov[0][0]) / sc(&g, 0, 0))
                    .abs()
                    .max(((m.var_p - g.cov[1][1]) / sc(&g, 1, 1)).abs())
                    .max(((m.cov_qp - g.cov[0][1]) / sc(&g, 0, 1)).abs());
                if dm > c.max_traj_mean || dc > c.max_traj_cov {
                    c.worst_traj = label.clone();
                }
                c.max_traj_mean = c.max_traj_mean.max(dm);
                c.max_traj_cov = c.max_traj_cov.max(dc);
            }
            let fid = fidelity(states.last().unwrap(), &vac_fock).unwrap();
            if fid < c.min_end_fidelity {
                c.min_end_fidelity = fid;
                c.worst_fidelity = label.clone();
            }
            let g_end = propagate_gaussian(&vac, &assemble_factorization(&erm, &drv, end).unwrap());
            let mean_end = (g_end.mean[0] / vac.q0).abs().max((g_end.mean[1] / vac.p0).abs());
            c.max_end_mean = c.max_end_mean.max(mean_end);
            c.max_end_cov = c.max_end_cov.max(cov_rel(&g_end.cov, &vac.cov));
            built.push(p);
        }
    }
    let el = clock.elapsed();
    let errs = if errors.is_empty() { String::new() } else { format!("; errors: {}", errors.join(", ")) };
    let pass3 = errors.is_empty()
        && c.min_end_fidelity >= 0.999
        && c.max_end_mean <= 1e-3
        && c.max_end_cov <= 1e-3
        && el < Duration::from_secs(120);
    suite.report(
        3,
        "create-and-undo contracts",
        pass3,
        format!(
            "min Fock end fidelity {:.9} at {} (min 0.999), factorized end mean {:.2e} (tol 1e-3), end cov {:.2e} rel (tol 1e-3), {} for 8 runs at N={FOCK_N} (limit 120 s){errs}",
            c.min_end_fidelity,
            c.worst_fidelity,
            c.max_end_mean,
            c.max_end_cov,
            secs(el)
        ),
    );
    let pass4 = errors.is_empty() && c.max_traj_mean <= 1e-4 && c.max_traj_cov <= 1e-3;
    suite.report(
        4,
        "oracle equivalence along trajectories",
        pass4,
        format!(
            "max mean delta {:.2e} (tol 1e-4), max cov delta {:.2e} rel (tol 1e-3), worst {}, {SAMPLES}+ samples per run{errs}",
            c.max_traj_mean, c.max_traj_cov, c.worst_traj
        ),
    );
    built
}

fn properties(suite: &mut Suite) {
    let clock = Instant::now();
    let symplectic = worst(common::factors(), |f| f.total_map().symplectic_defect());
    let purity = worst(common::state_and_mild_factors(), |(s, f)| (propagate_gaussian(&s, &f).purity_ratio() - 1.0).abs());
    let closed = worst(common::state_and_factors(), |(s, f)| {
        let a = expectation_qp(&s, &f);
        let b = propagate_gaussian(&s, &f).mean;
        common::scaled_diff(a[0] / s.q0, b[0] / s.q0).max(common::scaled_diff(a[1] / s.p0, b[1] / s.p0))
    });
    let residual = worst(common::pulsed_config(), |(cfg, t_end)| {
        solve_ermakov(&cfg, t_end, &Tolerances::default()).map_or(f64::INFINITY, |s| s.residual_rms())
    });
    let derivative = worst(common::pulse_near_ramp(), |(spec, t)| {
        let h = 1e-6 / spec.epsilon;
        let fd = (spec.eval(t + h) - spec.eval(t - h)) / (2.0 * h);
        let d = spec.derivative(t);
        (d - fd).abs() / d.abs()
    });
    let el = clock.elapsed();
    let pass = symplectic <= 1e-12
        && purity <= 1e-10
        && closed <= 1e-12
        && residual <= 1e-8
        && derivative <= 1e-6
        && el < Duration::from_secs(30);
    suite.report(
        5,
        "property suites",
        pass,
        format!(
            "{} cases each: symplectic defect {symplectic:.2e} (tol 1e-12), purity {purity:.2e} (tol 1e-10), closed vs matrix {closed:.2e} (tol 1e-12), Ermakov RMS {residual:.2e} (tol 1e-8), derivative vs FD {derivative:.2e} rel (tol 1e-6), {} (limit 30 s)",
            common::CASES,
            secs(el)
        ),
    );
}

fn commutators(suite: &mut Suite) {
    let basis = build_basis(64, 1.0, 1.0).unwrap();
    let table = basis.commutator_table(62);
    let worst = table.iter().max_by(|a, b| a.defect.total_cmp(&b.defect)).unwrap();
    let pass = table.len() == 8 && table.iter().all(|c| c.defect <= 1e-10);
    suite.report(
        6,
        "commutator table at N=64",
        pass,
        format!("{} relations, worst {} at {:.2e} (tol 1e-10) on the leading 62x62 block", table.len(), worst.relation, worst.defect),
    );
}

fn husimi(suite: &mut Suite) {
    let units = Units::default();
    let basis = FockBasis::for_config(&OscillatorConfig::constant(units), 64).unwrap();
    let vac = GaussianState::vacuum(&units);
    let r = 0.5 * 2.0f64.ln();
    let (bq, bp) = (1.2, -0.8);
    let cases = [
        ("vacuum", vac, FockState::vacuum(64)),
        ("displaced", vac.transformed(&displacement_map(bq, bp)), FockState::vacuum(64).displaced(&basis, bq, bp)),
        ("squeezed", vac.transformed(&squeeze_map(r)), FockState::vacuum(64).squeezed(&basis, r)),
    ];
    let (mut point_err, mut norm_err) = (0.0f64, 0.0f64);
    for (_, g, psi) in &cases {
        let cq = g.mean[0] / g.q0;
        let cp = g.mean[1] / g.p0;
        let sq = (g.var_q() / (g.q0 * g.q0) + 0.5).sqrt();
        let sp = (g.var_p() / (g.p0 * g.p0) + 0.5).sqrt();
        for i in -1..=1 {
            for j in -1..=1 {
                let (q, p) = (cq + i as f64 * sq, cp + j as f64 * sp);
                point_err = point_err.max((husimi_gaussian_point(g, q, p) - husimi_fock_point(psi, q, p)).abs());
            }
        }
        let grid = GridSpec::covering(g, 5.0, 201, 201).unwrap();
        norm_err = norm_err.max((husimi_normalization(&husimi_gaussian(g, &grid).unwrap()) - 1.0).abs());
        norm_err = norm_err.max((husimi_normalization(&husimi_fock(psi, &grid).unwrap()) - 1.0).abs());
    }
    let names: Vec<&str> = cases.iter().map(|c| c.0).collect();
    suite.report(
        7,
        "Husimi consistency",
        point_err <= 1e-6 && norm_err <= 1e-5,
        format!(
            "{}: max |Q_gauss - Q_fock| {point_err:.2e} at 9 points each (tol 1e-6), normalization error {norm_err:.2e} on 5-sigma windows (tol 1e-5)",
            names.join(", ")
        ),
    );
}

fn train_monotone(suite: &mut Suite, built: &[Protocol]) {
    let mut parts = Vec::new();
    let mut pass = true;
    for eps in EPSILONS {
        let Some(p) = built.iter().find(|p| p.kind == ProtocolKind::Train && p.epsilon == eps) else {
            pass = false;
            parts.push(format!("eps={eps}: protocol missing"));
            continue;
        };
        let erm = solve_ermakov(&p.config, p.window.1, &Tolerances::default()).unwrap();
        let t_m = p.mirror_time.unwrap_or(p.window.1);
        let first_half: Vec<_> = p.edges.iter().filter(|e| e.channel == Channel::Omega && e.t_o < t_m).collect();
        let mut min_gain = f64::INFINITY;
        for e in &first_half {
            min_gain = min_gain.min(erm.r(e.t_o).abs() - erm.r(e.t_i).abs());
        }
        pass &= first_half.len() == 5 && min_gain > 0.0;
        parts.push(format!("eps={eps}: {} pulses, min |r| gain {min_gain:.4e}", first_half.len()));
    }
    suite.report(8, "train squeezing grows pulse by pulse", pass, parts.join("; ") + " (must be > 0)");
}

fn main() {
    let mut suite = Suite { failed: 0 };
    let clock = Instant::now();
    constant_oscillator(&mut suite);
    mirror_times(&mut suite);
    let built = protocols(&mut suite);
    properties(&mut suite);
    commutators(&mut suite);
    husimi(&mut suite);
    train_monotone(&mut suite, &built);
    println!("acceptance: {} of 8 criteria failed, {}", suite.failed, secs(clock.elapsed()));
    if suite.failed > 0 {
        std::process::exit(1);
    }
}
