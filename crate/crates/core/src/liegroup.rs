//! Phase-space action of the displacement, scaled-rotation, and squeeze
//! factors, and exact propagation of Gaussian states through them.
//!
//! Conventions: phase-space vectors are ordered `(q, p)` and
//! `J = [[0, 1], [-1, 0]]`. A unitary `U` is represented by its Heisenberg
//! action `U^dag x U = M x + d`, so a state's mean maps to `M mean + d` and
//! its covariance to `M cov M^T`.

use serde::{Deserialize, Serialize};

use crate::dynamics::{DriveSolution, ErmakovSolution};
use crate::error::{Error, Result};
use crate::special::cos_sinc;
use crate::units::Units;

pub type Mat2 = [[f64; 2]; 2];
pub type Vec2 = [f64; 2];

pub const IDENTITY: Mat2 = [[1.0, 0.0], [0.0, 1.0]];
pub const J: Mat2 = [[0.0, 1.0], [-1.0, 0.0]];

pub fn mat_mul(a: &Mat2, b: &Mat2) -> Mat2 {
    [
        [a[0][0] * b[0][0] + a[0][1] * b[1][0], a[0][0] * b[0][1] + a[0][1] * b[1][1]],
        [a[1][0] * b[0][0] + a[1][1] * b[1][0], a[1][0] * b[0][1] + a[1][1] * b[1][1]],
    ]
}

pub fn mat_vec(a: &Mat2, x: &Vec2) -> Vec2 {
    [a[0][0] * x[0] + a[0][1] * x[1], a[1][0] * x[0] + a[1][1] * x[1]]
}

pub fn transpose(a: &Mat2) -> Mat2 {
    [[a[0][0], a[1][0]], [a[0][1], a[1][1]]]
}

pub fn det(a: &Mat2) -> f64 {
    a[0][0] * a[1][1] - a[0][1] * a[1][0]
}

/// `x -> M x + d` with `M` symplectic.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineSymplectic {
    pub m: Mat2,
    pub d: Vec2,
}

impl AffineSymplectic {
    pub const IDENTITY: AffineSymplectic = AffineSymplectic {
        m: IDENTITY,
        d: [0.0, 0.0],
    };

    pub fn linear(m: Mat2) -> Self {
        AffineSymplectic { m, d: [0.0, 0.0] }
    }

    pub fn apply(&self, x: &Vec2) -> Vec2 {
        let y = mat_vec(&self.m, x);
        [y[0] + self.d[0], y[1] + self.d[1]]
    }

    /// Largest entry of `M^T J M - J`.
    pub fn symplectic_defect(&self) -> f64 {
        let mtjm = mat_mul(&transpose(&self.m), &mat_mul(&J, &self.m));
        let mut worst: f64 = 0.0;
        for i in 0..2 {
            for j in 0..2 {
                worst = worst.max((mtjm[i][j] - J[i][j]).abs());
            }
        }
        worst
    }

    pub fn max_abs_diff(&self, other: &AffineSymplectic) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..2 {
            for j in 0..2 {
                worst = worst.max((self.m[i][j] - other.m[i][j]).abs());
            }
            worst = worst.max((self.d[i] - other.d[i]).abs());
        }
        worst
    }
}

/// Heisenberg action of `D(beta_q, beta_p) = exp(-i(beta_p q + beta_q p)/hbar)`:
/// `q -> q + beta_q`, `p -> p - beta_p`.
pub fn displacement_map(beta_q: f64, beta_p: f64) -> AffineSymplectic {
    AffineSymplectic {
        m: IDENTITY,
        d: [beta_q, -beta_p],
    }
}

/// Action of `exp(-i(k_q q^2 + k_p p^2)/hbar)` for signed coefficients.
///
/// The flow is `q' = 2 k_p p`, `p' = -2 k_q q` over unit time; the matrix is
/// `cos(w) I + sinc(w) A` with `w^2 = 4 k_q k_p`, continued to `cosh`/`sinh`
/// when the coefficients have opposite signs. No division by a small
/// parameter occurs, so `k_p = 0` gives the shear `p -> p - 2 k_q q` exactly.
pub fn quadratic_map(k_q: f64, k_p: f64) -> AffineSymplectic {
    let (c, s) = cos_sinc(4.0 * k_q * k_p);
    AffineSymplectic::linear([[c, 2.0 * k_p * s], [-2.0 * k_q * s, c]])
}

/// Scaled rotation `R(theta_q, theta_p) = exp(-i(theta_q^2 q^2 + theta_p^2 p^2)/hbar)`.
///
/// Rotation angle `2 theta_q theta_p`, scaling `theta_q / theta_p`. With
/// `theta_p = 0` this is the momentum shear `p -> p - 2 theta_q^2 q`.
pub fn rotation_map(theta_q: f64, theta_p: f64) -> AffineSymplectic {
    quadratic_map(theta_q * theta_q, theta_p * theta_p)
}

/// Squeeze `S(r) = exp(-i r {q, p}/hbar)`: `q -> e^{2r} q`, `p -> e^{-2r} p`.
pub fn squeeze_map(r: f64) -> AffineSymplectic {
    AffineSymplectic::linear([[libm::exp(2.0 * r), 0.0], [0.0, libm::exp(-2.0 * r)]])
}

/// Map of the operator product `outer * inner`.
pub fn compose(outer: &AffineSymplectic, inner: &AffineSymplectic) -> AffineSymplectic {
    let d = mat_vec(&outer.m, &inner.d);
    AffineSymplectic {
        m: mat_mul(&outer.m, &inner.m),
        d: [d[0] + outer.d[0], d[1] + outer.d[1]],
    }
}

/// Parameters of the factorized evolution
/// `e^{-iL/hbar} D(beta) Rq(theta_q) S(r) R(phi_q, phi_p) D(shift, 0)`.
///
/// `theta_q` is the coefficient of `q^2` in the shear generator
/// (`-(m/2) rho'/rho`), not its square root.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LieFactors {
    pub beta_q: f64,
    pub beta_p: f64,
    pub theta_q: f64,
    pub r: f64,
    pub phi_q: f64,
    pub phi_p: f64,
    /// `int_0^t l`, the action behind the global phase.
    pub action: f64,
    /// Leading position displacement `Omega(0) cos(phi) / (m omega(0)^2)`.
    pub initial_shift: f64,
}

impl LieFactors {
    pub fn identity() -> Self {
        LieFactors::default()
    }

    pub fn is_finite(&self) -> bool {
        [
            self.beta_q,
            self.beta_p,
            self.theta_q,
            self.r,
            self.phi_q,
            self.phi_p,
            self.action,
            self.initial_shift,
        ]
        .iter()
        .all(|v| v.is_finite())
    }

    /// Pure rotation for a constant oscillator after time `t`.
    pub fn free_rotation(units: &Units, t: f64) -> Self {
        let (m, w) = (units.mass, units.omega0);
        LieFactors {
            phi_q: libm::sqrt(0.5 * m * w * w * t),
            phi_p: libm::sqrt(t / (2.0 * m)),
            ..LieFactors::default()
        }
    }

    /// Composite Heisenberg action of all factors.
    pub fn total_map(&self) -> AffineSymplectic {
        let rotation = rotation_map(self.phi_q, self.phi_p);
        let shift = displacement_map(self.initial_shift, 0.0);
        let inner = compose(&rotation, &shift);
        let inner = compose(&squeeze_map(self.r), &inner);
        let inner = compose(&quadratic_map(self.theta_q, 0.0), &inner);
        compose(&displacement_map(self.beta_q, self.beta_p), &inner)
    }
}

/// Reads every factor at time `t`.
pub fn assemble_factorization(erm: &ErmakovSolution, drv: &DriveSolution, t: f64) -> Result<LieFactors> {
    erm.check_time(t)?;
    drv.check_time(t)?;
    Ok(LieFactors {
        beta_q: drv.beta_q(t),
        beta_p: drv.beta_p(t),
        theta_q: erm.theta_q(t),
        r: erm.r(t),
        phi_q: libm::sqrt(erm.phi_q2(t).max(0.0)),
        phi_p: libm::sqrt(erm.phi_p2(t).max(0.0)),
        action: drv.action(t),
        initial_shift: drv.initial_shift(),
    })
}

/// Pure or mixed Gaussian state: mean, covariance, global phase, and the
/// ground-state scales `(q0, p0)` with `q0 p0 = hbar`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianState {
    pub mean: Vec2,
    pub cov: Mat2,
    pub phase: f64,
    pub q0: f64,
    pub p0: f64,
}

impl GaussianState {
    /// Ground state of the reference oscillator.
    pub fn vacuum(units: &Units) -> Self {
        let (q0, p0) = (units.q0(), units.p0());
        GaussianState {
            mean: [0.0, 0.0],
            cov: [[0.5 * q0 * q0, 0.0], [0.0, 0.5 * p0 * p0]],
            phase: 0.0,
            q0,
            p0,
        }
    }

    pub fn hbar(&self) -> f64 {
        self.q0 * self.p0
    }

    pub fn with_mean(mut self, q: f64, p: f64) -> Self {
        self.mean = [q, p];
        self
    }

    pub fn var_q(&self) -> f64 {
        self.cov[0][0]
    }

    pub fn var_p(&self) -> f64 {
        self.cov[1][1]
    }

    pub fn cov_qp(&self) -> f64 {
        self.cov[0][1]
    }

    /// `det(cov) / (hbar/2)^2`; one for pure states.
    pub fn purity_ratio(&self) -> f64 {
        let h = 0.5 * self.hbar();
        det(&self.cov) / (h * h)
    }

    pub fn validate(&self) -> Result<()> {
        let c = &self.cov;
        if !(c[0][0] > 0.0 && c[1][1] > 0.0 && det(c) > 0.0) {
            return Err(Error::NotPositiveDefinite);
        }
        if (c[0][1] - c[1][0]).abs() > 1e-12 * libm::sqrt(c[0][0] * c[1][1]) {
            return Err(Error::NotPositiveDefinite);
        }
        Ok(())
    }

    /// Applies an affine symplectic map.
    pub fn transformed(&self, map: &AffineSymplectic) -> Self {
        let mc = mat_mul(&map.m, &self.cov);
        let mut cov = mat_mul(&mc, &transpose(&map.m));
        let sym = 0.5 * (cov[0][1] + cov[1][0]);
        cov[0][1] = sym;
        cov[1][0] = sym;
        GaussianState {
            mean: map.apply(&self.mean),
            cov,
            ..*self
        }
    }

    /// Variance ratio along the principal axes of the covariance.
    pub fn principal_ratio(&self) -> f64 {
        let a = self.cov[0][0] / (self.q0 * self.q0);
        let b = self.cov[1][1] / (self.p0 * self.p0);
        let c = self.cov[0][1] / self.hbar();
        let tr = a + b;
        let disc = libm::sqrt(((a - b) * (a - b) + 4.0 * c * c).max(0.0));
        (tr + disc) / (tr - disc)
    }
}

/// Propagates a Gaussian state through the factorized evolution.
///
/// The phase only accumulates `-L/hbar`; the zero-point phase of the
/// rotation factors has no covariance-picture representation.
pub fn propagate_gaussian(state0: &GaussianState, f: &LieFactors) -> GaussianState {
    let mut out = state0.transformed(&f.total_map());
    out.phase = state0.phase - f.action / state0.hbar();
    out
}

/// Closed-form `(<q>, <p>)` after the factorized evolution, written out term
/// by term rather than through matrix products.
pub fn expectation_qp(state0: &GaussianState, f: &LieFactors) -> Vec2 {
    let q_init = state0.mean[0] + f.initial_shift;
    let p_init = state0.mean[1];
    let angle = 2.0 * f.phi_q * f.phi_p;
    let (c, sinc) = cos_sinc(angle * angle);
    // (phi_p/phi_q) sin(angle) and (phi_q/phi_p) sin(angle) without division.
    let sp = 2.0 * f.phi_p * f.phi_p * sinc;
    let sq = 2.0 * f.phi_q * f.phi_q * sinc;
    let grow = libm::exp(2.0 * f.r);
    let shrink = libm::exp(-2.0 * f.r);
    let shear = 2.0 * f.theta_q;

    let q = (c * q_init + sp * p_init) * grow + f.beta_q;
    let p = (c * shrink - shear * sp * grow) * p_init - (sq * shrink + shear * c * grow) * q_init - f.beta_p;
    [q, p]
}
