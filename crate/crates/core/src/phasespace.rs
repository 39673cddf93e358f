//! Husimi Q-function on rectangular phase-space grids.
//!
//! Grid axes are in units of the ground-state scales `q0` and `p0`, and the
//! coherent amplitude is `alpha = (q/q0 + i p/p0)/sqrt(2)`. With this choice
//! `Q d^2alpha = Q dq dp / (2 hbar)` integrates to one.

use alloc::vec::Vec;
use core::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::liegroup::{det, GaussianState};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub q_min: f64,
    pub q_max: f64,
    pub p_min: f64,
    pub p_max: f64,
    pub nq: usize,
    pub np: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            q_min: -6.0,
            q_max: 6.0,
            p_min: -6.0,
            p_max: 6.0,
            nq: 121,
            np: 121,
        }
    }
}

impl GridSpec {
    pub fn new(q_min: f64, q_max: f64, p_min: f64, p_max: f64, nq: usize, np: usize) -> Result<Self> {
        let g = GridSpec {
            q_min,
            q_max,
            p_min,
            p_max,
            nq,
            np,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.q_min < self.q_max) || !self.q_min.is_finite() || !self.q_max.is_finite() {
            return Err(invalid("grid", "q range must satisfy min < max"));
        }
        if !(self.p_min < self.p_max) || !self.p_min.is_finite() || !self.p_max.is_finite() {
            return Err(invalid("grid", "p range must satisfy min < max"));
        }
        if self.nq < 2 || self.np < 2 {
            return Err(invalid("grid", "need at least two points per axis"));
        }
        Ok(())
    }

    pub fn dq(&self) -> f64 {
        (self.q_max - self.q_min) / (self.nq - 1) as f64
    }

    pub fn dp(&self) -> f64 {
        (self.p_max - self.p_min) / (self.np - 1) as f64
    }

    /// Normalised position `q/q0` of column `i`.
    pub fn q_at(&self, i: usize) -> f64 {
        self.q_min + self.dq() * i as f64
    }

    pub fn p_at(&self, j: usize) -> f64 {
        self.p_min + self.dp() * j as f64
    }

    /// Points in storage order: `q` outer, `p` inner.
    pub fn points(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        (0..self.nq).flat_map(move |i| (0..self.np).map(move |j| (self.q_at(i), self.p_at(j))))
    }

    /// Window covering `sigmas` standard deviations of `state` on each axis.
    pub fn covering(state: &GaussianState, sigmas: f64, nq: usize, np: usize) -> Result<Self> {
        let sq = libm::sqrt(state.var_q() + 0.5 * state.q0 * state.q0) / state.q0;
        let sp = libm::sqrt(state.var_p() + 0.5 * state.p0 * state.p0) / state.p0;
        let (cq, cp) = (state.mean[0] / state.q0, state.mean[1] / state.p0);
        GridSpec::new(cq - sigmas * sq, cq + sigmas * sq, cp - sigmas * sp, cp + sigmas * sp, nq, np)
    }
}

/// Q values stored row-major with `q` as the slow index.
#[derive(Debug, Clone, PartialEq)]
pub struct HusimiField {
    pub grid: GridSpec,
    pub values: Vec<f64>,
}

impl HusimiField {
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.grid.np + j]
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    /// Grid indices of the largest value.
    pub fn argmax(&self) -> (usize, usize) {
        let mut best = 0;
        for (k, v) in self.values.iter().enumerate() {
            if *v > self.values[best] {
                best = k;
            }
        }
        (best / self.grid.np, best % self.grid.np)
    }
}

/// Closed-form Q for a Gaussian state at normalised coordinates.
///
/// `Q(x) = 2 hbar N(x; mean, cov + cov_vac)` with `cov_vac = diag(q0^2/2, p0^2/2)`.
pub fn husimi_gaussian_point(state: &GaussianState, q_norm: f64, p_norm: f64) -> f64 {
    let (q0, p0) = (state.q0, state.p0);
    let a = state.cov[0][0] + 0.5 * q0 * q0;
    let b = state.cov[1][1] + 0.5 * p0 * p0;
    let c = 0.5 * (state.cov[0][1] + state.cov[1][0]);
    let d = a * b - c * c;
    let dq = q_norm * q0 - state.mean[0];
    let dp = p_norm * p0 - state.mean[1];
    let quad = (b * dq * dq - 2.0 * c * dq * dp + a * dp * dp) / d;
    let value = state.hbar() / (PI * libm::sqrt(d)) * libm::exp(-0.5 * quad);
    if value < 0.0 && value > -1e-15 {
        0.0
    } else {
        value
    }
}

pub fn husimi_gaussian(state: &GaussianState, grid: &GridSpec) -> Result<HusimiField> {
    grid.validate()?;
    state.validate()?;
    if !(det(&state.cov) > 0.0) {
        return Err(Error::NotPositiveDefinite);
    }
    let values = grid.points().map(|(q, p)| husimi_gaussian_point(state, q, p)).collect();
    Ok(HusimiField { grid: *grid, values })
}

/// Trapezoid estimate of `int Q dq dp / (2 hbar)` over the grid.
pub fn husimi_normalization(field: &HusimiField) -> f64 {
    let g = &field.grid;
    let mut total = 0.0;
    for i in 0..g.nq {
        let wi = if i == 0 || i == g.nq - 1 { 0.5 } else { 1.0 };
        for j in 0..g.np {
            let wj = if j == 0 || j == g.np - 1 { 0.5 } else { 1.0 };
            total += wi * wj * field.at(i, j);
        }
    }
    0.5 * total * g.dq() * g.dp()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::liegroup::{displacement_map, squeeze_map};
    use crate::units::Units;

    #[test]
    fn vacuum_peak_is_one_over_pi() {
        let vac = GaussianState::vacuum(&Units::new(2.0, 0.5, 3.0).unwrap());
        assert!((husimi_gaussian_point(&vac, 0.0, 0.0) - 1.0 / PI).abs() < 1e-15);
    }

    #[test]
    fn displaced_peak_follows_mean() {
        let units = Units::default();
        let s = GaussianState::vacuum(&units).transformed(&displacement_map(1.5, 0.5));
        let grid = GridSpec::new(-6.0, 6.0, -6.0, 6.0, 121, 121).unwrap();
        let field = husimi_gaussian(&s, &grid).unwrap();
        let (i, j) = field.argmax();
        assert!((grid.q_at(i) - 1.5).abs() <= grid.dq());
        assert!((grid.p_at(j) + 0.5).abs() <= grid.dp());
        assert!(field.max() <= 1.0 / PI + 1e-12);
    }

    #[test]
    fn vacuum_normalization() {
        let vac = GaussianState::vacuum(&Units::default());
        let grid = GridSpec::new(-6.0, 6.0, -6.0, 6.0, 241, 241).unwrap();
        let n = husimi_normalization(&husimi_gaussian(&vac, &grid).unwrap());
        assert!((n - 1.0).abs() < 1e-6, "{n}");
    }

    #[test]
    fn squeezed_normalization_on_wide_window() {
        let s = GaussianState::vacuum(&Units::default()).transformed(&squeeze_map(0.5 * libm::log(2.0)));
        let grid = GridSpec::covering(&s, 6.0, 241, 241).unwrap();
        let n = husimi_normalization(&husimi_gaussian(&s, &grid).unwrap());
        assert!((n - 1.0).abs() < 1e-5, "{n}");
    }

    #[test]
    fn truncated_window_loses_mass() {
        let vac = GaussianState::vacuum(&Units::default());
        let grid = GridSpec::new(0.0, 6.0, -6.0, 6.0, 121, 241).unwrap();
        let n = husimi_normalization(&husimi_gaussian(&vac, &grid).unwrap());
        assert!(n < 0.6);
    }

    #[test]
    fn bad_grid_rejected() {
        assert!(GridSpec::new(1.0, -1.0, -1.0, 1.0, 10, 10).is_err());
        assert!(GridSpec::new(-1.0, 1.0, -1.0, 1.0, 1, 10).is_err());
    }
}
