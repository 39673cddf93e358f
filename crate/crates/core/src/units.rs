//! Reference scales for the oscillator.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Mass, reduced Planck constant, and reference angular frequency.
///
/// The default is the dimensionless system `m = hbar = omega0 = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Units {
    pub mass: f64,
    pub hbar: f64,
    pub omega0: f64,
}

impl Default for Units {
    fn default() -> Self {
        Units {
            mass: 1.0,
            hbar: 1.0,
            omega0: 1.0,
        }
    }
}

impl Units {
    pub fn new(mass: f64, hbar: f64, omega0: f64) -> Result<Self> {
        let u = Units { mass, hbar, omega0 };
        u.validate()?;
        Ok(u)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mass > 0.0 && self.mass.is_finite()) {
            return Err(invalid("mass", "must be positive and finite"));
        }
        if !(self.hbar > 0.0 && self.hbar.is_finite()) {
            return Err(invalid("hbar", "must be positive and finite"));
        }
        if !(self.omega0 > 0.0 && self.omega0.is_finite()) {
            return Err(invalid("omega0", "must be positive and finite"));
        }
        Ok(())
    }

    /// Ground-state position scale `sqrt(hbar / (m omega0))`.
    pub fn q0(&self) -> f64 {
        libm::sqrt(self.hbar / (self.mass * self.omega0))
    }

    /// Ground-state momentum scale `sqrt(hbar m omega0)`.
    pub fn p0(&self) -> f64 {
        libm::sqrt(self.hbar * self.mass * self.omega0)
    }
}
