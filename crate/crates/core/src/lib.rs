//! Factorized evolution of the driven quantum harmonic oscillator with
//! time-dependent frequency.
//!
//! The evolution operator is written as an ordered product of a global phase,
//! a displacement, a momentum shear, a squeeze, and a scaled rotation. Their
//! parameters follow from two ordinary differential equations: the Ermakov
//! equation for the auxiliary width function and the classical forced
//! oscillator for the displacement. On Gaussian states the factors act as
//! affine symplectic maps, so means and covariances propagate exactly.
//!
//! The crate is `no_std` with `alloc`. Everything here is pure computation;
//! file formats and the command-line front end live in the `qho` crate.
//!
//! Module map:
//! - [`signals`]: erf ramp pulses and their affine combinations.
//! - [`ode`]: adaptive Dormand–Prince 5(4) integrator with dense output.
//! - [`dynamics`]: Ermakov and drive solutions, event detection.
//! - [`liegroup`]: affine symplectic maps, Gaussian states, closed forms.
//! - [`phasespace`]: Husimi Q-function on grids.
//! - [`fock`]: truncated number-basis oracle for cross-checking.
//! - [`protocols`]: pulse-timing protocols that create and undo displacement
//!   and squeezing.
#![no_std]
#![deny(unsafe_code)]

extern crate alloc;

pub mod dynamics;
pub mod error;
pub mod fock;
pub mod liegroup;
pub mod ode;
pub mod phasespace;
pub mod protocols;
pub mod signals;
pub mod special;
pub mod units;

pub use error::{Error, Result};
pub use units::Units;
