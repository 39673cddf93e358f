//! Special functions needed by the signals and the Fock propagator.

use alloc::vec;
use alloc::vec::Vec;

pub const SQRT_PI: f64 = 1.772_453_850_905_516;

/// Gauss error function, `(2/sqrt(pi)) * int_0^x exp(-t^2) dt`.
#[inline]
pub fn erf(x: f64) -> f64 {
    libm::erf(x)
}

/// Derivative of [`erf`].
#[inline]
pub fn erf_prime(x: f64) -> f64 {
    2.0 / SQRT_PI * libm::exp(-x * x)
}

/// Returns `(cos w, sin w / w)` for `w^2 = x2`, continued analytically to
/// `(cosh v, sinh v / v)` when `x2 = -v^2 < 0`.
///
/// Near zero the Taylor series is used, so the result is smooth across the
/// sign change of `x2` and never divides by a small number.
pub fn cos_sinc(x2: f64) -> (f64, f64) {
    if x2.abs() < 1e-3 {
        let c = 1.0 - x2 / 2.0 * (1.0 - x2 / 12.0 * (1.0 - x2 / 30.0 * (1.0 - x2 / 56.0)));
        let s = 1.0 - x2 / 6.0 * (1.0 - x2 / 20.0 * (1.0 - x2 / 42.0 * (1.0 - x2 / 72.0)));
        (c, s)
    } else if x2 > 0.0 {
        let w = libm::sqrt(x2);
        (libm::cos(w), libm::sin(w) / w)
    } else {
        let v = libm::sqrt(-x2);
        (libm::cosh(v), libm::sinh(v) / v)
    }
}

/// Bessel functions of the first kind `J_0(x) .. J_{n-1}(x)` for `x >= 0`.
///
/// Miller's backward recurrence normalised with `J_0 + 2 sum J_{2k} = 1`.
/// Intended for moderate arguments (`x` up to a few tens).
pub fn bessel_j_sequence(x: f64, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n];
    if n == 0 {
        return out;
    }
    if x == 0.0 {
        out[0] = 1.0;
        return out;
    }
    let start = {
        let m = n.max(libm::ceil(x) as usize) + 30 + libm::ceil(2.0 * libm::sqrt(40.0 * x)) as usize;
        m + (m & 1)
    };
    let mut buf = vec![0.0; start + 2];
    buf[start] = 1e-300;
    let mut norm = 0.0;
    for k in (1..=start).rev() {
        let prev = 2.0 * k as f64 / x * buf[k] - buf[k + 1];
        buf[k - 1] = prev;
        if prev.abs() > 1e250 {
            for v in buf[k - 1..].iter_mut() {
                *v *= 1e-250;
            }
            norm *= 1e-250;
        }
        if (k - 1) % 2 == 0 && k > 1 {
            norm += 2.0 * buf[k - 1];
        }
    }
    norm += buf[0];
    for (o, b) in out.iter_mut().zip(buf.iter()) {
        *o = b / norm;
    }
    out
}

/// Number of Chebyshev terms needed to represent `exp(-i x y)` on `[-1, 1]`
/// to double precision.
pub fn chebyshev_terms(x: f64) -> usize {
    let x = x.abs();
    (x + 10.0 * libm::cbrt(x) + 20.0) as usize
}
