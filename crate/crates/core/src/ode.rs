//! Dormand–Prince 5(4) integrator with step-size control and a continuous
//! extension (Hairer's `dopri5` dense output).

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::signals::RampWindow;

/// Relative and absolute tolerances, both in dimensionless units.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Tolerances {
    pub rtol: f64,
    pub atol: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            rtol: 1e-12,
            atol: 1e-14,
        }
    }
}

impl Tolerances {
    pub fn validate(&self) -> Result<()> {
        if !(self.rtol > 0.0 && self.rtol < 1.0) {
            return Err(crate::error::invalid("rtol", "must lie in (0, 1)"));
        }
        if !(self.atol > 0.0 && self.atol.is_finite()) {
            return Err(crate::error::invalid("atol", "must be positive"));
        }
        Ok(())
    }
}

/// Limits on the step size: a global cap plus capped ramp windows.
#[derive(Debug, Clone, Default)]
pub struct StepLimits {
    pub h_max: Option<f64>,
    pub windows: Vec<RampWindow>,
    pub max_steps: Option<usize>,
}

impl StepLimits {
    /// Caps a proposed step `h` taken from `t`. A step that would jump over
    /// the start of a window is shortened so it lands just inside it.
    pub fn clamp(&self, t: f64, h: f64) -> f64 {
        let mut h = match self.h_max {
            Some(cap) => h.min(cap),
            None => h,
        };
        for w in &self.windows {
            if t + h <= w.start || t >= w.end {
                continue;
            }
            if t < w.start {
                h = h.min((w.start - t) + w.max_step);
            } else {
                h = h.min(w.max_step);
            }
        }
        h
    }
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

/// One accepted step and its interpolation coefficients.
#[derive(Debug, Clone)]
pub struct Segment<const N: usize> {
    pub t: f64,
    pub h: f64,
    cont: [[f64; N]; 5],
}

impl<const N: usize> Segment<N> {
    fn eval(&self, t: f64) -> [f64; N] {
        let s = (t - self.t) / self.h;
        let s1 = 1.0 - s;
        let c = &self.cont;
        core::array::from_fn(|i| {
            c[0][i] + s * (c[1][i] + s1 * (c[2][i] + s * (c[3][i] + s1 * c[4][i])))
        })
    }

    /// Time derivative of the continuous extension.
    fn derivative(&self, t: f64) -> [f64; N] {
        let s = (t - self.t) / self.h;
        let c = &self.cont;
        // y(s) = c0 + s c1 + s(1-s) c2 + s^2(1-s) c3 + s^2(1-s)^2 c4
        core::array::from_fn(|i| {
            let dy = c[1][i]
                + (1.0 - 2.0 * s) * c[2][i]
                + (2.0 * s - 3.0 * s * s) * c[3][i]
                + 2.0 * s * (1.0 - s) * (1.0 - 2.0 * s) * c[4][i];
            dy / self.h
        })
    }

    pub fn end(&self) -> f64 {
        self.t + self.h
    }
}

/// Piecewise-polynomial solution over `[t0, t1]`.
#[derive(Debug, Clone)]
pub struct DenseTrajectory<const N: usize> {
    segments: Vec<Segment<N>>,
    t0: f64,
    t1: f64,
    y0: [f64; N],
    y1: [f64; N],
}

impl<const N: usize> DenseTrajectory<N> {
    pub fn start(&self) -> f64 {
        self.t0
    }

    pub fn end(&self) -> f64 {
        self.t1
    }

    pub fn segments(&self) -> &[Segment<N>] {
        &self.segments
    }

    /// Accepted step boundaries, `t0` first and `t1` last.
    pub fn grid(&self) -> Vec<f64> {
        let mut g: Vec<f64> = self.segments.iter().map(|s| s.t).collect();
        g.push(self.t1);
        g
    }

    pub fn contains(&self, t: f64) -> bool {
        t >= self.t0 && t <= self.t1
    }

    fn segment(&self, t: f64) -> Option<&Segment<N>> {
        if self.segments.is_empty() {
            return None;
        }
        let idx = self.segments.partition_point(|s| s.t <= t);
        Some(&self.segments[idx.saturating_sub(1).min(self.segments.len() - 1)])
    }

    /// State at `t`. Values outside `[t0, t1]` are clamped to the ends.
    pub fn eval(&self, t: f64) -> [f64; N] {
        if t <= self.t0 {
            return self.y0;
        }
        if t >= self.t1 {
            return self.y1;
        }
        match self.segment(t) {
            Some(s) => s.eval(t),
            None => self.y0,
        }
    }

    pub fn derivative(&self, t: f64) -> [f64; N] {
        let t = t.clamp(self.t0, self.t1);
        match self.segment(t) {
            Some(s) => s.derivative(t),
            None => [0.0; N],
        }
    }

    pub fn final_state(&self) -> [f64; N] {
        self.y1
    }
}

fn weighted_rms<const N: usize>(v: &[f64; N], sc: &[f64; N]) -> f64 {
    let s: f64 = v.iter().zip(sc).map(|(x, w)| (x / w) * (x / w)).sum();
    libm::sqrt(s / N as f64)
}

fn axpy<const N: usize>(y: &[f64; N], h: f64, terms: &[(f64, &[f64; N])]) -> [f64; N] {
    core::array::from_fn(|i| {
        let mut acc = 0.0;
        for (c, k) in terms {
            acc += c * k[i];
        }
        y[i] + h * acc
    })
}

/// Integrates `y' = f(t, y)` from `t0` to `t1 > t0`.
///
/// `scale` carries the natural magnitude of each component so the absolute
/// tolerance is applied in dimensionless units.
pub fn integrate<const N: usize, F>(
    mut f: F,
    t0: f64,
    y0: [f64; N],
    t1: f64,
    tol: &Tolerances,
    scale: &[f64; N],
    limits: &StepLimits,
) -> Result<DenseTrajectory<N>>
where
    F: FnMut(f64, &[f64; N]) -> Result<[f64; N]>,
{
    if !(t1 > t0) {
        return Err(crate::error::invalid("t_end", "must exceed the start time"));
    }
    let rtol = tol.rtol;
    let atol: [f64; N] = core::array::from_fn(|i| tol.atol * scale[i]);
    let max_steps = limits.max_steps.unwrap_or(2_000_000);

    let mut t = t0;
    let mut y = y0;
    let mut k1 = f(t, &y)?;
    let span = t1 - t0;

    // Initial step from derivative magnitudes.
    let sc: [f64; N] = core::array::from_fn(|i| atol[i] + rtol * y[i].abs());
    let d0 = weighted_rms(&y, &sc);
    let d1 = weighted_rms(&k1, &sc);
    let mut h = if d0 < 1e-10 || d1 < 1e-10 { 1e-6 } else { 0.01 * d0 / d1 };
    h = h.min(span);
    h = limits.clamp(t, h);
    let probe = axpy(&y, h, &[(1.0, &k1)]);
    let k_probe = f(t + h, &probe)?;
    let diff: [f64; N] = core::array::from_fn(|i| k_probe[i] - k1[i]);
    let d2 = weighted_rms(&diff, &sc) / h;
    let dmax = d1.max(d2);
    let h1 = if dmax <= 1e-15 {
        (h * 1e-3).max(1e-6)
    } else {
        libm::pow(0.01 / dmax, 0.2)
    };
    h = (100.0 * h).min(h1).min(span);

    let mut segments = Vec::new();
    let mut facold: f64 = 1e-4;
    let mut last_rejected = false;
    let mut steps = 0usize;
    let expo1 = 0.2 - 0.04 * 0.75;

    loop {
        if steps >= max_steps {
            return Err(Error::TooManySteps { time: t });
        }
        let mut last = false;
        h = limits.clamp(t, h);
        if t + 1.01 * h >= t1 {
            h = t1 - t;
            last = true;
        }
        if h < 16.0 * f64::EPSILON * t.abs().max(span) {
            return Err(Error::StepSizeUnderflow { time: t });
        }
        steps += 1;

        let y2 = axpy(&y, h, &[(A21, &k1)]);
        let k2 = f(t + C2 * h, &y2)?;
        let y3 = axpy(&y, h, &[(A31, &k1), (A32, &k2)]);
        let k3 = f(t + C3 * h, &y3)?;
        let y4 = axpy(&y, h, &[(A41, &k1), (A42, &k2), (A43, &k3)]);
        let k4 = f(t + C4 * h, &y4)?;
        let y5 = axpy(&y, h, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)]);
        let k5 = f(t + C5 * h, &y5)?;
        let y6 = axpy(&y, h, &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)]);
        let t_new = if last { t1 } else { t + h };
        let k6 = f(t_new, &y6)?;
        let y_new = axpy(&y, h, &[(A71, &k1), (A73, &k3), (A74, &k4), (A75, &k5), (A76, &k6)]);
        let k7 = f(t_new, &y_new)?;

        let err_vec: [f64; N] = core::array::from_fn(|i| {
            h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i])
        });
        let sc: [f64; N] = core::array::from_fn(|i| atol[i] + rtol * y[i].abs().max(y_new[i].abs()));
        let err = weighted_rms(&err_vec, &sc);

        let fac11 = libm::pow(err, expo1);
        if err <= 1.0 {
            let mut fac = fac11 / libm::pow(facold, 0.04);
            fac = (1.0 / 10.0_f64).max((1.0 / 0.2_f64).min(fac / 0.9));
            facold = err.max(1e-4);

            let ydiff: [f64; N] = core::array::from_fn(|i| y_new[i] - y[i]);
            let bspl: [f64; N] = core::array::from_fn(|i| h * k1[i] - ydiff[i]);
            let cont = [
                y,
                ydiff,
                bspl,
                core::array::from_fn(|i| ydiff[i] - h * k7[i] - bspl[i]),
                core::array::from_fn(|i| {
                    h * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i] + D7 * k7[i])
                }),
            ];
            segments.push(Segment { t, h, cont });

            k1 = k7;
            y = y_new;
            t = t_new;
            if last {
                break;
            }
            let mut h_new = h / fac;
            if last_rejected {
                h_new = h_new.min(h);
            }
            last_rejected = false;
            h = h_new;
        } else {
            h /= (1.0 / 0.2_f64).min(fac11 / 0.9);
            last_rejected = true;
        }
    }

    Ok(DenseTrajectory {
        segments,
        t0,
        t1,
        y0,
        y1: y,
    })
}
