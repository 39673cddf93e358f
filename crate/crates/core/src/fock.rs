//! Truncated number-basis oracle.
//!
//! `q = (q0/sqrt2)(a + a^dag)` and `p = i (p0/sqrt2)(a^dag - a)` on the lowest
//! `N` number states. Quadratic operators use their exact matrix elements
//! rather than products of truncated matrices, so every operator has
//! bandwidth at most two. States are stepped with a midpoint (second-order
//! Magnus) exponential per step; the exponential is applied either by a
//! Chebyshev expansion of the banded generator or by dense Padé
//! scaling-and-squaring.

use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dynamics::OscillatorConfig;
use crate::error::{invalid, Error, Result};
use crate::liegroup::LieFactors;
use crate::ode::StepLimits;
use crate::phasespace::{GridSpec, HusimiField};
use crate::signals::RAMP_STEP;
use crate::special::{bessel_j_sequence, chebyshev_terms};

const I: Complex64 = Complex64::new(0.0, 1.0);
const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Dense square complex matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct CMatrix {
    n: usize,
    data: Vec<Complex64>,
}

impl CMatrix {
    pub fn zeros(n: usize) -> Self {
        CMatrix {
            n,
            data: vec![ZERO; n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = CMatrix::zeros(n);
        for i in 0..n {
            m[(i, i)] = Complex64::new(1.0, 0.0);
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn mul(&self, other: &CMatrix) -> CMatrix {
        let n = self.n;
        let mut out = CMatrix::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let a = self.data[i * n + k];
                if a == ZERO {
                    continue;
                }
                let row = &other.data[k * n..(k + 1) * n];
                let dst = &mut out.data[i * n..(i + 1) * n];
                for (d, b) in dst.iter_mut().zip(row) {
                    *d += a * b;
                }
            }
        }
        out
    }

    pub fn add_scaled(&self, other: &CMatrix, s: Complex64) -> CMatrix {
        CMatrix {
            n: self.n,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a + s * b).collect(),
        }
    }

    pub fn scaled(&self, s: Complex64) -> CMatrix {
        CMatrix {
            n: self.n,
            data: self.data.iter().map(|a| a * s).collect(),
        }
    }

    pub fn commutator(&self, other: &CMatrix) -> CMatrix {
        self.mul(other).add_scaled(&other.mul(self), Complex64::new(-1.0, 0.0))
    }

    pub fn anticommutator(&self, other: &CMatrix) -> CMatrix {
        self.mul(other).add_scaled(&other.mul(self), Complex64::new(1.0, 0.0))
    }

    pub fn dagger(&self) -> CMatrix {
        let n = self.n;
        let mut out = CMatrix::zeros(n);
        for i in 0..n {
            for j in 0..n {
                out[(j, i)] = self[(i, j)].conj();
            }
        }
        out
    }

    /// Largest entry modulus of `self - other` on the leading `block x block`.
    pub fn block_distance(&self, other: &CMatrix, block: usize) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..block.min(self.n) {
            for j in 0..block.min(self.n) {
                worst = worst.max((self[(i, j)] - other[(i, j)]).norm());
            }
        }
        worst
    }

    pub fn norm1(&self) -> f64 {
        let n = self.n;
        (0..n)
            .map(|j| (0..n).map(|i| self.data[i * n + j].norm()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn mul_vec(&self, v: &[Complex64]) -> Vec<Complex64> {
        let n = self.n;
        (0..n)
            .map(|i| self.data[i * n..(i + 1) * n].iter().zip(v).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// Solves `self * X = rhs` by LU with partial pivoting.
    pub fn solve(&self, rhs: &CMatrix) -> Result<CMatrix> {
        let n = self.n;
        let mut a = self.data.clone();
        let mut b = rhs.data.clone();
        for col in 0..n {
            let pivot = (col..n)
                .max_by(|&x, &y| a[x * n + col].norm().total_cmp(&a[y * n + col].norm()))
                .unwrap_or(col);
            if a[pivot * n + col].norm() == 0.0 {
                return Err(Error::Singular);
            }
            if pivot != col {
                for k in 0..n {
                    a.swap(pivot * n + k, col * n + k);
                    b.swap(pivot * n + k, col * n + k);
                }
            }
            let inv = Complex64::new(1.0, 0.0) / a[col * n + col];
            for row in col + 1..n {
                let f = a[row * n + col] * inv;
                if f == ZERO {
                    continue;
                }
                for k in col..n {
                    let v = a[col * n + k];
                    a[row * n + k] -= f * v;
                }
                for k in 0..n {
                    let v = b[col * n + k];
                    b[row * n + k] -= f * v;
                }
            }
        }
        for col in (0..n).rev() {
            let inv = Complex64::new(1.0, 0.0) / a[col * n + col];
            for k in 0..n {
                b[col * n + k] *= inv;
            }
            for row in 0..col {
                let f = a[row * n + col];
                if f == ZERO {
                    continue;
                }
                for k in 0..n {
                    let v = b[col * n + k];
                    b[row * n + k] -= f * v;
                }
            }
        }
        Ok(CMatrix { n, data: b })
    }

    /// Matrix exponential by scaling and squaring with a diagonal [6/6]
    /// Padé approximant.
    pub fn expm(&self) -> Result<CMatrix> {
        const PADE: [f64; 7] = [
            1.0,
            1.0 / 2.0,
            5.0 / 44.0,
            1.0 / 66.0,
            1.0 / 792.0,
            1.0 / 15840.0,
            1.0 / 665280.0,
        ];
        let norm = self.norm1();
        let squarings = if norm > 0.5 {
            libm::ceil(libm::log2(norm / 0.5)) as u32
        } else {
            0
        };
        let a = self.scaled(Complex64::new(libm::pow(2.0, -(squarings as f64)), 0.0));
        let n = self.n;
        let mut num = CMatrix::identity(n);
        let mut den = CMatrix::identity(n);
        let mut power = CMatrix::identity(n);
        for (k, c) in PADE.iter().enumerate().skip(1) {
            power = power.mul(&a);
            num = num.add_scaled(&power, Complex64::new(*c, 0.0));
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            den = den.add_scaled(&power, Complex64::new(sign * c, 0.0));
        }
        let mut out = den.solve(&num)?;
        for _ in 0..squarings {
            out = out.mul(&out);
        }
        Ok(out)
    }
}

impl core::ops::Index<(usize, usize)> for CMatrix {
    type Output = Complex64;
    fn index(&self, (i, j): (usize, usize)) -> &Complex64 {
        &self.data[i * self.n + j]
    }
}

impl core::ops::IndexMut<(usize, usize)> for CMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut Complex64 {
        &mut self.data[i * self.n + j]
    }
}

const BAND: usize = 2;
const WIDTH: usize = 2 * BAND + 1;

/// Hermitian operator with bandwidth two: `diags[k][i] = M[i][i + k - 2]`.
#[derive(Debug, Clone, PartialEq)]
pub struct BandMatrix {
    n: usize,
    diags: [Vec<Complex64>; WIDTH],
}

impl BandMatrix {
    pub fn zeros(n: usize) -> Self {
        BandMatrix {
            n,
            diags: core::array::from_fn(|_| vec![ZERO; n]),
        }
    }

    pub fn from_dense(m: &CMatrix) -> Self {
        let n = m.dim();
        let mut b = BandMatrix::zeros(n);
        for i in 0..n {
            for k in 0..WIDTH {
                let j = i as isize + k as isize - BAND as isize;
                if j >= 0 && (j as usize) < n {
                    b.diags[k][i] = m[(i, j as usize)];
                }
            }
        }
        b
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// `sum_j c_j * ops_j`.
    pub fn combination(terms: &[(f64, &BandMatrix)]) -> Self {
        let n = terms.first().map_or(0, |t| t.1.n);
        let mut out = BandMatrix::zeros(n);
        for (c, op) in terms {
            if *c == 0.0 {
                continue;
            }
            for k in 0..WIDTH {
                for (o, v) in out.diags[k].iter_mut().zip(&op.diags[k]) {
                    *o += *c * v;
                }
            }
        }
        out
    }

    pub fn apply(&self, v: &[Complex64], out: &mut [Complex64]) {
        let n = self.n;
        for i in 0..n {
            let mut acc = ZERO;
            let lo = i.saturating_sub(BAND);
            let hi = (i + BAND).min(n - 1);
            for j in lo..=hi {
                acc += self.diags[j + BAND - i][i] * v[j];
            }
            out[i] = acc;
        }
    }

    /// Gershgorin enclosure of the (real) spectrum.
    pub fn spectral_bounds(&self) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..self.n {
            let c = self.diags[BAND][i].re;
            let r: f64 = (0..WIDTH).filter(|&k| k != BAND).map(|k| self.diags[k][i].norm()).sum();
            lo = lo.min(c - r);
            hi = hi.max(c + r);
        }
        (lo, hi)
    }

    /// `exp(-i s H) v` by Chebyshev expansion; long steps are split so each
    /// piece has expansion argument at most 20.
    pub fn expi_apply(&self, s: f64, v: &[Complex64]) -> Vec<Complex64> {
        let (lo, hi) = self.spectral_bounds();
        let center = 0.5 * (hi + lo);
        let half = 0.5 * (hi - lo);
        let total = s * half;
        let pieces = libm::ceil(total.abs() / 20.0).max(1.0) as usize;
        let x = total / pieces as f64;
        let phase = Complex64::from_polar(1.0, -s * center / pieces as f64);
        let mut out = v.to_vec();
        if half <= 0.0 {
            let ph = Complex64::from_polar(1.0, -s * center);
            out.iter_mut().for_each(|a| *a *= ph);
            return out;
        }
        let terms = chebyshev_terms(x).max(2);
        let j = bessel_j_sequence(x.abs(), terms);
        let sign = if x < 0.0 { -1.0 } else { 1.0 };
        let coeff: Vec<Complex64> = (0..terms)
            .map(|k| {
                let ik = match k % 4 {
                    0 => Complex64::new(1.0, 0.0),
                    1 => -I,
                    2 => Complex64::new(-1.0, 0.0),
                    _ => I,
                };
                let jk = if k % 2 == 1 { sign * j[k] } else { j[k] };
                let w = if k == 0 { 1.0 } else { 2.0 };
                ik * (w * jk)
            })
            .collect();
        let n = self.n;
        let mut prev = vec![ZERO; n];
        let mut cur = vec![ZERO; n];
        let mut next = vec![ZERO; n];
        let mut scratch = vec![ZERO; n];
        for _ in 0..pieces {
            // T_0 = v, T_1 = H~ v, T_{k+1} = 2 H~ T_k - T_{k-1}, H~ = (H - c)/half.
            prev.copy_from_slice(&out);
            self.apply(&prev, &mut scratch);
            for i in 0..n {
                cur[i] = (scratch[i] - center * prev[i]) / half;
            }
            let mut acc: Vec<Complex64> = (0..n).map(|i| coeff[0] * prev[i] + coeff[1] * cur[i]).collect();
            for c in &coeff[2..] {
                self.apply(&cur, &mut scratch);
                for i in 0..n {
                    next[i] = 2.0 * (scratch[i] - center * cur[i]) / half - prev[i];
                    acc[i] += c * next[i];
                }
                core::mem::swap(&mut prev, &mut cur);
                core::mem::swap(&mut cur, &mut next);
            }
            for (o, a) in out.iter_mut().zip(acc) {
                *o = a * phase;
            }
        }
        out
    }

    pub fn to_dense(&self) -> CMatrix {
        let n = self.n;
        let mut m = CMatrix::zeros(n);
        for i in 0..n {
            for k in 0..WIDTH {
                let j = i as isize + k as isize - BAND as isize;
                if j >= 0 && (j as usize) < n {
                    m[(i, j as usize)] = self.diags[k][i];
                }
            }
        }
        m
    }

    pub fn expectation(&self, v: &[Complex64]) -> Complex64 {
        let mut tmp = vec![ZERO; self.n];
        self.apply(v, &mut tmp);
        v.iter().zip(&tmp).map(|(a, b)| a.conj() * b).sum()
    }
}

/// Number-basis matrices of the algebra elements.
#[derive(Debug, Clone)]
pub struct FockBasis {
    pub n: usize,
    pub q0: f64,
    pub p0: f64,
    pub q: CMatrix,
    pub p: CMatrix,
    pub q2: CMatrix,
    pub p2: CMatrix,
    /// `{q, p} = qp + pq`.
    pub qp: CMatrix,
    band_q: BandMatrix,
    band_p: BandMatrix,
    band_q2: BandMatrix,
    band_p2: BandMatrix,
    band_qp: BandMatrix,
}

pub fn build_basis(n: usize, q0: f64, p0: f64) -> Result<FockBasis> {
    if n < 2 {
        return Err(invalid("fock_n", "need at least two levels"));
    }
    if !(q0 > 0.0 && p0 > 0.0) {
        return Err(invalid("q0/p0", "scales must be positive"));
    }
    let hbar = q0 * p0;
    let sq = |k: usize| libm::sqrt(k as f64);
    let mut q = CMatrix::zeros(n);
    let mut p = CMatrix::zeros(n);
    let mut q2 = CMatrix::zeros(n);
    let mut p2 = CMatrix::zeros(n);
    let mut qp = CMatrix::zeros(n);
    let c = core::f64::consts::FRAC_1_SQRT_2;
    for k in 0..n {
        // a|k> = sqrt(k)|k-1>, a^dag|k> = sqrt(k+1)|k+1>.
        if k + 1 < n {
            q[(k, k + 1)] = Complex64::new(c * q0 * sq(k + 1), 0.0);
            q[(k + 1, k)] = Complex64::new(c * q0 * sq(k + 1), 0.0);
            p[(k, k + 1)] = Complex64::new(0.0, -c * p0 * sq(k + 1));
            p[(k + 1, k)] = Complex64::new(0.0, c * p0 * sq(k + 1));
        }
        let diag = (2 * k + 1) as f64;
        q2[(k, k)] = Complex64::new(0.5 * q0 * q0 * diag, 0.0);
        p2[(k, k)] = Complex64::new(0.5 * p0 * p0 * diag, 0.0);
        if k + 2 < n {
            let e = sq(k + 1) * sq(k + 2);
            // q^2 = (q0^2/2)(a^2 + a^dag^2 + 2 a^dag a + 1), p^2 = (p0^2/2)(2 a^dag a + 1 - a^2 - a^dag^2).
            q2[(k, k + 2)] = Complex64::new(0.5 * q0 * q0 * e, 0.0);
            q2[(k + 2, k)] = Complex64::new(0.5 * q0 * q0 * e, 0.0);
            p2[(k, k + 2)] = Complex64::new(-0.5 * p0 * p0 * e, 0.0);
            p2[(k + 2, k)] = Complex64::new(-0.5 * p0 * p0 * e, 0.0);
            // {q, p} = i hbar (a^dag^2 - a^2).
            qp[(k + 2, k)] = Complex64::new(0.0, hbar * e);
            qp[(k, k + 2)] = Complex64::new(0.0, -hbar * e);
        }
    }
    Ok(FockBasis {
        n,
        q0,
        p0,
        band_q: BandMatrix::from_dense(&q),
        band_p: BandMatrix::from_dense(&p),
        band_q2: BandMatrix::from_dense(&q2),
        band_p2: BandMatrix::from_dense(&p2),
        band_qp: BandMatrix::from_dense(&qp),
        q,
        p,
        q2,
        p2,
        qp,
    })
}

/// One row of the algebra table: `[lhs, rhs] = i hbar * coeff * result`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CommutatorCheck {
    pub relation: &'static str,
    pub defect: f64,
}

impl FockBasis {
    /// Basis with scales taken from the oscillator at `t = 0`.
    pub fn for_config(cfg: &OscillatorConfig, n: usize) -> Result<Self> {
        let u = cfg.units();
        build_basis(n, u.q0(), u.p0())
    }

    pub fn hbar(&self) -> f64 {
        self.q0 * self.p0
    }

    pub fn band_q(&self) -> &BandMatrix {
        &self.band_q
    }

    pub fn band_p(&self) -> &BandMatrix {
        &self.band_p
    }

    pub fn band_q2(&self) -> &BandMatrix {
        &self.band_q2
    }

    pub fn band_p2(&self) -> &BandMatrix {
        &self.band_p2
    }

    pub fn band_qp(&self) -> &BandMatrix {
        &self.band_qp
    }

    /// `H = p^2/2m + m w^2 q^2/2 + f q`.
    pub fn hamiltonian(&self, mass: f64, omega: f64, force: f64) -> BandMatrix {
        BandMatrix::combination(&[
            (0.5 / mass, &self.band_p2),
            (0.5 * mass * omega * omega, &self.band_q2),
            (force, &self.band_q),
        ])
    }

    /// Defects of the eight commutation relations on the leading
    /// `block x block` corner, relative to `hbar` times the operator scale.
    pub fn commutator_table(&self, block: usize) -> [CommutatorCheck; 8] {
        let h = self.hbar();
        let ih = |c: f64| Complex64::new(0.0, c * h);
        let id = CMatrix::identity(self.n);
        let qscale = self.q0 * self.q0;
        let pscale = self.p0 * self.p0;
        let rows: [(&'static str, CMatrix, CMatrix, f64); 8] = [
            ("[q,p] = i hbar", self.q.commutator(&self.p), id.scaled(ih(1.0)), h),
            ("[q,p^2] = 2i hbar p", self.q.commutator(&self.p2), self.p.scaled(ih(2.0)), h * self.p0),
            ("[p,q^2] = -2i hbar q", self.p.commutator(&self.q2), self.q.scaled(ih(-2.0)), h * self.q0),
            ("[q^2,p^2] = 2i hbar {q,p}", self.q2.commutator(&self.p2), self.qp.scaled(ih(2.0)), h * h),
            ("[{q,p},q] = -2i hbar q", self.qp.commutator(&self.q), self.q.scaled(ih(-2.0)), h * self.q0),
            ("[{q,p},p] = 2i hbar p", self.qp.commutator(&self.p), self.p.scaled(ih(2.0)), h * self.p0),
            ("[{q,p},q^2] = -4i hbar q^2", self.qp.commutator(&self.q2), self.q2.scaled(ih(-4.0)), h * qscale),
            ("[{q,p},p^2] = 4i hbar p^2", self.qp.commutator(&self.p2), self.p2.scaled(ih(4.0)), h * pscale),
        ];
        rows.map(|(relation, lhs, rhs, scale)| CommutatorCheck {
            relation,
            defect: lhs.block_distance(&rhs, block) / scale,
        })
    }
}

/// Amplitudes in the number basis.
#[derive(Debug, Clone, PartialEq)]
pub struct FockState {
    pub amps: Vec<Complex64>,
}

impl FockState {
    pub fn vacuum(n: usize) -> Self {
        FockState::number(n, 0)
    }

    pub fn number(n: usize, k: usize) -> Self {
        let mut amps = vec![ZERO; n];
        amps[k] = Complex64::new(1.0, 0.0);
        FockState { amps }
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn norm(&self) -> f64 {
        libm::sqrt(self.amps.iter().map(|a| a.norm_sqr()).sum::<f64>())
    }

    pub fn inner(&self, other: &FockState) -> Result<Complex64> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch {
                left: self.dim(),
                right: other.dim(),
            });
        }
        Ok(self.amps.iter().zip(&other.amps).map(|(a, b)| a.conj() * b).sum())
    }

    /// Applies `exp(-i s G / hbar)` for a Hermitian generator `G`.
    pub fn evolved(&self, generator: &BandMatrix, s_over_hbar: f64) -> FockState {
        FockState {
            amps: generator.expi_apply(s_over_hbar, &self.amps),
        }
    }

    /// Coherent state `D(beta_q, beta_p)|0>`.
    pub fn coherent(basis: &FockBasis, beta_q: f64, beta_p: f64) -> FockState {
        FockState::vacuum(basis.n).displaced(basis, beta_q, beta_p)
    }

    /// `D(beta_q, beta_p)|self>` with `D = exp(-i(beta_p q + beta_q p)/hbar)`.
    pub fn displaced(&self, basis: &FockBasis, beta_q: f64, beta_p: f64) -> FockState {
        let g = BandMatrix::combination(&[(beta_p, &basis.band_q), (beta_q, &basis.band_p)]);
        self.evolved(&g, 1.0 / basis.hbar())
    }

    /// `exp(-i(k_q q^2 + k_p p^2)/hbar)|self>`.
    pub fn quadratic_rotated(&self, basis: &FockBasis, k_q: f64, k_p: f64) -> FockState {
        let g = BandMatrix::combination(&[(k_q, &basis.band_q2), (k_p, &basis.band_p2)]);
        self.evolved(&g, 1.0 / basis.hbar())
    }

    /// `S(r)|self>` with `S = exp(-i r {q,p}/hbar)`.
    pub fn squeezed(&self, basis: &FockBasis, r: f64) -> FockState {
        let g = BandMatrix::combination(&[(r, &basis.band_qp)]);
        self.evolved(&g, 1.0 / basis.hbar())
    }

    /// The factorized evolution applied to `self`, global phase omitted.
    pub fn factorized(&self, basis: &FockBasis, f: &LieFactors) -> FockState {
        self.displaced(basis, f.initial_shift, 0.0)
            .quadratic_rotated(basis, f.phi_q * f.phi_q, f.phi_p * f.phi_p)
            .squeezed(basis, f.r)
            .quadratic_rotated(basis, f.theta_q, 0.0)
            .displaced(basis, f.beta_q, f.beta_p)
    }

    /// Population and index of the most occupied level among the top tenth.
    pub fn top_population(&self) -> (usize, f64) {
        let n = self.dim();
        let band = n.div_ceil(10);
        let mut level = n - 1;
        let mut total = 0.0;
        let mut best = -1.0;
        for k in n - band..n {
            let pk = self.amps[k].norm_sqr();
            total += pk;
            if pk > best {
                best = pk;
                level = k;
            }
        }
        (level, total)
    }
}

/// Means and second moments of a state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub mean_q: f64,
    pub mean_p: f64,
    pub var_q: f64,
    pub var_p: f64,
    pub cov_qp: f64,
}

pub fn observables(state: &FockState, basis: &FockBasis) -> Moments {
    let v = &state.amps;
    let norm2 = v.iter().map(|a| a.norm_sqr()).sum::<f64>();
    let ex = |op: &BandMatrix| op.expectation(v).re / norm2;
    let mq = ex(&basis.band_q);
    let mp = ex(&basis.band_p);
    Moments {
        mean_q: mq,
        mean_p: mp,
        var_q: ex(&basis.band_q2) - mq * mq,
        var_p: ex(&basis.band_p2) - mp * mp,
        cov_qp: 0.5 * ex(&basis.band_qp) - mq * mp,
    }
}

/// `|<a|b>|`.
pub fn fidelity(a: &FockState, b: &FockState) -> Result<f64> {
    Ok(a.inner(b)?.norm())
}

/// `Q = |<alpha|psi>|^2 / pi` at normalised coordinates.
pub fn husimi_fock_point(state: &FockState, q_norm: f64, p_norm: f64) -> f64 {
    let alpha = Complex64::new(q_norm, p_norm) * core::f64::consts::FRAC_1_SQRT_2;
    let conj = alpha.conj();
    // <alpha|n> = e^{-|alpha|^2/2} conj(alpha)^n / sqrt(n!).
    let mut term = Complex64::new(libm::exp(-0.5 * alpha.norm_sqr()), 0.0);
    let mut acc = ZERO;
    for (k, c) in state.amps.iter().enumerate() {
        if k > 0 {
            term = term * conj / libm::sqrt(k as f64);
        }
        acc += term * c;
    }
    acc.norm_sqr() / core::f64::consts::PI
}

pub fn husimi_fock(state: &FockState, grid: &GridSpec) -> Result<HusimiField> {
    grid.validate()?;
    let values = grid.points().map(|(q, p)| husimi_fock_point(state, q, p)).collect();
    Ok(HusimiField { grid: *grid, values })
}

/// How the step exponential is computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Propagator {
    Chebyshev,
    Pade,
}

/// Exponential product used per step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    /// `exp(-i H(t + h/2) h / hbar)`, second order.
    Midpoint,
    /// Two-exponential commutator-free Magnus product at the Gauss nodes,
    /// fourth order.
    Cf4,
}

/// Step-size rule for [`evolve`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepPolicy {
    /// Steps per period of the fastest oscillation, `2 pi / max omega`.
    pub steps_per_period: f64,
    /// Step cap inside ramp windows, in units of `1/epsilon`.
    pub ramp_step: f64,
    pub propagator: Propagator,
    pub scheme: Scheme,
    /// Population allowed in the top tenth of levels.
    pub truncation_limit: f64,
}

impl Default for StepPolicy {
    fn default() -> Self {
        StepPolicy {
            steps_per_period: 200.0,
            ramp_step: 0.3,
            propagator: Propagator::Chebyshev,
            scheme: Scheme::Cf4,
            truncation_limit: 1e-8,
        }
    }
}

fn max_frequency(cfg: &OscillatorConfig, start: f64, end: f64) -> f64 {
    let mut w: f64 = 0.0;
    for k in 0..=4096 {
        w = w.max(cfg.omega.eval(start + (end - start) * k as f64 / 4096.0).abs());
    }
    for p in cfg.omega.pulses() {
        let mid = 0.5 * (p.rise_midpoint() + p.fall_midpoint());
        if mid >= start && mid <= end {
            w = w.max(cfg.omega.eval(mid).abs());
        }
    }
    w.max(cfg.drive_frequency.abs())
}

/// Integrates the Schrödinger equation from `start`, returning the state at
/// each of `samples` (sorted, all `>= start`).
pub fn evolve(
    basis: &FockBasis,
    state: &FockState,
    cfg: &OscillatorConfig,
    start: f64,
    samples: &[f64],
    policy: &StepPolicy,
) -> Result<Vec<FockState>> {
    if state.dim() != basis.n {
        return Err(Error::DimensionMismatch {
            left: state.dim(),
            right: basis.n,
        });
    }
    if !(policy.steps_per_period > 0.0 && policy.ramp_step > 0.0) {
        return Err(invalid("dt_policy", "step parameters must be positive"));
    }
    if samples.windows(2).any(|w| w[1] < w[0]) || samples.first().is_some_and(|&t| t < start) {
        return Err(invalid("samples", "sample times must be sorted and not precede the start"));
    }
    let end = samples.last().copied().unwrap_or(start);
    if end > start {
        cfg.validate(end)?;
    }
    let base = 2.0 * core::f64::consts::PI / (policy.steps_per_period * max_frequency(cfg, start, end.max(start + 1e-12)));
    let mut limits: StepLimits = cfg.step_limits();
    for w in limits.windows.iter_mut() {
        w.max_step *= policy.ramp_step / RAMP_STEP;
    }
    limits.h_max = Some(base);

    let hbar = basis.hbar();
    let exponential = |psi: &FockState, hmat: BandMatrix, dt: f64| -> Result<FockState> {
        match policy.propagator {
            Propagator::Chebyshev => Ok(psi.evolved(&hmat, dt / hbar)),
            Propagator::Pade => {
                let u = hmat.to_dense().scaled(Complex64::new(0.0, -dt / hbar)).expm()?;
                Ok(FockState {
                    amps: u.mul_vec(&psi.amps),
                })
            }
        }
    };
    let ham = |s: f64| basis.hamiltonian(cfg.mass, cfg.omega.eval(s), cfg.forcing(s));
    let mut psi = state.clone();
    let mut t = start;
    let mut out = Vec::with_capacity(samples.len());
    for &target in samples {
        while t < target {
            let mut h = limits.clamp(t, base);
            if t + 1.0001 * h >= target {
                h = target - t;
            }
            psi = match policy.scheme {
                Scheme::Midpoint => exponential(&psi, ham(t + 0.5 * h), h)?,
                Scheme::Cf4 => {
                    let off = libm::sqrt(3.0) / 6.0;
                    let a1 = (3.0 - 2.0 * libm::sqrt(3.0)) / 12.0;
                    let a2 = (3.0 + 2.0 * libm::sqrt(3.0)) / 12.0;
                    let h1 = ham(t + (0.5 - off) * h);
                    let h2 = ham(t + (0.5 + off) * h);
                    let first = BandMatrix::combination(&[(a2 / 0.5, &h1), (a1 / 0.5, &h2)]);
                    let second = BandMatrix::combination(&[(a1 / 0.5, &h1), (a2 / 0.5, &h2)]);
                    let mid = exponential(&psi, first, 0.5 * h)?;
                    exponential(&mid, second, 0.5 * h)?
                }
            };
            t = if h == target - t { target } else { t + h };
            let (level, pop) = psi.top_population();
            if pop > policy.truncation_limit {
                return Err(Error::TruncationBreach {
                    time: t,
                    level,
                    population: pop,
                });
            }
        }
        out.push(psi.clone());
    }
    Ok(out)
}

/// `<H(t)>` for the oscillator.
pub fn energy(state: &FockState, basis: &FockBasis, cfg: &OscillatorConfig, t: f64) -> f64 {
    let h = basis.hamiltonian(cfg.mass, cfg.omega.eval(t), cfg.forcing(t));
    h.expectation(&state.amps).re
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{solve_drive, solve_ermakov};
    use crate::liegroup::{assemble_factorization, expectation_qp, propagate_gaussian, GaussianState};
    use crate::ode::Tolerances;
    use crate::signals::ScalarSignal;
    use crate::units::Units;

    fn unit_basis(n: usize) -> FockBasis {
        build_basis(n, 1.0, 1.0).unwrap()
    }

    #[test]
    fn commutators_hold_on_leading_block() {
        let basis = build_basis(64, 0.7, 1.3).unwrap();
        for row in basis.commutator_table(62) {
            assert!(row.defect < 1e-10, "{} {}", row.relation, row.defect);
        }
        // The last row and column are where truncation shows.
        let full = basis.q.commutator(&basis.p);
        assert!((full[(63, 63)] - Complex64::new(0.0, basis.hbar())).norm() > 1.0);
    }

    #[test]
    fn pade_of_zero_and_diagonal() {
        let z = CMatrix::zeros(5);
        assert_eq!(z.expm().unwrap(), CMatrix::identity(5));
        let mut d = CMatrix::zeros(3);
        for k in 0..3 {
            d[(k, k)] = Complex64::new(0.0, 7.0 * k as f64);
        }
        let e = d.expm().unwrap();
        for k in 0..3 {
            let want = Complex64::from_polar(1.0, 7.0 * k as f64);
            assert!((e[(k, k)] - want).norm() < 1e-13);
        }
    }

    #[test]
    fn chebyshev_matches_pade() {
        let basis = unit_basis(40);
        let h = BandMatrix::combination(&[
            (0.8, basis.band_p2()),
            (1.7, basis.band_q2()),
            (-0.4, basis.band_qp()),
            (0.9, basis.band_q()),
        ]);
        let psi = FockState::coherent(&basis, 0.5, -0.3);
        for s in [0.01, 0.7, 9.0] {
            let cheb = h.expi_apply(s, &psi.amps);
            let u = h.to_dense().scaled(Complex64::new(0.0, -s)).expm().unwrap();
            let pade = u.mul_vec(&psi.amps);
            let d = cheb.iter().zip(&pade).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
            assert!(d < 1e-11, "s={s} d={d}");
        }
    }

    #[test]
    fn lu_solve_inverts() {
        let basis = unit_basis(6);
        let a = basis.q2.add_scaled(&CMatrix::identity(6), Complex64::new(0.5, 0.2));
        let x = a.solve(&CMatrix::identity(6)).unwrap();
        assert!(a.mul(&x).block_distance(&CMatrix::identity(6), 6) < 1e-12);
        assert!(matches!(CMatrix::zeros(3).solve(&CMatrix::identity(3)), Err(Error::Singular)));
    }

    #[test]
    fn coherent_state_moments() {
        let basis = build_basis(80, 2.0, 0.5).unwrap();
        let s = FockState::coherent(&basis, 1.2, 0.4);
        let m = observables(&s, &basis);
        assert!((m.mean_q - 1.2).abs() < 1e-12);
        assert!((m.mean_p + 0.4).abs() < 1e-12);
        assert!((m.var_q - 2.0).abs() < 1e-11);
        assert!((m.var_p - 0.125).abs() < 1e-12);
        assert!(m.cov_qp.abs() < 1e-12);
        assert!((s.norm() - 1.0).abs() < 1e-13);
    }

    #[test]
    fn squeezed_vacuum_variances() {
        let basis = unit_basis(96);
        let r = 0.5 * libm::log(2.0);
        let s = FockState::vacuum(96).squeezed(&basis, r);
        let m = observables(&s, &basis);
        assert!((m.var_q - 0.5 * libm::exp(4.0 * r)).abs() < 1e-11);
        assert!((m.var_p - 0.5 * libm::exp(-4.0 * r)).abs() < 1e-11);
    }

    #[test]
    fn husimi_of_vacuum() {
        let v = FockState::vacuum(8);
        assert!((husimi_fock_point(&v, 0.0, 0.0) - 1.0 / core::f64::consts::PI).abs() < 1e-15);
        let q = husimi_fock_point(&v, 1.0, -0.5);
        let want = libm::exp(-0.5 * 1.25) / core::f64::consts::PI;
        assert!((q - want).abs() < 1e-15);
    }

    #[test]
    fn resonant_drive_from_vacuum() {
        // q(t) = -(Omega/2) t sin t, p(t) = -(Omega/2)(sin t + t cos t).
        let mut cfg = OscillatorConfig::constant(Units::default());
        let amp = 0.3;
        cfg.drive = ScalarSignal::constant(amp);
        let t_end = 10.0;
        let basis = FockBasis::for_config(&cfg, 64).unwrap();
        let out = evolve(&basis, &FockState::vacuum(64), &cfg, 0.0, &[5.0, t_end], &StepPolicy::default()).unwrap();
        let tol = Tolerances::default();
        let erm = solve_ermakov(&cfg, t_end, &tol).unwrap();
        let drv = solve_drive(&cfg, t_end, &tol).unwrap();
        let vac = GaussianState::vacuum(&Units::default());
        for (t, state) in [5.0, t_end].iter().zip(&out) {
            let q = -0.5 * amp * t * libm::sin(*t);
            let p = -0.5 * amp * (libm::sin(*t) + t * libm::cos(*t));
            let m = observables(state, &basis);
            assert!((m.mean_q - q).abs() < 1e-7 && (m.mean_p - p).abs() < 1e-7, "fock t={t}");
            let f = assemble_factorization(&erm, &drv, *t).unwrap();
            let closed = expectation_qp(&vac, &f);
            assert!((closed[0] - q).abs() < 1e-9 && (closed[1] - p).abs() < 1e-9, "closed t={t}");
            let g = propagate_gaussian(&vac, &f);
            assert!((g.var_q() - 0.5).abs() < 1e-9);
            let fact = FockState::vacuum(64).factorized(&basis, &f);
            assert!(fidelity(&fact, state).unwrap() > 1.0 - 1e-9);
        }
    }

    #[test]
    fn constant_hamiltonian_conserves_energy() {
        let cfg = OscillatorConfig::constant(Units::default());
        let basis = FockBasis::for_config(&cfg, 48).unwrap();
        let psi = FockState::coherent(&basis, 1.0, 0.5).squeezed(&basis, 0.2);
        let e0 = energy(&psi, &basis, &cfg, 0.0);
        let out = evolve(&basis, &psi, &cfg, 0.0, &[1.0, 2.0, 3.0], &StepPolicy::default()).unwrap();
        for s in &out {
            assert!((energy(s, &basis, &cfg, 0.0) - e0).abs() < 1e-11 * e0);
            assert!((s.norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn fourth_order_beats_midpoint() {
        let mut cfg = OscillatorConfig::constant(Units::default());
        cfg.drive = ScalarSignal::constant(0.3);
        let basis = FockBasis::for_config(&cfg, 48).unwrap();
        let q_exact = -0.15 * 6.0 * libm::sin(6.0);
        let run = |scheme| {
            let policy = StepPolicy {
                scheme,
                steps_per_period: 50.0,
                ..StepPolicy::default()
            };
            let out = evolve(&basis, &FockState::vacuum(48), &cfg, 0.0, &[6.0], &policy).unwrap();
            (observables(&out[0], &basis).mean_q - q_exact).abs()
        };
        let mid = run(Scheme::Midpoint);
        let cf4 = run(Scheme::Cf4);
        assert!(cf4 < 1e-2 * mid, "{cf4} {mid}");
    }

    #[test]
    fn pade_propagator_agrees() {
        let mut cfg = OscillatorConfig::constant(Units::default());
        cfg.drive = ScalarSignal::constant(0.2);
        let basis = FockBasis::for_config(&cfg, 24).unwrap();
        let run = |propagator| {
            let policy = StepPolicy {
                propagator,
                steps_per_period: 40.0,
                ..StepPolicy::default()
            };
            evolve(&basis, &FockState::vacuum(24), &cfg, 0.0, &[2.0], &policy).unwrap().remove(0)
        };
        let a = run(Propagator::Chebyshev);
        let b = run(Propagator::Pade);
        assert!(fidelity(&a, &b).unwrap() > 1.0 - 1e-12);
    }

    #[test]
    fn truncation_breach_is_reported() {
        let mut cfg = OscillatorConfig::constant(Units::default());
        cfg.drive = ScalarSignal::constant(2.0);
        let basis = FockBasis::for_config(&cfg, 16).unwrap();
        let err = evolve(&basis, &FockState::vacuum(16), &cfg, 0.0, &[20.0], &StepPolicy::default()).unwrap_err();
        assert!(matches!(err, Error::TruncationBreach { level, .. } if level >= 14));
    }

    #[test]
    fn bad_inputs() {
        assert!(build_basis(1, 1.0, 1.0).is_err());
        let cfg = OscillatorConfig::constant(Units::default());
        let basis = unit_basis(8);
        let wrong = FockState::vacuum(9);
        assert!(matches!(
            evolve(&basis, &wrong, &cfg, 0.0, &[1.0], &StepPolicy::default()),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(evolve(&basis, &FockState::vacuum(8), &cfg, 0.0, &[2.0, 1.0], &StepPolicy::default()).is_err());
    }
}
