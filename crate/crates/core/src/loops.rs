//! Truncated twisted loops: 2×2 complex Laurent series in λ.
//!
//! A twisted loop satisfies g(−λ) = σ₃ g(λ) σ₃, so diagonal entries live at
//! even degrees and off-diagonal entries at odd degrees. Coefficients are
//! stored densely over degrees [−N, N].

use std::f64::consts::PI;

use nalgebra::Matrix2;
use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type Mat2 = Matrix2<C64>;

pub const DEFAULT_TRUNC: usize = 24;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

/// The matrix A = [[0,1],[1,0]].
pub fn axis_a() -> Mat2 {
    Mat2::new(ZERO, ONE, ONE, ZERO)
}

/// The Pauli matrix σ₃ = diag(1, −1).
pub fn sigma3() -> Mat2 {
    Mat2::new(ONE, ZERO, ZERO, -ONE)
}

pub fn mat_max_abs(m: &Mat2) -> f64 {
    m.iter().fold(0.0, |acc, z| acc.max(z.norm()))
}

/// A point λ = e^{iθ} on the unit circle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CirclePoint {
    pub theta: f64,
    pub lambda: C64,
}

impl CirclePoint {
    /// Builds the point from an angle, reduced to [0, 2π).
    pub fn from_theta(theta: f64) -> Self {
        let t = theta.rem_euclid(2.0 * PI);
        Self {
            theta: t,
            lambda: C64::from_polar(1.0, t),
        }
    }

    pub fn one() -> Self {
        Self::from_theta(0.0)
    }
}

fn parity_ok(k: i32, m: &Mat2) -> bool {
    if k.rem_euclid(2) == 0 {
        m[(0, 1)] == ZERO && m[(1, 0)] == ZERO
    } else {
        m[(0, 0)] == ZERO && m[(1, 1)] == ZERO
    }
}

fn project_parity(k: i32, m: &mut Mat2) {
    if k.rem_euclid(2) == 0 {
        m[(0, 1)] = ZERO;
        m[(1, 0)] = ZERO;
    } else {
        m[(0, 0)] = ZERO;
        m[(1, 1)] = ZERO;
    }
}

/// A 2×2 matrix Laurent series truncated to degrees [−N, N] obeying the twist parity.
#[derive(Debug, Clone, PartialEq)]
pub struct TwistedLoop {
    trunc: usize,
    coeffs: Vec<Mat2>,
}

impl TwistedLoop {
    pub fn zero(trunc: usize) -> Self {
        Self {
            trunc,
            coeffs: vec![Mat2::zeros(); 2 * trunc + 1],
        }
    }

    pub fn identity(trunc: usize) -> Self {
        Self::constant(Mat2::identity(), trunc)
    }

    /// The constant loop with value `m`. Off-diagonal entries are dropped.
    pub fn constant(m: Mat2, trunc: usize) -> Self {
        let mut g = Self::zero(trunc);
        let mut m = m;
        project_parity(0, &mut m);
        g.coeffs[trunc] = m;
        g
    }

    /// Builds a loop from (degree, coefficient) pairs; missing degrees are zero.
    pub fn from_coeffs(list: &[(i32, Mat2)], trunc: usize) -> Result<Self> {
        let mut g = Self::zero(trunc);
        for (k, m) in list {
            if k.unsigned_abs() as usize > trunc {
                return Err(Error::InvalidParameter(format!(
                    "degree {k} outside [-{trunc}, {trunc}]"
                )));
            }
            if !parity_ok(*k, m) {
                return Err(Error::TwistViolation { degree: *k });
            }
            *g.coeff_mut(*k) += m;
        }
        Ok(g)
    }

    /// Builds a loop from (degree, coefficient) pairs, silently dropping
    /// parity-violating entries and degrees beyond the truncation.
    pub(crate) fn from_coeffs_projected(list: impl IntoIterator<Item = (i32, Mat2)>, trunc: usize) -> Self {
        let mut g = Self::zero(trunc);
        for (k, mut m) in list {
            if k.unsigned_abs() as usize <= trunc {
                project_parity(k, &mut m);
                *g.coeff_mut(k) += m;
            }
        }
        g
    }

    pub fn trunc(&self) -> usize {
        self.trunc
    }

    fn idx(&self, k: i32) -> Option<usize> {
        let n = self.trunc as i32;
        (k >= -n && k <= n).then(|| (k + n) as usize)
    }

    /// Coefficient at degree `k`; zero outside the truncation window.
    pub fn coeff(&self, k: i32) -> Mat2 {
        self.idx(k).map(|i| self.coeffs[i]).unwrap_or_else(Mat2::zeros)
    }

    pub(crate) fn coeff_mut(&mut self, k: i32) -> &mut Mat2 {
        let i = self.idx(k).expect("degree inside truncation window");
        &mut self.coeffs[i]
    }

    /// Iterates (degree, coefficient) over the full window.
    pub fn iter(&self) -> impl Iterator<Item = (i32, &Mat2)> + '_ {
        let n = self.trunc as i32;
        self.coeffs.iter().enumerate().map(move |(i, m)| (i as i32 - n, m))
    }

    /// Lowest and highest degree carrying a nonzero coefficient.
    pub fn degree_range(&self) -> Option<(i32, i32)> {
        let nz: Vec<i32> = self
            .iter()
            .filter(|(_, m)| mat_max_abs(m) > 0.0)
            .map(|(k, _)| k)
            .collect();
        Some((*nz.first()?, *nz.last()?))
    }

    /// Checks the parity rule on every coefficient.
    pub fn is_twisted(&self) -> bool {
        self.iter().all(|(k, m)| parity_ok(k, m))
    }

    /// Copies into a window of a different truncation degree.
    pub fn retruncate(&self, trunc: usize) -> Self {
        Self::from_coeffs_projected(self.iter().map(|(k, m)| (k, *m)), trunc)
    }

    /// Keeps only degrees ≥ 0 (`plus`) or ≤ 0 (`minus`).
    pub fn restrict(&self, lo: i32, hi: i32) -> Self {
        let mut g = self.clone();
        for (i, m) in g.coeffs.iter_mut().enumerate() {
            let k = i as i32 - self.trunc as i32;
            if k < lo || k > hi {
                *m = Mat2::zeros();
            }
        }
        g
    }

    pub fn scale(&self, s: C64) -> Self {
        Self {
            trunc: self.trunc,
            coeffs: self.coeffs.iter().map(|m| m * s).collect(),
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        let n = self.trunc.max(other.trunc);
        let mut g = self.retruncate(n);
        for (k, m) in other.iter() {
            *g.coeff_mut(k) += m;
        }
        g
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.scale(-ONE))
    }

    /// Conjugates every coefficient by a constant matrix: m ↦ p m q.
    pub fn sandwich(&self, p: &Mat2, q: &Mat2) -> Self {
        let mut g = self.clone();
        for (i, m) in g.coeffs.iter_mut().enumerate() {
            let k = i as i32 - self.trunc as i32;
            *m = p * *m * q;
            project_parity(k, m);
        }
        g
    }

    /// Largest entry modulus over all coefficients.
    pub fn max_abs(&self) -> f64 {
        self.coeffs.iter().fold(0.0, |a, m| a.max(mat_max_abs(m)))
    }

    /// Largest coefficient-wise entry difference.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        let n = self.trunc.max(other.trunc) as i32;
        (-n..=n).fold(0.0, |a, k| a.max(mat_max_abs(&(self.coeff(k) - other.coeff(k)))))
    }

    /// Cauchy product, computed in full and re-truncated to the larger N.
    pub fn mul(&self, other: &Self) -> Self {
        let n = self.trunc.max(other.trunc);
        let ni = n as i32;
        let (Some((alo, ahi)), Some((blo, bhi))) = (self.degree_range(), other.degree_range()) else {
            return Self::zero(n);
        };
        let mut out = Self::zero(n);
        for ka in alo..=ahi {
            let a = self.coeff(ka);
            if mat_max_abs(&a) == 0.0 {
                continue;
            }
            let lo = blo.max(-ni - ka);
            let hi = bhi.min(ni - ka);
            for kb in lo..=hi {
                let b = other.coeffs[(kb + other.trunc as i32) as usize];
                out.coeffs[(ka + kb + ni) as usize] += a * b;
            }
        }
        out
    }

    /// Circle adjoint: coefficient k of the result is the conjugate transpose of coefficient −k.
    pub fn star(&self) -> Self {
        let mut g = Self::zero(self.trunc);
        for (k, m) in self.iter() {
            *g.coeff_mut(-k) = m.adjoint();
        }
        g
    }

    /// Σ_k c_k λ^k, with λ^k = e^{ikθ} computed per degree.
    pub fn eval(&self, p: &CirclePoint) -> Mat2 {
        let mut acc = Mat2::zeros();
        for (k, m) in self.iter() {
            if k == 0 {
                acc += m;
            } else if m.iter().any(|v| *v != ZERO) {
                acc += m * C64::from_polar(1.0, k as f64 * p.theta);
            }
        }
        acc
    }

    /// Evaluation at an arbitrary nonzero complex λ.
    pub fn eval_at(&self, lambda: C64) -> Mat2 {
        let mut acc = Mat2::zeros();
        for (k, m) in self.iter() {
            if m.iter().any(|v| *v != ZERO) {
                acc += m * lambda.powi(k);
            }
        }
        acc
    }

    /// ∂/∂θ with λ = e^{iθ}: coefficient k ↦ i·k·c_k.
    pub fn theta_derivative(&self) -> Self {
        let mut g = self.clone();
        for (k, m) in g.iter_mut_with_degree() {
            *m *= I * k as f64;
        }
        g
    }

    fn iter_mut_with_degree(&mut self) -> impl Iterator<Item = (i32, &mut Mat2)> + '_ {
        let n = self.trunc as i32;
        self.coeffs.iter_mut().enumerate().map(move |(i, m)| (i as i32 - n, m))
    }

    /// Pointwise inverse on circle samples, transformed back by FFT.
    pub fn inverse(&self) -> Result<Self> {
        self.inverse_with(1e-12)
    }

    pub fn inverse_with(&self, singular_det: f64) -> Result<Self> {
        let s = sample_count(self.trunc);
        let mut vals = to_samples(self, s);
        let mut min_det = f64::INFINITY;
        for v in vals.iter_mut() {
            let d = v.determinant();
            min_det = min_det.min(d.norm());
            if d.norm() < singular_det {
                return Err(Error::SingularLoop { min_det: d.norm() });
            }
            *v = Mat2::new(v[(1, 1)], -v[(0, 1)], -v[(1, 0)], v[(0, 0)]) / d;
        }
        if !min_det.is_finite() {
            return Err(Error::SingularLoop { min_det });
        }
        Ok(from_samples(&vals, self.trunc))
    }

    /// Pointwise values at the `s` equispaced circle points θ_j = 2πj/s.
    pub fn samples(&self, s: usize) -> Vec<Mat2> {
        to_samples(self, s)
    }

    /// Coefficients from equispaced samples (inverse of [`TwistedLoop::samples`]).
    pub fn from_samples(vals: &[Mat2], trunc: usize) -> Self {
        from_samples(vals, trunc)
    }
}

/// Number of circle samples used by FFT round trips: the next power of two ≥ 4N.
pub fn sample_count(trunc: usize) -> usize {
    (4 * trunc).max(8).next_power_of_two()
}

fn to_samples(g: &TwistedLoop, s: usize) -> Vec<Mat2> {
    let mut planner = FftPlanner::<f64>::new();
    let fft = planner.plan_fft_inverse(s);
    let mut out = vec![Mat2::zeros(); s];
    for r in 0..2 {
        for c in 0..2 {
            let mut buf = vec![ZERO; s];
            for (k, m) in g.iter() {
                buf[(k.rem_euclid(s as i32)) as usize] += m[(r, c)];
            }
            fft.process(&mut buf);
            for (o, v) in out.iter_mut().zip(buf) {
                o[(r, c)] = v;
            }
        }
    }
    out
}

fn from_samples(vals: &[Mat2], trunc: usize) -> TwistedLoop {
    let s = vals.len();
    let mut planner = FftPlanner::<f64>::new();
    let fft = planner.plan_fft_forward(s);
    let mut g = TwistedLoop::zero(trunc);
    let n = trunc as i32;
    for r in 0..2 {
        for c in 0..2 {
            let mut buf: Vec<C64> = vals.iter().map(|m| m[(r, c)]).collect();
            fft.process(&mut buf);
            for k in -n..=n {
                if (k.unsigned_abs() as usize) < s.div_ceil(2) {
                    g.coeff_mut(k)[(r, c)] = buf[k.rem_euclid(s as i32) as usize] / s as f64;
                }
            }
        }
    }
    for (k, m) in g.iter_mut_with_degree() {
        project_parity(k, m);
    }
    g
}

/// A scalar Laurent polynomial, used as the argument of [`exp_axis`].
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarLaurent {
    lo: i32,
    coeffs: Vec<C64>,
}

impl ScalarLaurent {
    /// Builds from (degree, coefficient) pairs; repeated degrees add up.
    pub fn from_terms(terms: &[(i32, C64)]) -> Self {
        if terms.is_empty() {
            return Self { lo: 0, coeffs: vec![] };
        }
        let lo = terms.iter().map(|t| t.0).min().unwrap();
        let hi = terms.iter().map(|t| t.0).max().unwrap();
        let mut coeffs = vec![ZERO; (hi - lo + 1) as usize];
        for (k, c) in terms {
            coeffs[(k - lo) as usize] += c;
        }
        Self { lo, coeffs }
    }

    /// λ⁻¹z − λz̄, the cylinder frame exponent.
    pub fn cylinder_exponent(z: C64) -> Self {
        Self::from_terms(&[(-1, z), (1, -z.conj())])
    }

    pub fn coeff(&self, k: i32) -> C64 {
        let i = k - self.lo;
        if i < 0 || i as usize >= self.coeffs.len() {
            ZERO
        } else {
            self.coeffs[i as usize]
        }
    }

    pub fn terms(&self) -> impl Iterator<Item = (i32, C64)> + '_ {
        self.coeffs.iter().enumerate().map(|(i, c)| (self.lo + i as i32, *c))
    }

    fn norm1(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm()).sum()
    }

    fn scale(&self, s: C64) -> Self {
        Self {
            lo: self.lo,
            coeffs: self.coeffs.iter().map(|c| c * s).collect(),
        }
    }

    fn add(&self, o: &Self) -> Self {
        let terms: Vec<(i32, C64)> = self.terms().chain(o.terms()).collect();
        Self::from_terms(&terms)
    }

    /// Product keeping only degrees in [−cap, cap].
    fn mul_capped(&self, o: &Self, cap: i32) -> Self {
        if self.coeffs.is_empty() || o.coeffs.is_empty() {
            return Self { lo: 0, coeffs: vec![] };
        }
        let lo = (self.lo + o.lo).max(-cap);
        let hi = (self.lo + self.coeffs.len() as i32 - 1 + o.lo + o.coeffs.len() as i32 - 1).min(cap);
        if hi < lo {
            return Self { lo: 0, coeffs: vec![] };
        }
        let mut coeffs = vec![ZERO; (hi - lo + 1) as usize];
        for (ka, a) in self.terms() {
            for (kb, b) in o.terms() {
                let k = ka + kb;
                if k >= lo && k <= hi {
                    coeffs[(k - lo) as usize] += a * b;
                }
            }
        }
        Self { lo, coeffs }
    }
}

/// cosh(x)·I + sinh(x)·A as a twisted loop, for x supported on odd degrees.
///
/// Uses a Taylor series on x/2^s followed by s squarings of the pair
/// (cosh, sinh); intermediate products keep degrees up to 4N.
pub fn exp_axis(x: &ScalarLaurent, trunc: usize) -> Result<TwistedLoop> {
    for (k, c) in x.terms() {
        if k.rem_euclid(2) == 0 && c != ZERO {
            return Err(Error::TwistViolation { degree: k });
        }
    }
    let cap = 4 * trunc as i32 + 8;
    let nu = x.norm1();
    let s = if nu > 0.5 { (nu / 0.5).log2().ceil() as i32 } else { 0 };
    let y = x.scale(C64::new(0.5f64.powi(s), 0.0));
    let one = ScalarLaurent::from_terms(&[(0, ONE)]);
    let mut ch = one.clone();
    let mut sh = ScalarLaurent::from_terms(&[]);
    let mut term = one;
    for j in 1..200 {
        term = term.mul_capped(&y, cap).scale(C64::new(1.0 / j as f64, 0.0));
        if j % 2 == 0 {
            ch = ch.add(&term);
        } else {
            sh = sh.add(&term);
        }
        if term.norm1() < 1e-18 {
            break;
        }
    }
    for _ in 0..s {
        let c2 = ch.mul_capped(&ch, cap).add(&sh.mul_capped(&sh, cap));
        let s2 = ch.mul_capped(&sh, cap).scale(C64::new(2.0, 0.0));
        ch = c2;
        sh = s2;
    }
    let a = axis_a();
    let terms = ch
        .terms()
        .map(|(k, c)| (k, Mat2::identity() * c))
        .chain(sh.terms().map(|(k, c)| (k, a * c)));
    Ok(TwistedLoop::from_coeffs_projected(terms, trunc))
}

pub fn make_loop(coeffs: &[(i32, Mat2)], trunc: usize) -> Result<TwistedLoop> {
    TwistedLoop::from_coeffs(coeffs, trunc)
}

pub fn mul(a: &TwistedLoop, b: &TwistedLoop) -> TwistedLoop {
    a.mul(b)
}

pub fn inverse(g: &TwistedLoop) -> Result<TwistedLoop> {
    g.inverse()
}

pub fn star(g: &TwistedLoop) -> TwistedLoop {
    g.star()
}

pub fn eval(g: &TwistedLoop, p: &CirclePoint) -> Mat2 {
    g.eval(p)
}

pub fn theta_derivative(g: &TwistedLoop) -> TwistedLoop {
    g.theta_derivative()
}

/// Series inverse of a loop with no negative degrees and invertible λ⁰ coefficient.
pub fn invert_plus(h: &TwistedLoop) -> Result<TwistedLoop> {
    invert_one_sided(h, 1)
}

/// Series inverse of a loop with no positive degrees and invertible λ⁰ coefficient.
pub fn invert_minus(h: &TwistedLoop) -> Result<TwistedLoop> {
    invert_one_sided(h, -1)
}

fn invert_one_sided(h: &TwistedLoop, dir: i32) -> Result<TwistedLoop> {
    let n = h.trunc() as i32;
    let h0 = h.coeff(0);
    let h0inv = h0.try_inverse().ok_or(Error::SingularLoop {
        min_det: h0.determinant().norm(),
    })?;
    let mut out = TwistedLoop::zero(h.trunc());
    *out.coeff_mut(0) = h0inv;
    for k in 1..=n {
        let mut acc = Mat2::zeros();
        for j in 1..=k {
            acc += h.coeff(dir * j) * out.coeff(dir * (k - j));
        }
        let mut m = -h0inv * acc;
        project_parity(k, &mut m);
        *out.coeff_mut(dir * k) = m;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn a_loop(k: i32) -> TwistedLoop {
        make_loop(&[(k, axis_a())], 4).unwrap()
    }

    #[test]
    fn make_loop_identity_and_parity() {
        let g = make_loop(&[(0, Mat2::identity())], 4).unwrap();
        assert_eq!(g, TwistedLoop::identity(4));
        assert!(a_loop(-1).is_twisted());
        assert_eq!(make_loop(&[(0, axis_a())], 4), Err(Error::TwistViolation { degree: 0 }));
    }

    #[test]
    fn a_squared_is_shift() {
        let g = a_loop(-1);
        let sq = g.mul(&g);
        assert_eq!(sq.coeff(-2), Mat2::identity());
        assert_eq!(sq.max_abs_diff(&make_loop(&[(-2, Mat2::identity())], 4).unwrap()), 0.0);
        assert_eq!(TwistedLoop::identity(4).mul(&g), g);
    }

    #[test]
    fn eval_simple() {
        let g = a_loop(-1);
        assert_eq!(g.eval(&CirclePoint::one()), axis_a());
        let v = g.eval(&CirclePoint::from_theta(PI / 2.0));
        assert!(mat_max_abs(&(v - axis_a() * (-I))) < 1e-15);
    }

    #[test]
    fn star_of_shifted_a() {
        assert_eq!(a_loop(-1).star(), a_loop(1));
        assert_eq!(TwistedLoop::identity(3).star(), TwistedLoop::identity(3));
    }

    #[test]
    fn theta_derivative_simple() {
        assert_eq!(TwistedLoop::identity(3).theta_derivative().max_abs(), 0.0);
        assert_eq!(a_loop(-1).theta_derivative(), a_loop(-1).scale(-I));
    }

    #[test]
    fn exp_axis_closed_form() {
        assert_eq!(exp_axis(&ScalarLaurent::from_terms(&[]), 8).unwrap(), TwistedLoop::identity(8));
        let g = exp_axis(&ScalarLaurent::from_terms(&[(-1, ONE)]), 24).unwrap();
        let v = g.eval(&CirclePoint::one());
        let (c, s) = (1f64.cosh(), 1f64.sinh());
        let want = Mat2::new(c.into(), s.into(), s.into(), c.into());
        assert!(mat_max_abs(&(v - want)) < 1e-14);
        assert!(exp_axis(&ScalarLaurent::from_terms(&[(2, ONE)]), 4).is_err());
    }

    #[test]
    fn inverse_of_exponential() {
        let x = ScalarLaurent::cylinder_exponent(C64::new(0.4, -0.3));
        let g = exp_axis(&x, 24).unwrap();
        let ginv = exp_axis(&x.scale(-ONE), 24).unwrap();
        assert!(g.inverse().unwrap().max_abs_diff(&ginv) < 1e-12);
        assert_eq!(TwistedLoop::identity(5).inverse().unwrap().max_abs_diff(&TwistedLoop::identity(5)), 0.0);
    }

    #[test]
    fn singular_loop_detected() {
        let g = TwistedLoop::constant(Mat2::new(ONE, ZERO, ZERO, ZERO), 4);
        assert!(matches!(g.inverse(), Err(Error::SingularLoop { .. })));
    }

    #[test]
    fn one_sided_inverses() {
        let h = make_loop(
            &[(0, Mat2::new(C64::new(2.0, 0.0), ZERO, ZERO, C64::new(0.5, 0.0))), (1, axis_a() * C64::new(0.3, 0.1))],
            12,
        )
        .unwrap();
        let hi = invert_plus(&h).unwrap();
        assert!(h.mul(&hi).max_abs_diff(&TwistedLoop::identity(12)) < 1e-12);
        let m = h.star();
        let mi = invert_minus(&m).unwrap();
        assert!(mi.mul(&m).max_abs_diff(&TwistedLoop::identity(12)) < 1e-12);
    }
}
