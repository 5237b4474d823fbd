//! Meromorphic potentials ξ = λ⁻¹ [[0, f], [E/f, 0]] dz and their pullbacks.
//!
//! f and E are stored as ratios of exponential polynomials Σ c zᵖ e^{kz}.
//! Rational data is the special case k = 0; the exponential terms are what
//! the log-coordinate chart w ↦ eʷ + z₀ produces, and keeping them in the
//! class makes that pullback exact.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::loops::{Mat2, C64, ONE, ZERO};

const MERGE_TOL: f64 = 1e-13;

/// One term c · zᵖ · e^{kz}.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Term {
    pub c: C64,
    pub p: u32,
    pub k: C64,
}

/// A finite sum of [`Term`]s in canonical order with like terms merged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpPoly {
    pub terms: Vec<Term>,
}

fn same_exp(a: C64, b: C64) -> bool {
    (a - b).norm() <= MERGE_TOL * (1.0 + a.norm())
}

impl ExpPoly {
    pub fn new(terms: Vec<Term>) -> Self {
        let mut out: Vec<Term> = Vec::new();
        for t in terms {
            if t.c == ZERO {
                continue;
            }
            match out.iter_mut().find(|o| o.p == t.p && same_exp(o.k, t.k)) {
                Some(o) => o.c += t.c,
                None => out.push(t),
            }
        }
        out.retain(|t| t.c != ZERO);
        out.sort_by(|a, b| {
            (a.k.re, a.k.im, a.p)
                .partial_cmp(&(b.k.re, b.k.im, b.p))
                .unwrap_or(std::cmp::Ordering::Equal)
        });
        Self { terms: out }
    }

    pub fn constant(c: C64) -> Self {
        Self::new(vec![Term { c, p: 0, k: ZERO }])
    }

    /// Polynomial from ascending coefficients.
    pub fn poly(coeffs: &[C64]) -> Self {
        Self::new(
            coeffs
                .iter()
                .enumerate()
                .map(|(p, &c)| Term { c, p: p as u32, k: ZERO })
                .collect(),
        )
    }

    pub fn monomial(c: C64, p: u32) -> Self {
        Self::new(vec![Term { c, p, k: ZERO }])
    }

    pub fn exponential(c: C64, k: C64) -> Self {
        Self::new(vec![Term { c, p: 0, k }])
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// True when every term has k = 0.
    pub fn is_polynomial(&self) -> bool {
        self.terms.iter().all(|t| t.k == ZERO)
    }

    /// Ascending coefficients, if this is a polynomial.
    pub fn poly_coeffs(&self) -> Option<Vec<C64>> {
        if !self.is_polynomial() {
            return None;
        }
        let deg = self.terms.iter().map(|t| t.p).max().unwrap_or(0) as usize;
        let mut c = vec![ZERO; deg + 1];
        for t in &self.terms {
            c[t.p as usize] += t.c;
        }
        Some(c)
    }

    pub fn eval(&self, z: C64) -> C64 {
        self.terms
            .iter()
            .map(|t| t.c * z.powu(t.p) * if t.k == ZERO { ONE } else { (t.k * z).exp() })
            .sum()
    }

    pub fn derivative(&self) -> Self {
        let mut out = Vec::new();
        for t in &self.terms {
            if t.p > 0 {
                out.push(Term { c: t.c * t.p as f64, p: t.p - 1, k: t.k });
            }
            if t.k != ZERO {
                out.push(Term { c: t.c * t.k, p: t.p, k: t.k });
            }
        }
        Self::new(out)
    }

    pub fn add(&self, o: &Self) -> Self {
        Self::new(self.terms.iter().chain(o.terms.iter()).copied().collect())
    }

    pub fn scale(&self, s: C64) -> Self {
        Self::new(self.terms.iter().map(|t| Term { c: t.c * s, ..*t }).collect())
    }

    pub fn mul(&self, o: &Self) -> Self {
        let mut out = Vec::with_capacity(self.terms.len() * o.terms.len());
        for a in &self.terms {
            for b in &o.terms {
                out.push(Term { c: a.c * b.c, p: a.p + b.p, k: a.k + b.k });
            }
        }
        Self::new(out)
    }

    pub fn powu(&self, n: u32) -> Self {
        (0..n).fold(Self::constant(ONE), |acc, _| acc.mul(self))
    }

    fn norm_inf(&self) -> f64 {
        self.terms.iter().fold(0.0, |a, t| a.max(t.c.norm()))
    }

    /// Largest coefficient difference after canonicalization.
    pub fn max_coeff_diff(&self, o: &Self) -> f64 {
        self.add(&o.scale(-ONE)).norm_inf()
    }

    /// Composition with z ↦ az + b.
    fn compose_affine(&self, a: C64, b: C64) -> Self {
        let mut acc = Self::new(vec![]);
        let lin = Self::poly(&[b, a]);
        for t in &self.terms {
            let e = if t.k == ZERO {
                Self::constant(t.c)
            } else {
                Self::exponential(t.c * (t.k * b).exp(), t.k * a)
            };
            acc = acc.add(&e.mul(&lin.powu(t.p)));
        }
        acc
    }

    /// Composition with a polynomial-valued map given by its powers.
    fn compose_with_powers(&self, what: &str, power: impl Fn(u32) -> Rational) -> Result<Rational> {
        if !self.is_polynomial() {
            return Err(Error::UnsupportedMap(format!(
                "{what} composed with an exponential term"
            )));
        }
        let mut acc = Rational::from_poly(Self::new(vec![]));
        for t in &self.terms {
            acc = acc.add(&power(t.p).scale(t.c));
        }
        Ok(acc)
    }

    /// Roots when this is a polynomial or a single monomial-exponential term.
    /// `None` means the zero set is not computable in closed form.
    pub fn roots(&self, polish_tol: f64) -> Option<Vec<C64>> {
        if self.terms.len() == 1 {
            return Some(vec![ZERO; self.terms[0].p as usize]);
        }
        let c = self.poly_coeffs()?;
        Some(poly_roots(&c, polish_tol))
    }
}

fn binom(n: u32, k: u32) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Roots of Σ cⱼ zʲ by companion-matrix eigenvalues and Newton polishing.
pub fn poly_roots(coeffs: &[C64], polish_tol: f64) -> Vec<C64> {
    let mut c: Vec<C64> = coeffs.to_vec();
    while c.last().is_some_and(|x| *x == ZERO) {
        c.pop();
    }
    let low_zeros = c.iter().take_while(|x| **x == ZERO).count();
    let c: Vec<C64> = c[low_zeros..].to_vec();
    let mut roots = vec![ZERO; low_zeros];
    let deg = c.len().saturating_sub(1);
    if deg == 0 {
        return roots;
    }
    let lead = c[deg];
    let mut comp = DMatrix::<C64>::zeros(deg, deg);
    for i in 1..deg {
        comp[(i, i - 1)] = ONE;
    }
    for i in 0..deg {
        comp[(i, deg - 1)] = -c[i] / lead;
    }
    let (_, t) = comp.schur().unpack();
    let eval = |z: C64| c.iter().rev().fold(ZERO, |acc, &a| acc * z + a);
    let deriv = |z: C64| {
        c.iter()
            .enumerate()
            .skip(1)
            .rev()
            .fold(ZERO, |acc, (j, &a)| acc * z + a * j as f64)
    };
    for i in 0..deg {
        let mut z = t[(i, i)];
        for _ in 0..20 {
            let v = eval(z);
            if v.norm() <= polish_tol * lead.norm() {
                break;
            }
            let d = deriv(z);
            if d == ZERO {
                break;
            }
            let step = v / d;
            z -= step;
            if step.norm() < 1e-16 * (1.0 + z.norm()) {
                break;
            }
        }
        roots.push(z);
    }
    roots
}

/// num / den with both parts exponential polynomials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rational {
    pub num: ExpPoly,
    pub den: ExpPoly,
}

impl Rational {
    pub fn from_poly(p: ExpPoly) -> Self {
        Self { num: p, den: ExpPoly::constant(ONE) }
    }

    pub fn constant(c: C64) -> Self {
        Self::from_poly(ExpPoly::constant(c))
    }

    pub fn eval(&self, z: C64) -> C64 {
        self.num.eval(z) / self.den.eval(z)
    }

    pub fn derivative_at(&self, z: C64) -> C64 {
        let (n, d) = (self.num.eval(z), self.den.eval(z));
        (self.num.derivative().eval(z) * d - n * self.den.derivative().eval(z)) / (d * d)
    }

    pub fn mul(&self, o: &Self) -> Self {
        Self { num: self.num.mul(&o.num), den: self.den.mul(&o.den) }.reduced()
    }

    pub fn div(&self, o: &Self) -> Self {
        Self { num: self.num.mul(&o.den), den: self.den.mul(&o.num) }.reduced()
    }

    pub fn add(&self, o: &Self) -> Self {
        if self.den == o.den {
            return Self { num: self.num.add(&o.num), den: self.den.clone() };
        }
        Self {
            num: self.num.mul(&o.den).add(&o.num.mul(&self.den)),
            den: self.den.mul(&o.den),
        }
        .reduced()
    }

    pub fn scale(&self, s: C64) -> Self {
        Self { num: self.num.scale(s), den: self.den.clone() }
    }

    /// Divides out a constant denominator.
    fn reduced(self) -> Self {
        if self.den.terms.len() == 1 && self.den.terms[0].p == 0 && self.den.terms[0].k == ZERO {
            let d = self.den.terms[0].c;
            return Self { num: self.num.scale(ONE / d), den: ExpPoly::constant(ONE) };
        }
        self
    }

    /// True when this is a polynomial (constant denominator).
    pub fn as_poly(&self) -> Option<&ExpPoly> {
        let r = self.den.terms.len() == 1
            && self.den.terms[0].p == 0
            && self.den.terms[0].k == ZERO
            && self.den.terms[0].c == ONE;
        r.then_some(&self.num)
    }

    /// Residual of num·o.den − o.num·den, zero when both describe the same function.
    pub fn cross_diff(&self, o: &Self) -> f64 {
        self.num.mul(&o.den).max_coeff_diff(&o.num.mul(&self.den))
    }

    pub fn is_zero(&self) -> bool {
        self.num.is_zero()
    }

    fn compose(&self, h: &HoloMap) -> Result<Self> {
        Ok(compose_exppoly(&self.num, h)?.div(&compose_exppoly(&self.den, h)?))
    }
}

fn compose_exppoly(p: &ExpPoly, h: &HoloMap) -> Result<Rational> {
    match *h {
        HoloMap::Affine { a, b } => Ok(Rational::from_poly(p.compose_affine(a, b))),
        HoloMap::Mobius { a, b, c, d } => {
            let deg = p.terms.iter().map(|t| t.p).max().unwrap_or(0);
            let num = ExpPoly::poly(&[b, a]);
            let den = ExpPoly::poly(&[d, c]);
            p.compose_with_powers("Mobius map", |q| Rational {
                num: num.powu(q).mul(&den.powu(deg - q)),
                den: den.powu(deg),
            })
        }
        HoloMap::ExpCover { a, b, z0 } => p.compose_with_powers("exponential covering", |q| {
            // (e^{aw+b} + z0)^q expanded binomially.
            let terms = (0..=q)
                .map(|j| Term {
                    c: z0.powu(q - j) * binom(q, j) * (b * j as f64).exp(),
                    p: 0,
                    k: a * j as f64,
                })
                .collect();
            Rational::from_poly(ExpPoly::new(terms))
        }),
    }
}

/// Holomorphic maps in the pullback class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum HoloMap {
    /// z ↦ az + b.
    Affine { a: C64, b: C64 },
    /// z ↦ (az + b)/(cz + d).
    Mobius { a: C64, b: C64, c: C64, d: C64 },
    /// w ↦ e^{aw + b} + z0.
    ExpCover { a: C64, b: C64, z0: C64 },
}

impl HoloMap {
    pub fn identity() -> Self {
        HoloMap::Affine { a: ONE, b: ZERO }
    }

    /// The covering w ↦ eʷ + z0 of the punctured plane.
    pub fn log_chart(z0: C64) -> Self {
        HoloMap::ExpCover { a: ONE, b: ZERO, z0 }
    }

    pub fn apply(&self, z: C64) -> C64 {
        match *self {
            HoloMap::Affine { a, b } => a * z + b,
            HoloMap::Mobius { a, b, c, d } => (a * z + b) / (c * z + d),
            HoloMap::ExpCover { a, b, z0 } => (a * z + b).exp() + z0,
        }
    }

    pub fn derivative(&self, z: C64) -> C64 {
        match *self {
            HoloMap::Affine { a, .. } => a,
            HoloMap::Mobius { a, b, c, d } => (a * d - b * c) / ((c * z + d) * (c * z + d)),
            HoloMap::ExpCover { a, b, .. } => a * (a * z + b).exp(),
        }
    }

    fn derivative_descriptor(&self) -> Rational {
        match *self {
            HoloMap::Affine { a, .. } => Rational::constant(a),
            HoloMap::Mobius { a, b, c, d } => Rational {
                num: ExpPoly::constant(a * d - b * c),
                den: ExpPoly::poly(&[d, c]).powu(2),
            },
            HoloMap::ExpCover { a, b, .. } => Rational::from_poly(ExpPoly::exponential(a * b.exp(), a)),
        }
    }

    fn as_mobius(&self) -> Option<(C64, C64, C64, C64)> {
        match *self {
            HoloMap::Affine { a, b } => Some((a, b, ZERO, ONE)),
            HoloMap::Mobius { a, b, c, d } => Some((a, b, c, d)),
            HoloMap::ExpCover { .. } => None,
        }
    }

    /// `self ∘ inner` (apply `inner` first), when it stays in the class.
    pub fn after(&self, inner: &HoloMap) -> Result<HoloMap> {
        use HoloMap::*;
        match (*self, *inner) {
            (Affine { a: a2, b: b2 }, Affine { a: a1, b: b1 }) => Ok(Affine { a: a2 * a1, b: a2 * b1 + b2 }),
            (ExpCover { a, b, z0 }, Affine { a: a1, b: b1 }) => Ok(ExpCover { a: a * a1, b: a * b1 + b, z0 }),
            (Affine { a: al, b: be }, ExpCover { a, b, z0 }) => Ok(ExpCover { a, b: b + al.ln(), z0: al * z0 + be }),
            (outer, inner) => match (outer.as_mobius(), inner.as_mobius()) {
                (Some((a2, b2, c2, d2)), Some((a1, b1, c1, d1))) => Ok(Mobius {
                    a: a2 * a1 + b2 * c1,
                    b: a2 * b1 + b2 * d1,
                    c: c2 * a1 + d2 * c1,
                    d: c2 * b1 + d2 * d1,
                }),
                _ => Err(Error::UnsupportedMap("composition leaves the map class".into())),
            },
        }
    }
}

/// Which domain an automorphism acts on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DomainKind {
    Plane,
    Disk,
}

/// An automorphism of the plane (affine) or the unit disk (Möbius).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DomainAutomorphism {
    pub map: HoloMap,
    pub domain: DomainKind,
}

impl DomainAutomorphism {
    pub fn affine(a: C64, b: C64) -> Result<Self> {
        if a == ZERO {
            return Err(Error::InvalidParameter("affine map needs a != 0".into()));
        }
        Ok(Self { map: HoloMap::Affine { a, b }, domain: DomainKind::Plane })
    }

    pub fn identity() -> Self {
        Self { map: HoloMap::identity(), domain: DomainKind::Plane }
    }

    pub fn translation(q: C64) -> Self {
        Self { map: HoloMap::Affine { a: ONE, b: q }, domain: DomainKind::Plane }
    }

    /// Rotation by `angle` about `center`.
    pub fn rotation(angle: f64, center: C64) -> Self {
        let a = C64::from_polar(1.0, angle);
        Self { map: HoloMap::Affine { a, b: center - a * center }, domain: DomainKind::Plane }
    }

    /// A disk automorphism; the matrix is rescaled to determinant 1.
    pub fn mobius(a: C64, b: C64, c: C64, d: C64) -> Result<Self> {
        let det = a * d - b * c;
        if det.norm() < 1e-14 {
            return Err(Error::InvalidParameter("Mobius matrix is singular".into()));
        }
        let s = det.sqrt().inv();
        let (a, b, c, d) = (a * s, b * s, c * s, d * s);
        // Disk automorphisms have the form [[α, β], [β̄, ᾱ]] up to a unimodular factor.
        let ok = ((a.norm_sqr() - c.norm_sqr()) - 1.0).abs() < 1e-9
            && ((d.norm_sqr() - b.norm_sqr()) - 1.0).abs() < 1e-9
            && (a.conj() * b - c.conj() * d).norm() < 1e-9;
        if !ok {
            return Err(Error::InvalidParameter("Mobius map does not preserve the unit disk".into()));
        }
        Ok(Self { map: HoloMap::Mobius { a, b, c, d }, domain: DomainKind::Disk })
    }

    pub fn apply(&self, z: C64) -> C64 {
        self.map.apply(z)
    }

    pub fn derivative(&self, z: C64) -> C64 {
        self.map.derivative(z)
    }

    /// `self ∘ inner`.
    pub fn after(&self, inner: &Self) -> Result<Self> {
        Ok(Self { map: self.map.after(&inner.map)?, domain: self.domain })
    }
}

/// ξ = λ⁻¹ [[0, f], [E/f, 0]] dz with f and E given by descriptors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeromorphicPotential {
    pub f: Rational,
    #[serde(rename = "E")]
    pub e: Rational,
    /// Points where f or E/f has a pole.
    pub poles: Vec<C64>,
    /// False when some zero set could not be computed in closed form.
    pub poles_complete: bool,
}

impl MeromorphicPotential {
    pub fn new(f: Rational, e: Rational) -> Result<Self> {
        Self::with_tolerance(f, e, 1e-10)
    }

    pub fn with_tolerance(f: Rational, e: Rational, root_tol: f64) -> Result<Self> {
        if f.is_zero() {
            return Err(Error::InvalidParameter("f must not vanish identically".into()));
        }
        if f.den.is_zero() || e.den.is_zero() {
            return Err(Error::InvalidParameter("zero denominator".into()));
        }
        let mut poles = Vec::new();
        let mut complete = true;
        // f = f.num/f.den; E/f = (E.num·f.den)/(E.den·f.num).
        for (num, den) in [
            (f.num.clone(), f.den.clone()),
            (e.num.mul(&f.den), e.den.mul(&f.num)),
        ] {
            match (num.roots(root_tol), den.roots(root_tol)) {
                (Some(nr), Some(dr)) => {
                    for p in uncancelled(&dr, &nr) {
                        if !poles.iter().any(|q: &C64| (q - p).norm() < 1e-6) {
                            poles.push(p);
                        }
                    }
                }
                _ => complete = false,
            }
        }
        poles.sort_by(|a, b| (a.re, a.im).partial_cmp(&(b.re, b.im)).unwrap());
        Ok(Self { f, e, poles, poles_complete: complete })
    }

    pub fn f_at(&self, z: C64) -> C64 {
        self.f.eval(z)
    }

    pub fn e_at(&self, z: C64) -> C64 {
        self.e.eval(z)
    }

    /// E/f at z; at a cancelled zero of f the limit is taken by l'Hôpital.
    pub fn e_over_f_at(&self, z: C64) -> C64 {
        let num = self.e.num.mul(&self.f.den);
        let den = self.e.den.mul(&self.f.num);
        ratio_limit(&num, &den, z)
    }

    /// M(z) with ξ = λ⁻¹ M(z) dz.
    pub fn matrix(&self, z: C64) -> Mat2 {
        Mat2::new(ZERO, self.f_at(z), self.e_over_f_at(z), ZERO)
    }

    /// dM/dz.
    pub fn matrix_derivative(&self, z: C64) -> Mat2 {
        let num = self.e.num.mul(&self.f.den);
        let den = self.e.den.mul(&self.f.num);
        let r = Rational { num: num.mul(&den.derivative()).scale(-ONE).add(&num.derivative().mul(&den)), den: den.mul(&den) };
        let dq = ratio_limit(&r.num, &r.den, z);
        Mat2::new(ZERO, self.f.derivative_at(z), dq, ZERO)
    }

    /// ξ evaluated at (z, λ).
    pub fn eval(&self, z: C64, lambda: C64) -> Mat2 {
        self.matrix(z) / lambda
    }

    /// Distance from z to the nearest known pole.
    pub fn pole_distance(&self, z: C64) -> f64 {
        self.poles.iter().map(|p| (p - z).norm()).fold(f64::INFINITY, f64::min)
    }

    /// Human-readable warnings about the descriptor.
    pub fn warnings(&self) -> Vec<String> {
        let mut w = Vec::new();
        if !self.poles_complete {
            w.push("pole set is incomplete; integration guards against blow-up only".into());
        }
        if let (Some(nr), Some(dr)) = (self.f.num.roots(1e-10), self.f.den.roots(1e-10)) {
            let odd = |r: &[C64]| clusters(r).iter().any(|(_, m)| m % 2 == 1);
            if odd(&nr) || odd(&dr) {
                w.push("f is not the square of a meromorphic function; the immersion may be branched".into());
            }
        }
        w
    }
}

fn ratio_limit(num: &ExpPoly, den: &ExpPoly, z: C64) -> C64 {
    let (mut n, mut d) = (num.clone(), den.clone());
    for _ in 0..8 {
        let dv = d.eval(z);
        if dv.norm() > 1e-14 * (1.0 + d.norm_inf()) {
            return n.eval(z) / dv;
        }
        n = n.derivative();
        d = d.derivative();
    }
    C64::new(f64::NAN, f64::NAN)
}

/// Groups nearby roots into (centre, multiplicity).
fn clusters(r: &[C64]) -> Vec<(C64, usize)> {
    let mut out: Vec<(C64, usize)> = Vec::new();
    for &z in r {
        match out.iter_mut().find(|(c, _)| (c - z).norm() < 1e-5) {
            Some((_, m)) => *m += 1,
            None => out.push((z, 1)),
        }
    }
    out
}

/// Roots of the denominator whose multiplicity exceeds that in the numerator.
fn uncancelled(den_roots: &[C64], num_roots: &[C64]) -> Vec<C64> {
    let nc = clusters(num_roots);
    clusters(den_roots)
        .into_iter()
        .filter(|(c, m)| {
            let mn = nc.iter().find(|(d, _)| (d - c).norm() < 1e-5).map(|x| x.1).unwrap_or(0);
            *m > mn
        })
        .map(|(c, _)| c)
        .collect()
}

/// The vacuum potential λ⁻¹A dz: f = E = 1.
pub fn cylinder_potential() -> MeromorphicPotential {
    MeromorphicPotential::new(Rational::constant(ONE), Rational::constant(ONE)).expect("valid")
}

/// f = 1, E = c zᵐ.
pub fn smyth_potential(m: u32, c: C64) -> Result<MeromorphicPotential> {
    if c == ZERO {
        return Err(Error::InvalidParameter("Smyth parameter c must be nonzero".into()));
    }
    MeromorphicPotential::new(Rational::constant(ONE), Rational::from_poly(ExpPoly::monomial(c, m)))
}

/// f = E = z − z0, so E/f ≡ 1 and f vanishes at z0.
pub fn branched_potential(z0: C64) -> Result<MeromorphicPotential> {
    if z0 == ZERO {
        return Err(Error::InvalidParameter("branch point z0 must be nonzero".into()));
    }
    let p = Rational::from_poly(ExpPoly::poly(&[-z0, ONE]));
    MeromorphicPotential::new(p.clone(), p)
}

/// f ↦ (f∘h)h′, E ↦ (E∘h)(h′)².
pub fn pullback(xi: &MeromorphicPotential, h: &HoloMap) -> Result<MeromorphicPotential> {
    let dh = h.derivative_descriptor();
    let f = xi.f.compose(h)?.mul(&dh);
    let e = xi.e.compose(h)?.mul(&dh).mul(&dh);
    MeromorphicPotential::new(f, e)
}

/// Result of [`check_e_automorphy`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AutomorphyCheck {
    pub holds: bool,
    pub residual: f64,
}

/// Checks (E∘g)(g′)² = E: coefficient-exact for affine maps, sampled for Möbius maps.
pub fn check_e_automorphy(xi: &MeromorphicPotential, g: &DomainAutomorphism) -> AutomorphyCheck {
    let tol = 1e-10;
    let residual = match g.map {
        HoloMap::Affine { .. } => {
            let dh = g.map.derivative_descriptor();
            match xi.e.compose(&g.map) {
                Ok(c) => c.mul(&dh).mul(&dh).cross_diff(&xi.e),
                Err(_) => f64::INFINITY,
            }
        }
        _ => halton_disk(64, 0.9)
            .into_iter()
            .map(|z| {
                let d = g.derivative(z);
                (xi.e_at(g.apply(z)) * d * d - xi.e_at(z)).norm()
            })
            .fold(0.0, f64::max),
    };
    let scale = xi.e.num.norm_inf().max(1.0);
    AutomorphyCheck { holds: residual <= tol * scale, residual }
}

/// Points of the (2, 3) Halton sequence mapped into the disk of radius `r`.
pub fn halton_disk(count: usize, r: f64) -> Vec<C64> {
    fn radical(mut i: usize, base: usize) -> f64 {
        let (mut f, mut out) = (1.0, 0.0);
        while i > 0 {
            f /= base as f64;
            out += f * (i % base) as f64;
            i /= base;
        }
        out
    }
    (1..=count)
        .map(|i| C64::from_polar(r * radical(i, 2).sqrt(), 2.0 * PI * radical(i, 3)))
        .collect()
}

/// Rotation symmetries predicted by the Hopf differential alone.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RotationClass {
    /// E is constant: every translation satisfies the transformation law.
    ConstantE,
    /// E = d(z − center)ᵐ: rotations by 2πk/order about center.
    Monomial { center: C64, m: u32, order: u32, d: C64 },
    /// E is not a shifted monomial.
    None,
}

pub fn classify_rotation_symmetries(xi: &MeromorphicPotential) -> RotationClass {
    let Some(c) = xi.e.as_poly().and_then(|p| p.poly_coeffs()) else {
        return RotationClass::None;
    };
    let m = c.len() - 1;
    if m == 0 {
        return RotationClass::ConstantE;
    }
    let d = c[m];
    let center = -c[m - 1] / (d * m as f64);
    let ok = (0..=m).all(|j| {
        let want = d * binom(m as u32, j as u32) * (-center).powu((m - j) as u32);
        (c[j] - want).norm() <= 1e-10 * d.norm().max(1.0) * (1.0 + center.norm()).powi(m as i32)
    });
    if ok {
        RotationClass::Monomial { center, m: m as u32, order: m as u32 + 2, d }
    } else {
        RotationClass::None
    }
}

/// Potential config as read from JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum PotentialConfig {
    Cylinder,
    Smyth { m: u32, c: [f64; 2] },
    Branched { z0: [f64; 2] },
    Custom {
        f_num: Vec<[f64; 2]>,
        f_den: Vec<[f64; 2]>,
        #[serde(rename = "E")]
        e: Vec<[f64; 2]>,
    },
}

fn cvec(v: &[[f64; 2]]) -> Vec<C64> {
    v.iter().map(|p| C64::new(p[0], p[1])).collect()
}

impl PotentialConfig {
    pub fn build(&self) -> Result<MeromorphicPotential> {
        match self {
            PotentialConfig::Cylinder => Ok(cylinder_potential()),
            PotentialConfig::Smyth { m, c } => smyth_potential(*m, C64::new(c[0], c[1])),
            PotentialConfig::Branched { z0 } => branched_potential(C64::new(z0[0], z0[1])),
            PotentialConfig::Custom { f_num, f_den, e } => MeromorphicPotential::new(
                Rational { num: ExpPoly::poly(&cvec(f_num)), den: ExpPoly::poly(&cvec(f_den)) },
                Rational::from_poly(ExpPoly::poly(&cvec(e))),
            ),
        }
    }
}
