//! Symmetry data of a frame field: χ(g, λ), k(g, z), the D-function and the
//! gauge criterion on potentials.
//!
//! For an automorphism g the extended frame satisfies F(g z) = χ F(z) k(g, z)
//! with k = ±exp(−(i/2)γσ₃), where γ = arg((f∘g)g′/f) is read off from the
//! λ⁻¹ part of the Maurer–Cartan form. Frames at g(z) are obtained by
//! integrating the ODE to the exact point, never by interpolating loops.

use nalgebra::{Matrix3, Vector3};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{hopf_e, hopf_of_jet, metric_u, Derivatives};
use crate::loops::{CirclePoint, Mat2, TwistedLoop, C64, ONE, ZERO};
use crate::pipeline::{
    dress, integrate_frame, split_frames, su2_to_r3, FrameField, GridDomain, ImmersionSample, PlanarGrid, PointFrame, Vec3,
};
use crate::potentials::{check_e_automorphy, cylinder_potential, halton_disk, AutomorphyCheck, DomainAutomorphism, MeromorphicPotential};
use crate::tolerances::Tolerances;

/// Number of probe nodes used for the z-independence test.
pub const PROBE_COUNT: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Symmetric,
    NotSymmetric,
    Inconclusive,
}

impl Verdict {
    /// From the worst residual-to-threshold ratio: a decade of margin either way is decisive.
    pub fn from_ratio(worst: f64) -> Self {
        if worst <= 0.1 {
            Verdict::Symmetric
        } else if worst > 10.0 || !worst.is_finite() {
            Verdict::NotSymmetric
        } else {
            Verdict::Inconclusive
        }
    }
}

/// A complex 2×2 matrix as [row][col][re, im].
pub type MatJson = [[[f64; 2]; 2]; 2];

pub fn mat_json(m: &Mat2) -> MatJson {
    let e = |r: usize, c: usize| [m[(r, c)].re, m[(r, c)].im];
    [[e(0, 0), e(0, 1)], [e(1, 0), e(1, 1)]]
}

/// Loop coefficients as [degree][row][col][re, im], degrees −N..N.
pub fn loop_json(g: &TwistedLoop) -> Vec<MatJson> {
    g.iter().map(|(_, m)| mat_json(m)).collect()
}

/// k(g, z) at one probe node.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KSample {
    pub z: [f64; 2],
    pub k: MatJson,
    /// Sign of the lift that matched F(g z) = χ F(z) k.
    pub sign: i8,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Thresholds {
    pub unitarity: f64,
    pub z_independence: f64,
    pub metric_law: f64,
    pub hopf_law: f64,
    pub gauge: f64,
}

impl From<&Tolerances> for Thresholds {
    fn from(t: &Tolerances) -> Self {
        Self {
            unitarity: t.chi_unitarity,
            z_independence: t.chi_z_independence,
            metric_law: t.metric_law,
            hopf_law: t.hopf_law,
            gauge: t.gauge,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SymmetryReport {
    pub automorphism: DomainAutomorphism,
    pub chi_trunc: usize,
    /// χ(g, λ) coefficients, degrees −N..N.
    pub chi: Vec<MatJson>,
    pub chi_at_one: MatJson,
    pub k_samples: Vec<KSample>,
    pub e_automorphy: AutomorphyCheck,
    pub residual_unitarity: f64,
    pub residual_z_independence: f64,
    pub residual_metric_law: f64,
    pub residual_hopf_law: f64,
    /// `None` when the E-automorphy precondition fails.
    pub residual_gauge: Option<f64>,
    pub thresholds: Thresholds,
    pub verdict: Verdict,
    #[serde(skip)]
    pub chi_loop: TwistedLoop,
}

/// Residual pair of the isometry laws on a sampled immersion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IsometryResiduals {
    /// sup |e^{u∘g}|g′|² e^{−u} − 1|.
    pub metric: f64,
    /// sup |(E∘g)(g′)² − E| / sup |E|.
    pub hopf: f64,
    pub nodes_used: usize,
}

/// Bilinear (plane) or polar-bilinear (disk) interpolation of a nodal field.
fn interpolate<T>(grid: &PlanarGrid, vals: &[T], ok: &[bool], w: C64) -> Option<T>
where
    T: Copy + std::ops::Mul<f64, Output = T> + std::ops::Add<Output = T>,
{
    let corners: [(usize, f64); 4] = match grid.domain {
        GridDomain::Plane { n, r } => {
            let h = grid.step();
            let (fx, fy) = ((w.re + r) / h, (w.im + r) / h);
            if fx < 0.0 || fy < 0.0 || fx > (n - 1) as f64 || fy > (n - 1) as f64 {
                return None;
            }
            let (i, j) = ((fx.floor() as usize).min(n - 2), (fy.floor() as usize).min(n - 2));
            let (s, t) = (fx - i as f64, fy - j as f64);
            let at = |a: usize, b: usize| (j + b) * n + i + a;
            [(at(0, 0), (1.0 - s) * (1.0 - t)), (at(1, 0), s * (1.0 - t)), (at(0, 1), (1.0 - s) * t), (at(1, 1), s * t)]
        }
        GridDomain::Disk { n_r, n_phi, radius } => {
            let dr = radius / (n_r - 1) as f64;
            let fr = w.norm() / dr;
            if fr > (n_r - 1) as f64 {
                return None;
            }
            let dphi = 2.0 * std::f64::consts::PI / n_phi as f64;
            let fp = w.arg().rem_euclid(2.0 * std::f64::consts::PI) / dphi;
            let ring = (fr.floor() as usize).min(n_r - 2);
            let k = fp.floor() as usize % n_phi;
            let (s, t) = (fr - ring as f64, fp - fp.floor());
            let node = |r: usize, kk: usize| if r == 0 { 0 } else { 1 + (r - 1) * n_phi + kk % n_phi };
            [
                (node(ring, k), (1.0 - s) * (1.0 - t)),
                (node(ring, k + 1), (1.0 - s) * t),
                (node(ring + 1, k), s * (1.0 - t)),
                (node(ring + 1, k + 1), s * t),
            ]
        }
    };
    let mut acc: Option<T> = None;
    for (idx, wt) in corners {
        if wt == 0.0 {
            continue;
        }
        if !ok[idx] {
            return None;
        }
        let term = vals[idx] * wt;
        acc = Some(match acc {
            Some(a) => a + term,
            None => term,
        });
    }
    acc.or_else(|| ok[corners[0].0].then(|| vals[corners[0].0] * 1.0))
}

/// Checks e^{u∘g}|g′|² = eᵘ and (E∘g)(g′)² = E on interior nodes by interpolation at g(z).
pub fn check_isometry_laws(s: &ImmersionSample, g: &DomainAutomorphism) -> Result<IsometryResiduals> {
    let tol = Tolerances::default();
    let m = metric_u(s, Derivatives::Frame, &tol)?;
    let e = hopf_e(s, Derivatives::Frame)?;
    let n = s.grid.len();
    let ok: Vec<bool> = (0..n).map(|i| m.u[i].is_finite() && e[i].re.is_finite() && !m.degenerate[i]).collect();
    let eu: Vec<f64> = m.u.iter().map(|u| u.exp()).collect();
    let emax = crate::geometry::finite_max(e.iter().map(|v| v.norm())).max(1e-300);
    let (mut metric, mut hopf) = (0.0f64, 0.0f64);
    let (mut used, mut considered, mut outside) = (0usize, 0usize, 0usize);
    for i in 0..n {
        if !ok[i] || !s.grid.is_interior(i) {
            continue;
        }
        considered += 1;
        let z = s.grid.nodes[i];
        let w = g.apply(z);
        let dg = g.derivative(z);
        if !s.grid.contains(w) {
            outside += 1;
            continue;
        }
        let (Some(euw), Some(ew)) = (interpolate(&s.grid, &eu, &ok, w), interpolate(&s.grid, &e, &ok, w)) else {
            continue;
        };
        used += 1;
        metric = metric.max((euw * dg.norm_sqr() / eu[i] - 1.0).abs());
        hopf = hopf.max((ew * dg * dg - e[i]).norm() / emax);
    }
    if considered == 0 || outside as f64 > 0.2 * considered as f64 {
        return Err(Error::OutOfDomain { fraction: if considered == 0 { 1.0 } else { outside as f64 / considered as f64 } });
    }
    Ok(IsometryResiduals { metric, hopf, nodes_used: used })
}

/// Deterministic, well-spread interior nodes.
pub fn probe_nodes(ff: &FrameField, count: usize) -> Vec<usize> {
    let grid = &ff.grid;
    let extent = match grid.domain {
        GridDomain::Plane { r, .. } => r,
        GridDomain::Disk { radius, .. } => radius,
    };
    let mut out: Vec<usize> = Vec::new();
    let usable = |i: usize| grid.is_interior(i) && !ff.singular_flags.get(i).copied().unwrap_or(false);
    for p in halton_disk(4 * count, 0.85 * extent) {
        if out.len() == count {
            break;
        }
        let best = (0..grid.len())
            .filter(|&i| usable(i))
            .min_by(|&a, &b| (grid.nodes[a] - p).norm().total_cmp(&(grid.nodes[b] - p).norm()));
        if let Some(b) = best {
            if !out.contains(&b) {
                out.push(b);
            }
        }
    }
    out
}

/// Diagonal unitary exp(−(i/2)γσ₃).
fn k_matrix(gamma: f64) -> Mat2 {
    Mat2::new(C64::from_polar(1.0, -0.5 * gamma), ZERO, ZERO, C64::from_polar(1.0, 0.5 * gamma))
}

/// γ(g, z) = arg((f∘g)(z)·g′(z)/f(z)) with f realized by g₋, folded so γ/2 ∈ (−π/2, π/2].
fn gamma(at_z: &PointFrame, at_gz: &PointFrame, dg: C64) -> f64 {
    let q = at_gz.f_eff * dg / at_z.f_eff;
    let pi = std::f64::consts::PI;
    let mut g = q.arg();
    if g <= -pi {
        g += 2.0 * pi;
    }
    g
}

fn unitary_frame(p: &PointFrame) -> Option<TwistedLoop> {
    p.frame().cloned()
}

struct Probe {
    z: C64,
    here: PointFrame,
    there: PointFrame,
    dg: C64,
}

fn probe(ff: &FrameField, g: &DomainAutomorphism, z: C64) -> Result<Probe> {
    let here = ff.source.point_frame(z)?;
    let there = ff.source.point_frame(g.apply(z))?;
    Ok(Probe { z, here, there, dg: g.derivative(z) })
}

/// Extracts χ(g, λ) = F(g(0)) k(g, 0)⁻¹ F(0)⁻¹ and checks F(g z) = χ F(z) k(g, z) at probe nodes.
pub fn extract_chi(ff: &FrameField, g: &DomainAutomorphism) -> SymmetryReport {
    extract_chi_with(ff, g, &ff.source.tol)
}

pub fn extract_chi_with(ff: &FrameField, g: &DomainAutomorphism, tol: &Tolerances) -> SymmetryReport {
    let xi = &ff.source.potential;
    let trunc = ff.source.trunc();
    let e_automorphy = check_e_automorphy(xi, g);
    let thresholds = Thresholds::from(tol);
    let base = probe(ff, g, ZERO);
    let failed = |chi: TwistedLoop| SymmetryReport {
        automorphism: *g,
        chi_trunc: trunc,
        chi: loop_json(&chi),
        chi_at_one: mat_json(&chi.eval(&CirclePoint::one())),
        k_samples: Vec::new(),
        e_automorphy,
        residual_unitarity: f64::INFINITY,
        residual_z_independence: f64::INFINITY,
        residual_metric_law: f64::INFINITY,
        residual_hopf_law: f64::INFINITY,
        residual_gauge: None,
        thresholds,
        verdict: Verdict::NotSymmetric,
        chi_loop: chi,
    };
    let Ok(base) = base else {
        return failed(TwistedLoop::identity(trunc));
    };
    let (Some(f0), Some(fg0)) = (unitary_frame(&base.here), unitary_frame(&base.there)) else {
        return failed(TwistedLoop::identity(trunc));
    };
    let k0 = k_matrix(gamma(&base.here, &base.there, base.dg));
    let chi = fg0.sandwich(&Mat2::identity(), &k0.adjoint()).mul(&f0.star());
    let residual_unitarity = chi.star().mul(&chi).max_abs_diff(&TwistedLoop::identity(trunc));

    let probes: Vec<Result<Probe>> = probe_nodes(ff, PROBE_COUNT)
        .into_par_iter()
        .map(|i| probe(ff, g, ff.grid.nodes[i]))
        .collect();
    let one = CirclePoint::one();
    let mut k_samples = Vec::new();
    let (mut rz, mut rm, mut rh) = (0.0f64, 0.0f64, 0.0f64);
    let mut any = false;
    let mut emax = 0.0f64;
    let mut hopf_terms = Vec::new();
    for p in probes.into_iter().flatten() {
        let (Some(fz), Some(fgz)) = (unitary_frame(&p.here), unitary_frame(&p.there)) else {
            continue;
        };
        if p.here.f_eff.norm() < 1e-12 || p.there.f_eff.norm() < 1e-12 {
            continue;
        }
        any = true;
        let k = k_matrix(gamma(&p.here, &p.there, p.dg));
        let pred = chi.mul(&fz).sandwich(&Mat2::identity(), &k);
        let plus = fgz.max_abs_diff(&pred);
        let minus = fgz.max_abs_diff(&pred.scale(-ONE));
        let sign = if plus <= minus { 1 } else { -1 };
        rz = rz.max(plus.min(minus));
        k_samples.push(KSample { z: [p.z.re, p.z.im], k: mat_json(&(k * C64::new(sign as f64, 0.0))), sign });
        if let (Some(a), Some(b)) = (p.here.sample(&one), p.there.sample(&one)) {
            let eu = |j: &crate::pipeline::Jet| crate::pipeline::dot(&j.dx, &j.dx);
            rm = rm.max((eu(&b.jet) * p.dg.norm_sqr() / eu(&a.jet) - 1.0).abs());
            let (ea, eb) = (hopf_of_jet(&a.jet), hopf_of_jet(&b.jet));
            emax = emax.max(ea.norm());
            hopf_terms.push((eb * p.dg * p.dg - ea).norm());
        }
    }
    if !any {
        return failed(chi);
    }
    rh = hopf_terms.iter().fold(rh, |a, &t| a.max(t / emax.max(1e-300)));
    let residual_gauge = check_gauge_condition_with(ff, xi, g, tol).ok();
    let mut worst = [
        residual_unitarity / thresholds.unitarity,
        rz / thresholds.z_independence,
        rm / thresholds.metric_law,
        rh / thresholds.hopf_law,
    ]
    .into_iter()
    .fold(0.0f64, |a, b| if b.is_nan() { f64::INFINITY } else { a.max(b) });
    if let Some(r) = residual_gauge {
        worst = worst.max(r / thresholds.gauge);
    }
    let mut verdict = Verdict::from_ratio(worst);
    if !e_automorphy.holds {
        verdict = Verdict::NotSymmetric;
    }
    SymmetryReport {
        automorphism: *g,
        chi_trunc: trunc,
        chi: loop_json(&chi),
        chi_at_one: mat_json(&chi.eval(&one)),
        k_samples,
        e_automorphy,
        residual_unitarity,
        residual_z_independence: rz,
        residual_metric_law: rm,
        residual_hopf_law: rh,
        residual_gauge,
        thresholds,
        verdict,
        chi_loop: chi,
    }
}

/// ε and residual of χ(g₂∘g₁) = ε χ(g₂) χ(g₁).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Homomorphism {
    pub epsilon: i8,
    pub residual: f64,
}

pub fn check_projective_homomorphism(ff: &FrameField, g1: &DomainAutomorphism, g2: &DomainAutomorphism) -> Result<Homomorphism> {
    let g21 = g2.after(g1)?;
    let c1 = extract_chi(ff, g1).chi_loop;
    let c2 = extract_chi(ff, g2).chi_loop;
    let c21 = extract_chi(ff, &g21).chi_loop;
    let prod = c2.mul(&c1);
    let plus = c21.max_abs_diff(&prod);
    let minus = c21.max_abs_diff(&prod.scale(-ONE));
    Ok(if plus <= minus { Homomorphism { epsilon: 1, residual: plus } } else { Homomorphism { epsilon: -1, residual: minus } })
}

/// D = log ((star(g₋)g₋)₊ at λ⁰)₁₁ per node.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DFunction {
    pub values: Vec<f64>,
}

pub fn d_function(ff: &FrameField) -> DFunction {
    let split;
    let ff = if ff.is_split() {
        ff
    } else {
        split = split_frames(ff);
        &split
    };
    DFunction { values: (0..ff.grid.len()).map(|i| ff.point(i).and_then(|p| p.d_value()).unwrap_or(f64::NAN)).collect() }
}

/// sup | |f̂/f| − exp(D − D̂) | over probe nodes, with ĝ₋ = g₋∘g and f̂ = (f∘g)g′.
pub fn check_gauge_condition(ff: &FrameField, xi: &MeromorphicPotential, g: &DomainAutomorphism) -> Result<f64> {
    check_gauge_condition_with(ff, xi, g, &ff.source.tol)
}

pub fn check_gauge_condition_with(ff: &FrameField, xi: &MeromorphicPotential, g: &DomainAutomorphism, _tol: &Tolerances) -> Result<f64> {
    let auto = check_e_automorphy(xi, g);
    if !auto.holds {
        return Err(Error::PreconditionFailed(format!("(E∘g)(g′)² ≠ E, residual {:.3e}", auto.residual)));
    }
    let mut zs: Vec<C64> = vec![ZERO];
    zs.extend(probe_nodes(ff, PROBE_COUNT).into_iter().map(|i| ff.grid.nodes[i]));
    let res: Vec<Option<f64>> = zs
        .into_par_iter()
        .map(|z| {
            let p = probe(ff, g, z).ok()?;
            let (d, dh) = (p.here.d_value()?, p.there.d_value()?);
            let fz = p.here.f_eff;
            if fz.norm() < 1e-12 {
                return None;
            }
            Some(((p.there.f_eff * p.dg).norm() / fz.norm() - (d - dh).exp()).abs())
        })
        .collect();
    let vals: Vec<f64> = res.into_iter().flatten().collect();
    if vals.is_empty() {
        return Err(Error::AllNodesSingular);
    }
    Ok(vals.into_iter().fold(0.0, f64::max))
}

/// Verdict of the gauge criterion alone.
pub fn gauge_verdict(ff: &FrameField, xi: &MeromorphicPotential, g: &DomainAutomorphism) -> Verdict {
    match check_gauge_condition(ff, xi, g) {
        Ok(r) => Verdict::from_ratio(r / ff.source.tol.gauge),
        Err(_) => Verdict::NotSymmetric,
    }
}

/// Ω = diag(c^{−1/4}, c^{1/4}) with the principal branch; dressing the cylinder by Ω gives Smyth m = 0.
pub fn omega_loop(c: C64, trunc: usize) -> Result<TwistedLoop> {
    if c == ZERO {
        return Err(Error::InvalidParameter("omega parameter must be nonzero".into()));
    }
    let r = c.powf(0.25);
    Ok(TwistedLoop::constant(Mat2::new(r.inv(), ZERO, ZERO, r), trunc))
}

/// Dresses the standard cylinder by h₊ and tests translation by q.
pub fn probe_cylinder_dressing(h_plus: &TwistedLoop, q: C64, grid: &PlanarGrid) -> Result<SymmetryReport> {
    if q == ZERO {
        return Err(Error::InvalidParameter("translation q must be nonzero".into()));
    }
    let ff = split_frames(&integrate_frame(&cylinder_potential(), grid, &TwistedLoop::identity(h_plus.trunc()))?);
    let dressed = dress(h_plus, &ff)?;
    Ok(extract_chi(&dressed, &DomainAutomorphism::translation(q)))
}

/// Rigid motion x ↦ Rx + t realized by χ at λ: J(Rx + t) = Ad χ(J x) + ∂_θχ χ⁻¹.
pub fn chi_motion(chi: &TwistedLoop, p: &CirclePoint) -> (Matrix3<f64>, Vector3<f64>) {
    let c = chi.eval(p);
    let ch = c.adjoint();
    let t = su2_to_r3(&(chi.theta_derivative().eval(p) * ch));
    let mut r = Matrix3::zeros();
    for j in 0..3 {
        let mut e = [0.0; 3];
        e[j] = 1.0;
        let col = su2_to_r3(&(c * crate::pipeline::r3_to_su2(&e) * ch));
        for i in 0..3 {
            r[(i, j)] = col[i];
        }
    }
    (r, Vector3::new(t[0], t[1], t[2]))
}

/// Best rigid motion (R, t) minimizing Σ|R aᵢ + t − bᵢ|² (Kabsch).
pub fn kabsch(a: &[Vec3], b: &[Vec3]) -> (Matrix3<f64>, Vector3<f64>) {
    let va: Vec<Vector3<f64>> = a.iter().map(|p| Vector3::from(*p)).collect();
    let vb: Vec<Vector3<f64>> = b.iter().map(|p| Vector3::from(*p)).collect();
    let n = va.len() as f64;
    let ca = va.iter().sum::<Vector3<f64>>() / n;
    let cb = vb.iter().sum::<Vector3<f64>>() / n;
    let mut h = Matrix3::zeros();
    for (x, y) in va.iter().zip(&vb) {
        h += (x - ca) * (y - cb).transpose();
    }
    let svd = h.svd(true, true);
    let (u, vt) = (svd.u.unwrap(), svd.v_t.unwrap());
    let d = (vt.transpose() * u.transpose()).determinant().signum();
    let r = vt.transpose() * Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, d)) * u.transpose();
    (r, cb - r * ca)
}

/// Angle of a rotation about e₃ (assumes the axis is e₃).
pub fn rotation_angle_about_e3(r: &Matrix3<f64>) -> f64 {
    r[(1, 0)].atan2(r[(0, 0)])
}
