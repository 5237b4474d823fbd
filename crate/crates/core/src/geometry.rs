//! Fundamental forms, curvature and structure equations of a sampled immersion.
//!
//! Derivatives of Ψ come either from the exact frame jets carried by a sample
//! or from second-order central differences on a plane grid. Laplacians of u
//! always use the five-point stencil (polar stencil on disk grids).

use serde::Serialize;

use crate::error::{Error, Result};
use crate::loops::C64;
use crate::pipeline::{cross, dot, normalize, FrameField, GridDomain, ImmersionSample, Jet, PlanarGrid, Vec3};
use crate::potentials::MeromorphicPotential;
use crate::tolerances::Tolerances;

/// Mean curvature of every DPW surface.
pub const MEAN_CURVATURE: f64 = -0.5;

/// Ratio between the Hopf coefficient of the immersion at λ = 1 and the E
/// descriptor of the potential, under Sym's formula with the factor ½.
pub const HOPF_SCALE: f64 = 4.0;

/// Where first and second derivatives of Ψ come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Derivatives {
    /// Exact jets from the frame; falls back to differences when absent.
    Frame,
    FiniteDifference,
}

fn sub(a: &Vec3, b: &Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn lin(a: &Vec3, s: f64, b: &Vec3, t: f64) -> Vec3 {
    [s * a[0] + t * b[0], s * a[1] + t * b[1], s * a[2] + t * b[2]]
}

fn plane_dims(grid: &PlanarGrid) -> Result<(usize, f64)> {
    match grid.domain {
        GridDomain::Plane { n, .. } => Ok((n, grid.step())),
        GridDomain::Disk { .. } => Err(Error::InvalidGrid("finite differences of Ψ need a plane grid".into())),
    }
}

/// First derivatives at every valid node: central inside, one-sided second order on the boundary.
pub fn fd_first(s: &ImmersionSample) -> Result<Vec<Option<(Vec3, Vec3)>>> {
    let (n, h) = plane_dims(&s.grid)?;
    let p = &s.points;
    let ok = |i: usize| s.valid[i];
    let d1 = |idx: &dyn Fn(usize) -> usize, k: usize| -> Option<Vec3> {
        let v = if k == 0 {
            [idx(0), idx(1), idx(2)]
        } else if k == n - 1 {
            [idx(n - 1), idx(n - 2), idx(n - 3)]
        } else {
            [idx(k - 1), idx(k), idx(k + 1)]
        };
        if !v.iter().all(|&i| ok(i)) {
            return None;
        }
        let (a, b, c) = (&p[v[0]], &p[v[1]], &p[v[2]]);
        Some(if k == 0 || k == n - 1 {
            let sign = if k == 0 { 1.0 } else { -1.0 };
            let t = lin(&lin(a, -3.0, b, 4.0), 1.0, c, -1.0);
            lin(&t, sign / (2.0 * h), &t, 0.0)
        } else {
            lin(&sub(c, a), 1.0 / (2.0 * h), c, 0.0)
        })
    };
    Ok((0..s.grid.len())
        .map(|idx| {
            if !ok(idx) {
                return None;
            }
            let (i, j) = (idx % n, idx / n);
            let px = d1(&|k| j * n + k, i)?;
            let py = d1(&|k| k * n + i, j)?;
            Some((px, py))
        })
        .collect())
}

/// Central-difference jets on interior plane-grid nodes.
pub fn fd_jets(s: &ImmersionSample) -> Result<Vec<Option<Jet>>> {
    let (n, h) = plane_dims(&s.grid)?;
    let p = &s.points;
    Ok((0..s.grid.len())
        .map(|idx| {
            if !s.grid.is_interior(idx) {
                return None;
            }
            let (i, j) = (idx % n, idx / n);
            let at = |di: isize, dj: isize| (j as isize + dj) as usize * n + (i as isize + di) as usize;
            let st = [at(0, 0), at(1, 0), at(-1, 0), at(0, 1), at(0, -1), at(1, 1), at(-1, -1), at(1, -1), at(-1, 1)];
            if !st.iter().all(|&k| s.valid[k]) {
                return None;
            }
            let c = &p[st[0]];
            let h2 = h * h;
            let second = |a: &Vec3, b: &Vec3| {
                let t = lin(&lin(a, 1.0, b, 1.0), 1.0, c, -2.0);
                lin(&t, 1.0 / h2, &t, 0.0)
            };
            let dxy = {
                let t = lin(&lin(&p[st[5]], 1.0, &p[st[6]], 1.0), 1.0, &lin(&p[st[7]], 1.0, &p[st[8]], 1.0), -1.0);
                lin(&t, 1.0 / (4.0 * h2), &t, 0.0)
            };
            Some(Jet {
                dx: lin(&sub(&p[st[1]], &p[st[2]]), 1.0 / (2.0 * h), c, 0.0),
                dy: lin(&sub(&p[st[3]], &p[st[4]]), 1.0 / (2.0 * h), c, 0.0),
                dxx: second(&p[st[1]], &p[st[2]]),
                dxy,
                dyy: second(&p[st[3]], &p[st[4]]),
            })
        })
        .collect())
}

/// Jets on interior, non-flagged nodes by the requested route.
pub fn jets(s: &ImmersionSample, route: Derivatives) -> Result<Vec<Option<Jet>>> {
    match (route, &s.jets) {
        (Derivatives::Frame, Some(j)) => Ok(j
            .iter()
            .enumerate()
            .map(|(i, jet)| (s.valid[i] && s.grid.is_interior(i)).then_some(*jet))
            .collect()),
        _ => fd_jets(s),
    }
}

/// Five-point (or polar) Laplacian of a nodal field; NaN off the interior.
pub fn laplacian(grid: &PlanarGrid, v: &[f64]) -> Vec<f64> {
    let mut out = vec![f64::NAN; grid.len()];
    match grid.domain {
        GridDomain::Plane { n, .. } => {
            let h2 = grid.step() * grid.step();
            for (idx, o) in out.iter_mut().enumerate() {
                if grid.is_interior(idx) {
                    *o = (v[idx + 1] + v[idx - 1] + v[idx + n] + v[idx - n] - 4.0 * v[idx]) / h2;
                }
            }
        }
        GridDomain::Disk { n_r, n_phi, .. } => {
            let dr = grid.step();
            let dphi = 2.0 * std::f64::consts::PI / n_phi as f64;
            let ring1 = |k: usize| v[1 + k];
            if n_r > 2 {
                let mean = (0..n_phi).map(ring1).sum::<f64>() / n_phi as f64;
                out[0] = 4.0 * (mean - v[0]) / (dr * dr);
            }
            for (idx, o) in out.iter_mut().enumerate().skip(1) {
                if !grid.is_interior(idx) {
                    continue;
                }
                let ring = (idx - 1) / n_phi + 1;
                let k = (idx - 1) % n_phi;
                let node = |r: usize, kk: usize| if r == 0 { 0 } else { 1 + (r - 1) * n_phi + kk % n_phi };
                let r = ring as f64 * dr;
                let (up, down) = (v[node(ring + 1, k)], v[node(ring - 1, k)]);
                let (left, right) = (v[node(ring, k + n_phi - 1)], v[node(ring, k + 1)]);
                let urr = (up - 2.0 * v[idx] + down) / (dr * dr);
                let ur = (up - down) / (2.0 * dr);
                let upp = (left - 2.0 * v[idx] + right) / (dphi * dphi);
                *o = urr + ur / r + upp / (r * r);
            }
        }
    }
    out
}

/// u together with conformality residuals and branch-point flags.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricField {
    pub u: Vec<f64>,
    /// max(|⟨Ψ_x, Ψ_y⟩|, ||Ψ_x|² − |Ψ_y|²|) / e^u.
    pub conformality: Vec<f64>,
    /// DegenerateMetric: |Ψ_z|² below the threshold relative to the grid median.
    pub degenerate: Vec<bool>,
}

/// u = log(2|Ψ_z|²) with |Ψ_z|² = ⟨Ψ_z, Ψ_z̄⟩ = (|Ψ_x|² + |Ψ_y|²)/4.
pub fn metric_u(s: &ImmersionSample, route: Derivatives, tol: &Tolerances) -> Result<MetricField> {
    let first: Vec<Option<(Vec3, Vec3)>> = match (route, &s.jets) {
        (Derivatives::Frame, Some(j)) => j.iter().zip(&s.valid).map(|(j, &v)| v.then_some((j.dx, j.dy))).collect(),
        // Central differences only, so Laplacians of u never see one-sided values.
        _ => fd_first(s)?
            .into_iter()
            .enumerate()
            .map(|(i, o)| if s.grid.is_interior(i) { o } else { None })
            .collect(),
    };
    let psi_z2: Vec<f64> = first
        .iter()
        .map(|o| o.map(|(a, b)| 0.25 * (dot(&a, &a) + dot(&b, &b))).unwrap_or(f64::NAN))
        .collect();
    let mut finite: Vec<f64> = psi_z2.iter().copied().filter(|v| v.is_finite()).collect();
    finite.sort_by(f64::total_cmp);
    let median = finite.get(finite.len() / 2).copied().unwrap_or(f64::NAN);
    let degenerate = psi_z2.iter().map(|&v| v.is_finite() && v < tol.degenerate_metric * median).collect();
    let u = psi_z2.iter().map(|&v| (2.0 * v).ln()).collect();
    let conformality = first
        .iter()
        .zip(&psi_z2)
        .map(|(o, &pz)| {
            o.map(|(a, b)| dot(&a, &b).abs().max((dot(&a, &a) - dot(&b, &b)).abs()) / (2.0 * pz))
                .unwrap_or(f64::NAN)
        })
        .collect();
    Ok(MetricField { u, conformality, degenerate })
}

/// N = Ψ_x × Ψ_y / |Ψ_x × Ψ_y|.
pub fn normal(j: &Jet) -> Vec3 {
    normalize(&cross(&j.dx, &j.dy))
}

/// E = ⟨Ψ_zz, N⟩ with Ψ_zz = (Ψ_xx − Ψ_yy − 2iΨ_xy)/4.
pub fn hopf_of_jet(j: &Jet) -> C64 {
    let n = normal(j);
    C64::new(dot(&j.dxx, &n) - dot(&j.dyy, &n), -2.0 * dot(&j.dxy, &n)) * 0.25
}

/// H = 2e^{−u}⟨Ψ_zz̄, N⟩ with Ψ_zz̄ = (Ψ_xx + Ψ_yy)/4.
pub fn mean_curvature_of_jet(j: &Jet) -> f64 {
    let n = normal(j);
    let eu = 0.5 * (dot(&j.dx, &j.dx) + dot(&j.dy, &j.dy));
    0.5 * (dot(&j.dxx, &n) + dot(&j.dyy, &n)) / eu
}

pub fn hopf_e(s: &ImmersionSample, route: Derivatives) -> Result<Vec<C64>> {
    Ok(jets(s, route)?
        .iter()
        .map(|o| o.map(|j| hopf_of_jet(&j)).unwrap_or(C64::new(f64::NAN, f64::NAN)))
        .collect())
}

pub fn mean_curvature(s: &ImmersionSample, route: Derivatives) -> Result<Vec<f64>> {
    Ok(jets(s, route)?.iter().map(|o| o.map(|j| mean_curvature_of_jet(&j)).unwrap_or(f64::NAN)).collect())
}

/// K = H² − 4|E|²e^{−2u}.
pub fn gauss_curvature(u: &[f64], e: &[C64], h: &[f64]) -> Vec<f64> {
    u.iter()
        .zip(e)
        .zip(h)
        .map(|((&u, e), &h)| h * h - 4.0 * e.norm_sqr() * (-2.0 * u).exp())
        .collect()
}

/// |u_zz̄ + (H²/2)eᵘ − 2|E|²e^{−u}| with u_zz̄ = Δu/4, for any nodal u and |E|.
pub fn gauss_codazzi_field(grid: &PlanarGrid, u: &[f64], e_abs: &[f64], h: f64) -> Vec<f64> {
    laplacian(grid, u)
        .iter()
        .zip(u)
        .zip(e_abs)
        .map(|((&lap, &u), &e)| (0.25 * lap + 0.5 * h * h * u.exp() - 2.0 * e * e * (-u).exp()).abs())
        .collect()
}

/// Structure-equation residual with H = −½ and |E| taken from the descriptor.
pub fn gauss_codazzi_residual(s: &ImmersionSample, xi: &MeromorphicPotential, route: Derivatives, tol: &Tolerances) -> Result<Vec<f64>> {
    let m = metric_u(s, route, tol)?;
    let e_abs: Vec<f64> = s.grid.nodes.iter().map(|&z| HOPF_SCALE * xi.e_at(z).norm()).collect();
    // Branch points have u = −∞; keep them out of neighbouring stencils.
    let u: Vec<f64> = m.u.iter().zip(&m.degenerate).map(|(&u, &d)| if d { f64::NAN } else { u }).collect();
    let mut r = gauss_codazzi_field(&s.grid, &u, &e_abs, MEAN_CURVATURE);
    for (i, v) in r.iter_mut().enumerate() {
        if m.degenerate[i] {
            *v = f64::NAN;
        }
    }
    Ok(r)
}

/// II = ½ [[E+Ē+Heᵘ, i(E−Ē)], [i(E−Ē), −(E+Ē)+Heᵘ]] in the coordinates x, y.
pub fn second_fundamental(u: &[f64], e: &[C64], h: &[f64]) -> Vec<[[f64; 2]; 2]> {
    u.iter()
        .zip(e)
        .zip(h)
        .map(|((&u, e), &h)| {
            let heu = h * u.exp();
            let off = -e.im;
            [[0.5 * (2.0 * e.re + heu), off], [off, 0.5 * (-2.0 * e.re + heu)]]
        })
        .collect()
}

/// |w₀²f − ¼e^{u/2}| per node, with f the coefficient realized by g₋.
pub fn metric_consistency(ff: &FrameField, u: &[f64]) -> Vec<f64> {
    (0..ff.grid.len())
        .map(|i| match ff.point(i) {
            Some(p) if !p.is_singular() => {
                let w0 = p.split.as_ref().map(|s| s.w0()).unwrap_or(f64::NAN);
                ((p.f_eff * w0 * w0).norm() - 0.25 * (0.5 * u[i]).exp()).abs()
            }
            _ => f64::NAN,
        })
        .collect()
}

/// Max of the finite entries; NaN-only input gives 0.
pub fn finite_max(v: impl IntoIterator<Item = f64>) -> f64 {
    v.into_iter().filter(|x| x.is_finite()).fold(0.0, f64::max)
}

/// Per-node diagnostics of one immersion, with grid metadata.
#[derive(Debug, Clone, Serialize)]
pub struct GeometryReport {
    pub domain: GridDomain,
    pub theta: f64,
    pub derivatives: Derivatives,
    pub nodes: Vec<[f64; 2]>,
    pub u: Vec<f64>,
    #[serde(rename = "E")]
    pub e: Vec<[f64; 2]>,
    #[serde(rename = "H")]
    pub h: Vec<f64>,
    #[serde(rename = "K")]
    pub k: Vec<f64>,
    pub gauss_codazzi_residual: Vec<f64>,
    pub second_fundamental: Vec<[[f64; 2]; 2]>,
    pub conformality: Vec<f64>,
    pub degenerate: Vec<bool>,
    pub summary: GeometrySummary,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GeometrySummary {
    pub interior_nodes: usize,
    pub flagged_nodes: usize,
    pub max_abs_h_error: f64,
    pub mean_h: f64,
    pub max_gauss_codazzi: f64,
    pub max_conformality: f64,
}

/// All geometry diagnostics for one sample. Values are NaN off the interior and at flagged nodes.
pub fn geometry_report(s: &ImmersionSample, xi: &MeromorphicPotential, route: Derivatives, tol: &Tolerances) -> Result<GeometryReport> {
    let m = metric_u(s, route, tol)?;
    let js = jets(s, route)?;
    let n = s.grid.len();
    let keep = |i: usize| js[i].is_some() && !m.degenerate[i];
    let nan_c = C64::new(f64::NAN, f64::NAN);
    let e: Vec<C64> = (0..n).map(|i| if keep(i) { hopf_of_jet(&js[i].unwrap()) } else { nan_c }).collect();
    let h: Vec<f64> = (0..n).map(|i| if keep(i) { mean_curvature_of_jet(&js[i].unwrap()) } else { f64::NAN }).collect();
    let u: Vec<f64> = (0..n).map(|i| if keep(i) { m.u[i] } else { f64::NAN }).collect();
    let gc = gauss_codazzi_residual(s, xi, route, tol)?;
    let gc: Vec<f64> = (0..n).map(|i| if keep(i) { gc[i] } else { f64::NAN }).collect();
    let k = gauss_curvature(&u, &e, &h);
    let ii = second_fundamental(&u, &e, &h);
    let conf: Vec<f64> = (0..n).map(|i| if keep(i) { m.conformality[i] } else { f64::NAN }).collect();
    let hs: Vec<f64> = h.iter().copied().filter(|v| v.is_finite()).collect();
    let summary = GeometrySummary {
        interior_nodes: hs.len(),
        flagged_nodes: m.degenerate.iter().filter(|&&d| d).count() + s.valid.iter().filter(|&&v| !v).count(),
        max_abs_h_error: finite_max(hs.iter().map(|v| (v - MEAN_CURVATURE).abs())),
        mean_h: if hs.is_empty() { f64::NAN } else { hs.iter().sum::<f64>() / hs.len() as f64 },
        max_gauss_codazzi: finite_max(gc.iter().copied()),
        max_conformality: finite_max(conf.iter().copied()),
    };
    Ok(GeometryReport {
        domain: s.grid.domain,
        theta: s.lambda.theta,
        derivatives: if route == Derivatives::Frame && s.jets.is_some() { Derivatives::Frame } else { Derivatives::FiniteDifference },
        nodes: s.grid.nodes.iter().map(|z| [z.re, z.im]).collect(),
        u,
        e: e.iter().map(|c| [c.re, c.im]).collect(),
        h,
        k,
        gauss_codazzi_residual: gc,
        second_fundamental: ii,
        conformality: conf,
        degenerate: m.degenerate,
        summary,
    })
}
