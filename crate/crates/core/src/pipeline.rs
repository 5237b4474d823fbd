//! The DPW assembly line: holomorphic frame ODE, Iwasawa splitting, Sym's formula.
//!
//! Besides the sampled immersion, every node carries exact first and second
//! derivatives of Ψ ("jets"), obtained by differentiating through the
//! Lie-algebra version of the Iwasawa splitting. With X = F·h and
//! X⁻¹∂_v X = c_v λ⁻¹M (c_x = 1, c_y = i), the Maurer–Cartan form of F is the
//! unitary part of Y_v = h (c_v λ⁻¹M) h⁻¹, and Ψ_v = F (∂_θα_v + (i/2)[α_v, σ₃]) F⁻¹.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::factorization::{birkhoff_with, iwasawa_with, IwasawaPair};
use crate::loops::{invert_plus, sigma3, CirclePoint, Mat2, TwistedLoop, C64, I, ONE, ZERO};
use crate::potentials::MeromorphicPotential;
use crate::tolerances::Tolerances;

pub type Vec3 = [f64; 3];

/// Shape of the sampled parameter domain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GridDomain {
    /// The square [−r, r]² with n × n nodes, n odd.
    Plane { n: usize, r: f64 },
    /// Polar nodes: the origin plus n_r − 1 rings of n_phi nodes, outer radius < 1.
    Disk { n_r: usize, n_phi: usize, radius: f64 },
}

/// Sample points of the domain, with the base point 0 as a node.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlanarGrid {
    pub domain: GridDomain,
    pub nodes: Vec<C64>,
    pub base: usize,
}

impl PlanarGrid {
    pub fn plane(n: usize, r: f64) -> Result<Self> {
        if n < 3 || n.is_multiple_of(2) {
            return Err(Error::InvalidGrid(format!("plane grid needs odd n >= 3, got {n}")));
        }
        if !(r > 0.0 && r.is_finite()) {
            return Err(Error::InvalidGrid(format!("extent must be positive, got {r}")));
        }
        let c = (0..n).map(|i| -r + 2.0 * r * i as f64 / (n - 1) as f64).collect::<Vec<_>>();
        let mut nodes = Vec::with_capacity(n * n);
        for j in 0..n {
            for i in 0..n {
                let x = if i == n / 2 { 0.0 } else { c[i] };
                let y = if j == n / 2 { 0.0 } else { c[j] };
                nodes.push(C64::new(x, y));
            }
        }
        Ok(Self { domain: GridDomain::Plane { n, r }, nodes, base: (n / 2) * n + n / 2 })
    }

    pub fn disk(n_r: usize, n_phi: usize, radius: f64) -> Result<Self> {
        if n_r < 2 || n_phi < 3 {
            return Err(Error::InvalidGrid("disk grid needs n_r >= 2 and n_phi >= 3".into()));
        }
        if !(radius > 0.0 && radius < 1.0) {
            return Err(Error::InvalidGrid(format!("disk radius must lie in (0, 1), got {radius}")));
        }
        let mut nodes = vec![ZERO];
        for ring in 1..n_r {
            let rho = radius * ring as f64 / (n_r - 1) as f64;
            for k in 0..n_phi {
                nodes.push(C64::from_polar(rho, 2.0 * PI * k as f64 / n_phi as f64));
            }
        }
        Ok(Self { domain: GridDomain::Disk { n_r, n_phi, radius }, nodes, base: 0 })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Grid step of a plane grid.
    pub fn step(&self) -> f64 {
        match self.domain {
            GridDomain::Plane { n, r } => 2.0 * r / (n - 1) as f64,
            GridDomain::Disk { n_r, radius, .. } => radius / (n_r - 1) as f64,
        }
    }

    /// (column, row) of a plane-grid node.
    pub fn plane_index(&self, idx: usize) -> Option<(usize, usize)> {
        match self.domain {
            GridDomain::Plane { n, .. } => Some((idx % n, idx / n)),
            GridDomain::Disk { .. } => None,
        }
    }

    /// Nodes with a full central stencil.
    pub fn is_interior(&self, idx: usize) -> bool {
        match self.domain {
            GridDomain::Plane { n, .. } => {
                let (i, j) = (idx % n, idx / n);
                i > 0 && j > 0 && i + 1 < n && j + 1 < n
            }
            GridDomain::Disk { n_r, n_phi, .. } => idx == 0 || (idx - 1) / n_phi + 1 < n_r - 1,
        }
    }

    /// True when z lies in the closed sampled region.
    pub fn contains(&self, z: C64) -> bool {
        match self.domain {
            GridDomain::Plane { r, .. } => z.re.abs() <= r * (1.0 + 1e-12) && z.im.abs() <= r * (1.0 + 1e-12),
            GridDomain::Disk { radius, .. } => z.norm() <= radius * (1.0 + 1e-12),
        }
    }

    /// Rejects grids whose region contains a pole, or gets within `margin` of one.
    pub fn check_poles(&self, xi: &MeromorphicPotential, margin: f64) -> Result<()> {
        for &p in &xi.poles {
            let dist = match self.domain {
                GridDomain::Plane { r, .. } => {
                    let dx = (p.re.abs() - r).max(0.0);
                    let dy = (p.im.abs() - r).max(0.0);
                    dx.hypot(dy)
                }
                GridDomain::Disk { radius, .. } => (p.norm() - radius).max(0.0),
            };
            if dist < margin {
                let target = self
                    .nodes
                    .iter()
                    .copied()
                    .min_by(|a, b| (a - p).norm().total_cmp(&(b - p).norm()))
                    .unwrap_or(ZERO);
                return Err(Error::PoleOnPath { pole: p, target });
            }
        }
        Ok(())
    }
}

/// RK4 step control.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IntegratorOptions {
    /// Upper bound on |step|·‖M‖ for each RK4 step.
    pub max_step_norm: f64,
    /// Minimum number of RK4 steps per grid segment.
    pub min_substeps: usize,
    /// Compare with a half-step run and refine until they agree.
    pub error_control: bool,
    /// Hard cap on the RK4 steps per segment.
    pub max_substeps: usize,
}

impl Default for IntegratorOptions {
    fn default() -> Self {
        Self { max_step_norm: 0.005, min_substeps: 2, error_control: false, max_substeps: 1 << 22 }
    }
}

/// Everything needed to produce the holomorphic frame at an arbitrary point.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameSource {
    pub potential: MeromorphicPotential,
    /// Initial value g₋(0) = g₀.
    pub g0: TwistedLoop,
    /// Accumulated dressing h₊, if any.
    pub dressing: Option<TwistedLoop>,
    pub options: IntegratorOptions,
    pub tol: Tolerances,
}

impl FrameSource {
    pub fn new(potential: MeromorphicPotential, trunc: usize) -> Self {
        Self {
            potential,
            g0: TwistedLoop::identity(trunc),
            dressing: None,
            options: IntegratorOptions::default(),
            tol: Tolerances::default(),
        }
    }

    pub fn trunc(&self) -> usize {
        self.g0.trunc()
    }

    /// Solution G of G′ = Gξ, G(0) = I, along the straight segment from 0 to z.
    pub fn integrate_to(&self, z: C64) -> Result<TwistedLoop> {
        let mut g = MinusState::identity(self.trunc());
        g.advance(&self.potential, ZERO, z, &self.options, &self.tol)?;
        Ok(g.to_loop())
    }

    /// X(z) = h₊·g₀·G(z): holomorphic in z with X⁻¹X′ = ξ.
    pub fn holomorphic(&self, raw: &TwistedLoop) -> TwistedLoop {
        let x = self.g0.mul(raw);
        match &self.dressing {
            Some(h) => h.mul(&x),
            None => x,
        }
    }

    /// Frame data at an off-grid point, integrating along the ray from 0.
    pub fn point_frame(&self, z: C64) -> Result<PointFrame> {
        let raw = self.integrate_to(z)?;
        Ok(PointFrame::build(self, z, self.holomorphic(&raw)))
    }
}

/// Minus-loop ODE state: coefficient j holds degree −j.
#[derive(Debug, Clone)]
struct MinusState {
    c: Vec<Mat2>,
}

impl MinusState {
    fn identity(trunc: usize) -> Self {
        let mut c = vec![Mat2::zeros(); trunc + 1];
        c[0] = Mat2::identity();
        Self { c }
    }

    fn to_loop(&self) -> TwistedLoop {
        TwistedLoop::from_coeffs_projected(self.c.iter().enumerate().map(|(j, m)| (-(j as i32), *m)), self.c.len() - 1)
    }

    /// d/ds of G along the path: G·λ⁻¹·M·(dz/ds).
    fn rhs(g: &[Mat2], m: &Mat2, out: &mut [Mat2]) {
        out[0] = Mat2::zeros();
        for j in 1..g.len() {
            out[j] = g[j - 1] * m;
        }
    }

    fn rk4(&mut self, xi: &MeromorphicPotential, za: C64, dz: C64, steps: usize) -> std::result::Result<(), C64> {
        let n = self.c.len();
        let (mut k1, mut k2, mut k3, mut k4) =
            (vec![Mat2::zeros(); n], vec![Mat2::zeros(); n], vec![Mat2::zeros(); n], vec![Mat2::zeros(); n]);
        let mut tmp = vec![Mat2::zeros(); n];
        let h = dz / steps as f64;
        let mat = |z: C64| -> std::result::Result<Mat2, C64> {
            let m = xi.matrix(z) * h;
            if m.iter().all(|v| v.re.is_finite() && v.im.is_finite()) {
                Ok(m)
            } else {
                Err(z)
            }
        };
        for s in 0..steps {
            let z = za + h * s as f64;
            let m1 = mat(z)?;
            let m2 = mat(z + h * 0.5)?;
            let m4 = mat(z + h)?;
            Self::rhs(&self.c, &m1, &mut k1);
            for j in 0..n {
                tmp[j] = self.c[j] + k1[j] * C64::new(0.5, 0.0);
            }
            Self::rhs(&tmp, &m2, &mut k2);
            for j in 0..n {
                tmp[j] = self.c[j] + k2[j] * C64::new(0.5, 0.0);
            }
            Self::rhs(&tmp, &m2, &mut k3);
            for j in 0..n {
                tmp[j] = self.c[j] + k3[j];
            }
            Self::rhs(&tmp, &m4, &mut k4);
            for j in 0..n {
                self.c[j] += (k1[j] + (k2[j] + k3[j]) * C64::new(2.0, 0.0) + k4[j]) * C64::new(1.0 / 6.0, 0.0);
            }
        }
        Ok(())
    }

    fn max_abs_diff(&self, o: &Self) -> f64 {
        self.c
            .iter()
            .zip(&o.c)
            .fold(0.0, |a, (x, y)| a.max(crate::loops::mat_max_abs(&(x - y))))
    }

    fn norm(&self) -> f64 {
        self.c.iter().fold(0.0, |a, x| a.max(crate::loops::mat_max_abs(x)))
    }

    /// Integrates along the straight segment za → zb.
    fn advance(
        &mut self,
        xi: &MeromorphicPotential,
        za: C64,
        zb: C64,
        opts: &IntegratorOptions,
        tol: &Tolerances,
    ) -> Result<()> {
        let dz = zb - za;
        let len = dz.norm();
        if len == 0.0 {
            return Ok(());
        }
        for &p in &xi.poles {
            if segment_distance(za, zb, p) < tol.pole_margin {
                return Err(Error::PoleOnPath { pole: p, target: zb });
            }
        }
        let mnorm = [za, (za + zb) * 0.5, zb]
            .iter()
            .map(|&z| {
                let m = xi.matrix(z);
                m[(0, 1)].norm().max(m[(1, 0)].norm())
            })
            .fold(0.0, f64::max);
        if !mnorm.is_finite() {
            return Err(Error::PoleOnPath { pole: zb, target: zb });
        }
        let mut steps = ((len * mnorm / opts.max_step_norm).ceil() as usize).max(opts.min_substeps);
        let fail = |z: C64| Error::PoleOnPath { pole: z, target: zb };
        if !opts.error_control {
            if steps > opts.max_substeps {
                return Err(Error::StepSizeUnderflow { at: za });
            }
            return self.rk4(xi, za, dz, steps).map_err(fail);
        }
        loop {
            if 2 * steps > opts.max_substeps {
                return Err(Error::StepSizeUnderflow { at: za });
            }
            let mut coarse = self.clone();
            coarse.rk4(xi, za, dz, steps).map_err(fail)?;
            let mut fine = self.clone();
            fine.rk4(xi, za, dz, 2 * steps).map_err(fail)?;
            let err = coarse.max_abs_diff(&fine) / 15.0;
            if err <= tol.ode_per_length * len * fine.norm().max(1.0) {
                *self = fine;
                return Ok(());
            }
            steps *= 2;
        }
    }
}

fn segment_distance(a: C64, b: C64, p: C64) -> f64 {
    let d = b - a;
    let t = if d.norm_sqr() == 0.0 { 0.0 } else { ((p - a) * d.conj()).re / d.norm_sqr() };
    (a + d * t.clamp(0.0, 1.0) - p).norm()
}

/// Runs `f` on the solution G(z) of the frame ODE at every node, integrating
/// along the real axis and then vertically (plane) or along rays (disk).
pub fn map_grid<T, F>(source: &FrameSource, grid: &PlanarGrid, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize, C64, TwistedLoop) -> T + Sync,
{
    let xi = &source.potential;
    let (opts, tol) = (&source.options, &source.tol);
    grid.check_poles(xi, tol.pole_margin)?;
    let trunc = source.trunc();
    match grid.domain {
        GridDomain::Plane { n, .. } => {
            let c = n / 2;
            let xs: Vec<f64> = (0..n).map(|i| grid.nodes[c * n + i].re).collect();
            let mut axis = vec![MinusState::identity(trunc); n];
            for dir in [1isize, -1] {
                let mut st = MinusState::identity(trunc);
                let mut i = c as isize;
                while (0..n as isize).contains(&(i + dir)) {
                    let (a, b) = (xs[i as usize], xs[(i + dir) as usize]);
                    st.advance(xi, C64::new(a, 0.0), C64::new(b, 0.0), opts, tol)?;
                    i += dir;
                    axis[i as usize] = st.clone();
                }
            }
            let cols: Vec<Result<Vec<(usize, T)>>> = (0..n)
                .into_par_iter()
                .map(|i| {
                    let mut out = Vec::with_capacity(n);
                    let x = xs[i];
                    let idx = c * n + i;
                    out.push((idx, f(idx, grid.nodes[idx], axis[i].to_loop())));
                    for dir in [1isize, -1] {
                        let mut st = axis[i].clone();
                        let mut j = c as isize;
                        while (0..n as isize).contains(&(j + dir)) {
                            let za = C64::new(x, grid.nodes[j as usize * n + i].im);
                            j += dir;
                            let idx = j as usize * n + i;
                            st.advance(xi, za, grid.nodes[idx], opts, tol)?;
                            out.push((idx, f(idx, grid.nodes[idx], st.to_loop())));
                        }
                    }
                    Ok(out)
                })
                .collect();
            Ok(unwrap_all(collect_indexed(cols, grid.len())?))
        }
        GridDomain::Disk { n_r, n_phi, .. } => {
            let base = f(0, ZERO, MinusState::identity(trunc).to_loop());
            let rays: Vec<Result<Vec<(usize, T)>>> = (0..n_phi)
                .into_par_iter()
                .map(|k| {
                    let mut st = MinusState::identity(trunc);
                    let mut prev = ZERO;
                    let mut out = Vec::with_capacity(n_r);
                    for ring in 1..n_r {
                        let idx = 1 + (ring - 1) * n_phi + k;
                        let z = grid.nodes[idx];
                        st.advance(xi, prev, z, opts, tol)?;
                        prev = z;
                        out.push((idx, f(idx, z, st.to_loop())));
                    }
                    Ok(out)
                })
                .collect();
            let mut v = collect_indexed(rays, grid.len())?;
            v[0] = Some(base);
            Ok(unwrap_all(v))
        }
    }
}

fn collect_indexed<T>(parts: Vec<Result<Vec<(usize, T)>>>, len: usize) -> Result<Vec<Option<T>>> {
    let mut slots: Vec<Option<T>> = (0..len).map(|_| None).collect();
    for part in parts {
        for (i, v) in part? {
            slots[i] = Some(v);
        }
    }
    Ok(slots)
}

fn unwrap_all<T>(slots: Vec<Option<T>>) -> Vec<T> {
    slots.into_iter().map(|s| s.expect("grid traversal visits every node")).collect()
}

/// Frames and splitting data at one point.
#[derive(Debug, Clone)]
pub struct PointFrame {
    pub z: C64,
    /// Normalized minus loop g₋(z).
    pub gminus: TwistedLoop,
    /// Iwasawa split of g₋; `None` marks a singular point.
    pub split: Option<IwasawaPair>,
    /// Iwasawa split of the holomorphic frame when it differs from g₋ (dressed fields).
    pub holo_split: Option<IwasawaPair>,
    /// M(z) and M′(z) of the undressed potential.
    pub m: Mat2,
    pub dm: Mat2,
    /// f of the potential realized by g₋ (equals the descriptor's f unless dressed).
    pub f_eff: C64,
}

impl PointFrame {
    fn build(source: &FrameSource, z: C64, x: TwistedLoop) -> Self {
        let tol = &source.tol;
        let m = source.potential.matrix(z);
        let dm = source.potential.matrix_derivative(z);
        let f = m[(0, 1)];
        if source.dressing.is_none() {
            let split = iwasawa_with(&x, tol).ok();
            return Self { z, gminus: x, split, holo_split: None, m, dm, f_eff: f };
        }
        let holo_split = iwasawa_with(&x, tol).ok();
        match birkhoff_with(&x, tol) {
            Ok(b) => {
                let p2 = b.plus_factor.coeff(0)[(0, 0)] * b.plus_factor.coeff(0)[(0, 0)];
                let split = iwasawa_with(&b.minus_factor, tol).ok();
                Self { z, gminus: b.minus_factor, split, holo_split, m, dm, f_eff: p2 * f }
            }
            Err(_) => Self { z, gminus: x, split: None, holo_split, m, dm, f_eff: f },
        }
    }

    pub fn is_singular(&self) -> bool {
        self.split.is_none()
    }

    /// Unitary frame F(z, ·) of g₋.
    pub fn frame(&self) -> Option<&TwistedLoop> {
        self.split.as_ref().map(|s| &s.unitary_factor)
    }

    /// D = 2 log w₀, the log of the upper-left λ⁰ entry of star(h₊)h₊.
    pub fn d_value(&self) -> Option<f64> {
        self.split.as_ref().map(|s| 2.0 * s.w0().ln())
    }

    /// Immersion sample at one spectral value.
    pub fn sample(&self, p: &CirclePoint) -> Option<NodeSample> {
        let s = self.holo_split.as_ref().or(self.split.as_ref())?;
        let hinv = s.plus_inverse.clone();
        Some(node_sample(&s.unitary_factor, &s.plus_factor, &hinv, &self.m, &self.dm, p))
    }
}

/// First and second partial derivatives of Ψ in x and y.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Jet {
    pub dx: Vec3,
    pub dy: Vec3,
    pub dxx: Vec3,
    pub dxy: Vec3,
    pub dyy: Vec3,
}

/// Sym's formula and its jets at one node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NodeSample {
    pub su2: Mat2,
    pub point: Vec3,
    pub jet: Jet,
}

/// x_j = i·tr(σ_j X) for X in su(2).
pub fn su2_to_r3(x: &Mat2) -> Vec3 {
    [
        (I * (x[(0, 1)] + x[(1, 0)])).re,
        (x[(1, 0)] - x[(0, 1)]).re,
        (I * (x[(0, 0)] - x[(1, 1)])).re,
    ]
}

/// J(v) = −(i/2) v·σ.
pub fn r3_to_su2(v: &Vec3) -> Mat2 {
    let s = C64::new(0.0, -0.5);
    Mat2::new(
        s * v[2],
        s * C64::new(v[0], -v[1]),
        s * C64::new(v[0], v[1]),
        -s * v[2],
    )
}

fn comm(a: &Mat2, b: &Mat2) -> Mat2 {
    a * b - b * a
}

/// α = λ⁻¹a₋ + a₀ + λa₁ as its three coefficients.
#[derive(Clone, Copy)]
struct Alg3 {
    m1: Mat2,
    z0: Mat2,
    p1: Mat2,
}

impl Alg3 {
    /// Unitary part of a loop from its degree −1 and 0 coefficients.
    fn unitary_part(y_m1: &Mat2, y_0: &Mat2) -> Self {
        let z0 = Mat2::new(C64::new(0.0, y_0[(0, 0)].im), ZERO, ZERO, C64::new(0.0, y_0[(1, 1)].im));
        Self { m1: *y_m1, z0, p1: -y_m1.adjoint() }
    }

    fn at(&self, l: C64) -> Mat2 {
        self.m1 / l + self.z0 + self.p1 * l
    }

    /// (∂_θα + (i/2)[α, σ₃]) at λ.
    fn sym_term(&self, l: C64) -> Mat2 {
        let d = (-self.m1 / l + self.p1 * l) * I;
        let s3 = sigma3();
        d + comm(&self.at(l), &s3) * C64::new(0.0, 0.5)
    }
}

fn node_sample(f: &TwistedLoop, h: &TwistedLoop, hinv: &TwistedLoop, m: &Mat2, dm: &Mat2, p: &CirclePoint) -> NodeSample {
    let l = p.lambda;
    let fl = f.eval(p);
    let fth = f.theta_derivative().eval(p);
    let fh = fl.adjoint();
    let su2 = fth * fh + fl * sigma3() * fh * C64::new(0.0, 0.5);

    let (h0, h1, h2) = (h.coeff(0), h.coeff(1), h.coeff(2));
    let (g0, g1, g2) = (hinv.coeff(0), hinv.coeff(1), hinv.coeff(2));
    // Y = h λ⁻¹M h⁻¹ at degrees −1, 0, 1, and the same for M′.
    let y = |mm: &Mat2| (h0 * mm * g0, h0 * mm * g1 + h1 * mm * g0, h0 * mm * g2 + h1 * mm * g1 + h2 * mm * g0);
    let (yx_m1, yx_0, yx_1) = y(m);
    let (d_m1, d_0, _) = y(dm);
    let scale = |a: (Mat2, Mat2, Mat2), c: C64| (a.0 * c, a.1 * c, a.2 * c);
    let yx = (yx_m1, yx_0, yx_1);
    let yy = scale(yx, I);
    // β = solvable part: degree 0 real diagonal, degree 1 = Y₁ + Y₋₁ᴴ.
    let beta = |y: &(Mat2, Mat2, Mat2)| {
        let b0 = Mat2::new(C64::new(y.1[(0, 0)].re, 0.0), ZERO, ZERO, C64::new(y.1[(1, 1)].re, 0.0));
        (b0, y.2 + y.0.adjoint())
    };
    let (bx, by) = (beta(&yx), beta(&yy));
    let ax = Alg3::unitary_part(&yx.0, &yx.1);
    let ay = Alg3::unitary_part(&yy.0, &yy.1);
    // ∂_w Y_v = [β_w, Y_v] + c_v c_w h λ⁻¹M′ h⁻¹ at degrees −1 and 0.
    let dy_of = |b: &(Mat2, Mat2), yv: &(Mat2, Mat2, Mat2), c: C64| {
        let m1 = comm(&b.0, &yv.0) + d_m1 * c;
        let z0 = comm(&b.0, &yv.1) + comm(&b.1, &yv.0) + d_0 * c;
        Alg3::unitary_part(&m1, &z0)
    };
    let axx = dy_of(&bx, &yx, ONE);
    let axy = dy_of(&by, &yx, I);
    let ayy = dy_of(&by, &yy, -ONE);

    let mx = ax.sym_term(l);
    let my = ay.sym_term(l);
    let (axl, ayl) = (ax.at(l), ay.at(l));
    let conj = |x: Mat2| su2_to_r3(&(fl * x * fh));
    let jet = Jet {
        dx: conj(mx),
        dy: conj(my),
        dxx: conj(comm(&axl, &mx) + axx.sym_term(l)),
        dxy: conj(comm(&ayl, &mx) + axy.sym_term(l)),
        dyy: conj(comm(&ayl, &my) + ayy.sym_term(l)),
    };
    NodeSample { su2, point: su2_to_r3(&su2), jet }
}

/// Grid of g₋ and (after [`split_frames`]) frames and plus factors.
#[derive(Debug, Clone)]
pub struct FrameField {
    pub grid: PlanarGrid,
    pub source: FrameSource,
    pub gminus: Vec<TwistedLoop>,
    /// Holomorphic frames h₊g₋⁰ of a dressed field; `None` when undressed.
    pub holomorphic: Option<Vec<TwistedLoop>>,
    pub frame: Vec<Option<TwistedLoop>>,
    pub plus: Vec<Option<TwistedLoop>>,
    pub singular_flags: Vec<bool>,
    points: Vec<Option<PointFrame>>,
}

impl FrameField {
    /// Per-node splitting data, available after [`split_frames`].
    pub fn point(&self, idx: usize) -> Option<&PointFrame> {
        self.points.get(idx).and_then(|p| p.as_ref())
    }

    pub fn is_split(&self) -> bool {
        !self.points.is_empty()
    }
}

/// Integrates g₋′ = g₋ξ from g₋(0) = g₀ to every grid node.
pub fn integrate_frame(xi: &MeromorphicPotential, grid: &PlanarGrid, g0: &TwistedLoop) -> Result<FrameField> {
    let mut source = FrameSource::new(xi.clone(), g0.trunc());
    source.g0 = g0.clone();
    integrate_source(source, grid)
}

/// As [`integrate_frame`] with full control over the source.
pub fn integrate_source(source: FrameSource, grid: &PlanarGrid) -> Result<FrameField> {
    let raw = map_grid(&source, grid, |_, _, g| g)?;
    let (gminus, holomorphic) = match &source.dressing {
        None => (raw.iter().map(|g| source.holomorphic(g)).collect(), None),
        Some(_) => {
            let holo: Vec<TwistedLoop> = raw.iter().map(|g| source.holomorphic(g)).collect();
            let tol = source.tol;
            let gm: Vec<TwistedLoop> = holo
                .par_iter()
                .map(|x| birkhoff_with(x, &tol).map(|b| b.minus_factor).unwrap_or_else(|_| x.clone()))
                .collect();
            (gm, Some(holo))
        }
    };
    let n = grid.len();
    Ok(FrameField {
        grid: grid.clone(),
        source,
        gminus,
        holomorphic,
        frame: Vec::new(),
        plus: Vec::new(),
        singular_flags: vec![false; n],
        points: Vec::new(),
    })
}

/// Iwasawa-splits every node; failures become singular flags.
pub fn split_frames(ff: &FrameField) -> FrameField {
    let src = &ff.source;
    let points: Vec<PointFrame> = (0..ff.grid.len())
        .into_par_iter()
        .map(|i| {
            let z = ff.grid.nodes[i];
            match &ff.holomorphic {
                Some(h) => PointFrame::build(src, z, h[i].clone()),
                None => PointFrame::build(src, z, ff.gminus[i].clone()),
            }
        })
        .collect();
    let mut out = ff.clone();
    out.singular_flags = points.iter().map(|p| p.is_singular()).collect();
    out.frame = points.iter().map(|p| p.frame().cloned()).collect();
    out.plus = points.iter().map(|p| p.split.as_ref().map(|s| s.plus_factor.clone())).collect();
    out.gminus = points.iter().map(|p| p.gminus.clone()).collect();
    out.points = points.into_iter().map(Some).collect();
    out
}

/// Sampled immersion Ψ_λ with normals, metric exponent and exact jets.
#[derive(Debug, Clone)]
pub struct ImmersionSample {
    pub grid: PlanarGrid,
    pub lambda: CirclePoint,
    pub points: Vec<Vec3>,
    pub su2_points: Vec<Mat2>,
    pub normals: Vec<Vec3>,
    pub u: Vec<f64>,
    /// False at singular nodes (all other fields are NaN there).
    pub valid: Vec<bool>,
    /// Exact derivatives from the frame; `None` for point clouds built otherwise.
    pub jets: Option<Vec<Jet>>,
}

pub(crate) fn cross(a: &Vec3, b: &Vec3) -> Vec3 {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

pub(crate) fn dot(a: &Vec3, b: &Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub(crate) fn normalize(a: &Vec3) -> Vec3 {
    let n = dot(a, a).sqrt();
    [a[0] / n, a[1] / n, a[2] / n]
}

impl ImmersionSample {
    fn assemble(grid: &PlanarGrid, lambda: CirclePoint, nodes: Vec<Option<NodeSample>>) -> Self {
        let nan3 = [f64::NAN; 3];
        let nanj = Jet { dx: nan3, dy: nan3, dxx: nan3, dxy: nan3, dyy: nan3 };
        let nanm = Mat2::from_element(C64::new(f64::NAN, f64::NAN));
        let mut s = Self {
            grid: grid.clone(),
            lambda,
            points: Vec::with_capacity(nodes.len()),
            su2_points: Vec::with_capacity(nodes.len()),
            normals: Vec::with_capacity(nodes.len()),
            u: Vec::with_capacity(nodes.len()),
            valid: Vec::with_capacity(nodes.len()),
            jets: Some(Vec::with_capacity(nodes.len())),
        };
        for ns in nodes {
            let jets = s.jets.as_mut().unwrap();
            match ns {
                Some(ns) => {
                    let j = ns.jet;
                    s.points.push(ns.point);
                    s.su2_points.push(ns.su2);
                    s.normals.push(normalize(&cross(&j.dx, &j.dy)));
                    s.u.push((0.5 * (dot(&j.dx, &j.dx) + dot(&j.dy, &j.dy))).ln());
                    s.valid.push(true);
                    jets.push(j);
                }
                None => {
                    s.points.push(nan3);
                    s.su2_points.push(nanm);
                    s.normals.push(nan3);
                    s.u.push(f64::NAN);
                    s.valid.push(false);
                    jets.push(nanj);
                }
            }
        }
        s
    }

    /// A sample holding only points; derivatives come from finite differences.
    pub fn from_points(grid: &PlanarGrid, lambda: CirclePoint, points: Vec<Vec3>) -> Result<Self> {
        if points.len() != grid.len() {
            return Err(Error::InvalidGrid("point count does not match the grid".into()));
        }
        let valid: Vec<bool> = points.iter().map(|p| p.iter().all(|v| v.is_finite())).collect();
        let mut s = Self {
            grid: grid.clone(),
            lambda,
            su2_points: points.iter().map(r3_to_su2).collect(),
            points,
            normals: Vec::new(),
            u: Vec::new(),
            valid,
            jets: None,
        };
        let d = crate::geometry::fd_first(&s)?;
        s.normals = d.iter().map(|o| o.map(|(px, py)| normalize(&cross(&px, &py))).unwrap_or([f64::NAN; 3])).collect();
        s.u = d
            .iter()
            .map(|o| o.map(|(px, py)| (0.5 * (dot(&px, &px) + dot(&py, &py))).ln()).unwrap_or(f64::NAN))
            .collect();
        Ok(s)
    }

    /// Drops the exact jets, so geometry falls back to finite differences.
    pub fn without_jets(&self) -> Result<Self> {
        Self::from_points(&self.grid, self.lambda, self.points.clone())
    }
}

/// Evaluates Sym's formula at λ on every non-singular node.
pub fn sym_formula(ff: &FrameField, lambda: CirclePoint) -> ImmersionSample {
    associated_family(ff, &[lambda.theta]).pop().expect("one member")
}

/// One immersion per θ, sharing the splitting work across members.
pub fn associated_family(ff: &FrameField, thetas: &[f64]) -> Vec<ImmersionSample> {
    let split;
    let ff = if ff.is_split() {
        ff
    } else {
        split = split_frames(ff);
        &split
    };
    let pts: Vec<CirclePoint> = thetas.iter().map(|&t| CirclePoint::from_theta(t)).collect();
    let per_node: Vec<Vec<Option<NodeSample>>> = (0..ff.grid.len())
        .into_par_iter()
        .map(|i| {
            let p = ff.point(i);
            pts.iter().map(|l| p.and_then(|p| p.sample(l))).collect()
        })
        .collect();
    pts.iter()
        .enumerate()
        .map(|(k, l)| ImmersionSample::assemble(&ff.grid, *l, per_node.iter().map(|v| v[k]).collect()))
        .collect()
}

/// Default θ sweep: 8 equally spaced values.
pub fn default_thetas() -> Vec<f64> {
    (0..8).map(|k| 2.0 * PI * k as f64 / 8.0).collect()
}

/// Integrates, splits and samples without keeping per-node loops in memory.
pub fn immersion_family(source: &FrameSource, grid: &PlanarGrid, thetas: &[f64]) -> Result<Vec<ImmersionSample>> {
    let pts: Vec<CirclePoint> = thetas.iter().map(|&t| CirclePoint::from_theta(t)).collect();
    let per_node = map_grid(source, grid, |_, z, g| {
        let pf = PointFrame::build(source, z, source.holomorphic(&g));
        pts.iter().map(|l| pf.sample(l)).collect::<Vec<_>>()
    })?;
    Ok(pts
        .iter()
        .enumerate()
        .map(|(k, l)| ImmersionSample::assemble(grid, *l, per_node.iter().map(|v| v[k]).collect()))
        .collect())
}

/// Dresses by h₊: g₋ ↦ (h₊g₋)₋ at every node, then re-splits.
pub fn dress(h_plus: &TwistedLoop, ff: &FrameField) -> Result<FrameField> {
    if h_plus.degree_range().is_some_and(|(lo, _)| lo < 0) {
        return Err(Error::InvalidParameter("dressing loop has negative degrees".into()));
    }
    let mut source = ff.source.clone();
    source.dressing = Some(match &source.dressing {
        Some(h) => h_plus.mul(h),
        None => h_plus.clone(),
    });
    let base: &Vec<TwistedLoop> = ff.holomorphic.as_ref().unwrap_or(&ff.gminus);
    let holo: Vec<TwistedLoop> = base.iter().map(|x| h_plus.mul(x)).collect();
    let n = ff.grid.len();
    let tol = source.tol;
    let gm: Vec<TwistedLoop> = holo
        .par_iter()
        .map(|x| birkhoff_with(x, &tol).map(|b| b.minus_factor).unwrap_or_else(|_| x.clone()))
        .collect();
    let out = FrameField {
        grid: ff.grid.clone(),
        source,
        gminus: gm,
        holomorphic: Some(holo),
        frame: Vec::new(),
        plus: Vec::new(),
        singular_flags: vec![false; n],
        points: Vec::new(),
    };
    Ok(split_frames(&out))
}

/// Plus inverse helper for callers holding only a plus factor.
pub fn plus_inverse(h: &TwistedLoop) -> Result<TwistedLoop> {
    invert_plus(h)
}
