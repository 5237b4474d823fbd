use std::f64::consts::PI;

use dpw::geometry::{gauss_curvature, hopf_e, mean_curvature, metric_u, Derivatives, HOPF_SCALE};
use dpw::loops::{exp_axis, mat_max_abs, CirclePoint, Mat2, ScalarLaurent, TwistedLoop, C64, ONE};
use dpw::pipeline::{integrate_frame, split_frames, sym_formula, FrameField, PlanarGrid};
use dpw::potentials::{smyth_potential, DomainAutomorphism, MeromorphicPotential};
use dpw::symmetry::{check_isometry_laws, chi_motion, extract_chi, Verdict};
use dpw::{Error, Tolerances};

fn field(xi: &MeromorphicPotential, grid: &PlanarGrid) -> FrameField {
    split_frames(&integrate_frame(xi, grid, &TwistedLoop::identity(24)).unwrap())
}

#[test]
fn exp_axis_matches_hyperbolic_closed_form() {
    let x = ScalarLaurent::from_terms(&[(-1, C64::new(0.7, -0.3)), (1, C64::new(-0.2, 0.5)), (3, C64::new(0.1, 0.1))]);
    let g = exp_axis(&x, 24).unwrap();
    for j in 0..37 {
        let p = CirclePoint::from_theta(2.0 * PI * j as f64 / 37.0);
        let s: C64 = x.terms().map(|(k, c)| c * C64::from_polar(1.0, k as f64 * p.theta)).sum();
        let want = Mat2::new(s.cosh(), s.sinh(), s.sinh(), s.cosh());
        let err = mat_max_abs(&(g.eval(&p) - want));
        assert!(err < 1e-11, "{err:e}");
    }
}

#[test]
fn theta_derivative_matches_central_difference() {
    let g = exp_axis(&ScalarLaurent::from_terms(&[(-1, C64::new(0.4, 0.1)), (1, C64::new(0.3, -0.2))]), 24).unwrap();
    let dg = g.theta_derivative();
    let h = 1e-5;
    for t in [0.0, 0.9, 2.4, 4.0] {
        let fd = (g.eval(&CirclePoint::from_theta(t + h)) - g.eval(&CirclePoint::from_theta(t - h))) / C64::new(2.0 * h, 0.0);
        assert!(mat_max_abs(&(dg.eval(&CirclePoint::from_theta(t)) - fd)) < 1e-8);
    }
}

#[test]
fn frame_jets_match_finite_differences() {
    let (n, r) = (65, 0.5);
    let grid = PlanarGrid::plane(n, r).unwrap();
    let s = sym_formula(&field(&smyth_potential(1, ONE).unwrap(), &grid), CirclePoint::one());
    let jets = s.jets.as_ref().unwrap();
    let h = grid.step();
    let mut worst = 0.0f64;
    for j in 1..n - 1 {
        for i in 1..n - 1 {
            let k = j * n + i;
            for c in 0..3 {
                let dx = (s.points[k + 1][c] - s.points[k - 1][c]) / (2.0 * h);
                let dy = (s.points[k + n][c] - s.points[k - n][c]) / (2.0 * h);
                let dxx = (s.points[k + 1][c] - 2.0 * s.points[k][c] + s.points[k - 1][c]) / (h * h);
                worst = worst.max((jets[k].dx[c] - dx).abs()).max((jets[k].dy[c] - dy).abs()).max((jets[k].dxx[c] - dxx).abs());
            }
        }
    }
    // Second-order differences: error ~ h² times fourth derivatives of order one.
    assert!(worst < 50.0 * h * h, "worst {worst:e}");
}

#[test]
fn gauss_equation_agrees_with_curvature_formula() {
    let n = 129;
    let grid = PlanarGrid::plane(n, 0.5).unwrap();
    let s = sym_formula(&field(&smyth_potential(1, ONE).unwrap(), &grid), CirclePoint::one());
    let tol = Tolerances::default();
    let u = metric_u(&s, Derivatives::Frame, &tol).unwrap().u;
    let e = hopf_e(&s, Derivatives::Frame).unwrap();
    let hm = mean_curvature(&s, Derivatives::Frame).unwrap();
    let k = gauss_curvature(&u, &e, &hm);
    let h = grid.step();
    let mut worst = 0.0f64;
    for j in 1..n - 1 {
        for i in 1..n - 1 {
            let c = j * n + i;
            // ds² = eᵘ|dz|²  ⇒  K = −½ e^{−u} Δu
            let lap = (u[c + 1] + u[c - 1] + u[c + n] + u[c - n] - 4.0 * u[c]) / (h * h);
            worst = worst.max((k[c] + 0.5 * (-u[c]).exp() * lap).abs());
        }
    }
    assert!(worst <= 1e-3, "worst {worst:e}");
}

#[test]
fn smyth_metric_is_rotationally_invariant() {
    let grid = PlanarGrid::disk(17, 24, 0.6).unwrap();
    for m in [1, 2] {
        let s = sym_formula(&field(&smyth_potential(m, C64::new(0.8, 0.3)).unwrap(), &grid), CirclePoint::one());
        let u = metric_u(&s, Derivatives::Frame, &Tolerances::default()).unwrap().u;
        for ring in 1..17 {
            let vals = &u[1 + (ring - 1) * 24..1 + ring * 24];
            let mean = vals.iter().sum::<f64>() / 24.0;
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 24.0;
            assert!(var <= 1e-4, "m={m} ring {ring}: variance {var:e}");
        }
    }
}

#[test]
fn metric_is_the_same_across_the_associated_family() {
    let grid = PlanarGrid::plane(17, 0.6).unwrap();
    let ff = field(&smyth_potential(2, ONE).unwrap(), &grid);
    let tol = Tolerances::default();
    let u0 = metric_u(&sym_formula(&ff, CirclePoint::one()), Derivatives::Frame, &tol).unwrap().u;
    let u1 = metric_u(&sym_formula(&ff, CirclePoint::from_theta(1.3)), Derivatives::Frame, &tol).unwrap().u;
    for (a, b) in u0.iter().zip(&u1) {
        assert!((a - b).abs() < 1e-10);
    }
}

#[test]
fn exact_jets_are_conformal() {
    let grid = PlanarGrid::plane(17, 0.7).unwrap();
    let s = sym_formula(&field(&smyth_potential(3, C64::new(0.5, -0.5)).unwrap(), &grid), CirclePoint::from_theta(0.4));
    for j in s.jets.as_ref().unwrap() {
        let (a, b) = (j.dx, j.dy);
        let dot = a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
        let (na, nb) = (a.iter().map(|v| v * v).sum::<f64>(), b.iter().map(|v| v * v).sum::<f64>());
        assert!(dot.abs() < 1e-10 * na && (na - nb).abs() < 1e-10 * na);
    }
}

#[test]
fn hopf_differential_is_scaled_potential_e() {
    let c = C64::new(0.6, 0.4);
    let grid = PlanarGrid::plane(13, 0.6).unwrap();
    let xi = smyth_potential(2, c).unwrap();
    let s = sym_formula(&field(&xi, &grid), CirclePoint::one());
    let e = hopf_e(&s, Derivatives::Frame).unwrap();
    for (i, (z, e)) in grid.nodes.iter().zip(&e).enumerate() {
        if !grid.is_interior(i) {
            continue;
        }
        let want = c * z * z * HOPF_SCALE;
        assert!((e - want).norm() < 1e-9, "at {z}: {e} vs {want}");
    }
}

#[test]
fn chi_moves_the_point_cloud_rigidly() {
    let n = 17;
    let grid = PlanarGrid::plane(n, 0.6).unwrap();
    let ff = field(&smyth_potential(2, ONE).unwrap(), &grid);
    let g = DomainAutomorphism::rotation(PI / 2.0, C64::new(0.0, 0.0));
    let rep = extract_chi(&ff, &g);
    assert_eq!(rep.verdict, Verdict::Symmetric);
    let p = CirclePoint::one();
    let s = sym_formula(&ff, p);
    let (r, t) = chi_motion(&rep.chi_loop, &p);
    let mut worst = 0.0f64;
    for j in 0..n {
        for i in 0..n {
            // z = x + iy ↦ iz maps node (i, j) to node (n−1−j, i).
            let (a, b) = (j * n + i, i * n + (n - 1 - j));
            assert!((grid.nodes[b] - g.apply(grid.nodes[a])).norm() < 1e-12);
            let pa = nalgebra::Vector3::from(s.points[a]);
            let moved = r * pa + t;
            worst = worst.max((moved - nalgebra::Vector3::from(s.points[b])).norm());
        }
    }
    assert!(worst < 1e-8, "worst {worst:e}");
}

#[test]
fn translation_far_outside_the_grid_is_out_of_domain() {
    let grid = PlanarGrid::plane(17, 0.5).unwrap();
    let s = sym_formula(&field(&smyth_potential(1, ONE).unwrap(), &grid), CirclePoint::one());
    let g = DomainAutomorphism::translation(C64::new(5.0, 0.0));
    assert!(matches!(check_isometry_laws(&s, &g), Err(Error::OutOfDomain { .. })));
}
