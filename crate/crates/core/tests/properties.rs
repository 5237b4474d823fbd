use std::f64::consts::PI;

use dpw::factorization::{birkhoff, iwasawa};
use dpw::loops::{exp_axis, mat_max_abs, CirclePoint, Mat2, ScalarLaurent, TwistedLoop, C64, ONE, ZERO};
use dpw::pipeline::{r3_to_su2, su2_to_r3};
use dpw::potentials::{pullback, smyth_potential, HoloMap};
use dpw::symmetry::Verdict;
use proptest::prelude::*;

const N: usize = 24;

fn c64(r: f64) -> impl Strategy<Value = C64> {
    (-r..r, -r..r).prop_map(|(a, b)| C64::new(a, b))
}

fn twisted_coeff(k: i32, p: C64, q: C64) -> Mat2 {
    if k.rem_euclid(2) == 0 {
        Mat2::new(p, ZERO, ZERO, q)
    } else {
        Mat2::new(ZERO, p, q, ZERO)
    }
}

/// Twisted loop supported in degrees −d..d with entries of modulus up to `r`.
fn twisted(d: i32, r: f64) -> impl Strategy<Value = TwistedLoop> {
    proptest::collection::vec((c64(r), c64(r)), (2 * d + 1) as usize).prop_map(move |cs| {
        let list: Vec<(i32, Mat2)> = cs.iter().enumerate().map(|(i, (p, q))| {
            let k = i as i32 - d;
            (k, twisted_coeff(k, *p, *q))
        }).collect();
        TwistedLoop::from_coeffs(&list, N).unwrap()
    })
}

/// Identity plus a small twisted perturbation in degrees −1..1, safely invertible.
fn near_identity() -> impl Strategy<Value = TwistedLoop> {
    twisted(1, 0.1).prop_map(|p| p.add(&TwistedLoop::identity(N)))
}

/// exp(x₁A)·diag(p, 1/p)·exp(x₂A): a twisted SL₂ loop, the domain of the splittings.
fn sl2_loop() -> impl Strategy<Value = TwistedLoop> {
    let odd = || (c64(0.4), c64(0.4), c64(0.1)).prop_map(|(a, b, c)| ScalarLaurent::from_terms(&[(-1, a), (1, b), (3, c)]));
    (odd(), c64(0.3), odd()).prop_map(|(x1, p, x2)| {
        let p = ONE + p;
        let d = TwistedLoop::constant(Mat2::new(p, ZERO, ZERO, ONE / p), N);
        exp_axis(&x1, N).unwrap().mul(&d).mul(&exp_axis(&x2, N).unwrap())
    })
}

fn theta() -> impl Strategy<Value = f64> {
    0.0..2.0 * PI
}

fn close(a: &Mat2, b: &Mat2) -> f64 {
    mat_max_abs(&(a - b))
}

fn support(g: &TwistedLoop, tol: f64) -> (i32, i32) {
    let ks: Vec<i32> = g.iter().filter(|(_, c)| mat_max_abs(c) > tol).map(|(k, _)| k).collect();
    (*ks.iter().min().unwrap_or(&0), *ks.iter().max().unwrap_or(&0))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn products_and_inverses_stay_twisted(a in twisted(3, 1.0), b in twisted(3, 1.0), g in near_identity()) {
        prop_assert!(a.mul(&b).is_twisted());
        prop_assert!(g.inverse().unwrap().is_twisted());
        prop_assert!(a.star().is_twisted());
        prop_assert!(a.theta_derivative().is_twisted());
    }

    #[test]
    fn evaluation_is_multiplicative(a in twisted(3, 1.0), b in twisted(3, 1.0), t in theta()) {
        let p = CirclePoint::from_theta(t);
        prop_assert!(close(&a.mul(&b).eval(&p), &(a.eval(&p) * b.eval(&p))) < 1e-12);
    }

    #[test]
    fn star_is_adjoint_on_the_circle(a in twisted(3, 1.0), b in twisted(3, 1.0), t in theta()) {
        let p = CirclePoint::from_theta(t);
        prop_assert!(close(&a.star().eval(&p), &a.eval(&p).adjoint()) < 1e-13);
        prop_assert!(a.mul(&b).star().max_abs_diff(&b.star().mul(&a.star())) < 1e-13);
    }

    #[test]
    fn theta_derivative_obeys_product_rule(a in twisted(3, 1.0), b in twisted(3, 1.0)) {
        let lhs = a.mul(&b).theta_derivative();
        let rhs = a.theta_derivative().mul(&b).add(&a.mul(&b.theta_derivative()));
        prop_assert!(lhs.max_abs_diff(&rhs) < 1e-12);
    }

    #[test]
    fn inverse_round_trip(g in near_identity(), t in theta()) {
        let gi = g.inverse().unwrap();
        prop_assert!(g.mul(&gi).max_abs_diff(&TwistedLoop::identity(N)) < 1e-9);
        let p = CirclePoint::from_theta(t);
        prop_assert!(close(&(g.eval(&p) * gi.eval(&p)), &Mat2::identity()) < 1e-9);
    }

    #[test]
    fn iwasawa_round_trip(g in sl2_loop(), t in theta()) {
        let s = iwasawa(&g).unwrap();
        let p = CirclePoint::from_theta(t);
        let f = s.unitary_factor.eval(&p);
        prop_assert!(close(&(f.adjoint() * f), &Mat2::identity()) < 1e-9);
        prop_assert!(s.unitary_factor.mul(&s.plus_factor).max_abs_diff(&g) < 1e-9);
        prop_assert!(support(&s.plus_factor, 1e-12).0 >= 0);
        prop_assert!(s.plus_factor.mul(&s.plus_inverse).max_abs_diff(&TwistedLoop::identity(N)) < 1e-9);
        prop_assert!(s.w0() > 0.0);
    }

    #[test]
    fn w0_ignores_right_diagonal_unitary(g in sl2_loop(), t in theta()) {
        let k = TwistedLoop::constant(Mat2::new(C64::from_polar(1.0, t), ZERO, ZERO, C64::from_polar(1.0, -t)), N);
        let a = iwasawa(&g).unwrap().w0();
        let b = iwasawa(&g.mul(&k)).unwrap().w0();
        prop_assert!((a - b).abs() < 1e-10);
    }

    #[test]
    fn birkhoff_recovers_known_factors(a in c64(0.8), c in c64(0.2), b in c64(0.8), d in c64(0.2), p in c64(0.3)) {
        let minus = exp_axis(&ScalarLaurent::from_terms(&[(-1, a), (-3, c)]), N).unwrap();
        let p = ONE + p;
        let plus = TwistedLoop::constant(Mat2::new(p, ZERO, ZERO, ONE / p), N)
            .mul(&exp_axis(&ScalarLaurent::from_terms(&[(1, b), (3, d)]), N).unwrap());
        let s = birkhoff(&minus.mul(&plus)).unwrap();
        prop_assert!(s.minus_factor.max_abs_diff(&minus) < 1e-9);
        prop_assert!(s.plus_factor.max_abs_diff(&plus) < 1e-9);
        prop_assert!(support(&s.minus_factor, 1e-12).1 <= 0);
        prop_assert!(support(&s.plus_factor, 1e-12).0 >= 0);
    }

    #[test]
    fn birkhoff_is_right_or_reports(g in sl2_loop()) {
        match birkhoff(&g) {
            Ok(s) => {
                prop_assert!(s.minus_factor.mul(&s.plus_factor).max_abs_diff(&g) < 1e-6);
                prop_assert!(close(&s.minus_factor.coeff(0), &Mat2::identity()) < 1e-10);
            }
            Err(e) => {
                let typed = matches!(e, dpw::Error::ConvergenceFailure { .. } | dpw::Error::OutsideBigCell { .. });
                prop_assert!(typed, "unexpected error {:?}", e);
            }
        }
    }

    #[test]
    fn pullback_is_functorial(a1 in c64(1.0), b1 in c64(1.0), a2 in c64(1.0), b2 in c64(1.0), z in c64(0.5)) {
        prop_assume!(a1.norm() > 0.1 && a2.norm() > 0.1);
        let xi = smyth_potential(2, C64::new(0.7, 0.2)).unwrap();
        let h1 = HoloMap::Affine { a: a1, b: b1 };
        let h2 = HoloMap::Affine { a: a2, b: b2 };
        let twice = pullback(&pullback(&xi, &h1).unwrap(), &h2).unwrap();
        let once = pullback(&xi, &h1.after(&h2).unwrap()).unwrap();
        let scale = 1.0 + once.e_at(z).norm();
        prop_assert!((twice.f_at(z) - once.f_at(z)).norm() < 1e-10 * scale);
        prop_assert!((twice.e_at(z) - once.e_at(z)).norm() < 1e-10 * scale);
    }

    #[test]
    fn log_chart_pullback_matches_chain_rule(w in c64(0.5), z0 in c64(0.5)) {
        let xi = smyth_potential(1, ONE).unwrap();
        let h = HoloMap::log_chart(z0);
        let p = pullback(&xi, &h).unwrap();
        let (z, dz) = (h.apply(w), h.derivative(w));
        prop_assert!((p.f_at(w) - xi.f_at(z) * dz).norm() < 1e-10);
        prop_assert!((p.e_at(w) - xi.e_at(z) * dz * dz).norm() < 1e-9 * (1.0 + xi.e_at(z).norm()));
    }

    #[test]
    fn spinor_map_round_trips(x in -5.0..5.0f64, y in -5.0..5.0f64, z in -5.0..5.0f64) {
        let v = [x, y, z];
        let m = r3_to_su2(&v);
        prop_assert!(close(&(m + m.adjoint()), &Mat2::zeros()) < 1e-14);
        prop_assert!(m.trace().norm() < 1e-14);
        let back = su2_to_r3(&m);
        for i in 0..3 {
            prop_assert!((back[i] - v[i]).abs() < 1e-13);
        }
    }

    #[test]
    fn verdict_bands_are_ordered(a in 0.0..100.0f64, b in 0.0..100.0f64) {
        let rank = |v: Verdict| match v { Verdict::Symmetric => 0, Verdict::Inconclusive => 1, Verdict::NotSymmetric => 2 };
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(rank(Verdict::from_ratio(lo)) <= rank(Verdict::from_ratio(hi)));
    }
}

#[test]
fn iwasawa_rejects_non_constant_determinant() {
    let g = TwistedLoop::from_coeffs(&[(0, Mat2::identity()), (2, Mat2::new(C64::new(0.3, 0.0), ZERO, ZERO, ZERO))], N).unwrap();
    assert!(matches!(iwasawa(&g), Err(dpw::Error::InvalidParameter(_))));
}

#[test]
fn verdict_band_edges() {
    assert_eq!(Verdict::from_ratio(0.1), Verdict::Symmetric);
    assert_eq!(Verdict::from_ratio(1.0), Verdict::Inconclusive);
    assert_eq!(Verdict::from_ratio(10.5), Verdict::NotSymmetric);
    assert_eq!(Verdict::from_ratio(f64::NAN), Verdict::NotSymmetric);
}
