//! Iwasawa and Birkhoff splittings of twisted loops.
//!
//! Iwasawa: star(g)·g = star(h₊)·h₊ is spectrally factorized by solving the
//! block-Toeplitz system Σ_j P_{k−j} G_j = δ_{k0} h₀ᴴ for G = h₊⁻¹ with a
//! Cholesky factorization. The B-normalization (λ⁰ coefficient upper
//! triangular, real positive diagonal) comes from a Cholesky factor of G₀.
//! Birkhoff: the coefficients of g₋⁻¹ solve a banded linear system; its
//! condition number decides membership in the big cell.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::loops::{invert_minus, invert_plus, Mat2, TwistedLoop, C64, ZERO};
use crate::tolerances::Tolerances;

/// g = F·h₊ with F unitary on the circle and h₊ in Λ⁺_B.
#[derive(Debug, Clone, PartialEq)]
pub struct IwasawaPair {
    pub unitary_factor: TwistedLoop,
    pub plus_factor: TwistedLoop,
    /// h₊⁻¹, a by-product of the solve.
    pub plus_inverse: TwistedLoop,
}

impl IwasawaPair {
    /// w₀, the upper-left entry of the λ⁰ coefficient of the plus factor.
    pub fn w0(&self) -> f64 {
        self.plus_factor.coeff(0)[(0, 0)].re
    }
}

/// g = g₋·g₊ with g₋ based at I at λ = ∞.
#[derive(Debug, Clone, PartialEq)]
pub struct BirkhoffPair {
    pub minus_factor: TwistedLoop,
    pub plus_factor: TwistedLoop,
}

pub fn iwasawa(g: &TwistedLoop) -> Result<IwasawaPair> {
    iwasawa_with(g, &Tolerances::default())
}

pub fn iwasawa_with(g: &TwistedLoop, tol: &Tolerances) -> Result<IwasawaPair> {
    let n = g.trunc();
    // The finite Toeplitz section recovers h₊⁻¹ exactly only when (g*g)⁻¹ is a
    // Laurent polynomial, i.e. when det g is constant on the circle.
    let dets: Vec<C64> = g.samples(crate::loops::sample_count(n)).iter().map(|m| m.determinant()).collect();
    let d0 = dets[0];
    let spread = dets.iter().map(|d| (d - d0).norm()).fold(0.0, f64::max);
    if !(spread <= tol.det_constancy * d0.norm().max(1.0)) || d0.norm() < tol.singular_det {
        return Err(Error::InvalidParameter(format!("Iwasawa splitting needs det g constant on the circle (spread {spread:e})")));
    }
    let wide = g.retruncate(2 * n);
    let p = wide.star().mul(&wide);
    let m = p
        .iter()
        .filter(|(_, c)| crate::loops::mat_max_abs(c) > 0.0)
        .map(|(k, _)| k.unsigned_abs() as usize)
        .max()
        .ok_or(Error::SingularLoop { min_det: 0.0 })?;
    let dim = 2 * (m + 1);
    let mut t = DMatrix::<C64>::zeros(dim, dim);
    for bk in 0..=m {
        for bj in 0..=m {
            let c = p.coeff(bk as i32 - bj as i32);
            for r in 0..2 {
                for s in 0..2 {
                    t[(2 * bk + r, 2 * bj + s)] = c[(r, s)];
                }
            }
        }
    }
    // Symmetrize to guard the Cholesky against rounding asymmetry.
    let t = (&t + t.adjoint()) * C64::new(0.5, 0.0);
    let chol = t.cholesky().ok_or(Error::SingularLoop { min_det: 0.0 })?;
    let mut rhs = DMatrix::<C64>::zeros(dim, 2);
    rhs[(0, 0)] = C64::new(1.0, 0.0);
    rhs[(1, 1)] = C64::new(1.0, 0.0);
    let y = chol.solve(&rhs);
    let block = |j: usize| Mat2::new(y[(2 * j, 0)], y[(2 * j, 1)], y[(2 * j + 1, 0)], y[(2 * j + 1, 1)]);
    let y0 = block(0);
    let y0inv = y0.try_inverse().ok_or(Error::SingularLoop { min_det: 0.0 })?;
    let y0inv = (y0inv + y0inv.adjoint()) * C64::new(0.5, 0.0);
    let l = y0inv.cholesky().ok_or(Error::SingularLoop { min_det: 0.0 })?.l();
    let h0 = l.adjoint();
    let h0h = h0.adjoint();
    let ginv_terms: Vec<(i32, Mat2)> = (0..=m).map(|j| (j as i32, block(j) * h0h)).collect();
    let ginv_wide = TwistedLoop::from_coeffs_projected(ginv_terms, m.max(n));
    let plus_inverse = ginv_wide.retruncate(n);
    let mut plus_factor = invert_plus(&plus_inverse)?;
    // Pin the λ⁰ coefficient to the Cholesky factor exactly.
    *plus_factor.coeff_mut(0) = {
        let mut c = h0;
        c[(0, 1)] = ZERO;
        c[(1, 0)] = ZERO;
        c
    };
    let unitary_factor = g.retruncate(n + m).mul(&ginv_wide.retruncate(n + m)).retruncate(n);
    let residual = unitary_factor.mul(&plus_factor).max_abs_diff(g);
    let scale = g.max_abs().max(1.0) * plus_factor.max_abs().max(1.0);
    if !(residual <= tol.factorization_residual * scale * 1e2) {
        return Err(Error::ConvergenceFailure { residual });
    }
    Ok(IwasawaPair {
        unitary_factor,
        plus_factor,
        plus_inverse,
    })
}

pub fn birkhoff(g: &TwistedLoop) -> Result<BirkhoffPair> {
    birkhoff_with(g, &Tolerances::default())
}

pub fn birkhoff_with(g: &TwistedLoop, tol: &Tolerances) -> Result<BirkhoffPair> {
    let n = g.trunc();
    let m = 2 * n;
    let dim = 2 * m;
    // Unknown row X = [K₋₁ … K₋ₘ]; X·S = −[g₋₁ … g₋ₘ] with S_{ab} = g_{a−b}.
    let mut st = DMatrix::<C64>::zeros(dim, dim);
    let mut bt = DMatrix::<C64>::zeros(dim, 2);
    for a in 1..=m {
        for b in 1..=m {
            let c = g.coeff(a as i32 - b as i32);
            for r in 0..2 {
                for s in 0..2 {
                    // transpose of block (a, b)
                    st[(2 * (b - 1) + s, 2 * (a - 1) + r)] = c[(r, s)];
                }
            }
        }
    }
    for b in 1..=m {
        let c = g.coeff(-(b as i32));
        for r in 0..2 {
            for s in 0..2 {
                bt[(2 * (b - 1) + s, r)] = -c[(r, s)];
            }
        }
    }
    // Singular values only gauge the big cell. The solve uses LU: nalgebra's complex
    // SVD solve loses up to 1e-8 on these well-conditioned systems.
    let sv = st.singular_values();
    let smax = sv.max();
    let smin = sv.min();
    let condition = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    if !(condition <= tol.big_cell_condition) {
        return Err(Error::OutsideBigCell { condition });
    }
    let xt = st
        .full_piv_lu()
        .solve(&bt)
        .ok_or(Error::OutsideBigCell { condition })?;
    let mut terms = vec![(0, Mat2::identity())];
    for a in 1..=m {
        let mut c = Mat2::zeros();
        for r in 0..2 {
            for s in 0..2 {
                c[(r, s)] = xt[(2 * (a - 1) + s, r)];
            }
        }
        terms.push((-(a as i32), c));
    }
    let k = TwistedLoop::from_coeffs_projected(terms, m);
    let plus_factor = k.mul(&g.retruncate(m)).restrict(0, n as i32).retruncate(n);
    let minus_factor = invert_minus(&k.retruncate(n))?;
    let residual = minus_factor.mul(&plus_factor).max_abs_diff(g);
    let scale = g.max_abs().max(1.0) * minus_factor.max_abs().max(1.0);
    if !(residual <= tol.factorization_residual * scale * 1e2) {
        return Err(Error::ConvergenceFailure { residual });
    }
    Ok(BirkhoffPair {
        minus_factor,
        plus_factor,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::loops::{axis_a, exp_axis, make_loop, ScalarLaurent, ONE};

    #[test]
    fn identity_splits_trivially() {
        let id = TwistedLoop::identity(8);
        let p = iwasawa(&id).unwrap();
        assert_eq!(p.unitary_factor, id);
        assert_eq!(p.plus_factor, id);
        let b = birkhoff(&id).unwrap();
        assert_eq!(b.minus_factor, id);
        assert!(b.plus_factor.max_abs_diff(&id) < 1e-15);
    }

    #[test]
    fn constant_unitary_is_its_own_frame() {
        let u = TwistedLoop::constant(Mat2::new(C64::from_polar(1.0, 0.7), ZERO, ZERO, C64::from_polar(1.0, -0.7)), 6);
        let p = iwasawa(&u).unwrap();
        assert!(p.unitary_factor.max_abs_diff(&u) < 1e-14);
        assert!(p.plus_factor.max_abs_diff(&TwistedLoop::identity(6)) < 1e-14);
    }

    #[test]
    fn plus_loop_birkhoff() {
        let h = make_loop(
            &[(0, Mat2::new(C64::new(2.0, 0.0), ZERO, ZERO, C64::new(0.5, 0.0))), (1, axis_a() * C64::new(0.2, 0.3))],
            8,
        )
        .unwrap();
        let b = birkhoff(&h).unwrap();
        assert!(b.minus_factor.max_abs_diff(&TwistedLoop::identity(8)) < 1e-13);
        assert!(b.plus_factor.max_abs_diff(&h) < 1e-13);
    }

    #[test]
    fn cylinder_plus_factor_has_unit_constant_term() {
        let z = C64::new(0.7, 0.2);
        let g = exp_axis(&ScalarLaurent::from_terms(&[(-1, z)]), 24).unwrap();
        let p = iwasawa(&g).unwrap();
        let want = exp_axis(&ScalarLaurent::from_terms(&[(1, z.conj())]), 24).unwrap();
        assert!(p.plus_factor.max_abs_diff(&want) < 1e-10);
        assert!((p.w0() - 1.0).abs() < 1e-12);
        let _ = ONE;
    }

    #[test]
    fn singular_input_rejected() {
        let g = TwistedLoop::zero(4);
        assert!(iwasawa(&g).is_err());
    }
}
