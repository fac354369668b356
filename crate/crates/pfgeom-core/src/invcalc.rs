//! Derivatives of the local inverse of the power flow map at regular
//! points: preimage-curve tangents, preimage-curve second derivatives,
//! and the full Hessian tensor of the inverse via polarization along
//! straight power-space lines.

use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::lu_condition_estimate;
use crate::quadmap::QuadraticMap;

/// Condition limit beyond which a point counts as singular for inverse
/// calculus; near the boundary the fold-aware splitting of the inversion
/// module must be used instead.
pub const REGULAR_CONDITION_LIMIT: f64 = 1e10;

/// Second-order jet of the local inverse at `v0`: the Jacobian of the
/// inverse and, per voltage component `m`, the Hessian of that component
/// with respect to the power coordinates.
#[derive(Debug, Clone)]
pub struct InverseJet {
    pub v0: DVector<f64>,
    pub j_inv: DMatrix<f64>,
    pub h_inv: Vec<DMatrix<f64>>,
}

fn regular_lu(
    map: &QuadraticMap,
    v: &DVector<f64>,
) -> Result<nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>> {
    let lu = map.jacobian(v)?.lu();
    let cond = lu_condition_estimate(&lu);
    if cond > REGULAR_CONDITION_LIMIT {
        return Err(Error::SingularSystem { condition: cond });
    }
    Ok(lu)
}

/// Tangent of the preimage curve: solves `DF(v) vdot = pdot`.
pub fn preimage_tangent(
    map: &QuadraticMap,
    v: &DVector<f64>,
    pdot: &DVector<f64>,
) -> Result<DVector<f64>> {
    regular_lu(map, v)?
        .solve(pdot)
        .ok_or(Error::SingularSystem { condition: f64::INFINITY })
}

/// Second derivative of the preimage curve: solves
/// `DF(v) vddot = pddot - h(vdot, vdot)` (the chain rule
/// `pddot = vdot^T HF vdot + DF vddot`, exact for quadratic maps).
pub fn preimage_second_derivative(
    map: &QuadraticMap,
    v: &DVector<f64>,
    vdot: &DVector<f64>,
    pddot: &DVector<f64>,
) -> Result<DVector<f64>> {
    let rhs = pddot - map.hessian_apply(vdot, vdot)?;
    regular_lu(map, v)?
        .solve(&rhs)
        .ok_or(Error::SingularSystem { condition: f64::INFINITY })
}

/// Full second-order jet of the inverse at a regular point.
///
/// Diagonal second partials come from straight coordinate lines in power
/// space (`pddot = 0`); the mixed partial in `(i, j)` comes from the line
/// along `e_i + e_j` by polarization:
/// `d_i d_j = (vddot_ij - vddot_ii - vddot_jj) / 2`.
/// One LU factorization of `DF(v0)` is shared by every solve.
pub fn inverse_hessian(map: &QuadraticMap, v0: &DVector<f64>) -> Result<InverseJet> {
    let n = map.dim();
    let lu = regular_lu(map, v0)?;
    let solve = |b: &DVector<f64>| -> Result<DVector<f64>> {
        lu.solve(b).ok_or(Error::SingularSystem { condition: f64::INFINITY })
    };

    let j_inv = lu
        .solve(&DMatrix::identity(n, n))
        .ok_or(Error::SingularSystem { condition: f64::INFINITY })?;

    // Second derivative of the preimage of a straight power line with
    // tangent vdot: DF vddot = -h(vdot, vdot).
    let second = |vdot: &DVector<f64>| -> Result<DVector<f64>> {
        let rhs = -map.hessian_apply(vdot, vdot)?;
        solve(&rhs)
    };

    let tangents: Vec<DVector<f64>> =
        (0..n).map(|i| j_inv.column(i).clone_owned()).collect();
    let diag: Vec<DVector<f64>> =
        tangents.iter().map(second).collect::<Result<_>>()?;

    let mut h_inv: Vec<DMatrix<f64>> = (0..n).map(|_| DMatrix::zeros(n, n)).collect();
    for i in 0..n {
        for (m, h) in h_inv.iter_mut().enumerate() {
            h[(i, i)] = diag[i][m];
        }
        for j in (i + 1)..n {
            let pair = second(&(&tangents[i] + &tangents[j]))?;
            for (m, h) in h_inv.iter_mut().enumerate() {
                let mixed = 0.5 * (pair[m] - diag[i][m] - diag[j][m]);
                h[(i, j)] = mixed;
                h[(j, i)] = mixed;
            }
        }
    }
    Ok(InverseJet { v0: v0.clone(), j_inv, h_inv })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadmap::refmaps::m2;
    use approx::assert_relative_eq;

    fn v2(a: f64, b: f64) -> DVector<f64> {
        DVector::from_row_slice(&[a, b])
    }

    #[test]
    fn tangent_reference_values() {
        let f = m2();
        let v = v2(2.0, 0.5);
        let vdot = preimage_tangent(&f, &v, &v2(1.0, 0.0)).unwrap();
        assert_relative_eq!(vdot[0], 4.0 / 15.0, epsilon = 1e-12);
        assert_relative_eq!(vdot[1], -1.0 / 15.0, epsilon = 1e-12);
        assert!(preimage_tangent(&f, &v, &v2(0.0, 0.0)).unwrap().norm() < 1e-15);
        // Definitional residual.
        let pdot = v2(0.3, -0.8);
        let x = preimage_tangent(&f, &v, &pdot).unwrap();
        assert!((f.jacobian(&v).unwrap() * x - pdot).norm() < 1e-10);
    }

    #[test]
    fn tangent_rejects_singular_points() {
        let f = m2();
        let r = preimage_tangent(&f, &v2(1.0, 1.0), &v2(1.0, 0.0));
        assert!(matches!(r, Err(Error::SingularSystem { .. })));
    }

    #[test]
    fn second_derivative_reference_values() {
        let f = m2();
        let v = v2(2.0, 0.5);
        // Straight preimage: pddot = h(u, u) gives vddot = 0.
        let u = v2(0.7, -0.2);
        let huu = f.hessian_apply(&u, &u).unwrap();
        assert!(preimage_second_derivative(&f, &v, &u, &huu).unwrap().norm() < 1e-12);
        // vdot = e1, pddot = 0: vddot = -DF^{-1} (2, 0).
        let vddot = preimage_second_derivative(&f, &v, &v2(1.0, 0.0), &v2(0.0, 0.0)).unwrap();
        assert_relative_eq!(vddot[0], -8.0 / 15.0, epsilon = 1e-12);
        assert_relative_eq!(vddot[1], 2.0 / 15.0, epsilon = 1e-12);
    }

    #[test]
    fn second_derivative_matches_finite_differences() {
        let f = m2();
        // Parameterize p(t) = F(v0) + t pdot + (t^2/2) pddot and trace the
        // preimage by Newton's method; difference it at t = 0.
        let v0 = v2(1.5, 0.5);
        let p0 = f.eval(&v0).unwrap();
        let pdot = v2(0.4, 0.3);
        let pddot = v2(-0.2, 0.5);
        let preimage = |t: f64| {
            let target = &p0 + &pdot * t + &pddot * (0.5 * t * t);
            let mut v = v0.clone();
            for _ in 0..50 {
                let r = f.eval(&v).unwrap() - &target;
                if r.norm() < 1e-14 {
                    break;
                }
                let dv = f.jacobian(&v).unwrap().lu().solve(&r).unwrap();
                v -= dv;
            }
            v
        };
        let h = 1e-4;
        let fd = (preimage(h) - &v0 * 2.0 + preimage(-h)) / (h * h);
        let vdot = preimage_tangent(&f, &v0, &pdot).unwrap();
        let vddot = preimage_second_derivative(&f, &v0, &vdot, &pddot).unwrap();
        assert!((fd - &vddot).norm() < 1e-5);
    }

    #[test]
    fn jet_identity_and_symmetry() {
        let f = m2();
        let v0 = v2(1.5, 0.5);
        let jet = inverse_hessian(&f, &v0).unwrap();
        let id = &jet.j_inv * f.jacobian(&v0).unwrap();
        assert!((id - DMatrix::identity(2, 2)).norm() < 1e-8);
        for h in &jet.h_inv {
            assert!((h - h.transpose()).norm() < 1e-8);
        }
    }

    #[test]
    fn jet_matches_closed_form_inverse() {
        // Branch inverse of M2: v1 = (sqrt(p1+p2) + sqrt(p1-p2)) / 2 and
        // v2 = (sqrt(p1+p2) - sqrt(p1-p2)) / 2. At v0 = (1.5, 0.5) the
        // image is p = (2.5, 1.5), with sqrt(p1+p2) = 2, sqrt(p1-p2) = 1.
        let f = m2();
        let jet = inverse_hessian(&f, &v2(1.5, 0.5)).unwrap();
        let sp = 2.0f64;
        let sm = 1.0f64;
        let a = -1.0 / (4.0 * sp * sp * sp); // all entries of Hess sqrt(p1+p2)
        let b = 1.0 / (4.0 * sm * sm * sm); // off-diagonal of Hess sqrt(p1-p2)
        let h_plus = DMatrix::from_row_slice(2, 2, &[a, a, a, a]);
        let h_minus = DMatrix::from_row_slice(2, 2, &[-b, b, b, -b]);
        let h_v1 = (&h_plus + &h_minus) * 0.5;
        let h_v2 = (&h_plus - &h_minus) * 0.5;
        assert!((&jet.h_inv[0] - h_v1).norm() < 1e-6, "{}", jet.h_inv[0]);
        assert!((&jet.h_inv[1] - h_v2).norm() < 1e-6, "{}", jet.h_inv[1]);
    }

    #[test]
    fn chain_rule_closure() {
        // vddot from the direct solve must match the jet evaluation
        // J_inv pddot + H_inv(pdot, pdot).
        let f = m2();
        let v0 = v2(1.7, 0.2);
        let jet = inverse_hessian(&f, &v0).unwrap();
        let pdot = v2(0.9, -0.4);
        let pddot = v2(0.3, 0.6);
        let vdot = preimage_tangent(&f, &v0, &pdot).unwrap();
        let direct = preimage_second_derivative(&f, &v0, &vdot, &pddot).unwrap();
        let mut via_jet = &jet.j_inv * &pddot;
        for (m, h) in jet.h_inv.iter().enumerate() {
            via_jet[m] += pdot.dot(&(h * &pdot));
        }
        assert!((direct - via_jet).norm() < 1e-6);
    }
}
