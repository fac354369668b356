//! Locating points on the solution space boundary and their first-order
//! spectral geometry: the eigenvalue gradient, eigenvector derivatives,
//! the voltage-space normal and the tangent basis.

use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
#[allow(unused_imports)]
use crate::float::FloatExt;
use crate::linalg::{orthogonal_complement, BorderedSolver};
use crate::quadmap::QuadraticMap;
use crate::spectrum::{fix_sign, spectral_kernel, SsbSpectrum};

/// `|lambda0| <= SSB_MEMBERSHIP_TOL * |DF|` for accepted boundary points.
pub const SSB_MEMBERSHIP_TOL: f64 = 1e-10;

/// A point on the solution space boundary with its spectral data, the
/// unnormalized gradient of `lambda0` and the unit voltage-space normal.
#[derive(Debug, Clone)]
pub struct SsbPoint {
    pub q: DVector<f64>,
    pub spectrum: SsbSpectrum,
    pub grad_lambda: DVector<f64>,
    pub n_v: DVector<f64>,
}

impl SsbPoint {
    /// Validates that `q` lies on the boundary and assembles the point's
    /// first-order geometry.
    pub fn at(map: &QuadraticMap, q: DVector<f64>) -> Result<Self> {
        let spectrum = spectral_kernel(map, &q)?;
        let scale = map.jacobian(&q)?.norm();
        if spectrum.lambda0.abs() > SSB_MEMBERSHIP_TOL * scale {
            return Err(Error::ResidualTooLarge {
                residual: spectrum.lambda0.abs(),
                bound: SSB_MEMBERSHIP_TOL * scale,
            });
        }
        Self::from_spectrum(map, q, spectrum)
    }

    /// Same as [`SsbPoint::at`] with a pre-computed spectrum (used by the
    /// continuation stepper, which tracks the spectrum incrementally).
    pub fn from_spectrum(
        map: &QuadraticMap,
        q: DVector<f64>,
        spectrum: SsbSpectrum,
    ) -> Result<Self> {
        let calc = EigenCalculus::new(map, &q, spectrum.clone())?;
        let grad_lambda = calc.grad_lambda().clone_owned();
        let n_v = normal_from_gradient(&grad_lambda)?;
        Ok(Self { q, spectrum, grad_lambda, n_v })
    }

    /// Orthonormal basis of the tangent space at this point, as the columns
    /// of an `n x (n-1)` matrix. Deterministic given the point.
    pub fn tangent_basis(&self) -> DMatrix<f64> {
        orthogonal_complement(&self.n_v)
    }
}

/// Normalizes the eigenvalue gradient into the unit voltage-space normal,
/// oriented so its first component above threshold is positive.
pub fn normal_from_gradient(grad: &DVector<f64>) -> Result<DVector<f64>> {
    let norm = grad.norm();
    if norm < 1e-14 {
        return Err(Error::VanishingGradient);
    }
    let mut n = grad / norm;
    fix_sign(&mut n);
    Ok(n)
}

/// First and second derivatives of the eigenpair `(lambda0, ktilde)` of
/// `DF(v)^T` with respect to the voltage coordinates.
///
/// All directions share one bordered factorization
///
/// ```text
/// [ DF^T - lambda0 I   -ktilde ]
/// [ ktilde^T               0   ]
/// ```
///
/// which is formed once; each direction is then a backsubstitution.
pub struct EigenCalculus<'a> {
    map: &'a QuadraticMap,
    spectrum: SsbSpectrum,
    jac: DMatrix<f64>,
    left: BorderedSolver,
    /// `S = sum_m ktilde_m A_m`; `grad lambda = 2 S k / (ktilde . k)`.
    s_mat: DMatrix<f64>,
    /// `U` has columns `A_m k`.
    u_mat: DMatrix<f64>,
    grad: DVector<f64>,
    dktilde: Vec<DVector<f64>>,
}

impl<'a> EigenCalculus<'a> {
    pub fn new(map: &'a QuadraticMap, v: &DVector<f64>, spectrum: SsbSpectrum) -> Result<Self> {
        let n = map.dim();
        let jac = map.jacobian(v)?;
        let mut b = jac.transpose();
        for i in 0..n {
            b[(i, i)] -= spectrum.lambda0;
        }
        let left = BorderedSolver::new(&b, &spectrum.ktilde, &spectrum.ktilde)?;
        let s_mat = map.contract_components(&spectrum.ktilde);
        let mut u_mat = DMatrix::zeros(n, n);
        for (m, a) in map.matrices().iter().enumerate() {
            u_mat.column_mut(m).copy_from(&(a * &spectrum.k));
        }
        let mut grad = DVector::zeros(n);
        let mut dktilde = Vec::with_capacity(n);
        for i in 0..n {
            let rhs = DVector::from(s_mat.column(i) * -2.0);
            let (x, mu) = left.solve(&rhs, 0.0)?;
            grad[i] = mu;
            dktilde.push(x);
        }
        Ok(Self { map, spectrum, jac, left, s_mat, u_mat, grad, dktilde })
    }

    pub fn grad_lambda(&self) -> &DVector<f64> {
        &self.grad
    }

    pub fn dktilde(&self, i: usize) -> &DVector<f64> {
        &self.dktilde[i]
    }

    pub fn dktilde_all(&self) -> &[DVector<f64>] {
        &self.dktilde
    }

    /// `d(DF)^T/dv_i` applied to `x`: component `l` is `2 sum_m (A_m)_{i,l} x_m`.
    fn djact_apply(&self, i: usize, x: &DVector<f64>) -> DVector<f64> {
        let n = self.map.dim();
        let mut out = DVector::zeros(n);
        for (m, a) in self.map.matrices().iter().enumerate() {
            if x[m] != 0.0 {
                out.axpy(2.0 * x[m], &DVector::from(a.row(i).transpose()), 1.0);
            }
        }
        out
    }

    /// Second derivative of the eigenpair in the coordinate pair `(i, j)`.
    ///
    /// Derived by differentiating the eigenpair equations twice; validated
    /// against finite differences rather than any printed formula.
    pub fn second(&self, i: usize, j: usize) -> Result<(f64, DVector<f64>)> {
        let ktilde_i = &self.dktilde[i];
        let ktilde_j = &self.dktilde[j];
        let mut rhs = -self.djact_apply(i, ktilde_j) - self.djact_apply(j, ktilde_i);
        rhs.axpy(self.grad[i], ktilde_j, 1.0);
        rhs.axpy(self.grad[j], ktilde_i, 1.0);
        let bottom = -ktilde_i.dot(ktilde_j);
        let (d2ktilde, d2lambda) = self.left.solve(&rhs, bottom)?;
        Ok((d2lambda, d2ktilde))
    }

    /// Full Hessian of `lambda0` in `O(n^3)`, assembled from the right and
    /// left eigenvector derivatives instead of `n^2` bordered solves.
    pub fn lambda_hessian(&self) -> Result<DMatrix<f64>> {
        let n = self.map.dim();
        let k = &self.spectrum.k;
        let ktilde = &self.spectrum.ktilde;
        let c = ktilde.dot(k);
        if c.abs() < 1e-10 {
            return Err(Error::SingularSystem { condition: 1.0 / c.abs() });
        }
        // Right eigenvector derivatives from the mirrored bordered system.
        let mut shifted = self.jac.clone();
        for i in 0..n {
            shifted[(i, i)] -= self.spectrum.lambda0;
        }
        let right = BorderedSolver::new(&shifted, k, k)?;
        let mut dk = Vec::with_capacity(n);
        for i in 0..n {
            let rhs = DVector::from(self.u_mat.row(i).transpose() * -2.0);
            let (x, _) = right.solve(&rhs, 0.0)?;
            dk.push(x);
        }
        let mut h = DMatrix::zeros(n, n);
        for i in 0..n {
            let ui = &self.u_mat * &self.dktilde[i];
            let si = &self.s_mat * &dk[i];
            let ci = self.dktilde[i].dot(k) + ktilde.dot(&dk[i]);
            for j in 0..n {
                h[(i, j)] = (2.0 / c) * (ui[j] + si[j]) - (ci / c) * self.grad[j];
            }
        }
        // Mixed partials are symmetric; average out the rounding asymmetry.
        let sym = (&h + h.transpose()) * 0.5;
        Ok(sym)
    }
}

/// Traces `v0 + t u` until `det DF` changes sign, then refines the crossing
/// by bisection and Newton iteration on the augmented system
/// `{DF(v(t)) k = 0, c^T k = 1}` in the unknowns `(t, k)`.
pub fn find_ssb_ray(
    map: &QuadraticMap,
    v0: &DVector<f64>,
    u: &DVector<f64>,
) -> Result<SsbPoint> {
    let n = map.dim();
    let point = |t: f64| v0 + u * t;
    let sign0 = crate::spectrum::jacobian_det_sign(map, v0)?;
    let mut t_lo = 0.0;
    let mut t_hi = 1e-3;
    let mut bracketed = false;
    while t_hi <= 1e6 {
        let s = crate::spectrum::jacobian_det_sign(map, &point(t_hi))?;
        if s == 0.0 || s != sign0 {
            bracketed = true;
            break;
        }
        t_lo = t_hi;
        t_hi *= 2.0;
    }
    if !bracketed {
        return Err(Error::NoBracket { t_max: 1e6 });
    }
    for _ in 0..80 {
        let mid = 0.5 * (t_lo + t_hi);
        let s = crate::spectrum::jacobian_det_sign(map, &point(mid))?;
        if s == sign0 {
            t_lo = mid;
        } else {
            t_hi = mid;
        }
        if (t_hi - t_lo) <= 1e-12 * t_hi.abs().max(1.0) {
            break;
        }
    }
    let mut t = 0.5 * (t_lo + t_hi);
    let seed = spectral_kernel(map, &point(t))?;
    let mut k = seed.k.clone();
    let c = seed.k.clone();
    // Newton on R(t, k) = [DF(v(t)) k; c^T k - 1].
    for iter in 0..50 {
        let v = point(t);
        let jac = map.jacobian(&v)?;
        let scale = jac.norm();
        let r_top = &jac * &k;
        let r_bot = c.dot(&k) - 1.0;
        let res = (r_top.norm_squared() + r_bot * r_bot).sqrt();
        if res <= 1e-13 * scale.max(1.0) {
            break;
        }
        if iter == 49 {
            return Err(Error::NoConvergence { iterations: 50, residual: res });
        }
        // d/dt DF(v0 + t u) has rows 2 u^T A_i.
        let dj_dt = map.jacobian_quadratic(u);
        let mut sys = DMatrix::zeros(n + 1, n + 1);
        sys.view_mut((0, 0), (n, 1)).copy_from(&(&dj_dt * &k));
        sys.view_mut((0, 1), (n, n)).copy_from(&jac);
        for j in 0..n {
            sys[(n, 1 + j)] = c[j];
        }
        let mut rhs = DVector::zeros(n + 1);
        rhs.rows_mut(0, n).copy_from(&(-&r_top));
        rhs[n] = -r_bot;
        let delta = sys
            .lu()
            .solve(&rhs)
            .ok_or(Error::SingularSystem { condition: f64::INFINITY })?;
        t += delta[0];
        for j in 0..n {
            k[j] += delta[1 + j];
        }
    }
    SsbPoint::at(map, point(t))
}

/// First derivatives of the eigenpair at a boundary point: the gradient of
/// `lambda0` and the directional derivatives of the cokernel, one per
/// coordinate. Convenience wrapper over [`EigenCalculus`].
pub fn eigen_derivatives(
    map: &QuadraticMap,
    q: &SsbPoint,
) -> Result<(DVector<f64>, Vec<DVector<f64>>)> {
    let calc = EigenCalculus::new(map, &q.q, q.spectrum.clone())?;
    let grad = calc.grad_lambda().clone_owned();
    let dktilde = calc.dktilde_all().to_vec();
    Ok((grad, dktilde))
}

/// Second derivative of the eigenpair in the coordinate pair `(i, j)`.
pub fn eigen_second_derivatives(
    map: &QuadraticMap,
    q: &SsbPoint,
    i: usize,
    j: usize,
) -> Result<(f64, DVector<f64>)> {
    let calc = EigenCalculus::new(map, &q.q, q.spectrum.clone())?;
    calc.second(i, j)
}

/// Unit voltage-space normal at a boundary point, recomputed from scratch.
pub fn normal_voltage(map: &QuadraticMap, q: &SsbPoint) -> Result<DVector<f64>> {
    let (grad, _) = eigen_derivatives(map, q)?;
    normal_from_gradient(&grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadmap::refmaps::{m1, m2};
    use approx::assert_relative_eq;

    fn v2(a: f64, b: f64) -> DVector<f64> {
        DVector::from_row_slice(&[a, b])
    }

    #[test]
    fn gradient_on_reference_map() {
        let f = m2();
        let p = SsbPoint::at(&f, v2(1.0, 1.0)).unwrap();
        // lambda0(v) = 2 (v1 - v2) locally, so grad = (2, -2).
        assert_relative_eq!(p.grad_lambda[0], 2.0, epsilon = 1e-9);
        assert_relative_eq!(p.grad_lambda[1], -2.0, epsilon = 1e-9);
        let r = 1.0 / 2.0f64.sqrt();
        assert_relative_eq!(p.n_v[0], r, epsilon = 1e-10);
        assert_relative_eq!(p.n_v[1], -r, epsilon = 1e-10);
        // ktilde is constant along the boundary, so its derivatives vanish.
        let calc = EigenCalculus::new(&f, &p.q, p.spectrum.clone()).unwrap();
        for i in 0..2 {
            assert!(calc.dktilde(i).norm() < 1e-9);
        }
    }

    #[test]
    fn gradient_on_diagonal_map() {
        let f = m1();
        let p = SsbPoint::at(&f, v2(0.0, 1.0)).unwrap();
        assert_relative_eq!(p.grad_lambda[0], 2.0, epsilon = 1e-9);
        assert_relative_eq!(p.grad_lambda[1], 0.0, epsilon = 1e-9);
        assert_relative_eq!(p.n_v[0], 1.0, epsilon = 1e-10);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let f = m2();
        // Off the boundary but with a real simple smallest eigenvalue.
        let v = v2(1.7, 0.4);
        let s = spectral_kernel(&f, &v).unwrap();
        let calc = EigenCalculus::new(&f, &v, s).unwrap();
        let h = 1e-5;
        for i in 0..2 {
            let mut vp = v.clone();
            let mut vm = v.clone();
            vp[i] += h;
            vm[i] -= h;
            let lp = spectral_kernel(&f, &vp).unwrap().lambda0;
            let lm = spectral_kernel(&f, &vm).unwrap().lambda0;
            assert_relative_eq!(calc.grad_lambda()[i], (lp - lm) / (2.0 * h), epsilon = 1e-5);
        }
    }

    #[test]
    fn second_derivatives_vanish_on_linear_eigenvalue() {
        let f = m2();
        let p = SsbPoint::at(&f, v2(1.0, 1.0)).unwrap();
        let calc = EigenCalculus::new(&f, &p.q, p.spectrum.clone()).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                let (d2, _) = calc.second(i, j).unwrap();
                assert!(d2.abs() < 1e-8, "d2lambda({i},{j}) = {d2}");
            }
        }
        let h = calc.lambda_hessian().unwrap();
        assert!(h.norm() < 1e-8, "hessian norm {}", h.norm());
    }

    #[test]
    fn hessian_matches_pairwise_and_finite_differences() {
        // A genuinely curved example in 3 coordinates.
        let f = QuadraticMap::from_matrices(alloc::vec![
            DMatrix::from_row_slice(3, 3, &[1.0, 0.0, 0.2, 0.0, 0.3, 0.0, 0.2, 0.0, 0.5]),
            DMatrix::from_row_slice(3, 3, &[0.0, 1.0, 0.0, 1.0, 0.0, 0.1, 0.0, 0.1, 0.4]),
            DMatrix::from_row_slice(3, 3, &[0.3, 0.0, 0.0, 0.0, 0.8, 0.2, 0.0, 0.2, 0.0]),
        ])
        .unwrap();
        let v = DVector::from_row_slice(&[1.1, 0.3, -0.4]);
        let s = spectral_kernel(&f, &v).unwrap();
        let calc = EigenCalculus::new(&f, &v, s).unwrap();
        let hess = calc.lambda_hessian().unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let (d2, _) = calc.second(i, j).unwrap();
                assert_relative_eq!(hess[(i, j)], d2, epsilon = 1e-7);
                let (d2t, _) = calc.second(j, i).unwrap();
                assert_relative_eq!(d2, d2t, epsilon = 1e-8);
            }
        }
        // Centered second finite differences of lambda0.
        let h = 1e-4;
        for i in 0..3 {
            for j in 0..3 {
                let lam = |dv_i: f64, dv_j: f64| {
                    let mut w = v.clone();
                    w[i] += dv_i;
                    w[j] += dv_j;
                    spectral_kernel(&f, &w).unwrap().lambda0
                };
                let fd = if i == j {
                    (lam(h, 0.0) - 2.0 * lam(0.0, 0.0) + lam(-h, 0.0)) / (h * h)
                } else {
                    (lam(h, h) - lam(h, -h) - lam(-h, h) + lam(-h, -h)) / (4.0 * h * h)
                };
                assert_relative_eq!(hess[(i, j)], fd, epsilon = 1e-4, max_relative = 1e-4);
            }
        }
    }

    #[test]
    fn tangent_basis_orthogonality() {
        let f = m2();
        let p = SsbPoint::at(&f, v2(1.0, 1.0)).unwrap();
        let basis = p.tangent_basis();
        assert_eq!(basis.ncols(), 1);
        let t = basis.column(0);
        assert!(t.dot(&p.n_v).abs() < 1e-12);
        let r = 1.0 / 2.0f64.sqrt();
        assert_relative_eq!(t[0].abs(), r, epsilon = 1e-12);
        assert_relative_eq!(t[1].abs(), r, epsilon = 1e-12);
    }

    #[test]
    fn ray_search_on_reference_maps() {
        let f = m2();
        let p = find_ssb_ray(&f, &v2(1.0, 0.0), &v2(0.0, 1.0)).unwrap();
        assert_relative_eq!(p.q[0], 1.0, epsilon = 1e-9);
        assert_relative_eq!(p.q[1], 1.0, epsilon = 1e-9);

        let f = m1();
        let p = find_ssb_ray(&f, &v2(1.0, 1.0), &v2(-1.0, 0.0)).unwrap();
        assert_relative_eq!(p.q[0], 0.0, epsilon = 1e-9);
        assert_relative_eq!(p.q[1], 1.0, epsilon = 1e-9);
    }

    #[test]
    fn ray_search_without_crossing() {
        // M1 from (1,1) along +e1 never crosses the axes.
        let f = m1();
        let r = find_ssb_ray(&f, &v2(1.0, 1.0), &v2(1.0, 0.0));
        assert!(matches!(r, Err(Error::NoBracket { .. })));
    }
}
