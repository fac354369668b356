//! Second-order geometry of the solution space boundary: kernel
//! derivatives along tangent directions, normal curvatures, the
//! Weingarten map on the tangent basis, the power-space shape operator
//! and principal curvatures.

use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{generalized_symmetric_eigen, least_squares, solve_square};
use crate::quadmap::QuadraticMap;
use crate::ssb::SsbPoint;

/// Residual bound (relative to the Jacobian scale) for the consistent
/// least-squares kernel-derivative system.
pub const KERNEL_DERIVATIVE_TOL: f64 = 1e-9;

/// Default relative regularization for the power-space shape system;
/// the absolute value used is `eps * trace(g) / n`.
pub const DEFAULT_SHAPE_EPSILON: f64 = 1e-6;

/// First fundamental form `g` and second fundamental form `L` of the
/// boundary at a point, expressed on the columns of `basis`.
///
/// `L` carries the convention `L(cdot, cdot) = n_v . cddot` for arc-length
/// boundary curves, so normal curvatures are values of the quadratic form.
#[derive(Debug, Clone)]
pub struct FundamentalForms {
    pub g: DMatrix<f64>,
    pub l: DMatrix<f64>,
    pub basis: DMatrix<f64>,
}

/// Shape operator on the tangent basis; `w = g^{-1} L`, so `w cdot . cdot`
/// is the normal curvature and `w` equals the negative differential of the
/// unit normal restricted to the tangent space.
#[derive(Debug, Clone)]
pub struct WeingartenMap {
    pub w: DMatrix<f64>,
}

/// A principal curvature with its tangent direction in ambient coordinates.
#[derive(Debug, Clone)]
pub struct PrincipalCurvature {
    pub kappa: f64,
    pub direction: DVector<f64>,
}

/// Shares the factorizations behind the kernel-derivative and curvature
/// systems across many directions at one boundary point: both systems
/// keep the same matrix and only the right-hand side changes.
pub struct CurvatureSolver<'a> {
    map: &'a QuadraticMap,
    point: &'a SsbPoint,
    jac: DMatrix<f64>,
    /// Thin QR of the stacked system `[DF(q); k^T]`.
    q_thin: DMatrix<f64>,
    r: DMatrix<f64>,
    r_ok: bool,
    /// LU of the (n+1) curvature system with ansatz `cddot = kappa n_v`.
    curv_lu: nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
}

impl<'a> CurvatureSolver<'a> {
    pub fn new(map: &'a QuadraticMap, point: &'a SsbPoint) -> Result<Self> {
        let n = map.dim();
        let jac = map.jacobian(&point.q)?;
        let k = &point.spectrum.k;

        let mut stacked = DMatrix::zeros(n + 1, n);
        stacked.view_mut((0, 0), (n, n)).copy_from(&jac);
        for j in 0..n {
            stacked[(n, j)] = k[j];
        }
        let qr = stacked.qr();
        let q_thin = qr.q();
        let r = qr.r();
        let mut r_min = f64::INFINITY;
        let mut r_max = 0.0f64;
        for i in 0..n {
            r_min = r_min.min(r[(i, i)].abs());
            r_max = r_max.max(r[(i, i)].abs());
        }
        let r_ok = r_min > 1e-12 * r_max;

        // Differentiating DF(c)k = 0 twice with cddot = kappa n_v gives a
        // square system in (kappa, kddot); factor it once per point.
        let hnk = map.hessian_apply(&point.n_v, k)?;
        let mut sys = DMatrix::zeros(n + 1, n + 1);
        sys.view_mut((0, 0), (n, 1)).copy_from(&hnk);
        sys.view_mut((0, 1), (n, n)).copy_from(&jac);
        for j in 0..n {
            sys[(n, 1 + j)] = k[j];
        }
        let curv_lu = sys.lu();

        Ok(Self { map, point, jac, q_thin, r, r_ok, curv_lu })
    }

    /// Derivative of the unit kernel along the tangent direction `cdot`,
    /// from the consistent least-squares system
    /// `[DF(q); k^T] kdot = [-(DF(k)) cdot; 0]`.
    pub fn kernel_derivative(&self, cdot: &DVector<f64>) -> Result<DVector<f64>> {
        let n = self.map.dim();
        let rhs_top = -self.map.hessian_apply(&self.point.spectrum.k, cdot)?;
        let mut rhs = DVector::zeros(n + 1);
        rhs.rows_mut(0, n).copy_from(&rhs_top);

        let (kdot, residual) = if self.r_ok {
            let y = self.q_thin.transpose() * &rhs;
            let x = self
                .r
                .clone()
                .solve_upper_triangular(&y)
                .ok_or(Error::SingularSystem { condition: f64::INFINITY })?;
            let mut res = -rhs;
            res.rows_mut(0, n).axpy(1.0, &(&self.jac * &x), 1.0);
            for j in 0..n {
                res[n] += self.point.spectrum.k[j] * x[j];
            }
            (x, res.norm())
        } else {
            let mut stacked = DMatrix::zeros(n + 1, n);
            stacked.view_mut((0, 0), (n, n)).copy_from(&self.jac);
            for j in 0..n {
                stacked[(n, j)] = self.point.spectrum.k[j];
            }
            least_squares(&stacked, &rhs)?
        };

        let bound = KERNEL_DERIVATIVE_TOL * self.jac.norm().max(1.0) * cdot.norm().max(1.0);
        if residual > bound {
            return Err(Error::ResidualTooLarge { residual, bound });
        }
        Ok(kdot)
    }

    /// Normal curvature and second kernel derivative in the direction
    /// `cdot` with `kdot` from [`CurvatureSolver::kernel_derivative`].
    ///
    /// For unit `cdot` the returned `kappa` is the normal curvature; for
    /// general `cdot` it is the quadratic-form extension.
    pub fn curve_second_derivative(
        &self,
        cdot: &DVector<f64>,
        kdot: &DVector<f64>,
    ) -> Result<(f64, DVector<f64>)> {
        let n = self.map.dim();
        let mut rhs = DVector::zeros(n + 1);
        let top = self.map.hessian_apply(cdot, kdot)? * -2.0;
        rhs.rows_mut(0, n).copy_from(&top);
        rhs[n] = -kdot.dot(kdot);
        let sol = self
            .curv_lu
            .solve(&rhs)
            .ok_or(Error::SingularSystem { condition: f64::INFINITY })?;
        let kappa = sol[0];
        let kddot = DVector::from(sol.rows(1, n).clone_owned());
        Ok((kappa, kddot))
    }
}

/// Stand-alone kernel derivative; see [`CurvatureSolver::kernel_derivative`].
pub fn kernel_derivative(
    map: &QuadraticMap,
    q: &SsbPoint,
    cdot: &DVector<f64>,
) -> Result<DVector<f64>> {
    CurvatureSolver::new(map, q)?.kernel_derivative(cdot)
}

/// Stand-alone curvature solve; see [`CurvatureSolver::curve_second_derivative`].
pub fn curve_second_derivative(
    map: &QuadraticMap,
    q: &SsbPoint,
    cdot: &DVector<f64>,
    kdot: &DVector<f64>,
) -> Result<(f64, DVector<f64>)> {
    CurvatureSolver::new(map, q)?.curve_second_derivative(cdot, kdot)
}

/// Normal curvature by Meunier's theorem: with the ansatz
/// `cddot = kappa n_v` the normal component is `kappa` itself.
pub fn normal_curvature(_q: &SsbPoint, kappa: f64) -> f64 {
    kappa
}

/// Assembles the fundamental forms and the Weingarten map on the tangent
/// basis from normal curvatures of the basis directions and their pairwise
/// sums: `L_ii = kappa_n(c_i)` and `L_ii + 2 L_ij + L_jj = kappa_n(c_i + c_j)`.
pub fn weingarten_voltage(
    map: &QuadraticMap,
    q: &SsbPoint,
) -> Result<(FundamentalForms, WeingartenMap)> {
    let basis = q.tangent_basis();
    let m = basis.ncols();
    let solver = CurvatureSolver::new(map, q)?;

    let dirs: Vec<DVector<f64>> = (0..m).map(|i| basis.column(i).clone_owned()).collect();
    let kdots: Vec<DVector<f64>> = dirs
        .iter()
        .map(|d| solver.kernel_derivative(d))
        .collect::<Result<_>>()?;

    let mut l = DMatrix::zeros(m, m);
    for i in 0..m {
        let (kappa, _) = solver.curve_second_derivative(&dirs[i], &kdots[i])?;
        l[(i, i)] = kappa;
    }
    for i in 0..m {
        for j in (i + 1)..m {
            let dir = &dirs[i] + &dirs[j];
            let kdot = &kdots[i] + &kdots[j];
            let (kappa_sum, _) = solver.curve_second_derivative(&dir, &kdot)?;
            let lij = 0.5 * (kappa_sum - l[(i, i)] - l[(j, j)]);
            l[(i, j)] = lij;
            l[(j, i)] = lij;
        }
    }

    let g = basis.transpose() * &basis;
    let w = g
        .clone()
        .lu()
        .solve(&l)
        .ok_or(Error::SingularSystem { condition: f64::INFINITY })?;
    Ok((FundamentalForms { g, l, basis }, WeingartenMap { w }))
}

/// Second derivative of the image curve `F(c(t))`:
/// `(DF(cdot)) cdot + (DF(c)) cddot` (exact for quadratic maps).
pub fn image_curve_second_derivative(
    map: &QuadraticMap,
    q: &SsbPoint,
    cdot: &DVector<f64>,
    cddot: &DVector<f64>,
) -> Result<DVector<f64>> {
    Ok(map.hessian_apply(cdot, cdot)? + map.jacobian(&q.q)? * cddot)
}

/// Power-space shape operator applied to one tangent direction: builds the
/// pullback metric `g = DF^T DF` and the constant form
/// `Ltilde_ij = 2 sum_m (A_m)_ij (n_p)_m`, solves the kernel-regularized
/// system `(g + eps k k^T) x = (I - k k^T) Ltilde cdot` and pushes `x`
/// forward to power space as `DF x`.
///
/// `epsilon` is relative; the regularization actually added is
/// `epsilon * trace(g) / n`.
pub fn shape_apply_power(
    map: &QuadraticMap,
    q: &SsbPoint,
    cdot: &DVector<f64>,
    epsilon: f64,
) -> Result<DVector<f64>> {
    let n = map.dim();
    let jac = map.jacobian(&q.q)?;
    let g = jac.transpose() * &jac;
    let ltilde = map.contract_components(&q.spectrum.ktilde) * 2.0;
    let k = &q.spectrum.k;

    let lc = &ltilde * cdot;
    let rhs = &lc - k * k.dot(&lc);
    let eps_abs = epsilon * g.trace() / n as f64;
    let a = &g + k * k.transpose() * eps_abs;
    let (x, cond) = solve_square(a, &rhs, 1e12)?;
    if cond > 1e12 {
        return Err(Error::SingularSystem { condition: cond });
    }
    Ok(jac * x)
}

/// All principal curvatures from the generalized symmetric eigenproblem
/// `L x = kappa g x`, sorted descending; directions are returned in
/// ambient coordinates and are g-orthonormal on the basis.
pub fn principal_curvatures(forms: &FundamentalForms) -> Result<Vec<PrincipalCurvature>> {
    let (kappas, vectors) = generalized_symmetric_eigen(&forms.l, &forms.g)?;
    let mut out = Vec::with_capacity(kappas.len());
    for i in 0..kappas.len() {
        let coords = vectors.column(i).clone_owned();
        out.push(PrincipalCurvature {
            kappa: kappas[i],
            direction: &forms.basis * coords,
        });
    }
    Ok(out)
}
