//! Small dense linear algebra helpers shared by the geometry modules.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Orthonormal basis of the orthogonal complement of a unit vector,
/// returned as the columns of an `n x (n-1)` matrix.
///
/// Built from the Householder reflector mapping `e_1` to `u`, so the
/// result is deterministic in `u`.
pub fn orthogonal_complement(u: &DVector<f64>) -> DMatrix<f64> {
    let n = u.len();
    let mut h = DMatrix::identity(n, n);
    let sign = if u[0] >= 0.0 { 1.0 } else { -1.0 };
    let mut w = u.clone();
    w[0] += sign;
    let denom = w.norm_squared();
    if denom > 0.0 {
        h -= (&w * w.transpose()) * (2.0 / denom);
    }
    // Column 1 of h is -sign * u; the remaining columns span its complement.
    let mut basis = DMatrix::zeros(n, n - 1);
    basis.copy_from(&h.columns(1, n - 1));
    basis
}

/// Crude condition estimate from an LU factorization: the ratio of the
/// largest to smallest pivot magnitude.
pub fn lu_condition_estimate(lu: &nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>) -> f64 {
    let u = lu.u();
    let m = u.nrows().min(u.ncols());
    let mut max = 0.0f64;
    let mut min = f64::INFINITY;
    for i in 0..m {
        let d = u[(i, i)].abs();
        max = max.max(d);
        min = min.min(d);
    }
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Solves a square system by LU, falling back to a truncated-SVD
/// pseudo-inverse when the pivots indicate near-singularity.
///
/// Returns the solution together with the LU condition estimate.
pub fn solve_square(
    a: DMatrix<f64>,
    b: &DVector<f64>,
    cond_limit: f64,
) -> Result<(DVector<f64>, f64)> {
    let lu = a.clone().lu();
    let cond = lu_condition_estimate(&lu);
    if cond < cond_limit {
        if let Some(x) = lu.solve(b) {
            return Ok((x, cond));
        }
    }
    let svd = a.svd(true, true);
    let smax = svd.singular_values.max();
    let x = svd
        .solve(b, smax * 1e-14)
        .map_err(|_| Error::SingularSystem { condition: cond })?;
    Ok((x, cond))
}

/// Least-squares solution of a (possibly overdetermined) system via SVD,
/// together with the residual norm `|a x - b|`.
pub fn least_squares(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<(DVector<f64>, f64)> {
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let x = svd
        .solve(b, smax * 1e-13)
        .map_err(|_| Error::SingularSystem { condition: f64::INFINITY })?;
    let residual = (a * &x - b).norm();
    Ok((x, residual))
}

/// LU factorization of the bordered matrix
///
/// ```text
/// [ B    -b ]
/// [ c^T   0 ]
/// ```
///
/// reused across many right-hand sides (the eigen-derivative systems share
/// one such matrix for all coordinate directions).
pub struct BorderedSolver {
    lu: nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
    n: usize,
}

impl BorderedSolver {
    pub fn new(b: &DMatrix<f64>, border_col: &DVector<f64>, border_row: &DVector<f64>) -> Result<Self> {
        let n = b.nrows();
        let mut m = DMatrix::zeros(n + 1, n + 1);
        m.view_mut((0, 0), (n, n)).copy_from(b);
        for i in 0..n {
            m[(i, n)] = -border_col[i];
            m[(n, i)] = border_row[i];
        }
        let lu = m.lu();
        if lu_condition_estimate(&lu) > 1e15 {
            return Err(Error::SingularSystem { condition: lu_condition_estimate(&lu) });
        }
        Ok(Self { lu, n })
    }

    /// Solves `B x - mu b = rhs_top`, `c^T x = rhs_bottom`; returns `(x, mu)`.
    pub fn solve(&self, rhs_top: &DVector<f64>, rhs_bottom: f64) -> Result<(DVector<f64>, f64)> {
        let mut rhs = DVector::zeros(self.n + 1);
        rhs.rows_mut(0, self.n).copy_from(rhs_top);
        rhs[self.n] = rhs_bottom;
        let sol = self
            .lu
            .solve(&rhs)
            .ok_or(Error::SingularSystem { condition: f64::INFINITY })?;
        let x = DVector::from(sol.rows(0, self.n).clone_owned());
        Ok((x, sol[self.n]))
    }
}

/// Solves the generalized symmetric eigenproblem `L x = kappa g x` with `g`
/// positive definite, via the Cholesky factor of `g`.
///
/// Returns pairs sorted by eigenvalue descending; eigenvectors are
/// g-orthonormal.
pub fn generalized_symmetric_eigen(
    l: &DMatrix<f64>,
    g: &DMatrix<f64>,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let chol = g
        .clone()
        .cholesky()
        .ok_or(Error::SingularSystem { condition: f64::INFINITY })?;
    let r = chol.l();
    // Transform to the standard problem R^-1 L R^-T.
    let n = l.nrows();
    let mut m = l.clone();
    // m <- R^-1 m
    for j in 0..n {
        let mut col = m.column(j).clone_owned();
        r.solve_lower_triangular_mut(&mut col);
        m.column_mut(j).copy_from(&col);
    }
    // m <- m R^-T, i.e. solve on the right: (R^-1 m^T)^T
    let mut mt = m.transpose();
    for j in 0..n {
        let mut col = mt.column(j).clone_owned();
        r.solve_lower_triangular_mut(&mut col);
        mt.column_mut(j).copy_from(&col);
    }
    let sym = (mt.transpose() + &mt) * 0.5;
    let eig = sym.symmetric_eigen();
    // Back-transform eigenvectors: x = R^-T y, and sort descending.
    let mut order: alloc::vec::Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .unwrap_or(core::cmp::Ordering::Equal)
    });
    let mut values = DVector::zeros(n);
    let mut vectors = DMatrix::zeros(n, n);
    let rt = r.transpose();
    for (slot, &idx) in order.iter().enumerate() {
        values[slot] = eig.eigenvalues[idx];
        let mut y = eig.eigenvectors.column(idx).clone_owned();
        rt.solve_upper_triangular_mut(&mut y);
        vectors.column_mut(slot).copy_from(&y);
    }
    Ok((values, vectors))
}

extern crate alloc;
