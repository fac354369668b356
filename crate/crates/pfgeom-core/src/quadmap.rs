//! Homogeneous quadratic maps `F : R^n -> R^n`, `F_i(v) = v^T A_i v`,
//! their Jacobians and (constant) Hessians.
//!
//! Every `A_i` is stored symmetrized, so the Jacobian has rows `2 v^T A_i`
//! and the two algebraic identities
//!
//! * `(DF(x)) v = (DF(v)) x`
//! * `u^T (HF) w = (DF(u)) w`
//!
//! hold exactly. A map may additionally carry an affine part (row vectors
//! `b_i` and constants `c_i`); this arises from slack-bus elimination and
//! disables the identities that rely on homogeneity.

use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// A quadratic map with components `F_i(v) = v^T A_i v + b_i . v + c_i`.
///
/// Immutable after construction; all operations are pure.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticMap {
    n: usize,
    mats: Vec<DMatrix<f64>>,
    /// Row `i` is `b_i^T`; `None` for a homogeneous map.
    linear: Option<DMatrix<f64>>,
    constant: Option<DVector<f64>>,
}

impl QuadraticMap {
    /// Builds a homogeneous map from `n` coefficient matrices of size `n x n`.
    ///
    /// Inputs are symmetrized as `(M + M^T) / 2`, which leaves the quadratic
    /// form `v^T M v` unchanged.
    pub fn from_matrices(mats: Vec<DMatrix<f64>>) -> Result<Self> {
        let n = mats.len();
        let mut sym = Vec::with_capacity(n);
        for m in &mats {
            if m.nrows() != n || m.ncols() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: m.nrows().max(m.ncols()),
                });
            }
            if m.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite);
            }
            sym.push((m + m.transpose()) * 0.5);
        }
        Ok(Self { n, mats: sym, linear: None, constant: None })
    }

    /// Builds a map with an affine part: `F_i(v) = v^T A_i v + b_i . v + c_i`
    /// where `linear` has rows `b_i^T`.
    pub fn from_parts(
        mats: Vec<DMatrix<f64>>,
        linear: DMatrix<f64>,
        constant: DVector<f64>,
    ) -> Result<Self> {
        let n = mats.len();
        if linear.nrows() != n || linear.ncols() != n || constant.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: linear.nrows() });
        }
        if linear.iter().chain(constant.iter()).any(|x| !x.is_finite()) {
            return Err(Error::NonFinite);
        }
        let mut map = Self::from_matrices(mats)?;
        let homogeneous =
            linear.iter().all(|x| *x == 0.0) && constant.iter().all(|x| *x == 0.0);
        if !homogeneous {
            map.linear = Some(linear);
            map.constant = Some(constant);
        }
        Ok(map)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// True when the map is a pure quadratic form (no affine part).
    pub fn is_homogeneous(&self) -> bool {
        self.linear.is_none()
    }

    pub fn matrices(&self) -> &[DMatrix<f64>] {
        &self.mats
    }

    pub fn linear_part(&self) -> Option<&DMatrix<f64>> {
        self.linear.as_ref()
    }

    pub fn constant_part(&self) -> Option<&DVector<f64>> {
        self.constant.as_ref()
    }

    fn check_dim(&self, v: &DVector<f64>) -> Result<()> {
        if v.len() != self.n {
            return Err(Error::DimensionMismatch { expected: self.n, got: v.len() });
        }
        Ok(())
    }

    /// Evaluates `F(v)`.
    pub fn eval(&self, v: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_dim(v)?;
        let mut out = DVector::zeros(self.n);
        for (i, a) in self.mats.iter().enumerate() {
            out[i] = (a * v).dot(v);
        }
        if let Some(lin) = &self.linear {
            out += lin * v;
        }
        if let Some(c) = &self.constant {
            out += c;
        }
        Ok(out)
    }

    /// Jacobian `DF(v)` with rows `2 v^T A_i` (plus `b_i^T` if affine).
    pub fn jacobian(&self, v: &DVector<f64>) -> Result<DMatrix<f64>> {
        self.check_dim(v)?;
        let mut j = self.jacobian_quadratic(v);
        if let Some(lin) = &self.linear {
            j += lin;
        }
        Ok(j)
    }

    /// The matrix with rows `2 u^T A_i` (the quadratic part of the Jacobian).
    ///
    /// For a homogeneous map this equals `DF(u)`; it also equals the Hessian
    /// contraction `u^T (HF)`, so `jacobian_quadratic(u) * w` is the bilinear
    /// Hessian application for any map.
    pub fn jacobian_quadratic(&self, u: &DVector<f64>) -> DMatrix<f64> {
        let mut j = DMatrix::zeros(self.n, self.n);
        for (i, a) in self.mats.iter().enumerate() {
            let row = a * u * 2.0;
            j.row_mut(i).copy_from(&row.transpose());
        }
        j
    }

    /// Bilinear Hessian application: component `i` is `2 u^T A_i w`.
    pub fn hessian_apply(&self, u: &DVector<f64>, w: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_dim(u)?;
        self.check_dim(w)?;
        let mut out = DVector::zeros(self.n);
        for (i, a) in self.mats.iter().enumerate() {
            out[i] = 2.0 * (a * w).dot(u);
        }
        Ok(out)
    }

    /// The contraction `S(y) = sum_m y_m A_m`.
    ///
    /// Satisfies `(S(y) v)_i = y^T (d DF / d v_i) v / 2`; used for the
    /// eigenvalue gradient and for the power-space second fundamental form.
    pub fn contract_components(&self, y: &DVector<f64>) -> DMatrix<f64> {
        let mut s = DMatrix::zeros(self.n, self.n);
        for (m, a) in self.mats.iter().enumerate() {
            if y[m] != 0.0 {
                s += a * y[m];
            }
        }
        s
    }

    /// `det DF(v)`.
    pub fn jacobian_det(&self, v: &DVector<f64>) -> Result<f64> {
        Ok(self.jacobian(v)?.lu().determinant())
    }
}

/// Analytic reference maps used across the test suites and CLI examples.
pub mod refmaps {
    use super::*;
    use alloc::vec;

    /// `F(v) = (v1^2, v2^2)`; the singular set is the pair of axes.
    pub fn m1() -> QuadraticMap {
        QuadraticMap::from_matrices(vec![
            DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]),
            DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, 1.0]),
        ])
        .unwrap()
    }

    /// `F(v) = (v1^2 + v2^2, 2 v1 v2)`; the singular set is `v2 = +/- v1`.
    pub fn m2() -> QuadraticMap {
        QuadraticMap::from_matrices(vec![
            DMatrix::identity(2, 2),
            DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]),
        ])
        .unwrap()
    }
}
