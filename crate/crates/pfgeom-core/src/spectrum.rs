//! Smallest-magnitude eigenvalue of `DF(v)` with its right and left
//! eigenvectors (kernel and cokernel directions on the solution space
//! boundary), plus a warm-start tracker for continuation runs.

use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::quadmap::QuadraticMap;

/// Relative eigen-residual accepted for `(lambda0, k, ktilde)`.
pub const EIGEN_RESIDUAL_TOL: f64 = 1e-10;
/// A real eigenvalue must have `|Im| <= COMPLEX_TOL * scale`.
pub const COMPLEX_TOL: f64 = 1e-9;
/// Two eigenvalues closer than `SIMPLE_TOL * scale` count as a multiple one.
pub const SIMPLE_TOL: f64 = 1e-11;

/// Spectral data of `DF(v)`: the eigenvalue of smallest magnitude with its
/// unit right eigenvector `k` and unit left eigenvector `ktilde`.
///
/// On the solution space boundary `lambda0 = 0`, `k` spans the kernel and
/// `ktilde` is the power-space normal `N_P`.
#[derive(Debug, Clone)]
pub struct SsbSpectrum {
    pub lambda0: f64,
    pub k: DVector<f64>,
    pub ktilde: DVector<f64>,
}

/// Fixes the sign so that the first component above threshold is positive.
pub fn fix_sign(v: &mut DVector<f64>) {
    for x in v.iter() {
        if x.abs() > 1e-10 {
            if *x < 0.0 {
                *v *= -1.0;
            }
            return;
        }
    }
}

fn eigenvector_pair(j: &DMatrix<f64>, lambda0: f64) -> (DVector<f64>, DVector<f64>) {
    let n = j.nrows();
    let shifted = j - DMatrix::identity(n, n) * lambda0;
    let svd = shifted.svd(true, true);
    let u = svd.u.as_ref().expect("svd with u");
    let vt = svd.v_t.as_ref().expect("svd with v_t");
    // Singular values are sorted descending; the smallest belongs to the
    // eigen-directions of the shifted matrix.
    let last = n - 1;
    let k = DVector::from(vt.row(last).transpose());
    let ktilde = DVector::from(u.column(last).clone_owned());
    (k, ktilde)
}

/// Computes the spectral kernel of `DF(v)` by a dense eigensolve.
///
/// The tracked eigenvalue is the smallest-magnitude *real* eigenvalue: the
/// boundary is a real zero crossing, so a complex pair closer to the origin
/// is never the fold branch. Errors when no real eigenvalue exists or the
/// chosen one is not simple within tolerance. Sign convention: the first
/// component of `k` (and of `ktilde`) above threshold is positive.
pub fn spectral_kernel(map: &QuadraticMap, v: &DVector<f64>) -> Result<SsbSpectrum> {
    let j = map.jacobian(v)?;
    spectral_kernel_of(&j)
}

/// Same as [`spectral_kernel`] for an already-assembled Jacobian.
pub fn spectral_kernel_of(j: &DMatrix<f64>) -> Result<SsbSpectrum> {
    let scale = j.norm().max(1e-300);
    let eigs = j.clone().complex_eigenvalues();
    let mut min_idx = None;
    for (i, e) in eigs.iter().enumerate() {
        if e.im.abs() <= COMPLEX_TOL * scale
            && min_idx.is_none_or(|m: usize| e.re.abs() < eigs[m].re.abs())
        {
            min_idx = Some(i);
        }
    }
    let Some(min_idx) = min_idx else {
        let mut near = eigs[0];
        for e in eigs.iter() {
            if e.norm() < near.norm() {
                near = *e;
            }
        }
        return Err(Error::ComplexEigenvalue { real: near.re, imag: near.im });
    };
    let e0 = eigs[min_idx];
    let mut gap = f64::INFINITY;
    for (i, e) in eigs.iter().enumerate() {
        if i != min_idx {
            gap = gap.min((e - e0).norm());
        }
    }
    if gap <= SIMPLE_TOL * scale {
        return Err(Error::EigenvalueNotSimple { gap });
    }
    let lambda0 = e0.re;
    let (mut k, mut ktilde) = eigenvector_pair(j, lambda0);
    fix_sign(&mut k);
    fix_sign(&mut ktilde);
    let spectrum = SsbSpectrum { lambda0, k, ktilde };
    check_residuals(j, &spectrum, scale)?;
    Ok(spectrum)
}

fn check_residuals(j: &DMatrix<f64>, s: &SsbSpectrum, scale: f64) -> Result<()> {
    let right = (j * &s.k - &s.k * s.lambda0).norm();
    let left = (j.transpose() * &s.ktilde - &s.ktilde * s.lambda0).norm();
    let bound = EIGEN_RESIDUAL_TOL * scale;
    let residual = right.max(left);
    if residual > bound {
        return Err(Error::ResidualTooLarge { residual, bound });
    }
    Ok(())
}

/// Warm-start spectral solver for continuation: refines the previous
/// eigenpair by shifted inverse iteration, falling back to a dense solve.
///
/// Signs are kept continuous with the previously accepted pair rather than
/// re-normalized, so eigenvector derivatives stay meaningful along a path.
#[derive(Debug, Clone, Default)]
pub struct SpectralTracker {
    previous: Option<SsbSpectrum>,
}

impl SpectralTracker {
    pub fn new() -> Self {
        Self { previous: None }
    }

    pub fn seed(&mut self, s: SsbSpectrum) {
        self.previous = Some(s);
    }

    pub fn compute(&mut self, map: &QuadraticMap, v: &DVector<f64>) -> Result<SsbSpectrum> {
        let j = map.jacobian(v)?;
        self.compute_from_jacobian(&j)
    }

    /// Same as [`compute`](Self::compute) for a caller that already holds the
    /// Jacobian; avoids rebuilding it when many nearby evaluations share
    /// structure (e.g. finite-difference sweeps).
    pub fn compute_from_jacobian(&mut self, j: &DMatrix<f64>) -> Result<SsbSpectrum> {
        let scale = j.norm().max(1e-300);
        if let Some(prev) = self.previous.clone() {
            if let Ok(s) = refine(&j, prev, scale) {
                self.previous = Some(s.clone());
                return Ok(s);
            }
        }
        let mut s = spectral_kernel_of(&j)?;
        if let Some(prev) = &self.previous {
            if s.k.dot(&prev.k) < 0.0 {
                s.k *= -1.0;
            }
            if s.ktilde.dot(&prev.ktilde) < 0.0 {
                s.ktilde *= -1.0;
            }
        }
        self.previous = Some(s.clone());
        Ok(s)
    }
}

fn refine(j: &DMatrix<f64>, prev: SsbSpectrum, scale: f64) -> Result<SsbSpectrum> {
    let n = j.nrows();
    let mut lambda = prev.lambda0;
    let mut k = prev.k.clone();
    let mut ktilde = prev.ktilde.clone();
    for _ in 0..6 {
        // Regularize the shift a hair off the eigenvalue so the solve is
        // well-posed even exactly on the boundary.
        let shift = lambda + 1e-13 * scale;
        let shifted = j - DMatrix::identity(n, n) * shift;
        let lu = shifted.clone().lu();
        let xr = lu.solve(&k);
        let xl = shifted.transpose().lu().solve(&ktilde);
        let (xr, xl) = match (xr, xl) {
            (Some(a), Some(b)) => (a, b),
            _ => return Err(Error::SingularSystem { condition: f64::INFINITY }),
        };
        k = xr.normalize();
        ktilde = xl.normalize();
        if k.dot(&prev.k) < 0.0 {
            k *= -1.0;
        }
        if ktilde.dot(&prev.ktilde) < 0.0 {
            ktilde *= -1.0;
        }
        let denom = ktilde.dot(&k);
        if denom.abs() < 1e-8 {
            return Err(Error::NoConvergence { iterations: 6, residual: denom.abs() });
        }
        lambda = ktilde.dot(&(j * &k)) / denom;
        let s = SsbSpectrum { lambda0: lambda, k: k.clone(), ktilde: ktilde.clone() };
        if check_residuals(j, &s, scale).is_ok() {
            return Ok(s);
        }
    }
    Err(Error::NoConvergence { iterations: 6, residual: f64::NAN })
}

/// Kernel dimension of `DF(v)`: the number of singular values below
/// `tol * sigma_max`. A point is a regular boundary point when the
/// dimension is exactly one.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Regularity {
    pub kernel_dim: usize,
    pub is_regular: bool,
}

pub fn regularity(map: &QuadraticMap, v: &DVector<f64>, tol: f64) -> Result<Regularity> {
    let j = map.jacobian(v)?;
    let sv = j.svd(false, false).singular_values;
    let smax = sv.max();
    let kernel_dim = if smax == 0.0 {
        sv.len()
    } else {
        sv.iter().filter(|s| **s < tol * smax).count()
    };
    Ok(Regularity { kernel_dim, is_regular: kernel_dim == 1 })
}

/// Sign of `det DF(v)` computed stably via LU (the raw determinant
/// overflows for large networks).
pub fn jacobian_det_sign(map: &QuadraticMap, v: &DVector<f64>) -> Result<f64> {
    let j = map.jacobian(v)?;
    let n = j.nrows();
    let lu = j.lu();
    let mut sign = lu.p().determinant::<f64>();
    let u = lu.u();
    for i in 0..n {
        let d = u[(i, i)];
        if d == 0.0 {
            return Ok(0.0);
        }
        if d < 0.0 {
            sign = -sign;
        }
    }
    Ok(sign)
}

/// Eigenvalues of `DF(v)` as (re, im) pairs, for diagnostics.
pub fn jacobian_eigenvalues(map: &QuadraticMap, v: &DVector<f64>) -> Result<Vec<(f64, f64)>> {
    let j = map.jacobian(v)?;
    Ok(j.complex_eigenvalues().iter().map(|e| (e.re, e.im)).collect())
}
