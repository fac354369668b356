use core::fmt;

/// Errors produced by the numerical routines in this crate.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Operand dimensions do not agree.
    DimensionMismatch { expected: usize, got: usize },
    /// A matrix entry or vector coordinate is NaN or infinite.
    NonFinite,
    /// The smallest-magnitude eigenvalue of `DF` is part of a complex
    /// conjugate pair; the spectral routines refuse to guess.
    ComplexEigenvalue { real: f64, imag: f64 },
    /// The smallest-magnitude eigenvalue is not simple within tolerance.
    EigenvalueNotSimple { gap: f64 },
    /// A linear system was singular or too ill-conditioned to solve.
    SingularSystem { condition: f64 },
    /// An iteration failed to converge.
    NoConvergence { iterations: usize, residual: f64 },
    /// No determinant sign change was found along a search ray.
    NoBracket { t_max: f64 },
    /// The kernel of `DF` has dimension greater than one.
    KernelNotSimple { kernel_dim: usize },
    /// A gradient that must not vanish vanished.
    VanishingGradient,
    /// The fold coefficient `k^T (HF) k` is numerically zero.
    DegenerateFold,
    /// A residual exceeded its acceptance bound.
    ResidualTooLarge { residual: f64, bound: f64 },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::DimensionMismatch { expected, got } => {
                write!(f, "dimension mismatch: expected {expected}, got {got}")
            }
            Error::NonFinite => write!(f, "non-finite entry in input"),
            Error::ComplexEigenvalue { real, imag } => write!(
                f,
                "smallest-magnitude eigenvalue is complex: {real} + {imag}i"
            ),
            Error::EigenvalueNotSimple { gap } => {
                write!(f, "smallest-magnitude eigenvalue is not simple (gap {gap:.3e})")
            }
            Error::SingularSystem { condition } => {
                write!(f, "singular or ill-conditioned system (condition ~{condition:.3e})")
            }
            Error::NoConvergence { iterations, residual } => write!(
                f,
                "no convergence after {iterations} iterations (residual {residual:.3e})"
            ),
            Error::NoBracket { t_max } => {
                write!(f, "no determinant sign change up to t = {t_max:.3e}")
            }
            Error::KernelNotSimple { kernel_dim } => {
                write!(f, "kernel dimension {kernel_dim} > 1")
            }
            Error::VanishingGradient => write!(f, "gradient of lambda_0 vanished"),
            Error::DegenerateFold => write!(f, "degenerate fold: k^T (HF) k is zero"),
            Error::ResidualTooLarge { residual, bound } => {
                write!(f, "residual {residual:.3e} exceeds bound {bound:.3e}")
            }
        }
    }
}

impl core::error::Error for Error {}

pub type Result<T> = core::result::Result<T, Error>;
