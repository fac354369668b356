//! Differential-geometric computations on homogeneous quadratic power flow
//! maps `F : V -> P`, `F_i(v) = v^T A_i v`.
//!
//! The crate locates the solution space boundary (the set where `DF` is
//! singular), computes its normals and curvatures in voltage and power
//! space, inverts `F` with high precision near the boundary via two
//! splitting constructions, and traces orthogonal projections of points
//! and curves onto the boundary.
//!
//! The crate is `no_std` (allocation required); all IO, file formats and
//! the command line front end live in the companion `pfgeom` crate.

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod curvature;
pub mod error;
pub(crate) mod float;
pub mod invcalc;
pub mod inversion;
pub mod linalg;
pub mod ode;
pub mod projection;
pub mod quadmap;
pub mod spectrum;
pub mod ssb;

pub use error::{Error, Result};
pub use quadmap::QuadraticMap;
pub use spectrum::SsbSpectrum;
pub use ssb::SsbPoint;
