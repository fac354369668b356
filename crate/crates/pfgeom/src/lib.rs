//! IO companion to `pfgeom-core`: network case ingestion (IEEE CDF and a
//! native JSON schema), file formats for maps and boundary points, seeded
//! experiment harness, and the building blocks of the `pfgeom` CLI.

pub mod harness;
pub mod netio;
pub mod serialize;
pub mod slice;

pub use pfgeom_core as core;
