//! Divergence- and curl-conforming virtual element spaces on polygons and
//! polyhedra: DOF layouts, dimension counts, DOF-only projectors and the
//! discrete de Rham complexes they form.

pub mod complex;
pub mod error;
pub mod geom;
pub mod integrate;
pub mod linalg;
pub mod meshes;
pub mod poly;
pub mod spaces2d;
pub mod spaces3d;

pub use error::{Result, VemError};
