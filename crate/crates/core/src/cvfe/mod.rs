//! Control volume finite element discretization on triangles.

pub mod mesh;
pub mod scheme;

pub use mesh::{CvfeMesh, Triangle, TriangleSplit};
pub use scheme::CvfeScheme;
