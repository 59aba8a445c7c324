//! Discrete duality finite volume discretization.

pub mod mesh;
pub mod scheme;

pub use mesh::{DdfvMesh, Diamond, DiscreteField, NodeKind};
pub use scheme::DdfvScheme;
