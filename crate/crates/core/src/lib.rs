//! Implicit finite volume schemes (DDFV and CVFE) for compressible,
//! immiscible two-phase Darcy flow, solved through an (ε, η) regularization
//! continuation, together with numerical checks of the structural properties
//! of the schemes.

pub mod config;
pub mod cvfe;
pub mod ddfv;
pub mod error;
pub mod fluid;
pub mod geometry;
pub mod medium;
pub mod meshio;
pub mod quadrature;
pub mod solver;
pub mod state;
pub mod verify;

pub use error::{Error, Result};
pub use fluid::{FluidModel, FluidParams, PhaseId};
pub use solver::backend::{Regularization, ResidualParts, SchemeBackend};
pub use state::State;
