//! Nonlinear solution machinery shared by both discretizations.

pub mod backend;
pub mod continuation;
pub mod jacobian;
pub mod linear;
pub mod newton;

pub use backend::{Regularization, ResidualParts, SchemeBackend};
pub use continuation::{
    continuation_solve, continuation_to, existence_radius, saturation_bounds, solve_path, time_loop, ContinuationTrace,
    Ladder, RungRecord, StepRecord,
};
pub use jacobian::{dump_linearization, fd_jacobian, SparsityPattern};
pub use linear::linear_solve;
pub use newton::{newton_solve, NewtonOptions, NewtonReport};
