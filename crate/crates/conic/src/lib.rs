//! Second-order cone programming with no external solver dependencies.
//!
//! Programs are stated in the standard form `min c^T x  s.t.  A x + s = b,
//! s in K`, where `K` is a product of zero, nonnegative, second-order and
//! rotated second-order cones. [`solve`] runs a primal-dual interior-point
//! method on the homogeneous self-dual embedding with Nesterov-Todd scaling,
//! returning high-accuracy solutions or infeasibility certificates.
//!
//! The sparse LDL^T machinery in [`ldl`] and the fill-reducing ordering in
//! [`order`] are exposed for reuse by downstream least-squares solvers.

pub mod cone;
pub mod equilibrate;
pub mod ldl;
pub mod order;
pub mod program;
pub mod solver;
pub mod sparse;

pub use equilibrate::{presolve_scale, ScalingData};
pub use program::{ConeBlock, ConeProgram, ConeProgramBuilder, ConeSpec, ProgramError};
pub use solver::{solve, SolveStatus, SolverError, SolverResult, SolverSettings};
pub use sparse::CscMatrix;
