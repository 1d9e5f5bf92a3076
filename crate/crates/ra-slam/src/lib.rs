//! Range-aided SLAM initialization toolkit.
//!
//! Builds the measurement-graph estimation problem, lowers it to a
//! second-order cone relaxation solved to global optimality, projects the
//! relaxed rotations back to SO(d), and refines the result with a
//! Levenberg-Marquardt pass over the pose manifold. A grid-world simulator
//! and an evaluation pipeline reproduce the single- and multi-robot
//! experiment protocols.

pub mod geometry;
pub mod problem;
pub mod relaxation;

#[cfg(test)]
pub(crate) mod testutil;

pub use problem::{
    Diagnostic, Dimension, ProblemError, RaSlamProblem, RangeMeasurement,
    RelativePoseMeasurement, Solution, VariableKey,
};
pub use relaxation::{
    build_score, evaluate_relaxed_cost, extract_relaxed_solution, RelaxationError,
    RelaxedSolution, VariableLayout,
};
