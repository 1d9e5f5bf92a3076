//! The range-aided SLAM estimation problem: a directed measurement graph
//! over pose and landmark variables, and the nonlinear least-squares cost it
//! induces.
//!
//! Relative-pose edges carry a measured rotation and translation with
//! concentration `kappa` and precision `tau`; range edges carry a measured
//! distance with standard deviation `sigma`. The total cost of a candidate
//! solution is
//!
//! ```text
//!   sum kappa_ij ||R_j - R_i Rm_ij||_F^2
//! + sum tau_ij   ||t_j - t_i - R_i tm_ij||^2
//! + sum (1/sigma_ij^2) (||t_i - t_j|| - dm_ij)^2
//! ```

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::geometry::{is_rotation, rotation_defect};

/// Ambient dimension, 2 or 3.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(try_from = "usize", into = "usize")]
pub enum Dimension {
    Two,
    Three,
}

impl Dimension {
    pub fn as_usize(self) -> usize {
        match self {
            Dimension::Two => 2,
            Dimension::Three => 3,
        }
    }
}

impl TryFrom<usize> for Dimension {
    type Error = String;

    fn try_from(value: usize) -> Result<Self, Self::Error> {
        match value {
            2 => Ok(Dimension::Two),
            3 => Ok(Dimension::Three),
            other => Err(format!("dimension must be 2 or 3, got {other}")),
        }
    }
}

impl From<Dimension> for usize {
    fn from(d: Dimension) -> usize {
        d.as_usize()
    }
}

/// Identifies a pose or landmark variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum VariableKey {
    Pose { robot: usize, time: usize },
    Landmark { index: usize },
}

impl VariableKey {
    pub fn pose(robot: usize, time: usize) -> Self {
        VariableKey::Pose { robot, time }
    }

    pub fn landmark(index: usize) -> Self {
        VariableKey::Landmark { index }
    }

    pub fn is_pose(&self) -> bool {
        matches!(self, VariableKey::Pose { .. })
    }
}

impl std::fmt::Display for VariableKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            VariableKey::Pose { robot, time } => write!(f, "P {robot} {time}"),
            VariableKey::Landmark { index } => write!(f, "L {index}"),
        }
    }
}

/// A measured relative rigid transformation between two poses.
#[derive(Debug, Clone)]
pub struct RelativePoseMeasurement {
    pub from: VariableKey,
    pub to: VariableKey,
    /// Measured relative rotation, d x d.
    pub rotation: DMatrix<f64>,
    /// Measured relative translation in the `from` frame, meters.
    pub translation: DVector<f64>,
    /// Rotation concentration.
    pub kappa: f64,
    /// Translation precision, 1/m^2.
    pub tau: f64,
}

/// A measured point-to-point distance between two variables.
#[derive(Debug, Clone)]
pub struct RangeMeasurement {
    pub from: VariableKey,
    pub to: VariableKey,
    /// Measured distance, meters. May be negative under heavy noise; the
    /// Gaussian range model permits it and rejecting would bias estimates.
    pub distance: f64,
    /// Noise standard deviation, meters.
    pub sigma: f64,
}

/// The measurement graph.
#[derive(Debug, Clone, Default)]
pub struct RaSlamProblem {
    dim: Option<Dimension>,
    pose_variables: Vec<Vec<VariableKey>>,
    landmark_variables: Vec<VariableKey>,
    relative_pose_edges: Vec<RelativePoseMeasurement>,
    range_edges: Vec<RangeMeasurement>,
}

/// A feasible estimate: rotations in SO(d) plus translations per pose, and
/// one position per landmark.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Solution {
    pub rotations: BTreeMap<VariableKey, DMatrix<f64>>,
    pub translations: BTreeMap<VariableKey, DVector<f64>>,
    pub landmark_positions: BTreeMap<VariableKey, DVector<f64>>,
}

impl Solution {
    /// Position of any variable, pose or landmark.
    pub fn position(&self, key: &VariableKey) -> Option<&DVector<f64>> {
        match key {
            VariableKey::Pose { .. } => self.translations.get(key),
            VariableKey::Landmark { .. } => self.landmark_positions.get(key),
        }
    }

    /// Apply a global rigid transform: `R_i <- R R_i`, `p <- R p + t`.
    pub fn transformed(&self, r: &DMatrix<f64>, t: &DVector<f64>) -> Solution {
        let mut out = self.clone();
        for rot in out.rotations.values_mut() {
            *rot = r * &*rot;
        }
        for p in out
            .translations
            .values_mut()
            .chain(out.landmark_positions.values_mut())
        {
            *p = r * &*p + t;
        }
        out
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProblemError {
    #[error("dimension must be set before adding variables")]
    DimensionUnset,
    #[error("variable {0} already exists")]
    DuplicateKey(String),
    #[error("pose time index {time} for robot {robot} is not contiguous (expected {expected})")]
    NonContiguousTime { robot: usize, time: usize, expected: usize },
    #[error("robot {robot} introduced out of order (expected index at most {expected})")]
    RobotOutOfOrder { robot: usize, expected: usize },
    #[error("edge endpoint {0} is not a registered variable")]
    MissingEndpoint(String),
    #[error("edge endpoint {0} must be a pose")]
    EndpointNotPose(String),
    #[error("edge connects a variable to itself: {0}")]
    SelfLoop(String),
    #[error("measured rotation is not in SO(d): defect {0:.3e}")]
    NotARotation(f64),
    #[error("{name} must be positive, got {value}")]
    NonPositiveParameter { name: &'static str, value: f64 },
    #[error("measurement dimension {got} does not match problem dimension {expected}")]
    DimensionMismatch { got: usize, expected: usize },
    #[error("solution is missing variable {0}")]
    MissingVariable(String),
    #[error("solution rotation for {key} is not in SO(d): defect {defect:.3e}")]
    SolutionNotRotation { key: String, defect: f64 },
}

/// Structural problems reported by [`RaSlamProblem::validate`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Diagnostic {
    /// The undirected union of all edges does not connect all variables.
    Disconnected { components: usize },
    /// An edge references an unregistered variable.
    DanglingEdge { description: String },
    /// No pose (0, 0) exists to serve as the gauge anchor.
    MissingAnchor,
    /// The problem has no variables at all.
    Empty,
}

impl std::fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Diagnostic::Disconnected { components } => {
                write!(f, "measurement graph is disconnected ({components} components)")
            }
            Diagnostic::DanglingEdge { description } => write!(f, "dangling edge: {description}"),
            Diagnostic::MissingAnchor => write!(f, "missing anchor pose (robot 0, time 0)"),
            Diagnostic::Empty => write!(f, "problem has no variables"),
        }
    }
}

const ROTATION_TOL: f64 = 1e-9;

impl RaSlamProblem {
    pub fn new(dim: Dimension) -> Self {
        Self { dim: Some(dim), ..Default::default() }
    }

    pub fn dim(&self) -> Dimension {
        self.dim.expect("problem dimension is set at construction")
    }

    pub fn d(&self) -> usize {
        self.dim().as_usize()
    }

    /// Per-robot pose key lists, in time order.
    pub fn pose_variables(&self) -> &[Vec<VariableKey>] {
        &self.pose_variables
    }

    pub fn landmark_variables(&self) -> &[VariableKey] {
        &self.landmark_variables
    }

    pub fn relative_pose_edges(&self) -> &[RelativePoseMeasurement] {
        &self.relative_pose_edges
    }

    pub fn range_edges(&self) -> &[RangeMeasurement] {
        &self.range_edges
    }

    pub fn num_robots(&self) -> usize {
        self.pose_variables.len()
    }

    pub fn num_poses(&self) -> usize {
        self.pose_variables.iter().map(|r| r.len()).sum()
    }

    pub fn num_variables(&self) -> usize {
        self.num_poses() + self.landmark_variables.len()
    }

    /// The gauge anchor: robot 0's first pose.
    pub fn anchor(&self) -> Option<VariableKey> {
        self.pose_variables.first().and_then(|r| r.first()).copied()
    }

    /// All variable keys, poses first (by robot then time), then landmarks.
    pub fn variables(&self) -> impl Iterator<Item = VariableKey> + '_ {
        self.pose_variables
            .iter()
            .flatten()
            .copied()
            .chain(self.landmark_variables.iter().copied())
    }

    pub fn has_variable(&self, key: &VariableKey) -> bool {
        match *key {
            VariableKey::Pose { robot, time } => {
                self.pose_variables.get(robot).is_some_and(|r| time < r.len())
            }
            VariableKey::Landmark { .. } => self.landmark_variables.contains(key),
        }
    }

    /// Register the pose of `robot` at `time`. Robots must be introduced in
    /// order and each robot's time indices must be contiguous from 0.
    pub fn add_pose_variable(
        &mut self,
        robot: usize,
        time: usize,
    ) -> Result<VariableKey, ProblemError> {
        if self.dim.is_none() {
            return Err(ProblemError::DimensionUnset);
        }
        if robot > self.pose_variables.len() {
            return Err(ProblemError::RobotOutOfOrder {
                robot,
                expected: self.pose_variables.len(),
            });
        }
        if robot == self.pose_variables.len() {
            if time != 0 {
                return Err(ProblemError::NonContiguousTime { robot, time, expected: 0 });
            }
            self.pose_variables.push(Vec::new());
        }
        let track = &mut self.pose_variables[robot];
        if time < track.len() {
            return Err(ProblemError::DuplicateKey(VariableKey::pose(robot, time).to_string()));
        }
        if time != track.len() {
            return Err(ProblemError::NonContiguousTime { robot, time, expected: track.len() });
        }
        let key = VariableKey::pose(robot, time);
        track.push(key);
        Ok(key)
    }

    pub fn add_landmark_variable(&mut self, index: usize) -> Result<VariableKey, ProblemError> {
        let key = VariableKey::landmark(index);
        if self.landmark_variables.contains(&key) {
            return Err(ProblemError::DuplicateKey(key.to_string()));
        }
        self.landmark_variables.push(key);
        Ok(key)
    }

    pub fn add_relative_pose_measurement(
        &mut self,
        m: RelativePoseMeasurement,
    ) -> Result<(), ProblemError> {
        let d = self.d();
        if m.from == m.to {
            return Err(ProblemError::SelfLoop(m.from.to_string()));
        }
        for key in [&m.from, &m.to] {
            if !key.is_pose() {
                return Err(ProblemError::EndpointNotPose(key.to_string()));
            }
            if !self.has_variable(key) {
                return Err(ProblemError::MissingEndpoint(key.to_string()));
            }
        }
        if m.rotation.nrows() != d || m.rotation.ncols() != d || m.translation.len() != d {
            return Err(ProblemError::DimensionMismatch { got: m.rotation.nrows(), expected: d });
        }
        if !is_rotation(&m.rotation, ROTATION_TOL) {
            return Err(ProblemError::NotARotation(rotation_defect(&m.rotation)));
        }
        if m.kappa <= 0.0 {
            return Err(ProblemError::NonPositiveParameter { name: "kappa", value: m.kappa });
        }
        if m.tau <= 0.0 {
            return Err(ProblemError::NonPositiveParameter { name: "tau", value: m.tau });
        }
        self.relative_pose_edges.push(m);
        Ok(())
    }

    pub fn add_range_measurement(&mut self, m: RangeMeasurement) -> Result<(), ProblemError> {
        if m.from == m.to {
            return Err(ProblemError::SelfLoop(m.from.to_string()));
        }
        for key in [&m.from, &m.to] {
            if !self.has_variable(key) {
                return Err(ProblemError::MissingEndpoint(key.to_string()));
            }
        }
        if m.sigma <= 0.0 {
            return Err(ProblemError::NonPositiveParameter { name: "sigma", value: m.sigma });
        }
        self.range_edges.push(m);
        Ok(())
    }

    /// Evaluate the nonlinear least-squares cost of `solution`.
    pub fn evaluate_map_cost(&self, solution: &Solution) -> Result<f64, ProblemError> {
        self.check_solution_cover(solution)?;
        for (key, rot) in &solution.rotations {
            let defect = rotation_defect(rot);
            if defect > ROTATION_TOL {
                return Err(ProblemError::SolutionNotRotation { key: key.to_string(), defect });
            }
        }
        Ok(self.cost_unchecked(solution))
    }

    /// Cost without feasibility checks; used internally where rotations are
    /// orthonormal by construction.
    pub(crate) fn cost_unchecked(&self, solution: &Solution) -> f64 {
        let mut cost = 0.0;
        for e in &self.relative_pose_edges {
            let ri = &solution.rotations[&e.from];
            let rj = &solution.rotations[&e.to];
            let ti = &solution.translations[&e.from];
            let tj = &solution.translations[&e.to];
            cost += e.kappa * (rj - ri * &e.rotation).norm_squared();
            cost += e.tau * (tj - ti - ri * &e.translation).norm_squared();
        }
        for e in &self.range_edges {
            let pi = solution.position(&e.from).expect("checked cover");
            let pj = solution.position(&e.to).expect("checked cover");
            let r = (pi - pj).norm() - e.distance;
            cost += r * r / (e.sigma * e.sigma);
        }
        cost
    }

    pub(crate) fn check_solution_cover(&self, solution: &Solution) -> Result<(), ProblemError> {
        for key in self.variables() {
            let present = match key {
                VariableKey::Pose { .. } => {
                    solution.rotations.contains_key(&key)
                        && solution.translations.contains_key(&key)
                }
                VariableKey::Landmark { .. } => solution.landmark_positions.contains_key(&key),
            };
            if !present {
                return Err(ProblemError::MissingVariable(key.to_string()));
            }
        }
        Ok(())
    }

    /// Structural diagnostics; empty iff the problem invariants hold.
    pub fn validate(&self) -> Vec<Diagnostic> {
        let mut out = Vec::new();
        if self.num_variables() == 0 {
            out.push(Diagnostic::Empty);
            return out;
        }
        if self.anchor().is_none() {
            out.push(Diagnostic::MissingAnchor);
        }
        let keys: BTreeSet<VariableKey> = self.variables().collect();
        let mut dangling = false;
        for e in &self.relative_pose_edges {
            for k in [&e.from, &e.to] {
                if !keys.contains(k) {
                    out.push(Diagnostic::DanglingEdge {
                        description: format!("relative pose edge endpoint {k}"),
                    });
                    dangling = true;
                }
            }
        }
        for e in &self.range_edges {
            for k in [&e.from, &e.to] {
                if !keys.contains(k) {
                    out.push(Diagnostic::DanglingEdge {
                        description: format!("range edge endpoint {k}"),
                    });
                    dangling = true;
                }
            }
        }
        if !dangling {
            let components = self.count_components(&keys);
            if components > 1 {
                out.push(Diagnostic::Disconnected { components });
            }
        }
        out
    }

    fn count_components(&self, keys: &BTreeSet<VariableKey>) -> usize {
        let index: BTreeMap<VariableKey, usize> =
            keys.iter().enumerate().map(|(i, k)| (*k, i)).collect();
        let mut adj: Vec<Vec<usize>> = vec![Vec::new(); keys.len()];
        {
            let mut connect = |a: &VariableKey, b: &VariableKey| {
                let (ia, ib) = (index[a], index[b]);
                adj[ia].push(ib);
                adj[ib].push(ia);
            };
            for e in &self.relative_pose_edges {
                connect(&e.from, &e.to);
            }
            for e in &self.range_edges {
                connect(&e.from, &e.to);
            }
        }
        let mut seen = vec![false; keys.len()];
        let mut components = 0;
        for start in 0..keys.len() {
            if seen[start] {
                continue;
            }
            components += 1;
            let mut queue = VecDeque::from([start]);
            seen[start] = true;
            while let Some(v) = queue.pop_front() {
                for &u in &adj[v] {
                    if !seen[u] {
                        seen[u] = true;
                        queue.push_back(u);
                    }
                }
            }
        }
        components
    }
}
