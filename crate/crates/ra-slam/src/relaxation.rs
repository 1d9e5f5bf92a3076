//! Lowering of the estimation problem to a second-order cone program.
//!
//! Orthonormality of the rotation variables is dropped entirely; each range
//! term gets an auxiliary distance scalar `d_e` constrained by the convex
//! cone inequality `d_e >= ||p_i - p_j||`, and every quadratic cost summand
//! is lowered to a rotated-cone epigraph. The anchor pose's rotation block
//! is pinned to the identity (and its translation to zero) so the trivial
//! all-zeros minimizer is excluded and the gauge is fixed.

use std::collections::BTreeMap;
use std::ops::Range;

use conic::{ConeProgram, ConeProgramBuilder, SolveStatus, SolverResult};
use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::problem::{Diagnostic, ProblemError, RaSlamProblem, Solution, VariableKey};

/// Tolerance for extraction-time feasibility checks: anchor drift and
/// cone-constraint violation beyond this signal a solver accuracy failure.
pub const EXTRACTION_TOL: f64 = 1e-6;

/// Index map from problem variables into the flat decision vector.
///
/// Layout order: rotation blocks (d^2 scalars each, row-major), then pose
/// translations and landmark positions (d scalars each), then one auxiliary
/// distance per range edge, then the epigraph scalars appended by the
/// quadratic lowering (the pinned unit helper lives in that tail too).
#[derive(Debug, Clone)]
pub struct VariableLayout {
    pub dim: usize,
    pub rotation_offsets: BTreeMap<VariableKey, usize>,
    pub translation_offsets: BTreeMap<VariableKey, usize>,
    pub landmark_offsets: BTreeMap<VariableKey, usize>,
    /// Offset of the auxiliary distance scalar of each range edge, indexed
    /// like `problem.range_edges()`.
    pub aux_distance_offsets: Vec<usize>,
    /// Offset of each cost summand's epigraph scalar, in emission order:
    /// rotation and translation terms per relative-pose edge, then range
    /// terms per range edge.
    pub epigraph_offsets: Vec<usize>,
    pub total_dimension: usize,
}

impl VariableLayout {
    /// Flat offset of the position of `key` (pose translation or landmark).
    pub fn position_offset(&self, key: &VariableKey) -> usize {
        match key {
            VariableKey::Pose { .. } => self.translation_offsets[key],
            VariableKey::Landmark { .. } => self.landmark_offsets[key],
        }
    }

    /// Length of the structured prefix (rotations, positions, aux scalars).
    pub fn structured_len(&self) -> usize {
        self.aux_distance_offsets
            .last()
            .map(|o| o + 1)
            .unwrap_or_else(|| {
                self.translation_offsets
                    .values()
                    .chain(self.landmark_offsets.values())
                    .max()
                    .map(|o| o + self.dim)
                    .unwrap_or(0)
            })
    }
}

/// Structured view of the relaxation optimum. Rotation blocks are generally
/// *not* in SO(d); `aux_distances` is indexed like `problem.range_edges()`.
#[derive(Debug, Clone)]
pub struct RelaxedSolution {
    pub rotation_blocks: BTreeMap<VariableKey, DMatrix<f64>>,
    pub translations: BTreeMap<VariableKey, DVector<f64>>,
    pub landmark_positions: BTreeMap<VariableKey, DVector<f64>>,
    pub aux_distances: Vec<f64>,
    pub objective: f64,
}

impl RelaxedSolution {
    pub fn position(&self, key: &VariableKey) -> Option<&DVector<f64>> {
        match key {
            VariableKey::Pose { .. } => self.translations.get(key),
            VariableKey::Landmark { .. } => self.landmark_positions.get(key),
        }
    }

    /// Per-edge slack `d_e - ||p_i - p_j||`; nonnegative (up to solver
    /// tolerance) by cone feasibility, zero where the relaxation is tight.
    pub fn cone_slacks(&self, problem: &RaSlamProblem) -> Vec<f64> {
        problem
            .range_edges()
            .iter()
            .enumerate()
            .map(|(e, edge)| {
                let pi = self.position(&edge.from).expect("solution covers variables");
                let pj = self.position(&edge.to).expect("solution covers variables");
                self.aux_distances[e] - (pi - pj).norm()
            })
            .collect()
    }
}

#[derive(Debug, Error)]
pub enum RelaxationError {
    #[error("problem failed validation: {}", format_diagnostics(.0))]
    Validation(Vec<Diagnostic>),
    #[error("solver returned {0:?}, not Optimal")]
    NotOptimal(SolveStatus),
    #[error("cone violation {violation:.3e} on range edge {edge} exceeds tolerance")]
    ConeViolation { edge: usize, violation: f64 },
    #[error("anchor rotation block drifted from identity by {defect:.3e}")]
    AnchorDrift { defect: f64 },
    #[error("relaxed solution missing auxiliary distance for range edge {edge}")]
    MissingAuxDistance { edge: usize },
    #[error(transparent)]
    Problem(#[from] ProblemError),
}

fn format_diagnostics(diags: &[Diagnostic]) -> String {
    diags.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("; ")
}

/// Build the cone program of the relaxation.
pub fn build_score(
    problem: &RaSlamProblem,
) -> Result<(ConeProgram, VariableLayout), RelaxationError> {
    let diagnostics = problem.validate();
    if !diagnostics.is_empty() {
        return Err(RelaxationError::Validation(diagnostics));
    }
    let d = problem.d();
    let mut builder = ConeProgramBuilder::new();

    let mut rotation_offsets = BTreeMap::new();
    let mut translation_offsets = BTreeMap::new();
    let mut landmark_offsets = BTreeMap::new();
    for key in problem.variables() {
        if key.is_pose() {
            rotation_offsets.insert(key, builder.add_vars(d * d).start);
        }
    }
    for key in problem.variables() {
        match key {
            VariableKey::Pose { .. } => {
                translation_offsets.insert(key, builder.add_vars(d).start);
            }
            VariableKey::Landmark { .. } => {
                landmark_offsets.insert(key, builder.add_vars(d).start);
            }
        }
    }
    let aux_distance_offsets: Vec<usize> = problem
        .range_edges()
        .iter()
        .map(|_| builder.add_var())
        .collect();

    // anchor rows: R_anchor = I, t_anchor = 0
    let anchor = problem.anchor().expect("validated problem has an anchor");
    let anchor_rot = rotation_offsets[&anchor];
    let anchor_tr = translation_offsets[&anchor];
    let mut anchor_rows: Vec<(Vec<(usize, f64)>, f64)> = Vec::with_capacity(d * d + d);
    for a in 0..d {
        for b in 0..d {
            let rhs = if a == b { 1.0 } else { 0.0 };
            anchor_rows.push((vec![(anchor_rot + a * d + b, 1.0)], rhs));
        }
    }
    for a in 0..d {
        anchor_rows.push((vec![(anchor_tr + a, 1.0)], 0.0));
    }
    let anchor_refs: Vec<(&[(usize, f64)], f64)> =
        anchor_rows.iter().map(|(e, r)| (e.as_slice(), *r)).collect();
    builder.add_zero_block(&anchor_refs);

    // one second-order block per range edge: d_e >= ||p_i - p_j||
    for (e, edge) in problem.range_edges().iter().enumerate() {
        let pi = position_offset(&translation_offsets, &landmark_offsets, &edge.from);
        let pj = position_offset(&translation_offsets, &landmark_offsets, &edge.to);
        let mut rows: Vec<(Vec<(usize, f64)>, f64)> = Vec::with_capacity(d + 1);
        rows.push((vec![(aux_distance_offsets[e], -1.0)], 0.0));
        for a in 0..d {
            rows.push((vec![(pi + a, -1.0), (pj + a, 1.0)], 0.0));
        }
        let refs: Vec<(&[(usize, f64)], f64)> =
            rows.iter().map(|(ex, r)| (ex.as_slice(), *r)).collect();
        builder.add_soc_block(&refs);
    }

    // quadratic cost summands, each lowered to a rotated-cone epigraph
    let mut epigraph_offsets = Vec::new();
    for edge in problem.relative_pose_edges() {
        let ri = rotation_offsets[&edge.from];
        let rj = rotation_offsets[&edge.to];
        let ti = translation_offsets[&edge.from];
        let tj = translation_offsets[&edge.to];
        let sqrt_kappa = edge.kappa.sqrt();
        let sqrt_tau = edge.tau.sqrt();

        // rotation term: sqrt(kappa) * (R_j - R_i Rm) entrywise
        let mut rows: Vec<(Vec<(usize, f64)>, f64)> = Vec::with_capacity(d * d);
        for a in 0..d {
            for b in 0..d {
                let mut expr = vec![(rj + a * d + b, sqrt_kappa)];
                for c in 0..d {
                    expr.push((ri + a * d + c, -sqrt_kappa * edge.rotation[(c, b)]));
                }
                rows.push((expr, 0.0));
            }
        }
        let refs: Vec<(&[(usize, f64)], f64)> =
            rows.iter().map(|(ex, r)| (ex.as_slice(), *r)).collect();
        epigraph_offsets.push(builder.add_sum_of_squares_term(&refs));

        // translation term: sqrt(tau) * (t_j - t_i - R_i tm)
        let mut rows: Vec<(Vec<(usize, f64)>, f64)> = Vec::with_capacity(d);
        for a in 0..d {
            let mut expr = vec![(tj + a, sqrt_tau), (ti + a, -sqrt_tau)];
            for c in 0..d {
                expr.push((ri + a * d + c, -sqrt_tau * edge.translation[c]));
            }
            rows.push((expr, 0.0));
        }
        let refs: Vec<(&[(usize, f64)], f64)> =
            rows.iter().map(|(ex, r)| (ex.as_slice(), *r)).collect();
        epigraph_offsets.push(builder.add_sum_of_squares_term(&refs));
    }
    for (e, edge) in problem.range_edges().iter().enumerate() {
        // range term: (d_e - dm) / sigma
        let inv_sigma = 1.0 / edge.sigma;
        let expr = [(aux_distance_offsets[e], inv_sigma)];
        epigraph_offsets.push(
            builder.add_sum_of_squares_term(&[(&expr, edge.distance * inv_sigma)]),
        );
    }

    let layout = VariableLayout {
        dim: d,
        rotation_offsets,
        translation_offsets,
        landmark_offsets,
        aux_distance_offsets,
        epigraph_offsets,
        total_dimension: builder.num_vars(),
    };
    Ok((builder.build(), layout))
}

fn position_offset(
    translations: &BTreeMap<VariableKey, usize>,
    landmarks: &BTreeMap<VariableKey, usize>,
    key: &VariableKey,
) -> usize {
    match key {
        VariableKey::Pose { .. } => translations[key],
        VariableKey::Landmark { .. } => landmarks[key],
    }
}

/// Slice the solver's flat primal vector into structured fields, checking
/// the relaxed-solution invariants.
pub fn extract_relaxed_solution(
    result: &SolverResult,
    layout: &VariableLayout,
    problem: &RaSlamProblem,
) -> Result<RelaxedSolution, RelaxationError> {
    if result.status != SolveStatus::Optimal {
        return Err(RelaxationError::NotOptimal(result.status));
    }
    let d = layout.dim;
    let x = &result.primal;
    let mut rotation_blocks = BTreeMap::new();
    for (key, &off) in &layout.rotation_offsets {
        rotation_blocks.insert(*key, DMatrix::from_row_slice(d, d, &x[off..off + d * d]));
    }
    let mut translations = BTreeMap::new();
    for (key, &off) in &layout.translation_offsets {
        translations.insert(*key, DVector::from_column_slice(&x[off..off + d]));
    }
    let mut landmark_positions = BTreeMap::new();
    for (key, &off) in &layout.landmark_offsets {
        landmark_positions.insert(*key, DVector::from_column_slice(&x[off..off + d]));
    }
    let aux_distances: Vec<f64> = layout.aux_distance_offsets.iter().map(|&o| x[o]).collect();

    let relaxed = RelaxedSolution {
        rotation_blocks,
        translations,
        landmark_positions,
        aux_distances,
        objective: result.objective,
    };

    let anchor = problem.anchor().expect("problem has an anchor");
    let defect = (&relaxed.rotation_blocks[&anchor] - DMatrix::identity(d, d)).norm();
    if defect > EXTRACTION_TOL {
        return Err(RelaxationError::AnchorDrift { defect });
    }
    for (e, slack) in relaxed.cone_slacks(problem).iter().enumerate() {
        if *slack < -EXTRACTION_TOL {
            return Err(RelaxationError::ConeViolation { edge: e, violation: -slack });
        }
    }
    Ok(relaxed)
}

/// Re-flatten a structured solution into the layout's index space; inverse
/// of the slicing done by [`extract_relaxed_solution`] on the structured
/// prefix of the decision vector.
pub fn flatten_relaxed(relaxed: &RelaxedSolution, layout: &VariableLayout) -> Vec<f64> {
    let d = layout.dim;
    let mut x = vec![0.0; layout.structured_len()];
    for (key, &off) in &layout.rotation_offsets {
        let m = &relaxed.rotation_blocks[key];
        for a in 0..d {
            for b in 0..d {
                x[off + a * d + b] = m[(a, b)];
            }
        }
    }
    for (key, &off) in &layout.translation_offsets {
        let t = &relaxed.translations[key];
        x[off..off + d].copy_from_slice(t.as_slice());
    }
    for (key, &off) in &layout.landmark_offsets {
        let t = &relaxed.landmark_positions[key];
        x[off..off + d].copy_from_slice(t.as_slice());
    }
    for (e, &off) in layout.aux_distance_offsets.iter().enumerate() {
        x[off] = relaxed.aux_distances[e];
    }
    x
}

/// The relaxation's cost at a structured point: identical to the estimation
/// cost except that range residuals use the auxiliary distances.
pub fn evaluate_relaxed_cost(
    problem: &RaSlamProblem,
    relaxed: &RelaxedSolution,
) -> Result<f64, RelaxationError> {
    if relaxed.aux_distances.len() != problem.range_edges().len() {
        return Err(RelaxationError::MissingAuxDistance {
            edge: relaxed.aux_distances.len().min(problem.range_edges().len()),
        });
    }
    let mut cost = 0.0;
    for e in problem.relative_pose_edges() {
        let ri = &relaxed.rotation_blocks[&e.from];
        let rj = &relaxed.rotation_blocks[&e.to];
        let ti = &relaxed.translations[&e.from];
        let tj = &relaxed.translations[&e.to];
        cost += e.kappa * (rj - ri * &e.rotation).norm_squared();
        cost += e.tau * (tj - ti - ri * &e.translation).norm_squared();
    }
    for (e, edge) in problem.range_edges().iter().enumerate() {
        let r = (relaxed.aux_distances[e] - edge.distance) / edge.sigma;
        cost += r * r;
    }
    Ok(cost)
}

/// View a feasible estimate as a relaxed solution with tight auxiliary
/// distances `d_e = ||p_i - p_j||`; its relaxed cost then equals the
/// estimation cost exactly.
pub fn relaxed_from_solution(problem: &RaSlamProblem, solution: &Solution) -> RelaxedSolution {
    let aux_distances = problem
        .range_edges()
        .iter()
        .map(|edge| {
            let pi = solution.position(&edge.from).expect("solution covers variables");
            let pj = solution.position(&edge.to).expect("solution covers variables");
            (pi - pj).norm()
        })
        .collect();
    RelaxedSolution {
        rotation_blocks: solution.rotations.clone(),
        translations: solution.translations.clone(),
        landmark_positions: solution.landmark_positions.clone(),
        aux_distances,
        objective: f64::NAN,
    }
}

/// Convenience range over a rotation block's scalars.
pub fn rotation_range(layout: &VariableLayout, key: &VariableKey) -> Range<usize> {
    let off = layout.rotation_offsets[key];
    off..off + layout.dim * layout.dim
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::rot2;
    use crate::problem::{Dimension, RelativePoseMeasurement};
    use crate::testutil::{noiseless_problem_from, random_solution_2d, with_random_landmarks};
    use conic::{solve, ConeBlock, SolverSettings};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn solve_relaxation(
        problem: &RaSlamProblem,
    ) -> (conic::ConeProgram, VariableLayout, conic::SolverResult) {
        let (program, layout) = build_score(problem).unwrap();
        let result = solve(&program, &SolverSettings::default()).unwrap();
        (program, layout, result)
    }

    #[test]
    fn two_pose_chain_recovers_measured_rotation() {
        let mut p = RaSlamProblem::new(Dimension::Two);
        let a = p.add_pose_variable(0, 0).unwrap();
        let b = p.add_pose_variable(0, 1).unwrap();
        let measured = rot2(0.7);
        p.add_relative_pose_measurement(RelativePoseMeasurement {
            from: a,
            to: b,
            rotation: measured.clone(),
            translation: DVector::from_column_slice(&[1.0, 0.0]),
            kappa: 5.0,
            tau: 2.0,
        })
        .unwrap();
        let (program, layout, result) = solve_relaxation(&p);
        // 4+4 rotation scalars, 2+2 translations, no aux distances
        assert_eq!(layout.aux_distance_offsets.len(), 0);
        assert_eq!(layout.rotation_offsets.len(), 2);
        assert_eq!(layout.translation_offsets.len(), 2);
        // anchor zero block fixes 6 scalars
        let anchor_rows: usize = program
            .cones
            .blocks
            .iter()
            .filter_map(|b| match b {
                ConeBlock::Zero(n) if *n > 1 => Some(*n),
                _ => None,
            })
            .sum();
        assert_eq!(anchor_rows, 6);
        // with R_0 = I the relaxed R_1 equals the measurement (closed-form
        // unconstrained least squares of the single rotation term)
        let relaxed = extract_relaxed_solution(&result, &layout, &p).unwrap();
        let r1 = &relaxed.rotation_blocks[&b];
        assert!((r1 - &measured).norm() < 1e-6, "relaxed R1 off by {}", (r1 - measured).norm());
    }

    #[test]
    fn zero_noise_problem_has_zero_objective_and_recovers_truth() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let mut truth = random_solution_2d(&mut rng, 6, 1);
        with_random_landmarks(&mut rng, &mut truth, 1);
        let problem = noiseless_problem_from(&truth, &mut rng);
        let (_, layout, result) = solve_relaxation(&problem);
        assert!(result.objective.abs() < 1e-8, "objective {}", result.objective);
        let relaxed = extract_relaxed_solution(&result, &layout, &problem).unwrap();

        // compare against truth expressed in the anchored gauge
        let anchor = problem.anchor().unwrap();
        let g_r = truth.rotations[&anchor].transpose();
        let g_t = -&g_r * &truth.translations[&anchor];
        let anchored = truth.transformed(&g_r, &g_t);
        for (key, rot) in &relaxed.rotation_blocks {
            assert!(
                (rot - &anchored.rotations[key]).norm() < 1e-6,
                "rotation {key} off by {}",
                (rot - &anchored.rotations[key]).norm()
            );
        }
        // aux distances equal the true inter-node distances
        for (e, edge) in problem.range_edges().iter().enumerate() {
            let truth_dist =
                (truth.position(&edge.from).unwrap() - truth.position(&edge.to).unwrap()).norm();
            assert!((relaxed.aux_distances[e] - truth_dist).abs() < 1e-6);
        }
    }

    #[test]
    fn structural_block_counts() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut truth = random_solution_2d(&mut rng, 4, 2);
        with_random_landmarks(&mut rng, &mut truth, 2);
        let problem = noiseless_problem_from(&truth, &mut rng);
        let (program, _) = build_score(&problem).unwrap();
        let soc = program
            .cones
            .blocks
            .iter()
            .filter(|b| matches!(b, ConeBlock::SecondOrder(_)))
            .count();
        let rsoc = program
            .cones
            .blocks
            .iter()
            .filter(|b| matches!(b, ConeBlock::RotatedSecondOrder(_)))
            .count();
        assert_eq!(soc, problem.range_edges().len());
        let summands = 2 * problem.relative_pose_edges().len() + problem.range_edges().len();
        assert_eq!(rsoc, summands);
    }

    #[test]
    fn extraction_round_trips_to_primal() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let truth = random_solution_2d(&mut rng, 5, 1);
        let problem = noiseless_problem_from(&truth, &mut rng);
        let (_, layout, result) = solve_relaxation(&problem);
        let relaxed = extract_relaxed_solution(&result, &layout, &problem).unwrap();
        let flat = flatten_relaxed(&relaxed, &layout);
        for (i, v) in flat.iter().enumerate() {
            assert_eq!(v.to_bits(), result.primal[i].to_bits(), "mismatch at {i}");
        }
    }

    #[test]
    fn relaxed_cost_agrees_with_map_cost_on_feasible_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let truth = random_solution_2d(&mut rng, 5, 2);
        let problem = noiseless_problem_from(&truth, &mut rng);
        let candidate = random_solution_2d(&mut rng, 5, 2);
        let as_relaxed = relaxed_from_solution(&problem, &candidate);
        let relaxed_cost = evaluate_relaxed_cost(&problem, &as_relaxed).unwrap();
        let map_cost = problem.evaluate_map_cost(&candidate).unwrap();
        assert!((relaxed_cost - map_cost).abs() < 1e-10 * (1.0 + map_cost));
    }

    #[test]
    fn solver_objective_matches_recomputed_cost() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let mut truth = random_solution_2d(&mut rng, 6, 2);
        with_random_landmarks(&mut rng, &mut truth, 1);
        let problem = noiseless_problem_from(&truth, &mut rng);
        let (_, layout, result) = solve_relaxation(&problem);
        let relaxed = extract_relaxed_solution(&result, &layout, &problem).unwrap();
        let recomputed = evaluate_relaxed_cost(&problem, &relaxed).unwrap();
        assert!(
            (recomputed - result.objective).abs() < 1e-6 * (1.0 + recomputed.abs()),
            "recomputed {recomputed} vs solver {}",
            result.objective
        );
    }

    #[test]
    fn empty_problem_rejected() {
        let problem = RaSlamProblem::new(Dimension::Two);
        assert!(matches!(build_score(&problem), Err(RelaxationError::Validation(_))));
    }
}
