//! Shared fixtures for unit tests: random feasible solutions and problems
//! whose measurements are generated exactly (noiselessly) from a solution.

use nalgebra::DVector;
use rand::Rng;

use crate::geometry::rot2;
use crate::problem::{
    Dimension, RaSlamProblem, RangeMeasurement, RelativePoseMeasurement, Solution, VariableKey,
};

pub fn random_solution_2d<R: Rng>(rng: &mut R, poses_per_robot: usize, robots: usize) -> Solution {
    let mut s = Solution::default();
    for robot in 0..robots {
        for time in 0..poses_per_robot {
            let key = VariableKey::pose(robot, time);
            s.rotations.insert(key, rot2(rng.random_range(-3.1..3.1)));
            s.translations.insert(
                key,
                DVector::from_column_slice(&[
                    rng.random_range(-10.0..10.0),
                    rng.random_range(-10.0..10.0),
                ]),
            );
        }
    }
    s
}

/// Add `count` landmarks with random positions to a solution.
pub fn with_random_landmarks<R: Rng>(rng: &mut R, solution: &mut Solution, count: usize) {
    for index in 0..count {
        solution.landmark_positions.insert(
            VariableKey::landmark(index),
            DVector::from_column_slice(&[
                rng.random_range(-10.0..10.0),
                rng.random_range(-10.0..10.0),
            ]),
        );
    }
}

/// Build a connected problem whose measurements reproduce `truth` exactly:
/// odometry chains per robot, a connecting range edge from each later robot
/// to robot 0, range edges to every landmark, and a few extra random ranges.
pub fn noiseless_problem_from<R: Rng>(truth: &Solution, rng: &mut R) -> RaSlamProblem {
    let mut problem = RaSlamProblem::new(Dimension::Two);
    let mut tracks: Vec<Vec<VariableKey>> = Vec::new();
    for key in truth.rotations.keys() {
        if let VariableKey::Pose { robot, time } = *key {
            if tracks.len() <= robot {
                tracks.resize(robot + 1, Vec::new());
            }
            problem.add_pose_variable(robot, time).unwrap();
            tracks[robot].push(*key);
        }
    }
    for key in truth.landmark_positions.keys() {
        if let VariableKey::Landmark { index } = *key {
            problem.add_landmark_variable(index).unwrap();
        }
    }
    for track in &tracks {
        for pair in track.windows(2) {
            let (a, b) = (pair[0], pair[1]);
            let ra = &truth.rotations[&a];
            let rb = &truth.rotations[&b];
            let ta = &truth.translations[&a];
            let tb = &truth.translations[&b];
            problem
                .add_relative_pose_measurement(RelativePoseMeasurement {
                    from: a,
                    to: b,
                    rotation: ra.transpose() * rb,
                    translation: ra.transpose() * (tb - ta),
                    kappa: 50.0,
                    tau: 100.0,
                })
                .unwrap();
        }
    }
    let mut add_range = |problem: &mut RaSlamProblem, a: VariableKey, b: VariableKey| {
        let pa = truth.position(&a).unwrap();
        let pb = truth.position(&b).unwrap();
        problem
            .add_range_measurement(RangeMeasurement {
                from: a,
                to: b,
                distance: (pa - pb).norm(),
                sigma: 0.5,
            })
            .unwrap();
    };
    for (robot, track) in tracks.iter().enumerate().skip(1) {
        add_range(&mut problem, tracks[0][0], track[0]);
        let _ = robot;
    }
    for key in truth.landmark_positions.keys() {
        let track = &tracks[0];
        let pose = track[rng.random_range(0..track.len())];
        add_range(&mut problem, pose, *key);
    }
    // a couple of extra pose-pose ranges for redundancy
    let all_poses: Vec<VariableKey> = tracks.iter().flatten().copied().collect();
    if all_poses.len() >= 2 {
        for _ in 0..2 {
            let a = all_poses[rng.random_range(0..all_poses.len())];
            let b = all_poses[rng.random_range(0..all_poses.len())];
            if a != b {
                add_range(&mut problem, a, b);
            }
        }
    }
    problem
}
