//! Smoke test: a chain-structured SOCP roughly the shape of a large
//! trajectory relaxation, to keep factorization fill and solve time in check.

use conic::{solve, ConeProgramBuilder, SolveStatus, SolverSettings};
use std::time::Instant;

#[test]
fn chain_structured_socp_solves_quickly() {
    let n_nodes = 4000;
    let mut builder = ConeProgramBuilder::new();
    // 2D positions along a chain
    let pos = builder.add_vars(2 * n_nodes);
    let base = pos.start;
    // anchor node 0 at the origin
    builder.add_zero_block(&[(&[(base, 1.0)], 0.0), (&[(base + 1, 1.0)], 0.0)]);
    // consecutive-node quadratic terms: ||p_{i+1} - p_i - (1, 0)||^2
    for i in 0..n_nodes - 1 {
        let (xi, yi) = (base + 2 * i, base + 2 * i + 1);
        let (xj, yj) = (base + 2 * i + 2, base + 2 * i + 3);
        builder.add_sum_of_squares_term(&[
            (&[(xj, 1.0), (xi, -1.0)], 1.0),
            (&[(yj, 1.0), (yi, -1.0)], 0.0),
        ]);
    }
    // sparse long-range distance bounds: d_k >= ||p_i - p_j|| with d_k pushed
    // toward a target by a quadratic term
    for k in 0..n_nodes / 4 {
        let i = (k * 4) % n_nodes;
        let j = (i + 7).min(n_nodes - 1);
        let (xi, yi) = (base + 2 * i, base + 2 * i + 1);
        let (xj, yj) = (base + 2 * j, base + 2 * j + 1);
        let d = builder.add_var();
        builder.add_soc_block(&[
            (&[(d, -1.0)], 0.0),
            (&[(xi, -1.0), (xj, 1.0)], 0.0),
            (&[(yi, -1.0), (yj, 1.0)], 0.0),
        ]);
        builder.add_sum_of_squares_term(&[(&[(d, 1.0)], 7.0)]);
    }
    let prog = builder.build();
    let t = Instant::now();
    let result = solve(&prog, &SolverSettings::default()).unwrap();
    let dt = t.elapsed().as_secs_f64();
    println!(
        "n={} m={} status={:?} iters={} time={:.2}s obj={:.6}",
        prog.num_vars(),
        prog.num_rows(),
        result.status,
        result.iterations,
        dt,
        result.objective
    );
    assert_eq!(result.status, SolveStatus::Optimal);
    // noiseless chain: cost should be ~0
    assert!(result.objective.abs() < 1e-5, "obj = {}", result.objective);
    assert!(dt < 120.0, "solve took {dt}s");
}
