//! Ruiz equilibration of conic programs.
//!
//! Iteratively scales rows and columns of `A` toward unit infinity norm.
//! Rows belonging to one second-order (or rotated) block share a single
//! scale factor so the cone is preserved; zero and nonnegative rows scale
//! per row.

use crate::program::{ConeBlock, ConeProgram};

/// Diagonal scaling produced by [`presolve_scale`]; maps solutions of the
/// scaled program back to the original.
#[derive(Debug, Clone)]
pub struct ScalingData {
    /// Column scales: `x = d .* x_scaled`.
    pub d: Vec<f64>,
    /// Row scales: `s = s_scaled ./ e`, `z = e .* z_scaled`.
    pub e: Vec<f64>,
}

impl ScalingData {
    pub fn identity(n: usize, m: usize) -> Self {
        Self { d: vec![1.0; n], e: vec![1.0; m] }
    }

    pub fn unscale_primal(&self, x_scaled: &[f64]) -> Vec<f64> {
        x_scaled.iter().zip(&self.d).map(|(x, d)| x * d).collect()
    }

    pub fn unscale_slack(&self, s_scaled: &[f64]) -> Vec<f64> {
        s_scaled.iter().zip(&self.e).map(|(s, e)| s / e).collect()
    }

    pub fn unscale_dual(&self, z_scaled: &[f64]) -> Vec<f64> {
        z_scaled.iter().zip(&self.e).map(|(z, e)| z * e).collect()
    }
}

const RUIZ_ITERATIONS: usize = 10;

/// Row/column equilibration. Returns the scaled program and the data needed
/// to map solutions back. The scaled program has the same optimal objective:
/// with `A' = E A D`, `b' = E b`, `c' = D c`, any solution `x'` of the scaled
/// program gives `x = D x'` with `c^T x = c'^T x'`.
pub fn presolve_scale(program: &ConeProgram) -> (ConeProgram, ScalingData) {
    let n = program.num_vars();
    let m = program.num_rows();
    let mut scaled = program.clone();
    let mut data = ScalingData::identity(n, m);

    // group rows of SOC-like blocks so they share one scale
    let offsets = program.cones.offsets();
    let mut block_of_row: Vec<Option<usize>> = vec![None; m];
    for (k, blk) in program.cones.blocks.iter().enumerate() {
        if matches!(blk, ConeBlock::SecondOrder(_) | ConeBlock::RotatedSecondOrder(_)) {
            for r in offsets[k]..offsets[k] + blk.dim() {
                block_of_row[r] = Some(k);
            }
        }
    }

    for _ in 0..RUIZ_ITERATIONS {
        let mut row_norms = scaled.a.row_inf_norms();
        // block-uniform scaling: use the max norm across the block's rows
        for (k, blk) in scaled.cones.blocks.iter().enumerate() {
            if matches!(blk, ConeBlock::SecondOrder(_) | ConeBlock::RotatedSecondOrder(_)) {
                let range = offsets[k]..offsets[k] + blk.dim();
                let mx = range.clone().fold(0.0f64, |acc, r| acc.max(row_norms[r]));
                for r in range {
                    row_norms[r] = mx;
                }
            }
        }
        let col_norms = scaled.a.col_inf_norms();
        let row_scale: Vec<f64> = row_norms
            .iter()
            .map(|&v| if v > 0.0 { 1.0 / v.sqrt() } else { 1.0 })
            .collect();
        let col_scale: Vec<f64> = col_norms
            .iter()
            .map(|&v| if v > 0.0 { 1.0 / v.sqrt() } else { 1.0 })
            .collect();
        scaled.a.scale(&row_scale, &col_scale);
        for i in 0..m {
            scaled.b[i] *= row_scale[i];
            data.e[i] *= row_scale[i];
        }
        for j in 0..n {
            scaled.c[j] *= col_scale[j];
            data.d[j] *= col_scale[j];
        }
    }
    (scaled, data)
}
