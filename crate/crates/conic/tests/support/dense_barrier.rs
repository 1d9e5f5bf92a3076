//! Dense log-barrier oracle for conformance tests.
//!
//! A feasible-start short-step barrier method on the primal problem only.
//! Everything is dense nalgebra; nothing is shared with the sparse
//! homogeneous-embedding solver under test.

use conic::{ConeBlock, ConeProgram};
use nalgebra::{DMatrix, DVector};

pub struct DenseInstance {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub c: DVector<f64>,
    pub blocks: Vec<ConeBlock>,
}

impl DenseInstance {
    pub fn from_program(p: &ConeProgram) -> Self {
        let mut a = DMatrix::zeros(p.num_rows(), p.num_vars());
        for (i, j, v) in p.a.iter() {
            a[(i, j)] += v;
        }
        Self {
            a,
            b: DVector::from_column_slice(&p.b),
            c: DVector::from_column_slice(&p.c),
            blocks: p.cones.blocks.clone(),
        }
    }

    fn barrier_parameter(&self) -> f64 {
        self.blocks
            .iter()
            .map(|blk| match blk {
                ConeBlock::NonNegative(n) => *n as f64,
                ConeBlock::SecondOrder(_) => 2.0,
                _ => panic!("oracle supports nonneg and soc blocks only"),
            })
            .sum()
    }

    fn interior(&self, s: &DVector<f64>) -> bool {
        let mut off = 0;
        for blk in &self.blocks {
            let d = blk.dim();
            match blk {
                ConeBlock::NonNegative(_) => {
                    for t in 0..d {
                        if s[off + t] <= 0.0 {
                            return false;
                        }
                    }
                }
                ConeBlock::SecondOrder(_) => {
                    let tail: f64 = (1..d).map(|t| s[off + t] * s[off + t]).sum();
                    if s[off] <= 0.0 || s[off] * s[off] - tail <= 0.0 {
                        return false;
                    }
                }
                _ => unreachable!(),
            }
            off += d;
        }
        true
    }

    fn barrier_value(&self, s: &DVector<f64>) -> f64 {
        let mut phi = 0.0;
        let mut off = 0;
        for blk in &self.blocks {
            let d = blk.dim();
            match blk {
                ConeBlock::NonNegative(_) => {
                    for t in 0..d {
                        phi -= s[off + t].ln();
                    }
                }
                ConeBlock::SecondOrder(_) => {
                    let tail: f64 = (1..d).map(|t| s[off + t] * s[off + t]).sum();
                    phi -= (s[off] * s[off] - tail).ln();
                }
                _ => unreachable!(),
            }
            off += d;
        }
        phi
    }

    /// Gradient and Hessian of the barrier at `s`.
    fn barrier_derivatives(&self, s: &DVector<f64>) -> (DVector<f64>, DMatrix<f64>) {
        let m = s.len();
        let mut g = DVector::zeros(m);
        let mut h = DMatrix::zeros(m, m);
        let mut off = 0;
        for blk in &self.blocks {
            let d = blk.dim();
            match blk {
                ConeBlock::NonNegative(_) => {
                    for t in 0..d {
                        g[off + t] = -1.0 / s[off + t];
                        h[(off + t, off + t)] = 1.0 / (s[off + t] * s[off + t]);
                    }
                }
                ConeBlock::SecondOrder(_) => {
                    // phi = -log(s^T J s) with J = diag(1, -1, ..., -1)
                    let mut js = DVector::zeros(d);
                    js[0] = s[off];
                    for t in 1..d {
                        js[t] = -s[off + t];
                    }
                    let u: f64 = s[off] * js[0] + (1..d).map(|t| s[off + t] * js[t]).sum::<f64>();
                    for t in 0..d {
                        g[off + t] = -2.0 * js[t] / u;
                    }
                    for r in 0..d {
                        for cc in 0..d {
                            let jrc = if r == cc {
                                if r == 0 { 1.0 } else { -1.0 }
                            } else {
                                0.0
                            };
                            h[(off + r, off + cc)] = 4.0 * js[r] * js[cc] / (u * u) - 2.0 * jrc / u;
                        }
                    }
                }
                _ => unreachable!(),
            }
            off += d;
        }
        (g, h)
    }
}

/// Minimize `c^T x` over `Ax + s = b, s in K` starting from a strictly
/// feasible `x0`. Returns the optimal objective value to about 1e-9 relative.
pub fn barrier_solve(inst: &DenseInstance, x0: &[f64]) -> f64 {
    let mut x = DVector::from_column_slice(x0);
    let s = &inst.b - &inst.a * &x;
    assert!(inst.interior(&s), "oracle needs a strictly feasible start");

    let nu = inst.barrier_parameter();
    let mut t = 1.0;
    for _outer in 0..120 {
        // Newton recentering for f(x) = t c^T x + phi(b - Ax)
        for _inner in 0..60 {
            let s = &inst.b - &inst.a * &x;
            let (g_s, h_s) = inst.barrier_derivatives(&s);
            let grad = &inst.c * t - inst.a.transpose() * &g_s;
            let hess = inst.a.transpose() * &h_s * &inst.a;
            let chol = match (hess
                + DMatrix::identity(x.len(), x.len()) * 1e-13)
                .cholesky()
            {
                Some(c) => c,
                None => break,
            };
            let dx = chol.solve(&(-&grad));
            let decrement = (-grad.dot(&dx)).max(0.0);
            if decrement < 1e-18 * (1.0 + t) {
                break;
            }
            // backtracking line search keeping s strictly interior
            let f0 = t * inst.c.dot(&x) + inst.barrier_value(&s);
            let mut alpha = 1.0;
            let mut accepted = false;
            for _ in 0..60 {
                let x_new = &x + &dx * alpha;
                let s_new = &inst.b - &inst.a * &x_new;
                if inst.interior(&s_new) {
                    let f_new = t * inst.c.dot(&x_new) + inst.barrier_value(&s_new);
                    if f_new <= f0 - 0.25 * alpha * decrement {
                        x = x_new;
                        accepted = true;
                        break;
                    }
                }
                alpha *= 0.5;
            }
            if !accepted {
                break;
            }
        }
        let obj = inst.c.dot(&x);
        if nu / t <= 1e-9 * (1.0 + obj.abs()) {
            return obj;
        }
        t *= 8.0;
    }
    inst.c.dot(&x)
}
