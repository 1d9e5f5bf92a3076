//! Primal-dual interior-point solver on the homogeneous self-dual embedding.
//!
//! Solves `min c^T x  s.t.  A x + s = b, s in K` with a Mehrotra
//! predictor-corrector iteration under Nesterov-Todd scaling. The KKT
//! systems are factored by sparse LDL^T with static plus dynamic
//! regularization and iterative refinement; infeasibility is certified
//! through the embedding's tau/kappa ratio.

use std::time::Instant;

use crate::cone::{
    interior_margin, jordan_product, jordan_solve, step_to_boundary, unit_element, InternalCone,
    Scaling,
};
use crate::equilibrate::{presolve_scale, ScalingData};
use crate::ldl::{FactorError, LdlFactor, LdlSymbolic};
use crate::order::{fill_reducing_order, invert_permutation, Adjacency};
use crate::program::{ConeBlock, ConeProgram, ConeSpec, ProgramError};
use crate::sparse::{dot, norm2, CscMatrix};

/// Outcome classification of a solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    MaxIterations,
    PrimalInfeasible,
    DualInfeasible,
    NumericalFailure,
}

/// Tolerances and iteration limits.
#[derive(Debug, Clone)]
pub struct SolverSettings {
    pub eps_abs: f64,
    pub eps_rel: f64,
    pub max_iterations: usize,
    pub time_limit_seconds: Option<f64>,
    /// Ruiz-equilibrate the problem data before solving.
    pub equilibrate: bool,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            eps_abs: 1e-8,
            eps_rel: 1e-8,
            max_iterations: 200,
            time_limit_seconds: None,
            equilibrate: true,
        }
    }
}

/// Solver output. Residuals are reported relative: the primal residual is
/// `||Ax + s - b|| / (1 + ||b||)`, the dual residual `||A^T z + c|| /
/// (1 + ||c||)`, and the duality gap `s^T z / (1 + |p| + |d|)` with `p`, `d`
/// the primal and dual objective values.
#[derive(Debug, Clone)]
pub struct SolverResult {
    pub status: SolveStatus,
    pub primal: Vec<f64>,
    pub slack: Vec<f64>,
    pub dual: Vec<f64>,
    pub objective: f64,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub duality_gap: f64,
    pub iterations: usize,
    pub wall_time_seconds: f64,
}

#[derive(Debug)]
pub enum SolverError {
    Invalid(ProgramError),
}

impl std::fmt::Display for SolverError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SolverError::Invalid(e) => write!(f, "invalid cone program: {e}"),
        }
    }
}

impl std::error::Error for SolverError {}

const STEP_FRACTION: f64 = 0.99;
const STATIC_REG_SCALE: f64 = 1e-8;
const DYN_REG_SCALE: f64 = 1e-9;
const REFINE_ROUNDS: usize = 6;

/// Solve a conic program.
pub fn solve(program: &ConeProgram, settings: &SolverSettings) -> Result<SolverResult, SolverError> {
    program.validate().map_err(SolverError::Invalid)?;
    let t0 = Instant::now();

    if program.num_vars() == 0 || program.num_rows() == 0 {
        return Ok(trivial_result(program, t0));
    }

    // rotated cones become plain second-order cones under an orthogonal
    // row transform; the solver core then sees only three cone kinds
    let internal = to_internal(program);
    let cones = internal.cones.clone();

    let (scaled, scaling) = if settings.equilibrate {
        presolve_scale(&internal.program)
    } else {
        (
            internal.program.clone(),
            ScalingData::identity(program.num_vars(), program.num_rows()),
        )
    };

    let mut ipm = Ipm::new(&internal.program, scaled, scaling, cones, settings.clone());
    let outcome = ipm.run(t0);
    Ok(finish(program, &internal, ipm, outcome, t0))
}

// ---------------------------------------------------------------------------
// internal program form

struct InternalForm {
    program: ConeProgram,
    cones: Vec<InternalCone>,
    /// offsets of rotated blocks in the row space (for mapping s, z back)
    rsoc_offsets: Vec<usize>,
}

fn to_internal(program: &ConeProgram) -> InternalForm {
    let offsets = program.cones.offsets();
    let mut cones = Vec::with_capacity(program.cones.blocks.len());
    let mut rsoc_offsets = Vec::new();
    let mut is_rsoc_head = vec![false; program.num_rows()];
    for (k, blk) in program.cones.blocks.iter().enumerate() {
        match *blk {
            ConeBlock::Zero(n) => cones.push(InternalCone::Zero(n)),
            ConeBlock::NonNegative(n) => cones.push(InternalCone::NonNegative(n)),
            ConeBlock::SecondOrder(n) => cones.push(InternalCone::SecondOrder(n)),
            ConeBlock::RotatedSecondOrder(n) => {
                cones.push(InternalCone::SecondOrder(n));
                rsoc_offsets.push(offsets[k]);
                is_rsoc_head[offsets[k]] = true;
            }
        }
    }
    if rsoc_offsets.is_empty() {
        return InternalForm {
            program: program.clone(),
            cones,
            rsoc_offsets,
        };
    }

    let inv_sqrt2 = std::f64::consts::FRAC_1_SQRT_2;
    let mut triplets = Vec::with_capacity(program.a.nnz() * 2);
    for (i, j, v) in program.a.iter() {
        if is_rsoc_head[i] {
            triplets.push((i, j, v * inv_sqrt2));
            triplets.push((i + 1, j, v * inv_sqrt2));
        } else if i > 0 && is_rsoc_head[i - 1] {
            triplets.push((i - 1, j, v * inv_sqrt2));
            triplets.push((i, j, -v * inv_sqrt2));
        } else {
            triplets.push((i, j, v));
        }
    }
    let mut b = program.b.clone();
    for &off in &rsoc_offsets {
        let (u1, u2) = (b[off], b[off + 1]);
        b[off] = (u1 + u2) * inv_sqrt2;
        b[off + 1] = (u1 - u2) * inv_sqrt2;
    }
    let a = CscMatrix::from_triplets(program.num_rows(), program.num_vars(), &triplets);
    let blocks = cones
        .iter()
        .map(|c| match *c {
            InternalCone::Zero(n) => ConeBlock::Zero(n),
            InternalCone::NonNegative(n) => ConeBlock::NonNegative(n),
            InternalCone::SecondOrder(n) => ConeBlock::SecondOrder(n),
        })
        .collect();
    InternalForm {
        program: ConeProgram {
            c: program.c.clone(),
            a,
            b,
            cones: ConeSpec { blocks },
        },
        cones,
        rsoc_offsets,
    }
}

/// Apply the rotated-cone transform (an involution) to a row-space vector,
/// mapping internal SOC coordinates back to rotated-cone coordinates.
fn rsoc_transform(v: &mut [f64], rsoc_offsets: &[usize]) {
    let inv_sqrt2 = std::f64::consts::FRAC_1_SQRT_2;
    for &off in rsoc_offsets {
        let (a, b) = (v[off], v[off + 1]);
        v[off] = (a + b) * inv_sqrt2;
        v[off + 1] = (a - b) * inv_sqrt2;
    }
}

// ---------------------------------------------------------------------------
// KKT system

struct Kkt {
    n: usize,
    m: usize,
    perm: Vec<usize>,
    symbolic: LdlSymbolic,
    pattern: CscMatrix,
    slots: Vec<usize>,
    pivot_sign: Vec<f64>,
    a_values: Vec<f64>,
    static_reg: f64,
    block_offsets: Vec<usize>,
    cones: Vec<InternalCone>,
    factor: Option<LdlFactor>,
    scalings: Vec<Scaling>,
}

impl Kkt {
    fn new(a: &CscMatrix, cones: &[InternalCone]) -> Self {
        let n = a.ncols();
        let m = a.nrows();
        let big = n + m;
        let mut block_offsets = Vec::with_capacity(cones.len());
        let mut off = 0;
        for c in cones {
            block_offsets.push(off);
            off += c.dim();
        }

        let mut a_max = 0.0f64;
        for (_, _, v) in a.iter() {
            a_max = a_max.max(v.abs());
        }
        let static_reg = STATIC_REG_SCALE * (1.0 + a_max);

        // fixed source enumeration: x diagonal, A^T block, cone blocks
        let mut pattern_entries: Vec<(usize, usize)> = Vec::new();
        let mut a_values = Vec::with_capacity(a.nnz());
        for j in 0..n {
            pattern_entries.push((j, j));
        }
        for (i, j, v) in a.iter() {
            pattern_entries.push((j, n + i));
            a_values.push(v);
        }
        for (k, c) in cones.iter().enumerate() {
            let base = n + block_offsets[k];
            match *c {
                InternalCone::Zero(d) | InternalCone::NonNegative(d) => {
                    for t in 0..d {
                        pattern_entries.push((base + t, base + t));
                    }
                }
                InternalCone::SecondOrder(d) => {
                    for r in 0..d {
                        for cidx in r..d {
                            pattern_entries.push((base + r, base + cidx));
                        }
                    }
                }
            }
        }

        let adj = Adjacency::from_upper_entries(
            big,
            pattern_entries.iter().copied().filter(|(i, j)| i != j),
        );
        let perm = fill_reducing_order(&adj);
        let iperm = invert_permutation(&perm);

        let permuted: Vec<(usize, usize, f64)> = pattern_entries
            .iter()
            .map(|&(i, j)| {
                let (pi, pj) = (iperm[i], iperm[j]);
                (pi.min(pj), pi.max(pj), 0.0)
            })
            .collect();
        let (pattern, slots) = CscMatrix::from_triplets_with_map(big, big, &permuted);
        let symbolic = LdlSymbolic::analyze(&pattern);
        let pivot_sign: Vec<f64> = (0..big)
            .map(|k| if perm[k] < n { 1.0 } else { -1.0 })
            .collect();

        Self {
            n,
            m,
            perm,
            symbolic,
            pattern,
            slots,
            pivot_sign,
            a_values,
            static_reg,
            block_offsets,
            cones: cones.to_vec(),
            factor: None,
            scalings: Vec::new(),
        }
    }

    fn refactor(&mut self, scalings: &[Scaling]) -> Result<(), FactorError> {
        let delta = self.static_reg;
        let values = self.pattern.values_mut();
        values.fill(0.0);
        let mut idx = 0usize;
        for _ in 0..self.n {
            values[self.slots[idx]] += delta;
            idx += 1;
        }
        for &v in &self.a_values {
            values[self.slots[idx]] += v;
            idx += 1;
        }
        let mut w2 = Vec::new();
        for (k, cone) in self.cones.iter().enumerate() {
            match cone {
                InternalCone::Zero(d) => {
                    for _ in 0..*d {
                        values[self.slots[idx]] += -delta;
                        idx += 1;
                    }
                }
                _ => {
                    scalings[k].w_squared_upper(&mut w2);
                    for &(r, c, v) in &w2 {
                        let mut entry = -v;
                        if r == c {
                            entry -= delta;
                        }
                        values[self.slots[idx]] += entry;
                        idx += 1;
                    }
                }
            }
        }
        debug_assert_eq!(idx, self.slots.len());
        // scale by the (stable) problem-data norm, not the scaling-inflated
        // iteration matrix, so late iterates are not over-regularized
        let dyn_reg = DYN_REG_SCALE * (self.static_reg / STATIC_REG_SCALE);
        let factor = self.symbolic.factor(&self.pattern, &self.pivot_sign, dyn_reg)?;
        self.factor = Some(factor);
        self.scalings = scalings.to_vec();
        Ok(())
    }

    /// Apply the unregularized KKT operator `[0 A^T; A -W^2]`.
    fn apply(&self, a: &CscMatrix, x: &[f64], z: &[f64], out_x: &mut [f64], out_z: &mut [f64]) {
        out_x.fill(0.0);
        a.mul_transpose_acc(1.0, z, out_x);
        out_z.fill(0.0);
        a.mul_acc(1.0, x, out_z);
        let mut tmp = Vec::new();
        for (k, cone) in self.cones.iter().enumerate() {
            let off = self.block_offsets[k];
            let d = cone.dim();
            if matches!(cone, InternalCone::Zero(_)) {
                continue;
            }
            tmp.resize(d, 0.0);
            self.scalings[k].apply_w2(&z[off..off + d], &mut tmp);
            for t in 0..d {
                out_z[off + t] -= tmp[t];
            }
        }
    }

    /// Solve the KKT system with iterative refinement against the
    /// unregularized operator.
    fn solve(&self, a: &CscMatrix, rhs_x: &[f64], rhs_z: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let factor = self.factor.as_ref().expect("factor before solve");
        let big = self.n + self.m;
        let mut sol = vec![0.0; big];
        let mut work = vec![0.0; big];
        for k in 0..big {
            let p = self.perm[k];
            work[k] = if p < self.n { rhs_x[p] } else { rhs_z[p - self.n] };
        }
        factor.solve_in_place(&mut work);
        for k in 0..big {
            sol[self.perm[k]] = work[k];
        }

        let mut res_x = vec![0.0; self.n];
        let mut res_z = vec![0.0; self.m];
        let rhs_norm = 1.0 + norm2(rhs_x).max(norm2(rhs_z));
        for _ in 0..REFINE_ROUNDS {
            self.apply(a, &sol[..self.n], &sol[self.n..], &mut res_x, &mut res_z);
            let mut worst = 0.0f64;
            for i in 0..self.n {
                res_x[i] = rhs_x[i] - res_x[i];
                worst = worst.max(res_x[i].abs());
            }
            for i in 0..self.m {
                res_z[i] = rhs_z[i] - res_z[i];
                worst = worst.max(res_z[i].abs());
            }
            if worst <= 1e-14 * rhs_norm {
                break;
            }
            for k in 0..big {
                let p = self.perm[k];
                work[k] = if p < self.n { res_x[p] } else { res_z[p - self.n] };
            }
            factor.solve_in_place(&mut work);
            for k in 0..big {
                sol[self.perm[k]] += work[k];
            }
        }
        let z = sol.split_off(self.n);
        (sol, z)
    }
}

// ---------------------------------------------------------------------------
// IPM state

struct Ipm {
    /// internal-form program at its original scale (for residual checks)
    a0: CscMatrix,
    b0: Vec<f64>,
    c0: Vec<f64>,
    /// equilibrated data the iteration runs on
    a: CscMatrix,
    b: Vec<f64>,
    c: Vec<f64>,
    scaling: ScalingData,
    cones: Vec<InternalCone>,
    block_offsets: Vec<usize>,
    degree: usize,
    settings: SolverSettings,
    kkt: Kkt,
    // iterate
    x: Vec<f64>,
    z: Vec<f64>,
    s: Vec<f64>,
    tau: f64,
    kappa: f64,
    iterations: usize,
}

enum Outcome {
    Status(SolveStatus),
}

struct Residuals {
    pres: f64,
    dres: f64,
    gap_abs: f64,
    gap_rel: f64,
}

impl Ipm {
    fn new(
        original: &ConeProgram,
        scaled: ConeProgram,
        scaling: ScalingData,
        cones: Vec<InternalCone>,
        settings: SolverSettings,
    ) -> Self {
        let mut block_offsets = Vec::with_capacity(cones.len());
        let mut off = 0;
        for c in &cones {
            block_offsets.push(off);
            off += c.dim();
        }
        let degree: usize = cones.iter().map(|c| c.degree()).sum();
        let kkt = Kkt::new(&scaled.a, &cones);
        let n = scaled.num_vars();
        let m = scaled.num_rows();
        Self {
            a0: original.a.clone(),
            b0: original.b.clone(),
            c0: original.c.clone(),
            a: scaled.a,
            b: scaled.b,
            c: scaled.c,
            scaling,
            cones,
            block_offsets,
            degree,
            settings,
            kkt,
            x: vec![0.0; n],
            z: vec![0.0; m],
            s: vec![0.0; m],
            tau: 1.0,
            kappa: 1.0,
            iterations: 0,
        }
    }

    fn block<'v>(&self, v: &'v [f64], k: usize) -> &'v [f64] {
        let off = self.block_offsets[k];
        &v[off..off + self.cones[k].dim()]
    }

    fn identity_scalings(&self) -> Vec<Scaling> {
        self.cones.iter().map(|&c| Scaling::identity(c)).collect()
    }

    fn initialize(&mut self) -> Result<(), FactorError> {
        let ident = self.identity_scalings();
        self.kkt.refactor(&ident)?;

        // primal start: least-squares point of A x + s = b, pushed interior
        let zeros = vec![0.0; self.x.len()];
        let (x0, dz) = self.kkt.solve(&self.a, &zeros, &self.b);
        self.x = x0;
        let mut s_cand: Vec<f64> = dz.iter().map(|v| -v).collect();
        self.push_interior(&mut s_cand, false);
        self.s = s_cand;

        // dual start: least-squares point of A^T z + c = 0, pushed interior
        let neg_c: Vec<f64> = self.c.iter().map(|v| -v).collect();
        let zeros_m = vec![0.0; self.z.len()];
        let (_, mut z_cand) = self.kkt.solve(&self.a, &neg_c, &zeros_m);
        self.push_interior(&mut z_cand, true);
        self.z = z_cand;

        self.tau = 1.0;
        self.kappa = 1.0;
        Ok(())
    }

    /// Shift a row-space vector into the cone interior. For the dual side the
    /// zero-cone components are left untouched (the dual of `{0}` is free).
    fn push_interior(&self, v: &mut [f64], dual: bool) {
        let mut worst = f64::INFINITY;
        for (k, cone) in self.cones.iter().enumerate() {
            if matches!(cone, InternalCone::Zero(_)) {
                continue;
            }
            worst = worst.min(interior_margin(*cone, self.block(v, k)));
        }
        let bump = if worst.is_finite() && worst <= 0.0 {
            1.0 - worst
        } else if !worst.is_finite() {
            1.0
        } else {
            0.0
        };
        let mut e = Vec::new();
        for (k, cone) in self.cones.iter().enumerate() {
            let off = self.block_offsets[k];
            let d = cone.dim();
            match cone {
                InternalCone::Zero(_) => {
                    if !dual {
                        for t in 0..d {
                            v[off + t] = 0.0;
                        }
                    }
                }
                _ => {
                    if bump > 0.0 {
                        e.resize(d, 0.0);
                        unit_element(*cone, &mut e);
                        for t in 0..d {
                            v[off + t] += bump * e[t];
                        }
                    }
                }
            }
        }
    }

    fn mu(&self) -> f64 {
        (dot(&self.s, &self.z) + self.tau * self.kappa) / (self.degree as f64 + 1.0)
    }

    /// Residuals of the internal-form program at original scale.
    fn residuals(&self) -> Residuals {
        let inv_tau = 1.0 / self.tau;
        let x0: Vec<f64> = self
            .scaling
            .unscale_primal(&self.x)
            .iter()
            .map(|v| v * inv_tau)
            .collect();
        let s0: Vec<f64> = self
            .scaling
            .unscale_slack(&self.s)
            .iter()
            .map(|v| v * inv_tau)
            .collect();
        let z0: Vec<f64> = self
            .scaling
            .unscale_dual(&self.z)
            .iter()
            .map(|v| v * inv_tau)
            .collect();

        let mut pr = self.b0.iter().map(|v| -v).collect::<Vec<f64>>();
        self.a0.mul_acc(1.0, &x0, &mut pr);
        for (p, s) in pr.iter_mut().zip(&s0) {
            *p += s;
        }
        let pres = norm2(&pr) / (1.0 + norm2(&self.b0));

        let mut dr = self.c0.clone();
        self.a0.mul_transpose_acc(1.0, &z0, &mut dr);
        let dres = norm2(&dr) / (1.0 + norm2(&self.c0));

        let pobj = dot(&self.c0, &x0);
        let dobj = -dot(&self.b0, &z0);
        let gap_abs = dot(&s0, &z0);
        let gap_rel = gap_abs / (1.0 + pobj.abs() + dobj.abs());
        Residuals { pres, dres, gap_abs, gap_rel }
    }

    fn check_infeasibility(&self) -> Option<SolveStatus> {
        // tau/kappa ratio gate of the homogeneous embedding
        if self.kappa < 1e-10 || self.tau > 1e-6 * self.kappa.max(1.0) {
            return None;
        }
        let x0 = self.scaling.unscale_primal(&self.x);
        let s0 = self.scaling.unscale_slack(&self.s);
        let z0 = self.scaling.unscale_dual(&self.z);
        let btz = dot(&self.b0, &z0);
        if btz < 0.0 {
            let mut atz = vec![0.0; self.c0.len()];
            self.a0.mul_transpose_acc(1.0, &z0, &mut atz);
            if norm2(&atz) <= self.settings.eps_rel * (1.0 + norm2(&self.c0)) * (-btz) {
                return Some(SolveStatus::PrimalInfeasible);
            }
        }
        let ctx = dot(&self.c0, &x0);
        if ctx < 0.0 {
            let mut axs = s0.clone();
            self.a0.mul_acc(1.0, &x0, &mut axs);
            if norm2(&axs) <= self.settings.eps_rel * (1.0 + norm2(&self.b0)) * (-ctx) {
                return Some(SolveStatus::DualInfeasible);
            }
        }
        None
    }

    fn run(&mut self, t0: Instant) -> Outcome {
        if self.initialize().is_err() {
            return Outcome::Status(SolveStatus::NumericalFailure);
        }
        let m = self.z.len();
        let n = self.x.len();
        let mut tiny_steps = 0usize;

        for iter in 0..self.settings.max_iterations {
            self.iterations = iter;
            let res = self.residuals();
            if res.pres <= self.settings.eps_rel
                && res.dres <= self.settings.eps_rel
                && (res.gap_abs <= self.settings.eps_abs || res.gap_rel <= self.settings.eps_rel)
            {
                return Outcome::Status(SolveStatus::Optimal);
            }
            if let Some(status) = self.check_infeasibility() {
                return Outcome::Status(status);
            }
            if let Some(limit) = self.settings.time_limit_seconds {
                if t0.elapsed().as_secs_f64() > limit {
                    return Outcome::Status(SolveStatus::MaxIterations);
                }
            }

            // NT scaling at the current iterate
            let mut scalings = Vec::with_capacity(self.cones.len());
            for (k, cone) in self.cones.iter().enumerate() {
                match Scaling::from_pair(*cone, self.block(&self.s, k), self.block(&self.z, k)) {
                    Some(w) => scalings.push(w),
                    None => return Outcome::Status(SolveStatus::NumericalFailure),
                }
            }
            if self.kkt.refactor(&scalings).is_err() {
                return Outcome::Status(SolveStatus::NumericalFailure);
            }
            let lambdas: Vec<Vec<f64>> = (0..self.cones.len())
                .map(|k| scalings[k].lambda(self.block(&self.z, k)))
                .collect();
            let mu = self.mu();

            // tau column
            let neg_c: Vec<f64> = self.c.iter().map(|v| -v).collect();
            let (u1, v1) = self.kkt.solve(&self.a, &neg_c, &self.b);

            // current homogeneous residuals (scaled space)
            let mut res1 = vec![0.0; n];
            self.a.mul_transpose_acc(1.0, &self.z, &mut res1);
            for (r, cv) in res1.iter_mut().zip(&self.c) {
                *r += cv * self.tau;
            }
            let mut res2 = self.s.clone();
            self.a.mul_acc(1.0, &self.x, &mut res2);
            for (r, bv) in res2.iter_mut().zip(&self.b) {
                *r -= bv * self.tau;
            }
            let res3 = dot(&self.c, &self.x) + dot(&self.b, &self.z) + self.kappa;

            // predictor (affine) direction
            let mut ds_rhs = vec![0.0; m];
            for (k, cone) in self.cones.iter().enumerate() {
                if matches!(cone, InternalCone::Zero(_)) {
                    continue;
                }
                let off = self.block_offsets[k];
                let d = cone.dim();
                let mut ll = vec![0.0; d];
                jordan_product(*cone, &lambdas[k], &lambdas[k], &mut ll);
                for t in 0..d {
                    ds_rhs[off + t] = -ll[t];
                }
            }
            let affine = self.direction(
                &scalings,
                &lambdas,
                (&u1, &v1),
                &res1,
                &res2,
                res3,
                1.0,
                &ds_rhs,
                -self.tau * self.kappa,
            );
            let alpha_aff = self.max_step(&affine).min(1.0);
            let sigma = (1.0 - alpha_aff).powi(3).clamp(0.0, 1.0);

            // corrector terms: (W^{-1} ds_aff) o (W dz_aff) and dtau*dkappa
            for (k, cone) in self.cones.iter().enumerate() {
                if matches!(cone, InternalCone::Zero(_)) {
                    continue;
                }
                let off = self.block_offsets[k];
                let d = cone.dim();
                let mut ws = vec![0.0; d];
                let mut wz = vec![0.0; d];
                scalings[k].apply_inv(&affine.ds[off..off + d], &mut ws);
                scalings[k].apply(&affine.dz[off..off + d], &mut wz);
                let mut corr = vec![0.0; d];
                jordan_product(*cone, &ws, &wz, &mut corr);
                let mut ll = vec![0.0; d];
                jordan_product(*cone, &lambdas[k], &lambdas[k], &mut ll);
                let mut e = vec![0.0; d];
                unit_element(*cone, &mut e);
                for t in 0..d {
                    ds_rhs[off + t] = -ll[t] - corr[t] + sigma * mu * e[t];
                }
            }
            let dkappa_rhs = -self.tau * self.kappa - affine.dtau * affine.dkappa + sigma * mu;
            let combined = self.direction(
                &scalings,
                &lambdas,
                (&u1, &v1),
                &res1,
                &res2,
                res3,
                1.0 - sigma,
                &ds_rhs,
                dkappa_rhs,
            );

            let alpha = (STEP_FRACTION * self.max_step(&combined)).min(1.0);
            if !alpha.is_finite() || alpha <= 1e-10 {
                tiny_steps += 1;
                if tiny_steps >= 3 {
                    return Outcome::Status(SolveStatus::NumericalFailure);
                }
            } else {
                tiny_steps = 0;
            }

            for i in 0..n {
                self.x[i] += alpha * combined.dx[i];
            }
            for i in 0..m {
                self.z[i] += alpha * combined.dz[i];
                self.s[i] += alpha * combined.ds[i];
            }
            self.tau += alpha * combined.dtau;
            self.kappa += alpha * combined.dkappa;
            if !self.tau.is_finite() || !self.kappa.is_finite() || self.tau <= 0.0 {
                return Outcome::Status(SolveStatus::NumericalFailure);
            }
        }
        self.iterations = self.settings.max_iterations;
        Outcome::Status(SolveStatus::MaxIterations)
    }

    /// Solve for a search direction given complementarity right-hand sides.
    #[allow(clippy::too_many_arguments)]
    fn direction(
        &self,
        scalings: &[Scaling],
        lambdas: &[Vec<f64>],
        tau_col: (&[f64], &[f64]),
        res1: &[f64],
        res2: &[f64],
        res3: f64,
        residual_weight: f64,
        ds_rhs: &[f64],
        dkappa_rhs: f64,
    ) -> Direction {
        let n = self.x.len();
        let m = self.z.len();
        let (u1, v1) = tau_col;

        let r1: Vec<f64> = res1.iter().map(|v| -residual_weight * v).collect();
        let r2: Vec<f64> = res2.iter().map(|v| -residual_weight * v).collect();
        let r3 = -residual_weight * res3;

        // g = lambda \ ds_rhs, then rhs2 = r2 - W g
        let mut wg = vec![0.0; m];
        for (k, cone) in self.cones.iter().enumerate() {
            if matches!(cone, InternalCone::Zero(_)) {
                continue;
            }
            let off = self.block_offsets[k];
            let d = cone.dim();
            let mut g = vec![0.0; d];
            jordan_solve(*cone, &lambdas[k], &ds_rhs[off..off + d], &mut g);
            let mut wg_blk = vec![0.0; d];
            scalings[k].apply(&g, &mut wg_blk);
            wg[off..off + d].copy_from_slice(&wg_blk);
        }
        let rhs2: Vec<f64> = r2.iter().zip(&wg).map(|(r, w)| r - w).collect();
        let (u2, v2) = self.kkt.solve(&self.a, &r1, &rhs2);

        let denom = dot(&self.c, u1) + dot(&self.b, v1) - self.kappa / self.tau;
        let dtau =
            (r3 - dkappa_rhs / self.tau - dot(&self.c, &u2) - dot(&self.b, &v2)) / denom;

        let mut dx = u2;
        let mut dz = v2;
        for i in 0..n {
            dx[i] += dtau * u1[i];
        }
        for i in 0..m {
            dz[i] += dtau * v1[i];
        }
        // ds = W g - W^2 dz (zero blocks stay at zero)
        let mut ds = vec![0.0; m];
        for (k, cone) in self.cones.iter().enumerate() {
            if matches!(cone, InternalCone::Zero(_)) {
                continue;
            }
            let off = self.block_offsets[k];
            let d = cone.dim();
            let mut w2dz = vec![0.0; d];
            scalings[k].apply_w2(&dz[off..off + d], &mut w2dz);
            for t in 0..d {
                ds[off + t] = wg[off + t] - w2dz[t];
            }
        }
        let dkappa = (dkappa_rhs - self.kappa * dtau) / self.tau;
        Direction { dx, dz, ds, dtau, dkappa }
    }

    fn max_step(&self, dir: &Direction) -> f64 {
        let mut alpha = f64::INFINITY;
        for (k, cone) in self.cones.iter().enumerate() {
            if matches!(cone, InternalCone::Zero(_)) {
                continue;
            }
            let off = self.block_offsets[k];
            let d = cone.dim();
            alpha = alpha.min(step_to_boundary(
                *cone,
                self.block(&self.s, k),
                &dir.ds[off..off + d],
            ));
            alpha = alpha.min(step_to_boundary(
                *cone,
                self.block(&self.z, k),
                &dir.dz[off..off + d],
            ));
        }
        if dir.dtau < 0.0 {
            alpha = alpha.min(-self.tau / dir.dtau);
        }
        if dir.dkappa < 0.0 {
            alpha = alpha.min(-self.kappa / dir.dkappa);
        }
        alpha
    }
}

struct Direction {
    dx: Vec<f64>,
    dz: Vec<f64>,
    ds: Vec<f64>,
    dtau: f64,
    dkappa: f64,
}

// ---------------------------------------------------------------------------
// result assembly

fn finish(
    original: &ConeProgram,
    internal: &InternalForm,
    ipm: Ipm,
    outcome: Outcome,
    t0: Instant,
) -> SolverResult {
    let Outcome::Status(status) = outcome;
    let infeasible = matches!(
        status,
        SolveStatus::PrimalInfeasible | SolveStatus::DualInfeasible
    );
    let scale = if infeasible || ipm.tau <= 0.0 { 1.0 } else { 1.0 / ipm.tau };

    let mut x = ipm.scaling.unscale_primal(&ipm.x);
    let mut s = ipm.scaling.unscale_slack(&ipm.s);
    let mut z = ipm.scaling.unscale_dual(&ipm.z);
    for v in x.iter_mut().chain(s.iter_mut()).chain(z.iter_mut()) {
        *v *= scale;
    }
    rsoc_transform(&mut s, &internal.rsoc_offsets);
    rsoc_transform(&mut z, &internal.rsoc_offsets);

    // report residuals against the caller's program
    let mut pr: Vec<f64> = original.b.iter().map(|v| -v).collect();
    original.a.mul_acc(1.0, &x, &mut pr);
    for (p, sv) in pr.iter_mut().zip(&s) {
        *p += sv;
    }
    let primal_residual = norm2(&pr) / (1.0 + norm2(&original.b));
    let mut dr = original.c.clone();
    original.a.mul_transpose_acc(1.0, &z, &mut dr);
    let dual_residual = norm2(&dr) / (1.0 + norm2(&original.c));
    let pobj = dot(&original.c, &x);
    let dobj = -dot(&original.b, &z);
    let gap_abs = dot(&s, &z).max(0.0);
    let duality_gap = gap_abs / (1.0 + pobj.abs() + dobj.abs());

    SolverResult {
        status,
        primal: x,
        slack: s,
        dual: z,
        objective: pobj,
        primal_residual,
        dual_residual,
        duality_gap,
        iterations: ipm.iterations,
        wall_time_seconds: t0.elapsed().as_secs_f64(),
    }
}

fn trivial_result(program: &ConeProgram, t0: Instant) -> SolverResult {
    // no variables or no rows: the origin decides everything
    let n = program.num_vars();
    let m = program.num_rows();
    let status = if m == 0 && program.c.iter().any(|&v| v != 0.0) {
        SolveStatus::DualInfeasible
    } else {
        SolveStatus::Optimal
    };
    SolverResult {
        status,
        primal: vec![0.0; n],
        slack: program.b.clone(),
        dual: vec![0.0; m],
        objective: 0.0,
        primal_residual: 0.0,
        dual_residual: 0.0,
        duality_gap: 0.0,
        iterations: 0,
        wall_time_seconds: t0.elapsed().as_secs_f64(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::program::ConeProgramBuilder;

    fn solve_default(prog: &ConeProgram) -> SolverResult {
        solve(prog, &SolverSettings::default()).unwrap()
    }

    #[test]
    fn lp_min_x_subject_to_x_ge_one() {
        let mut builder = ConeProgramBuilder::new();
        let x = builder.add_var();
        builder.add_objective(x, 1.0);
        builder.add_nonneg_block(&[(&[(x, -1.0)], -1.0)]);
        let result = solve_default(&builder.build());
        assert_eq!(result.status, SolveStatus::Optimal);
        assert!((result.primal[0] - 1.0).abs() < 1e-7, "x = {}", result.primal[0]);
        assert!((result.objective - 1.0).abs() < 1e-7);
    }

    #[test]
    fn soc_distance_to_point() {
        // minimize u s.t. u >= ||(3,4)||; the constant entries ride on the
        // pinned unit variable so no row of A is empty
        let mut builder = ConeProgramBuilder::new();
        let u = builder.add_var();
        builder.add_objective(u, 1.0);
        let one = builder.unit_var();
        builder.add_soc_block(&[
            (&[(u, -1.0)], 0.0),
            (&[(one, -3.0)], 0.0),
            (&[(one, -4.0)], 0.0),
        ]);
        let result = solve_default(&builder.build());
        assert_eq!(result.status, SolveStatus::Optimal);
        assert!((result.objective - 5.0).abs() < 1e-6, "obj = {}", result.objective);
    }

    #[test]
    fn quadratic_epigraph_reaches_zero() {
        // minimize (x - 2)^2
        let mut builder = ConeProgramBuilder::new();
        let x = builder.add_var();
        builder.add_sum_of_squares_term(&[(&[(x, 1.0)], 2.0)]);
        let result = solve_default(&builder.build());
        assert_eq!(result.status, SolveStatus::Optimal);
        assert!((result.primal[0] - 2.0).abs() < 1e-5);
        assert!(result.objective.abs() < 1e-7);
    }

    #[test]
    fn quadratic_epigraph_with_pinned_variable() {
        // minimize (x - 2)^2 with x = 3
        let mut builder = ConeProgramBuilder::new();
        let x = builder.add_var();
        builder.add_zero_block(&[(&[(x, 1.0)], 3.0)]);
        builder.add_sum_of_squares_term(&[(&[(x, 1.0)], 2.0)]);
        let result = solve_default(&builder.build());
        assert_eq!(result.status, SolveStatus::Optimal);
        assert!((result.objective - 1.0).abs() < 1e-6, "obj = {}", result.objective);
    }

    #[test]
    fn least_squares_two_anchors() {
        // minimize ||x - a||^2 + ||x - b||^2 in 2D; optimum at midpoint with
        // objective ||a - b||^2 / 2
        let a = [1.0, 2.0];
        let bb = [4.0, -2.0];
        let mut builder = ConeProgramBuilder::new();
        let x = builder.add_vars(2);
        let (x0, x1) = (x.start, x.start + 1);
        builder.add_sum_of_squares_term(&[(&[(x0, 1.0)], a[0]), (&[(x1, 1.0)], a[1])]);
        builder.add_sum_of_squares_term(&[(&[(x0, 1.0)], bb[0]), (&[(x1, 1.0)], bb[1])]);
        let result = solve_default(&builder.build());
        assert_eq!(result.status, SolveStatus::Optimal);
        let d2 = (a[0] - bb[0]).powi(2) + (a[1] - bb[1]).powi(2);
        assert!((result.objective - d2 / 2.0).abs() < 1e-6);
        assert!((result.primal[0] - 2.5).abs() < 1e-5);
        assert!((result.primal[1] - 0.0).abs() < 1e-5);
    }

    #[test]
    fn detects_primal_infeasible() {
        // x >= 1 and -x >= 0
        let mut builder = ConeProgramBuilder::new();
        let x = builder.add_var();
        builder.add_objective(x, 1.0);
        builder.add_nonneg_block(&[(&[(x, -1.0)], -1.0), (&[(x, 1.0)], 0.0)]);
        let result = solve_default(&builder.build());
        assert_eq!(result.status, SolveStatus::PrimalInfeasible);
    }

    #[test]
    fn detects_dual_infeasible() {
        // minimize x with only x <= 5: unbounded below
        let mut builder = ConeProgramBuilder::new();
        let x = builder.add_var();
        builder.add_objective(x, 1.0);
        builder.add_nonneg_block(&[(&[(x, 1.0)], 5.0)]);
        let result = solve_default(&builder.build());
        assert_eq!(result.status, SolveStatus::DualInfeasible);
    }

    #[test]
    fn deterministic_bitwise() {
        let mut builder = ConeProgramBuilder::new();
        let x = builder.add_vars(3);
        let (x0, x1, x2) = (x.start, x.start + 1, x.start + 2);
        builder.add_objective(x2, 1.0);
        builder.add_soc_block(&[
            (&[(x2, -1.0)], 0.0),
            (&[(x0, -1.0)], 1.5),
            (&[(x1, -1.0)], -0.5),
        ]);
        builder.add_nonneg_block(&[(&[(x0, -1.0), (x1, -2.0)], -0.3)]);
        let prog = builder.build();
        let r1 = solve_default(&prog);
        let r2 = solve_default(&prog);
        assert_eq!(r1.status, r2.status);
        for (a, b) in r1.primal.iter().zip(&r2.primal) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        assert_eq!(r1.objective.to_bits(), r2.objective.to_bits());
    }
}
