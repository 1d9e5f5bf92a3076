//! Standard-form conic programs and a builder with epigraph lowering for
//! sum-of-squares objectives.
//!
//! A program is `minimize c^T x  subject to  A x + s = b, s in K` where `K`
//! is a product of zero, nonnegative, second-order and rotated second-order
//! cone blocks, in the order listed by the [`ConeSpec`].

use crate::sparse::CscMatrix;

/// One block of the product cone.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConeBlock {
    /// `s = 0` (equality rows).
    Zero(usize),
    /// `s >= 0` componentwise.
    NonNegative(usize),
    /// `s_1 >= ||s_2..n||_2`.
    SecondOrder(usize),
    /// `2 s_1 s_2 >= ||s_3..n||_2^2`, `s_1, s_2 >= 0`.
    RotatedSecondOrder(usize),
}

impl ConeBlock {
    pub fn dim(&self) -> usize {
        match *self {
            ConeBlock::Zero(n)
            | ConeBlock::NonNegative(n)
            | ConeBlock::SecondOrder(n)
            | ConeBlock::RotatedSecondOrder(n) => n,
        }
    }
}

/// Ordered list of cone blocks covering all constraint rows.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ConeSpec {
    pub blocks: Vec<ConeBlock>,
}

impl ConeSpec {
    pub fn total_dim(&self) -> usize {
        self.blocks.iter().map(|b| b.dim()).sum()
    }

    pub fn validate(&self) -> Result<(), ProgramError> {
        for (k, b) in self.blocks.iter().enumerate() {
            let ok = match *b {
                ConeBlock::Zero(n) | ConeBlock::NonNegative(n) => n >= 1,
                ConeBlock::SecondOrder(n) => n >= 2,
                ConeBlock::RotatedSecondOrder(n) => n >= 3,
            };
            if !ok {
                return Err(ProgramError::BadConeBlock { index: k, block: *b });
            }
        }
        Ok(())
    }

    /// Row offsets of each block.
    pub fn offsets(&self) -> Vec<usize> {
        let mut off = Vec::with_capacity(self.blocks.len());
        let mut acc = 0;
        for b in &self.blocks {
            off.push(acc);
            acc += b.dim();
        }
        off
    }
}

/// Standard-form conic program.
#[derive(Debug, Clone)]
pub struct ConeProgram {
    /// Linear objective, `minimize c^T x`.
    pub c: Vec<f64>,
    /// Constraint map in `A x + s = b`.
    pub a: CscMatrix,
    /// Constraint offset.
    pub b: Vec<f64>,
    pub cones: ConeSpec,
}

impl ConeProgram {
    pub fn num_vars(&self) -> usize {
        self.c.len()
    }

    pub fn num_rows(&self) -> usize {
        self.b.len()
    }

    pub fn validate(&self) -> Result<(), ProgramError> {
        self.cones.validate()?;
        let m = self.b.len();
        let n = self.c.len();
        if self.a.nrows() != m || self.a.ncols() != n {
            return Err(ProgramError::ShapeMismatch {
                a_shape: (self.a.nrows(), self.a.ncols()),
                m,
                n,
            });
        }
        if self.cones.total_dim() != m {
            return Err(ProgramError::ConeDimMismatch { cone_dim: self.cones.total_dim(), m });
        }
        for (i, j, v) in self.a.iter() {
            if !v.is_finite() {
                return Err(ProgramError::NotFinite { what: "A", index: i.max(j) });
            }
        }
        for (i, v) in self.b.iter().enumerate() {
            if !v.is_finite() {
                return Err(ProgramError::NotFinite { what: "b", index: i });
            }
        }
        for (i, v) in self.c.iter().enumerate() {
            if !v.is_finite() {
                return Err(ProgramError::NotFinite { what: "c", index: i });
            }
        }
        let mut row_has_entry = vec![false; m];
        for (i, _, v) in self.a.iter() {
            if v != 0.0 {
                row_has_entry[i] = true;
            }
        }
        if let Some(i) = row_has_entry.iter().position(|&h| !h) {
            return Err(ProgramError::EmptyRow { row: i });
        }
        Ok(())
    }

    /// Plain-text dump for cross-checking against external solvers.
    ///
    /// Format: header `n m`, then `c i value` for nonzero objective entries,
    /// `A i j value` per matrix entry, `b i value` for nonzero offsets, and
    /// one `K kind dim` line per cone block.
    pub fn dump(&self) -> String {
        use std::fmt::Write;
        let mut out = String::new();
        let _ = writeln!(out, "{} {}", self.num_vars(), self.num_rows());
        for (i, v) in self.c.iter().enumerate() {
            if *v != 0.0 {
                let _ = writeln!(out, "c {} {:.17e}", i, v);
            }
        }
        for (i, j, v) in self.a.iter() {
            let _ = writeln!(out, "A {} {} {:.17e}", i, j, v);
        }
        for (i, v) in self.b.iter().enumerate() {
            if *v != 0.0 {
                let _ = writeln!(out, "b {} {:.17e}", i, v);
            }
        }
        for blk in &self.cones.blocks {
            let (kind, dim) = match *blk {
                ConeBlock::Zero(n) => ("zero", n),
                ConeBlock::NonNegative(n) => ("nonneg", n),
                ConeBlock::SecondOrder(n) => ("soc", n),
                ConeBlock::RotatedSecondOrder(n) => ("rsoc", n),
            };
            let _ = writeln!(out, "K {} {}", kind, dim);
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ProgramError {
    BadConeBlock { index: usize, block: ConeBlock },
    ShapeMismatch { a_shape: (usize, usize), m: usize, n: usize },
    ConeDimMismatch { cone_dim: usize, m: usize },
    NotFinite { what: &'static str, index: usize },
    EmptyRow { row: usize },
}

impl std::fmt::Display for ProgramError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ProgramError::BadConeBlock { index, block } => {
                write!(f, "cone block {index} has invalid size: {block:?}")
            }
            ProgramError::ShapeMismatch { a_shape, m, n } => write!(
                f,
                "A is {}x{} but expected {m}x{n}",
                a_shape.0, a_shape.1
            ),
            ProgramError::ConeDimMismatch { cone_dim, m } => {
                write!(f, "cone blocks cover {cone_dim} rows but b has {m}")
            }
            ProgramError::NotFinite { what, index } => {
                write!(f, "non-finite entry in {what} at index {index}")
            }
            ProgramError::EmptyRow { row } => write!(f, "row {row} of A has no nonzero entries"),
        }
    }
}

impl std::error::Error for ProgramError {}

/// A linear expression `sum coef_k x_k` used when adding rows.
pub type LinExpr<'a> = &'a [(usize, f64)];

/// Incremental construction of a [`ConeProgram`].
///
/// Rows are appended block by block; the builder keeps `A x + s = b`
/// bookkeeping so callers only state the linear expression each slack
/// component must equal.
#[derive(Debug, Default)]
pub struct ConeProgramBuilder {
    num_vars: usize,
    objective: Vec<(usize, f64)>,
    triplets: Vec<(usize, usize, f64)>,
    b: Vec<f64>,
    blocks: Vec<ConeBlock>,
    unit_var: Option<usize>,
}

impl ConeProgramBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_var(&mut self) -> usize {
        self.num_vars += 1;
        self.num_vars - 1
    }

    pub fn add_vars(&mut self, count: usize) -> std::ops::Range<usize> {
        let start = self.num_vars;
        self.num_vars += count;
        start..self.num_vars
    }

    pub fn num_vars(&self) -> usize {
        self.num_vars
    }

    pub fn num_rows(&self) -> usize {
        self.b.len()
    }

    /// Add `coef * x[var]` to the objective.
    pub fn add_objective(&mut self, var: usize, coef: f64) {
        self.objective.push((var, coef));
    }

    /// A variable pinned to 1 by a zero-cone row, shared by all callers.
    /// Lets constant slack entries be expressed without all-zero rows in `A`.
    pub fn unit_var(&mut self) -> usize {
        if let Some(u) = self.unit_var {
            return u;
        }
        let u = self.add_var();
        self.push_row(&[(u, 1.0)], 1.0);
        self.blocks.push(ConeBlock::Zero(1));
        self.unit_var = Some(u);
        u
    }

    fn push_row(&mut self, expr: LinExpr, rhs: f64) {
        // row encodes  s_i = rhs - expr  via  A x + s = b
        let row = self.b.len();
        for &(var, coef) in expr {
            debug_assert!(var < self.num_vars);
            if coef != 0.0 {
                self.triplets.push((row, var, coef));
            }
        }
        self.b.push(rhs);
    }

    /// Equality rows: `expr_k = rhs_k` for each row.
    pub fn add_zero_block(&mut self, rows: &[(LinExpr, f64)]) {
        for &(expr, rhs) in rows {
            self.push_row(expr, rhs);
        }
        self.blocks.push(ConeBlock::Zero(rows.len()));
    }

    /// Inequality rows: `rhs_k - expr_k >= 0`.
    pub fn add_nonneg_block(&mut self, rows: &[(LinExpr, f64)]) {
        for &(expr, rhs) in rows {
            self.push_row(expr, rhs);
        }
        self.blocks.push(ConeBlock::NonNegative(rows.len()));
    }

    /// Second-order block over the slack vector `s_k = rhs_k - expr_k`.
    pub fn add_soc_block(&mut self, rows: &[(LinExpr, f64)]) {
        assert!(rows.len() >= 2);
        for &(expr, rhs) in rows {
            self.push_row(expr, rhs);
        }
        self.blocks.push(ConeBlock::SecondOrder(rows.len()));
    }

    /// Rotated second-order block over the slack vector.
    pub fn add_rsoc_block(&mut self, rows: &[(LinExpr, f64)]) {
        assert!(rows.len() >= 3);
        for &(expr, rhs) in rows {
            self.push_row(expr, rhs);
        }
        self.blocks.push(ConeBlock::RotatedSecondOrder(rows.len()));
    }

    /// Lower a sum-of-squares term `||P x - q||^2` into the objective.
    ///
    /// Each input row is one component `(expr, q_k)` of `P x - q`. A fresh
    /// epigraph scalar `y` is introduced with unit objective weight and the
    /// rotated cone block `(y, 1/2, P x - q)`, i.e. `2 * y * (1/2) >=
    /// ||P x - q||^2`, so at the optimum `y` equals the squared residual.
    /// Returns the index of `y`.
    pub fn add_sum_of_squares_term(&mut self, rows: &[(LinExpr, f64)]) -> usize {
        assert!(!rows.is_empty(), "sum-of-squares term needs at least one row");
        let unit = self.unit_var();
        let y = self.add_var();
        self.add_objective(y, 1.0);
        let row0 = self.b.len();
        self.push_row(&[(y, -1.0)], 0.0); // s_1 = y
        self.push_row(&[(unit, -0.5)], 0.0); // s_2 = 1/2
        for &(expr, q) in rows {
            // s = (P x - q): negate the usual s = rhs - expr convention
            let row = self.b.len();
            for &(var, coef) in expr {
                debug_assert!(var < self.num_vars);
                if coef != 0.0 {
                    self.triplets.push((row, var, -coef));
                }
            }
            self.b.push(-q);
        }
        let dim = self.b.len() - row0;
        self.blocks.push(ConeBlock::RotatedSecondOrder(dim));
        y
    }

    pub fn build(self) -> ConeProgram {
        let m = self.b.len();
        let a = CscMatrix::from_triplets(m, self.num_vars, &self.triplets);
        let mut c = vec![0.0; self.num_vars];
        for (var, coef) in self.objective {
            c[var] += coef;
        }
        ConeProgram { c, a, b: self.b, cones: ConeSpec { blocks: self.blocks } }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builder_shapes_and_validation() {
        let mut builder = ConeProgramBuilder::new();
        let x = builder.add_var();
        builder.add_objective(x, 1.0);
        // x >= 1  =>  s = x - 1 >= 0  =>  rhs=-1, expr=-x
        builder.add_nonneg_block(&[(&[(x, -1.0)], -1.0)]);
        let prog = builder.build();
        prog.validate().unwrap();
        assert_eq!(prog.num_vars(), 1);
        assert_eq!(prog.num_rows(), 1);
    }

    #[test]
    fn validate_rejects_empty_row() {
        let a = CscMatrix::from_triplets(2, 1, &[(0, 0, 1.0)]);
        let prog = ConeProgram {
            c: vec![1.0],
            a,
            b: vec![0.0, 1.0],
            cones: ConeSpec { blocks: vec![ConeBlock::NonNegative(2)] },
        };
        assert!(matches!(prog.validate(), Err(ProgramError::EmptyRow { row: 1 })));
    }

    #[test]
    fn validate_rejects_small_soc() {
        let spec = ConeSpec { blocks: vec![ConeBlock::SecondOrder(1)] };
        assert!(spec.validate().is_err());
    }

    #[test]
    fn sum_of_squares_lowering_structure() {
        let mut builder = ConeProgramBuilder::new();
        let x = builder.add_var();
        let y = builder.add_sum_of_squares_term(&[(&[(x, 1.0)], 2.0)]);
        let prog = builder.build();
        prog.validate().unwrap();
        // vars: x, unit, y; rows: unit pin + 3-row rotated block
        assert_eq!(prog.num_vars(), 3);
        assert_eq!(prog.num_rows(), 4);
        assert_eq!(prog.c[y], 1.0);
        assert_eq!(
            prog.cones.blocks,
            vec![ConeBlock::Zero(1), ConeBlock::RotatedSecondOrder(3)]
        );
    }
}
