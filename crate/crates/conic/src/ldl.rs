//! Sparse LDL^T factorization of symmetric quasidefinite matrices.
//!
//! Up-looking factorization over an elimination tree, in the style of the
//! classic LDL algorithm. Only the upper triangle of the input is read.
//! Quasidefinite inputs (positive diagonal block followed by negative) stay
//! factorizable without pivoting; dynamic regularization bumps pivots whose
//! magnitude collapses so rank-deficient iterates cannot break the solve.

use crate::sparse::CscMatrix;

/// Symbolic structure reused across numeric refactorizations.
pub struct LdlSymbolic {
    n: usize,
    parent: Vec<usize>,
    l_col_ptr: Vec<usize>,
}

/// Numeric factor `P K P^T = L D L^T` with unit lower-triangular `L`.
pub struct LdlFactor {
    n: usize,
    l_col_ptr: Vec<usize>,
    l_row_idx: Vec<usize>,
    l_values: Vec<f64>,
    d: Vec<f64>,
    /// number of pivots that required regularization
    pub regularized: usize,
}

const NONE: usize = usize::MAX;

impl LdlSymbolic {
    /// Analyze the upper-triangular pattern of `k` (diagonal included).
    pub fn analyze(k: &CscMatrix) -> Self {
        let n = k.ncols();
        assert_eq!(k.nrows(), n);
        let mut parent = vec![NONE; n];
        let mut flag = vec![NONE; n];
        let mut l_nz = vec![0usize; n];
        for col in 0..n {
            parent[col] = NONE;
            flag[col] = col;
            let (rows, _) = k.col(col);
            for &row in rows {
                debug_assert!(row <= col, "input must be upper triangular");
                let mut i = row;
                while i != col && flag[i] != col {
                    // walking up the elimination tree marks column `col`'s row
                    // pattern; each visited node gains an entry in column i of L
                    l_nz[i] += 1;
                    flag[i] = col;
                    if parent[i] == NONE {
                        parent[i] = col;
                    }
                    i = parent[i];
                }
            }
        }
        let mut l_col_ptr = vec![0usize; n + 1];
        for i in 0..n {
            l_col_ptr[i + 1] = l_col_ptr[i] + l_nz[i];
        }
        Self { n, parent, l_col_ptr }
    }

    pub fn l_nnz(&self) -> usize {
        self.l_col_ptr[self.n]
    }

    /// Numeric factorization. `pivot_sign[k]` gives the expected sign of the
    /// k-th pivot (after permutation); when `|d| < dyn_reg` the pivot is
    /// replaced by `sign * dyn_reg`.
    pub fn factor(
        &self,
        k: &CscMatrix,
        pivot_sign: &[f64],
        dyn_reg: f64,
    ) -> Result<LdlFactor, FactorError> {
        let n = self.n;
        let mut l_row_idx = vec![0usize; self.l_nnz()];
        let mut l_values = vec![0.0f64; self.l_nnz()];
        let mut d = vec![0.0f64; n];
        let mut y = vec![0.0f64; n];
        let mut pattern = vec![0usize; n];
        let mut flag = vec![NONE; n];
        let mut l_next = vec![0usize; n]; // fill position per column of L
        let mut regularized = 0usize;

        for col in 0..n {
            let mut top = n;
            flag[col] = col;
            y[col] = 0.0;
            let (rows, vals) = k.col(col);
            for (&row, &val) in rows.iter().zip(vals) {
                y[row] += val;
                let mut len = 0usize;
                let mut i = row;
                while flag[i] != col {
                    pattern[len] = i;
                    len += 1;
                    flag[i] = col;
                    i = self.parent[i];
                }
                while len > 0 {
                    len -= 1;
                    top -= 1;
                    pattern[top] = pattern[len];
                }
            }
            d[col] = y[col];
            y[col] = 0.0;
            for &i in &pattern[top..n] {
                let yi = y[i];
                y[i] = 0.0;
                let start = self.l_col_ptr[i];
                let end = start + l_next[i];
                for p in start..end {
                    y[l_row_idx[p]] -= l_values[p] * yi;
                }
                let lki = yi / d[i];
                d[col] -= lki * yi;
                l_row_idx[end] = col;
                l_values[end] = lki;
                l_next[i] += 1;
            }
            if !d[col].is_finite() {
                return Err(FactorError::NotFinite { pivot: col });
            }
            // pivot must be bumped before later columns divide by it
            if d[col].abs() < dyn_reg {
                d[col] = if pivot_sign[col] < 0.0 { -dyn_reg } else { dyn_reg };
                regularized += 1;
            } else if d[col] == 0.0 {
                return Err(FactorError::Singular { pivot: col });
            }
        }
        Ok(LdlFactor {
            n,
            l_col_ptr: self.l_col_ptr.clone(),
            l_row_idx,
            l_values,
            d,
            regularized,
        })
    }
}

impl LdlFactor {
    /// Solve `K x = b` in place (in the permuted index space).
    pub fn solve_in_place(&self, x: &mut [f64]) {
        debug_assert_eq!(x.len(), self.n);
        // forward L z = b
        for i in 0..self.n {
            let xi = x[i];
            if xi != 0.0 {
                for p in self.l_col_ptr[i]..self.l_col_ptr[i + 1] {
                    x[self.l_row_idx[p]] -= self.l_values[p] * xi;
                }
            }
        }
        for i in 0..self.n {
            x[i] /= self.d[i];
        }
        // backward L^T x = z
        for i in (0..self.n).rev() {
            let mut acc = x[i];
            for p in self.l_col_ptr[i]..self.l_col_ptr[i + 1] {
                acc -= self.l_values[p] * x[self.l_row_idx[p]];
            }
            x[i] = acc;
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum FactorError {
    NotFinite { pivot: usize },
    Singular { pivot: usize },
}

impl std::fmt::Display for FactorError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            FactorError::NotFinite { pivot } => {
                write!(f, "non-finite pivot encountered at column {pivot}")
            }
            FactorError::Singular { pivot } => {
                write!(f, "exactly singular pivot at column {pivot}")
            }
        }
    }
}

impl std::error::Error for FactorError {}
