//! Compressed sparse column matrices, just enough for the interior-point
//! solver and for assembling least-squares normal equations.

/// Sparse matrix in compressed sparse column format.
///
/// Row indices within each column are strictly increasing and duplicate
/// entries have been summed.
#[derive(Debug, Clone, PartialEq)]
pub struct CscMatrix {
    nrows: usize,
    ncols: usize,
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CscMatrix {
    /// Build from triplets `(row, col, value)`. Duplicates are summed.
    pub fn from_triplets(nrows: usize, ncols: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let (m, _) = Self::from_triplets_with_map(nrows, ncols, triplets);
        m
    }

    /// Like [`from_triplets`](Self::from_triplets) but also returns, for each
    /// input triplet, the index into `values` it was accumulated into. This
    /// lets callers refresh numeric values in place when the pattern is fixed.
    pub fn from_triplets_with_map(
        nrows: usize,
        ncols: usize,
        triplets: &[(usize, usize, f64)],
    ) -> (Self, Vec<usize>) {
        for &(r, c, _) in triplets {
            assert!(r < nrows && c < ncols, "triplet ({r},{c}) out of bounds");
        }
        let nnz_in = triplets.len();
        // Sort triplet indices by (col, row); stable so duplicates stay adjacent.
        let mut order: Vec<usize> = (0..nnz_in).collect();
        order.sort_by_key(|&k| (triplets[k].1, triplets[k].0));

        let mut col_ptr = vec![0usize; ncols + 1];
        let mut row_idx = Vec::with_capacity(nnz_in);
        let mut values = Vec::with_capacity(nnz_in);
        let mut slot = vec![0usize; nnz_in];

        let mut last: Option<(usize, usize)> = None;
        for &k in &order {
            let (r, c, v) = triplets[k];
            if last == Some((r, c)) {
                let idx = values.len() - 1;
                values[idx] += v;
                slot[k] = idx;
            } else {
                col_ptr[c + 1] += 1;
                row_idx.push(r);
                values.push(v);
                slot[k] = values.len() - 1;
                last = Some((r, c));
            }
        }
        for c in 0..ncols {
            col_ptr[c + 1] += col_ptr[c];
        }
        (
            Self { nrows, ncols, col_ptr, row_idx, values },
            slot,
        )
    }

    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Self { nrows, ncols, col_ptr: vec![0; ncols + 1], row_idx: Vec::new(), values: Vec::new() }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.row_idx.len()
    }

    pub fn col_ptr(&self) -> &[usize] {
        &self.col_ptr
    }

    pub fn row_indices(&self) -> &[usize] {
        &self.row_idx
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// Row indices and values of column `j`.
    pub fn col(&self, j: usize) -> (&[usize], &[f64]) {
        let range = self.col_ptr[j]..self.col_ptr[j + 1];
        (&self.row_idx[range.clone()], &self.values[range])
    }

    /// Iterate all stored entries as `(row, col, value)`.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.ncols).flat_map(move |j| {
            let (rows, vals) = self.col(j);
            rows.iter().zip(vals).map(move |(&i, &v)| (i, j, v))
        })
    }

    /// `y += alpha * A x`
    pub fn mul_acc(&self, alpha: f64, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.ncols);
        debug_assert_eq!(y.len(), self.nrows);
        for j in 0..self.ncols {
            let xj = alpha * x[j];
            if xj == 0.0 {
                continue;
            }
            let (rows, vals) = self.col(j);
            for (&i, &v) in rows.iter().zip(vals) {
                y[i] += v * xj;
            }
        }
    }

    /// `y += alpha * A^T x`
    pub fn mul_transpose_acc(&self, alpha: f64, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.nrows);
        debug_assert_eq!(y.len(), self.ncols);
        for j in 0..self.ncols {
            let (rows, vals) = self.col(j);
            let mut acc = 0.0;
            for (&i, &v) in rows.iter().zip(vals) {
                acc += v * x[i];
            }
            y[j] += alpha * acc;
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.nrows];
        self.mul_acc(1.0, x, &mut y);
        y
    }

    pub fn mul_transpose_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.ncols];
        self.mul_transpose_acc(1.0, x, &mut y);
        y
    }

    pub fn transpose(&self) -> CscMatrix {
        let mut count = vec![0usize; self.nrows + 1];
        for &i in &self.row_idx {
            count[i + 1] += 1;
        }
        for i in 0..self.nrows {
            count[i + 1] += count[i];
        }
        let col_ptr = count.clone();
        let mut next = count;
        let mut row_idx = vec![0usize; self.nnz()];
        let mut values = vec![0.0; self.nnz()];
        for j in 0..self.ncols {
            let (rows, vals) = self.col(j);
            for (&i, &v) in rows.iter().zip(vals) {
                let p = next[i];
                row_idx[p] = j;
                values[p] = v;
                next[i] += 1;
            }
        }
        CscMatrix { nrows: self.ncols, ncols: self.nrows, col_ptr, row_idx, values }
    }

    /// Upper triangle (including diagonal) of `A^T A` in CSC form.
    ///
    /// Used for Gauss-Newton normal equations; the result feeds the LDL
    /// factorization which only reads the upper triangle.
    pub fn gram_upper(&self) -> CscMatrix {
        let at = self.transpose();
        let n = self.ncols;
        let mut col_ptr = vec![0usize; n + 1];
        let mut row_idx = Vec::new();
        let mut values = Vec::new();
        // Sparse accumulator over rows of the result.
        let mut mark = vec![usize::MAX; n];
        let mut acc = vec![0.0f64; n];
        let mut touched: Vec<usize> = Vec::new();
        for j in 0..n {
            touched.clear();
            let (a_rows, a_vals) = self.col(j);
            for (&r, &v) in a_rows.iter().zip(a_vals) {
                // column r of A^T = row r of A
                let (t_rows, t_vals) = at.col(r);
                for (&i, &w) in t_rows.iter().zip(t_vals) {
                    if i > j {
                        // A^T has sorted indices; everything after is below diagonal
                        break;
                    }
                    if mark[i] != j {
                        mark[i] = j;
                        acc[i] = 0.0;
                        touched.push(i);
                    }
                    acc[i] += w * v;
                }
            }
            touched.sort_unstable();
            for &i in &touched {
                row_idx.push(i);
                values.push(acc[i]);
            }
            col_ptr[j + 1] = row_idx.len();
        }
        CscMatrix { nrows: n, ncols: n, col_ptr, row_idx, values }
    }

    /// Infinity norm of each row.
    pub fn row_inf_norms(&self) -> Vec<f64> {
        let mut norms = vec![0.0f64; self.nrows];
        for (i, _, v) in self.iter() {
            norms[i] = norms[i].max(v.abs());
        }
        norms
    }

    /// Infinity norm of each column.
    pub fn col_inf_norms(&self) -> Vec<f64> {
        let mut norms = vec![0.0f64; self.ncols];
        for j in 0..self.ncols {
            let (_, vals) = self.col(j);
            let mut m = 0.0f64;
            for &v in vals {
                m = m.max(v.abs());
            }
            norms[j] = m;
        }
        norms
    }

    /// Scale rows and columns in place: `A <- diag(r) A diag(c)`.
    pub fn scale(&mut self, row_scale: &[f64], col_scale: &[f64]) {
        debug_assert_eq!(row_scale.len(), self.nrows);
        debug_assert_eq!(col_scale.len(), self.ncols);
        for j in 0..self.ncols {
            let range = self.col_ptr[j]..self.col_ptr[j + 1];
            let cs = col_scale[j];
            for p in range {
                self.values[p] *= row_scale[self.row_idx[p]] * cs;
            }
        }
    }
}

pub fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn norm_inf(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn triplets_sum_duplicates() {
        let a = CscMatrix::from_triplets(2, 2, &[(0, 0, 1.0), (0, 0, 2.0), (1, 1, 5.0)]);
        assert_eq!(a.nnz(), 2);
        assert_eq!(a.col(0), (&[0usize][..], &[3.0][..]));
    }

    #[test]
    fn matvec_and_transpose_agree() {
        let a = CscMatrix::from_triplets(
            3,
            2,
            &[(0, 0, 1.0), (2, 0, -2.0), (1, 1, 4.0), (2, 1, 0.5)],
        );
        let x = vec![2.0, -1.0];
        let y = a.mul_vec(&x);
        assert_eq!(y, vec![2.0, -4.0, -4.5]);
        let at = a.transpose();
        let z = vec![1.0, 1.0, 1.0];
        assert_eq!(a.mul_transpose_vec(&z), at.mul_vec(&z));
    }

    #[test]
    fn gram_matches_dense() {
        let a = CscMatrix::from_triplets(
            3,
            3,
            &[(0, 0, 2.0), (1, 0, 1.0), (1, 1, 3.0), (2, 2, -1.0), (0, 2, 4.0)],
        );
        let g = a.gram_upper();
        // dense check of A^T A upper triangle
        let mut dense = [[0.0f64; 3]; 3];
        for (i, j, v) in a.iter() {
            dense[i][j] = v;
        }
        for i in 0..3 {
            for j in i..3 {
                let want: f64 = (0..3).map(|k| dense[k][i] * dense[k][j]).sum();
                let (rows, vals) = g.col(j);
                let got = rows
                    .iter()
                    .position(|&r| r == i)
                    .map(|p| vals[p])
                    .unwrap_or(0.0);
                assert!((want - got).abs() < 1e-14, "({i},{j}): {want} vs {got}");
            }
        }
    }
}
