//! Compressed sparse row matrices.
//!
//! Column indices are strictly increasing within each row and explicit zeros
//! are dropped by [`SparseBuilder::compress`], so equality of two compressed
//! matrices is structural equality.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    n_rows: usize,
    n_cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

/// Triplet accumulator; duplicate entries are summed on compression.
#[derive(Debug, Clone)]
pub struct SparseBuilder {
    n_rows: usize,
    n_cols: usize,
    entries: Vec<(usize, usize, f64)>,
}

impl SparseBuilder {
    pub fn new(n_rows: usize, n_cols: usize) -> Self {
        Self {
            n_rows,
            n_cols,
            entries: Vec::new(),
        }
    }

    pub fn push(&mut self, row: usize, col: usize, value: f64) {
        debug_assert!(row < self.n_rows && col < self.n_cols);
        self.entries.push((row, col, value));
    }

    pub fn compress(mut self) -> SparseMatrix {
        self.entries.sort_by_key(|&(r, c, _)| (r, c));
        let mut row_ptr = vec![0usize; self.n_rows + 1];
        let mut col_idx = Vec::with_capacity(self.entries.len());
        let mut values = Vec::with_capacity(self.entries.len());
        let mut it = self.entries.into_iter().peekable();
        while let Some((r, c, mut v)) = it.next() {
            while let Some(&(r2, c2, v2)) = it.peek() {
                if r2 == r && c2 == c {
                    v += v2;
                    it.next();
                } else {
                    break;
                }
            }
            if v != 0.0 {
                col_idx.push(c);
                values.push(v);
                row_ptr[r + 1] += 1;
            }
        }
        for r in 0..self.n_rows {
            row_ptr[r + 1] += row_ptr[r];
        }
        SparseMatrix {
            n_rows: self.n_rows,
            n_cols: self.n_cols,
            row_ptr,
            col_idx,
            values,
        }
    }
}

impl SparseMatrix {
    pub fn identity(n: usize) -> Self {
        SparseMatrix {
            n_rows: n,
            n_cols: n,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    pub(crate) fn from_raw(
        n_rows: usize,
        n_cols: usize,
        row_ptr: Vec<usize>,
        col_idx: Vec<usize>,
        values: Vec<f64>,
    ) -> Result<Self> {
        if row_ptr.len() != n_rows + 1
            || col_idx.len() != values.len()
            || row_ptr.last().copied().unwrap_or(1) != col_idx.len()
        {
            return Err(Error::Format("inconsistent CSR arrays".into()));
        }
        for r in 0..n_rows {
            if row_ptr[r] > row_ptr[r + 1] {
                return Err(Error::Format("row pointer not monotone".into()));
            }
            let cols = &col_idx[row_ptr[r]..row_ptr[r + 1]];
            for w in cols.windows(2) {
                if w[0] >= w[1] {
                    return Err(Error::Format("column indices not strictly increasing".into()));
                }
            }
            if cols.last().is_some_and(|&c| c >= n_cols) {
                return Err(Error::Format("column index out of range".into()));
            }
        }
        Ok(SparseMatrix {
            n_rows,
            n_cols,
            row_ptr,
            col_idx,
            values,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub(crate) fn raw_parts(&self) -> (&[usize], &[usize], &[f64]) {
        (&self.row_ptr, &self.col_idx, &self.values)
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        self.col_idx[span.clone()]
            .iter()
            .copied()
            .zip(self.values[span].iter().copied())
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.row(r).find(|&(cc, _)| cc == c).map_or(0.0, |(_, v)| v)
    }

    /// `y = A·x`, accumulated in stored index order.
    pub fn spmv(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.n_cols {
            return Err(Error::DimensionMismatch {
                what: "spmv operand",
                expected: self.n_cols,
                got: x.len(),
            });
        }
        let mut y = vec![0.0; self.n_rows];
        self.spmv_into(x, &mut y);
        Ok(y)
    }

    pub(crate) fn spmv_into(&self, x: &[f64], y: &mut [f64]) {
        for r in 0..self.n_rows {
            let mut acc = 0.0;
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += self.values[k] * x[self.col_idx[k]];
            }
            y[r] = acc;
        }
    }

    /// `y = Aᵀ·x` without materializing the transpose.
    pub fn spmv_transpose(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.n_rows {
            return Err(Error::DimensionMismatch {
                what: "transpose spmv operand",
                expected: self.n_rows,
                got: x.len(),
            });
        }
        let mut y = vec![0.0; self.n_cols];
        for r in 0..self.n_rows {
            let xr = x[r];
            if xr == 0.0 {
                continue;
            }
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                y[self.col_idx[k]] += self.values[k] * xr;
            }
        }
        Ok(y)
    }

    pub fn transpose(&self) -> SparseMatrix {
        let mut b = SparseBuilder::new(self.n_cols, self.n_rows);
        for r in 0..self.n_rows {
            for (c, v) in self.row(r) {
                b.push(c, r, v);
            }
        }
        b.compress()
    }

    /// Column selection: result column `k` is `self` column `cols[k]`.
    pub fn select_columns(&self, cols: &[usize]) -> SparseMatrix {
        let mut pos = vec![usize::MAX; self.n_cols];
        for (k, &c) in cols.iter().enumerate() {
            pos[c] = k;
        }
        let mut b = SparseBuilder::new(self.n_rows, cols.len());
        for r in 0..self.n_rows {
            for (c, v) in self.row(r) {
                if pos[c] != usize::MAX {
                    b.push(r, pos[c], v);
                }
            }
        }
        b.compress()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Quadratic form `xᵀ·A·y`.
    pub fn quadratic(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        let ay = self.spmv(y)?;
        if x.len() != ay.len() {
            return Err(Error::DimensionMismatch {
                what: "quadratic form operand",
                expected: ay.len(),
                got: x.len(),
            });
        }
        Ok(x.iter().zip(ay.iter()).map(|(a, b)| a * b).sum())
    }
}

/// Solve `T·x = b` where `P_r·T·P_cᵀ` is lower triangular:
/// row `row_perm[k]` paired with column `col_perm[k]` forms the diagonal.
///
/// Cost is `O(nnz)`. A zero or missing diagonal entry, or an entry above the
/// permuted diagonal, signals a broken elimination structure.
pub fn solve_permuted_triangular(
    t: &SparseMatrix,
    row_perm: &[usize],
    col_perm: &[usize],
    b: &[f64],
) -> Result<Vec<f64>> {
    let n = t.n_rows();
    check_perm_solve_dims(t, row_perm, col_perm, b.len())?;
    let mut col_pos = vec![usize::MAX; n];
    for (k, &c) in col_perm.iter().enumerate() {
        col_pos[c] = k;
    }
    let mut x_by_pos = vec![0.0; n];
    for k in 0..n {
        let r = row_perm[k];
        let mut acc = 0.0;
        let mut diag = 0.0;
        for (c, v) in t.row(r) {
            let p = col_pos[c];
            if p < k {
                acc += v * x_by_pos[p];
            } else if p == k {
                diag = v;
            } else {
                return Err(Error::Structural(format!(
                    "entry above permuted diagonal at row {r}, col {c}"
                )));
            }
        }
        if diag == 0.0 {
            return Err(Error::Structural(format!(
                "zero diagonal at elimination step {k} (row {r})"
            )));
        }
        x_by_pos[k] = (b[r] - acc) / diag;
    }
    let mut x = vec![0.0; n];
    for k in 0..n {
        x[col_perm[k]] = x_by_pos[k];
    }
    Ok(x)
}

/// Solve `Tᵀ·x = b` for the same permuted-triangular `T` as
/// [`solve_permuted_triangular`]; back substitution in reverse elimination
/// order, still `O(nnz)`.
pub fn solve_permuted_triangular_transpose(
    t: &SparseMatrix,
    row_perm: &[usize],
    col_perm: &[usize],
    b: &[f64],
) -> Result<Vec<f64>> {
    let n = t.n_rows();
    check_perm_solve_dims(t, row_perm, col_perm, b.len())?;
    let mut col_pos = vec![usize::MAX; n];
    for (k, &c) in col_perm.iter().enumerate() {
        col_pos[c] = k;
    }
    let mut rhs = vec![0.0; n];
    for k in 0..n {
        rhs[k] = b[col_perm[k]];
    }
    let mut x_by_pos = vec![0.0; n];
    for k in (0..n).rev() {
        let r = row_perm[k];
        let mut diag = 0.0;
        for (c, v) in t.row(r) {
            if col_pos[c] == k {
                diag = v;
            }
        }
        if diag == 0.0 {
            return Err(Error::Structural(format!(
                "zero diagonal at elimination step {k} (row {r})"
            )));
        }
        let xk = rhs[k] / diag;
        x_by_pos[k] = xk;
        for (c, v) in t.row(r) {
            let p = col_pos[c];
            if p < k {
                rhs[p] -= v * xk;
            } else if p > k {
                return Err(Error::Structural(format!(
                    "entry above permuted diagonal at row {r}, col {c}"
                )));
            }
        }
    }
    let mut x = vec![0.0; n];
    for k in 0..n {
        x[row_perm[k]] = x_by_pos[k];
    }
    Ok(x)
}

fn check_perm_solve_dims(
    t: &SparseMatrix,
    row_perm: &[usize],
    col_perm: &[usize],
    b_len: usize,
) -> Result<()> {
    let n = t.n_rows();
    if t.n_cols() != n {
        return Err(Error::InvalidArgument("triangular solve needs a square matrix".into()));
    }
    if row_perm.len() != n || col_perm.len() != n || b_len != n {
        return Err(Error::DimensionMismatch {
            what: "triangular solve operands",
            expected: n,
            got: b_len,
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn matrix_2x2() -> SparseMatrix {
        let mut b = SparseBuilder::new(2, 2);
        b.push(0, 0, 1.0);
        b.push(0, 1, 2.0);
        b.push(1, 0, 3.0);
        b.push(1, 1, 4.0);
        b.compress()
    }

    #[test]
    fn spmv_identity_returns_input() {
        let a = SparseMatrix::identity(4);
        let x = vec![1.5, -2.0, 0.0, 7.25];
        assert_eq!(a.spmv(&x).unwrap(), x);
    }

    #[test]
    fn spmv_zero_matrix_returns_zero() {
        let a = SparseBuilder::new(3, 3).compress();
        assert_eq!(a.spmv(&[1.0, 2.0, 3.0]).unwrap(), vec![0.0; 3]);
    }

    #[test]
    fn spmv_hand_computed() {
        let a = matrix_2x2();
        assert_eq!(a.spmv(&[1.0, 1.0]).unwrap(), vec![3.0, 7.0]);
    }

    #[test]
    fn spmv_dimension_mismatch_is_error() {
        let a = matrix_2x2();
        assert!(a.spmv(&[1.0]).is_err());
    }

    #[test]
    fn compress_merges_duplicates_and_drops_zeros() {
        let mut b = SparseBuilder::new(2, 3);
        b.push(0, 2, 1.0);
        b.push(0, 2, 2.0);
        b.push(1, 0, 5.0);
        b.push(1, 0, -5.0);
        let a = b.compress();
        assert_eq!(a.nnz(), 1);
        assert_eq!(a.get(0, 2), 3.0);
        assert_eq!(a.get(1, 0), 0.0);
    }

    #[test]
    fn transpose_roundtrip() {
        let a = matrix_2x2();
        assert_eq!(a.transpose().transpose(), a);
        let x = vec![0.5, -1.0];
        assert_eq!(a.spmv_transpose(&x).unwrap(), a.transpose().spmv(&x).unwrap());
    }

    #[test]
    fn permuted_triangular_identity() {
        let t = SparseMatrix::identity(3);
        let b = vec![3.0, -1.0, 2.0];
        let x = solve_permuted_triangular(&t, &[2, 0, 1], &[2, 0, 1], &b).unwrap();
        assert_eq!(x, b);
    }

    #[test]
    fn permuted_triangular_antidiagonal() {
        // [[0,1],[1,0]] x = [1,2]  =>  x = [2,1]
        let mut bld = SparseBuilder::new(2, 2);
        bld.push(0, 1, 1.0);
        bld.push(1, 0, 1.0);
        let t = bld.compress();
        let x = solve_permuted_triangular(&t, &[0, 1], &[1, 0], &[1.0, 2.0]).unwrap();
        assert_eq!(x, vec![2.0, 1.0]);
    }

    #[test]
    fn permuted_triangular_transpose_matches_direct() {
        // Lower triangular T in natural order; solve Tᵀx = b two ways.
        let mut bld = SparseBuilder::new(3, 3);
        bld.push(0, 0, 2.0);
        bld.push(1, 0, -1.0);
        bld.push(1, 1, 3.0);
        bld.push(2, 1, 4.0);
        bld.push(2, 2, 5.0);
        let t = bld.compress();
        let perm: Vec<usize> = (0..3).collect();
        let b = vec![1.0, 2.0, 3.0];
        let x = solve_permuted_triangular_transpose(&t, &perm, &perm, &b).unwrap();
        let tt = t.transpose();
        let r: Vec<f64> = tt
            .spmv(&x)
            .unwrap()
            .iter()
            .zip(&b)
            .map(|(a, b)| a - b)
            .collect();
        assert!(r.iter().all(|v| v.abs() < 1e-14));
    }

    #[test]
    fn zero_diagonal_is_structural_error() {
        let mut bld = SparseBuilder::new(2, 2);
        bld.push(0, 0, 1.0);
        bld.push(1, 0, 1.0);
        let t = bld.compress();
        let got = solve_permuted_triangular(&t, &[0, 1], &[0, 1], &[1.0, 1.0]);
        assert!(matches!(got, Err(Error::Structural(_))));
    }

    #[test]
    fn select_columns_picks_and_orders() {
        let a = matrix_2x2();
        let s = a.select_columns(&[1]);
        assert_eq!(s.n_cols(), 1);
        assert_eq!(s.get(0, 0), 2.0);
        assert_eq!(s.get(1, 0), 4.0);
    }
}
