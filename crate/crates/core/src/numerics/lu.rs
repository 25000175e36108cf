//! Sparse LU with partial pivoting (left-looking, Gilbert–Peierls).
//!
//! Sized for the saddle-point systems this crate assembles (≲ 10⁴ unknowns);
//! the factorization is kept so that many right-hand sides can reuse it.

use crate::error::{Error, Result};
use crate::numerics::sparse::SparseMatrix;
use crate::tol;

#[derive(Debug, Clone)]
pub struct LuFactors {
    n: usize,
    /// Column k of L (unit diagonal implicit), rows in original indices.
    l_cols: Vec<Vec<(usize, f64)>>,
    /// Column j of U as (pivot-step, value) pairs above the diagonal.
    u_cols: Vec<Vec<(usize, f64)>>,
    u_diag: Vec<f64>,
    /// pivot_row[k] = original row eliminated at step k.
    pivot_row: Vec<usize>,
}

pub fn factorize(a: &SparseMatrix) -> Result<LuFactors> {
    let n = a.n_rows();
    if a.n_cols() != n {
        return Err(Error::InvalidArgument("LU needs a square matrix".into()));
    }

    // Column-major copy of A.
    let mut acols: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    for r in 0..n {
        for (c, v) in a.row(r) {
            acols[c].push((r, v));
        }
    }

    let mut l_cols: Vec<Vec<(usize, f64)>> = Vec::with_capacity(n);
    let mut u_cols: Vec<Vec<(usize, f64)>> = Vec::with_capacity(n);
    let mut u_diag = vec![0.0; n];
    let mut pivot_row = vec![usize::MAX; n];
    let mut pinv = vec![usize::MAX; n];

    let mut x = vec![0.0; n];
    let mut stamp = vec![usize::MAX; n]; // per-column visit marks, by row
    let mut topo: Vec<usize> = Vec::with_capacity(n); // pivot steps, topological
    let mut below: Vec<usize> = Vec::with_capacity(n); // unpivoted rows touched
    let mut dfs: Vec<(usize, usize)> = Vec::new();

    for j in 0..n {
        topo.clear();
        below.clear();

        // Symbolic: reach all pivot steps whose L-column updates column j.
        for &(r, _) in &acols[j] {
            if stamp[r] == j {
                continue;
            }
            if pinv[r] == usize::MAX {
                stamp[r] = j;
                below.push(r);
                continue;
            }
            // Depth-first over previously eliminated steps.
            dfs.push((r, 0));
            stamp[r] = j;
            while let Some(&mut (row, ref mut child)) = dfs.last_mut() {
                let k = pinv[row];
                let col = &l_cols[k];
                if *child < col.len() {
                    let (r2, _) = col[*child];
                    *child += 1;
                    if stamp[r2] != j {
                        stamp[r2] = j;
                        if pinv[r2] == usize::MAX {
                            below.push(r2);
                        } else {
                            dfs.push((r2, 0));
                        }
                    }
                } else {
                    topo.push(k);
                    dfs.pop();
                }
            }
        }
        topo.reverse();

        // Numeric: solve the lower-triangular prefix on the reached pattern.
        for &(r, v) in &acols[j] {
            x[r] = v;
        }
        for &k in &topo {
            let xk = x[pivot_row[k]];
            if xk != 0.0 {
                for &(r, lv) in &l_cols[k] {
                    if stamp[r] != j {
                        stamp[r] = j;
                        below.push(r); // fill-in can only appear below
                        x[r] = 0.0;
                    }
                    x[r] -= lv * xk;
                }
            }
        }

        // Partial pivot among rows not yet eliminated.
        let mut piv = usize::MAX;
        let mut piv_abs = 0.0;
        for &r in below.iter() {
            let a = x[r].abs();
            if a > piv_abs {
                piv_abs = a;
                piv = r;
            }
        }
        if piv == usize::MAX || piv_abs == 0.0 || !piv_abs.is_finite() {
            return Err(Error::Factorization(format!(
                "singular to working precision at column {j}"
            )));
        }

        let mut ucol = Vec::with_capacity(topo.len());
        for &k in &topo {
            let v = x[pivot_row[k]];
            if v != 0.0 {
                ucol.push((k, v));
            }
            x[pivot_row[k]] = 0.0;
        }
        let pv = x[piv];
        let mut lcol = Vec::with_capacity(below.len());
        for &r in below.iter() {
            if r != piv && x[r] != 0.0 {
                lcol.push((r, x[r] / pv));
            }
            x[r] = 0.0;
        }

        pinv[piv] = j;
        pivot_row[j] = piv;
        u_diag[j] = pv;
        u_cols.push(ucol);
        l_cols.push(lcol);
    }

    Ok(LuFactors {
        n,
        l_cols,
        u_cols,
        u_diag,
        pivot_row,
    })
}

impl LuFactors {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        if b.len() != self.n {
            return Err(Error::DimensionMismatch {
                what: "LU solve rhs",
                expected: self.n,
                got: b.len(),
            });
        }
        // Forward: L y = P b, updating in original row indices.
        let mut work = b.to_vec();
        let mut y = vec![0.0; self.n];
        for k in 0..self.n {
            let yk = work[self.pivot_row[k]];
            y[k] = yk;
            if yk != 0.0 {
                for &(r, lv) in &self.l_cols[k] {
                    work[r] -= lv * yk;
                }
            }
        }
        // Backward: U z = y.
        for j in (0..self.n).rev() {
            let zj = y[j] / self.u_diag[j];
            y[j] = zj;
            if zj != 0.0 {
                for &(k, uv) in &self.u_cols[j] {
                    y[k] -= uv * zj;
                }
            }
        }
        Ok(y)
    }
}

/// Factor and solve, enforcing `‖Ax − b‖∞ ≤ SOLVE_RESIDUAL·(1 + ‖b‖∞)`
/// with iterative refinement as the backstop.
pub fn solve_sparse(a: &SparseMatrix, b: &[f64]) -> Result<Vec<f64>> {
    let lu = factorize(a)?;
    solve_refined(a, &lu, b)
}

/// Solve with a precomputed factorization and the same residual contract.
pub fn solve_refined(a: &SparseMatrix, lu: &LuFactors, b: &[f64]) -> Result<Vec<f64>> {
    let mut x = lu.solve(b)?;
    let bound = tol::SOLVE_RESIDUAL * (1.0 + max_abs(b));
    for _ in 0..3 {
        let r = residual(a, &x, b)?;
        if max_abs(&r) <= bound {
            return Ok(x);
        }
        let dx = lu.solve(&r)?;
        for (xi, di) in x.iter_mut().zip(dx.iter()) {
            *xi += di;
        }
    }
    let r = residual(a, &x, b)?;
    if max_abs(&r) <= bound {
        Ok(x)
    } else {
        Err(Error::Factorization(format!(
            "residual {:.3e} above bound {:.3e} after refinement",
            max_abs(&r),
            bound
        )))
    }
}

fn residual(a: &SparseMatrix, x: &[f64], b: &[f64]) -> Result<Vec<f64>> {
    let ax = a.spmv(x)?;
    Ok(b.iter().zip(ax.iter()).map(|(bi, ai)| bi - ai).collect())
}

pub(crate) fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}
