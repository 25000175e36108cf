//! Spanning-tree right-inverse of the divergence.
//!
//! The cells of the mesh are the nodes of a graph whose edges are the
//! interior mesh edges. A breadth-first tree rooted at the cell next to a
//! chosen boundary edge selects one flux dof per cell (its discovery edge;
//! the root keeps the boundary edge itself). Restricted to those columns,
//! `B·Πᵀ` is triangular under the reverse-discovery elimination order, so a
//! particular solution of `Bq = f` costs one `O(n)` substitution sweep: the
//! conservation equation is settled cell by cell from the leaves to the root.
//!
//! Averaging the maps of several trees is still a right-inverse (the set of
//! right-inverses is convex) and spreads the particular solution over more
//! edges, which mainly benefits the recovered pressure.

use std::collections::VecDeque;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::fem::OperatorSet;
use crate::mesh::Mesh2D;
use crate::numerics::{
    solve_permuted_triangular, solve_permuted_triangular_transpose, Rng, SparseMatrix,
};

/// How the root boundary edge of a tree is picked.
#[derive(Debug, Clone, Copy)]
pub enum RootChoice {
    /// Lowest-indexed boundary edge; deterministic default.
    FirstBoundary,
    /// A specific boundary edge.
    Edge(usize),
    /// Seeded random boundary edge with a seeded traversal shuffle.
    Seeded(u64),
}

#[derive(Debug, Clone)]
pub struct TreeSolver {
    /// Root boundary edge `j₀`.
    pub root_edge: usize,
    /// Selected edges `J`, one per elimination position.
    pub selected: Vec<usize>,
    /// Cells in elimination order (leaves first, root cell last).
    pub cell_order: Vec<usize>,
    /// `B` restricted to the columns in `J` (in that order).
    b_pi_t: SparseMatrix,
    /// Identity column permutation, paired with `cell_order` as row order.
    col_ident: Vec<usize>,
    n_edges: usize,
    /// Operation count of the construction, for complexity checks.
    pub build_ops: usize,
}

/// Build the breadth-first tree and its triangular factorization.
///
/// Neighbor cells are visited in ascending cell index; `RootChoice::Seeded`
/// shuffles that order to diversify the trees of an averaged solver.
pub fn build_tree(ops: &OperatorSet, mesh: &Mesh2D, root: RootChoice) -> Result<TreeSolver> {
    if mesh.boundary_edges.is_empty() {
        return Err(Error::Structural("mesh has no boundary edge".into()));
    }
    let mut shuffle_rng = None;
    let root_edge = match root {
        RootChoice::FirstBoundary => *mesh.boundary_edges.iter().min().unwrap(),
        RootChoice::Edge(e) => {
            if !mesh.edges[e].is_boundary() {
                return Err(Error::InvalidArgument(format!(
                    "edge {e} is not a boundary edge"
                )));
            }
            e
        }
        RootChoice::Seeded(seed) => {
            let mut rng = Rng::new(seed);
            let e = mesh.boundary_edges[rng.index_below(mesh.boundary_edges.len())];
            shuffle_rng = Some(rng);
            e
        }
    };

    let n_cells = mesh.n_cells();
    let mut ops_count = 0usize;

    // Cell adjacency through interior edges, neighbors ascending.
    let mut adjacency: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n_cells];
    for (e, edge) in mesh.edges.iter().enumerate() {
        if let (c1, Some(c2)) = edge.cells {
            adjacency[c1].push((c2, e));
            adjacency[c2].push((c1, e));
            ops_count += 2;
        }
    }
    for nb in adjacency.iter_mut() {
        nb.sort_unstable();
        if let Some(rng) = shuffle_rng.as_mut() {
            rng.shuffle(nb);
        }
        ops_count += nb.len();
    }

    let root_cell = mesh.edges[root_edge].cells.0;
    let mut parent_edge = vec![usize::MAX; n_cells];
    let mut discovered = vec![false; n_cells];
    let mut discovery = Vec::with_capacity(n_cells);
    let mut queue = VecDeque::new();
    discovered[root_cell] = true;
    parent_edge[root_cell] = root_edge;
    queue.push_back(root_cell);
    while let Some(c) = queue.pop_front() {
        discovery.push(c);
        for &(nb, e) in &adjacency[c] {
            ops_count += 1;
            if !discovered[nb] {
                discovered[nb] = true;
                parent_edge[nb] = e;
                queue.push_back(nb);
            }
        }
    }
    if discovery.len() != n_cells {
        return Err(Error::Structural(format!(
            "mesh is disconnected: reached {} of {} cells",
            discovery.len(),
            n_cells
        )));
    }

    // Leaves to root: reverse discovery order; every child precedes its
    // parent, which makes B·Πᵀ lower triangular in this ordering.
    let cell_order: Vec<usize> = discovery.into_iter().rev().collect();
    let selected: Vec<usize> = cell_order.iter().map(|&c| parent_edge[c]).collect();
    let b_pi_t = ops.b.select_columns(&selected);

    for (k, &c) in cell_order.iter().enumerate() {
        if b_pi_t.get(c, k) == 0.0 {
            return Err(Error::Structural(format!(
                "selected edge {} not incident to its cell {c}",
                selected[k]
            )));
        }
    }

    Ok(TreeSolver {
        root_edge,
        selected,
        cell_order,
        b_pi_t,
        col_ident: (0..n_cells).collect(),
        n_edges: mesh.n_edges(),
        build_ops: ops_count,
    })
}

impl TreeSolver {
    pub fn n_cells(&self) -> usize {
        self.cell_order.len()
    }

    /// `B·Πᵀ` with columns in elimination order; triangular under
    /// `cell_order` as the row permutation.
    pub fn restricted_divergence(&self) -> &SparseMatrix {
        &self.b_pi_t
    }

    /// Particular solution: `q = S_I f` with `B·q = f` to machine precision,
    /// supported only on the selected edges.
    pub fn apply(&self, f_vec: &[f64]) -> Result<Vec<f64>> {
        let y = solve_permuted_triangular(&self.b_pi_t, &self.cell_order, &self.col_ident, f_vec)?;
        let mut q = vec![0.0; self.n_edges];
        for (k, &e) in self.selected.iter().enumerate() {
            q[e] = y[k];
        }
        Ok(q)
    }

    /// Adjoint action `S_I* r = (BΠᵀ)⁻ᵀ Π r`.
    pub fn apply_adjoint(&self, r: &[f64]) -> Result<Vec<f64>> {
        if r.len() != self.n_edges {
            return Err(Error::DimensionMismatch {
                what: "tree adjoint operand",
                expected: self.n_edges,
                got: r.len(),
            });
        }
        let restricted: Vec<f64> = self.selected.iter().map(|&e| r[e]).collect();
        // (BΠᵀ)ᵀ p = Π r; the solution comes back indexed by cell.
        let mut rhs_by_col = vec![0.0; self.n_cells()];
        for (k, v) in restricted.into_iter().enumerate() {
            rhs_by_col[self.col_ident[k]] = v;
        }
        solve_permuted_triangular_transpose(
            &self.b_pi_t,
            &self.cell_order,
            &self.col_ident,
            &rhs_by_col,
        )
    }
}

/// Uniform average of several spanning-tree solves, sharing one `B`.
#[derive(Debug, Clone)]
pub struct AveragedSolver {
    pub trees: Vec<TreeSolver>,
}

/// Roots are sampled without replacement among the boundary edges; if fewer
/// boundary edges than trees exist, roots repeat with distinct traversal
/// shuffles.
pub fn build_averaged(
    ops: &OperatorSet,
    mesh: &Mesh2D,
    rng: &mut Rng,
    n_trees: usize,
) -> Result<AveragedSolver> {
    if n_trees == 0 {
        return Err(Error::InvalidArgument("need at least one tree".into()));
    }
    let nb = mesh.boundary_edges.len();
    let mut trees = Vec::with_capacity(n_trees);
    if n_trees <= nb {
        let picks = rng.sample_without_replacement(nb, n_trees);
        for k in picks {
            trees.push(build_tree(ops, mesh, RootChoice::Edge(mesh.boundary_edges[k]))?);
        }
    } else {
        for _ in 0..n_trees {
            trees.push(build_tree(ops, mesh, RootChoice::Seeded(rng.next_u64()))?);
        }
    }
    Ok(AveragedSolver { trees })
}

impl AveragedSolver {
    pub fn n_trees(&self) -> usize {
        self.trees.len()
    }

    pub fn apply(&self, f_vec: &[f64]) -> Result<Vec<f64>> {
        let mut acc = self.trees[0].apply(f_vec)?;
        for t in &self.trees[1..] {
            let q = t.apply(f_vec)?;
            for (a, b) in acc.iter_mut().zip(q.iter()) {
                *a += b;
            }
        }
        let w = 1.0 / self.trees.len() as f64;
        for a in acc.iter_mut() {
            *a *= w;
        }
        Ok(acc)
    }

    /// Adjoint of the averaged map: the mean of the tree adjoints.
    pub fn apply_adjoint(&self, r: &[f64]) -> Result<Vec<f64>> {
        let mut acc = self.trees[0].apply_adjoint(r)?;
        for t in &self.trees[1..] {
            let p = t.apply_adjoint(r)?;
            for (a, b) in acc.iter_mut().zip(p.iter()) {
                *a += b;
            }
        }
        let w = 1.0 / self.trees.len() as f64;
        for a in acc.iter_mut() {
            *a *= w;
        }
        Ok(acc)
    }

    /// Adjoint of the first tree alone; the default pressure recovery.
    pub fn apply_adjoint_first(&self, r: &[f64]) -> Result<Vec<f64>> {
        self.trees[0].apply_adjoint(r)
    }

    /// Homogeneous projection `q ↦ (I − S_I B) q`.
    pub fn project_homogeneous(&self, ops: &OperatorSet, q: &[f64]) -> Result<Vec<f64>> {
        let bq = ops.b.spmv(q)?;
        let qf = self.apply(&bq)?;
        Ok(q.iter().zip(qf.iter()).map(|(a, b)| a - b).collect())
    }
}

/// Serialize the integer data of an averaged solver (per tree: root, `J`,
/// elimination order) as a dense integer-valued matrix.
pub fn solver_to_matrix(solver: &AveragedSolver) -> crate::numerics::DenseMatrix {
    let n = solver.trees[0].n_cells();
    let mut rows = Vec::with_capacity(solver.trees.len());
    for t in &solver.trees {
        let mut row = Vec::with_capacity(1 + 2 * n);
        row.push(t.root_edge as f64);
        row.extend(t.selected.iter().map(|&e| e as f64));
        row.extend(t.cell_order.iter().map(|&c| c as f64));
        rows.push(row);
    }
    crate::numerics::DenseMatrix::from_rows(&rows).expect("uniform rows")
}

/// Rebuild an averaged solver from its integer matrix and the operators.
pub fn solver_from_matrix(
    ops: &OperatorSet,
    mesh: &Arc<Mesh2D>,
    m: &crate::numerics::DenseMatrix,
) -> Result<AveragedSolver> {
    let n = mesh.n_cells();
    if m.n_cols() != 1 + 2 * n {
        return Err(Error::Format(format!(
            "tree matrix has {} columns, expected {}",
            m.n_cols(),
            1 + 2 * n
        )));
    }
    let mut trees = Vec::with_capacity(m.n_rows());
    for r in 0..m.n_rows() {
        let row = m.row(r);
        let root_edge = row[0] as usize;
        let selected: Vec<usize> = row[1..1 + n].iter().map(|&v| v as usize).collect();
        let cell_order: Vec<usize> = row[1 + n..].iter().map(|&v| v as usize).collect();
        let b_pi_t = ops.b.select_columns(&selected);
        for (k, &c) in cell_order.iter().enumerate() {
            if b_pi_t.get(c, k) == 0.0 {
                return Err(Error::Structural(
                    "deserialized tree is inconsistent with the operators".into(),
                ));
            }
        }
        trees.push(TreeSolver {
            root_edge,
            selected,
            cell_order,
            b_pi_t,
            col_ident: (0..n).collect(),
            n_edges: mesh.n_edges(),
            build_ops: 0,
        });
    }
    if trees.is_empty() {
        return Err(Error::Format("tree matrix has no rows".into()));
    }
    Ok(AveragedSolver { trees })
}
