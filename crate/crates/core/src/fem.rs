//! Discrete operators of the lowest-order mixed method.
//!
//! Flux space: Raviart–Thomas of lowest order with one degree of freedom per
//! edge, defined as the *integrated* normal flux `dof_e(q) = ∫_e q·ν_e`.
//! With that convention the divergence matrix `B` is the incidence-signed
//! ±1 matrix: `(Bq)_c = Σ_e sign(c,e)·q_e = ∫_c div q`.
//!
//! Pressure space: piecewise constants (one dof per cell). Potential space:
//! continuous piecewise-linear nodal functions. The rotated gradient
//! `∇⊥r = [∂₂r, −∂₁r]ᵀ` of a nodal function is an admissible flux whose
//! edge dofs are ±1 differences of the endpoint values, so `Curl` is again
//! an integer matrix and `B·Curl = 0` holds entrywise exactly.
//!
//! Volume quadrature is the 3-point edge-midpoint rule (exact for
//! quadratics); boundary integrals use Simpson's rule per edge.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::mesh::Mesh2D;
use crate::numerics::{SparseBuilder, SparseMatrix};

/// Function space tags for coefficient vectors.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Space {
    /// Edge-based fluxes (integrated normal flux per edge).
    Rt0,
    /// Cellwise constants.
    P0,
    /// Nodal piecewise-linear potentials.
    P1,
}

impl Space {
    pub fn dim(&self, mesh: &Mesh2D) -> usize {
        match self {
            Space::Rt0 => mesh.n_edges(),
            Space::P0 => mesh.n_cells(),
            Space::P1 => mesh.n_nodes(),
        }
    }
}

/// A coefficient vector tagged with its function space.
#[derive(Debug, Clone)]
pub struct DofField {
    pub space: Space,
    pub coeffs: Vec<f64>,
    pub mesh: Arc<Mesh2D>,
}

impl DofField {
    pub fn new(space: Space, coeffs: Vec<f64>, mesh: Arc<Mesh2D>) -> Result<Self> {
        let expected = space.dim(&mesh);
        if coeffs.len() != expected {
            return Err(Error::DimensionMismatch {
                what: "dof field coefficients",
                expected,
                got: coeffs.len(),
            });
        }
        Ok(Self {
            space,
            coeffs,
            mesh,
        })
    }
}

/// The assembled operators of the mixed method on one mesh.
#[derive(Debug, Clone)]
pub struct OperatorSet {
    /// Divergence, `n_cells × n_edges`, entries ±1.
    pub b: SparseMatrix,
    /// Flux mass matrix, symmetric positive definite.
    pub mass_q: SparseMatrix,
    /// Pressure mass matrix, `diag(cell areas)`.
    pub mass_p: SparseMatrix,
    /// Rotated gradient, `n_edges × n_nodes`, entries ±1.
    pub curl: SparseMatrix,
    pub mesh: Arc<Mesh2D>,
}

pub fn assemble_operators(mesh: Arc<Mesh2D>) -> OperatorSet {
    let b = assemble_divergence(&mesh);
    let mass_q = assemble_mass_q(&mesh, None);
    let mass_p = assemble_mass_p(&mesh);
    let curl = assemble_curl(&mesh);
    OperatorSet {
        b,
        mass_q,
        mass_p,
        curl,
        mesh,
    }
}

fn assemble_divergence(mesh: &Mesh2D) -> SparseMatrix {
    let mut b = SparseBuilder::new(mesh.n_cells(), mesh.n_edges());
    for (c, slots) in mesh.cell_edges.iter().enumerate() {
        for &(e, s) in slots {
            b.push(c, e, s as f64);
        }
    }
    b.compress()
}

/// RT0 mass matrix; `cell_coeff` scales each cell's contribution (used by
/// the nonlinear flux law), `None` meaning unit coefficient.
pub fn assemble_mass_q(mesh: &Mesh2D, cell_coeff: Option<&[f64]>) -> SparseMatrix {
    let mut m = SparseBuilder::new(mesh.n_edges(), mesh.n_edges());
    for c in 0..mesh.n_cells() {
        let w = cell_coeff.map_or(1.0, |cw| cw[c]);
        let local = local_mass(mesh, c);
        let slots = &mesh.cell_edges[c];
        for i in 0..3 {
            for j in 0..3 {
                m.push(slots[i].0, slots[j].0, w * local[i][j]);
            }
        }
    }
    m.compress()
}

/// Local RT0 mass: basis for edge slot `i` is `σ_i (x − v_i) / (2|K|)`
/// where `v_i` is the vertex opposite that edge.
fn local_mass(mesh: &Mesh2D, c: usize) -> [[f64; 3]; 3] {
    let area = mesh.cell_areas[c];
    let mids = mesh.cell_edge_midpoints(c);
    let [a, b, d] = mesh.cells[c];
    let verts = [mesh.nodes[a], mesh.nodes[b], mesh.nodes[d]];
    // Cell edge slot k covers nodes (k, k+1); the opposite vertex is k+2.
    let opposite = [verts[2], verts[0], verts[1]];
    let signs = [
        mesh.cell_edges[c][0].1 as f64,
        mesh.cell_edges[c][1].1 as f64,
        mesh.cell_edges[c][2].1 as f64,
    ];
    let mut local = [[0.0; 3]; 3];
    let qw = area / 3.0;
    for i in 0..3 {
        for j in 0..3 {
            let mut acc = 0.0;
            for m in &mids {
                let pi = [m[0] - opposite[i][0], m[1] - opposite[i][1]];
                let pj = [m[0] - opposite[j][0], m[1] - opposite[j][1]];
                acc += pi[0] * pj[0] + pi[1] * pj[1];
            }
            local[i][j] = signs[i] * signs[j] * qw * acc / (4.0 * area * area);
        }
    }
    local
}

fn assemble_mass_p(mesh: &Mesh2D) -> SparseMatrix {
    let mut m = SparseBuilder::new(mesh.n_cells(), mesh.n_cells());
    for (c, &a) in mesh.cell_areas.iter().enumerate() {
        m.push(c, c, a);
    }
    m.compress()
}

/// Edge dof of `∇⊥r`: the tangential increment of `r` along the edge,
/// oriented so that the edge normal is the tangent rotated by −90°.
fn assemble_curl(mesh: &Mesh2D) -> SparseMatrix {
    let mut m = SparseBuilder::new(mesh.n_edges(), mesh.n_nodes());
    for (e, edge) in mesh.edges.iter().enumerate() {
        let [a, b] = edge.nodes;
        let t = [
            mesh.nodes[b][0] - mesh.nodes[a][0],
            mesh.nodes[b][1] - mesh.nodes[a][1],
        ];
        // z-component of t × ν decides whether the dof is r(b)−r(a) or the
        // opposite.
        let s = (t[0] * edge.normal[1] - t[1] * edge.normal[0]).signum();
        m.push(e, b, -s);
        m.push(e, a, s);
    }
    m.compress()
}

/// Cell functionals `∫_c f dx` by the 3-point edge-midpoint rule.
pub fn project_source(mesh: &Mesh2D, f: impl Fn([f64; 2]) -> f64) -> Vec<f64> {
    (0..mesh.n_cells())
        .map(|c| {
            let mids = mesh.cell_edge_midpoints(c);
            mesh.cell_areas[c] / 3.0 * (f(mids[0]) + f(mids[1]) + f(mids[2]))
        })
        .collect()
}

/// Flux functionals `∫_Ω g·v dx − ∮_∂Ω p_bc (v·ν) ds` for every RT0 basis
/// function `v`; the boundary term imposes the pressure condition naturally.
pub fn assemble_rhs_g(
    mesh: &Mesh2D,
    g: impl Fn([f64; 2]) -> [f64; 2],
    p_bc: impl Fn([f64; 2]) -> f64,
) -> Vec<f64> {
    let mut rhs = vec![0.0; mesh.n_edges()];
    for c in 0..mesh.n_cells() {
        let area = mesh.cell_areas[c];
        let mids = mesh.cell_edge_midpoints(c);
        let [a, b, d] = mesh.cells[c];
        let verts = [mesh.nodes[a], mesh.nodes[b], mesh.nodes[d]];
        let opposite = [verts[2], verts[0], verts[1]];
        for (slot, &(e, sign)) in mesh.cell_edges[c].iter().enumerate() {
            let mut acc = 0.0;
            for m in &mids {
                let basis = [
                    (m[0] - opposite[slot][0]) / (2.0 * area),
                    (m[1] - opposite[slot][1]) / (2.0 * area),
                ];
                let gv = g(*m);
                acc += gv[0] * basis[0] + gv[1] * basis[1];
            }
            rhs[e] += sign as f64 * area / 3.0 * acc;
        }
    }
    // The normal trace of the basis function of a boundary edge is the
    // constant 1/|e| on that edge, so the boundary term is the edge mean of
    // p_bc; Simpson is exact for the cubics that occur here.
    for &e in &mesh.boundary_edges {
        let edge = &mesh.edges[e];
        let pa = mesh.nodes[edge.nodes[0]];
        let pb = mesh.nodes[edge.nodes[1]];
        let mid = edge.midpoint(mesh);
        let mean = (p_bc(pa) + 4.0 * p_bc(mid) + p_bc(pb)) / 6.0;
        rhs[e] -= mean;
    }
    rhs
}

/// `(L², H(div))` norms of an RT0 coefficient vector. The divergence part
/// uses the cellwise value `(Bq)_c / |c|` of the piecewise-constant
/// divergence carried by the integrated-flux convention.
pub fn norms(ops: &OperatorSet, q: &DofField) -> Result<(f64, f64)> {
    if q.space != Space::Rt0 {
        return Err(Error::InvalidArgument(
            "norms expects an RT0 field".into(),
        ));
    }
    Ok(norms_raw(ops, &q.coeffs))
}

pub(crate) fn norms_raw(ops: &OperatorSet, q: &[f64]) -> (f64, f64) {
    let l2sq = ops.mass_q.quadratic(q, q).expect("dimension checked");
    let div = ops.b.spmv(q).expect("dimension checked");
    let divsq: f64 = div
        .iter()
        .zip(ops.mesh.cell_areas.iter())
        .map(|(d, a)| d * d / a)
        .sum();
    (l2sq.max(0.0).sqrt(), (l2sq + divsq).max(0.0).sqrt())
}

/// Interpolate an analytic vector field into RT0 (Simpson per edge).
pub fn interpolate_rt0(mesh: &Mesh2D, v: impl Fn([f64; 2]) -> [f64; 2]) -> Vec<f64> {
    mesh.edges
        .iter()
        .map(|edge| {
            let pa = mesh.nodes[edge.nodes[0]];
            let pb = mesh.nodes[edge.nodes[1]];
            let mid = [0.5 * (pa[0] + pb[0]), 0.5 * (pa[1] + pb[1])];
            let n = edge.normal;
            let f = |p: [f64; 2]| {
                let w = v(p);
                w[0] * n[0] + w[1] * n[1]
            };
            edge.length * (f(pa) + 4.0 * f(mid) + f(pb)) / 6.0
        })
        .collect()
}

/// Point value of an RT0 field inside cell `c`.
pub fn eval_rt0(mesh: &Mesh2D, q: &[f64], c: usize, x: [f64; 2]) -> [f64; 2] {
    let area = mesh.cell_areas[c];
    let [a, b, d] = mesh.cells[c];
    let verts = [mesh.nodes[a], mesh.nodes[b], mesh.nodes[d]];
    let opposite = [verts[2], verts[0], verts[1]];
    let mut val = [0.0, 0.0];
    for (slot, &(e, sign)) in mesh.cell_edges[c].iter().enumerate() {
        let coeff = sign as f64 * q[e] / (2.0 * area);
        val[0] += coeff * (x[0] - opposite[slot][0]);
        val[1] += coeff * (x[1] - opposite[slot][1]);
    }
    val
}
