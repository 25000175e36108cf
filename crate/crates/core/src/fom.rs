//! Full-order solvers for the two parametrized problems and snapshot
//! generation.
//!
//! Both problems pose the mixed system
//! `A(q)q − Bᵀp = g_vec`, `Bq = f_vec` on RT0×P0 with pressure data on the
//! whole boundary. The linear case solves one saddle-point system; the
//! nonlinear (Forchheimer) case runs a frozen-coefficient Picard iteration,
//! reassembling only the flux mass matrix with the cellwise coefficient
//! `κ₀⁻¹(1 + κ₁⁻¹|q|)` evaluated at cell midpoints.

use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::{self, OperatorSet};
use crate::mesh::Mesh2D;
use crate::numerics::io;
use crate::numerics::lu::max_abs;
use crate::numerics::{
    factorize, latin_hypercube, solve_refined, DenseMatrix, Rng, SparseBuilder, SparseMatrix,
};
use crate::tol;

const TWO_PI: f64 = 2.0 * std::f64::consts::PI;

/// The problem catalog.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CaseTag {
    /// Linear Darcy flow with a product-of-sines source, unit conductivity,
    /// homogeneous pressure data, and constant vector source `[1, 0]`.
    Sines2D,
    /// Darcy–Forchheimer flow with a mixed-sine source, bilinear boundary
    /// pressure, and log-uniform drag parameters.
    Forchheimer2D,
}

impl CaseTag {
    pub fn as_str(&self) -> &'static str {
        match self {
            CaseTag::Sines2D => "sines2d",
            CaseTag::Forchheimer2D => "forchheimer2d",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "sines2d" => Ok(CaseTag::Sines2D),
            "forchheimer2d" => Ok(CaseTag::Forchheimer2D),
            other => Err(Error::InvalidArgument(format!("unknown case tag `{other}`"))),
        }
    }
}

/// Parametrized problem data: source, vector source, boundary pressure, and
/// the flux operator coefficient.
#[derive(Debug, Clone, Copy)]
pub struct ProblemSpec {
    pub case: CaseTag,
}

impl ProblemSpec {
    pub fn new(case: CaseTag) -> Self {
        Self { case }
    }

    pub fn n_params(&self) -> usize {
        match self.case {
            CaseTag::Sines2D => 2,
            CaseTag::Forchheimer2D => 4,
        }
    }

    pub fn bounds(&self) -> Vec<[f64; 2]> {
        match self.case {
            CaseTag::Sines2D => vec![[1.0, 4.0], [1.0, 4.0]],
            CaseTag::Forchheimer2D => {
                vec![[0.0, 1.0], [0.0, 1.0], [-2.0, 1.0], [0.0, 2.0]]
            }
        }
    }

    pub fn validate_mu(&self, mu: &[f64]) -> Result<()> {
        let bounds = self.bounds();
        if mu.len() != bounds.len() {
            return Err(Error::DimensionMismatch {
                what: "parameter vector",
                expected: bounds.len(),
                got: mu.len(),
            });
        }
        for (i, (&v, b)) in mu.iter().zip(bounds.iter()).enumerate() {
            if !(v >= b[0] && v <= b[1]) {
                return Err(Error::OutOfBounds {
                    index: i,
                    value: v,
                    lo: b[0],
                    hi: b[1],
                });
            }
        }
        Ok(())
    }

    pub fn source_value(&self, mu: &[f64], x: [f64; 2]) -> f64 {
        match self.case {
            CaseTag::Sines2D => (mu[0] * TWO_PI * x[0]).sin() * (mu[1] * TWO_PI * x[1]).sin(),
            CaseTag::Forchheimer2D => {
                mu[0] * (TWO_PI * x[0]).sin() + (1.0 - mu[0]) * (TWO_PI * x[1]).sin()
            }
        }
    }

    pub fn vector_source_value(&self, _mu: &[f64], _x: [f64; 2]) -> [f64; 2] {
        match self.case {
            CaseTag::Sines2D => [1.0, 0.0],
            CaseTag::Forchheimer2D => [0.0, 0.0],
        }
    }

    pub fn pressure_bc_value(&self, mu: &[f64], x: [f64; 2]) -> f64 {
        match self.case {
            CaseTag::Sines2D => 0.0,
            CaseTag::Forchheimer2D => mu[1] * x[0] * x[1],
        }
    }

    /// Drag parameters `(κ₀, κ₁)` for the nonlinear law; `None` for Darcy.
    pub fn kappa(&self, mu: &[f64]) -> Option<(f64, f64)> {
        match self.case {
            CaseTag::Sines2D => None,
            CaseTag::Forchheimer2D => Some((10f64.powf(mu[2]), 10f64.powf(mu[3]))),
        }
    }

    /// Flux-law coefficient `A(q)` at flux magnitude `|q|`; Darcy has
    /// `κ⁻¹ = 1`.
    pub fn flux_coefficient(&self, mu: &[f64], q_mag: f64) -> f64 {
        match self.kappa(mu) {
            None => 1.0,
            Some((k0, k1)) => (1.0 + q_mag / k1) / k0,
        }
    }

    pub fn project_source(&self, mesh: &Mesh2D, mu: &[f64]) -> Vec<f64> {
        fem::project_source(mesh, |x| self.source_value(mu, x))
    }

    pub fn assemble_rhs_g(&self, mesh: &Mesh2D, mu: &[f64]) -> Vec<f64> {
        fem::assemble_rhs_g(
            mesh,
            |x| self.vector_source_value(mu, x),
            |x| self.pressure_bc_value(mu, x),
        )
    }
}

/// One solved parameter instance.
#[derive(Debug, Clone)]
pub struct Snapshot {
    pub mu: Vec<f64>,
    /// RT0 flux coefficients.
    pub q: Vec<f64>,
    /// P0 pressure coefficients.
    pub p: Vec<f64>,
    /// P0-dual source vector.
    pub f_vec: Vec<f64>,
    /// RT0-dual right-hand side.
    pub g_vec: Vec<f64>,
}

impl Snapshot {
    /// `‖Bq − f‖∞ ≤ CONSERVATION·(1 + ‖f‖∞)`.
    pub fn conservation_residual(&self, ops: &OperatorSet) -> Result<f64> {
        let bq = ops.b.spmv(&self.q)?;
        Ok(bq
            .iter()
            .zip(&self.f_vec)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs())))
    }

    pub fn check_conservation(&self, ops: &OperatorSet) -> Result<()> {
        let r = self.conservation_residual(ops)?;
        let bound = tol::CONSERVATION * (1.0 + max_abs(&self.f_vec));
        if r <= bound {
            Ok(())
        } else {
            Err(Error::NonConvergence(format!(
                "snapshot violates conservation: residual {r:.3e} > {bound:.3e}"
            )))
        }
    }
}

/// Assemble the saddle-point matrix `[[M, −Bᵀ], [B, 0]]` for a given flux
/// mass matrix.
fn saddle_matrix(mass_q: &SparseMatrix, b: &SparseMatrix) -> SparseMatrix {
    let nq = mass_q.n_rows();
    let np = b.n_rows();
    let mut s = SparseBuilder::new(nq + np, nq + np);
    for r in 0..nq {
        for (c, v) in mass_q.row(r) {
            s.push(r, c, v);
        }
    }
    for r in 0..np {
        for (c, v) in b.row(r) {
            s.push(nq + r, c, v); // B block
            s.push(c, nq + r, -v); // −Bᵀ block
        }
    }
    s.compress()
}

/// Reusable factorization of the linear Darcy saddle system.
pub struct DarcySolver {
    lu: crate::numerics::LuFactors,
    matrix: SparseMatrix,
    n_edges: usize,
    n_cells: usize,
}

impl DarcySolver {
    pub fn new(ops: &OperatorSet) -> Result<Self> {
        Self::with_mass(ops, &ops.mass_q)
    }

    pub fn with_mass(ops: &OperatorSet, mass_q: &SparseMatrix) -> Result<Self> {
        let matrix = saddle_matrix(mass_q, &ops.b);
        let lu = factorize(&matrix)?;
        Ok(Self {
            lu,
            matrix,
            n_edges: ops.b.n_cols(),
            n_cells: ops.b.n_rows(),
        })
    }

    pub fn solve(&self, f_vec: &[f64], g_vec: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        if f_vec.len() != self.n_cells || g_vec.len() != self.n_edges {
            return Err(Error::DimensionMismatch {
                what: "saddle solve data",
                expected: self.n_cells + self.n_edges,
                got: f_vec.len() + g_vec.len(),
            });
        }
        let mut rhs = Vec::with_capacity(self.n_edges + self.n_cells);
        rhs.extend_from_slice(g_vec);
        rhs.extend_from_slice(f_vec);
        let x = solve_refined(&self.matrix, &self.lu, &rhs)?;
        let q = x[..self.n_edges].to_vec();
        let p = x[self.n_edges..].to_vec();
        Ok((q, p))
    }
}

/// Solve the linear Darcy system once.
pub fn solve_darcy(ops: &OperatorSet, f_vec: &[f64], g_vec: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    DarcySolver::new(ops)?.solve(f_vec, g_vec)
}

/// Result of the nonlinear solve, with the Picard iteration count attached.
pub struct ForchheimerSolution {
    pub q: Vec<f64>,
    pub p: Vec<f64>,
    pub iterations: usize,
}

/// Frozen-coefficient Picard iteration for the Darcy–Forchheimer law.
///
/// At each step the flux mass matrix is reassembled with the cellwise
/// coefficient `κ₀⁻¹(1 + κ₁⁻¹|q_k|)` (flux magnitude at the cell midpoint)
/// and the resulting linear saddle system is solved. Stops when both the
/// relative flux increment and the nonlinear residual fall below the Picard
/// tolerance.
pub fn solve_forchheimer(
    ops: &OperatorSet,
    f_vec: &[f64],
    g_vec: &[f64],
    kappa0: f64,
    kappa1: f64,
) -> Result<ForchheimerSolution> {
    if kappa0 <= 0.0 || kappa1 <= 0.0 {
        return Err(Error::InvalidArgument(
            "drag parameters must be positive".into(),
        ));
    }
    let mesh = &ops.mesh;
    let mut q = vec![0.0; mesh.n_edges()];
    let mut best_contract: Option<(Vec<f64>, Vec<f64>, usize)> = None;
    let mut last_residual = f64::INFINITY;
    let mut prev_increment = f64::INFINITY;
    for iter in 1..=tol::PICARD_MAX_ITER {
        let coeff = cellwise_coefficient(mesh, &q, kappa0, kappa1);
        let mass = fem::assemble_mass_q(mesh, Some(&coeff));
        let solver = DarcySolver::with_mass(ops, &mass)?;
        let (q_next, p_next) = solver.solve(f_vec, g_vec)?;

        let increment = l2_norm(ops, &sub_vec(&q_next, &q));
        let scale = 1.0 + l2_norm(ops, &q_next);

        // Nonlinear residual with the coefficient re-evaluated at q_next.
        let coeff_next = cellwise_coefficient(mesh, &q_next, kappa0, kappa1);
        let mass_next = fem::assemble_mass_q(mesh, Some(&coeff_next));
        let mq = mass_next.spmv(&q_next)?;
        let btp = ops.b.spmv_transpose(&p_next)?;
        let res1: Vec<f64> = mq
            .iter()
            .zip(btp.iter())
            .zip(g_vec.iter())
            .map(|((a, b), g)| a - b - g)
            .collect();
        let res2 = ops.b.spmv(&q_next)?;
        let res2: Vec<f64> = res2.iter().zip(f_vec.iter()).map(|(a, b)| a - b).collect();
        let rel_res = (max_abs(&res1) / (1.0 + max_abs(g_vec)))
            .max(max_abs(&res2) / (1.0 + max_abs(f_vec)));
        last_residual = rel_res;

        q = q_next;
        let contract = increment <= tol::PICARD * scale && rel_res <= tol::PICARD;
        if contract {
            best_contract = Some((q.clone(), p_next.clone(), iter));
        }
        let tight = increment <= tol::PICARD_TIGHT * scale && rel_res <= tol::PICARD_TIGHT;
        // Rounding floor: increments stop contracting once the linear-solve
        // backward error dominates.
        let stagnated = contract && increment >= 0.9 * prev_increment;
        if tight || stagnated {
            return Ok(ForchheimerSolution {
                q,
                p: p_next,
                iterations: iter,
            });
        }
        prev_increment = increment;
    }
    // The tight target was not reached within the cap; the guaranteed
    // tolerance may still hold at the last contract-satisfying iterate.
    if let Some((q, p, iterations)) = best_contract {
        return Ok(ForchheimerSolution { q, p, iterations });
    }
    Err(Error::NonConvergence(format!(
        "Picard iteration cap {} reached, last residual {last_residual:.3e}",
        tol::PICARD_MAX_ITER
    )))
}

/// Cellwise flux-law coefficient evaluated at cell midpoints.
pub fn cellwise_coefficient(
    mesh: &Mesh2D,
    q: &[f64],
    kappa0: f64,
    kappa1: f64,
) -> Vec<f64> {
    (0..mesh.n_cells())
        .map(|c| {
            let v = fem::eval_rt0(mesh, q, c, mesh.cell_centroid(c));
            let mag = (v[0] * v[0] + v[1] * v[1]).sqrt();
            (1.0 + mag / kappa1) / kappa0
        })
        .collect()
}

fn l2_norm(ops: &OperatorSet, v: &[f64]) -> f64 {
    ops.mass_q.quadratic(v, v).expect("dimensions fixed").max(0.0).sqrt()
}

fn sub_vec(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b.iter()).map(|(x, y)| x - y).collect()
}

/// Solve one parameter instance with the solver the case requires.
pub fn solve_instance(spec: &ProblemSpec, ops: &OperatorSet, mu: &[f64]) -> Result<Snapshot> {
    spec.validate_mu(mu)?;
    let f_vec = spec.project_source(&ops.mesh, mu);
    let g_vec = spec.assemble_rhs_g(&ops.mesh, mu);
    let (q, p) = match spec.kappa(mu) {
        None => solve_darcy(ops, &f_vec, &g_vec)?,
        Some((k0, k1)) => {
            let sol = solve_forchheimer(ops, &f_vec, &g_vec, k0, k1)?;
            (sol.q, sol.p)
        }
    };
    let snap = Snapshot {
        mu: mu.to_vec(),
        q,
        p,
        f_vec,
        g_vec,
    };
    snap.check_conservation(ops)?;
    Ok(snap)
}

/// Latin-hypercube sampling of the parameter box, one solve per sample.
///
/// Solves run in parallel over samples; each is a pure function of
/// `(ops, μ)`, so the result is deterministic given the seed. The linear
/// case factors the saddle matrix once and reuses it for every sample.
pub fn generate_snapshots(
    spec: &ProblemSpec,
    ops: &Arc<OperatorSet>,
    rng: &mut Rng,
    n: usize,
) -> Result<Vec<Snapshot>> {
    generate_snapshots_with_iterations(spec, ops, rng, n).map(|(snaps, _)| snaps)
}

/// As [`generate_snapshots`], also reporting the nonlinear iteration count
/// per sample (zero for direct linear solves).
pub fn generate_snapshots_with_iterations(
    spec: &ProblemSpec,
    ops: &Arc<OperatorSet>,
    rng: &mut Rng,
    n: usize,
) -> Result<(Vec<Snapshot>, Vec<usize>)> {
    let samples = latin_hypercube(rng, n, &spec.bounds())?;
    let shared_solver = match spec.case {
        CaseTag::Sines2D => Some(DarcySolver::new(ops)?),
        CaseTag::Forchheimer2D => None,
    };
    let results: Vec<Result<(Snapshot, usize)>> = samples
        .par_iter()
        .map(|mu| {
            let f_vec = spec.project_source(&ops.mesh, mu);
            let g_vec = spec.assemble_rhs_g(&ops.mesh, mu);
            let (q, p, iters) = match (&shared_solver, spec.kappa(mu)) {
                (Some(solver), None) => {
                    let (q, p) = solver.solve(&f_vec, &g_vec)?;
                    (q, p, 0)
                }
                (_, Some((k0, k1))) => {
                    let sol = solve_forchheimer(ops, &f_vec, &g_vec, k0, k1)?;
                    (sol.q, sol.p, sol.iterations)
                }
                (None, None) => {
                    let (q, p) = solve_darcy(ops, &f_vec, &g_vec)?;
                    (q, p, 0)
                }
            };
            let snap = Snapshot {
                mu: mu.clone(),
                q,
                p,
                f_vec,
                g_vec,
            };
            snap.check_conservation(ops)?;
            Ok((snap, iters))
        })
        .collect();
    let mut snaps = Vec::with_capacity(n);
    let mut iterations = Vec::with_capacity(n);
    for (r, mu) in results.into_iter().zip(samples.iter()) {
        let (snap, iters) =
            r.map_err(|e| Error::NonConvergence(format!("sample μ = {mu:?} failed: {e}")))?;
        snaps.push(snap);
        iterations.push(iters);
    }
    Ok((snaps, iterations))
}

/// On-disk snapshot archive metadata.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ArchiveMeta {
    pub case: CaseTag,
    pub mesh_hash: String,
    pub seed: u64,
    pub n_samples: usize,
    pub rng_algorithm: String,
    pub solver_residual_tol: f64,
    pub conservation_tol: f64,
    pub config_hash: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub picard_iterations: Vec<usize>,
}

/// Deterministic mesh fingerprint: SHA-256 of the text serialization.
pub fn mesh_hash(mesh: &Mesh2D) -> String {
    use sha2::{Digest, Sha256};
    let mut h = Sha256::new();
    h.update(mesh.to_text().as_bytes());
    hex_string(&h.finalize())
}

pub(crate) fn hex_string(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Write the archive: dense matrices `params`, `flux`, `pressure`, `source`,
/// `rhs_g` plus `meta.toml`.
pub fn save_archive(dir: &Path, snapshots: &[Snapshot], meta: &ArchiveMeta) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let rows = |f: &dyn Fn(&Snapshot) -> Vec<f64>| -> Result<DenseMatrix> {
        DenseMatrix::from_rows(&snapshots.iter().map(|s| f(s)).collect::<Vec<_>>())
    };
    io::write_dense(&dir.join("params.bin"), &rows(&|s| s.mu.clone())?)?;
    io::write_dense(&dir.join("flux.bin"), &rows(&|s| s.q.clone())?)?;
    io::write_dense(&dir.join("pressure.bin"), &rows(&|s| s.p.clone())?)?;
    io::write_dense(&dir.join("source.bin"), &rows(&|s| s.f_vec.clone())?)?;
    io::write_dense(&dir.join("rhs_g.bin"), &rows(&|s| s.g_vec.clone())?)?;
    let toml = toml::to_string_pretty(meta)
        .map_err(|e| Error::Format(format!("metadata serialization: {e}")))?;
    std::fs::write(dir.join("meta.toml"), toml)?;
    Ok(())
}

pub fn load_archive(dir: &Path) -> Result<(Vec<Snapshot>, ArchiveMeta)> {
    let meta_path = dir.join("meta.toml");
    if !meta_path.exists() {
        return Err(Error::MissingArtifact(format!(
            "archive metadata {}",
            meta_path.display()
        )));
    }
    let meta: ArchiveMeta = toml::from_str(&std::fs::read_to_string(&meta_path)?)
        .map_err(|e| Error::Format(format!("metadata parse: {e}")))?;
    let params = io::read_dense(&dir.join("params.bin"))?;
    let flux = io::read_dense(&dir.join("flux.bin"))?;
    let pressure = io::read_dense(&dir.join("pressure.bin"))?;
    let source = io::read_dense(&dir.join("source.bin"))?;
    let rhs_g = io::read_dense(&dir.join("rhs_g.bin"))?;
    let n = params.n_rows();
    if [flux.n_rows(), pressure.n_rows(), source.n_rows(), rhs_g.n_rows()]
        .iter()
        .any(|&r| r != n)
    {
        return Err(Error::Format("archive matrices disagree on sample count".into()));
    }
    let snapshots = (0..n)
        .map(|i| Snapshot {
            mu: params.row(i).to_vec(),
            q: flux.row(i).to_vec(),
            p: pressure.row(i).to_vec(),
            f_vec: source.row(i).to_vec(),
            g_vec: rhs_g.row(i).to_vec(),
        })
        .collect();
    Ok((snapshots, meta))
}
