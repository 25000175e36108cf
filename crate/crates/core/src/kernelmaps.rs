//! Maps from a potential space into the kernel of the divergence.
//!
//! Three constructions, differing in what the potential is:
//! - `Projection`: the potential is a flux and `S₀ = I − S_I B` projects it
//!   onto the kernel (idempotent, with kernel equal to the range of `S_I B`);
//! - `Pod`: the potential is a coefficient vector over a reduced basis of
//!   homogeneous snapshots, orthonormal in the flux mass inner product;
//! - `Curl`: the potential is a nodal function and `S₀` is the rotated
//!   gradient, whose composition with the divergence cancels exactly.
//!
//! Potential dimensions: edges, basis size, and nodes respectively; on any
//! 2D mesh with at least two cells the nodal space is the smallest.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::fem::OperatorSet;
use crate::fom::Snapshot;
use crate::numerics::{sym_eig, DenseMatrix};
use crate::tol;
use crate::tree::AveragedSolver;

/// A reduced basis for the homogeneous flux space.
#[derive(Debug, Clone)]
pub struct PodBasis {
    /// Retained modes.
    pub n: usize,
    /// `n_edges × n`, columns orthonormal in the mass inner product.
    pub v: DenseMatrix,
    /// Full spectrum of the snapshot Gram matrix, descending.
    pub eigenvalues: Vec<f64>,
    /// Energy discarded by truncation: `Σ_{i>n} λ_i`.
    pub truncation_energy: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelVariant {
    Projection,
    Pod,
    Curl,
}

impl KernelVariant {
    pub fn as_str(&self) -> &'static str {
        match self {
            KernelVariant::Projection => "projection",
            KernelVariant::Pod => "pod",
            KernelVariant::Curl => "curl",
        }
    }
}

/// A concrete kernel map with its backing data.
#[derive(Clone)]
pub enum KernelMap {
    Projection {
        ops: Arc<OperatorSet>,
        solver: Arc<AveragedSolver>,
    },
    Pod {
        basis: Arc<PodBasis>,
        ops: Arc<OperatorSet>,
    },
    Curl {
        ops: Arc<OperatorSet>,
    },
}

impl KernelMap {
    pub fn variant(&self) -> KernelVariant {
        match self {
            KernelMap::Projection { .. } => KernelVariant::Projection,
            KernelMap::Pod { .. } => KernelVariant::Pod,
            KernelMap::Curl { .. } => KernelVariant::Curl,
        }
    }

    /// Dimension of the potential space this map consumes.
    pub fn potential_dim(&self) -> usize {
        match self {
            KernelMap::Projection { ops, .. } => ops.mesh.n_edges(),
            KernelMap::Pod { basis, .. } => basis.n,
            KernelMap::Curl { ops } => ops.mesh.n_nodes(),
        }
    }

    pub fn flux_dim(&self) -> usize {
        match self {
            KernelMap::Projection { ops, .. }
            | KernelMap::Pod { ops, .. }
            | KernelMap::Curl { ops } => ops.mesh.n_edges(),
        }
    }

    /// `S₀ r`: a flux in the kernel of the divergence.
    pub fn apply(&self, r: &[f64]) -> Result<Vec<f64>> {
        if r.len() != self.potential_dim() {
            return Err(Error::DimensionMismatch {
                what: "kernel map potential",
                expected: self.potential_dim(),
                got: r.len(),
            });
        }
        match self {
            KernelMap::Projection { ops, solver } => solver.project_homogeneous(ops, r),
            KernelMap::Pod { basis, .. } => basis.v.matvec(r),
            KernelMap::Curl { ops } => ops.curl.spmv(r),
        }
    }

    /// `S₀ᵀ w`: the transpose action used by gradient backpropagation.
    pub fn apply_transpose(&self, w: &[f64]) -> Result<Vec<f64>> {
        if w.len() != self.flux_dim() {
            return Err(Error::DimensionMismatch {
                what: "kernel map transpose operand",
                expected: self.flux_dim(),
                got: w.len(),
            });
        }
        match self {
            KernelMap::Projection { ops, solver } => {
                // (I − S_I B)ᵀ w = w − Bᵀ (S_Iᵀ w)
                let si_t = solver.apply_adjoint(w)?;
                let bt = ops.b.spmv_transpose(&si_t)?;
                Ok(w.iter().zip(bt.iter()).map(|(a, b)| a - b).collect())
            }
            KernelMap::Pod { basis, .. } => basis.v.matvec_transpose(w),
            KernelMap::Curl { ops } => ops.curl.spmv_transpose(w),
        }
    }

    /// Mass-adjoint coefficients `V* q = Vᵀ M q` of the reduced basis.
    pub fn pod_coefficients(&self, q: &[f64]) -> Result<Vec<f64>> {
        match self {
            KernelMap::Pod { basis, ops } => {
                let mq = ops.mass_q.spmv(q)?;
                basis.v.matvec_transpose(&mq)
            }
            _ => Err(Error::InvalidArgument(
                "coefficients only defined for the reduced-basis map".into(),
            )),
        }
    }
}

/// Build the reduced basis by the method of snapshots.
///
/// The homogeneous parts `q₀ = (I − S_I B) q` are computed first; the
/// `N_s × N_s` Gram matrix `U M Uᵀ` is eigendecomposed; basis column `i` is
/// `Uᵀ ũ_i / √λ_i`. Each column is passed once more through the homogeneous
/// projection to scrub the rounding the `1/√λ` scaling amplifies.
pub fn build_pod(
    snapshots: &[Snapshot],
    solver: &AveragedSolver,
    ops: &Arc<OperatorSet>,
    n: usize,
) -> Result<PodBasis> {
    if snapshots.is_empty() {
        return Err(Error::InvalidArgument("no snapshots".into()));
    }
    let ns = snapshots.len();
    if n == 0 || n > ns {
        return Err(Error::InvalidArgument(format!(
            "basis size {n} must lie in 1..={ns}"
        )));
    }
    let q0: Vec<Vec<f64>> = snapshots
        .iter()
        .map(|s| solver.project_homogeneous(ops, &s.q))
        .collect::<Result<_>>()?;

    // Gram matrix of the homogeneous snapshots in the mass inner product.
    let mq0: Vec<Vec<f64>> = q0.iter().map(|q| ops.mass_q.spmv(q)).collect::<Result<_>>()?;
    let mut gram = DenseMatrix::zeros(ns, ns);
    for i in 0..ns {
        for j in i..ns {
            let v = crate::numerics::dot(&q0[i], &mq0[j]);
            gram.set(i, j, v);
            gram.set(j, i, v);
        }
    }
    let (eigenvalues, vectors) = sym_eig(&gram)?;
    let lambda1 = eigenvalues[0].max(0.0);
    for (i, &lam) in eigenvalues.iter().take(n).enumerate() {
        if !(lam > tol::POD_RANK * lambda1) {
            return Err(Error::RankDeficient {
                mode: i,
                ratio: lam / lambda1.max(f64::MIN_POSITIVE),
            });
        }
    }

    let n_edges = ops.mesh.n_edges();
    let mut columns: Vec<Vec<f64>> = Vec::with_capacity(n);
    for mode in 0..n {
        let scale = 1.0 / eigenvalues[mode].sqrt();
        let mut col = vec![0.0; n_edges];
        for s in 0..ns {
            let w = vectors.get(s, mode) * scale;
            if w == 0.0 {
                continue;
            }
            for (c, qs) in col.iter_mut().zip(q0[s].iter()) {
                *c += w * qs;
            }
        }
        columns.push(solver.project_homogeneous(ops, &col)?);
    }
    // The 1/√λ scaling leaves an orthonormality defect of order
    // (eigensolver residual)·λ₁/λₙ; a Gram–Schmidt pass in the mass inner
    // product removes it without leaving the kernel.
    for i in 0..n {
        for _ in 0..2 {
            let mcol = ops.mass_q.spmv(&columns[i])?;
            let projections: Vec<f64> = columns[..i]
                .iter()
                .map(|prev| crate::numerics::dot(prev, &mcol))
                .collect();
            let (head, tail) = columns.split_at_mut(i);
            for (prev, proj) in head.iter().zip(projections) {
                for (c, p) in tail[0].iter_mut().zip(prev.iter()) {
                    *c -= proj * p;
                }
            }
        }
        let norm = ops.mass_q.quadratic(&columns[i], &columns[i])?.max(0.0).sqrt();
        if norm == 0.0 {
            return Err(Error::RankDeficient { mode: i, ratio: 0.0 });
        }
        for c in columns[i].iter_mut() {
            *c /= norm;
        }
    }
    let mut v = DenseMatrix::zeros(n_edges, n);
    for (mode, col) in columns.iter().enumerate() {
        for (r, val) in col.iter().enumerate() {
            v.set(r, mode, *val);
        }
    }
    let truncation_energy = eigenvalues[n..].iter().map(|l| l.max(0.0)).sum();
    Ok(PodBasis {
        n,
        v,
        eigenvalues,
        truncation_energy,
    })
}
