//! Surrogate assembly, online evaluation, and error metrics.
//!
//! Five variants share one evaluation contract. The three conservative ones
//! compose a spanning-tree particular solution with a kernel-mapped network
//! prediction, so their output satisfies the discrete conservation law no
//! matter how the network was trained; the two black-box ones regress the
//! flux directly and carry no such guarantee. Pressure is recovered from the
//! flux through the adjoint tree solve in every case.

pub mod checkpoint;
pub mod presets;

use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fem::{self, OperatorSet};
use crate::fom::{self, CaseTag, ProblemSpec, Snapshot};
use crate::kernelmaps::{build_pod, KernelMap};
use crate::nn::{
    train_blackbox, train_dlrom, train_podnn, DenseNetwork, LossNorm, OutputTransform,
    TrainConfig,
};
use crate::numerics::lu::max_abs;
use crate::numerics::Rng;
use crate::tol;
use crate::tree::AveragedSolver;

pub use presets::Architecture;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RomVariant {
    PodNN,
    CurlDlrom,
    SptDlrom,
    BlackboxL2,
    BlackboxHdiv,
}

impl RomVariant {
    pub const ALL: [RomVariant; 5] = [
        RomVariant::PodNN,
        RomVariant::CurlDlrom,
        RomVariant::SptDlrom,
        RomVariant::BlackboxL2,
        RomVariant::BlackboxHdiv,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            RomVariant::PodNN => "podnn",
            RomVariant::CurlDlrom => "curl_dlrom",
            RomVariant::SptDlrom => "spt_dlrom",
            RomVariant::BlackboxL2 => "blackbox_l2",
            RomVariant::BlackboxHdiv => "blackbox_hdiv",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "podnn" => Ok(RomVariant::PodNN),
            "curl_dlrom" => Ok(RomVariant::CurlDlrom),
            "spt_dlrom" => Ok(RomVariant::SptDlrom),
            "blackbox_l2" => Ok(RomVariant::BlackboxL2),
            "blackbox_hdiv" => Ok(RomVariant::BlackboxHdiv),
            other => Err(Error::InvalidArgument(format!("unknown variant `{other}`"))),
        }
    }

    pub fn is_conservative(&self) -> bool {
        !matches!(self, RomVariant::BlackboxL2 | RomVariant::BlackboxHdiv)
    }

    /// Table label for the kernel map column.
    pub fn kernel_label(&self) -> &'static str {
        match self {
            RomVariant::PodNN => "V_n",
            RomVariant::CurlDlrom => "curl",
            RomVariant::SptDlrom => "I - S_I B",
            RomVariant::BlackboxL2 | RomVariant::BlackboxHdiv => "none",
        }
    }

    /// Display name mirroring the comparison tables.
    pub fn display_name(&self) -> &'static str {
        match self {
            RomVariant::PodNN => "Conserv. POD-NN",
            RomVariant::CurlDlrom => "Conserv. DL-ROM (curl)",
            RomVariant::SptDlrom => "Conserv. DL-ROM (SpT)",
            RomVariant::BlackboxL2 => "Black-box L2",
            RomVariant::BlackboxHdiv => "Black-box H(div)",
        }
    }
}

/// Which adjoint recovers the pressure.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PressureMode {
    /// Adjoint of the first tree only; the default.
    FirstTree,
    /// Mean of all tree adjoints.
    Averaged,
}

impl PressureMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            PressureMode::FirstTree => "first_tree",
            PressureMode::Averaged => "averaged",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "first_tree" => Ok(PressureMode::FirstTree),
            "averaged" => Ok(PressureMode::Averaged),
            other => Err(Error::InvalidArgument(format!(
                "unknown pressure mode `{other}`"
            ))),
        }
    }
}

/// Trained network(s) of a surrogate; the auxiliary encoder is gone by now.
#[derive(Debug, Clone)]
pub enum RomNets {
    Single(DenseNetwork),
    LatentDecoder {
        phi: DenseNetwork,
        psi: DenseNetwork,
    },
}

pub struct RomModel {
    pub variant: RomVariant,
    pub case: CaseTag,
    pub solver: Arc<AveragedSolver>,
    pub kernel: Option<KernelMap>,
    pub nets: RomNets,
    /// Normalization metadata applied after the network's last layer.
    pub transform: OutputTransform,
    pub mesh_hash: String,
    pub pressure_mode: PressureMode,
    pub train_seed: u64,
    pub config_hash: Option<String>,
    pub ops: Arc<OperatorSet>,
}

impl RomModel {
    fn net_output(&self, mu: &[f64]) -> Vec<f64> {
        let mut y = match &self.nets {
            RomNets::Single(net) => net.forward(mu),
            RomNets::LatentDecoder { phi, psi } => psi.forward(&phi.forward(mu)),
        };
        self.transform.apply(&mut y);
        y
    }

    /// Online evaluation: flux and postprocessed pressure at one parameter.
    ///
    /// The source functional is recomputed from the analytic data, never read
    /// from training artifacts. Out-of-bounds parameters are rejected;
    /// extrapolation must be an explicit caller decision.
    pub fn evaluate(&self, mu: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let spec = ProblemSpec::new(self.case);
        spec.validate_mu(mu)?;
        let f_vec = spec.project_source(&self.ops.mesh, mu);
        let g_vec = spec.assemble_rhs_g(&self.ops.mesh, mu);

        let q = match &self.kernel {
            Some(kernel) => {
                let particular = self.solver.apply(&f_vec)?;
                let homogeneous = kernel.apply(&self.net_output(mu))?;
                particular
                    .iter()
                    .zip(homogeneous.iter())
                    .map(|(a, b)| a + b)
                    .collect()
            }
            None => self.net_output(mu),
        };
        let p = self.pressure_from_flux(mu, &q, &g_vec)?;
        Ok((q, p))
    }

    /// `p = S_I*(A(q)q − g)`, with the flux law reassembled from the
    /// predicted flux in the nonlinear case (no iteration).
    pub fn pressure_from_flux(&self, mu: &[f64], q: &[f64], g_vec: &[f64]) -> Result<Vec<f64>> {
        let spec = ProblemSpec::new(self.case);
        let aq = match spec.kappa(mu) {
            None => self.ops.mass_q.spmv(q)?,
            Some((k0, k1)) => {
                let coeff = fom::cellwise_coefficient(&self.ops.mesh, q, k0, k1);
                let mass = fem::assemble_mass_q(&self.ops.mesh, Some(&coeff));
                mass.spmv(q)?
            }
        };
        let r: Vec<f64> = aq.iter().zip(g_vec.iter()).map(|(a, g)| a - g).collect();
        match self.pressure_mode {
            PressureMode::FirstTree => self.solver.apply_adjoint_first(&r),
            PressureMode::Averaged => self.solver.apply_adjoint(&r),
        }
    }

    /// Conservation residual `‖Bq − f‖∞` against the analytic source.
    pub fn conservation_residual(&self, mu: &[f64], q: &[f64]) -> Result<(f64, f64)> {
        let spec = ProblemSpec::new(self.case);
        let f_vec = spec.project_source(&self.ops.mesh, mu);
        let bq = self.ops.b.spmv(q)?;
        let resid = bq
            .iter()
            .zip(&f_vec)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        let bound = tol::CONSERVATION * (1.0 + max_abs(&f_vec));
        Ok((resid, bound))
    }
}

/// Run the offline pipeline for one variant: homogeneous split, component
/// construction, training. Returns the model and its loss history.
pub fn build_rom(
    variant: RomVariant,
    snapshots: &[Snapshot],
    ops: &Arc<OperatorSet>,
    solver: &Arc<AveragedSolver>,
    case: CaseTag,
    arch: &Architecture,
    cfg: &TrainConfig,
) -> Result<(RomModel, Vec<f64>)> {
    if snapshots.is_empty() {
        return Err(Error::InvalidArgument("no training snapshots".into()));
    }
    let stage = |what: &str, e: Error| -> Error {
        Error::Training {
            epoch: 0,
            msg: format!("{}: {what} stage failed: {e}", variant.as_str()),
        }
    };
    let inputs: Vec<Vec<f64>> = snapshots.iter().map(|s| s.mu.clone()).collect();
    let n_params = inputs[0].len();
    let mesh_hash = fom::mesh_hash(&ops.mesh);
    let mut rng = Rng::new(cfg.seed);

    let homogeneous = |msg: &'static str| -> Result<Vec<Vec<f64>>> {
        snapshots
            .iter()
            .map(|s| solver.project_homogeneous(ops, &s.q))
            .collect::<Result<_>>()
            .map_err(|e| stage(msg, e))
    };

    let (kernel, nets, transform, history) = match variant {
        RomVariant::PodNN => {
            let q0 = homogeneous("homogeneous split")?;
            let basis = build_pod(snapshots, solver, ops, arch.pod_modes)
                .map_err(|e| stage("basis construction", e))?;
            let kernel = KernelMap::Pod {
                basis: Arc::new(basis),
                ops: ops.clone(),
            };
            let targets: Vec<Vec<f64>> = q0
                .iter()
                .map(|q| kernel.pod_coefficients(q))
                .collect::<Result<_>>()?;
            let transform = OutputTransform::fit(&targets);
            let shape = arch.podnn_shape(n_params)?;
            let mut net = DenseNetwork::init(shape, &mut rng);
            let history = train_podnn(&mut net, &inputs, &targets, &transform, cfg)?;
            (Some(kernel), RomNets::Single(net), transform, history)
        }
        RomVariant::CurlDlrom | RomVariant::SptDlrom => {
            let q0 = homogeneous("homogeneous split")?;
            let kernel = if variant == RomVariant::CurlDlrom {
                KernelMap::Curl { ops: ops.clone() }
            } else {
                KernelMap::Projection {
                    ops: ops.clone(),
                    solver: solver.clone(),
                }
            };
            let mut phi = DenseNetwork::init(arch.phi_shape(n_params)?, &mut rng);
            let mut psi =
                DenseNetwork::init(arch.psi_shape(kernel.potential_dim())?, &mut rng);
            let mut encoder =
                DenseNetwork::init(arch.encoder_shape(ops.mesh.n_edges())?, &mut rng);
            let history = train_dlrom(
                &mut phi,
                &mut psi,
                &mut encoder,
                &inputs,
                &q0,
                &kernel,
                &ops.mass_q,
                cfg,
            )?;
            // The encoder's work is done; only the latent map and decoder ship.
            drop(encoder);
            let transform = OutputTransform::identity(kernel.potential_dim());
            (
                Some(kernel),
                RomNets::LatentDecoder { phi, psi },
                transform,
                history,
            )
        }
        RomVariant::BlackboxL2 | RomVariant::BlackboxHdiv => {
            let targets: Vec<Vec<f64>> = snapshots.iter().map(|s| s.q.clone()).collect();
            let transform = OutputTransform::fit(&targets);
            let norm = if variant == RomVariant::BlackboxL2 {
                LossNorm::L2
            } else {
                LossNorm::Hdiv
            };
            let shape = arch.blackbox_shape(n_params, ops.mesh.n_edges())?;
            let mut net = DenseNetwork::init(shape, &mut rng);
            let history = train_blackbox(&mut net, &inputs, &targets, norm, ops, &transform, cfg)?;
            (None, RomNets::Single(net), transform, history)
        }
    };

    Ok((
        RomModel {
            variant,
            case,
            solver: solver.clone(),
            kernel,
            nets,
            transform,
            mesh_hash,
            pressure_mode: PressureMode::FirstTree,
            train_seed: cfg.seed,
            config_hash: None,
            ops: ops.clone(),
        },
        history,
    ))
}

/// Per-sample evaluation record.
#[derive(Debug, Clone)]
pub struct SampleReport {
    pub index: usize,
    pub rel_l2_flux: f64,
    pub rel_hdiv_flux: f64,
    pub rel_l2_pressure: f64,
    pub conservation_residual: f64,
    pub residual_bound: f64,
}

/// Evaluation summary over a test set.
#[derive(Debug, Clone)]
pub struct EvalReport {
    pub variant: RomVariant,
    pub samples: Vec<SampleReport>,
    pub mean_l2_flux: f64,
    pub mean_hdiv_flux: f64,
    pub mean_l2_pressure: f64,
    /// Samples excluded because the reference field had zero norm.
    pub excluded: usize,
    /// Evaluation wall-clock, seconds; reported separately from the
    /// deterministic metric files.
    pub eval_seconds: f64,
}

/// Evaluate a model over a test set, parallel across samples.
pub fn error_metrics(model: &RomModel, test: &[Snapshot]) -> Result<EvalReport> {
    if test.is_empty() {
        return Err(Error::InvalidArgument("empty test set".into()));
    }
    let started = std::time::Instant::now();
    let ops = &model.ops;
    let evals: Vec<Result<(Vec<f64>, Vec<f64>)>> =
        test.par_iter().map(|s| model.evaluate(&s.mu)).collect();

    let mut samples = Vec::with_capacity(test.len());
    let mut excluded = 0;
    let (mut sum_l2, mut sum_hdiv, mut sum_p) = (0.0, 0.0, 0.0);
    for (i, (snap, eval)) in test.iter().zip(evals.into_iter()).enumerate() {
        let (q_approx, p_approx) = eval?;
        let (ref_l2, ref_hdiv) = fem::norms_raw(ops, &snap.q);
        if ref_l2 == 0.0 {
            excluded += 1;
            continue;
        }
        let diff: Vec<f64> = q_approx.iter().zip(&snap.q).map(|(a, b)| a - b).collect();
        let (err_l2, err_hdiv) = fem::norms_raw(ops, &diff);
        let p_diff: Vec<f64> = p_approx.iter().zip(&snap.p).map(|(a, b)| a - b).collect();
        let p_ref = ops.mass_p.quadratic(&snap.p, &snap.p)?.max(0.0).sqrt();
        let p_err = ops.mass_p.quadratic(&p_diff, &p_diff)?.max(0.0).sqrt();
        let rel_p = if p_ref > 0.0 { p_err / p_ref } else { 0.0 };

        let (resid, bound) = model.conservation_residual(&snap.mu, &q_approx)?;
        let rel_l2 = err_l2 / ref_l2;
        let rel_hdiv = err_hdiv / ref_hdiv;
        sum_l2 += rel_l2;
        sum_hdiv += rel_hdiv;
        sum_p += rel_p;
        samples.push(SampleReport {
            index: i,
            rel_l2_flux: rel_l2,
            rel_hdiv_flux: rel_hdiv,
            rel_l2_pressure: rel_p,
            conservation_residual: resid,
            residual_bound: bound,
        });
    }
    let n = samples.len().max(1) as f64;
    Ok(EvalReport {
        variant: model.variant,
        samples,
        mean_l2_flux: sum_l2 / n,
        mean_hdiv_flux: sum_hdiv / n,
        mean_l2_pressure: sum_p / n,
        excluded,
        eval_seconds: started.elapsed().as_secs_f64(),
    })
}
