//! Training losses and the full-batch objectives behind them.
//!
//! - Reduced-coefficient regression: plain mean-squared error between the
//!   network output and precomputed basis coefficients.
//! - Kernel-mapped reconstruction with latent regularization: the decoder
//!   output passes through the fixed linear kernel map and is measured in
//!   the flux mass norm; an auxiliary encoder ties the latent code to the
//!   homogeneous flux and is discarded after training.
//! - Black-box regression on the raw flux in either the L² or the H(div)
//!   quadratic form.

use crate::error::{Error, Result};
use crate::fem::OperatorSet;
use crate::kernelmaps::KernelMap;
use crate::nn::network::{NetShape, OutputTransform, Workspace};
use crate::nn::optimizer::Objective;
use crate::numerics::SparseMatrix;

/// Which quadratic form measures the black-box misfit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossNorm {
    L2,
    Hdiv,
}

/// Mean-squared error between `net(μᵢ)` (through the output transform) and
/// coefficient targets.
pub struct CoefficientObjective<'a> {
    pub shape: &'a NetShape,
    pub inputs: &'a [Vec<f64>],
    pub targets: &'a [Vec<f64>],
    pub transform: &'a OutputTransform,
    ws: Workspace,
}

impl<'a> CoefficientObjective<'a> {
    pub fn new(
        shape: &'a NetShape,
        inputs: &'a [Vec<f64>],
        targets: &'a [Vec<f64>],
        transform: &'a OutputTransform,
    ) -> Self {
        let ws = Workspace::for_shape(shape);
        Self {
            shape,
            inputs,
            targets,
            transform,
            ws,
        }
    }
}

impl Objective for CoefficientObjective<'_> {
    fn n_params(&self) -> usize {
        self.shape.n_params()
    }

    fn eval(&mut self, params: &[f64], grad: &mut [f64]) -> f64 {
        grad.fill(0.0);
        let ns = self.inputs.len() as f64;
        let mut loss = 0.0;
        for (x, c) in self.inputs.iter().zip(self.targets.iter()) {
            self.shape.forward(params, x, &mut self.ws);
            let mut y = self.shape.output(&self.ws).to_vec();
            self.transform.apply(&mut y);
            let mut delta = vec![0.0; y.len()];
            for k in 0..y.len() {
                let r = y[k] - c[k];
                loss += r * r / ns;
                delta[k] = 2.0 * r / ns * self.transform.scale[k];
            }
            self.shape.backward(params, &self.ws, &delta, grad, false);
        }
        loss
    }
}

/// Reconstruction-plus-latent objective over the concatenated parameters
/// `[latent map | decoder | encoder]`.
pub struct KernelReconstructionObjective<'a> {
    pub phi: &'a NetShape,
    pub psi: &'a NetShape,
    pub encoder: &'a NetShape,
    pub inputs: &'a [Vec<f64>],
    pub targets_q0: &'a [Vec<f64>],
    pub kernel: &'a KernelMap,
    pub mass: &'a SparseMatrix,
    pub lambda: f64,
    ws_phi: Workspace,
    ws_psi: Workspace,
    ws_enc: Workspace,
}

impl<'a> KernelReconstructionObjective<'a> {
    pub fn new(
        phi: &'a NetShape,
        psi: &'a NetShape,
        encoder: &'a NetShape,
        inputs: &'a [Vec<f64>],
        targets_q0: &'a [Vec<f64>],
        kernel: &'a KernelMap,
        mass: &'a SparseMatrix,
        lambda: f64,
    ) -> Result<Self> {
        if phi.output_dim() != psi.layers[0].n_in
            || encoder.output_dim() != phi.output_dim()
        {
            return Err(Error::DimensionMismatch {
                what: "latent dimensions of the three networks",
                expected: phi.output_dim(),
                got: encoder.output_dim(),
            });
        }
        if psi.output_dim() != kernel.potential_dim() {
            return Err(Error::DimensionMismatch {
                what: "decoder output vs potential space",
                expected: kernel.potential_dim(),
                got: psi.output_dim(),
            });
        }
        if lambda < 0.0 {
            return Err(Error::InvalidArgument(
                "regularization weight must be nonnegative".into(),
            ));
        }
        Ok(Self {
            ws_phi: Workspace::for_shape(phi),
            ws_psi: Workspace::for_shape(psi),
            ws_enc: Workspace::for_shape(encoder),
            phi,
            psi,
            encoder,
            inputs,
            targets_q0,
            kernel,
            mass,
            lambda,
        })
    }

    pub fn split(&self) -> (usize, usize, usize) {
        (
            self.phi.n_params(),
            self.psi.n_params(),
            self.encoder.n_params(),
        )
    }
}

impl Objective for KernelReconstructionObjective<'_> {
    fn n_params(&self) -> usize {
        self.phi.n_params() + self.psi.n_params() + self.encoder.n_params()
    }

    fn eval(&mut self, params: &[f64], grad: &mut [f64]) -> f64 {
        grad.fill(0.0);
        let (np, nd, _) = self.split();
        let (p_phi, rest) = params.split_at(np);
        let (p_psi, p_enc) = rest.split_at(nd);
        let (g_phi, g_rest) = grad.split_at_mut(np);
        let (g_psi, g_enc) = g_rest.split_at_mut(nd);

        let ns = self.inputs.len() as f64;
        let mut loss = 0.0;
        for (x, q0) in self.inputs.iter().zip(self.targets_q0.iter()) {
            self.phi.forward(p_phi, x, &mut self.ws_phi);
            let latent = self.phi.output(&self.ws_phi).to_vec();
            self.psi.forward(p_psi, &latent, &mut self.ws_psi);
            let potential = self.psi.output(&self.ws_psi);

            let w = self.kernel.apply(potential).expect("dims checked");
            let r: Vec<f64> = w.iter().zip(q0.iter()).map(|(a, b)| a - b).collect();
            let mr = self.mass.spmv(&r).expect("dims checked");
            loss += r.iter().zip(&mr).map(|(a, b)| a * b).sum::<f64>() / ns;

            let scaled: Vec<f64> = mr.iter().map(|v| 2.0 * v / ns).collect();
            let delta_pot = self.kernel.apply_transpose(&scaled).expect("dims checked");
            let mut delta_latent = self
                .psi
                .backward(p_psi, &self.ws_psi, &delta_pot, g_psi, true)
                .expect("input gradient requested");

            if self.lambda > 0.0 {
                self.encoder.forward(p_enc, q0, &mut self.ws_enc);
                let code = self.encoder.output(&self.ws_enc);
                let d: Vec<f64> = code.iter().zip(&latent).map(|(a, b)| a - b).collect();
                loss += self.lambda * d.iter().map(|v| v * v).sum::<f64>() / ns;
                let delta_code: Vec<f64> =
                    d.iter().map(|v| 2.0 * self.lambda * v / ns).collect();
                self.encoder
                    .backward(p_enc, &self.ws_enc, &delta_code, g_enc, false);
                for (dl, dv) in delta_latent.iter_mut().zip(&d) {
                    *dl -= 2.0 * self.lambda * dv / ns;
                }
            }
            self.phi
                .backward(p_phi, &self.ws_phi, &delta_latent, g_phi, false);
        }
        loss
    }
}

/// Black-box regression objective in the chosen flux norm.
pub struct FluxRegressionObjective<'a> {
    pub shape: &'a NetShape,
    pub inputs: &'a [Vec<f64>],
    pub targets_q: &'a [Vec<f64>],
    pub norm: LossNorm,
    pub ops: &'a OperatorSet,
    pub transform: &'a OutputTransform,
    ws: Workspace,
    inv_areas: Vec<f64>,
}

impl<'a> FluxRegressionObjective<'a> {
    pub fn new(
        shape: &'a NetShape,
        inputs: &'a [Vec<f64>],
        targets_q: &'a [Vec<f64>],
        norm: LossNorm,
        ops: &'a OperatorSet,
        transform: &'a OutputTransform,
    ) -> Self {
        Self {
            ws: Workspace::for_shape(shape),
            inv_areas: ops.mesh.cell_areas.iter().map(|a| 1.0 / a).collect(),
            shape,
            inputs,
            targets_q,
            norm,
            ops,
            transform,
        }
    }

    /// `X r` for the active quadratic form.
    fn apply_form(&self, r: &[f64]) -> Vec<f64> {
        let mut xr = self.ops.mass_q.spmv(r).expect("dims checked");
        if self.norm == LossNorm::Hdiv {
            let mut br = self.ops.b.spmv(r).expect("dims checked");
            for (b, ia) in br.iter_mut().zip(&self.inv_areas) {
                *b *= ia;
            }
            let bt = self.ops.b.spmv_transpose(&br).expect("dims checked");
            for (x, b) in xr.iter_mut().zip(&bt) {
                *x += b;
            }
        }
        xr
    }
}

impl Objective for FluxRegressionObjective<'_> {
    fn n_params(&self) -> usize {
        self.shape.n_params()
    }

    fn eval(&mut self, params: &[f64], grad: &mut [f64]) -> f64 {
        grad.fill(0.0);
        let ns = self.inputs.len() as f64;
        let mut loss = 0.0;
        for (x, q) in self.inputs.iter().zip(self.targets_q.iter()) {
            self.shape.forward(params, x, &mut self.ws);
            let mut y = self.shape.output(&self.ws).to_vec();
            self.transform.apply(&mut y);
            let r: Vec<f64> = y.iter().zip(q.iter()).map(|(a, b)| a - b).collect();
            let xr = self.apply_form(&r);
            loss += r.iter().zip(&xr).map(|(a, b)| a * b).sum::<f64>() / ns;
            let delta: Vec<f64> = xr
                .iter()
                .zip(&self.transform.scale)
                .map(|(v, s)| 2.0 * v / ns * s)
                .collect();
            self.shape.backward(params, &self.ws, &delta, grad, false);
        }
        loss
    }
}

/// Evaluate `(1/N_s) Σ ‖q₀ᵢ − S₀·net(μᵢ)‖²_M` for a standalone network;
/// the reconstruction loss without latent regularization.
pub fn kernel_loss(
    shape: &NetShape,
    params: &[f64],
    inputs: &[Vec<f64>],
    targets_q0: &[Vec<f64>],
    kernel: &KernelMap,
    mass: &SparseMatrix,
) -> Result<f64> {
    let mut ws = Workspace::for_shape(shape);
    let ns = inputs.len() as f64;
    let mut loss = 0.0;
    for (x, q0) in inputs.iter().zip(targets_q0.iter()) {
        shape.forward(params, x, &mut ws);
        let w = kernel.apply(shape.output(&ws))?;
        let r: Vec<f64> = w.iter().zip(q0.iter()).map(|(a, b)| a - b).collect();
        loss += mass.quadratic(&r, &r)? / ns;
    }
    Ok(loss)
}

/// Mean-squared coefficient loss for a standalone network.
pub fn coefficient_loss(
    shape: &NetShape,
    params: &[f64],
    inputs: &[Vec<f64>],
    targets: &[Vec<f64>],
) -> f64 {
    let mut ws = Workspace::for_shape(shape);
    let ns = inputs.len() as f64;
    let mut loss = 0.0;
    for (x, c) in inputs.iter().zip(targets.iter()) {
        shape.forward(params, x, &mut ws);
        let y = shape.output(&ws);
        loss += y
            .iter()
            .zip(c.iter())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            / ns;
    }
    loss
}
