//! Dense networks, losses, and deterministic training loops.

pub mod losses;
pub mod network;
pub mod optimizer;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::OperatorSet;
use crate::kernelmaps::KernelMap;
use crate::numerics::SparseMatrix;

pub use losses::{
    coefficient_loss, kernel_loss, CoefficientObjective, FluxRegressionObjective,
    KernelReconstructionObjective, LossNorm,
};
pub use network::{
    feature_sine_grid, Activation, DenseNetwork, FeatureLayer, LayerSpec, NetShape,
    OutputTransform, Workspace,
};
pub use optimizer::{
    minimize_adam, minimize_lbfgs, AdamOptions, LbfgsOptions, MinimizeResult, Objective,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Lbfgs,
    Adam,
}

/// Full-batch training configuration; one epoch is one parameter update.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub optimizer: OptimizerKind,
    pub epochs: usize,
    pub learning_rate: f64,
    /// Latent-regularization weight.
    pub lambda: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            optimizer: OptimizerKind::Lbfgs,
            epochs: 500,
            learning_rate: 1.0,
            lambda: 1.0,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::InvalidArgument("epochs must be at least 1".into()));
        }
        if self.lambda < 0.0 {
            return Err(Error::InvalidArgument(
                "regularization weight must be nonnegative".into(),
            ));
        }
        Ok(())
    }

    fn run(&self, obj: &mut dyn Objective, x0: Vec<f64>) -> Result<MinimizeResult> {
        self.validate()?;
        match self.optimizer {
            OptimizerKind::Lbfgs => minimize_lbfgs(
                obj,
                x0,
                &LbfgsOptions {
                    max_iters: self.epochs,
                    learning_rate: self.learning_rate,
                    ..Default::default()
                },
            ),
            OptimizerKind::Adam => minimize_adam(
                obj,
                x0,
                &AdamOptions {
                    max_iters: self.epochs,
                    learning_rate: self.learning_rate,
                    ..Default::default()
                },
            ),
        }
    }
}

/// Train a coefficient-regression network in place; returns the loss history.
pub fn train_podnn(
    net: &mut DenseNetwork,
    inputs: &[Vec<f64>],
    targets: &[Vec<f64>],
    transform: &OutputTransform,
    cfg: &TrainConfig,
) -> Result<Vec<f64>> {
    let mut obj = CoefficientObjective::new(&net.shape, inputs, targets, transform);
    let res = cfg.run(&mut obj, net.params.clone())?;
    net.params = res.params;
    Ok(res.history)
}

/// Train the latent map and decoder jointly with an auxiliary encoder.
///
/// The reconstruction term is measured in the flux mass norm after the fixed
/// linear kernel map; gradients flow through it. The encoder only serves the
/// latent-regularization term and is discarded by the caller after training.
pub fn train_dlrom(
    phi: &mut DenseNetwork,
    psi: &mut DenseNetwork,
    encoder: &mut DenseNetwork,
    inputs: &[Vec<f64>],
    targets_q0: &[Vec<f64>],
    kernel: &KernelMap,
    mass: &SparseMatrix,
    cfg: &TrainConfig,
) -> Result<Vec<f64>> {
    let mut obj = KernelReconstructionObjective::new(
        &phi.shape,
        &psi.shape,
        &encoder.shape,
        inputs,
        targets_q0,
        kernel,
        mass,
        cfg.lambda,
    )?;
    let mut x0 = Vec::with_capacity(obj.n_params());
    x0.extend_from_slice(&phi.params);
    x0.extend_from_slice(&psi.params);
    x0.extend_from_slice(&encoder.params);
    let res = cfg.run(&mut obj, x0)?;
    let (np, nd, _) = obj.split();
    phi.params = res.params[..np].to_vec();
    psi.params = res.params[np..np + nd].to_vec();
    encoder.params = res.params[np + nd..].to_vec();
    Ok(res.history)
}

/// Train a black-box flux regressor in the chosen norm.
pub fn train_blackbox(
    net: &mut DenseNetwork,
    inputs: &[Vec<f64>],
    targets_q: &[Vec<f64>],
    norm: LossNorm,
    ops: &OperatorSet,
    transform: &OutputTransform,
    cfg: &TrainConfig,
) -> Result<Vec<f64>> {
    let mut obj = FluxRegressionObjective::new(&net.shape, inputs, targets_q, norm, ops, transform);
    let res = cfg.run(&mut obj, net.params.clone())?;
    net.params = res.params;
    Ok(res.history)
}
