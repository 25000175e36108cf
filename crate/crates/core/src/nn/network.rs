//! Dense feedforward networks with hand-written reverse-mode gradients.
//!
//! Parameters live in one flat vector laid out layer by layer as
//! `[W row-major, b]`, so optimizers treat a network (or several networks
//! concatenated) as a plain point in Rⁿ. Evaluation is deterministic; no
//! parallelism touches the accumulation order.

use crate::error::{Error, Result};
use crate::numerics::Rng;

const TWO_PI: f64 = 2.0 * std::f64::consts::PI;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    /// `x ↦ 0.1·x` for `x < 0`, identity otherwise.
    LeakyRelu01,
    Identity,
}

impl Activation {
    #[inline]
    pub fn apply(&self, x: f64) -> f64 {
        match self {
            Activation::LeakyRelu01 => {
                if x < 0.0 {
                    0.1 * x
                } else {
                    x
                }
            }
            Activation::Identity => x,
        }
    }

    #[inline]
    pub fn derivative(&self, pre: f64) -> f64 {
        match self {
            Activation::LeakyRelu01 => {
                if pre < 0.0 {
                    0.1
                } else {
                    1.0
                }
            }
            Activation::Identity => 1.0,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Activation::LeakyRelu01 => "leaky_relu_0.1",
            Activation::Identity => "identity",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "leaky_relu_0.1" => Ok(Activation::LeakyRelu01),
            "identity" => Ok(Activation::Identity),
            other => Err(Error::InvalidArgument(format!("unknown activation `{other}`"))),
        }
    }
}

/// Optional non-learnable preprocessing prepended to a network.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureLayer {
    None,
    /// Maps two parameters onto a 15×15 grid of sine products; the
    /// sinusoidal-source problem's natural input encoding.
    SineGrid2,
}

impl FeatureLayer {
    pub fn output_dim(&self, input_dim: usize) -> usize {
        match self {
            FeatureLayer::None => input_dim,
            FeatureLayer::SineGrid2 => 225,
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        match self {
            FeatureLayer::None => x.to_vec(),
            FeatureLayer::SineGrid2 => feature_sine_grid(x),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            FeatureLayer::None => "none",
            FeatureLayer::SineGrid2 => "sine_grid_2",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(FeatureLayer::None),
            "sine_grid_2" => Ok(FeatureLayer::SineGrid2),
            other => Err(Error::InvalidArgument(format!("unknown feature layer `{other}`"))),
        }
    }
}

/// `F(μ)[j] = sin(2πμ₀·mod(j,15)/14) · sin(2πμ₁·(j−mod(j,15))/(14·15))`,
/// for `j = 1..=225`.
pub fn feature_sine_grid(mu: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(225);
    for j in 1..=225usize {
        let m = (j % 15) as f64;
        let k = (j as f64 - m) / 210.0;
        out.push((TWO_PI * mu[0] * m / 14.0).sin() * (TWO_PI * mu[1] * k).sin());
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerSpec {
    pub n_in: usize,
    pub n_out: usize,
    pub activation: Activation,
    pub learnable: bool,
}

impl LayerSpec {
    pub fn new(n_in: usize, n_out: usize, activation: Activation) -> Self {
        Self {
            n_in,
            n_out,
            activation,
            learnable: true,
        }
    }

    pub fn n_params(&self) -> usize {
        self.n_in * self.n_out + self.n_out
    }
}

/// Architecture of a network: feature layer plus dense layers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NetShape {
    pub feature: FeatureLayer,
    pub input_dim: usize,
    pub layers: Vec<LayerSpec>,
}

impl NetShape {
    pub fn new(feature: FeatureLayer, input_dim: usize, layers: Vec<LayerSpec>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidArgument("network needs at least one layer".into()));
        }
        let mut expect = feature.output_dim(input_dim);
        for spec in layers.iter() {
            if spec.n_in != expect {
                return Err(Error::DimensionMismatch {
                    what: "layer composition",
                    expected: expect,
                    got: spec.n_in,
                });
            }
            expect = spec.n_out;
        }
        Ok(Self {
            feature,
            input_dim,
            layers,
        })
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().unwrap().n_out
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(|l| l.n_params()).sum()
    }

    pub fn layer_offset(&self, l: usize) -> usize {
        self.layers[..l].iter().map(|s| s.n_params()).sum()
    }

    /// Run the network, recording pre- and post-activations in `ws`.
    pub fn forward(&self, params: &[f64], x: &[f64], ws: &mut Workspace) {
        debug_assert_eq!(params.len(), self.n_params());
        debug_assert_eq!(x.len(), self.input_dim);
        ws.input.clear();
        ws.input.extend(self.feature.apply(x));
        let mut offset = 0;
        for (l, spec) in self.layers.iter().enumerate() {
            let (w, b) = split_wb(params, offset, spec);
            let (done, rest) = ws.act.split_at_mut(l);
            let src: &[f64] = if l == 0 { &ws.input } else { &done[l - 1] };
            let act = &mut rest[0];
            let pre = &mut ws.pre[l];
            for i in 0..spec.n_out {
                let row = &w[i * spec.n_in..(i + 1) * spec.n_in];
                let mut acc = b[i];
                for (wv, sv) in row.iter().zip(src.iter()) {
                    acc += wv * sv;
                }
                pre[i] = acc;
                act[i] = spec.activation.apply(acc);
            }
            offset += spec.n_params();
        }
    }

    /// Output of the last forward pass recorded in `ws`.
    pub fn output<'w>(&self, ws: &'w Workspace) -> &'w [f64] {
        &ws.act[self.layers.len() - 1]
    }

    /// Backpropagate `dL/dy`, accumulating parameter gradients into `grad`
    /// (same layout as `params`). Returns the gradient with respect to the
    /// first dense layer's input when `want_input_grad` is set.
    pub fn backward(
        &self,
        params: &[f64],
        ws: &Workspace,
        dl_dy: &[f64],
        grad: &mut [f64],
        want_input_grad: bool,
    ) -> Option<Vec<f64>> {
        debug_assert_eq!(dl_dy.len(), self.output_dim());
        let mut delta = dl_dy.to_vec();
        for l in (0..self.layers.len()).rev() {
            let spec = &self.layers[l];
            let offset = self.layer_offset(l);
            let (w, _) = split_wb(params, offset, spec);
            let src: &[f64] = if l == 0 { &ws.input } else { &ws.act[l - 1] };
            let pre = &ws.pre[l];
            // δ_pre = δ ⊙ ρ'(pre)
            for (d, p) in delta.iter_mut().zip(pre.iter()) {
                *d *= spec.activation.derivative(*p);
            }
            if spec.learnable {
                let gw = &mut grad[offset..offset + spec.n_in * spec.n_out];
                for i in 0..spec.n_out {
                    let di = delta[i];
                    if di != 0.0 {
                        let row = &mut gw[i * spec.n_in..(i + 1) * spec.n_in];
                        for (g, s) in row.iter_mut().zip(src.iter()) {
                            *g += di * s;
                        }
                    }
                }
                let gb = &mut grad[offset + spec.n_in * spec.n_out..offset + spec.n_params()];
                for (g, d) in gb.iter_mut().zip(delta.iter()) {
                    *g += d;
                }
            }
            if l > 0 || want_input_grad {
                let mut next = vec![0.0; spec.n_in];
                for i in 0..spec.n_out {
                    let di = delta[i];
                    if di != 0.0 {
                        let row = &w[i * spec.n_in..(i + 1) * spec.n_in];
                        for (n, wv) in next.iter_mut().zip(row.iter()) {
                            *n += di * wv;
                        }
                    }
                }
                if l == 0 {
                    return Some(next);
                }
                delta = next;
            } else {
                return None;
            }
        }
        None
    }
}

fn split_wb<'p>(params: &'p [f64], offset: usize, spec: &LayerSpec) -> (&'p [f64], &'p [f64]) {
    let wn = spec.n_in * spec.n_out;
    (
        &params[offset..offset + wn],
        &params[offset + wn..offset + wn + spec.n_out],
    )
}

/// Per-network scratch buffers sized once from the shape.
#[derive(Debug, Clone)]
pub struct Workspace {
    input: Vec<f64>,
    pre: Vec<Vec<f64>>,
    act: Vec<Vec<f64>>,
}

impl Workspace {
    pub fn for_shape(shape: &NetShape) -> Self {
        Self {
            input: Vec::with_capacity(shape.feature.output_dim(shape.input_dim)),
            pre: shape.layers.iter().map(|l| vec![0.0; l.n_out]).collect(),
            act: shape.layers.iter().map(|l| vec![0.0; l.n_out]).collect(),
        }
    }

}

/// A network bound to concrete parameter values.
#[derive(Debug, Clone)]
pub struct DenseNetwork {
    pub shape: NetShape,
    pub params: Vec<f64>,
}

impl DenseNetwork {
    /// Glorot-style uniform init in `±sqrt(6/(fan_in+fan_out))`, zero biases.
    pub fn init(shape: NetShape, rng: &mut Rng) -> Self {
        let mut params = vec![0.0; shape.n_params()];
        let mut offset = 0;
        for spec in &shape.layers {
            let bound = (6.0 / (spec.n_in + spec.n_out) as f64).sqrt();
            let wn = spec.n_in * spec.n_out;
            for p in params[offset..offset + wn].iter_mut() {
                *p = rng.uniform_in(-bound, bound);
            }
            offset += spec.n_params();
        }
        Self { shape, params }
    }

    pub fn zeros(shape: NetShape) -> Self {
        let n = shape.n_params();
        Self {
            shape,
            params: vec![0.0; n],
        }
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        let mut ws = Workspace::for_shape(&self.shape);
        self.shape.forward(&self.params, x, &mut ws);
        self.shape.output(&ws).to_vec()
    }
}

/// Fixed affine map applied after a network's last layer,
/// `y = scale ⊙ net(x) + shift`; fitted from training targets and stored
/// with the checkpoint as normalization metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct OutputTransform {
    pub scale: Vec<f64>,
    pub shift: Vec<f64>,
}

impl OutputTransform {
    pub fn identity(n: usize) -> Self {
        Self {
            scale: vec![1.0; n],
            shift: vec![0.0; n],
        }
    }

    pub fn is_identity(&self) -> bool {
        self.scale.iter().all(|&s| s == 1.0) && self.shift.iter().all(|&s| s == 0.0)
    }

    /// Componentwise mean/deviation of the targets, deviation floored to
    /// keep the transform invertible.
    pub fn fit(targets: &[Vec<f64>]) -> Self {
        let n = targets[0].len();
        let ns = targets.len() as f64;
        let mut shift = vec![0.0; n];
        for t in targets {
            for (s, v) in shift.iter_mut().zip(t.iter()) {
                *s += v;
            }
        }
        for s in shift.iter_mut() {
            *s /= ns;
        }
        let mut scale = vec![0.0; n];
        for t in targets {
            for ((sc, v), sh) in scale.iter_mut().zip(t.iter()).zip(shift.iter()) {
                *sc += (v - sh) * (v - sh);
            }
        }
        for sc in scale.iter_mut() {
            *sc = (*sc / ns).sqrt().max(1e-12);
        }
        Self { scale, shift }
    }

    pub fn apply(&self, y: &mut [f64]) {
        for ((v, s), sh) in y.iter_mut().zip(&self.scale).zip(&self.shift) {
            *v = *v * s + sh;
        }
    }
}
