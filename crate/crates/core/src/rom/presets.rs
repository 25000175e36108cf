//! Architecture presets per problem case.
//!
//! Hidden widths follow the published designs for each case; output widths
//! are sized by the mesh at hand (reduced-basis size, potential dimension,
//! or flux dimension). Hidden layers use the 0.1-leaky activation; the
//! latent map and the encoder also activate their last layer, while decoder
//! and regression heads end linearly.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::fom::CaseTag;
use crate::nn::{Activation, FeatureLayer, LayerSpec, NetShape};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Architecture {
    /// Input feature encoding.
    pub feature: String,
    /// Reduced-basis size for the coefficient-regression variant.
    pub pod_modes: usize,
    /// Latent dimension of the two-block networks.
    pub latent_dim: usize,
    pub podnn_hidden: Vec<usize>,
    pub phi_hidden: Vec<usize>,
    pub psi_hidden: Vec<usize>,
    pub encoder_hidden: Vec<usize>,
    pub blackbox_hidden: Vec<usize>,
}

impl Architecture {
    pub fn case_default(case: CaseTag) -> Self {
        match case {
            CaseTag::Sines2D => Self {
                feature: "sine_grid_2".into(),
                pod_modes: 100,
                latent_dim: 100,
                podnn_hidden: vec![100, 100],
                phi_hidden: vec![],
                psi_hidden: vec![200],
                encoder_hidden: vec![100],
                blackbox_hidden: vec![100, 200, 500],
            },
            CaseTag::Forchheimer2D => Self {
                feature: "none".into(),
                pod_modes: 4,
                latent_dim: 4,
                podnn_hidden: vec![50, 50, 100],
                phi_hidden: vec![50, 50],
                psi_hidden: vec![50],
                encoder_hidden: vec![],
                blackbox_hidden: vec![50, 50, 4, 50],
            },
        }
    }

    fn feature_layer(&self) -> Result<FeatureLayer> {
        FeatureLayer::parse(&self.feature)
    }

    /// Dense chain `input → hidden… → out`, leaky hidden layers, with the
    /// output layer activation as given.
    fn chain(
        feature: FeatureLayer,
        input_dim: usize,
        hidden: &[usize],
        out: usize,
        out_act: Activation,
    ) -> Result<NetShape> {
        let mut layers = Vec::with_capacity(hidden.len() + 1);
        let mut prev = feature.output_dim(input_dim);
        for &h in hidden {
            layers.push(LayerSpec::new(prev, h, Activation::LeakyRelu01));
            prev = h;
        }
        layers.push(LayerSpec::new(prev, out, out_act));
        NetShape::new(feature, input_dim, layers)
    }

    /// Coefficient-regression head: parameters to basis coefficients.
    pub fn podnn_shape(&self, n_params: usize) -> Result<NetShape> {
        Self::chain(
            self.feature_layer()?,
            n_params,
            &self.podnn_hidden,
            self.pod_modes,
            Activation::Identity,
        )
    }

    /// Latent map: parameters to the latent code, activated throughout.
    pub fn phi_shape(&self, n_params: usize) -> Result<NetShape> {
        Self::chain(
            self.feature_layer()?,
            n_params,
            &self.phi_hidden,
            self.latent_dim,
            Activation::LeakyRelu01,
        )
    }

    /// Decoder: latent code to the potential space.
    pub fn psi_shape(&self, potential_dim: usize) -> Result<NetShape> {
        Self::chain(
            FeatureLayer::None,
            self.latent_dim,
            &self.psi_hidden,
            potential_dim,
            Activation::Identity,
        )
    }

    /// Auxiliary encoder: homogeneous flux to the latent code; discarded
    /// after training.
    pub fn encoder_shape(&self, flux_dim: usize) -> Result<NetShape> {
        Self::chain(
            FeatureLayer::None,
            flux_dim,
            &self.encoder_hidden,
            self.latent_dim,
            Activation::LeakyRelu01,
        )
    }

    /// Direct flux regression head.
    pub fn blackbox_shape(&self, n_params: usize, flux_dim: usize) -> Result<NetShape> {
        Self::chain(
            self.feature_layer()?,
            n_params,
            &self.blackbox_hidden,
            flux_dim,
            Activation::Identity,
        )
    }
}
