//! Run configuration: one TOML file drives every pipeline stage.
//!
//! Artifacts written by a stage carry the hash of the resolved
//! configuration, and later stages refuse inputs whose hash disagrees, so a
//! run directory is always internally consistent.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use conservrom::fom::CaseTag;
use conservrom::nn::{OptimizerKind, TrainConfig};
use conservrom::rom::{Architecture, PressureMode, RomVariant};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Problem case: `sines2d` or `forchheimer2d`.
    pub case: String,
    /// Structured mesh subdivisions per side.
    pub mesh_n: usize,
    /// Training snapshot count.
    pub n_train: usize,
    /// Test snapshot count (separate Latin-hypercube draw).
    pub n_test: usize,
    pub seed: u64,
    /// Seed of the test draw; defaults to `seed + 1`.
    pub test_seed: Option<u64>,
    /// Spanning trees in the averaged right-inverse.
    #[serde(default = "default_n_trees")]
    pub n_trees: usize,
    /// Surrogate variants to build.
    pub variants: Vec<String>,
    /// Pressure recovery: `first_tree` or `averaged`.
    #[serde(default = "default_pressure_mode")]
    pub pressure_mode: String,
    #[serde(default)]
    pub train: TrainSection,
    /// Architecture override; defaults to the case preset.
    pub architecture: Option<Architecture>,
}

fn default_n_trees() -> usize {
    10
}

fn default_pressure_mode() -> String {
    "first_tree".into()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    #[serde(default = "default_optimizer")]
    pub optimizer: String,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    pub learning_rate: Option<f64>,
    #[serde(default = "default_lambda")]
    pub lambda: f64,
}

fn default_optimizer() -> String {
    "lbfgs".into()
}

fn default_epochs() -> usize {
    500
}

fn default_lambda() -> f64 {
    1.0
}

impl Default for TrainSection {
    fn default() -> Self {
        Self {
            optimizer: default_optimizer(),
            epochs: default_epochs(),
            learning_rate: None,
            lambda: default_lambda(),
        }
    }
}

/// A parsed, validated configuration with typed fields resolved.
#[derive(Debug, Clone)]
pub struct ResolvedConfig {
    pub raw: RunConfig,
    pub case: CaseTag,
    pub variants: Vec<RomVariant>,
    pub pressure_mode: PressureMode,
    pub architecture: Architecture,
    pub hash: String,
}

#[derive(Debug)]
pub struct ConfigError {
    pub field: String,
    pub message: String,
}

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "config field `{}`: {}", self.field, self.message)
    }
}

impl std::error::Error for ConfigError {}

fn field_err(field: &str, message: impl Into<String>) -> ConfigError {
    ConfigError {
        field: field.into(),
        message: message.into(),
    }
}

pub fn load_config(path: &Path, seed_override: Option<u64>) -> Result<ResolvedConfig, ConfigError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| field_err("<file>", format!("cannot read {}: {e}", path.display())))?;
    let mut raw: RunConfig =
        toml::from_str(&text).map_err(|e| field_err("<parse>", e.to_string()))?;
    if let Some(seed) = seed_override {
        raw.seed = seed;
    }
    resolve(raw)
}

pub fn resolve(raw: RunConfig) -> Result<ResolvedConfig, ConfigError> {
    let case = CaseTag::parse(&raw.case).map_err(|e| field_err("case", e.to_string()))?;
    if raw.mesh_n == 0 {
        return Err(field_err("mesh_n", "must be at least 1"));
    }
    if raw.n_train == 0 {
        return Err(field_err("n_train", "must be at least 1"));
    }
    if raw.n_test == 0 {
        return Err(field_err("n_test", "must be at least 1"));
    }
    if raw.n_trees == 0 {
        return Err(field_err("n_trees", "must be at least 1"));
    }
    if raw.variants.is_empty() {
        return Err(field_err("variants", "at least one variant required"));
    }
    let variants = raw
        .variants
        .iter()
        .map(|v| RomVariant::parse(v).map_err(|e| field_err("variants", e.to_string())))
        .collect::<Result<Vec<_>, _>>()?;
    let pressure_mode = PressureMode::parse(&raw.pressure_mode)
        .map_err(|e| field_err("pressure_mode", e.to_string()))?;
    let architecture = raw
        .architecture
        .clone()
        .unwrap_or_else(|| Architecture::case_default(case));
    if architecture.pod_modes == 0 {
        return Err(field_err("architecture.pod_modes", "must be at least 1"));
    }
    if architecture.pod_modes > raw.n_train {
        return Err(field_err(
            "architecture.pod_modes",
            format!(
                "{} exceeds the training sample count {}",
                architecture.pod_modes, raw.n_train
            ),
        ));
    }
    match raw.train.optimizer.as_str() {
        "lbfgs" | "adam" => {}
        other => {
            return Err(field_err(
                "train.optimizer",
                format!("unknown optimizer `{other}`"),
            ))
        }
    }
    if raw.train.epochs == 0 {
        return Err(field_err("train.epochs", "must be at least 1"));
    }
    if raw.train.lambda < 0.0 {
        return Err(field_err("train.lambda", "must be nonnegative"));
    }

    // Hash the resolved, canonical serialization (not the file bytes), so a
    // seed override participates in the hash.
    let canonical = toml::to_string(&raw)
        .map_err(|e| field_err("<serialize>", e.to_string()))?;
    let mut hasher = Sha256::new();
    hasher.update(canonical.as_bytes());
    let hash = hasher
        .finalize()
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect::<String>();

    Ok(ResolvedConfig {
        case,
        variants,
        pressure_mode,
        architecture,
        hash,
        raw,
    })
}

impl ResolvedConfig {
    pub fn test_seed(&self) -> u64 {
        self.raw.test_seed.unwrap_or(self.raw.seed.wrapping_add(1))
    }

    pub fn train_config(&self, variant_index: u64) -> TrainConfig {
        let optimizer = match self.raw.train.optimizer.as_str() {
            "adam" => OptimizerKind::Adam,
            _ => OptimizerKind::Lbfgs,
        };
        let learning_rate = self.raw.train.learning_rate.unwrap_or(match optimizer {
            OptimizerKind::Lbfgs => 1.0,
            OptimizerKind::Adam => 1e-3,
        });
        TrainConfig {
            optimizer,
            epochs: self.raw.train.epochs,
            learning_rate,
            lambda: self.raw.train.lambda,
            // Distinct deterministic initialization per variant.
            seed: self.raw.seed.wrapping_mul(1000).wrapping_add(variant_index),
        }
    }
}
