//! Pipeline driver: snapshot generation, training, evaluation, and report
//! emission, driven by one TOML configuration per run.

pub mod config;
pub mod stages;

pub use config::{load_config, resolve, ResolvedConfig, RunConfig};
pub use stages::{cmd_evaluate, cmd_generate, cmd_report, cmd_train, StageError, StageResult};
