//! Command layer for the entity context classifier: benchmark generation,
//! training arms, evaluation, LLM augmentation and comparison reports.

pub mod app;
pub mod benchmark;
pub mod commands;
pub mod config;
pub mod error;

pub use app::run;
pub use benchmark::{generate, generated_lines, BenchmarkRecipe, CueVocabulary};
pub use commands::*;
pub use config::{load_run_config, Arm, ModelFamily, RunConfig, TwoPhaseSettings};
pub use error::{CliError, Result};
