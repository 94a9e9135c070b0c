//! Declarative multi-stage corpus pipeline.
//!
//! A pipeline is a TOML file naming the input corpora, a normalization
//! profile, an optional scoring service, and an ordered list of stages.
//! Running it materializes every intermediate corpus under the output
//! directory, one subdirectory per stage, and finishes with a run manifest
//! that chains the pair counts through the whole thing. Wall-clock timings
//! go to a separate sidecar so the manifest itself is byte-stable across
//! reruns.

mod config;
mod presets;
mod run;

use std::fmt;

pub use config::{
    load_config, parse_config, validate, EmbeddingSource, IoConfig, PipelineConfig, ScoreSource,
    SelectScoreSource, Stage, SweepOver, SCORER_URL_ENV,
};
pub use presets::{
    preset_config, preset_stages, run_presets, write_technique_counts, Preset, PresetOutcome,
    PresetParams,
};
pub use run::{config_checksum, run, RunManifest, RunOptions, StageManifest, StageTiming};

/// One problem found while checking a pipeline configuration. `stage` is the
/// zero-based index into the stage list when the problem is local to a stage.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ValidationError {
    pub stage: Option<usize>,
    pub key: String,
    pub message: String,
}

impl fmt::Display for ValidationError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.stage {
            Some(index) if self.key.is_empty() => {
                write!(f, "stage {}: {}", index, self.message)
            }
            Some(index) => write!(f, "stage {}: {}: {}", index, self.key, self.message),
            None if self.key.is_empty() => write!(f, "{}", self.message),
            None => write!(f, "{}: {}", self.key, self.message),
        }
    }
}
