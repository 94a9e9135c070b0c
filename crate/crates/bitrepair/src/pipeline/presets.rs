//! Canned stage lists for the five standard corpus-building techniques.
//!
//! Each preset ends by concatenating the clean parallel corpus, so the final
//! corpus is always ready for training. The headline pair count reported per
//! technique comes from the stage that defines it: the filter output for the
//! filtering presets, the injection output for phrase injection, and the
//! final corpus for the rest.

use std::path::{Path, PathBuf};

use super::config::{
    EmbeddingSource, IoConfig, PipelineConfig, ScoreSource, SelectScoreSource, Stage,
};
use super::run::{run, RunManifest, RunOptions};
use crate::corpus::NormalizationProfile;
use crate::error::{Error, Result};
use crate::scoring::ScorerEndpoint;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    Baseline,
    Qe,
    Labse,
    PpiLabse,
    ApeThenQe,
}

impl Preset {
    pub const ALL: [Preset; 5] = [
        Preset::Baseline,
        Preset::Qe,
        Preset::Labse,
        Preset::PpiLabse,
        Preset::ApeThenQe,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Preset::Baseline => "baseline",
            Preset::Qe => "qe",
            Preset::Labse => "labse",
            Preset::PpiLabse => "ppi-labse",
            Preset::ApeThenQe => "ape-then-qe",
        }
    }

    pub fn from_name(name: &str) -> Option<Preset> {
        Preset::ALL.into_iter().find(|p| p.name() == name)
    }
}

/// Tunable knobs shared by the presets. The defaults mirror the standard
/// recipe: keep QE scores at or above -0.5, keep embedding cosines at or
/// above 0.8, extract phrases up to length 7.
#[derive(Debug, Clone)]
pub struct PresetParams {
    pub qe_threshold: f64,
    pub labse_threshold: f64,
    pub max_len: usize,
    pub dedup: bool,
    pub qe_scores: ScoreSource,
    pub select_scores: SelectScoreSource,
    pub embeddings: EmbeddingSource,
    pub ape_targets: Option<PathBuf>,
    pub alignments: Option<PathBuf>,
}

impl Default for PresetParams {
    fn default() -> Self {
        PresetParams {
            qe_threshold: -0.5,
            labse_threshold: 0.8,
            max_len: 7,
            dedup: false,
            qe_scores: ScoreSource::Mock,
            select_scores: SelectScoreSource::Mock,
            embeddings: EmbeddingSource::Mock { dimension: 64 },
            ape_targets: None,
            alignments: None,
        }
    }
}

/// The stage list a preset stands for. Fails when the preset needs an input
/// the params don't provide.
pub fn preset_stages(preset: Preset, params: &PresetParams, io: &IoConfig) -> Result<Vec<Stage>> {
    let concat = Stage::Concat {
        source: None,
        target: None,
        dedup: params.dedup,
    };
    let qe = Stage::QeFilter {
        threshold: params.qe_threshold,
        scores: params.qe_scores.clone(),
    };
    let labse = Stage::LabseFilter {
        threshold: params.labse_threshold,
        embeddings: params.embeddings.clone(),
    };
    match preset {
        Preset::Baseline => Ok(vec![concat]),
        Preset::Qe => Ok(vec![qe, concat]),
        Preset::Labse => Ok(vec![labse, concat]),
        Preset::PpiLabse => {
            let alignments = params.alignments.clone().ok_or_else(|| {
                Error::Parameter("the ppi-labse preset needs an alignment file".into())
            })?;
            Ok(vec![
                labse,
                Stage::Ppi {
                    alignments,
                    max_len: params.max_len,
                    phrases_source: Some((io.pseudo_source.clone(), io.pseudo_target.clone())),
                },
                concat,
            ])
        }
        Preset::ApeThenQe => {
            let ape_targets = params.ape_targets.clone().ok_or_else(|| {
                Error::Parameter("the ape-then-qe preset needs a post-edited target file".into())
            })?;
            Ok(vec![
                Stage::ApeThenQe {
                    ape_targets,
                    scores: params.select_scores.clone(),
                },
                concat,
            ])
        }
    }
}

/// A full config for one preset. The output directory is taken from `io`
/// verbatim; [`run_presets`] gives each preset its own subdirectory.
pub fn preset_config(
    preset: Preset,
    io: IoConfig,
    profile: NormalizationProfile,
    seed: u64,
    service: Option<ScorerEndpoint>,
    params: &PresetParams,
) -> Result<PipelineConfig> {
    let stages = preset_stages(preset, params, &io)?;
    Ok(PipelineConfig {
        profile,
        seed,
        io,
        service,
        stages,
    })
}

/// One preset run: the technique name, its headline pair count, the size of
/// the final training corpus, and the full manifest.
#[derive(Debug, Clone)]
pub struct PresetOutcome {
    pub technique: String,
    pub pair_count: u64,
    pub final_count: u64,
    pub manifest: RunManifest,
}

fn headline_count(preset: Preset, manifest: &RunManifest) -> u64 {
    let stage_output = |kind: &str| {
        manifest
            .stages
            .iter()
            .find(|s| s.kind == kind)
            .map(|s| s.output_count)
    };
    match preset {
        Preset::Baseline | Preset::ApeThenQe => manifest.final_count,
        Preset::Qe => stage_output("qe_filter").unwrap_or(manifest.final_count),
        Preset::Labse => stage_output("labse_filter").unwrap_or(manifest.final_count),
        Preset::PpiLabse => stage_output("ppi").unwrap_or(manifest.final_count),
    }
}

/// Run several presets over the same inputs, each into its own subdirectory
/// of `io.output_dir`, and collect their headline counts.
#[allow(clippy::too_many_arguments)]
pub fn run_presets(
    presets: &[Preset],
    io: &IoConfig,
    profile: NormalizationProfile,
    seed: u64,
    service: Option<&ScorerEndpoint>,
    params: &PresetParams,
    options: &RunOptions,
) -> Result<Vec<PresetOutcome>> {
    let mut outcomes = Vec::with_capacity(presets.len());
    for &preset in presets {
        let mut preset_io = io.clone();
        preset_io.output_dir = io.output_dir.join(preset.name());
        let config = preset_config(
            preset,
            preset_io,
            profile,
            seed,
            service.cloned(),
            params,
        )?;
        let manifest = run(&config, options)?;
        outcomes.push(PresetOutcome {
            technique: preset.name().to_string(),
            pair_count: headline_count(preset, &manifest),
            final_count: manifest.final_count,
            manifest,
        });
    }
    Ok(outcomes)
}

/// TSV of technique names and their headline pair counts, one row per preset
/// in the given order.
pub fn write_technique_counts(outcomes: &[PresetOutcome], path: &Path) -> Result<()> {
    let mut out = String::from("technique\tpair_count\n");
    for outcome in outcomes {
        out.push_str(&format!("{}\t{}\n", outcome.technique, outcome.pair_count));
    }
    std::fs::write(path, out.as_bytes()).map_err(|e| Error::io(path, e))
}
