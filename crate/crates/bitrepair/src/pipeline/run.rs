//! Pipeline execution: stage-by-stage runs with materialized intermediates.

use std::path::Path;
use std::time::Instant;

use serde::Serialize;
use serde_json::json;
use sha2::{Digest, Sha256};

use super::config::{
    validate_with, EmbeddingSource, PipelineConfig, ScoreSource, SelectScoreSource, Stage,
    SweepOver, SCORER_URL_ENV,
};
use crate::bleu;
use crate::corpus::{read_lines, Corpus};
use crate::error::{Error, Result};
use crate::exec;
use crate::filters;
use crate::ppi;
use crate::scoring::{
    embed_with_service, mock_embedding_table, mock_score_table, score_with_service,
    EmbeddingTable, ScoreTable, ScorerEndpoint,
};
use crate::select::{self, TiePolicy};

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Worker threads for the data-parallel parts. 0 keeps the default pool.
    pub threads: usize,
    /// Let `BITREPAIR_SCORER_URL` override the configured service URL.
    pub allow_env_override: bool,
}

/// Per-stage record in the run manifest. `input_count` always equals the
/// previous stage's `output_count`, so the whole chain can be audited.
#[derive(Debug, Clone, Serialize)]
pub struct StageManifest {
    pub index: usize,
    pub kind: String,
    pub input_count: u64,
    pub output_count: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
    pub details: serde_json::Value,
}

/// Top-level summary of a run, written as `run_manifest.json` in the output
/// directory. Contains nothing time- or machine-dependent, so repeated runs
/// of the same config produce byte-identical manifests.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub config_sha256: String,
    pub seed: u64,
    pub initial_count: u64,
    pub final_count: u64,
    pub stages: Vec<StageManifest>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub failed_stage: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
}

/// Wall-clock timings, kept out of the manifest on purpose. Written as
/// `run_timings.json` next to it.
#[derive(Debug, Clone, Serialize)]
pub struct StageTiming {
    pub index: usize,
    pub kind: String,
    pub millis: u64,
}

/// Checksum of the canonical JSON form of a config. Indifferent to TOML
/// formatting and comments.
pub fn config_checksum(config: &PipelineConfig) -> String {
    let json = serde_json::to_string(config).expect("config serialization cannot fail");
    let mut hasher = Sha256::new();
    hasher.update(json.as_bytes());
    format!("{:x}", hasher.finalize())
}

fn effective_endpoint(config: &PipelineConfig, allow_env: bool) -> Option<ScorerEndpoint> {
    let env_url = if allow_env {
        std::env::var(SCORER_URL_ENV).ok().filter(|s| !s.is_empty())
    } else {
        None
    };
    match (&config.service, env_url) {
        (Some(ep), Some(url)) => Some(ScorerEndpoint {
            base_url: url,
            ..ep.clone()
        }),
        (Some(ep), None) => Some(ep.clone()),
        (None, Some(url)) => Some(ScorerEndpoint::new(url)),
        (None, None) => None,
    }
}

/// Validate and execute a pipeline. Every stage writes its output corpus,
/// a corpus manifest, and its stage-specific artifacts into
/// `<output_dir>/stage_<index>_<kind>/`. A failing stage aborts the run but
/// still leaves a partial run manifest behind.
pub fn run(config: &PipelineConfig, options: &RunOptions) -> Result<RunManifest> {
    let endpoint = effective_endpoint(config, options.allow_env_override);
    validate_with(config, endpoint.is_some())?;
    exec::with_thread_count(options.threads, || run_validated(config, endpoint.as_ref()))
}

fn run_validated(config: &PipelineConfig, endpoint: Option<&ScorerEndpoint>) -> Result<RunManifest> {
    let out = &config.io.output_dir;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let mut corpus = Corpus::read(&config.io.pseudo_source, &config.io.pseudo_target)?;
    let initial_count = corpus.len() as u64;
    let config_sha256 = config_checksum(config);
    let mut stages = Vec::with_capacity(config.stages.len());
    let mut timings = Vec::with_capacity(config.stages.len());

    for (index, stage) in config.stages.iter().enumerate() {
        let kind = stage.kind_name();
        let input_count = corpus.len() as u64;
        let started = Instant::now();
        let dir = out.join(format!("stage_{index:02}_{kind}"));
        let result = std::fs::create_dir_all(&dir)
            .map_err(|e| Error::io(&dir, e))
            .and_then(|()| execute_stage(stage, &corpus, config, endpoint, &dir))
            .and_then(|outcome| {
                let manifest = outcome.corpus.write(
                    &dir.join("corpus.src"),
                    &dir.join("corpus.tgt"),
                    &config.profile,
                )?;
                manifest.write(&dir.join("manifest.json"))?;
                Ok(outcome)
            });
        match result {
            Ok(outcome) => {
                corpus = outcome.corpus;
                stages.push(StageManifest {
                    index,
                    kind: kind.to_string(),
                    input_count,
                    output_count: corpus.len() as u64,
                    threshold: outcome.threshold,
                    details: outcome.details,
                });
                timings.push(StageTiming {
                    index,
                    kind: kind.to_string(),
                    millis: started.elapsed().as_millis() as u64,
                });
            }
            Err(source) => {
                let manifest = RunManifest {
                    tool_version: env!("CARGO_PKG_VERSION").to_string(),
                    config_sha256,
                    seed: config.seed,
                    initial_count,
                    final_count: input_count,
                    stages,
                    failed_stage: Some(index),
                    failure: Some(source.to_string()),
                };
                let _ = write_run_outputs(out, &manifest, &timings);
                return Err(Error::Stage {
                    index,
                    kind: kind.to_string(),
                    source: Box::new(source),
                });
            }
        }
    }

    let manifest = RunManifest {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        config_sha256,
        seed: config.seed,
        initial_count,
        final_count: corpus.len() as u64,
        stages,
        failed_stage: None,
        failure: None,
    };
    write_run_outputs(out, &manifest, &timings)?;
    Ok(manifest)
}

fn write_run_outputs(out: &Path, manifest: &RunManifest, timings: &[StageTiming]) -> Result<()> {
    let manifest_path = out.join("run_manifest.json");
    let json = serde_json::to_string_pretty(manifest).expect("manifest serialization cannot fail");
    std::fs::write(&manifest_path, json.as_bytes()).map_err(|e| Error::io(&manifest_path, e))?;
    let timings_path = out.join("run_timings.json");
    let json = serde_json::to_string_pretty(timings).expect("timing serialization cannot fail");
    std::fs::write(&timings_path, json.as_bytes()).map_err(|e| Error::io(&timings_path, e))
}

struct StageOutcome {
    corpus: Corpus,
    threshold: Option<f64>,
    details: serde_json::Value,
}

impl StageOutcome {
    fn plain(corpus: Corpus) -> StageOutcome {
        StageOutcome {
            corpus,
            threshold: None,
            details: json!({}),
        }
    }
}

fn need_endpoint<'a>(endpoint: Option<&'a ScorerEndpoint>) -> Result<&'a ScorerEndpoint> {
    endpoint.ok_or_else(|| Error::Parameter("no scoring service endpoint configured".into()))
}

fn resolve_scores(
    source: &ScoreSource,
    corpus: &Corpus,
    config: &PipelineConfig,
    endpoint: Option<&ScorerEndpoint>,
) -> Result<ScoreTable> {
    match source {
        ScoreSource::Mock => Ok(mock_score_table(corpus)),
        ScoreSource::File(path) => ScoreTable::load(path, corpus.len()),
        ScoreSource::Service => {
            score_with_service(corpus.pairs(), need_endpoint(endpoint)?, &config.profile.name())
        }
    }
}

fn resolve_embeddings(
    source: &EmbeddingSource,
    corpus: &Corpus,
    config: &PipelineConfig,
    endpoint: Option<&ScorerEndpoint>,
) -> Result<EmbeddingTable> {
    match source {
        EmbeddingSource::Mock { dimension } => mock_embedding_table(corpus, *dimension, config.seed),
        EmbeddingSource::File(path) => EmbeddingTable::load(path, corpus.len()),
        EmbeddingSource::Service => {
            embed_with_service(corpus.pairs(), need_endpoint(endpoint)?, &config.profile.name())
        }
    }
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let json = serde_json::to_string_pretty(value).expect("report serialization cannot fail");
    std::fs::write(path, json.as_bytes()).map_err(|e| Error::io(path, e))
}

fn execute_stage(
    stage: &Stage,
    corpus: &Corpus,
    config: &PipelineConfig,
    endpoint: Option<&ScorerEndpoint>,
    dir: &Path,
) -> Result<StageOutcome> {
    match stage {
        Stage::Normalize => Ok(StageOutcome::plain(corpus.normalized(&config.profile))),
        Stage::QeFilter { threshold, scores } => {
            let table = resolve_scores(scores, corpus, config, endpoint)?;
            table.write(&dir.join("scores.tsv"))?;
            let mut outcome = filters::qe_filter(corpus, &table, *threshold)?;
            outcome.write_kept_ids(&dir.join("kept_ids.tsv"))?;
            write_json(&outcome.report, &dir.join("report.json"))?;
            Ok(StageOutcome {
                corpus: outcome.corpus,
                threshold: Some(*threshold),
                details: json!({
                    "kept_count": outcome.report.kept_count,
                    "dropped_count": outcome.report.dropped_count,
                    "score_provenance": table.provenance().to_string(),
                }),
            })
        }
        Stage::LabseFilter {
            threshold,
            embeddings,
        } => {
            let table = resolve_embeddings(embeddings, corpus, config, endpoint)?;
            table.write(&dir.join("embeddings.tsv"))?;
            let mut outcome = filters::labse_filter(corpus, &table, *threshold)?;
            outcome.write_kept_ids(&dir.join("kept_ids.tsv"))?;
            write_json(&outcome.report, &dir.join("report.json"))?;
            Ok(StageOutcome {
                corpus: outcome.corpus,
                threshold: Some(*threshold),
                details: json!({
                    "kept_count": outcome.report.kept_count,
                    "dropped_count": outcome.report.dropped_count,
                    "dimension": table.dimension(),
                    "embedding_provenance": table.provenance().to_string(),
                }),
            })
        }
        Stage::LengthFilter {
            min_ratio,
            max_ratio,
            max_tokens,
        } => {
            let mut outcome =
                filters::length_ratio_filter(corpus, *min_ratio, *max_ratio, *max_tokens)?;
            outcome.write_kept_ids(&dir.join("kept_ids.tsv"))?;
            write_json(&outcome.report, &dir.join("report.json"))?;
            Ok(StageOutcome {
                corpus: outcome.corpus,
                threshold: None,
                details: json!({
                    "kept_count": outcome.report.kept_count,
                    "dropped_count": outcome.report.dropped_count,
                    "min_ratio": min_ratio,
                    "max_ratio": max_ratio,
                    "max_tokens": max_tokens,
                }),
            })
        }
        Stage::ApeReplace { ape_targets } => {
            let lines = read_lines(ape_targets)?;
            let replaced = select::ape_replace(corpus, &lines)?;
            Ok(StageOutcome::plain(replaced))
        }
        Stage::ApeThenQe {
            ape_targets,
            scores,
        } => {
            let lines = read_lines(ape_targets)?;
            let ape_corpus = select::ape_replace(corpus, &lines)?;
            let profile_name = config.profile.name();
            let (original_table, ape_table) = match scores {
                SelectScoreSource::Mock => {
                    (mock_score_table(corpus), mock_score_table(&ape_corpus))
                }
                SelectScoreSource::Files { original, ape } => (
                    ScoreTable::load(original, corpus.len())?,
                    ScoreTable::load(ape, corpus.len())?,
                ),
                SelectScoreSource::Service => {
                    let ep = need_endpoint(endpoint)?;
                    (
                        score_with_service(corpus.pairs(), ep, &profile_name)?,
                        score_with_service(ape_corpus.pairs(), ep, &profile_name)?,
                    )
                }
            };
            original_table.write(&dir.join("original_scores.tsv"))?;
            ape_table.write(&dir.join("ape_scores.tsv"))?;
            let selection = select::ape_then_qe_select(
                corpus,
                &lines,
                &original_table,
                &ape_table,
                &config.profile,
                TiePolicy::PreferOriginal,
            )?;
            select::write_selection_records(&selection.records, &dir.join("records.tsv"))?;
            write_json(&selection.report, &dir.join("report.json"))?;
            let details = serde_json::to_value(&selection.report)
                .expect("report serialization cannot fail");
            Ok(StageOutcome {
                corpus: selection.corpus,
                threshold: None,
                details,
            })
        }
        Stage::Ppi {
            alignments,
            max_len,
            phrases_source,
        } => {
            let phrase_corpus = match phrases_source {
                Some((src, tgt)) => Corpus::read(src, tgt)?,
                None => corpus.clone(),
            };
            let links = ppi::read_alignment_links(alignments)?;
            let aligned = ppi::align_corpus(&phrase_corpus, links)?;
            let table = ppi::build_phrase_table(&aligned, *max_len);
            table.write_tsv(&dir.join("phrase_table.tsv"))?;
            let selected = ppi::select_longest_unique(&table);
            ppi::PhraseTable::write_phrase_pairs(&selected, &dir.join("phrases.tsv"))?;
            let injected = ppi::inject(corpus, &selected);
            Ok(StageOutcome {
                corpus: injected,
                threshold: None,
                details: json!({
                    "extracted_pair_count": table.len(),
                    "selected_pair_count": selected.len(),
                    "max_len": max_len,
                }),
            })
        }
        Stage::Concat {
            source,
            target,
            dedup,
        } => {
            let (src, tgt) = match (source, target) {
                (Some(s), Some(t)) => (s.clone(), t.clone()),
                _ => (
                    config.io.parallel_source.clone().ok_or_else(|| {
                        Error::Parameter("concat stage needs parallel corpus paths".into())
                    })?,
                    config.io.parallel_target.clone().ok_or_else(|| {
                        Error::Parameter("concat stage needs parallel corpus paths".into())
                    })?,
                ),
            };
            let other = Corpus::read(&src, &tgt)?;
            let merged = corpus.concat(&other, *dedup, &config.profile);
            let dropped = corpus.len() + other.len() - merged.len();
            Ok(StageOutcome {
                corpus: merged,
                threshold: None,
                details: json!({
                    "added_count": other.len(),
                    "dedup": dedup,
                    "dedup_dropped_count": dropped,
                }),
            })
        }
        Stage::Evaluate {
            hypotheses,
            references,
            smoothing,
        } => {
            let (result, report) =
                bleu::evaluate_files(hypotheses, references, &config.profile, *smoothing)?;
            write_json(&report, &dir.join("eval.json"))?;
            Ok(StageOutcome {
                corpus: corpus.clone(),
                threshold: None,
                details: json!({
                    "bleu": result.score,
                    "brevity_penalty": result.brevity_penalty,
                }),
            })
        }
        Stage::Stats => {
            let stats = corpus.stats();
            write_json(&stats, &dir.join("stats.json"))?;
            let details = serde_json::to_value(&stats).expect("stats serialization cannot fail");
            Ok(StageOutcome {
                corpus: corpus.clone(),
                threshold: None,
                details,
            })
        }
        Stage::Sweep {
            thresholds,
            over,
            scores,
            embeddings,
        } => {
            let table = match over {
                SweepOver::Scores => {
                    let source = scores.as_ref().ok_or_else(|| {
                        Error::Parameter("sweep over scores needs a score source".into())
                    })?;
                    let score_table = resolve_scores(source, corpus, config, endpoint)?;
                    filters::sweep_scores(&score_table, thresholds)?
                }
                SweepOver::Similarities => {
                    let source = embeddings.as_ref().ok_or_else(|| {
                        Error::Parameter("sweep over similarities needs an embedding source".into())
                    })?;
                    let embedding_table = resolve_embeddings(source, corpus, config, endpoint)?;
                    filters::sweep_similarities(&embedding_table, thresholds)?
                }
            };
            table.write_tsv(&dir.join("sweep.tsv"))?;
            Ok(StageOutcome {
                corpus: corpus.clone(),
                threshold: None,
                details: json!({
                    "threshold_count": thresholds.len(),
                }),
            })
        }
    }
}
