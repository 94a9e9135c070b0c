//! Pipeline configuration: types, strict TOML parsing, and validation.
//!
//! Parsing is deliberately unforgiving. Unknown keys anywhere in the file are
//! fatal, wrong types are fatal, and every problem found is reported in one
//! aggregated list rather than stopping at the first. Relative paths are
//! resolved against the directory containing the config file.

use std::path::{Path, PathBuf};

use serde::Serialize;
use toml::map::Map;
use toml::Value;

use super::ValidationError;
use crate::bleu::Smoothing;
use crate::corpus::NormalizationProfile;
use crate::error::{Error, Result};
use crate::scoring::ScorerEndpoint;

/// Environment variable that can override the scoring service URL when the
/// run is started with the override explicitly allowed. Without that opt-in
/// the config file wins.
pub const SCORER_URL_ENV: &str = "BITREPAIR_SCORER_URL";

#[derive(Debug, Clone, Serialize)]
pub struct PipelineConfig {
    pub profile: NormalizationProfile,
    pub seed: u64,
    pub io: IoConfig,
    pub service: Option<ScorerEndpoint>,
    pub stages: Vec<Stage>,
}

#[derive(Debug, Clone, Serialize)]
pub struct IoConfig {
    pub pseudo_source: PathBuf,
    pub pseudo_target: PathBuf,
    pub parallel_source: Option<PathBuf>,
    pub parallel_target: Option<PathBuf>,
    pub output_dir: PathBuf,
}

/// Where a stage gets sentence-level quality scores from.
#[derive(Debug, Clone, Serialize)]
pub enum ScoreSource {
    Mock,
    File(PathBuf),
    Service,
}

/// Where a stage gets sentence embeddings from. The mock source derives
/// vectors from character trigrams and the run seed.
#[derive(Debug, Clone, Serialize)]
pub enum EmbeddingSource {
    Mock { dimension: usize },
    File(PathBuf),
    Service,
}

/// Score source for the replace-then-select stage, which needs one score per
/// candidate side. File-backed scoring takes two tables.
#[derive(Debug, Clone, Serialize)]
pub enum SelectScoreSource {
    Mock,
    Files { original: PathBuf, ape: PathBuf },
    Service,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepOver {
    Scores,
    Similarities,
}

#[derive(Debug, Clone, Serialize)]
pub enum Stage {
    Normalize,
    QeFilter {
        threshold: f64,
        scores: ScoreSource,
    },
    LabseFilter {
        threshold: f64,
        embeddings: EmbeddingSource,
    },
    LengthFilter {
        min_ratio: f64,
        max_ratio: f64,
        max_tokens: usize,
    },
    ApeReplace {
        ape_targets: PathBuf,
    },
    ApeThenQe {
        ape_targets: PathBuf,
        scores: SelectScoreSource,
    },
    Ppi {
        alignments: PathBuf,
        max_len: usize,
        phrases_source: Option<(PathBuf, PathBuf)>,
    },
    Concat {
        source: Option<PathBuf>,
        target: Option<PathBuf>,
        dedup: bool,
    },
    Evaluate {
        hypotheses: PathBuf,
        references: PathBuf,
        smoothing: Smoothing,
    },
    Stats,
    Sweep {
        thresholds: Vec<f64>,
        over: SweepOver,
        scores: Option<ScoreSource>,
        embeddings: Option<EmbeddingSource>,
    },
}

impl Stage {
    pub fn kind_name(&self) -> &'static str {
        match self {
            Stage::Normalize => "normalize",
            Stage::QeFilter { .. } => "qe_filter",
            Stage::LabseFilter { .. } => "labse_filter",
            Stage::LengthFilter { .. } => "length_filter",
            Stage::ApeReplace { .. } => "ape_replace",
            Stage::ApeThenQe { .. } => "ape_then_qe",
            Stage::Ppi { .. } => "ppi",
            Stage::Concat { .. } => "concat",
            Stage::Evaluate { .. } => "evaluate",
            Stage::Stats => "stats",
            Stage::Sweep { .. } => "sweep",
        }
    }
}

/// Read and parse a pipeline config file. Relative paths inside the file are
/// resolved against the file's own directory.
pub fn load_config(path: &Path) -> Result<PipelineConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    parse_config(&text, base)
}

/// Parse config text, resolving relative paths against `base_dir`, then run
/// the full validation pass. Problems come back as `Error::Validation` with
/// every issue found, not just the first.
pub fn parse_config(text: &str, base_dir: &Path) -> Result<PipelineConfig> {
    let root: Value = toml::from_str(text).map_err(|e| {
        Error::Validation(vec![ValidationError {
            stage: None,
            key: String::new(),
            message: format!("invalid toml: {e}"),
        }])
    })?;
    let Value::Table(table) = root else {
        return Err(Error::Validation(vec![ValidationError {
            stage: None,
            key: String::new(),
            message: "top level must be a table".into(),
        }]));
    };
    let mut walker = Walker {
        errors: Vec::new(),
        base_dir,
    };
    let config = walker.root(table);
    match config {
        Some(config) if walker.errors.is_empty() => {
            validate(&config)?;
            Ok(config)
        }
        _ => Err(Error::Validation(walker.errors)),
    }
}

struct Walker<'a> {
    errors: Vec<ValidationError>,
    base_dir: &'a Path,
}

fn dotted(prefix: &str, key: &str) -> String {
    if prefix.is_empty() {
        key.to_string()
    } else {
        format!("{prefix}.{key}")
    }
}

impl Walker<'_> {
    fn err(&mut self, stage: Option<usize>, key: &str, message: impl Into<String>) {
        self.errors.push(ValidationError {
            stage,
            key: key.to_string(),
            message: message.into(),
        });
    }

    fn path(&self, raw: &str) -> PathBuf {
        let p = Path::new(raw);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    /// Report any keys left in `table` after the known ones were removed.
    fn reject_unknown(&mut self, stage: Option<usize>, prefix: &str, table: &Map<String, Value>) {
        for key in table.keys() {
            let full = if prefix.is_empty() {
                key.clone()
            } else {
                format!("{prefix}.{key}")
            };
            self.err(stage, &full, "unknown key");
        }
    }

    fn want_string(&mut self, stage: Option<usize>, key: &str, value: Value) -> Option<String> {
        match value {
            Value::String(s) => Some(s),
            other => {
                self.err(stage, key, format!("expected a string, got {}", other.type_str()));
                None
            }
        }
    }

    fn want_bool(&mut self, stage: Option<usize>, key: &str, value: Value) -> Option<bool> {
        match value {
            Value::Boolean(b) => Some(b),
            other => {
                self.err(stage, key, format!("expected a boolean, got {}", other.type_str()));
                None
            }
        }
    }

    fn want_f64(&mut self, stage: Option<usize>, key: &str, value: Value) -> Option<f64> {
        match value {
            Value::Float(x) => Some(x),
            Value::Integer(n) => Some(n as f64),
            other => {
                self.err(stage, key, format!("expected a number, got {}", other.type_str()));
                None
            }
        }
    }

    fn want_usize(&mut self, stage: Option<usize>, key: &str, value: Value) -> Option<usize> {
        match value {
            Value::Integer(n) if n >= 0 => Some(n as usize),
            Value::Integer(_) => {
                self.err(stage, key, "expected a non-negative integer");
                None
            }
            other => {
                self.err(stage, key, format!("expected an integer, got {}", other.type_str()));
                None
            }
        }
    }

    fn want_table(
        &mut self,
        stage: Option<usize>,
        key: &str,
        value: Value,
    ) -> Option<Map<String, Value>> {
        match value {
            Value::Table(t) => Some(t),
            other => {
                self.err(stage, key, format!("expected a table, got {}", other.type_str()));
                None
            }
        }
    }

    fn req(
        &mut self,
        table: &mut Map<String, Value>,
        stage: Option<usize>,
        prefix: &str,
        key: &str,
    ) -> Option<Value> {
        let v = table.remove(key);
        if v.is_none() {
            self.err(stage, &dotted(prefix, key), "missing required key");
        }
        v
    }

    fn req_string(
        &mut self,
        table: &mut Map<String, Value>,
        stage: Option<usize>,
        prefix: &str,
        key: &str,
    ) -> Option<String> {
        let v = self.req(table, stage, prefix, key)?;
        self.want_string(stage, &dotted(prefix, key), v)
    }

    fn req_path(
        &mut self,
        table: &mut Map<String, Value>,
        stage: Option<usize>,
        prefix: &str,
        key: &str,
    ) -> Option<PathBuf> {
        self.req_string(table, stage, prefix, key).map(|s| self.path(&s))
    }

    fn opt_path(
        &mut self,
        table: &mut Map<String, Value>,
        stage: Option<usize>,
        prefix: &str,
        key: &str,
    ) -> Option<PathBuf> {
        let v = table.remove(key)?;
        self.want_string(stage, &dotted(prefix, key), v)
            .map(|s| self.path(&s))
    }

    fn req_f64(
        &mut self,
        table: &mut Map<String, Value>,
        stage: Option<usize>,
        prefix: &str,
        key: &str,
    ) -> Option<f64> {
        let v = self.req(table, stage, prefix, key)?;
        self.want_f64(stage, &dotted(prefix, key), v)
    }

    fn root(&mut self, mut table: Map<String, Value>) -> Option<PipelineConfig> {
        let profile = match self.req(&mut table, None, "", "profile") {
            Some(v) => self.profile(v),
            None => None,
        };
        let seed = match table.remove("seed") {
            Some(Value::Integer(n)) if n >= 0 => Some(n as u64),
            Some(Value::Integer(_)) => {
                self.err(None, "seed", "expected a non-negative integer");
                None
            }
            Some(other) => {
                self.err(None, "seed", format!("expected an integer, got {}", other.type_str()));
                None
            }
            None => Some(0),
        };
        let io = match self.req(&mut table, None, "", "io") {
            Some(v) => self.io(v),
            None => None,
        };
        let service = match table.remove("service") {
            Some(v) => match self.service(v) {
                Some(ep) => Some(Some(ep)),
                None => None,
            },
            None => Some(None),
        };
        let stages = match self.req(&mut table, None, "", "stages") {
            Some(Value::Array(items)) => self.stages(items),
            Some(other) => {
                self.err(
                    None,
                    "stages",
                    format!("expected an array of tables, got {}", other.type_str()),
                );
                None
            }
            None => None,
        };
        self.reject_unknown(None, "", &table);
        Some(PipelineConfig {
            profile: profile?,
            seed: seed?,
            io: io?,
            service: service?,
            stages: stages?,
        })
    }

    fn profile(&mut self, value: Value) -> Option<NormalizationProfile> {
        let mut table = self.want_table(None, "profile", value)?;
        let get = |w: &mut Self, t: &mut Map<String, Value>, key: &str| match t.remove(key) {
            Some(v) => w.want_bool(None, &format!("profile.{key}"), v),
            None => Some(false),
        };
        let lowercase = get(self, &mut table, "lowercase");
        let unicode_nfc = get(self, &mut table, "unicode_nfc");
        let collapse_whitespace = get(self, &mut table, "collapse_whitespace");
        self.reject_unknown(None, "profile", &table);
        Some(NormalizationProfile {
            lowercase: lowercase?,
            unicode_nfc: unicode_nfc?,
            collapse_whitespace: collapse_whitespace?,
        })
    }

    fn io(&mut self, value: Value) -> Option<IoConfig> {
        let mut table = self.want_table(None, "io", value)?;
        let pseudo_source = self.req_path(&mut table, None, "io", "pseudo_source");
        let pseudo_target = self.req_path(&mut table, None, "io", "pseudo_target");
        let parallel_source = self.opt_path(&mut table, None, "io", "parallel_source");
        let parallel_target = self.opt_path(&mut table, None, "io", "parallel_target");
        let output_dir = self.req_path(&mut table, None, "io", "output_dir");
        self.reject_unknown(None, "io", &table);
        Some(IoConfig {
            pseudo_source: pseudo_source?,
            pseudo_target: pseudo_target?,
            parallel_source,
            parallel_target,
            output_dir: output_dir?,
        })
    }

    fn service(&mut self, value: Value) -> Option<ScorerEndpoint> {
        let mut table = self.want_table(None, "service", value)?;
        let base_url = self.req_string(&mut table, None, "service", "base_url");
        let mut endpoint = ScorerEndpoint::new(base_url.clone().unwrap_or_default());
        if let Some(v) = table.remove("batch_size") {
            if let Some(n) = self.want_usize(None, "service.batch_size", v) {
                endpoint.batch_size = n;
            }
        }
        if let Some(v) = table.remove("timeout_secs") {
            if let Some(x) = self.want_f64(None, "service.timeout_secs", v) {
                if x.is_finite() && x > 0.0 {
                    endpoint.timeout = std::time::Duration::from_secs_f64(x);
                } else {
                    self.err(None, "service.timeout_secs", "must be a positive number");
                }
            }
        }
        if let Some(v) = table.remove("max_retries") {
            if let Some(n) = self.want_usize(None, "service.max_retries", v) {
                endpoint.max_retries = n as u32;
            }
        }
        self.reject_unknown(None, "service", &table);
        base_url?;
        Some(endpoint)
    }

    fn stages(&mut self, items: Vec<Value>) -> Option<Vec<Stage>> {
        let mut stages = Vec::with_capacity(items.len());
        let mut ok = true;
        for (index, item) in items.into_iter().enumerate() {
            let stage = Some(index);
            let Some(mut table) = self.want_table(stage, "", item) else {
                ok = false;
                continue;
            };
            let Some(kind) = self.req_string(&mut table, stage, "", "kind") else {
                ok = false;
                continue;
            };
            match self.stage(index, &kind, &mut table) {
                Some(s) => stages.push(s),
                None => ok = false,
            }
            self.reject_unknown(stage, "", &table);
        }
        ok.then_some(stages)
    }

    fn stage(&mut self, index: usize, kind: &str, table: &mut Map<String, Value>) -> Option<Stage> {
        let stage = Some(index);
        match kind {
            "normalize" => Some(Stage::Normalize),
            "qe_filter" => {
                let threshold = self.req_f64(table, stage, "", "threshold");
                let scores = match self.req(table, stage, "", "scores") {
                    Some(v) => self.score_source(index, "scores", v),
                    None => None,
                };
                Some(Stage::QeFilter {
                    threshold: threshold?,
                    scores: scores?,
                })
            }
            "labse_filter" => {
                let threshold = self.req_f64(table, stage, "", "threshold");
                let embeddings = match self.req(table, stage, "", "embeddings") {
                    Some(v) => self.embedding_source(index, "embeddings", v),
                    None => None,
                };
                Some(Stage::LabseFilter {
                    threshold: threshold?,
                    embeddings: embeddings?,
                })
            }
            "length_filter" => {
                let min_ratio = self.req_f64(table, stage, "", "min_ratio");
                let max_ratio = self.req_f64(table, stage, "", "max_ratio");
                let max_tokens = match self.req(table, stage, "", "max_tokens") {
                    Some(v) => self.want_usize(stage, "max_tokens", v),
                    None => None,
                };
                Some(Stage::LengthFilter {
                    min_ratio: min_ratio?,
                    max_ratio: max_ratio?,
                    max_tokens: max_tokens?,
                })
            }
            "ape_replace" => {
                let ape_targets = self.req_path(table, stage, "", "ape_targets");
                Some(Stage::ApeReplace {
                    ape_targets: ape_targets?,
                })
            }
            "ape_then_qe" => {
                let ape_targets = self.req_path(table, stage, "", "ape_targets");
                let scores = match self.req(table, stage, "", "scores") {
                    Some(v) => self.select_score_source(index, v),
                    None => None,
                };
                Some(Stage::ApeThenQe {
                    ape_targets: ape_targets?,
                    scores: scores?,
                })
            }
            "ppi" => {
                let alignments = self.req_path(table, stage, "", "alignments");
                let max_len = match table.remove("max_len") {
                    Some(v) => self.want_usize(stage, "max_len", v),
                    None => Some(7),
                };
                let phrases_source = match table.remove("phrases_source") {
                    Some(v) => match self.want_table(stage, "phrases_source", v) {
                        Some(mut t) => {
                            let s = self.req_path(&mut t, stage, "phrases_source", "source");
                            let g = self.req_path(&mut t, stage, "phrases_source", "target");
                            self.reject_unknown(stage, "phrases_source", &t);
                            match (s, g) {
                                (Some(s), Some(g)) => Some(Some((s, g))),
                                _ => None,
                            }
                        }
                        None => None,
                    },
                    None => Some(None),
                };
                Some(Stage::Ppi {
                    alignments: alignments?,
                    max_len: max_len?,
                    phrases_source: phrases_source?,
                })
            }
            "concat" => {
                let source = table
                    .remove("source")
                    .map(|v| self.want_string(stage, "source", v).map(|s| self.path(&s)));
                let target = table
                    .remove("target")
                    .map(|v| self.want_string(stage, "target", v).map(|s| self.path(&s)));
                let dedup = match table.remove("dedup") {
                    Some(v) => self.want_bool(stage, "dedup", v),
                    None => Some(false),
                };
                let source = match source {
                    Some(None) => return None,
                    Some(Some(p)) => Some(p),
                    None => None,
                };
                let target = match target {
                    Some(None) => return None,
                    Some(Some(p)) => Some(p),
                    None => None,
                };
                Some(Stage::Concat {
                    source,
                    target,
                    dedup: dedup?,
                })
            }
            "evaluate" => {
                let hypotheses = self.req_path(table, stage, "", "hypotheses");
                let references = self.req_path(table, stage, "", "references");
                let smoothing = match table.remove("smoothing") {
                    Some(v) => match self.want_string(stage, "smoothing", v) {
                        Some(s) => match s.as_str() {
                            "none" => Some(Smoothing::None),
                            "add-one" => Some(Smoothing::AddOne),
                            other => {
                                self.err(
                                    stage,
                                    "smoothing",
                                    format!("unknown smoothing '{other}', expected none or add-one"),
                                );
                                None
                            }
                        },
                        None => None,
                    },
                    None => Some(Smoothing::None),
                };
                Some(Stage::Evaluate {
                    hypotheses: hypotheses?,
                    references: references?,
                    smoothing: smoothing?,
                })
            }
            "stats" => Some(Stage::Stats),
            "sweep" => {
                let thresholds = match self.req(table, stage, "", "thresholds") {
                    Some(Value::Array(items)) => {
                        let mut out = Vec::with_capacity(items.len());
                        let mut good = true;
                        for v in items {
                            match self.want_f64(stage, "thresholds", v) {
                                Some(x) => out.push(x),
                                None => good = false,
                            }
                        }
                        good.then_some(out)
                    }
                    Some(other) => {
                        self.err(
                            stage,
                            "thresholds",
                            format!("expected an array of numbers, got {}", other.type_str()),
                        );
                        None
                    }
                    None => None,
                };
                let over = match self.req_string(table, stage, "", "over") {
                    Some(s) => match s.as_str() {
                        "scores" => Some(SweepOver::Scores),
                        "similarities" => Some(SweepOver::Similarities),
                        other => {
                            self.err(
                                stage,
                                "over",
                                format!("unknown sweep target '{other}', expected scores or similarities"),
                            );
                            None
                        }
                    },
                    None => None,
                };
                let scores = match table.remove("scores") {
                    Some(v) => match self.score_source(index, "scores", v) {
                        Some(s) => Some(Some(s)),
                        None => None,
                    },
                    None => Some(None),
                };
                let embeddings = match table.remove("embeddings") {
                    Some(v) => match self.embedding_source(index, "embeddings", v) {
                        Some(s) => Some(Some(s)),
                        None => None,
                    },
                    None => Some(None),
                };
                Some(Stage::Sweep {
                    thresholds: thresholds?,
                    over: over?,
                    scores: scores?,
                    embeddings: embeddings?,
                })
            }
            other => {
                self.err(stage, "kind", format!("unknown stage kind '{other}'"));
                None
            }
        }
    }

    fn score_source(&mut self, index: usize, key: &str, value: Value) -> Option<ScoreSource> {
        let stage = Some(index);
        let mut table = self.want_table(stage, key, value)?;
        let kind = self.req_string(&mut table, stage, key, "kind")?;
        let out = match kind.as_str() {
            "mock" => Some(ScoreSource::Mock),
            "file" => {
                let path = self.req_path(&mut table, stage, key, "path");
                path.map(ScoreSource::File)
            }
            "service" => Some(ScoreSource::Service),
            other => {
                self.err(
                    stage,
                    &format!("{key}.kind"),
                    format!("unknown score source '{other}', expected mock, file, or service"),
                );
                None
            }
        };
        self.reject_unknown(stage, key, &table);
        out
    }

    fn embedding_source(
        &mut self,
        index: usize,
        key: &str,
        value: Value,
    ) -> Option<EmbeddingSource> {
        let stage = Some(index);
        let mut table = self.want_table(stage, key, value)?;
        let kind = self.req_string(&mut table, stage, key, "kind")?;
        let out = match kind.as_str() {
            "mock" => {
                let dimension = match table.remove("dimension") {
                    Some(v) => self.want_usize(stage, &format!("{key}.dimension"), v),
                    None => Some(64),
                };
                dimension.map(|dimension| EmbeddingSource::Mock { dimension })
            }
            "file" => {
                let path = self.req_path(&mut table, stage, key, "path");
                path.map(EmbeddingSource::File)
            }
            "service" => Some(EmbeddingSource::Service),
            other => {
                self.err(
                    stage,
                    &format!("{key}.kind"),
                    format!("unknown embedding source '{other}', expected mock, file, or service"),
                );
                None
            }
        };
        self.reject_unknown(stage, key, &table);
        out
    }

    fn select_score_source(&mut self, index: usize, value: Value) -> Option<SelectScoreSource> {
        let stage = Some(index);
        let mut table = self.want_table(stage, "scores", value)?;
        let kind = self.req_string(&mut table, stage, "scores", "kind")?;
        let out = match kind.as_str() {
            "mock" => Some(SelectScoreSource::Mock),
            "file" => {
                let original = self.req_path(&mut table, stage, "scores", "original");
                let ape = self.req_path(&mut table, stage, "scores", "ape");
                match (original, ape) {
                    (Some(original), Some(ape)) => Some(SelectScoreSource::Files { original, ape }),
                    _ => None,
                }
            }
            "service" => Some(SelectScoreSource::Service),
            other => {
                self.err(
                    stage,
                    "scores.kind",
                    format!("unknown score source '{other}', expected mock, file, or service"),
                );
                None
            }
        };
        self.reject_unknown(stage, "scores", &table);
        out
    }
}

/// Semantic validation of a config, whether parsed from TOML or built in
/// code: parameter ranges, path existence for every input file, and the
/// presence of a service endpoint wherever a stage asks for one.
pub fn validate(config: &PipelineConfig) -> Result<()> {
    validate_with(config, config.service.is_some())
}

pub(crate) fn validate_with(config: &PipelineConfig, service_available: bool) -> Result<()> {
    let mut check = Checker {
        errors: Vec::new(),
        service_available,
    };

    check.file(None, "io.pseudo_source", &config.io.pseudo_source);
    check.file(None, "io.pseudo_target", &config.io.pseudo_target);
    if let Some(p) = &config.io.parallel_source {
        check.file(None, "io.parallel_source", p);
    }
    if let Some(p) = &config.io.parallel_target {
        check.file(None, "io.parallel_target", p);
    }
    if config.io.parallel_source.is_some() != config.io.parallel_target.is_some() {
        check.err(
            None,
            "io",
            "parallel_source and parallel_target must be given together",
        );
    }
    if let Some(ep) = &config.service {
        if ep.base_url.is_empty() {
            check.err(None, "service.base_url", "must not be empty");
        }
        if ep.batch_size == 0 {
            check.err(None, "service.batch_size", "must be at least 1");
        }
    }
    if config.stages.is_empty() {
        check.err(None, "stages", "at least one stage is required");
    }

    for (index, stage) in config.stages.iter().enumerate() {
        let at = Some(index);
        match stage {
            Stage::Normalize | Stage::Stats => {}
            Stage::QeFilter { threshold, scores } => {
                if !threshold.is_finite() {
                    check.err(at, "threshold", "must be finite");
                }
                check.score_source(index, "scores", scores);
            }
            Stage::LabseFilter {
                threshold,
                embeddings,
            } => {
                if !threshold.is_finite() {
                    check.err(at, "threshold", "must be finite");
                }
                check.embedding_source(index, "embeddings", embeddings);
            }
            Stage::LengthFilter {
                min_ratio,
                max_ratio,
                max_tokens,
            } => {
                if !(min_ratio.is_finite() && *min_ratio > 0.0) {
                    check.err(at, "min_ratio", "must be a positive finite number");
                }
                if !(max_ratio.is_finite() && max_ratio >= min_ratio) {
                    check.err(at, "max_ratio", "must be finite and at least min_ratio");
                }
                if *max_tokens == 0 {
                    check.err(at, "max_tokens", "must be at least 1");
                }
            }
            Stage::ApeReplace { ape_targets } => {
                check.file(at, "ape_targets", ape_targets);
            }
            Stage::ApeThenQe {
                ape_targets,
                scores,
            } => {
                check.file(at, "ape_targets", ape_targets);
                match scores {
                    SelectScoreSource::Mock => {}
                    SelectScoreSource::Files { original, ape } => {
                        check.file(at, "scores.original", original);
                        check.file(at, "scores.ape", ape);
                    }
                    SelectScoreSource::Service => check.service(index, "scores"),
                }
            }
            Stage::Ppi {
                alignments,
                max_len,
                phrases_source,
            } => {
                check.file(at, "alignments", alignments);
                if *max_len == 0 {
                    check.err(at, "max_len", "must be at least 1");
                }
                if let Some((s, t)) = phrases_source {
                    check.file(at, "phrases_source.source", s);
                    check.file(at, "phrases_source.target", t);
                }
            }
            Stage::Concat {
                source,
                target,
                dedup: _,
            } => {
                if source.is_some() != target.is_some() {
                    check.err(at, "", "source and target must be given together");
                }
                match (source, target) {
                    (Some(s), Some(t)) => {
                        check.file(at, "source", s);
                        check.file(at, "target", t);
                    }
                    (None, None) => {
                        if config.io.parallel_source.is_none() {
                            check.err(
                                at,
                                "",
                                "no source/target given and io.parallel_source is not set",
                            );
                        }
                    }
                    _ => {}
                }
            }
            Stage::Evaluate {
                hypotheses,
                references,
                smoothing: _,
            } => {
                check.file(at, "hypotheses", hypotheses);
                check.file(at, "references", references);
            }
            Stage::Sweep {
                thresholds,
                over,
                scores,
                embeddings,
            } => {
                if thresholds.is_empty() {
                    check.err(at, "thresholds", "must not be empty");
                }
                if thresholds.iter().any(|t| !t.is_finite()) {
                    check.err(at, "thresholds", "must all be finite");
                }
                if thresholds.windows(2).any(|w| w[0] >= w[1]) {
                    check.err(at, "thresholds", "must be strictly increasing");
                }
                match over {
                    SweepOver::Scores => match scores {
                        None => check.err(at, "scores", "required when over = \"scores\""),
                        Some(src) => check.score_source(index, "scores", src),
                    },
                    SweepOver::Similarities => match embeddings {
                        None => {
                            check.err(at, "embeddings", "required when over = \"similarities\"")
                        }
                        Some(src) => check.embedding_source(index, "embeddings", src),
                    },
                }
                if *over == SweepOver::Scores && embeddings.is_some() {
                    check.err(at, "embeddings", "not used when over = \"scores\"");
                }
                if *over == SweepOver::Similarities && scores.is_some() {
                    check.err(at, "scores", "not used when over = \"similarities\"");
                }
            }
        }
    }

    if check.errors.is_empty() {
        Ok(())
    } else {
        Err(Error::Validation(check.errors))
    }
}

struct Checker {
    errors: Vec<ValidationError>,
    service_available: bool,
}

impl Checker {
    fn err(&mut self, stage: Option<usize>, key: &str, message: impl Into<String>) {
        self.errors.push(ValidationError {
            stage,
            key: key.to_string(),
            message: message.into(),
        });
    }

    fn file(&mut self, stage: Option<usize>, key: &str, path: &Path) {
        if !path.is_file() {
            self.err(stage, key, format!("file not found: {}", path.display()));
        }
    }

    fn service(&mut self, stage: usize, key: &str) {
        if !self.service_available {
            self.err(
                Some(stage),
                key,
                "service scoring requested but no [service] endpoint is configured",
            );
        }
    }

    fn score_source(&mut self, stage: usize, key: &str, source: &ScoreSource) {
        match source {
            ScoreSource::Mock => {}
            ScoreSource::File(p) => self.file(Some(stage), &format!("{key}.path"), p),
            ScoreSource::Service => self.service(stage, key),
        }
    }

    fn embedding_source(&mut self, stage: usize, key: &str, source: &EmbeddingSource) {
        match source {
            EmbeddingSource::Mock { dimension } => {
                if *dimension < 8 {
                    self.err(Some(stage), &format!("{key}.dimension"), "must be at least 8");
                }
            }
            EmbeddingSource::File(p) => self.file(Some(stage), &format!("{key}.path"), p),
            EmbeddingSource::Service => self.service(stage, key),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn touch(dir: &Path, name: &str) -> PathBuf {
        let p = dir.join(name);
        std::fs::write(&p, "a b c d\n").unwrap();
        p
    }

    fn minimal_io(dir: &Path) -> String {
        touch(dir, "p.src");
        touch(dir, "p.tgt");
        format!(
            "[io]\npseudo_source = \"p.src\"\npseudo_target = \"p.tgt\"\noutput_dir = \"out\"\n"
        )
    }

    #[test]
    fn parses_a_full_config() {
        let dir = tempfile::tempdir().unwrap();
        touch(dir.path(), "scores.tsv");
        let text = format!(
            "seed = 7\n{}\n\
             [profile]\nlowercase = true\nunicode_nfc = true\ncollapse_whitespace = true\n\
             [service]\nbase_url = \"http://localhost:9\"\nbatch_size = 16\ntimeout_secs = 1.5\nmax_retries = 2\n\
             [[stages]]\nkind = \"normalize\"\n\
             [[stages]]\nkind = \"qe_filter\"\nthreshold = -0.5\nscores = {{ kind = \"file\", path = \"scores.tsv\" }}\n\
             [[stages]]\nkind = \"stats\"\n",
            minimal_io(dir.path())
        );
        let config = parse_config(&text, dir.path()).unwrap();
        assert_eq!(config.seed, 7);
        assert_eq!(config.stages.len(), 3);
        assert!(config.profile.lowercase);
        let ep = config.service.unwrap();
        assert_eq!(ep.batch_size, 16);
        assert_eq!(ep.max_retries, 2);
        match &config.stages[1] {
            Stage::QeFilter { threshold, scores } => {
                assert_eq!(*threshold, -0.5);
                assert!(matches!(scores, ScoreSource::File(p) if p.ends_with("scores.tsv")));
            }
            other => panic!("wrong stage: {other:?}"),
        }
    }

    #[test]
    fn unknown_keys_are_fatal_and_aggregated() {
        let dir = tempfile::tempdir().unwrap();
        let text = format!(
            "{}\n[profile]\nlowercase = true\ntypo_key = 1\n\
             [[stages]]\nkind = \"stats\"\nextra = true\n\
             [[stages]]\nkind = \"no_such_stage\"\n",
            minimal_io(dir.path())
        );
        let err = parse_config(&text, dir.path()).unwrap_err();
        let Error::Validation(errors) = err else {
            panic!("expected validation errors")
        };
        let keys: Vec<String> = errors.iter().map(|e| e.to_string()).collect();
        assert!(keys.iter().any(|k| k.contains("profile.typo_key")), "{keys:?}");
        assert!(keys.iter().any(|k| k.contains("stage 0: extra")), "{keys:?}");
        assert!(keys.iter().any(|k| k.contains("unknown stage kind")), "{keys:?}");
        assert_eq!(errors.len(), 3, "{keys:?}");
    }

    #[test]
    fn missing_required_keys_are_reported_together() {
        let dir = tempfile::tempdir().unwrap();
        let text = "[profile]\nlowercase = true\n[[stages]]\nkind = \"qe_filter\"\n";
        let err = parse_config(text, dir.path()).unwrap_err();
        let Error::Validation(errors) = err else {
            panic!("expected validation errors")
        };
        let rendered: Vec<String> = errors.iter().map(|e| e.to_string()).collect();
        assert!(rendered.iter().any(|k| k.starts_with("io:")), "{rendered:?}");
        assert!(rendered.iter().any(|k| k.contains("stage 0: threshold")), "{rendered:?}");
        assert!(rendered.iter().any(|k| k.contains("stage 0: scores")), "{rendered:?}");
    }

    #[test]
    fn type_errors_name_the_offending_key() {
        let dir = tempfile::tempdir().unwrap();
        let text = format!(
            "{}\n[profile]\nlowercase = \"yes\"\n[[stages]]\nkind = \"qe_filter\"\nthreshold = \"low\"\nscores = {{ kind = \"mock\" }}\n",
            minimal_io(dir.path())
        );
        let err = parse_config(&text, dir.path()).unwrap_err();
        let Error::Validation(errors) = err else {
            panic!("expected validation errors")
        };
        let rendered: Vec<String> = errors.iter().map(|e| e.to_string()).collect();
        assert!(
            rendered.iter().any(|k| k.contains("profile.lowercase") && k.contains("boolean")),
            "{rendered:?}"
        );
        assert!(
            rendered.iter().any(|k| k.contains("stage 0: threshold") && k.contains("number")),
            "{rendered:?}"
        );
    }

    #[test]
    fn service_stage_without_endpoint_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let text = format!(
            "{}\n[profile]\nlowercase = true\n[[stages]]\nkind = \"qe_filter\"\nthreshold = 0.0\nscores = {{ kind = \"service\" }}\n",
            minimal_io(dir.path())
        );
        let err = parse_config(&text, dir.path()).unwrap_err();
        let Error::Validation(errors) = err else {
            panic!("expected validation errors")
        };
        assert!(errors.iter().any(|e| e.message.contains("no [service] endpoint")));
        assert_eq!(errors[0].stage, Some(0));
    }

    #[test]
    fn missing_input_files_fail_validation() {
        let dir = tempfile::tempdir().unwrap();
        let text = "\
            [profile]\nlowercase = true\n\
            [io]\npseudo_source = \"absent.src\"\npseudo_target = \"absent.tgt\"\noutput_dir = \"out\"\n\
            [[stages]]\nkind = \"stats\"\n";
        let err = parse_config(text, dir.path()).unwrap_err();
        let Error::Validation(errors) = err else {
            panic!("expected validation errors")
        };
        assert_eq!(errors.len(), 2);
        assert!(errors.iter().all(|e| e.message.contains("file not found")));
    }

    #[test]
    fn sweep_thresholds_must_increase() {
        let dir = tempfile::tempdir().unwrap();
        let text = format!(
            "{}\n[profile]\nlowercase = true\n[[stages]]\nkind = \"sweep\"\nover = \"scores\"\nthresholds = [0.5, 0.5]\nscores = {{ kind = \"mock\" }}\n",
            minimal_io(dir.path())
        );
        let err = parse_config(&text, dir.path()).unwrap_err();
        let Error::Validation(errors) = err else {
            panic!("expected validation errors")
        };
        assert!(errors.iter().any(|e| e.message.contains("strictly increasing")));
    }

    #[test]
    fn relative_paths_resolve_against_the_config_directory() {
        let dir = tempfile::tempdir().unwrap();
        let sub = dir.path().join("conf");
        std::fs::create_dir(&sub).unwrap();
        touch(&sub, "p.src");
        touch(&sub, "p.tgt");
        let text = "\
            [profile]\nlowercase = true\n\
            [io]\npseudo_source = \"p.src\"\npseudo_target = \"p.tgt\"\noutput_dir = \"out\"\n\
            [[stages]]\nkind = \"stats\"\n";
        let config = parse_config(text, &sub).unwrap();
        assert_eq!(config.io.pseudo_source, sub.join("p.src"));
        assert_eq!(config.io.output_dir, sub.join("out"));
    }

    #[test]
    fn toml_syntax_errors_surface_as_validation() {
        let err = parse_config("not valid = = toml", Path::new(".")).unwrap_err();
        let Error::Validation(errors) = err else {
            panic!("expected validation errors")
        };
        assert!(errors[0].message.contains("invalid toml"));
        assert_eq!(err_exit(&errors), 1);
    }

    fn err_exit(errors: &[ValidationError]) -> i32 {
        Error::Validation(errors.to_vec()).exit_code()
    }

    #[test]
    fn defaults_fill_in_optional_keys() {
        let dir = tempfile::tempdir().unwrap();
        touch(dir.path(), "align.txt");
        let text = format!(
            "{}\n[profile]\nlowercase = true\n[[stages]]\nkind = \"ppi\"\nalignments = \"align.txt\"\n",
            minimal_io(dir.path())
        );
        let config = parse_config(&text, dir.path()).unwrap();
        assert_eq!(config.seed, 0);
        match &config.stages[0] {
            Stage::Ppi {
                max_len,
                phrases_source,
                ..
            } => {
                assert_eq!(*max_len, 7);
                assert!(phrases_source.is_none());
            }
            other => panic!("wrong stage: {other:?}"),
        }
    }
}
