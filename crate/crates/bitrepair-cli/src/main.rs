//! Command-line frontend for the corpus repair and filtering toolkit.
//!
//! Exit codes: 0 success, 1 invalid configuration or arguments, 2 data
//! errors, 3 scoring-service failures.

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};

use bitrepair::bleu::{self, Smoothing};
use bitrepair::corpus::{read_lines, Corpus, NormalizationProfile};
use bitrepair::error::{Error, Result};
use bitrepair::exec;
use bitrepair::filters;
use bitrepair::pipeline::{
    self, load_config, run_presets, write_technique_counts, EmbeddingSource, IoConfig,
    Preset, PresetParams, RunOptions, ScoreSource, SelectScoreSource, SCORER_URL_ENV,
};
use bitrepair::ppi::{self, PhraseTable};
use bitrepair::scoring::{
    embed_with_service, mock_embedding_table, mock_score_table, score_with_service,
    EmbeddingTable, ScoreTable, ScorerEndpoint,
};
use bitrepair::select::{self, TiePolicy};

#[derive(Parser)]
#[command(
    name = "bitrepair",
    version,
    about = "Repair and filter pseudo-parallel corpora, extract phrase pairs, and score translations"
)]
struct Cli {
    /// Worker threads for data-parallel work (0 = library default)
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,

    /// Let BITREPAIR_SCORER_URL override configured service URLs
    #[arg(long, global = true)]
    allow_env_override: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute a pipeline from a config file or a named preset
    Run(RunArgs),
    /// Keep or drop sentence pairs by score or shape
    #[command(subcommand)]
    Filter(FilterCommand),
    /// Repair targets with post-edited output, keeping the higher-scoring side
    ApeSelect(ApeSelectArgs),
    /// Extract, select, and inject aligned phrase pairs
    #[command(subcommand)]
    Ppi(PpiCommand),
    /// Corpus-level BLEU of a hypothesis file against a reference file
    Evaluate(EvaluateArgs),
    /// Pair counts, token counts, and duplicate counts of a corpus
    Stats(StatsArgs),
    /// Kept-pair counts across a ladder of thresholds
    Sweep(SweepArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Pipeline config file (TOML)
    #[arg(long, conflicts_with = "preset", required_unless_present = "preset")]
    config: Option<PathBuf>,

    /// Named preset: baseline, qe, labse, ppi-labse, ape-then-qe, or all
    #[arg(long)]
    preset: Option<String>,

    /// Pseudo-parallel source file (presets)
    #[arg(long, requires = "preset")]
    pseudo_src: Option<PathBuf>,

    /// Pseudo-parallel target file (presets)
    #[arg(long, requires = "preset")]
    pseudo_tgt: Option<PathBuf>,

    /// Clean parallel source file (presets)
    #[arg(long, requires = "preset")]
    parallel_src: Option<PathBuf>,

    /// Clean parallel target file (presets)
    #[arg(long, requires = "preset")]
    parallel_tgt: Option<PathBuf>,

    /// Output directory (presets)
    #[arg(long, requires = "preset")]
    out: Option<PathBuf>,

    /// Post-edited targets, line-aligned with the pseudo corpus
    #[arg(long, requires = "preset")]
    ape_targets: Option<PathBuf>,

    /// Word alignments, line-aligned with the pseudo corpus
    #[arg(long, requires = "preset")]
    align: Option<PathBuf>,

    /// Quality scores: mock, file:PATH, or service:URL
    #[arg(long, default_value = "mock", requires = "preset")]
    qe: String,

    /// Selection scores: mock, file:ORIG,APE, or service:URL
    #[arg(long, default_value = "mock", requires = "preset")]
    select_qe: String,

    /// Embeddings: mock[:DIM], file:PATH, or service:URL
    #[arg(long, default_value = "mock", requires = "preset")]
    embeddings: String,

    /// Keep pairs scoring at or above this
    #[arg(long, default_value_t = -0.5, allow_hyphen_values = true, requires = "preset")]
    qe_threshold: f64,

    /// Keep pairs whose embedding cosine is at or above this
    #[arg(long, default_value_t = 0.8, allow_hyphen_values = true, requires = "preset")]
    labse_threshold: f64,

    /// Longest phrase side to extract
    #[arg(long, default_value_t = 7, requires = "preset")]
    max_len: usize,

    /// Drop duplicate pairs when concatenating
    #[arg(long, requires = "preset")]
    dedup: bool,

    /// Seed for mock embeddings
    #[arg(long, default_value_t = 0, requires = "preset")]
    seed: u64,

    #[command(flatten)]
    profile: ProfileArgs,

    /// Write a technique/pair-count TSV over the presets that ran
    #[arg(long, requires = "preset")]
    counts_tsv: Option<PathBuf>,

    #[command(flatten)]
    service: ServiceArgs,
}

#[derive(Args)]
struct ProfileArgs {
    /// Lowercase text during normalization
    #[arg(long)]
    lowercase: bool,

    /// Apply Unicode NFC during normalization
    #[arg(long)]
    nfc: bool,

    /// Collapse whitespace runs during normalization
    #[arg(long)]
    collapse_ws: bool,
}

impl ProfileArgs {
    fn profile(&self) -> NormalizationProfile {
        NormalizationProfile {
            lowercase: self.lowercase,
            unicode_nfc: self.nfc,
            collapse_whitespace: self.collapse_ws,
        }
    }
}

#[derive(Args)]
struct ServiceArgs {
    /// Pairs per scoring request
    #[arg(long, default_value_t = 128)]
    batch_size: usize,

    /// Scoring request timeout in seconds
    #[arg(long, default_value_t = 30.0)]
    timeout_secs: f64,

    /// Retries per failed scoring request
    #[arg(long, default_value_t = 3)]
    max_retries: u32,
}

impl ServiceArgs {
    fn endpoint(&self, url: String) -> ScorerEndpoint {
        let mut ep = ScorerEndpoint::new(url);
        ep.batch_size = self.batch_size;
        ep.timeout = Duration::from_secs_f64(self.timeout_secs);
        ep.max_retries = self.max_retries;
        ep
    }
}

#[derive(Subcommand)]
enum FilterCommand {
    /// Keep pairs whose quality score clears a threshold
    Qe(QeFilterArgs),
    /// Keep pairs whose embedding cosine clears a threshold
    Labse(LabseFilterArgs),
    /// Keep pairs within a length-ratio band and token cap
    Length(LengthFilterArgs),
}

#[derive(Args)]
struct CorpusIoArgs {
    /// Source-side input file
    #[arg(long)]
    src: PathBuf,

    /// Target-side input file
    #[arg(long)]
    tgt: PathBuf,

    /// Source-side output file
    #[arg(long)]
    out_src: PathBuf,

    /// Target-side output file
    #[arg(long)]
    out_tgt: PathBuf,
}

#[derive(Args)]
struct QeFilterArgs {
    #[command(flatten)]
    io: CorpusIoArgs,

    /// Quality scores: a TSV path, mock, file:PATH, or service:URL
    #[arg(long)]
    scores: String,

    /// Keep pairs scoring at or above this
    #[arg(long, allow_hyphen_values = true)]
    threshold: f64,

    /// Write the new-id to old-id mapping here
    #[arg(long)]
    kept_ids: Option<PathBuf>,

    /// Write the filter report (JSON) here
    #[arg(long)]
    report: Option<PathBuf>,

    #[command(flatten)]
    service: ServiceArgs,
}

#[derive(Args)]
struct LabseFilterArgs {
    #[command(flatten)]
    io: CorpusIoArgs,

    /// Embeddings: a file path, mock[:DIM], file:PATH, or service:URL
    #[arg(long)]
    embeddings: String,

    /// Keep pairs whose cosine is at or above this
    #[arg(long, allow_hyphen_values = true)]
    threshold: f64,

    /// Seed for mock embeddings
    #[arg(long, default_value_t = 0)]
    seed: u64,

    /// Write the new-id to old-id mapping here
    #[arg(long)]
    kept_ids: Option<PathBuf>,

    /// Write the filter report (JSON) here
    #[arg(long)]
    report: Option<PathBuf>,

    #[command(flatten)]
    service: ServiceArgs,
}

#[derive(Args)]
struct LengthFilterArgs {
    #[command(flatten)]
    io: CorpusIoArgs,

    /// Smallest allowed target/source token ratio
    #[arg(long, default_value_t = 0.5)]
    min_ratio: f64,

    /// Largest allowed target/source token ratio
    #[arg(long, default_value_t = 2.0)]
    max_ratio: f64,

    /// Longest allowed side, in tokens
    #[arg(long, default_value_t = 250)]
    max_tokens: usize,

    /// Write the new-id to old-id mapping here
    #[arg(long)]
    kept_ids: Option<PathBuf>,

    /// Write the filter report (JSON) here
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct ApeSelectArgs {
    /// Source-side corpus file
    #[arg(long)]
    corpus_src: PathBuf,

    /// Target-side corpus file
    #[arg(long)]
    corpus_tgt: PathBuf,

    /// Post-edited targets, line-aligned with the corpus
    #[arg(long)]
    ape_out: PathBuf,

    /// Scores for both candidates: mock, file:ORIG,APE, or service:URL
    #[arg(long)]
    qe: String,

    /// Source-side output file
    #[arg(long)]
    out_src: PathBuf,

    /// Target-side output file
    #[arg(long)]
    out_tgt: PathBuf,

    /// Write per-pair selection records (TSV) here
    #[arg(long)]
    emit_records: Option<PathBuf>,

    /// Write the selection report (JSON) here
    #[arg(long)]
    report: Option<PathBuf>,

    #[command(flatten)]
    profile: ProfileArgs,

    #[command(flatten)]
    service: ServiceArgs,
}

#[derive(Subcommand)]
enum PpiCommand {
    /// Extract aligned phrase pairs into a counted table
    Extract(PpiExtractArgs),
    /// Reduce a phrase table to its longest unique pairs
    Select(PpiSelectArgs),
    /// Append phrase pairs to a corpus as new sentence pairs
    Inject(PpiInjectArgs),
}

#[derive(Args)]
struct PpiExtractArgs {
    /// Source-side corpus file
    #[arg(long)]
    src: PathBuf,

    /// Target-side corpus file
    #[arg(long)]
    tgt: PathBuf,

    /// Word alignments in i-j format, line-aligned with the corpus
    #[arg(long)]
    align: PathBuf,

    /// Longest phrase side to extract
    #[arg(long, default_value_t = 7)]
    max_len: usize,

    /// Write the phrase table (TSV) here
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PpiSelectArgs {
    /// Phrase table to reduce
    #[arg(long)]
    table: PathBuf,

    /// Write the selected pairs (TSV) here
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PpiInjectArgs {
    /// Source-side corpus file
    #[arg(long)]
    src: PathBuf,

    /// Target-side corpus file
    #[arg(long)]
    tgt: PathBuf,

    /// Phrase pairs to append (TSV)
    #[arg(long)]
    phrases: PathBuf,

    /// Source-side output file
    #[arg(long)]
    out_src: PathBuf,

    /// Target-side output file
    #[arg(long)]
    out_tgt: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Hypothesis file, one segment per line
    #[arg(long)]
    hyp: PathBuf,

    /// Reference file, line-aligned with the hypotheses
    #[arg(long = "ref")]
    reference: PathBuf,

    /// Smoothing: none or add-one
    #[arg(long, default_value = "none")]
    smoothing: String,

    /// Lowercase both sides before scoring
    #[arg(long)]
    lowercase: bool,

    /// Write the full-precision report (JSON) here
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Args)]
struct StatsArgs {
    /// Source-side corpus file
    #[arg(long)]
    src: PathBuf,

    /// Target-side corpus file
    #[arg(long)]
    tgt: PathBuf,

    /// Write the stats (JSON) here instead of printing
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    /// Source-side corpus file
    #[arg(long)]
    src: PathBuf,

    /// Target-side corpus file
    #[arg(long)]
    tgt: PathBuf,

    /// Comma-separated thresholds, strictly increasing
    #[arg(long, allow_hyphen_values = true)]
    thresholds: String,

    /// Sweep quality scores: a TSV path, mock, file:PATH, or service:URL
    #[arg(long, conflicts_with = "embeddings")]
    scores: Option<String>,

    /// Sweep embedding cosines: mock[:DIM], file:PATH, or service:URL
    #[arg(long)]
    embeddings: Option<String>,

    /// Seed for mock embeddings
    #[arg(long, default_value_t = 0)]
    seed: u64,

    /// Write the sweep table (TSV) here instead of printing
    #[arg(long)]
    out: Option<PathBuf>,

    #[command(flatten)]
    service: ServiceArgs,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version requests are not errors.
            if e.use_stderr() {
                let _ = e.print();
                return ExitCode::from(1);
            }
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    let threads = cli.threads;
    let allow_env = cli.allow_env_override;
    match cli.command {
        Command::Run(args) => cmd_run(args, threads, allow_env),
        Command::Filter(args) => {
            exec::with_thread_count(threads, || cmd_filter(args, allow_env))
        }
        Command::ApeSelect(args) => {
            exec::with_thread_count(threads, || cmd_ape_select(args, allow_env))
        }
        Command::Ppi(args) => exec::with_thread_count(threads, || cmd_ppi(args)),
        Command::Evaluate(args) => exec::with_thread_count(threads, || cmd_evaluate(args)),
        Command::Stats(args) => exec::with_thread_count(threads, || cmd_stats(args)),
        Command::Sweep(args) => exec::with_thread_count(threads, || cmd_sweep(args, allow_env)),
    }
}

/// Scorer specs shared by several subcommands. A bare path is read as a file;
/// explicit prefixes disambiguate.
enum ScoresSpec {
    Mock,
    File(PathBuf),
    Service(String),
}

fn parse_scores_spec(spec: &str) -> ScoresSpec {
    if spec == "mock" {
        ScoresSpec::Mock
    } else if let Some(path) = spec.strip_prefix("file:") {
        ScoresSpec::File(PathBuf::from(path))
    } else if let Some(url) = spec.strip_prefix("service:") {
        ScoresSpec::Service(url.to_string())
    } else {
        ScoresSpec::File(PathBuf::from(spec))
    }
}

enum EmbeddingsSpec {
    Mock { dimension: usize },
    File(PathBuf),
    Service(String),
}

fn parse_embeddings_spec(spec: &str) -> Result<EmbeddingsSpec> {
    if spec == "mock" {
        return Ok(EmbeddingsSpec::Mock { dimension: 64 });
    }
    if let Some(dim) = spec.strip_prefix("mock:") {
        let dimension: usize = dim
            .parse()
            .map_err(|_| Error::Parameter(format!("invalid mock dimension {dim:?}")))?;
        return Ok(EmbeddingsSpec::Mock { dimension });
    }
    if let Some(path) = spec.strip_prefix("file:") {
        return Ok(EmbeddingsSpec::File(PathBuf::from(path)));
    }
    if let Some(url) = spec.strip_prefix("service:") {
        return Ok(EmbeddingsSpec::Service(url.to_string()));
    }
    Ok(EmbeddingsSpec::File(PathBuf::from(spec)))
}

enum SelectScoresSpec {
    Mock,
    Files { original: PathBuf, ape: PathBuf },
    Service(String),
}

fn parse_select_scores_spec(spec: &str) -> Result<SelectScoresSpec> {
    if spec == "mock" {
        return Ok(SelectScoresSpec::Mock);
    }
    if let Some(url) = spec.strip_prefix("service:") {
        return Ok(SelectScoresSpec::Service(url.to_string()));
    }
    let paths = spec.strip_prefix("file:").unwrap_or(spec);
    match paths.split_once(',') {
        Some((original, ape)) if !original.is_empty() && !ape.is_empty() => {
            Ok(SelectScoresSpec::Files {
                original: PathBuf::from(original),
                ape: PathBuf::from(ape),
            })
        }
        _ => Err(Error::Parameter(format!(
            "score spec {spec:?} must be mock, file:ORIGINAL,APE, or service:URL"
        ))),
    }
}

fn env_url(allow_env: bool) -> Option<String> {
    if allow_env {
        std::env::var(SCORER_URL_ENV).ok().filter(|s| !s.is_empty())
    } else {
        None
    }
}

fn service_url(url: String, allow_env: bool) -> String {
    env_url(allow_env).unwrap_or(url)
}

fn resolve_scores(
    spec: &str,
    corpus: &Corpus,
    service: &ServiceArgs,
    allow_env: bool,
) -> Result<ScoreTable> {
    match parse_scores_spec(spec) {
        ScoresSpec::Mock => Ok(mock_score_table(corpus)),
        ScoresSpec::File(path) => ScoreTable::load(&path, corpus.len()),
        ScoresSpec::Service(url) => {
            let endpoint = service.endpoint(service_url(url, allow_env));
            score_with_service(corpus.pairs(), &endpoint, &NormalizationProfile::none().name())
        }
    }
}

fn resolve_embeddings(
    spec: &str,
    corpus: &Corpus,
    seed: u64,
    service: &ServiceArgs,
    allow_env: bool,
) -> Result<EmbeddingTable> {
    match parse_embeddings_spec(spec)? {
        EmbeddingsSpec::Mock { dimension } => mock_embedding_table(corpus, dimension, seed),
        EmbeddingsSpec::File(path) => EmbeddingTable::load(&path, corpus.len()),
        EmbeddingsSpec::Service(url) => {
            let endpoint = service.endpoint(service_url(url, allow_env));
            embed_with_service(corpus.pairs(), &endpoint, &NormalizationProfile::none().name())
        }
    }
}

fn write_json<T: serde::Serialize>(value: &T, path: &PathBuf) -> Result<()> {
    let json = serde_json::to_string_pretty(value).expect("report serialization cannot fail");
    std::fs::write(path, json.as_bytes()).map_err(|e| Error::io(path.clone(), e))
}

fn cmd_run(args: RunArgs, threads: usize, allow_env: bool) -> Result<()> {
    let options = RunOptions {
        threads,
        allow_env_override: allow_env,
    };
    if let Some(config_path) = &args.config {
        let config = load_config(config_path)?;
        let manifest = pipeline::run(&config, &options)?;
        for stage in &manifest.stages {
            println!(
                "stage {:02} {}: {} -> {}",
                stage.index, stage.kind, stage.input_count, stage.output_count
            );
        }
        println!("final: {} pairs", manifest.final_count);
        println!(
            "manifest: {}",
            config.io.output_dir.join("run_manifest.json").display()
        );
        return Ok(());
    }

    let preset_name = args.preset.as_deref().unwrap_or_default();
    let presets: Vec<Preset> = if preset_name == "all" {
        Preset::ALL.to_vec()
    } else {
        vec![Preset::from_name(preset_name).ok_or_else(|| {
            Error::Parameter(format!(
                "unknown preset {preset_name:?}; expected baseline, qe, labse, ppi-labse, ape-then-qe, or all"
            ))
        })?]
    };

    let missing = |flag: &str| Error::Parameter(format!("--preset requires {flag}"));
    let io = IoConfig {
        pseudo_source: args.pseudo_src.clone().ok_or_else(|| missing("--pseudo-src"))?,
        pseudo_target: args.pseudo_tgt.clone().ok_or_else(|| missing("--pseudo-tgt"))?,
        parallel_source: args.parallel_src.clone(),
        parallel_target: args.parallel_tgt.clone(),
        output_dir: args.out.clone().ok_or_else(|| missing("--out"))?,
    };

    // Collapse the per-source service URLs into the single endpoint a
    // pipeline config carries.
    let mut service_urls: Vec<String> = Vec::new();
    let mut push_url = |url: &str| {
        if !service_urls.iter().any(|u| u == url) {
            service_urls.push(url.to_string());
        }
    };
    let qe_scores = match parse_scores_spec(&args.qe) {
        ScoresSpec::Mock => ScoreSource::Mock,
        ScoresSpec::File(path) => ScoreSource::File(path),
        ScoresSpec::Service(url) => {
            push_url(&url);
            ScoreSource::Service
        }
    };
    let select_scores = match parse_select_scores_spec(&args.select_qe)? {
        SelectScoresSpec::Mock => SelectScoreSource::Mock,
        SelectScoresSpec::Files { original, ape } => SelectScoreSource::Files { original, ape },
        SelectScoresSpec::Service(url) => {
            push_url(&url);
            SelectScoreSource::Service
        }
    };
    let embeddings = match parse_embeddings_spec(&args.embeddings)? {
        EmbeddingsSpec::Mock { dimension } => EmbeddingSource::Mock { dimension },
        EmbeddingsSpec::File(path) => EmbeddingSource::File(path),
        EmbeddingsSpec::Service(url) => {
            push_url(&url);
            EmbeddingSource::Service
        }
    };
    if service_urls.len() > 1 {
        return Err(Error::Parameter(
            "preset runs support one scoring service URL across all sources".into(),
        ));
    }
    let service = service_urls.pop().map(|url| args.service.endpoint(url));

    let params = PresetParams {
        qe_threshold: args.qe_threshold,
        labse_threshold: args.labse_threshold,
        max_len: args.max_len,
        dedup: args.dedup,
        qe_scores,
        select_scores,
        embeddings,
        ape_targets: args.ape_targets.clone(),
        alignments: args.align.clone(),
    };
    let outcomes = run_presets(
        &presets,
        &io,
        args.profile.profile(),
        args.seed,
        service.as_ref(),
        &params,
        &options,
    )?;
    for outcome in &outcomes {
        println!(
            "{}: {} pairs ({} after augmentation)",
            outcome.technique, outcome.pair_count, outcome.final_count
        );
    }
    if let Some(path) = &args.counts_tsv {
        write_technique_counts(&outcomes, path)?;
        println!("counts: {}", path.display());
    }
    Ok(())
}

fn cmd_filter(args: FilterCommand, allow_env: bool) -> Result<()> {
    match args {
        FilterCommand::Qe(args) => {
            let corpus = Corpus::read(&args.io.src, &args.io.tgt)?;
            let scores = resolve_scores(&args.scores, &corpus, &args.service, allow_env)?;
            let outcome = filters::qe_filter(&corpus, &scores, args.threshold)?;
            finish_filter(outcome, &args.io, args.kept_ids, args.report)
        }
        FilterCommand::Labse(args) => {
            let corpus = Corpus::read(&args.io.src, &args.io.tgt)?;
            let embeddings =
                resolve_embeddings(&args.embeddings, &corpus, args.seed, &args.service, allow_env)?;
            let outcome = filters::labse_filter(&corpus, &embeddings, args.threshold)?;
            finish_filter(outcome, &args.io, args.kept_ids, args.report)
        }
        FilterCommand::Length(args) => {
            let corpus = Corpus::read(&args.io.src, &args.io.tgt)?;
            let outcome = filters::length_ratio_filter(
                &corpus,
                args.min_ratio,
                args.max_ratio,
                args.max_tokens,
            )?;
            finish_filter(outcome, &args.io, args.kept_ids, args.report)
        }
    }
}

fn finish_filter(
    mut outcome: filters::FilterOutcome,
    io: &CorpusIoArgs,
    kept_ids: Option<PathBuf>,
    report: Option<PathBuf>,
) -> Result<()> {
    if let Some(path) = kept_ids {
        outcome.write_kept_ids(&path)?;
    }
    outcome
        .corpus
        .write(&io.out_src, &io.out_tgt, &NormalizationProfile::none())?;
    if let Some(path) = report {
        write_json(&outcome.report, &path)?;
    }
    println!(
        "kept {} of {} pairs (dropped {})",
        outcome.report.kept_count, outcome.report.input_count, outcome.report.dropped_count
    );
    Ok(())
}

fn cmd_ape_select(args: ApeSelectArgs, allow_env: bool) -> Result<()> {
    let corpus = Corpus::read(&args.corpus_src, &args.corpus_tgt)?;
    let ape_lines = read_lines(&args.ape_out)?;
    let ape_corpus = select::ape_replace(&corpus, &ape_lines)?;
    let profile = args.profile.profile();
    let (original_scores, ape_scores) = match parse_select_scores_spec(&args.qe)? {
        SelectScoresSpec::Mock => (mock_score_table(&corpus), mock_score_table(&ape_corpus)),
        SelectScoresSpec::Files { original, ape } => (
            ScoreTable::load(&original, corpus.len())?,
            ScoreTable::load(&ape, corpus.len())?,
        ),
        SelectScoresSpec::Service(url) => {
            let endpoint = args.service.endpoint(service_url(url, allow_env));
            (
                score_with_service(corpus.pairs(), &endpoint, &profile.name())?,
                score_with_service(ape_corpus.pairs(), &endpoint, &profile.name())?,
            )
        }
    };
    let selection = select::ape_then_qe_select(
        &corpus,
        &ape_lines,
        &original_scores,
        &ape_scores,
        &profile,
        TiePolicy::PreferOriginal,
    )?;
    selection
        .corpus
        .write(&args.out_src, &args.out_tgt, &profile)?;
    if let Some(path) = &args.emit_records {
        select::write_selection_records(&selection.records, path)?;
    }
    if let Some(path) = &args.report {
        write_json(&selection.report, path)?;
    }
    let report = &selection.report;
    println!(
        "chose post-edited targets for {} of {} pairs ({} original, {} ties, {} no-op edits)",
        report.chosen_ape_count,
        report.input_count,
        report.chosen_original_count,
        report.tie_count,
        report.ape_identical_count
    );
    Ok(())
}

fn cmd_ppi(args: PpiCommand) -> Result<()> {
    match args {
        PpiCommand::Extract(args) => {
            let corpus = Corpus::read(&args.src, &args.tgt)?;
            let links = ppi::read_alignment_links(&args.align)?;
            let aligned = ppi::align_corpus(&corpus, links)?;
            let table = ppi::build_phrase_table(&aligned, args.max_len);
            table.write_tsv(&args.out)?;
            println!(
                "extracted {} distinct phrase pairs from {} sentence pairs",
                table.len(),
                corpus.len()
            );
        }
        PpiCommand::Select(args) => {
            let table = PhraseTable::load_tsv(&args.table)?;
            let selected = ppi::select_longest_unique(&table);
            PhraseTable::write_phrase_pairs(&selected, &args.out)?;
            println!("selected {} of {} phrase pairs", selected.len(), table.len());
        }
        PpiCommand::Inject(args) => {
            let corpus = Corpus::read(&args.src, &args.tgt)?;
            let table = PhraseTable::load_tsv(&args.phrases)?;
            let injected = ppi::inject(&corpus, table.entries());
            injected.write(&args.out_src, &args.out_tgt, &NormalizationProfile::none())?;
            println!(
                "injected {} phrase pairs: {} -> {} pairs",
                table.len(),
                corpus.len(),
                injected.len()
            );
        }
    }
    Ok(())
}

fn cmd_evaluate(args: EvaluateArgs) -> Result<()> {
    let smoothing = match args.smoothing.as_str() {
        "none" => Smoothing::None,
        "add-one" => Smoothing::AddOne,
        other => {
            return Err(Error::Parameter(format!(
                "unknown smoothing {other:?}; expected none or add-one"
            )))
        }
    };
    let profile = NormalizationProfile {
        lowercase: args.lowercase,
        unicode_nfc: false,
        collapse_whitespace: false,
    };
    let (result, report) = bleu::evaluate_files(&args.hyp, &args.reference, &profile, smoothing)?;
    println!("BLEU = {:.2}", result.score);
    if let Some(path) = &args.json {
        write_json(&report, path)?;
    }
    Ok(())
}

fn cmd_stats(args: StatsArgs) -> Result<()> {
    let corpus = Corpus::read(&args.src, &args.tgt)?;
    let stats = corpus.stats();
    if let Some(path) = &args.json {
        write_json(&stats, path)?;
        return Ok(());
    }
    println!("pairs: {}", stats.pair_count);
    println!("source tokens: {}", stats.source_token_count);
    println!("target tokens: {}", stats.target_token_count);
    println!("mean target/source ratio: {:.4}", stats.mean_length_ratio);
    println!("duplicate pairs: {}", stats.duplicate_pair_count);
    Ok(())
}

fn cmd_sweep(args: SweepArgs, allow_env: bool) -> Result<()> {
    let thresholds = args
        .thresholds
        .split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| Error::Parameter(format!("invalid threshold {t:?}")))
        })
        .collect::<Result<Vec<f64>>>()?;
    let corpus = Corpus::read(&args.src, &args.tgt)?;
    let table = match (&args.scores, &args.embeddings) {
        (Some(spec), None) => {
            let scores = resolve_scores(spec, &corpus, &args.service, allow_env)?;
            filters::sweep_scores(&scores, &thresholds)?
        }
        (None, Some(spec)) => {
            let embeddings =
                resolve_embeddings(spec, &corpus, args.seed, &args.service, allow_env)?;
            filters::sweep_similarities(&embeddings, &thresholds)?
        }
        _ => {
            return Err(Error::Parameter(
                "sweep needs exactly one of --scores or --embeddings".into(),
            ))
        }
    };
    match &args.out {
        Some(path) => table.write_tsv(path)?,
        None => {
            println!("threshold\tkept_count");
            for row in &table.rows {
                println!("{}\t{}", row.threshold, row.kept_count);
            }
        }
    }
    Ok(())
}
