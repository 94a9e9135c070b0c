//! Per-pair corpus filters and threshold sweeps.
//!
//! Every filter is a pure keep/drop predicate: text is never rewritten here.
//! Thresholds are inclusive floors (keep if value >= threshold). Surviving
//! pairs keep their relative order and are re-id'd sequentially; the mapping
//! back to input ids can be written as a TSV.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{token_count, Corpus};
use crate::error::{Error, Result};
use crate::exec;
use crate::scoring::{EmbeddingTable, ScoreTable};

/// Outcome summary of one filter application.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterReport {
    pub filter_name: String,
    pub input_count: u64,
    pub kept_count: u64,
    pub dropped_count: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kept_ids_path: Option<String>,
}

/// A filtered corpus plus its report and the surviving input ids
/// (strictly increasing; position = new id).
#[derive(Debug, Clone, PartialEq)]
pub struct FilterOutcome {
    pub corpus: Corpus,
    pub report: FilterReport,
    pub kept_old_ids: Vec<u64>,
}

impl FilterOutcome {
    /// Write the new-to-old id mapping as TSV "new_id\told_id" and record the
    /// path in the report.
    pub fn write_kept_ids(&mut self, path: &Path) -> Result<()> {
        let mut out = String::new();
        for (new_id, old_id) in self.kept_old_ids.iter().enumerate() {
            out.push_str(&format!("{new_id}\t{old_id}\n"));
        }
        std::fs::write(path, out.as_bytes()).map_err(|e| Error::io(path, e))?;
        self.report.kept_ids_path = Some(path.display().to_string());
        Ok(())
    }
}

fn run_filter<F>(
    corpus: &Corpus,
    filter_name: &str,
    threshold: Option<f64>,
    keep: F,
) -> Result<FilterOutcome>
where
    F: Fn(&crate::corpus::SentencePair) -> Result<bool> + Sync + Send,
{
    let decisions = exec::map_ordered(corpus.pairs(), |p| keep(p));
    // Shed the wide Result buffer before cloning kept pairs, and size the
    // clone exactly; on multi-million-pair corpora the doubling reallocation
    // would otherwise dominate peak memory.
    let mut flags = Vec::with_capacity(decisions.len());
    for decision in decisions {
        flags.push(decision?);
    }
    let kept_count = flags.iter().filter(|&&keep_it| keep_it).count();
    let mut kept = Vec::with_capacity(kept_count);
    let mut kept_old_ids = Vec::with_capacity(kept_count);
    for (pair, keep_it) in corpus.pairs().iter().zip(flags) {
        if keep_it {
            kept_old_ids.push(pair.id);
            kept.push(pair.clone());
        }
    }
    let input_count = corpus.len() as u64;
    let kept_count = kept.len() as u64;
    Ok(FilterOutcome {
        corpus: Corpus::from_pairs(kept),
        report: FilterReport {
            filter_name: filter_name.to_string(),
            input_count,
            kept_count,
            dropped_count: input_count - kept_count,
            threshold,
            kept_ids_path: None,
        },
        kept_old_ids,
    })
}

/// Keep pairs whose quality score is at least `threshold`.
pub fn qe_filter(corpus: &Corpus, scores: &ScoreTable, threshold: f64) -> Result<FilterOutcome> {
    run_filter(corpus, "qe", Some(threshold), |p| {
        Ok(scores.get(p.id)? >= threshold)
    })
}

/// Keep pairs whose source/target embedding cosine is at least `threshold`.
pub fn labse_filter(
    corpus: &Corpus,
    embeddings: &EmbeddingTable,
    threshold: f64,
) -> Result<FilterOutcome> {
    run_filter(corpus, "labse", Some(threshold), |p| {
        Ok(embeddings.pair_similarity(p.id)? >= threshold)
    })
}

/// Keep pairs where both sides have 1..=max_tokens tokens and the
/// target/source token ratio lies within [min_ratio, max_ratio].
pub fn length_ratio_filter(
    corpus: &Corpus,
    min_ratio: f64,
    max_ratio: f64,
    max_tokens: usize,
) -> Result<FilterOutcome> {
    if !(min_ratio > 0.0 && min_ratio <= max_ratio) {
        return Err(Error::Parameter(format!(
            "length ratio bounds must satisfy 0 < min <= max, got [{min_ratio}, {max_ratio}]"
        )));
    }
    if max_tokens == 0 {
        return Err(Error::Parameter("max_tokens must be at least 1".into()));
    }
    run_filter(corpus, "length-ratio", None, |p| {
        let s = token_count(&p.source);
        let t = token_count(&p.target);
        if s == 0 || t == 0 || s > max_tokens || t > max_tokens {
            return Ok(false);
        }
        let ratio = t as f64 / s as f64;
        Ok(ratio >= min_ratio && ratio <= max_ratio)
    })
}

/// One (threshold, kept count) row of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub threshold: f64,
    pub kept_count: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
}

impl SweepTable {
    pub fn write_tsv(&self, path: &Path) -> Result<()> {
        let mut out = String::from("threshold\tkept_count\n");
        for row in &self.rows {
            out.push_str(&format!("{}\t{}\n", row.threshold, row.kept_count));
        }
        std::fs::write(path, out.as_bytes()).map_err(|e| Error::io(path, e))
    }
}

/// Kept counts for every threshold in one pass: bucket each value by how many
/// thresholds it clears, then suffix-sum. Equivalent to filtering once per
/// threshold.
fn sweep_values(values: &[f64], thresholds: &[f64]) -> Result<SweepTable> {
    if thresholds.is_empty() {
        return Err(Error::Parameter("sweep needs at least one threshold".into()));
    }
    if thresholds.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Parameter(
            "sweep thresholds must be strictly increasing".into(),
        ));
    }
    let mut buckets = vec![0u64; thresholds.len() + 1];
    for &value in values {
        let cleared = thresholds.partition_point(|&t| value >= t);
        buckets[cleared] += 1;
    }
    let mut rows = Vec::with_capacity(thresholds.len());
    let mut kept = 0u64;
    for (i, &threshold) in thresholds.iter().enumerate().rev() {
        kept += buckets[i + 1];
        rows.push(SweepRow {
            threshold,
            kept_count: kept,
        });
    }
    rows.reverse();
    Ok(SweepTable { rows })
}

/// Sweep quality-score thresholds.
pub fn sweep_scores(scores: &ScoreTable, thresholds: &[f64]) -> Result<SweepTable> {
    sweep_values(scores.values(), thresholds)
}

/// Sweep similarity thresholds over per-pair embedding cosines.
pub fn sweep_similarities(
    embeddings: &EmbeddingTable,
    thresholds: &[f64],
) -> Result<SweepTable> {
    let values = (0..embeddings.len() as u64)
        .map(|id| embeddings.pair_similarity(id))
        .collect::<Result<Vec<f64>>>()?;
    sweep_values(&values, thresholds)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scoring::{mock_embedding_table, Embedding, Provenance};

    fn corpus_of(n: usize) -> Corpus {
        Corpus::from_texts((0..n).map(|i| (format!("s{i}"), format!("t{i}"))))
    }

    fn scores_of(values: &[f64]) -> ScoreTable {
        ScoreTable::from_values(values.to_vec(), Provenance::File).unwrap()
    }

    #[test]
    fn qe_filter_keeps_scores_at_or_above_threshold() {
        let corpus = corpus_of(3);
        let outcome = qe_filter(&corpus, &scores_of(&[-1.0, -0.4, 0.2]), -0.5).unwrap();
        assert_eq!(outcome.kept_old_ids, vec![1, 2]);
        assert_eq!(outcome.report.kept_count, 2);
        assert_eq!(outcome.report.dropped_count, 1);
        assert_eq!(outcome.corpus.pairs()[0].id, 0);
        assert_eq!(outcome.corpus.pairs()[0].source, "s1");
    }

    #[test]
    fn qe_filter_with_sentinel_threshold_keeps_everything() {
        let corpus = corpus_of(4);
        let outcome = qe_filter(&corpus, &scores_of(&[-2.0, 0.0, 3.0, -0.5]), -1e18).unwrap();
        assert_eq!(outcome.report.kept_count, 4);
        assert_eq!(outcome.corpus.len(), 4);
    }

    #[test]
    fn qe_filter_missing_score_is_an_error() {
        let corpus = corpus_of(3);
        let err = qe_filter(&corpus, &scores_of(&[0.0, 0.0]), 0.0).unwrap_err();
        assert!(matches!(err, Error::MissingScore(2)));
    }

    #[test]
    fn labse_filter_keeps_identical_text_pair() {
        let corpus = Corpus::from_texts(vec![("same words".to_string(), "same words".to_string())]);
        let embeddings = mock_embedding_table(&corpus, 16, 3).unwrap();
        let outcome = labse_filter(&corpus, &embeddings, 0.8).unwrap();
        assert_eq!(outcome.report.kept_count, 1);
    }

    #[test]
    fn labse_filter_threshold_one_drops_everything_below_one() {
        let corpus = corpus_of(5);
        let embeddings = mock_embedding_table(&corpus, 64, 9).unwrap();
        let all_below_one = (0..5).all(|id| embeddings.pair_similarity(id).unwrap() < 1.0);
        assert!(all_below_one, "fixture needs strictly-below-1 similarities");
        let outcome = labse_filter(&corpus, &embeddings, 1.0).unwrap();
        assert_eq!(outcome.report.kept_count, 0);
        assert!(outcome.corpus.is_empty());
    }

    // Embeddings with exact planted similarity: source e0, target at angle
    // theta inside the e0/e1 plane.
    fn planted_embeddings(similarities: &[f64]) -> EmbeddingTable {
        let rows = similarities
            .iter()
            .map(|&c| {
                let mut source_vec = vec![0.0; 8];
                source_vec[0] = 1.0;
                let mut target_vec = vec![0.0; 8];
                target_vec[0] = c;
                target_vec[1] = (1.0 - c * c).max(0.0).sqrt();
                Embedding {
                    source_vec,
                    target_vec,
                }
            })
            .collect();
        EmbeddingTable::from_rows(rows, Provenance::File).unwrap()
    }

    #[test]
    fn labse_filter_matches_brute_force_scan_on_planted_similarities() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(41);
        let sims: Vec<f64> = (0..1000).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let corpus = corpus_of(sims.len());
        let embeddings = planted_embeddings(&sims);
        let threshold = 0.8;

        let outcome = labse_filter(&corpus, &embeddings, threshold).unwrap();

        // Independent scan: raw dot product per pair, no table machinery.
        let expected: Vec<u64> = sims
            .iter()
            .enumerate()
            .filter(|(id, _)| {
                let e = embeddings.get(*id as u64).unwrap();
                let dot: f64 = e
                    .source_vec
                    .iter()
                    .zip(&e.target_vec)
                    .map(|(a, b)| a * b)
                    .sum();
                dot >= threshold
            })
            .map(|(id, _)| id as u64)
            .collect();
        assert_eq!(outcome.kept_old_ids, expected);
        assert!(!expected.is_empty() && expected.len() < sims.len());
    }

    #[test]
    fn length_ratio_filter_examples() {
        let keep = Corpus::from_texts(vec![("a b".to_string(), "c d".to_string())]);
        assert_eq!(
            length_ratio_filter(&keep, 0.5, 2.0, 100).unwrap().report.kept_count,
            1
        );

        let empty_target = Corpus::from_texts(vec![("a".to_string(), "".to_string())]);
        assert_eq!(
            length_ratio_filter(&empty_target, 0.5, 2.0, 100)
                .unwrap()
                .report
                .kept_count,
            0
        );

        let lopsided = Corpus::from_texts(vec![("a".to_string(), "b c d".to_string())]);
        assert_eq!(
            length_ratio_filter(&lopsided, 0.5, 2.0, 100)
                .unwrap()
                .report
                .kept_count,
            0
        );
    }

    #[test]
    fn length_ratio_filter_enforces_max_tokens_and_bounds() {
        let long = Corpus::from_texts(vec![("a b c".to_string(), "x y z".to_string())]);
        assert_eq!(
            length_ratio_filter(&long, 0.5, 2.0, 2).unwrap().report.kept_count,
            0
        );
        assert!(length_ratio_filter(&long, 0.0, 2.0, 10).is_err());
        assert!(length_ratio_filter(&long, 3.0, 2.0, 10).is_err());
        assert!(length_ratio_filter(&long, 0.5, 2.0, 0).is_err());
    }

    #[test]
    fn filters_preserve_order_and_conserve_counts() {
        let corpus = corpus_of(100);
        let values: Vec<f64> = (0..100).map(|i| (i % 7) as f64 - 3.0).collect();
        let outcome = qe_filter(&corpus, &scores_of(&values), 0.0).unwrap();
        assert!(outcome.kept_old_ids.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(
            outcome.report.kept_count + outcome.report.dropped_count,
            outcome.report.input_count
        );
        for (new_id, pair) in outcome.corpus.iter().enumerate() {
            assert_eq!(pair.id, new_id as u64);
        }
    }

    #[test]
    fn kept_ids_file_maps_new_to_old() {
        let dir = tempfile::TempDir::new().unwrap();
        let corpus = corpus_of(3);
        let mut outcome = qe_filter(&corpus, &scores_of(&[-1.0, 1.0, 1.0]), 0.0).unwrap();
        let path = dir.path().join("kept.tsv");
        outcome.write_kept_ids(&path).unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap(), "0\t1\n1\t2\n");
        assert_eq!(outcome.report.kept_ids_path, Some(path.display().to_string()));
    }

    #[test]
    fn sweep_hand_counted_example() {
        let scores = scores_of(&[-0.5, 0.5]);
        let table = sweep_scores(&scores, &[-1.0, 0.0, 1.0]).unwrap();
        let counts: Vec<u64> = table.rows.iter().map(|r| r.kept_count).collect();
        assert_eq!(counts, vec![2, 1, 0]);
    }

    #[test]
    fn sweep_single_threshold_matches_filter_report() {
        let corpus = corpus_of(6);
        let scores = scores_of(&[-0.9, -0.5, -0.1, 0.0, 0.4, 2.0]);
        let table = sweep_scores(&scores, &[-0.5]).unwrap();
        let report = qe_filter(&corpus, &scores, -0.5).unwrap().report;
        assert_eq!(table.rows[0].kept_count, report.kept_count);
    }

    #[test]
    fn sweep_matches_per_threshold_reruns() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        let values: Vec<f64> = (0..10_000).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let corpus = corpus_of(values.len());
        let scores = scores_of(&values);
        let thresholds: Vec<f64> = (0..20).map(|i| -3.0 + 0.3 * i as f64).collect();

        let table = sweep_scores(&scores, &thresholds).unwrap();
        for row in &table.rows {
            let rerun = qe_filter(&corpus, &scores, row.threshold).unwrap();
            assert_eq!(row.kept_count, rerun.report.kept_count, "at {}", row.threshold);
        }
        assert!(table.rows.windows(2).all(|w| w[0].kept_count >= w[1].kept_count));
    }

    #[test]
    fn sweep_rejects_unsorted_thresholds() {
        let scores = scores_of(&[0.0]);
        assert!(sweep_scores(&scores, &[0.0, 0.0]).is_err());
        assert!(sweep_scores(&scores, &[1.0, 0.0]).is_err());
        assert!(sweep_scores(&scores, &[]).is_err());
    }

    #[test]
    fn sweep_over_embeddings_counts_similarities() {
        let embeddings = planted_embeddings(&[0.9, 0.7, 0.85, -0.2]);
        let table = sweep_similarities(&embeddings, &[0.0, 0.8]).unwrap();
        assert_eq!(table.rows[0].kept_count, 3);
        assert_eq!(table.rows[1].kept_count, 2);
    }

    #[test]
    fn composed_filters_keep_the_intersection() {
        let corpus = Corpus::from_texts(vec![
            ("a b".to_string(), "c d".to_string()),
            ("a".to_string(), "b c d e".to_string()),
            ("x y".to_string(), "z w".to_string()),
        ]);
        let scores = scores_of(&[1.0, 1.0, -1.0]);

        let qe_first = qe_filter(&corpus, &scores, 0.0).unwrap();
        let then_length = length_ratio_filter(&qe_first.corpus, 0.5, 2.0, 10).unwrap();
        let combined: Vec<u64> = then_length
            .kept_old_ids
            .iter()
            .map(|&mid| qe_first.kept_old_ids[mid as usize])
            .collect();

        let qe_alone = qe_filter(&corpus, &scores, 0.0).unwrap().kept_old_ids;
        let length_alone = length_ratio_filter(&corpus, 0.5, 2.0, 10).unwrap().kept_old_ids;
        let intersection: Vec<u64> = qe_alone
            .iter()
            .filter(|id| length_alone.contains(id))
            .copied()
            .collect();
        assert_eq!(combined, intersection);
        assert_eq!(combined, vec![0]);
    }
}
