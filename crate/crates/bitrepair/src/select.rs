//! Target-side repair: replace targets with post-edited output, or pick the
//! better of the two per pair using quality scores.
//!
//! Selection never drops a pair; cardinality is preserved and only the target
//! text changes. Ties go to the original target, so a post-editor that merely
//! rewrites without improving ("over-correction") never wins.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{normalize, Corpus, NormalizationProfile, SentencePair};
use crate::error::{Error, Result};
use crate::exec;
use crate::scoring::ScoreTable;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TiePolicy {
    PreferOriginal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Chosen {
    Original,
    Ape,
}

impl std::fmt::Display for Chosen {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Chosen::Original => write!(f, "original"),
            Chosen::Ape => write!(f, "ape"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Reason {
    /// The chosen side scored strictly higher.
    HigherScore,
    /// Scores tied on texts that differ; the tie policy decided.
    TiePolicy,
    /// The post-edited target equals the original after normalization.
    ApeIdentical,
}

impl std::fmt::Display for Reason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Reason::HigherScore => write!(f, "higher-score"),
            Reason::TiePolicy => write!(f, "tie-policy"),
            Reason::ApeIdentical => write!(f, "ape-identical"),
        }
    }
}

/// Per-pair outcome of the select step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionRecord {
    pub pair_id: u64,
    pub original_score: f64,
    pub ape_score: f64,
    pub chosen: Chosen,
    pub reason: Reason,
}

impl SelectionRecord {
    pub fn selected_score(&self) -> f64 {
        match self.chosen {
            Chosen::Original => self.original_score,
            Chosen::Ape => self.ape_score,
        }
    }
}

/// Aggregate outcome of the select step. Means are 0 for an empty input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionReport {
    pub input_count: u64,
    pub chosen_ape_count: u64,
    pub chosen_original_count: u64,
    pub tie_count: u64,
    pub ape_identical_count: u64,
    pub mean_original_score: f64,
    pub mean_ape_score: f64,
    pub mean_selected_score: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub corpus: Corpus,
    pub report: SelectionReport,
    pub records: Vec<SelectionRecord>,
}

/// Replace every target with the line-aligned post-edited output.
pub fn ape_replace(corpus: &Corpus, ape_targets: &[String]) -> Result<Corpus> {
    if ape_targets.len() != corpus.len() {
        return Err(Error::LineCountMismatch {
            left: "corpus".into(),
            left_count: corpus.len(),
            right: "ape output".into(),
            right_count: ape_targets.len(),
        });
    }
    let pairs = corpus
        .iter()
        .zip(ape_targets)
        .map(|(pair, ape)| SentencePair {
            id: pair.id,
            source: pair.source.clone(),
            target: ape.clone(),
        })
        .collect();
    Ok(Corpus::from_pairs(pairs))
}

/// For every pair, keep whichever of the original and post-edited target
/// scored higher; ties and no-op edits keep the original. Both score tables
/// must cover the whole corpus. The output has the same pair count as the
/// input.
pub fn ape_then_qe_select(
    corpus: &Corpus,
    ape_targets: &[String],
    original_scores: &ScoreTable,
    ape_scores: &ScoreTable,
    profile: &NormalizationProfile,
    _tie_policy: TiePolicy,
) -> Result<Selection> {
    if ape_targets.len() != corpus.len() {
        return Err(Error::LineCountMismatch {
            left: "corpus".into(),
            left_count: corpus.len(),
            right: "ape output".into(),
            right_count: ape_targets.len(),
        });
    }
    let decided = exec::map_ordered(corpus.pairs(), |pair| -> Result<SelectionRecord> {
        let ape_target = &ape_targets[pair.id as usize];
        let original_score = original_scores.get(pair.id)?;
        let ape_score = ape_scores.get(pair.id)?;
        let (chosen, reason) = if normalize(ape_target, profile) == normalize(&pair.target, profile)
        {
            (Chosen::Original, Reason::ApeIdentical)
        } else if ape_score > original_score {
            (Chosen::Ape, Reason::HigherScore)
        } else if ape_score < original_score {
            (Chosen::Original, Reason::HigherScore)
        } else {
            (Chosen::Original, Reason::TiePolicy)
        };
        Ok(SelectionRecord {
            pair_id: pair.id,
            original_score,
            ape_score,
            chosen,
            reason,
        })
    });

    let mut records = Vec::with_capacity(corpus.len());
    let mut pairs = Vec::with_capacity(corpus.len());
    let mut chosen_ape_count = 0u64;
    let mut tie_count = 0u64;
    let mut ape_identical_count = 0u64;
    let mut sum_original = 0.0f64;
    let mut sum_ape = 0.0f64;
    let mut sum_selected = 0.0f64;
    for (pair, record) in corpus.pairs().iter().zip(decided) {
        let record = record?;
        let target = match record.chosen {
            Chosen::Original => pair.target.clone(),
            Chosen::Ape => {
                chosen_ape_count += 1;
                ape_targets[pair.id as usize].clone()
            }
        };
        match record.reason {
            Reason::TiePolicy => tie_count += 1,
            Reason::ApeIdentical => ape_identical_count += 1,
            Reason::HigherScore => {}
        }
        sum_original += record.original_score;
        sum_ape += record.ape_score;
        sum_selected += record.selected_score();
        pairs.push(SentencePair {
            id: pair.id,
            source: pair.source.clone(),
            target,
        });
        records.push(record);
    }

    let n = corpus.len() as u64;
    let mean = |sum: f64| if n == 0 { 0.0 } else { sum / n as f64 };
    Ok(Selection {
        corpus: Corpus::from_pairs(pairs),
        report: SelectionReport {
            input_count: n,
            chosen_ape_count,
            chosen_original_count: n - chosen_ape_count,
            tie_count,
            ape_identical_count,
            mean_original_score: mean(sum_original),
            mean_ape_score: mean(sum_ape),
            mean_selected_score: mean(sum_selected),
        },
        records,
    })
}

/// One record whose selected score is not the maximum of its two inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DominanceViolation {
    pub pair_id: u64,
    pub selected_score: f64,
    pub max_score: f64,
}

/// Audit the argmax contract: every record's selected score must equal
/// max(original_score, ape_score). Returns the violations found.
pub fn selection_dominance_check(records: &[SelectionRecord]) -> Vec<DominanceViolation> {
    records
        .iter()
        .filter_map(|r| {
            let max_score = r.original_score.max(r.ape_score);
            if r.selected_score() == max_score {
                None
            } else {
                Some(DominanceViolation {
                    pair_id: r.pair_id,
                    selected_score: r.selected_score(),
                    max_score,
                })
            }
        })
        .collect()
}

/// Write records as TSV "pair_id\toriginal_score\tape_score\tchosen\treason".
pub fn write_selection_records(records: &[SelectionRecord], path: &Path) -> Result<()> {
    let mut out = String::new();
    for r in records {
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\n",
            r.pair_id, r.original_score, r.ape_score, r.chosen, r.reason
        ));
    }
    std::fs::write(path, out.as_bytes()).map_err(|e| Error::io(path, e))
}
