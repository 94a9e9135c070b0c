//! Corpus-level BLEU: 4-gram modified precision with brevity penalty,
//! single reference per segment.
//!
//! Matches and n-gram totals are aggregated over the whole corpus before any
//! division. Degenerate corpora are pinned down explicitly: a corpus whose
//! hypotheses contain no tokens at all scores 0 (its brevity penalty is
//! reported as 1 to stay within range), and an order whose aggregated
//! denominator is 0 has precision 0 unless smoothing lifts it.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{normalize, read_lines, sha256_file, tokenize, NormalizationProfile};
use crate::error::{Error, Result};
use crate::exec;

pub const MAX_ORDER: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Smoothing {
    /// Raw precisions; any zero precision zeroes the score.
    None,
    /// Add 1 to numerator and denominator of p_n for n >= 2.
    AddOne,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BleuResult {
    /// 100 * BP * geometric mean of the four precisions; 0 if any is 0.
    pub score: f64,
    /// Modified n-gram precisions actually used for the score (smoothed when
    /// smoothing is on).
    pub precisions: [f64; MAX_ORDER],
    pub brevity_penalty: f64,
    pub hyp_length: u64,
    pub ref_length: u64,
}

/// Corpus BLEU over already-normalized texts; tokenization happens here.
pub fn corpus_bleu(
    hypotheses: &[String],
    references: &[String],
    smoothing: Smoothing,
) -> Result<BleuResult> {
    if hypotheses.len() != references.len() {
        return Err(Error::LengthMismatch {
            hypotheses: hypotheses.len(),
            references: references.len(),
        });
    }
    if hypotheses.is_empty() {
        return Err(Error::EmptyCorpus);
    }

    struct SegmentCounts {
        matches: [u64; MAX_ORDER],
        totals: [u64; MAX_ORDER],
        hyp_tokens: u64,
        ref_tokens: u64,
    }

    let indices: Vec<usize> = (0..hypotheses.len()).collect();
    let per_segment = exec::map_ordered(&indices, |&i| {
        let hyp = tokenize(&hypotheses[i]);
        let reference = tokenize(&references[i]);
        let mut counts = SegmentCounts {
            matches: [0; MAX_ORDER],
            totals: [0; MAX_ORDER],
            hyp_tokens: hyp.len() as u64,
            ref_tokens: reference.len() as u64,
        };
        for n in 1..=MAX_ORDER {
            let mut ref_grams: HashMap<&[&str], u64> = HashMap::new();
            if reference.len() >= n {
                for gram in reference.windows(n) {
                    *ref_grams.entry(gram).or_insert(0) += 1;
                }
            }
            let mut hyp_grams: HashMap<&[&str], u64> = HashMap::new();
            if hyp.len() >= n {
                for gram in hyp.windows(n) {
                    *hyp_grams.entry(gram).or_insert(0) += 1;
                }
            }
            for (gram, count) in &hyp_grams {
                counts.totals[n - 1] += count;
                if let Some(ref_count) = ref_grams.get(gram) {
                    counts.matches[n - 1] += (*count).min(*ref_count);
                }
            }
        }
        counts
    });

    let mut matches = [0u64; MAX_ORDER];
    let mut totals = [0u64; MAX_ORDER];
    let mut hyp_length = 0u64;
    let mut ref_length = 0u64;
    for seg in per_segment {
        for n in 0..MAX_ORDER {
            matches[n] += seg.matches[n];
            totals[n] += seg.totals[n];
        }
        hyp_length += seg.hyp_tokens;
        ref_length += seg.ref_tokens;
    }

    let mut precisions = [0.0f64; MAX_ORDER];
    for n in 0..MAX_ORDER {
        let (num, den) = match smoothing {
            Smoothing::AddOne if n >= 1 => (matches[n] + 1, totals[n] + 1),
            _ => (matches[n], totals[n]),
        };
        precisions[n] = if den == 0 { 0.0 } else { num as f64 / den as f64 };
    }

    if hyp_length == 0 {
        return Ok(BleuResult {
            score: 0.0,
            precisions,
            brevity_penalty: 1.0,
            hyp_length,
            ref_length,
        });
    }
    let brevity_penalty = if hyp_length > ref_length {
        1.0
    } else {
        (1.0 - ref_length as f64 / hyp_length as f64).exp()
    };
    let score = if precisions.iter().all(|p| *p > 0.0) {
        let log_mean = precisions.iter().map(|p| p.ln()).sum::<f64>() / MAX_ORDER as f64;
        100.0 * brevity_penalty * log_mean.exp()
    } else {
        0.0
    };
    Ok(BleuResult {
        score,
        precisions,
        brevity_penalty,
        hyp_length,
        ref_length,
    })
}

/// JSON evaluation report for one hypothesis/reference file pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub bleu: f64,
    pub precisions: [f64; MAX_ORDER],
    pub bp: f64,
    pub hyp_len: u64,
    pub ref_len: u64,
    pub profile: NormalizationProfile,
    pub smoothing: Smoothing,
    pub hyp_sha256: String,
    pub ref_sha256: String,
}

/// Normalize, tokenize and score two line-aligned files.
pub fn evaluate_files(
    hyp_path: &Path,
    ref_path: &Path,
    profile: &NormalizationProfile,
    smoothing: Smoothing,
) -> Result<(BleuResult, EvalReport)> {
    let hyp_lines = read_lines(hyp_path)?;
    let ref_lines = read_lines(ref_path)?;
    if hyp_lines.len() != ref_lines.len() {
        return Err(Error::LineCountMismatch {
            left: hyp_path.display().to_string(),
            left_count: hyp_lines.len(),
            right: ref_path.display().to_string(),
            right_count: ref_lines.len(),
        });
    }
    let hyp: Vec<String> = hyp_lines.iter().map(|l| normalize(l, profile)).collect();
    let reference: Vec<String> = ref_lines.iter().map(|l| normalize(l, profile)).collect();
    let result = corpus_bleu(&hyp, &reference, smoothing)?;
    let report = EvalReport {
        bleu: result.score,
        precisions: result.precisions,
        bp: result.brevity_penalty,
        hyp_len: result.hyp_length,
        ref_len: result.ref_length,
        profile: *profile,
        smoothing,
        hyp_sha256: sha256_file(hyp_path)?,
        ref_sha256: sha256_file(ref_path)?,
    };
    Ok((result, report))
}
