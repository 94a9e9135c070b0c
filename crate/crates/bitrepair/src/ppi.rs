//! Phrase pair injection: mine consistent phrase pairs from word-aligned
//! sentence pairs and append the best ones to a corpus as extra training
//! pairs.
//!
//! Extraction uses the standard consistency rule for phrase-based systems: a
//! span pair is extracted when it contains at least one alignment link and no
//! link crosses its boundary on either side. The target span is always the
//! exact projection of the source span; spans padded with unaligned boundary
//! words are not emitted.

use std::collections::HashMap;
use std::path::Path;

use crate::corpus::{read_lines, tokenize, Corpus, SentencePair};
use crate::error::{Error, Result};
use crate::exec;

/// A tokenized sentence pair plus its word alignment.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AlignedSentence {
    pub pair_id: u64,
    pub source_tokens: Vec<String>,
    pub target_tokens: Vec<String>,
    /// (source index, target index) links, sorted and deduplicated.
    pub links: Vec<(u32, u32)>,
}

impl AlignedSentence {
    /// Build with bounds-checked links. The reported line is `pair_id + 1`,
    /// matching the line-aligned alignment file.
    pub fn new(
        pair_id: u64,
        source_tokens: Vec<String>,
        target_tokens: Vec<String>,
        mut links: Vec<(u32, u32)>,
    ) -> Result<AlignedSentence> {
        for &(i, j) in &links {
            if i as usize >= source_tokens.len() || j as usize >= target_tokens.len() {
                return Err(Error::LinkOutOfBounds {
                    line: pair_id as usize + 1,
                    link_source: i,
                    link_target: j,
                    source_len: source_tokens.len(),
                    target_len: target_tokens.len(),
                });
            }
        }
        links.sort_unstable();
        links.dedup();
        Ok(AlignedSentence {
            pair_id,
            source_tokens,
            target_tokens,
            links,
        })
    }
}

/// Inclusive token index ranges of one extracted phrase pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct SpanPair {
    pub source: (usize, usize),
    pub target: (usize, usize),
}

/// Parse a Pharaoh alignment file: one line per sentence pair, "i-j" entries
/// separated by whitespace, empty lines for unaligned pairs.
pub fn read_alignment_links(path: &Path) -> Result<Vec<Vec<(u32, u32)>>> {
    let lines = read_lines(path)?;
    let mut all = Vec::with_capacity(lines.len());
    for (idx, line) in lines.iter().enumerate() {
        let mut links = Vec::new();
        for entry in line.split_whitespace() {
            let parsed = entry
                .split_once('-')
                .and_then(|(i, j)| Some((i.parse::<u32>().ok()?, j.parse::<u32>().ok()?)));
            match parsed {
                Some(link) => links.push(link),
                None => {
                    return Err(Error::MalformedRow {
                        path: path.to_path_buf(),
                        line: idx + 1,
                        message: format!("invalid alignment entry {entry:?}"),
                    })
                }
            }
        }
        all.push(links);
    }
    Ok(all)
}

/// Join a corpus with per-line alignment links, tokenizing both sides.
pub fn align_corpus(corpus: &Corpus, links: Vec<Vec<(u32, u32)>>) -> Result<Vec<AlignedSentence>> {
    if links.len() != corpus.len() {
        return Err(Error::LineCountMismatch {
            left: "corpus".into(),
            left_count: corpus.len(),
            right: "alignments".into(),
            right_count: links.len(),
        });
    }
    corpus
        .iter()
        .zip(links)
        .map(|(pair, line_links)| {
            AlignedSentence::new(
                pair.id,
                tokenize(&pair.source).iter().map(|t| t.to_string()).collect(),
                tokenize(&pair.target).iter().map(|t| t.to_string()).collect(),
                line_links,
            )
        })
        .collect()
}

/// All consistent span pairs with both sides at most `max_len` tokens, sorted.
///
/// For each source span the linked target positions are projected to a target
/// span; the pair is kept when that span back-projects inside the source span.
pub fn extract_phrases(sentence: &AlignedSentence, max_len: usize) -> Vec<SpanPair> {
    let n = sentence.source_tokens.len();
    let mut out = Vec::new();
    if max_len == 0 || sentence.links.is_empty() {
        return out;
    }
    for i1 in 0..n {
        for i2 in i1..n.min(i1 + max_len) {
            let mut j_min = usize::MAX;
            let mut j_max = 0usize;
            let mut linked = false;
            for &(i, j) in &sentence.links {
                if (i as usize) >= i1 && (i as usize) <= i2 {
                    linked = true;
                    j_min = j_min.min(j as usize);
                    j_max = j_max.max(j as usize);
                }
            }
            if !linked || j_max - j_min + 1 > max_len {
                continue;
            }
            let back_ok = sentence.links.iter().all(|&(i, j)| {
                let j = j as usize;
                let i = i as usize;
                !(j >= j_min && j <= j_max) || (i >= i1 && i <= i2)
            });
            if back_ok {
                out.push(SpanPair {
                    source: (i1, i2),
                    target: (j_min, j_max),
                });
            }
        }
    }
    out.sort_unstable();
    out
}

/// One row of a phrase table.
#[derive(Debug, Clone, PartialEq)]
pub struct PhrasePair {
    pub source_phrase: Vec<String>,
    pub target_phrase: Vec<String>,
    pub count: u64,
    /// p(target_phrase | source_phrase), relative frequency over the table.
    pub prob: f64,
}

/// Extracted phrase pairs with relative-frequency translation probabilities,
/// sorted by (source, target) phrase.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PhraseTable {
    entries: Vec<PhrasePair>,
}

impl PhraseTable {
    /// Wrap precomputed entries (sorted for determinism). Probabilities are
    /// taken as given; only [`build_phrase_table`] derives them from counts.
    pub fn from_entries(mut entries: Vec<PhrasePair>) -> PhraseTable {
        entries.sort_by(|a, b| {
            (&a.source_phrase, &a.target_phrase).cmp(&(&b.source_phrase, &b.target_phrase))
        });
        PhraseTable { entries }
    }

    pub fn entries(&self) -> &[PhrasePair] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// TSV "source_phrase\ttarget_phrase\tcount\tprob", phrases space-joined.
    pub fn write_tsv(&self, path: &Path) -> Result<()> {
        Self::write_phrase_pairs(&self.entries, path)
    }

    /// Same format as [`PhraseTable::write_tsv`], preserving the slice order.
    pub fn write_phrase_pairs(pairs: &[PhrasePair], path: &Path) -> Result<()> {
        let mut out = String::new();
        for e in pairs {
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\n",
                e.source_phrase.join(" "),
                e.target_phrase.join(" "),
                e.count,
                e.prob
            ));
        }
        std::fs::write(path, out.as_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load_tsv(path: &Path) -> Result<PhraseTable> {
        let lines = read_lines(path)?;
        let mut entries = Vec::with_capacity(lines.len());
        for (idx, line) in lines.iter().enumerate() {
            let malformed = |message: String| Error::MalformedRow {
                path: path.to_path_buf(),
                line: idx + 1,
                message,
            };
            let fields: Vec<&str> = line.split('\t').collect();
            let [source, target, count, prob] = fields[..] else {
                return Err(malformed("expected 4 tab-separated fields".into()));
            };
            let count: u64 = count
                .parse()
                .map_err(|_| malformed(format!("invalid count {count:?}")))?;
            let prob: f64 = prob
                .parse()
                .map_err(|_| malformed(format!("invalid probability {prob:?}")))?;
            if !(prob.is_finite() && prob > 0.0 && prob <= 1.0) {
                return Err(malformed(format!("probability {prob} outside (0, 1]")));
            }
            entries.push(PhrasePair {
                source_phrase: source.split(' ').map(str::to_string).collect(),
                target_phrase: target.split(' ').map(str::to_string).collect(),
                count,
                prob,
            });
        }
        Ok(PhraseTable::from_entries(entries))
    }
}

/// Count every extracted phrase pair across the corpus and derive
/// p(target | source) by relative frequency. Input order never affects the
/// result.
pub fn build_phrase_table(sentences: &[AlignedSentence], max_len: usize) -> PhraseTable {
    let extracted = exec::map_ordered(sentences, |s| {
        extract_phrases(s, max_len)
            .into_iter()
            .map(|span| {
                (
                    s.source_tokens[span.source.0..=span.source.1].to_vec(),
                    s.target_tokens[span.target.0..=span.target.1].to_vec(),
                )
            })
            .collect::<Vec<_>>()
    });
    let mut counts: HashMap<(Vec<String>, Vec<String>), u64> = HashMap::new();
    for sentence_phrases in extracted {
        for key in sentence_phrases {
            *counts.entry(key).or_insert(0) += 1;
        }
    }
    let mut source_totals: HashMap<&[String], u64> = HashMap::new();
    for ((source, _), count) in &counts {
        *source_totals.entry(source.as_slice()).or_insert(0) += count;
    }
    let entries = counts
        .iter()
        .map(|((source, target), &count)| PhrasePair {
            source_phrase: source.clone(),
            target_phrase: target.clone(),
            count,
            prob: count as f64 / source_totals[source.as_slice()] as f64,
        })
        .collect();
    PhraseTable::from_entries(entries)
}

/// Reduce a phrase table to its best pairs:
/// 1. per source phrase, keep the most probable target (ties: longer target,
///    then lexicographically smaller target);
/// 2. drop any pair contained in another surviving pair (source and target
///    both contiguous subsequences of the other's);
/// 3. order by descending source length, then lexicographically.
pub fn select_longest_unique(table: &PhraseTable) -> Vec<PhrasePair> {
    let mut best: HashMap<&[String], &PhrasePair> = HashMap::new();
    for entry in table.entries() {
        best.entry(entry.source_phrase.as_slice())
            .and_modify(|current| {
                if better_target(entry, current) {
                    *current = entry;
                }
            })
            .or_insert(entry);
    }
    let per_source: Vec<&PhrasePair> = best.into_values().collect();
    let mut kept: Vec<PhrasePair> = per_source
        .iter()
        .filter(|p| {
            !per_source.iter().any(|q| {
                q.source_phrase != p.source_phrase
                    && is_contiguous_subsequence(&p.source_phrase, &q.source_phrase)
                    && is_contiguous_subsequence(&p.target_phrase, &q.target_phrase)
            })
        })
        .map(|p| (*p).clone())
        .collect();
    kept.sort_by(|a, b| {
        b.source_phrase
            .len()
            .cmp(&a.source_phrase.len())
            .then_with(|| a.source_phrase.cmp(&b.source_phrase))
            .then_with(|| a.target_phrase.cmp(&b.target_phrase))
    });
    kept
}

fn better_target(candidate: &PhrasePair, current: &PhrasePair) -> bool {
    if candidate.prob != current.prob {
        return candidate.prob > current.prob;
    }
    if candidate.target_phrase.len() != current.target_phrase.len() {
        return candidate.target_phrase.len() > current.target_phrase.len();
    }
    candidate.target_phrase < current.target_phrase
}

fn is_contiguous_subsequence(needle: &[String], haystack: &[String]) -> bool {
    needle.len() <= haystack.len() && haystack.windows(needle.len()).any(|w| w == needle)
}

/// Append phrase pairs to a corpus as sentence pairs, tokens space-joined.
pub fn inject(corpus: &Corpus, phrases: &[PhrasePair]) -> Corpus {
    let mut pairs: Vec<SentencePair> = corpus.pairs().to_vec();
    pairs.extend(phrases.iter().map(|p| SentencePair {
        id: 0,
        source: p.source_phrase.join(" "),
        target: p.target_phrase.join(" "),
    }));
    Corpus::from_pairs(pairs)
}
