//! Parallel-corpus ingestion, normalization, tokenization, statistics and
//! emission.
//!
//! A corpus is two plain-text files, one sentence per line, UTF-8, LF. Pair
//! identity is the 0-based line index; every cross-file join (scores, APE
//! outputs, alignments) keys on that index. CRLF input is accepted (the CR is
//! stripped) but never emitted.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use unicode_normalization::{is_nfc, UnicodeNormalization};
use unicode_properties::{GeneralCategoryGroup, UnicodeGeneralCategory};

use crate::error::{Error, Result};
use crate::exec;

/// One source/target sentence pair; the pipeline's unit of work.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SentencePair {
    /// 0-based line index within its corpus.
    pub id: u64,
    pub source: String,
    pub target: String,
}

/// One `<source, MT output, corrected>` triple from an APE data set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ApeTriplet {
    pub id: u64,
    pub source: String,
    pub mt_output: String,
    pub corrected: String,
}

/// Text normalization switches, fixed for the lifetime of a pipeline run and
/// recorded in every output manifest.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NormalizationProfile {
    pub lowercase: bool,
    pub unicode_nfc: bool,
    pub collapse_whitespace: bool,
}

impl NormalizationProfile {
    /// Identity profile: text passes through untouched.
    pub fn none() -> Self {
        NormalizationProfile {
            lowercase: false,
            unicode_nfc: false,
            collapse_whitespace: false,
        }
    }

    /// NFC + whitespace collapse + lowercasing.
    pub fn full() -> Self {
        NormalizationProfile {
            lowercase: true,
            unicode_nfc: true,
            collapse_whitespace: true,
        }
    }

    /// Compact name used in scorer requests and log lines, e.g. "nfc+ws+lower".
    pub fn name(&self) -> String {
        let mut parts = Vec::new();
        if self.unicode_nfc {
            parts.push("nfc");
        }
        if self.collapse_whitespace {
            parts.push("ws");
        }
        if self.lowercase {
            parts.push("lower");
        }
        if parts.is_empty() {
            "none".to_string()
        } else {
            parts.join("+")
        }
    }
}

/// Single-pass corpus summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub pair_count: u64,
    pub source_token_count: u64,
    pub target_token_count: u64,
    /// Per-pair mean of target/source token ratio. Pairs with an empty source
    /// are excluded from the mean; an empty corpus reports 0.
    pub mean_length_ratio: f64,
    pub duplicate_pair_count: u64,
}

/// Checksummed file reference inside a manifest.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

/// JSON summary written next to every emitted corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub pair_count: u64,
    pub profile: NormalizationProfile,
    pub inputs: Vec<FileDigest>,
    pub tool_version: String,
}

impl Manifest {
    pub fn write(&self, path: &Path) -> Result<()> {
        let json =
            serde_json::to_string_pretty(self).expect("manifest serialization cannot fail");
        std::fs::write(path, json.as_bytes()).map_err(|e| Error::io(path, e))
    }
}

/// Apply a normalization profile: NFC, then whitespace collapse (runs of
/// Unicode whitespace become one ASCII space, ends trimmed), then lowercase.
/// Total and idempotent. Lowercasing can denormalize a combining sequence
/// (dotted capital I expands to i plus a combining dot), so the NFC pass is
/// reapplied afterwards when the profile asks for NFC.
pub fn normalize(text: &str, profile: &NormalizationProfile) -> String {
    let mut out;
    if profile.unicode_nfc && !is_nfc(text) {
        out = text.nfc().collect::<String>();
    } else {
        out = text.to_string();
    }
    if profile.collapse_whitespace {
        out = out.split_whitespace().collect::<Vec<_>>().join(" ");
    }
    if profile.lowercase {
        out = out.to_lowercase();
        if profile.unicode_nfc && !is_nfc(&out) {
            out = out.nfc().collect::<String>();
        }
    }
    out
}

fn is_punctuation(c: char) -> bool {
    c.general_category_group() == GeneralCategoryGroup::Punctuation
}

/// Deterministic tokenizer: split on Unicode whitespace, then detach each
/// maximal run of Unicode punctuation as its own token. Never yields empty
/// tokens.
pub fn tokenize(text: &str) -> Vec<&str> {
    let mut tokens = Vec::new();
    for word in text.split_whitespace() {
        let mut start = 0;
        let mut run_is_punct = None;
        for (idx, ch) in word.char_indices() {
            let p = is_punctuation(ch);
            match run_is_punct {
                None => run_is_punct = Some(p),
                Some(prev) if prev != p => {
                    tokens.push(&word[start..idx]);
                    start = idx;
                    run_is_punct = Some(p);
                }
                Some(_) => {}
            }
        }
        if start < word.len() {
            tokens.push(&word[start..]);
        }
    }
    tokens
}

/// Number of tokens `tokenize` would yield, without materializing them.
pub fn token_count(text: &str) -> usize {
    tokenize(text).len()
}

/// An in-memory corpus. Pair ids always equal vector position; every
/// constructor and transformation re-establishes that invariant.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Corpus {
    pairs: Vec<SentencePair>,
}

impl Corpus {
    /// Build from (source, target) texts, assigning sequential ids.
    pub fn from_texts<I>(texts: I) -> Corpus
    where
        I: IntoIterator<Item = (String, String)>,
    {
        let pairs = texts
            .into_iter()
            .enumerate()
            .map(|(id, (source, target))| SentencePair {
                id: id as u64,
                source,
                target,
            })
            .collect();
        Corpus { pairs }
    }

    /// Re-id a pair list sequentially.
    pub fn from_pairs(mut pairs: Vec<SentencePair>) -> Corpus {
        for (id, pair) in pairs.iter_mut().enumerate() {
            pair.id = id as u64;
        }
        Corpus { pairs }
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn pairs(&self) -> &[SentencePair] {
        &self.pairs
    }

    pub fn iter(&self) -> std::slice::Iter<'_, SentencePair> {
        self.pairs.iter()
    }

    pub fn get(&self, id: u64) -> Option<&SentencePair> {
        self.pairs.get(id as usize)
    }

    /// Stream both files into memory, enforcing equal line counts.
    pub fn read(source_path: &Path, target_path: &Path) -> Result<Corpus> {
        let reader = PairReader::open(source_path, target_path)?;
        let mut pairs = Vec::new();
        for pair in reader {
            pairs.push(pair?);
        }
        Ok(Corpus { pairs })
    }

    /// Write the corpus as two LF-terminated text files and return a manifest
    /// with checksums of the emitted files.
    pub fn write(
        &self,
        source_path: &Path,
        target_path: &Path,
        profile: &NormalizationProfile,
    ) -> Result<Manifest> {
        let src_digest = write_lines(source_path, self.pairs.iter().map(|p| p.source.as_str()))?;
        let tgt_digest = write_lines(target_path, self.pairs.iter().map(|p| p.target.as_str()))?;
        Ok(Manifest {
            pair_count: self.pairs.len() as u64,
            profile: *profile,
            inputs: vec![
                FileDigest {
                    path: source_path.display().to_string(),
                    sha256: src_digest,
                },
                FileDigest {
                    path: target_path.display().to_string(),
                    sha256: tgt_digest,
                },
            ],
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
        })
    }

    /// Normalize every pair under `profile`.
    pub fn normalized(&self, profile: &NormalizationProfile) -> Corpus {
        let pairs = exec::map_ordered(&self.pairs, |p| SentencePair {
            id: p.id,
            source: normalize(&p.source, profile),
            target: normalize(&p.target, profile),
        });
        Corpus { pairs }
    }

    /// Concatenate `self` and `other`, re-id sequentially. With `dedup`,
    /// pairs whose normalized (source, target) text was already seen are
    /// dropped, keeping the first occurrence.
    pub fn concat(&self, other: &Corpus, dedup: bool, profile: &NormalizationProfile) -> Corpus {
        let all = self.pairs.iter().chain(other.pairs.iter());
        if !dedup {
            return Corpus::from_pairs(all.cloned().collect());
        }
        let mut seen = HashSet::new();
        let mut kept = Vec::new();
        for pair in all {
            let key = (normalize(&pair.source, profile), normalize(&pair.target, profile));
            if seen.insert(key) {
                kept.push(pair.clone());
            }
        }
        Corpus::from_pairs(kept)
    }

    /// Counts, token totals, mean length ratio and duplicate count.
    pub fn stats(&self) -> CorpusStats {
        let per_pair = exec::map_ordered(&self.pairs, |p| {
            (token_count(&p.source) as u64, token_count(&p.target) as u64)
        });
        let mut source_tokens = 0u64;
        let mut target_tokens = 0u64;
        let mut ratio_sum = 0.0f64;
        let mut ratio_n = 0u64;
        for &(s, t) in &per_pair {
            source_tokens += s;
            target_tokens += t;
            if s > 0 {
                ratio_sum += t as f64 / s as f64;
                ratio_n += 1;
            }
        }
        let mut seen = HashSet::new();
        let mut duplicates = 0u64;
        for pair in &self.pairs {
            if !seen.insert((pair.source.as_str(), pair.target.as_str())) {
                duplicates += 1;
            }
        }
        CorpusStats {
            pair_count: self.pairs.len() as u64,
            source_token_count: source_tokens,
            target_token_count: target_tokens,
            mean_length_ratio: if ratio_n == 0 { 0.0 } else { ratio_sum / ratio_n as f64 },
            duplicate_pair_count: duplicates,
        }
    }
}

impl<'a> IntoIterator for &'a Corpus {
    type Item = &'a SentencePair;
    type IntoIter = std::slice::Iter<'a, SentencePair>;

    fn into_iter(self) -> Self::IntoIter {
        self.pairs.iter()
    }
}

/// Streaming reader over two line-aligned files, yielding pairs in file order
/// with sequential ids. A length mismatch or invalid UTF-8 surfaces as an
/// error item and ends the stream.
pub struct PairReader {
    source: BufReader<File>,
    target: BufReader<File>,
    source_path: PathBuf,
    target_path: PathBuf,
    next_id: u64,
    done: bool,
}

impl PairReader {
    pub fn open(source_path: &Path, target_path: &Path) -> Result<PairReader> {
        let source = File::open(source_path).map_err(|e| Error::io(source_path, e))?;
        let target = File::open(target_path).map_err(|e| Error::io(target_path, e))?;
        Ok(PairReader {
            source: BufReader::new(source),
            target: BufReader::new(target),
            source_path: source_path.to_path_buf(),
            target_path: target_path.to_path_buf(),
            next_id: 0,
            done: false,
        })
    }

    fn mismatch(&mut self, source_ended: bool) -> Error {
        // One side ended early; count the remainder of the other for the report.
        let consumed = self.next_id as usize;
        let (longer, longer_path) = if source_ended {
            (&mut self.target, &self.target_path)
        } else {
            (&mut self.source, &self.source_path)
        };
        let mut extra = 1usize; // the line that was already read
        let mut sink = String::new();
        loop {
            sink.clear();
            match longer.read_line(&mut sink) {
                Ok(0) | Err(_) => break,
                Ok(_) => extra += 1,
            }
        }
        let (left_count, right_count) = if source_ended {
            (consumed, consumed + extra)
        } else {
            (consumed + extra, consumed)
        };
        let _ = longer_path;
        Error::LineCountMismatch {
            left: self.source_path.display().to_string(),
            left_count,
            right: self.target_path.display().to_string(),
            right_count,
        }
    }
}

fn read_one_line(
    reader: &mut BufReader<File>,
    path: &Path,
    line_index: u64,
) -> Result<Option<String>> {
    let mut buf = String::new();
    match reader.read_line(&mut buf) {
        Ok(0) => Ok(None),
        Ok(_) => {
            if buf.ends_with('\n') {
                buf.pop();
            }
            if buf.ends_with('\r') {
                buf.pop();
            }
            Ok(Some(buf))
        }
        Err(e) if e.kind() == std::io::ErrorKind::InvalidData => Err(Error::Encoding {
            path: path.to_path_buf(),
            line: line_index as usize + 1,
        }),
        Err(e) => Err(Error::io(path, e)),
    }
}

impl Iterator for PairReader {
    type Item = Result<SentencePair>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        let src = match read_one_line(&mut self.source, &self.source_path, self.next_id) {
            Ok(v) => v,
            Err(e) => {
                self.done = true;
                return Some(Err(e));
            }
        };
        let tgt = match read_one_line(&mut self.target, &self.target_path, self.next_id) {
            Ok(v) => v,
            Err(e) => {
                self.done = true;
                return Some(Err(e));
            }
        };
        match (src, tgt) {
            (Some(source), Some(target)) => {
                let id = self.next_id;
                self.next_id += 1;
                Some(Ok(SentencePair { id, source, target }))
            }
            (None, None) => {
                self.done = true;
                None
            }
            (None, Some(_)) => {
                self.done = true;
                Some(Err(self.mismatch(true)))
            }
            (Some(_), None) => {
                self.done = true;
                Some(Err(self.mismatch(false)))
            }
        }
    }
}

/// Read a whole line-oriented file, stripping LF/CRLF endings.
pub fn read_lines(path: &Path) -> Result<Vec<String>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = BufReader::new(file);
    let mut lines = Vec::new();
    loop {
        match read_one_line(&mut reader, path, lines.len() as u64)? {
            Some(line) => lines.push(line),
            None => break,
        }
    }
    Ok(lines)
}

/// Write lines LF-terminated and return the sha256 hex digest of the bytes.
pub fn write_lines<'a, I>(path: &Path, lines: I) -> Result<String>
where
    I: Iterator<Item = &'a str>,
{
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut writer = BufWriter::new(file);
    let mut hasher = Sha256::new();
    for line in lines {
        writer
            .write_all(line.as_bytes())
            .and_then(|_| writer.write_all(b"\n"))
            .map_err(|e| Error::io(path, e))?;
        hasher.update(line.as_bytes());
        hasher.update(b"\n");
    }
    writer.flush().map_err(|e| Error::io(path, e))?;
    Ok(hex(&hasher.finalize()))
}

/// sha256 hex digest of a file's contents.
pub fn sha256_file(path: &Path) -> Result<String> {
    let mut file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut hasher = Sha256::new();
    std::io::copy(&mut file, &mut hasher).map_err(|e| Error::io(path, e))?;
    Ok(hex(&hasher.finalize()))
}

fn hex(bytes: &[u8]) -> String {
    let mut out = String::with_capacity(bytes.len() * 2);
    for b in bytes {
        out.push_str(&format!("{b:02x}"));
    }
    out
}

/// Read three line-aligned files as APE triplets.
pub fn read_ape_triplets(
    source_path: &Path,
    mt_path: &Path,
    corrected_path: &Path,
) -> Result<Vec<ApeTriplet>> {
    let sources = read_lines(source_path)?;
    let mts = read_lines(mt_path)?;
    let corrected = read_lines(corrected_path)?;
    if sources.len() != mts.len() {
        return Err(Error::LineCountMismatch {
            left: source_path.display().to_string(),
            left_count: sources.len(),
            right: mt_path.display().to_string(),
            right_count: mts.len(),
        });
    }
    if sources.len() != corrected.len() {
        return Err(Error::LineCountMismatch {
            left: source_path.display().to_string(),
            left_count: sources.len(),
            right: corrected_path.display().to_string(),
            right_count: corrected.len(),
        });
    }
    Ok(sources
        .into_iter()
        .zip(mts)
        .zip(corrected)
        .enumerate()
        .map(|(id, ((source, mt_output), corrected))| ApeTriplet {
            id: id as u64,
            source,
            mt_output,
            corrected,
        })
        .collect())
}

/// Write APE triplets as three line-aligned files.
pub fn write_ape_triplets(
    triplets: &[ApeTriplet],
    source_path: &Path,
    mt_path: &Path,
    corrected_path: &Path,
) -> Result<()> {
    write_lines(source_path, triplets.iter().map(|t| t.source.as_str()))?;
    write_lines(mt_path, triplets.iter().map(|t| t.mt_output.as_str()))?;
    write_lines(corrected_path, triplets.iter().map(|t| t.corrected.as_str()))?;
    Ok(())
}
