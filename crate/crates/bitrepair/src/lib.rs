//! Corpus repair and filtering for machine translation training data.
//!
//! The library turns a large, noisy pseudo-parallel corpus into training
//! data by correcting target sides with automatic post-editing output,
//! keeping whichever side a quality scorer prefers, filtering on quality
//! and embedding similarity, and optionally injecting phrase pairs mined
//! from word alignments. A small BLEU implementation closes the loop for
//! evaluating downstream translations.

pub mod bleu;
pub mod corpus;
pub mod error;
pub mod exec;
pub mod filters;
pub mod pipeline;
pub mod ppi;
pub mod scoring;
pub mod select;

pub use corpus::{Corpus, NormalizationProfile, SentencePair};
pub use error::{Error, Result};
