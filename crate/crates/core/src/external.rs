//! The 50-slot hand-crafted feature block.
//!
//! | slots  | content                                                    |
//! |--------|------------------------------------------------------------|
//! | 0-14   | char n-gram overlap, headline vs body, n = 2..16           |
//! | 15-29  | same, against the first 256 normalized body characters     |
//! | 30-34  | word n-gram overlap, n = 2..6                              |
//! | 35-39  | same, against the first 256 normalized body characters     |
//! | 40     | IDF-weighted headline coverage                             |
//! | 41     | TF-IDF cosine similarity                                   |
//! | 42, 43 | headline / body refuting-word parity                       |
//! | 44-49  | core refuting-word counts in the headline, clipped at 5    |

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use crate::corpus::StancePair;
use crate::error::{Error, Result};
use crate::statistical::Vocabulary;
use crate::text::{self, tokenize, TokenSequence, CHAR_NGRAM_RANGE, WORD_NGRAM_RANGE};

pub const EXTERNAL_DIM: usize = 50;
pub const EARLY_BODY_CHARS: usize = 256;
pub const CORE_LEXICON_SIZE: usize = 6;
pub const REFUTING_COUNT_CAP: f64 = 5.0;

pub const NGRAM_BLOCK_DIM: usize = 40;
pub const TFIDF_SLOT: usize = 40;
pub const COSINE_SLOT: usize = 41;
pub const HEADLINE_POLARITY_SLOT: usize = 42;
pub const BODY_POLARITY_SLOT: usize = 43;
pub const REFUTING_SLOTS: std::ops::Range<usize> = 44..50;

pub const DEFAULT_REFUTING_WORDS: [&str; 15] = [
    "fake", "fraud", "hoax", "false", "deny", "denies", "not", "despite", "nope", "doubt", "doubts",
    "bogus", "debunk", "pranks", "retract",
];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PolarityLexicon {
    words: Vec<String>,
}

impl Default for PolarityLexicon {
    fn default() -> Self {
        PolarityLexicon {
            words: DEFAULT_REFUTING_WORDS.iter().map(|w| w.to_string()).collect(),
        }
    }
}

impl PolarityLexicon {
    pub fn new<S: Into<String>>(words: impl IntoIterator<Item = S>) -> Result<Self> {
        let words: Vec<String> = words.into_iter().map(Into::into).collect();
        if words.len() < CORE_LEXICON_SIZE {
            return Err(Error::Format(format!(
                "lexicon needs at least {CORE_LEXICON_SIZE} words, got {}",
                words.len()
            )));
        }
        let mut seen = HashSet::new();
        for w in &words {
            if w.is_empty() || w.chars().any(|c| !(c.is_ascii_lowercase() || c.is_ascii_digit())) {
                return Err(Error::Format(format!("lexicon word `{w}` is not a lowercase token")));
            }
            if !seen.insert(w.as_str()) {
                return Err(Error::Format(format!("duplicate lexicon word `{w}`")));
            }
        }
        Ok(PolarityLexicon { words })
    }

    /// One word per line; `#` lines and blank lines are skipped.
    pub fn parse(text: &str) -> Result<Self> {
        Self::new(
            text.lines()
                .map(str::trim)
                .filter(|l| !l.is_empty() && !l.starts_with('#')),
        )
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn core(&self) -> &[String] {
        &self.words[..CORE_LEXICON_SIZE]
    }

    fn contains(&self, token: &str) -> bool {
        self.words.iter().any(|w| w == token)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExternalFeatures(pub [f64; EXTERNAL_DIM]);

impl ExternalFeatures {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

fn early_window(normalized_body: &str) -> &str {
    // ASCII, so any byte offset is a char boundary.
    &normalized_body[..normalized_body.len().min(EARLY_BODY_CHARS)]
}

/// Char and word n-gram overlap ratios with the headline as the query.
pub fn ngram_block(pair: &StancePair) -> [f64; NGRAM_BLOCK_DIM] {
    let headline = tokenize(&pair.headline);
    let body = tokenize(&pair.body);
    ngram_block_tokens(&headline, &body)
}

fn ngram_block_tokens(headline: &TokenSequence, body: &TokenSequence) -> [f64; NGRAM_BLOCK_DIM] {
    let head_text = headline.normalized();
    let body_text = body.normalized();
    let early_text = early_window(&body_text);
    let early_tokens = tokenize(early_text);

    let mut out = [0.0; NGRAM_BLOCK_DIM];
    let chars = CHAR_NGRAM_RANGE.count();
    let words = WORD_NGRAM_RANGE.count();
    for (k, n) in CHAR_NGRAM_RANGE.enumerate() {
        out[k] = text::char_overlap_normalized(&head_text, &body_text, n);
        out[chars + k] = text::char_overlap_normalized(&head_text, early_text, n);
    }
    for (k, n) in WORD_NGRAM_RANGE.enumerate() {
        out[2 * chars + k] = text::word_overlap(headline.tokens(), body.tokens(), n);
        out[2 * chars + words + k] = text::word_overlap(headline.tokens(), early_tokens.tokens(), n);
    }
    out
}

/// IDF-weighted share of the headline's distinct in-vocabulary words that
/// also appear in the body.
pub fn weighted_tfidf_score(pair: &StancePair, vocab: &Vocabulary) -> f64 {
    weighted_tfidf_tokens(&tokenize(&pair.headline), &tokenize(&pair.body), vocab)
}

fn weighted_tfidf_tokens(headline: &TokenSequence, body: &TokenSequence, vocab: &Vocabulary) -> f64 {
    let body: HashSet<&str> = body.iter().collect();
    let distinct: HashSet<&str> = headline.iter().filter(|t| vocab.index_of(t).is_some()).collect();
    let mut covered = 0.0;
    let mut total = 0.0;
    // Sorted so the floating-point sum is order-independent of hashing.
    let mut distinct: Vec<&str> = distinct.into_iter().collect();
    distinct.sort_unstable();
    for token in distinct {
        let idf = vocab.idf(token);
        total += idf;
        if body.contains(token) {
            covered += idf;
        }
    }
    if total == 0.0 {
        0.0
    } else {
        covered / total
    }
}

fn tfidf_weights(tokens: &TokenSequence, vocab: &Vocabulary) -> Vec<(usize, f64)> {
    let mut counts: Vec<(usize, f64)> = Vec::new();
    let mut indices: Vec<usize> = tokens.iter().filter_map(|t| vocab.index_of(t)).collect();
    indices.sort_unstable();
    for i in indices {
        match counts.last_mut() {
            Some((last, c)) if *last == i => *c += 1.0,
            _ => counts.push((i, 1.0)),
        }
    }
    for (i, c) in counts.iter_mut() {
        *c *= vocab.idf(vocab.token(*i).expect("index from vocabulary"));
    }
    counts
}

/// Cosine similarity of the IDF-weighted TF vectors of headline and body.
pub fn tfidf_cosine(pair: &StancePair, vocab: &Vocabulary) -> f64 {
    tfidf_cosine_tokens(&tokenize(&pair.headline), &tokenize(&pair.body), vocab)
}

fn tfidf_cosine_tokens(headline: &TokenSequence, body: &TokenSequence, vocab: &Vocabulary) -> f64 {
    let a = tfidf_weights(headline, vocab);
    let b = tfidf_weights(body, vocab);
    let norm = |v: &[(usize, f64)]| v.iter().map(|(_, x)| x * x).sum::<f64>().sqrt();
    let (na, nb) = (norm(&a), norm(&b));
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    // Both sides are sorted by index: merge.
    let (mut i, mut j, mut dot) = (0, 0, 0.0);
    while i < a.len() && j < b.len() {
        match a[i].0.cmp(&b[j].0) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                dot += a[i].1 * b[j].1;
                i += 1;
                j += 1;
            }
        }
    }
    (dot / (na * nb)).clamp(0.0, 1.0)
}

/// Parity of refuting-word occurrences: 1 when odd, 0 when even.
pub fn polarity(tokens: &TokenSequence, lexicon: &PolarityLexicon) -> f64 {
    let count = tokens.iter().filter(|t| lexicon.contains(t)).count();
    (count % 2) as f64
}

pub fn refuting_block(headline: &TokenSequence, lexicon: &PolarityLexicon) -> [f64; CORE_LEXICON_SIZE] {
    let mut out = [0.0; CORE_LEXICON_SIZE];
    for (slot, word) in out.iter_mut().zip(lexicon.core()) {
        let count = headline.iter().filter(|t| t == word).count() as f64;
        *slot = count.min(REFUTING_COUNT_CAP);
    }
    out
}

pub fn external_features(pair: &StancePair, vocab: &Vocabulary, lexicon: &PolarityLexicon) -> ExternalFeatures {
    let headline = tokenize(&pair.headline);
    let body = tokenize(&pair.body);

    let mut out = [0.0; EXTERNAL_DIM];
    out[..NGRAM_BLOCK_DIM].copy_from_slice(&ngram_block_tokens(&headline, &body));
    out[TFIDF_SLOT] = weighted_tfidf_tokens(&headline, &body, vocab);
    out[COSINE_SLOT] = tfidf_cosine_tokens(&headline, &body, vocab);
    out[HEADLINE_POLARITY_SLOT] = polarity(&headline, lexicon);
    out[BODY_POLARITY_SLOT] = polarity(&body, lexicon);
    out[REFUTING_SLOTS].copy_from_slice(&refuting_block(&headline, lexicon));
    ExternalFeatures(out)
}
