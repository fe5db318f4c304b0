//! Frequency-capped unigram vocabulary and raw term-frequency vectors.

use std::collections::{BTreeSet, HashMap};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::corpus::{Corpus, StancePair};
use crate::error::{Error, Result};
use crate::text::{tokenize, TokenSequence};

pub const DEFAULT_VOCAB_CAPACITY: usize = 5000;
const VOCAB_MAGIC: &str = "VOCAB1";

/// Token index plus document frequencies. There are no mutating methods:
/// a vocabulary is fixed once built or loaded.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    capacity: usize,
    num_documents: usize,
    tokens: Vec<String>,
    index: HashMap<String, usize>,
    document_frequency: HashMap<String, usize>,
}

impl Vocabulary {
    /// Vector length `V` of every TF vector, even when fewer tokens exist.
    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn num_documents(&self) -> usize {
        self.num_documents
    }

    pub fn index_of(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn token(&self, index: usize) -> Option<&str> {
        self.tokens.get(index).map(String::as_str)
    }

    pub fn document_frequency(&self, token: &str) -> usize {
        self.document_frequency.get(token).copied().unwrap_or(0)
    }

    /// Smoothed inverse document frequency, `ln((N + 1) / (df + 1)) + 1`.
    pub fn idf(&self, token: &str) -> f64 {
        let n = self.num_documents as f64;
        let df = self.document_frequency(token) as f64;
        ((n + 1.0) / (df + 1.0)).ln() + 1.0
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("{VOCAB_MAGIC}\t{}\t{}\n", self.capacity, self.num_documents);
        for (i, token) in self.tokens.iter().enumerate() {
            let _ = writeln!(out, "{token}\t{i}\t{}", self.document_frequency(token));
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| Error::Format("empty vocabulary file".into()))?;
        let fields: Vec<&str> = header.split('\t').collect();
        let (capacity, num_documents) = match fields.as_slice() {
            [magic, v, n] if *magic == VOCAB_MAGIC => (
                v.parse::<usize>().map_err(|_| Error::Format(format!("bad capacity `{v}`")))?,
                n.parse::<usize>().map_err(|_| Error::Format(format!("bad document count `{n}`")))?,
            ),
            _ => return Err(Error::Format(format!("bad vocabulary header `{header}`"))),
        };

        let mut tokens = Vec::new();
        let mut document_frequency = HashMap::new();
        for (line_no, line) in lines.enumerate() {
            let fields: Vec<&str> = line.split('\t').collect();
            let [token, index, df] = fields.as_slice() else {
                return Err(Error::Format(format!("vocabulary line {}: `{line}`", line_no + 2)));
            };
            let index: usize = index
                .parse()
                .map_err(|_| Error::Format(format!("vocabulary line {}: bad index", line_no + 2)))?;
            let df: usize = df
                .parse()
                .map_err(|_| Error::Format(format!("vocabulary line {}: bad frequency", line_no + 2)))?;
            if index != tokens.len() {
                return Err(Error::Format(format!(
                    "vocabulary line {}: index {index} out of order",
                    line_no + 2
                )));
            }
            if token.is_empty() || document_frequency.insert(token.to_string(), df).is_some() {
                return Err(Error::Format(format!(
                    "vocabulary line {}: empty or duplicate token",
                    line_no + 2
                )));
            }
            tokens.push(token.to_string());
        }
        if tokens.len() > capacity {
            return Err(Error::Format(format!(
                "vocabulary holds {} tokens but declares capacity {capacity}",
                tokens.len()
            )));
        }
        let index = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Ok(Vocabulary {
            capacity,
            num_documents,
            tokens,
            index,
            document_frequency,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }
}

/// Keeps the `capacity` most frequent tokens over the training headlines
/// (one per pair) and the distinct bodies, ties broken lexicographically.
/// Each headline and each distinct body is one document for frequencies.
pub fn build_vocabulary(corpus: &Corpus, capacity: usize) -> Result<Vocabulary> {
    if corpus.is_empty() {
        return Err(Error::Empty("cannot build a vocabulary from an empty corpus".into()));
    }
    if capacity == 0 {
        return Err(Error::Parameter("vocabulary capacity must be at least 1".into()));
    }

    let used_bodies: BTreeSet<u64> = corpus.pairs().iter().map(|p| p.body_id).collect();
    let documents = corpus
        .pairs()
        .iter()
        .map(|p| p.headline.as_str())
        .chain(used_bodies.iter().map(|id| &*corpus.bodies()[id]));

    let mut term_counts: HashMap<String, usize> = HashMap::new();
    let mut document_frequency: HashMap<String, usize> = HashMap::new();
    let mut num_documents = 0;
    for doc in documents {
        num_documents += 1;
        let tokens = tokenize(doc);
        let mut seen = BTreeSet::new();
        for token in tokens.iter() {
            *term_counts.entry(token.to_string()).or_insert(0) += 1;
            seen.insert(token);
        }
        for token in seen {
            *document_frequency.entry(token.to_string()).or_insert(0) += 1;
        }
    }
    Ok(select(term_counts, document_frequency, num_documents, capacity))
}

fn select(
    term_counts: HashMap<String, usize>,
    mut document_frequency: HashMap<String, usize>,
    num_documents: usize,
    capacity: usize,
) -> Vocabulary {
    let mut ranked: Vec<(String, usize)> = term_counts.into_iter().collect();
    ranked.sort_by(|(ta, ca), (tb, cb)| cb.cmp(ca).then_with(|| ta.cmp(tb)));
    ranked.truncate(capacity);
    let tokens: Vec<String> = ranked.into_iter().map(|(t, _)| t).collect();
    let index: HashMap<String, usize> = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
    document_frequency.retain(|t, _| index.contains_key(t));
    Vocabulary {
        capacity,
        num_documents,
        tokens,
        index,
        document_frequency,
    }
}

/// Raw term counts over the vocabulary; length is always `vocab.capacity()`.
#[derive(Debug, Clone, PartialEq)]
pub struct TfVector(pub Vec<f64>);

pub fn tf_vector(tokens: &TokenSequence, vocab: &Vocabulary) -> TfVector {
    let mut values = vec![0.0; vocab.capacity()];
    for token in tokens.iter() {
        if let Some(i) = vocab.index_of(token) {
            values[i] += 1.0;
        }
    }
    TfVector(values)
}

/// Headline TF vector followed by body TF vector (`2V` entries).
pub fn statistical_feature(pair: &StancePair, vocab: &Vocabulary) -> Vec<f64> {
    let mut out = tf_vector(&tokenize(&pair.headline), vocab).0;
    out.extend(tf_vector(&tokenize(&pair.body), vocab).0);
    out
}
