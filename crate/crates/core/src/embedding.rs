//! Sentence embeddings: precomputed stores on disk, a hashed random
//! fallback embedder, and the product / absolute-difference features.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::text::{normalize, tokenize};

pub const DEFAULT_EMBEDDING_DIM: usize = 4800;
pub const BINARY_MAGIC: &[u8; 6] = b"STVEC1";
pub const TEXT_MAGIC: &str = "STVEC-TXT";

#[derive(Debug, Clone, PartialEq)]
pub struct SentenceEmbedding(pub Vec<f64>);

impl SentenceEmbedding {
    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|x| x * x).sum::<f64>().sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EmbeddingSource {
    File,
    Fallback,
}

/// Vectors keyed by normalized text (tokens joined by single spaces).
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingStore {
    dim: usize,
    entries: HashMap<String, SentenceEmbedding>,
    source: EmbeddingSource,
}

impl EmbeddingStore {
    pub fn new(dim: usize) -> Self {
        EmbeddingStore {
            dim,
            entries: HashMap::new(),
            source: EmbeddingSource::File,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn source(&self) -> EmbeddingSource {
        self.source
    }

    pub fn insert(&mut self, key: impl Into<String>, embedding: SentenceEmbedding) -> Result<()> {
        let key = key.into();
        if embedding.dim() != self.dim {
            return Err(Error::Format(format!(
                "embedding for `{key}` has dimension {}, store expects {}",
                embedding.dim(),
                self.dim
            )));
        }
        if embedding.0.iter().any(|x| !x.is_finite()) {
            return Err(Error::Format(format!("embedding for `{key}` has non-finite entries")));
        }
        if self.entries.contains_key(&key) {
            return Err(Error::Format(format!("duplicate embedding key `{key}`")));
        }
        self.entries.insert(key, embedding);
        Ok(())
    }

    /// Exact lookup on an already-normalized key.
    pub fn get(&self, key: &str) -> Option<&SentenceEmbedding> {
        self.entries.get(key)
    }

    /// Lookup by raw text, normalized first.
    pub fn lookup(&self, text: &str) -> Option<&SentenceEmbedding> {
        self.entries.get(&normalize(text))
    }

    fn sorted_keys(&self) -> Vec<&String> {
        let mut keys: Vec<&String> = self.entries.keys().collect();
        keys.sort();
        keys
    }

    pub fn to_binary(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(BINARY_MAGIC);
        out.extend_from_slice(&(self.entries.len() as u32).to_le_bytes());
        out.extend_from_slice(&(self.dim as u32).to_le_bytes());
        for key in self.sorted_keys() {
            out.extend_from_slice(&(key.len() as u32).to_le_bytes());
            out.extend_from_slice(key.as_bytes());
            for &x in &self.entries[key].0 {
                out.extend_from_slice(&(x as f32).to_le_bytes());
            }
        }
        out
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("{TEXT_MAGIC}\t{}\n", self.dim);
        for key in self.sorted_keys() {
            let values: Vec<String> = self.entries[key].0.iter().map(|x| x.to_string()).collect();
            out.push_str(key);
            out.push('\t');
            out.push_str(&values.join(" "));
            out.push('\n');
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.starts_with(BINARY_MAGIC) {
            parse_binary(bytes)
        } else if bytes.starts_with(TEXT_MAGIC.as_bytes()) {
            let text = std::str::from_utf8(bytes).map_err(|_| Error::Format("text embedding file is not UTF-8".into()))?;
            parse_text(text)
        } else {
            Err(Error::Format("unrecognized embedding file magic".into()))
        }
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Format(format!("truncated embedding file while reading {what}")))?;
        let slice = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(slice)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }
}

fn parse_binary(bytes: &[u8]) -> Result<EmbeddingStore> {
    let mut cur = Cursor { bytes, pos: BINARY_MAGIC.len() };
    let count = cur.u32("record count")? as usize;
    let dim = cur.u32("dimension")? as usize;
    let mut store = EmbeddingStore::new(dim);
    for _ in 0..count {
        let key_len = cur.u32("key length")? as usize;
        let key = std::str::from_utf8(cur.take(key_len, "key")?)
            .map_err(|_| Error::Format("embedding key is not UTF-8".into()))?
            .to_string();
        let raw = cur.take(dim * 4, &format!("vector for `{key}`"))?;
        let values = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect();
        store.insert(key, SentenceEmbedding(values))?;
    }
    if cur.pos != bytes.len() {
        return Err(Error::Format(format!(
            "{} trailing bytes after {count} embedding records",
            bytes.len() - cur.pos
        )));
    }
    Ok(store)
}

fn parse_text(text: &str) -> Result<EmbeddingStore> {
    let mut lines = text.lines();
    let header = lines.next().unwrap_or_default();
    let dim = match header.split('\t').collect::<Vec<_>>().as_slice() {
        [TEXT_MAGIC, d] => d
            .trim()
            .parse::<usize>()
            .map_err(|_| Error::Format(format!("bad embedding dimension `{d}`")))?,
        _ => return Err(Error::Format(format!("bad embedding header `{header}`"))),
    };
    let mut store = EmbeddingStore::new(dim);
    for line in lines.filter(|l| !l.is_empty()) {
        let (key, values) = line
            .split_once('\t')
            .ok_or_else(|| Error::Format(format!("embedding line without tab: `{line}`")))?;
        let values = values
            .split_ascii_whitespace()
            .map(|v| v.parse::<f64>())
            .collect::<Result<Vec<f64>, _>>()
            .map_err(|_| Error::Format(format!("bad float in embedding for `{key}`")))?;
        store.insert(key, SentenceEmbedding(values))?;
    }
    Ok(store)
}

/// Reads either the binary (`STVEC1`) or text (`STVEC-TXT`) format.
pub fn load_embeddings(path: &Path) -> Result<EmbeddingStore> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    EmbeddingStore::from_bytes(&bytes)
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn token_seed(token: &str, seed: u64) -> u64 {
    let mut h = FNV_OFFSET;
    for b in seed.to_le_bytes().iter().chain(token.as_bytes()) {
        h ^= u64::from(*b);
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

fn token_vector(token: &str, dim: usize, seed: u64, out: &mut [f64]) {
    let mut rng = ChaCha8Rng::seed_from_u64(token_seed(token, seed));
    let mut norm = 0.0;
    for x in out.iter_mut() {
        *x = rng.random_range(-1.0..1.0);
        norm += *x * *x;
    }
    let norm = norm.sqrt();
    if norm > 0.0 {
        out.iter_mut().for_each(|x| *x /= norm);
    }
    debug_assert_eq!(out.len(), dim);
}

/// Hashed random-projection embedding: each token maps to a unit vector
/// drawn from ChaCha8 seeded with FNV-1a(seed, token); the sentence vector
/// is the normalized sum. Empty text maps to the zero vector.
pub fn fallback_embed(text: &str, dim: usize, seed: u64) -> SentenceEmbedding {
    let mut sum = vec![0.0; dim];
    let mut scratch = vec![0.0; dim];
    let tokens = tokenize(text);
    for token in tokens.iter() {
        token_vector(token, dim, seed, &mut scratch);
        sum.iter_mut().zip(&scratch).for_each(|(s, x)| *s += x);
    }
    let norm = sum.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        sum.iter_mut().for_each(|x| *x /= norm);
    }
    SentenceEmbedding(sum)
}

/// Where sentence vectors come from during featurization.
#[derive(Debug, Clone)]
pub enum Embedder {
    Store(EmbeddingStore),
    Fallback { dim: usize, seed: u64 },
}

impl Embedder {
    pub fn dim(&self) -> usize {
        match self {
            Embedder::Store(s) => s.dim(),
            Embedder::Fallback { dim, .. } => *dim,
        }
    }

    pub fn embed(&self, text: &str) -> Result<SentenceEmbedding> {
        match self {
            Embedder::Store(store) => {
                let key = normalize(text);
                store.get(&key).cloned().ok_or(Error::MissingEmbedding(key))
            }
            Embedder::Fallback { dim, seed } => Ok(fallback_embed(text, *dim, *seed)),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NeuralFeatures {
    pub product: Vec<f64>,
    pub abs_difference: Vec<f64>,
}

impl NeuralFeatures {
    /// Product block followed by absolute-difference block.
    pub fn concat(&self) -> Vec<f64> {
        let mut out = self.product.clone();
        out.extend_from_slice(&self.abs_difference);
        out
    }
}

/// Component-wise product and component-wise absolute difference.
pub fn neural_features(body: &SentenceEmbedding, headline: &SentenceEmbedding) -> Result<NeuralFeatures> {
    if body.dim() != headline.dim() {
        return Err(Error::Parameter(format!(
            "embedding dimensions differ: {} vs {}",
            body.dim(),
            headline.dim()
        )));
    }
    let product = body.0.iter().zip(&headline.0).map(|(u, v)| u * v).collect();
    let abs_difference = body.0.iter().zip(&headline.0).map(|(u, v)| (u - v).abs()).collect();
    Ok(NeuralFeatures { product, abs_difference })
}
