//! Per-pair feature bundles, batch featurization and the `FNCFEAT1` cache.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use ndarray::Array2;

use crate::corpus::{Corpus, Stance, StancePair};
use crate::embedding::{neural_features, Embedder, SentenceEmbedding};
use crate::error::{Error, Result};
use crate::external::{external_features, PolarityLexicon, EXTERNAL_DIM};
use crate::par::{self, Execution};
use crate::statistical::{statistical_feature, Vocabulary};
use crate::text::normalize;

pub const CACHE_MAGIC: &[u8; 8] = b"FNCFEAT1";
const NO_LABEL: u8 = 0xFF;

/// One feature family, each feeding its own network branch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Block {
    Neural,
    Statistical,
    External,
}

impl Block {
    pub const ALL: [Block; 3] = [Block::Neural, Block::Statistical, Block::External];

    pub fn name(self) -> &'static str {
        match self {
            Block::Neural => "neural",
            Block::Statistical => "stat",
            Block::External => "ext",
        }
    }
}

impl fmt::Display for Block {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Block {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "neural" => Ok(Block::Neural),
            "stat" | "statistical" => Ok(Block::Statistical),
            "ext" | "external" => Ok(Block::External),
            other => Err(Error::Parameter(format!("unknown feature branch `{other}`"))),
        }
    }
}

/// Enabled blocks in canonical order with their widths.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockLayout(Vec<(Block, usize)>);

impl BlockLayout {
    pub fn new(mut blocks: Vec<(Block, usize)>) -> Result<Self> {
        blocks.sort_by_key(|(b, _)| *b);
        if blocks.is_empty() {
            return Err(Error::Parameter("at least one feature branch must be enabled".into()));
        }
        if blocks.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(Error::Parameter("feature branch listed twice".into()));
        }
        Ok(BlockLayout(blocks))
    }

    /// Widths implied by an embedding dimension and vocabulary capacity.
    pub fn for_blocks(blocks: &[Block], embedding_dim: usize, vocab_capacity: usize) -> Result<Self> {
        Self::new(
            blocks
                .iter()
                .map(|&b| {
                    let dim = match b {
                        Block::Neural => 2 * embedding_dim,
                        Block::Statistical => 2 * vocab_capacity,
                        Block::External => EXTERNAL_DIM,
                    };
                    (b, dim)
                })
                .collect(),
        )
    }

    pub fn blocks(&self) -> impl Iterator<Item = Block> + '_ {
        self.0.iter().map(|(b, _)| *b)
    }

    pub fn entries(&self) -> &[(Block, usize)] {
        &self.0
    }

    pub fn dim(&self, block: Block) -> Option<usize> {
        self.0.iter().find(|(b, _)| *b == block).map(|(_, d)| *d)
    }

    pub fn total(&self) -> usize {
        self.0.iter().map(|(_, d)| d).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureBundle {
    pub key: String,
    /// Blocks in layout order.
    pub blocks: Vec<Vec<f64>>,
    pub gold: Option<Stance>,
}

impl FeatureBundle {
    pub fn block<'a>(&'a self, layout: &BlockLayout, block: Block) -> Option<&'a [f64]> {
        layout
            .blocks()
            .position(|b| b == block)
            .map(|i| self.blocks[i].as_slice())
    }
}

/// Everything needed to turn a pair into a bundle.
pub struct Featurizer<'a> {
    pub layout: BlockLayout,
    pub vocab: &'a Vocabulary,
    pub lexicon: &'a PolarityLexicon,
    pub embedder: &'a Embedder,
}

impl<'a> Featurizer<'a> {
    pub fn new(
        blocks: &[Block],
        vocab: &'a Vocabulary,
        lexicon: &'a PolarityLexicon,
        embedder: &'a Embedder,
    ) -> Result<Self> {
        let layout = BlockLayout::for_blocks(blocks, embedder.dim(), vocab.capacity())?;
        Ok(Featurizer {
            layout,
            vocab,
            lexicon,
            embedder,
        })
    }

    fn embeddings(&self, pairs: &[StancePair], exec: Execution) -> Result<HashMap<String, SentenceEmbedding>> {
        if self.layout.dim(Block::Neural).is_none() {
            return Ok(HashMap::new());
        }
        // Distinct normalized texts, in first-appearance order so that the
        // first missing key reported is deterministic.
        let mut keys: Vec<String> = Vec::new();
        let mut seen = std::collections::HashSet::new();
        for pair in pairs {
            for text in [pair.headline.as_str(), &*pair.body] {
                let key = normalize(text);
                if seen.insert(key.clone()) {
                    keys.push(key);
                }
            }
        }
        let vectors = par::try_map(exec, &keys, |k| self.embedder.embed(k))?;
        Ok(keys.into_iter().zip(vectors).collect())
    }

    fn bundle(&self, pair: &StancePair, embeddings: &HashMap<String, SentenceEmbedding>) -> Result<FeatureBundle> {
        let mut blocks = Vec::with_capacity(self.layout.entries().len());
        for block in self.layout.blocks() {
            let values = match block {
                Block::Neural => {
                    let head = &embeddings[&normalize(&pair.headline)];
                    let body = &embeddings[&normalize(&pair.body)];
                    neural_features(body, head)?.concat()
                }
                Block::Statistical => statistical_feature(pair, self.vocab),
                Block::External => external_features(pair, self.vocab, self.lexicon).0.to_vec(),
            };
            blocks.push(values);
        }
        Ok(FeatureBundle {
            key: pair.key(),
            blocks,
            gold: pair.stance,
        })
    }

    pub fn featurize_pair(&self, pair: &StancePair) -> Result<FeatureBundle> {
        let embeddings = self.embeddings(std::slice::from_ref(pair), Execution::Sequential)?;
        self.bundle(pair, &embeddings)
    }

    /// Featurizes every pair; output order follows the corpus.
    pub fn featurize(&self, corpus: &Corpus, exec: Execution) -> Result<FeatureSet> {
        let embeddings = self.embeddings(corpus.pairs(), exec)?;
        let bundles = par::try_map(exec, corpus.pairs(), |p| self.bundle(p, &embeddings))?;
        Ok(FeatureSet {
            layout: self.layout.clone(),
            bundles,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet {
    pub layout: BlockLayout,
    pub bundles: Vec<FeatureBundle>,
}

impl FeatureSet {
    pub fn len(&self) -> usize {
        self.bundles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bundles.is_empty()
    }

    /// One `[pairs × width]` matrix per block, in layout order.
    pub fn matrices(&self) -> Vec<Array2<f64>> {
        self.layout
            .entries()
            .iter()
            .enumerate()
            .map(|(i, &(_, width))| {
                let mut m = Array2::zeros((self.bundles.len(), width));
                for (mut row, bundle) in m.rows_mut().into_iter().zip(&self.bundles) {
                    row.assign(&ndarray::ArrayView1::from(&bundle.blocks[i]));
                }
                m
            })
            .collect()
    }

    pub fn golds(&self) -> Option<Vec<Stance>> {
        self.bundles.iter().map(|b| b.gold).collect()
    }

    /// Serializes as `FNCFEAT1`: magic, u32 block count, per block
    /// (u8 name length, name, u32 width), u64 record count, then per record
    /// (u32 key length, key, widths' worth of f64, label byte; 255 = none).
    /// All integers and floats little-endian.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(CACHE_MAGIC);
        out.extend_from_slice(&(self.layout.entries().len() as u32).to_le_bytes());
        for (block, width) in self.layout.entries() {
            let name = block.name().as_bytes();
            out.push(name.len() as u8);
            out.extend_from_slice(name);
            out.extend_from_slice(&(*width as u32).to_le_bytes());
        }
        out.extend_from_slice(&(self.bundles.len() as u64).to_le_bytes());
        for bundle in &self.bundles {
            out.extend_from_slice(&(bundle.key.len() as u32).to_le_bytes());
            out.extend_from_slice(bundle.key.as_bytes());
            for value in bundle.blocks.iter().flatten() {
                out.extend_from_slice(&value.to_le_bytes());
            }
            out.push(bundle.gold.map(|s| s.index() as u8).unwrap_or(NO_LABEL));
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(CACHE_MAGIC.len())? != CACHE_MAGIC {
            return Err(Error::Format("not a feature cache (bad magic)".into()));
        }
        let block_count = r.u32()? as usize;
        let mut entries = Vec::with_capacity(block_count);
        for _ in 0..block_count {
            let len = r.take(1)?[0] as usize;
            let name = std::str::from_utf8(r.take(len)?)
                .map_err(|_| Error::Format("feature cache block name is not UTF-8".into()))?;
            let block: Block = name.parse()?;
            entries.push((block, r.u32()? as usize));
        }
        let layout = BlockLayout::new(entries.clone())?;
        if layout.entries() != entries.as_slice() {
            return Err(Error::Format("feature cache blocks out of canonical order".into()));
        }
        let count = r.u64()? as usize;
        let mut bundles = Vec::with_capacity(count.min(1 << 20));
        for _ in 0..count {
            let key_len = r.u32()? as usize;
            let key = std::str::from_utf8(r.take(key_len)?)
                .map_err(|_| Error::Format("feature cache key is not UTF-8".into()))?
                .to_string();
            let mut blocks = Vec::with_capacity(layout.entries().len());
            for &(_, width) in layout.entries() {
                let raw = r.take(width * 8)?;
                blocks.push(
                    raw.chunks_exact(8)
                        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                        .collect(),
                );
            }
            let label = r.take(1)?[0];
            let gold = match label {
                NO_LABEL => None,
                i => Some(
                    Stance::from_index(i as usize)
                        .ok_or_else(|| Error::Format(format!("bad label byte {i} for `{key}`")))?,
                ),
            };
            bundles.push(FeatureBundle { key, blocks, gold });
        }
        if r.pos != bytes.len() {
            return Err(Error::Format("trailing bytes in feature cache".into()));
        }
        Ok(FeatureSet { layout, bundles })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    /// Block widths as recorded in a cache header, without reading records.
    pub fn peek_layout(path: &Path) -> Result<BlockLayout> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        let mut r = Reader { bytes: &bytes, pos: 0 };
        if r.take(CACHE_MAGIC.len())? != CACHE_MAGIC {
            return Err(Error::Format("not a feature cache (bad magic)".into()));
        }
        let n = r.u32()? as usize;
        let mut entries = Vec::new();
        for _ in 0..n {
            let len = r.take(1)?[0] as usize;
            let name = std::str::from_utf8(r.take(len)?).map_err(|_| Error::Format("bad block name".into()))?;
            entries.push((name.parse()?, r.u32()? as usize));
        }
        BlockLayout::new(entries)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Format("truncated feature cache".into()))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

/// Histogram of gold labels in a feature set (unlabeled bundles skipped).
pub fn label_counts(set: &FeatureSet) -> BTreeMap<Stance, usize> {
    let mut out: BTreeMap<Stance, usize> = Stance::ALL.iter().map(|&s| (s, 0)).collect();
    for s in set.bundles.iter().filter_map(|b| b.gold) {
        *out.get_mut(&s).unwrap() += 1;
    }
    out
}
