//! FNC-1 style corpus ingestion: a stances CSV (`Headline`, `Body ID`,
//! `Stance`) joined against a bodies CSV (`Body ID`, `articleBody`).

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs::File;
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use crate::error::{Error, Result};

pub const HEADLINE_COLUMN: &str = "Headline";
pub const BODY_ID_COLUMN: &str = "Body ID";
pub const STANCE_COLUMN: &str = "Stance";
pub const BODY_TEXT_COLUMN: &str = "articleBody";

/// The four stance classes, in the fixed label order used by every
/// matrix, probability vector and tie-break in the crate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Stance {
    Agree,
    Disagree,
    Discuss,
    Unrelated,
}

impl Stance {
    pub const ALL: [Stance; 4] = [
        Stance::Agree,
        Stance::Disagree,
        Stance::Discuss,
        Stance::Unrelated,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<Stance> {
        Stance::ALL.get(index).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Stance::Agree => "agree",
            Stance::Disagree => "disagree",
            Stance::Discuss => "discuss",
            Stance::Unrelated => "unrelated",
        }
    }

    /// Agree, disagree and discuss all count as "related" for the binary
    /// half of the FNC score.
    pub fn is_related(self) -> bool {
        self != Stance::Unrelated
    }
}

impl fmt::Display for Stance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseStanceError(pub String);

impl fmt::Display for ParseStanceError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "unknown stance label `{}`", self.0)
    }
}

impl std::error::Error for ParseStanceError {}

impl FromStr for Stance {
    type Err = ParseStanceError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "agree" => Ok(Stance::Agree),
            "disagree" => Ok(Stance::Disagree),
            "discuss" => Ok(Stance::Discuss),
            "unrelated" => Ok(Stance::Unrelated),
            _ => Err(ParseStanceError(s.to_string())),
        }
    }
}

/// One headline/body example. `stance` is `None` for unlabeled input.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StancePair {
    pub headline: String,
    pub body_id: u64,
    pub body: Arc<str>,
    pub stance: Option<Stance>,
}

impl StancePair {
    pub fn new(headline: impl Into<String>, body_id: u64, body: &str, stance: Option<Stance>) -> Self {
        StancePair {
            headline: headline.into(),
            body_id,
            body: Arc::from(body),
            stance,
        }
    }

    /// Identity of a pair in caches and prediction files.
    pub fn key(&self) -> String {
        format!("{}\t{}", self.body_id, self.headline)
    }
}

pub type LabelHistogram = BTreeMap<Stance, usize>;

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Corpus {
    pairs: Vec<StancePair>,
    bodies: BTreeMap<u64, Arc<str>>,
}

impl Corpus {
    /// Builds a corpus, checking that every pair's body id resolves.
    pub fn new(pairs: Vec<StancePair>, bodies: BTreeMap<u64, Arc<str>>) -> Result<Self> {
        for pair in &pairs {
            if !bodies.contains_key(&pair.body_id) {
                return Err(Error::Join(pair.body_id));
            }
        }
        Ok(Corpus { pairs, bodies })
    }

    pub fn pairs(&self) -> &[StancePair] {
        &self.pairs
    }

    pub fn bodies(&self) -> &BTreeMap<u64, Arc<str>> {
        &self.bodies
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn label_histogram(&self) -> LabelHistogram {
        label_histogram(self)
    }

    pub fn golds(&self) -> Option<Vec<Stance>> {
        self.pairs.iter().map(|p| p.stance).collect()
    }

    /// Writes the corpus back out as a stances/bodies CSV pair.
    pub fn write_csv(&self, stances_path: &Path, bodies_path: &Path) -> Result<()> {
        let mut stances = csv::Writer::from_path(stances_path).map_err(|e| Error::csv(stances_path, e))?;
        stances
            .write_record([HEADLINE_COLUMN, BODY_ID_COLUMN, STANCE_COLUMN])
            .map_err(|e| Error::csv(stances_path, e))?;
        for pair in &self.pairs {
            let id = pair.body_id.to_string();
            let label = pair.stance.map(Stance::as_str).unwrap_or("");
            stances
                .write_record([pair.headline.as_str(), id.as_str(), label])
                .map_err(|e| Error::csv(stances_path, e))?;
        }
        stances.flush().map_err(|e| Error::io(stances_path, e))?;

        let mut bodies = csv::Writer::from_path(bodies_path).map_err(|e| Error::csv(bodies_path, e))?;
        bodies
            .write_record([BODY_ID_COLUMN, BODY_TEXT_COLUMN])
            .map_err(|e| Error::csv(bodies_path, e))?;
        for (id, text) in &self.bodies {
            bodies
                .write_record([id.to_string().as_str(), text])
                .map_err(|e| Error::csv(bodies_path, e))?;
        }
        bodies.flush().map_err(|e| Error::io(bodies_path, e))?;
        Ok(())
    }
}

pub fn label_histogram(corpus: &Corpus) -> LabelHistogram {
    let mut hist: LabelHistogram = Stance::ALL.iter().map(|&s| (s, 0)).collect();
    for stance in corpus.pairs.iter().filter_map(|p| p.stance) {
        *hist.entry(stance).or_default() += 1;
    }
    hist
}

fn open_reader(path: &Path) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new().has_headers(true).from_reader(file))
}

fn column(headers: &csv::StringRecord, path: &Path, name: &str) -> Result<usize> {
    headers
        .iter()
        .position(|h| h.trim() == name)
        .ok_or_else(|| Error::Schema {
            path: path.to_path_buf(),
            column: name.to_string(),
        })
}

fn optional_column(headers: &csv::StringRecord, name: &str) -> Option<usize> {
    headers.iter().position(|h| h.trim() == name)
}

fn parse_body_id(path: &Path, row: usize, raw: &str) -> Result<u64> {
    raw.trim().parse().map_err(|_| Error::Row {
        path: path.to_path_buf(),
        row,
        message: format!("invalid body id `{raw}`"),
    })
}

fn load_bodies(path: &Path) -> Result<BTreeMap<u64, Arc<str>>> {
    let mut reader = open_reader(path)?;
    let headers = reader.headers().map_err(|e| Error::csv(path, e))?.clone();
    let id_col = column(&headers, path, BODY_ID_COLUMN)?;
    let text_col = column(&headers, path, BODY_TEXT_COLUMN)?;

    let mut bodies = BTreeMap::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| Error::csv(path, e))?;
        let id = parse_body_id(path, row, &record[id_col])?;
        let text = &record[text_col];
        if text.trim().is_empty() {
            return Err(Error::Row {
                path: path.to_path_buf(),
                row,
                message: format!("body {id} is empty"),
            });
        }
        if bodies.insert(id, Arc::from(text)).is_some() {
            return Err(Error::Row {
                path: path.to_path_buf(),
                row,
                message: format!("duplicate body id {id}"),
            });
        }
    }
    Ok(bodies)
}

fn load(stances_path: &Path, bodies_path: &Path, require_labels: bool) -> Result<Corpus> {
    let bodies = load_bodies(bodies_path)?;

    let mut reader = open_reader(stances_path)?;
    let headers = reader.headers().map_err(|e| Error::csv(stances_path, e))?.clone();
    let headline_col = column(&headers, stances_path, HEADLINE_COLUMN)?;
    let id_col = column(&headers, stances_path, BODY_ID_COLUMN)?;
    let stance_col = if require_labels {
        Some(column(&headers, stances_path, STANCE_COLUMN)?)
    } else {
        optional_column(&headers, STANCE_COLUMN)
    };

    let mut pairs = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| Error::csv(stances_path, e))?;
        let headline = &record[headline_col];
        if headline.trim().is_empty() {
            return Err(Error::Row {
                path: stances_path.to_path_buf(),
                row,
                message: "empty headline".into(),
            });
        }
        let body_id = parse_body_id(stances_path, row, &record[id_col])?;
        let body = bodies.get(&body_id).ok_or(Error::Join(body_id))?.clone();
        let stance = match stance_col.map(|c| &record[c]) {
            Some(raw) if require_labels || !raw.trim().is_empty() => {
                Some(raw.parse::<Stance>().map_err(|_| Error::Label {
                    path: stances_path.to_path_buf(),
                    row,
                    label: raw.to_string(),
                })?)
            }
            _ => None,
        };
        pairs.push(StancePair {
            headline: headline.to_string(),
            body_id,
            body,
            stance,
        });
    }
    Ok(Corpus { pairs, bodies })
}

/// Loads a labeled corpus. Row order follows the stances file.
pub fn load_corpus(stances_path: impl AsRef<Path>, bodies_path: impl AsRef<Path>) -> Result<Corpus> {
    load(stances_path.as_ref(), bodies_path.as_ref(), true)
}

/// Like [`load_corpus`] but the `Stance` column may be absent or blank.
pub fn load_unlabeled_corpus(stances_path: impl AsRef<Path>, bodies_path: impl AsRef<Path>) -> Result<Corpus> {
    load(stances_path.as_ref(), bodies_path.as_ref(), false)
}

/// SplitMix64. Used for the body shuffle so that splits are reproducible
/// from this definition alone, independent of any RNG crate's internals.
#[derive(Debug, Clone)]
pub struct SplitMix64(u64);

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        SplitMix64(seed)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.0 = self.0.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
}

/// Splits by body id so that no body appears on both sides.
///
/// Distinct body ids are sorted ascending and Fisher-Yates shuffled
/// (`for i in (1..n).rev() { swap(i, rng.next_u64() % (i + 1)) }`) with a
/// [`SplitMix64`] seeded by `seed`. Walking the shuffled ids in order, a
/// body goes to validation when adding its pairs moves the validation pair
/// count strictly closer to `round(fraction * len)`.
///
/// Returns `(train, validation)`.
pub fn split(corpus: &Corpus, validation_fraction: f64, seed: u64) -> Result<(Corpus, Corpus)> {
    if corpus.is_empty() {
        return Err(Error::Empty("cannot split an empty corpus".into()));
    }
    if !(validation_fraction > 0.0 && validation_fraction < 1.0) {
        return Err(Error::Parameter(format!(
            "validation fraction must lie in (0, 1), got {validation_fraction}"
        )));
    }

    let mut pair_counts: BTreeMap<u64, usize> = BTreeMap::new();
    for pair in &corpus.pairs {
        *pair_counts.entry(pair.body_id).or_default() += 1;
    }
    let mut ids: Vec<u64> = pair_counts.keys().copied().collect();
    let mut rng = SplitMix64::new(seed);
    for i in (1..ids.len()).rev() {
        let j = (rng.next_u64() % (i as u64 + 1)) as usize;
        ids.swap(i, j);
    }

    let target = (validation_fraction * corpus.len() as f64).round() as i64;
    let mut held: i64 = 0;
    let mut validation_ids = BTreeSet::new();
    for id in ids {
        let count = pair_counts[&id] as i64;
        if (held + count - target).abs() < (held - target).abs() {
            held += count;
            validation_ids.insert(id);
        }
    }

    if validation_ids.is_empty() {
        return Err(Error::DegenerateSplit(format!(
            "fraction {validation_fraction} leaves no bodies in validation"
        )));
    }
    if validation_ids.len() == pair_counts.len() {
        return Err(Error::DegenerateSplit(format!(
            "fraction {validation_fraction} leaves no bodies in training"
        )));
    }

    let side = |in_validation: bool| {
        let pairs: Vec<StancePair> = corpus
            .pairs
            .iter()
            .filter(|p| validation_ids.contains(&p.body_id) == in_validation)
            .cloned()
            .collect();
        let bodies = corpus
            .bodies
            .iter()
            .filter(|(id, _)| pair_counts.contains_key(id) && validation_ids.contains(id) == in_validation)
            .map(|(id, text)| (*id, text.clone()))
            .collect();
        Corpus { pairs, bodies }
    };
    Ok((side(false), side(true)))
}
