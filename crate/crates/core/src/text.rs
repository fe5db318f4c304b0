//! Tokenization and n-gram extraction shared by every feature extractor.
//!
//! Normalization is deliberately simple: ASCII-lowercase, keep `[a-z0-9]`
//! runs as tokens, treat everything else as a boundary. No stemming.

use std::collections::{HashMap, HashSet};

use crate::error::{Error, Result};

pub const CHAR_NGRAM_RANGE: std::ops::RangeInclusive<usize> = 2..=16;
pub const WORD_NGRAM_RANGE: std::ops::RangeInclusive<usize> = 2..=6;

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TokenSequence(Vec<String>);

impl TokenSequence {
    pub fn tokens(&self) -> &[String] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Tokens joined by single spaces.
    pub fn normalized(&self) -> String {
        self.0.join(" ")
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.0.iter().map(String::as_str)
    }
}

impl<S: Into<String>> FromIterator<S> for TokenSequence {
    fn from_iter<I: IntoIterator<Item = S>>(iter: I) -> Self {
        TokenSequence(iter.into_iter().map(Into::into).collect())
    }
}

pub fn tokenize(text: &str) -> TokenSequence {
    let mut tokens = Vec::new();
    let mut current = String::new();
    for c in text.chars() {
        let c = c.to_ascii_lowercase();
        if c.is_ascii_lowercase() || c.is_ascii_digit() {
            current.push(c);
        } else if !current.is_empty() {
            tokens.push(std::mem::take(&mut current));
        }
    }
    if !current.is_empty() {
        tokens.push(current);
    }
    TokenSequence(tokens)
}

/// Shorthand for `tokenize(text).normalized()`.
pub fn normalize(text: &str) -> String {
    tokenize(text).normalized()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GramUnit {
    Char,
    Word,
}

/// Counted n-grams. Word grams are keyed by their tokens joined with a
/// single space, which is unambiguous because tokens never contain spaces.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NgramMultiset {
    n: usize,
    unit: GramUnit,
    grams: HashMap<String, usize>,
}

impl NgramMultiset {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn unit(&self) -> GramUnit {
        self.unit
    }

    pub fn grams(&self) -> &HashMap<String, usize> {
        &self.grams
    }

    pub fn count(&self, gram: &str) -> usize {
        self.grams.get(gram).copied().unwrap_or(0)
    }

    pub fn distinct(&self) -> usize {
        self.grams.len()
    }

    pub fn total(&self) -> usize {
        self.grams.values().sum()
    }

    pub fn is_empty(&self) -> bool {
        self.grams.is_empty()
    }
}

fn check_n(n: usize, range: std::ops::RangeInclusive<usize>, what: &str) -> Result<()> {
    if range.contains(&n) {
        Ok(())
    } else {
        Err(Error::Parameter(format!(
            "{what} n-gram size {n} outside [{}, {}]",
            range.start(),
            range.end()
        )))
    }
}

/// Character n-grams of the normalized text, stride 1.
pub fn char_ngrams(text: &str, n: usize) -> Result<NgramMultiset> {
    check_n(n, CHAR_NGRAM_RANGE, "character")?;
    let normalized = normalize(text);
    let mut grams = HashMap::new();
    // Normalized text is pure ASCII, so byte windows are character windows.
    for window in normalized.as_bytes().windows(n) {
        let gram = std::str::from_utf8(window).expect("normalized text is ASCII");
        *grams.entry(gram.to_string()).or_insert(0) += 1;
    }
    Ok(NgramMultiset {
        n,
        unit: GramUnit::Char,
        grams,
    })
}

pub fn word_ngrams(tokens: &TokenSequence, n: usize) -> Result<NgramMultiset> {
    check_n(n, WORD_NGRAM_RANGE, "word")?;
    let mut grams = HashMap::new();
    for window in tokens.0.windows(n) {
        *grams.entry(window.join(" ")).or_insert(0) += 1;
    }
    Ok(NgramMultiset {
        n,
        unit: GramUnit::Word,
        grams,
    })
}

/// Fraction of the query's distinct grams that also occur in the target.
/// An empty query scores 0.
pub fn overlap_ratio(query: &NgramMultiset, target: &NgramMultiset) -> Result<f64> {
    if query.n != target.n || query.unit != target.unit {
        return Err(Error::Parameter(format!(
            "cannot compare {:?}-{} grams with {:?}-{} grams",
            query.unit, query.n, target.unit, target.n
        )));
    }
    if query.grams.is_empty() {
        return Ok(0.0);
    }
    let hits = query.grams.keys().filter(|g| target.grams.contains_key(*g)).count();
    Ok(hits as f64 / query.grams.len() as f64)
}

/// Borrowing equivalent of `overlap_ratio(char_ngrams(q, n), char_ngrams(t, n))`
/// over already-normalized ASCII text. Used on the hot feature path.
pub(crate) fn char_overlap_normalized(query: &str, target: &str, n: usize) -> f64 {
    let query: HashSet<&[u8]> = query.as_bytes().windows(n).collect();
    if query.is_empty() {
        return 0.0;
    }
    let target: HashSet<&[u8]> = target.as_bytes().windows(n).collect();
    let hits = query.iter().filter(|g| target.contains(*g)).count();
    hits as f64 / query.len() as f64
}

/// Borrowing equivalent of `overlap_ratio` over word n-grams.
pub(crate) fn word_overlap(query: &[String], target: &[String], n: usize) -> f64 {
    let query: HashSet<&[String]> = query.windows(n).collect();
    if query.is_empty() {
        return 0.0;
    }
    let target: HashSet<&[String]> = target.windows(n).collect();
    let hits = query.iter().filter(|g| target.contains(*g)).count();
    hits as f64 / query.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn multiset(unit: GramUnit, n: usize, grams: &[&str]) -> NgramMultiset {
        let mut map = HashMap::new();
        for g in grams {
            *map.entry(g.to_string()).or_insert(0) += 1;
        }
        NgramMultiset { n, unit, grams: map }
    }

    #[test]
    fn tokenize_examples() {
        assert!(tokenize("").is_empty());
        let toks = tokenize("Robert Plant Ripped up $800M");
        assert_eq!(toks.tokens(), ["robert", "plant", "ripped", "up", "800m"]);
        assert_eq!(tokenize("Don't—stop, Café!").tokens(), ["don", "t", "stop", "caf"]);
    }

    #[test]
    fn char_ngram_examples() {
        let m = char_ngrams("abcd", 2).unwrap();
        assert_eq!(m.distinct(), 3);
        assert_eq!((m.count("ab"), m.count("bc"), m.count("cd")), (1, 1, 1));
        let m = char_ngrams("aaa", 2).unwrap();
        assert_eq!(m.count("aa"), 2);
        assert_eq!(m.distinct(), 1);
        assert!(char_ngrams("a", 2).unwrap().is_empty());
        assert!(char_ngrams("abc", 1).is_err());
        assert!(char_ngrams("abc", 17).is_err());
    }

    #[test]
    fn char_ngrams_use_space_joined_tokens() {
        let m = char_ngrams("a!!b", 3).unwrap();
        assert_eq!(m.count("a b"), 1);
        assert_eq!(m.total(), 1);
    }

    #[test]
    fn word_ngram_examples() {
        let toks: TokenSequence = ["a", "b", "c"].into_iter().collect();
        let m = word_ngrams(&toks, 2).unwrap();
        assert_eq!(m.count("a b"), 1);
        assert_eq!(m.count("b c"), 1);
        assert_eq!(m.total(), 2);
        let one: TokenSequence = ["a"].into_iter().collect();
        assert!(word_ngrams(&one, 2).unwrap().is_empty());
        assert!(word_ngrams(&toks, 7).is_err());
        assert!(word_ngrams(&toks, 1).is_err());
    }

    #[test]
    fn overlap_examples() {
        let q = multiset(GramUnit::Char, 2, &["ab", "bc"]);
        let t = multiset(GramUnit::Char, 2, &["ab", "bd"]);
        assert_eq!(overlap_ratio(&q, &t).unwrap(), 0.5);
        assert_eq!(overlap_ratio(&q, &q).unwrap(), 1.0);
        let xy = multiset(GramUnit::Char, 2, &["xy"]);
        let empty = multiset(GramUnit::Char, 2, &[]);
        assert_eq!(overlap_ratio(&xy, &empty).unwrap(), 0.0);
        assert_eq!(overlap_ratio(&empty, &xy).unwrap(), 0.0);

        let word = multiset(GramUnit::Word, 2, &["ab"]);
        let three = multiset(GramUnit::Char, 3, &["abc"]);
        assert!(overlap_ratio(&q, &word).is_err());
        assert!(overlap_ratio(&q, &three).is_err());
    }

    proptest! {
        #[test]
        fn tokenize_is_a_fixed_point(s in "\\PC{0,80}") {
            let once = tokenize(&s);
            prop_assert_eq!(tokenize(&once.normalized()), once.clone());
            for t in once.iter() {
                prop_assert!(!t.is_empty());
                prop_assert!(t.bytes().all(|b| b.is_ascii_lowercase() || b.is_ascii_digit()));
            }
        }

        #[test]
        fn char_ngrams_match_naive_enumeration(s in "[a-c ,.]{0,40}", n in 2usize..=16) {
            let m = char_ngrams(&s, n).unwrap();
            let norm: Vec<char> = normalize(&s).chars().collect();
            let mut naive: HashMap<String, usize> = HashMap::new();
            if norm.len() >= n {
                for start in 0..=norm.len() - n {
                    let gram: String = norm[start..start + n].iter().collect();
                    *naive.entry(gram).or_insert(0) += 1;
                }
            }
            prop_assert_eq!(m.grams(), &naive);
            prop_assert_eq!(m.total(), norm.len().saturating_sub(n - 1));
        }

        #[test]
        fn word_gram_count_is_window_arithmetic(words in proptest::collection::vec("[ab]{1,2}", 0..12), n in 2usize..=6) {
            let toks: TokenSequence = words.iter().cloned().collect();
            prop_assert_eq!(word_ngrams(&toks, n).unwrap().total(), toks.len().saturating_sub(n - 1));
        }

        #[test]
        fn overlap_is_bounded_and_fast_paths_agree(q in "[a-d ]{0,30}", t in "[a-d ]{0,30}", n in 2usize..=6) {
            let r = overlap_ratio(&char_ngrams(&q, n).unwrap(), &char_ngrams(&t, n).unwrap()).unwrap();
            prop_assert!((0.0..=1.0).contains(&r));
            prop_assert_eq!(r, char_overlap_normalized(&normalize(&q), &normalize(&t), n));

            let (qt, tt) = (tokenize(&q), tokenize(&t));
            let w = overlap_ratio(&word_ngrams(&qt, n).unwrap(), &word_ngrams(&tt, n).unwrap()).unwrap();
            prop_assert_eq!(w, word_overlap(qt.tokens(), tt.tokens(), n));
        }

        #[test]
        fn subset_query_scores_one(t in "[a-d]{2,30}", lo in 0usize..10, len in 2usize..10) {
            let lo = lo.min(t.len() - 2);
            let hi = (lo + len).min(t.len());
            let q = &t[lo..hi];
            let r = overlap_ratio(&char_ngrams(q, 2).unwrap(), &char_ngrams(&t, 2).unwrap()).unwrap();
            prop_assert_eq!(r, 1.0);
        }
    }
}
