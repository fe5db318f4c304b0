//! Confusion matrices, class-wise accuracy and the two FNC score variants.
//!
//! `score_official_weighted` is the challenge's relative score: 0.25 per
//! correct related/unrelated decision plus 0.75 per exactly-correct related
//! stance, over the best attainable total. `score_paper_formula` is the
//! unnormalized `0.25·Score₁ + 0.75·Score₂` combination of the two
//! accuracies. They disagree on real data; both are reported.

use std::fmt::Write as _;
use std::ops::Add;

use crate::corpus::Stance;
use crate::error::{Error, Result};

/// Counts indexed `[gold][predicted]` in [`Stance::ALL`] order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ConfusionMatrix {
    pub counts: [[u64; 4]; 4],
}

impl ConfusionMatrix {
    pub fn from_counts(counts: [[u64; 4]; 4]) -> Self {
        ConfusionMatrix { counts }
    }

    pub fn get(&self, gold: Stance, predicted: Stance) -> u64 {
        self.counts[gold.index()][predicted.index()]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn row_total(&self, gold: Stance) -> u64 {
        self.counts[gold.index()].iter().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..4).map(|i| self.counts[i][i]).sum()
    }

    /// Pairs whose related/unrelated decision is right.
    pub fn binary_correct(&self) -> u64 {
        let mut n = 0;
        for gold in Stance::ALL {
            for pred in Stance::ALL {
                if gold.is_related() == pred.is_related() {
                    n += self.get(gold, pred);
                }
            }
        }
        n
    }

    pub fn related_total(&self) -> u64 {
        Stance::ALL.iter().filter(|s| s.is_related()).map(|&s| self.row_total(s)).sum()
    }

    pub fn related_exact(&self) -> u64 {
        Stance::ALL.iter().filter(|s| s.is_related()).map(|&s| self.get(s, s)).sum()
    }

    /// Whitespace-separated 4×4 integer grid, one gold row per line.
    /// Lines starting with `#` are ignored.
    pub fn parse(text: &str) -> Result<Self> {
        let rows: Vec<&str> = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .collect();
        if rows.len() != 4 {
            return Err(Error::Format(format!("confusion matrix needs 4 rows, got {}", rows.len())));
        }
        let mut counts = [[0u64; 4]; 4];
        for (i, row) in rows.iter().enumerate() {
            let cells: Vec<u64> = row
                .split(|c: char| c.is_whitespace() || c == ',')
                .filter(|c| !c.is_empty())
                .map(|c| c.parse::<u64>())
                .collect::<Result<_, _>>()
                .map_err(|_| Error::Format(format!("confusion row {} is not integers", i + 1)))?;
            if cells.len() != 4 {
                return Err(Error::Format(format!("confusion row {} needs 4 cells", i + 1)));
            }
            counts[i].copy_from_slice(&cells);
        }
        Ok(ConfusionMatrix { counts })
    }

    pub fn to_text(&self) -> String {
        let mut out = String::from("# rows: gold agree, disagree, discuss, unrelated; columns: predicted\n");
        for row in &self.counts {
            let _ = writeln!(out, "{} {} {} {}", row[0], row[1], row[2], row[3]);
        }
        out
    }
}

impl Add for ConfusionMatrix {
    type Output = ConfusionMatrix;

    fn add(mut self, rhs: ConfusionMatrix) -> ConfusionMatrix {
        for (a, b) in self.counts.iter_mut().flatten().zip(rhs.counts.iter().flatten()) {
            *a += b;
        }
        self
    }
}

pub fn confusion(golds: &[Stance], preds: &[Stance]) -> Result<ConfusionMatrix> {
    if golds.len() != preds.len() {
        return Err(Error::Parameter(format!(
            "{} gold labels but {} predictions",
            golds.len(),
            preds.len()
        )));
    }
    if golds.is_empty() {
        return Err(Error::Empty("nothing to score".into()));
    }
    let mut m = ConfusionMatrix::default();
    for (g, p) in golds.iter().zip(preds) {
        m.counts[g.index()][p.index()] += 1;
    }
    Ok(m)
}

/// `100 · (0.25·Score₁ + 0.75·Score₂)`: Score₁ is related/unrelated accuracy,
/// Score₂ exact-stance accuracy over gold-related pairs (0 if there are none).
pub fn score_paper_formula(m: &ConfusionMatrix) -> f64 {
    let total = m.total();
    if total == 0 {
        return 0.0;
    }
    let score1 = m.binary_correct() as f64 / total as f64;
    let related = m.related_total();
    let score2 = if related == 0 {
        0.0
    } else {
        m.related_exact() as f64 / related as f64
    };
    100.0 * (0.25 * score1 + 0.75 * score2)
}

/// Official relative weighted score in percent.
pub fn score_official_weighted(m: &ConfusionMatrix) -> f64 {
    let max = 0.25 * m.total() as f64 + 0.75 * m.related_total() as f64;
    if max == 0.0 {
        return 0.0;
    }
    let points = 0.25 * m.binary_correct() as f64 + 0.75 * m.related_exact() as f64;
    100.0 * points / max
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub confusion: ConfusionMatrix,
    /// Percent, in [`Stance::ALL`] order; 0 for classes with no gold pairs.
    pub class_accuracy: [f64; 4],
    pub empty_class: [bool; 4],
    pub overall_accuracy: f64,
    pub score_paper_formula: f64,
    pub score_official_weighted: f64,
}

/// Reports whose two score variants differ by more than this are flagged.
pub const VARIANT_FLAG_THRESHOLD: f64 = 0.005;

impl EvalReport {
    pub fn from_confusion(confusion: ConfusionMatrix) -> Result<Self> {
        let total = confusion.total();
        if total == 0 {
            return Err(Error::Empty("confusion matrix has no pairs".into()));
        }
        let mut class_accuracy = [0.0; 4];
        let mut empty_class = [false; 4];
        for s in Stance::ALL {
            let row = confusion.row_total(s);
            if row == 0 {
                empty_class[s.index()] = true;
            } else {
                class_accuracy[s.index()] = 100.0 * confusion.get(s, s) as f64 / row as f64;
            }
        }
        Ok(EvalReport {
            confusion,
            class_accuracy,
            empty_class,
            overall_accuracy: 100.0 * confusion.trace() as f64 / total as f64,
            score_paper_formula: score_paper_formula(&confusion),
            score_official_weighted: score_official_weighted(&confusion),
        })
    }

    pub fn variant_delta(&self) -> f64 {
        self.score_official_weighted - self.score_paper_formula
    }

    pub fn variants_differ(&self) -> bool {
        self.variant_delta().abs() > VARIANT_FLAG_THRESHOLD
    }

    /// `key=value` lines, every metric to two decimals.
    pub fn to_key_values(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "total={}", self.confusion.total());
        let _ = writeln!(out, "score_official_weighted={:.2}", self.score_official_weighted);
        let _ = writeln!(out, "score_paper_formula={:.2}", self.score_paper_formula);
        let _ = writeln!(out, "score_variant_delta={:.2}", self.variant_delta());
        let _ = writeln!(out, "score_variants_differ={}", self.variants_differ());
        let _ = writeln!(out, "overall_accuracy={:.2}", self.overall_accuracy);
        for s in Stance::ALL {
            let _ = writeln!(out, "accuracy_{s}={:.2}", self.class_accuracy[s.index()]);
            let _ = writeln!(out, "empty_{s}={}", self.empty_class[s.index()]);
        }
        for g in Stance::ALL {
            for p in Stance::ALL {
                let _ = writeln!(out, "confusion_{g}_{p}={}", self.confusion.get(g, p));
            }
        }
        out
    }

    /// Human-readable confusion table with per-class accuracy and scores.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<10} {:>9} {:>9} {:>9} {:>9} {:>9}",
            "gold\\pred", "agree", "disagree", "discuss", "unrelated", "acc %"
        );
        for g in Stance::ALL {
            let row = &self.confusion.counts[g.index()];
            let acc = if self.empty_class[g.index()] {
                "n/a".to_string()
            } else {
                format!("{:.2}", self.class_accuracy[g.index()])
            };
            let _ = writeln!(
                out,
                "{:<10} {:>9} {:>9} {:>9} {:>9} {:>9}",
                g.as_str(),
                row[0],
                row[1],
                row[2],
                row[3],
                acc
            );
        }
        let _ = writeln!(out);
        let _ = writeln!(out, "overall accuracy        {:>7.2} %", self.overall_accuracy);
        let _ = writeln!(out, "FNC score (official)    {:>7.2}", self.score_official_weighted);
        let _ = writeln!(out, "FNC score (0.25/0.75)   {:>7.2}", self.score_paper_formula);
        if self.variants_differ() {
            let _ = writeln!(
                out,
                "note: score variants differ by {:.2} points; the official weighting normalizes by attainable points",
                self.variant_delta()
            );
        }
        out
    }
}

pub fn report(golds: &[Stance], preds: &[Stance]) -> Result<EvalReport> {
    EvalReport::from_confusion(confusion(golds, preds)?)
}
