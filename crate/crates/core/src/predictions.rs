//! Prediction files: CSV with `Headline`, `Body ID`, `Stance` columns,
//! the same layout as a labeled stances file.

use std::fs::File;
use std::path::Path;

use crate::corpus::{Stance, StancePair, BODY_ID_COLUMN, HEADLINE_COLUMN, STANCE_COLUMN};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PredictionRow {
    pub headline: String,
    pub body_id: u64,
    pub stance: Stance,
}

impl PredictionRow {
    pub fn key(&self) -> String {
        format!("{}\t{}", self.body_id, self.headline)
    }
}

pub fn write_predictions(path: &Path, pairs: &[StancePair], preds: &[Stance]) -> Result<()> {
    if pairs.len() != preds.len() {
        return Err(Error::Parameter(format!(
            "{} pairs but {} predictions",
            pairs.len(),
            preds.len()
        )));
    }
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
    w.write_record([HEADLINE_COLUMN, BODY_ID_COLUMN, STANCE_COLUMN])
        .map_err(|e| Error::csv(path, e))?;
    for (pair, pred) in pairs.iter().zip(preds) {
        w.write_record([pair.headline.as_str(), &pair.body_id.to_string(), pred.as_str()])
            .map_err(|e| Error::csv(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_predictions(path: &Path) -> Result<Vec<PredictionRow>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::Reader::from_reader(file);
    let headers = reader.headers().map_err(|e| Error::csv(path, e))?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::Schema {
                path: path.to_path_buf(),
                column: name.to_string(),
            })
    };
    let (h, b, s) = (col(HEADLINE_COLUMN)?, col(BODY_ID_COLUMN)?, col(STANCE_COLUMN)?);
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::csv(path, e))?;
        let row = i + 1;
        let body_id = record[b].trim().parse().map_err(|_| Error::Row {
            path: path.to_path_buf(),
            row,
            message: format!("invalid body id `{}`", &record[b]),
        })?;
        let stance = record[s].parse().map_err(|_| Error::Label {
            path: path.to_path_buf(),
            row,
            label: record[s].to_string(),
        })?;
        rows.push(PredictionRow {
            headline: record[h].to_string(),
            body_id,
            stance,
        });
    }
    Ok(rows)
}

/// Pairs gold and predicted rows positionally; every row's
/// (headline, body id) key must agree.
pub fn align(gold: &[PredictionRow], predicted: &[PredictionRow]) -> Result<(Vec<Stance>, Vec<Stance>)> {
    for (row, (g, p)) in gold.iter().zip(predicted).enumerate() {
        if g.key() != p.key() {
            return Err(Error::KeyMismatch {
                row: row + 1,
                gold: g.key(),
                predicted: p.key(),
            });
        }
    }
    if gold.len() != predicted.len() {
        let row = gold.len().min(predicted.len());
        let describe = |rows: &[PredictionRow]| rows.get(row).map(|r| r.key()).unwrap_or_else(|| "<end of file>".into());
        return Err(Error::KeyMismatch {
            row: row + 1,
            gold: describe(gold),
            predicted: describe(predicted),
        });
    }
    Ok((
        gold.iter().map(|r| r.stance).collect(),
        predicted.iter().map(|r| r.stance).collect(),
    ))
}
