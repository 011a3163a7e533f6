//! Metric-score tables: CSV with columns `video_id, metric_name, score`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreRow {
    pub video_id: String,
    pub metric_name: String,
    pub score: f64,
}

pub fn read_scores(path: impl AsRef<Path>) -> Result<Vec<ScoreRow>> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
    let mut rows = Vec::new();
    for (i, row) in reader.deserialize::<ScoreRow>().enumerate() {
        let row = row?;
        if !row.score.is_finite() {
            return Err(Error::invalid(format!(
                "{} row {}: score for `{}` is not finite",
                path.display(),
                i + 1,
                row.video_id
            )));
        }
        rows.push(row);
    }
    Ok(rows)
}

pub fn write_scores(path: impl AsRef<Path>, rows: &[ScoreRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
