use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRow {
    /// 1-based.
    pub epoch: usize,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub validation_loss: f64,
    pub validation_accuracy: f64,
}

/// Per-epoch losses and accuracies plus the best validation epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub rows: Vec<EpochRow>,
    pub best_epoch: usize,
    pub best_validation_accuracy: f64,
}

pub const TABLE_HEADER: &str = "epoch\ttrain_loss\ttrain_accuracy\tvalidation_loss\tvalidation_accuracy";

impl TrainReport {
    /// Builds a report from rows, picking the first epoch with the highest
    /// validation accuracy.
    pub fn from_rows(rows: Vec<EpochRow>) -> Result<Self> {
        let first = rows
            .first()
            .ok_or_else(|| Error::Report("training report needs at least one epoch".into()))?;
        let mut best = *first;
        for row in &rows {
            let valid = row.train_loss >= 0.0
                && row.validation_loss >= 0.0
                && (0.0..=1.0).contains(&row.train_accuracy)
                && (0.0..=1.0).contains(&row.validation_accuracy);
            if !valid {
                return Err(Error::Report(format!("epoch {} has out-of-range values", row.epoch)));
            }
            if row.validation_accuracy > best.validation_accuracy {
                best = *row;
            }
        }
        Ok(Self {
            best_epoch: best.epoch,
            best_validation_accuracy: best.validation_accuracy,
            rows,
        })
    }

    /// Tab-separated table, one row per epoch, four decimals.
    pub fn to_table(&self) -> String {
        let mut out = String::from(TABLE_HEADER);
        out.push('\n');
        for r in &self.rows {
            out.push_str(&format!(
                "{}\t{:.4}\t{:.4}\t{:.4}\t{:.4}\n",
                r.epoch, r.train_loss, r.train_accuracy, r.validation_loss, r.validation_accuracy
            ));
        }
        out
    }
}
