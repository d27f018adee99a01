//! Single-image prediction, confusion matrices and classification reports.

pub mod confusion;
pub mod report;

pub use confusion::{confusion, ConfusionMatrix};
pub use report::{classification_report, f1_score, per_class_metrics, AverageMetrics, ClassMetrics, ClassificationReport};

use serde::{Deserialize, Serialize};

use crate::data::Batch;
use crate::error::{Error, Result};
use crate::model::Model;
use crate::nn::softmax;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub index: usize,
    pub probability: f64,
}

/// Top class of a single row of logits `[1, K]`, lowest index on ties.
pub fn prediction_from_logits(logits: &Tensor) -> Result<Prediction> {
    if logits.rank() != 2 || logits.shape()[0] != 1 {
        return Err(Error::Shape(format!("expected logits [1, K], got {:?}", logits.shape())));
    }
    let probs = softmax(logits)?;
    let index = probs.argmax_rows()?[0];
    Ok(Prediction {
        index,
        probability: probs.data()[index] as f64,
    })
}

/// Classifies one preprocessed image `[3, R, R]` as a batch of one, in eval
/// mode.
pub fn predict(model: &Model, image: &Tensor) -> Result<Prediction> {
    if image.rank() != 3 {
        return Err(Error::Shape(format!("predict expects an image [C, H, W], got {:?}", image.shape())));
    }
    let mut shape = vec![1];
    shape.extend_from_slice(image.shape());
    let logits = model.infer(&image.clone().reshape(&shape)?)?;
    prediction_from_logits(&logits)
}

/// True and predicted labels over `batches`, in eval mode.
pub fn collect_predictions(model: &Model, batches: &[Batch]) -> Result<(Vec<usize>, Vec<usize>)> {
    let mut truth = Vec::new();
    let mut predicted = Vec::new();
    for batch in batches {
        predicted.extend(model.infer(&batch.images)?.argmax_rows()?);
        truth.extend_from_slice(&batch.labels);
    }
    Ok((truth, predicted))
}
