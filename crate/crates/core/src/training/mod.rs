//! Loss, optimizer, learning-rate schedule and the epoch loop.

pub mod loss;
pub mod optim;
pub mod report;

pub use loss::cross_entropy;
pub use optim::{sgd_step, steplr, OptimizerConfig, Sgd};
pub use report::{EpochRow, TrainReport, TABLE_HEADER};

use log::info;

use crate::data::Batch;
use crate::error::{Error, Result};
use crate::model::Model;
use crate::nn::Mode;

/// Produces the batches of one epoch.
pub trait BatchSource {
    fn batches(&self, epoch: usize) -> Result<Vec<Batch>>;
}

impl BatchSource for [Batch] {
    fn batches(&self, _epoch: usize) -> Result<Vec<Batch>> {
        Ok(self.to_vec())
    }
}

impl BatchSource for Vec<Batch> {
    fn batches(&self, _epoch: usize) -> Result<Vec<Batch>> {
        Ok(self.clone())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitStats {
    /// Sum of per-sample losses over the number of samples.
    pub mean_loss: f64,
    pub accuracy: f64,
    pub samples: usize,
}

/// One pass over `batches`.
///
/// Train mode runs forward, loss, backward and an optimizer step per batch.
/// Eval mode leaves every parameter and running statistic untouched.
pub fn run_split(
    model: &mut Model,
    batches: &[Batch],
    mode: Mode,
    optimizer: Option<(&mut Sgd, f64)>,
) -> Result<SplitStats> {
    if batches.is_empty() {
        return Err(Error::Data("run_split needs at least one batch".into()));
    }
    let mut loss_sum = 0.0f64;
    let mut correct = 0usize;
    let mut samples = 0usize;
    match mode {
        Mode::Eval => {
            for batch in batches {
                let logits = model.infer(&batch.images)?;
                let (loss, _) = cross_entropy(&logits, &batch.labels)?;
                loss_sum += loss * batch.len() as f64;
                correct += count_correct(&logits.argmax_rows()?, &batch.labels);
                samples += batch.len();
            }
        }
        Mode::Train => {
            let (sgd, lr) = optimizer
                .ok_or_else(|| Error::Optimizer("train mode needs an optimizer".into()))?;
            if model.count_parameters().trainable == 0 {
                return Err(Error::Optimizer("model has no trainable parameters".into()));
            }
            model.set_mode(Mode::Train);
            model.zero_grad();
            for batch in batches {
                let logits = model.forward(&batch.images)?;
                let (loss, grad) = cross_entropy(&logits, &batch.labels)?;
                model.backward(&grad)?;
                sgd.step(model, lr)?;
                loss_sum += loss * batch.len() as f64;
                correct += count_correct(&logits.argmax_rows()?, &batch.labels);
                samples += batch.len();
            }
            model.set_mode(Mode::Eval);
        }
    }
    Ok(SplitStats {
        mean_loss: loss_sum / samples as f64,
        accuracy: correct as f64 / samples as f64,
        samples,
    })
}

fn count_correct(predicted: &[usize], labels: &[usize]) -> usize {
    predicted.iter().zip(labels).filter(|(p, t)| p == t).count()
}

/// Trains for `epochs`, evaluating on the validation batches after each one
/// and stepping the learning rate per epoch.
///
/// Returns an independent snapshot of the model at its best validation
/// accuracy (the first such epoch on ties) together with the report. The
/// live model is left at its final-epoch state.
pub fn fit(
    model: &mut Model,
    train: &dyn BatchSource,
    val: &dyn BatchSource,
    epochs: usize,
    config: &OptimizerConfig,
    seed: u64,
) -> Result<(Model, TrainReport)> {
    if epochs == 0 {
        return Err(Error::Param("epochs must be at least 1".into()));
    }
    config.validate()?;
    model.reseed_dropout(seed);
    let mut sgd = Sgd::new(config.momentum);
    let mut rows = Vec::with_capacity(epochs);
    let mut best: Option<(f64, Model)> = None;
    for epoch in 0..epochs {
        let lr = steplr(epoch, config);
        let train_stats = run_split(model, &train.batches(epoch)?, Mode::Train, Some((&mut sgd, lr)))?;
        let val_stats = run_split(model, &val.batches(epoch)?, Mode::Eval, None)?;
        let row = EpochRow {
            epoch: epoch + 1,
            train_loss: train_stats.mean_loss,
            train_accuracy: train_stats.accuracy,
            validation_loss: val_stats.mean_loss,
            validation_accuracy: val_stats.accuracy,
        };
        info!(
            "epoch {:>3}  lr {:.2e}  train loss {:.4} acc {:.4}  val loss {:.4} acc {:.4}",
            row.epoch, lr, row.train_loss, row.train_accuracy, row.validation_loss, row.validation_accuracy
        );
        if best.as_ref().is_none_or(|(acc, _)| val_stats.accuracy > *acc) {
            best = Some((val_stats.accuracy, model.snapshot()));
        }
        rows.push(row);
    }
    let report = TrainReport::from_rows(rows)?;
    let (_, best_model) = best.expect("at least one epoch ran");
    Ok((best_model, report))
}
