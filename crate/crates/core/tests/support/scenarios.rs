//! End-to-end runs on synthetic data shared by the training tests and the
//! acceptance suite.

use std::path::Path;

use lnkt_core::checkpoint::{import_pretrained, save_checkpoint, CheckpointMetadata};
use lnkt_core::data::{scan_directory, split_train_val, synthesize_toy_dataset, InMemoryDataset, Loader, SplitMode};
use lnkt_core::model::{is_head_tensor, Model, TrainablePolicy};
use lnkt_core::preset::{DEFAULT_BATCH_SIZE, DEFAULT_TRAIN_FRACTION};
use lnkt_core::training::{fit, TrainReport};
use lnkt_core::Preset;

/// Synthesizes a dataset and returns train/validation loaders from an 80/20
/// split, plus the class names.
pub fn synthetic_loaders(dir: &Path, classes: usize, per_class: usize, seed: u64) -> (Loader, Loader, Vec<String>) {
    synthesize_toy_dataset(classes, per_class, 32, seed, dir).unwrap();
    let index = scan_directory(dir).unwrap();
    let (train, val) = split_train_val(&index, DEFAULT_TRAIN_FRACTION, seed, SplitMode::Stratified).unwrap();
    let spec = Preset::Desk.preprocess();
    (
        Loader::new(InMemoryDataset::load(&train, &spec).unwrap(), DEFAULT_BATCH_SIZE, true, seed),
        Loader::new(InMemoryDataset::load(&val, &spec).unwrap(), DEFAULT_BATCH_SIZE, false, seed),
        index.class_names,
    )
}

pub fn desk_run(dir: &Path, seed: u64, epochs: usize) -> (Model, TrainReport) {
    let (train, val, _) = synthetic_loaders(dir, 3, 100, seed);
    let mut model = Model::build(&Preset::Desk.model_config(3), seed).unwrap();
    fit(&mut model, &train, &val, epochs, &Preset::Desk.optimizer(), seed).unwrap()
}

pub struct TransferOutcome {
    pub report: TrainReport,
    /// Backbone tensors whose bits changed during fine-tuning.
    pub changed: Vec<String>,
    pub backbone_tensors: usize,
}

fn backbone_bits(model: &Model) -> Vec<(String, Vec<u32>)> {
    model
        .tensors()
        .into_iter()
        .filter(|t| !is_head_tensor(&t.name))
        .map(|t| (t.name, t.tensor.data().iter().map(|v| v.to_bits()).collect()))
        .collect()
}

/// Pretrains on task A (3 classes, `seed_a`), saves a checkpoint, imports
/// its backbone into a fresh model with a new 4-class head, freezes the
/// backbone and fine-tunes on task B (4 classes, `seed_b`).
pub fn transfer_run(dir: &Path, seed_a: u64, seed_b: u64, finetune_epochs: usize) -> TransferOutcome {
    let (train_a, val_a, names_a) = synthetic_loaders(&dir.join("task_a"), 3, 100, seed_a);
    let mut source = Model::build(&Preset::Desk.model_config(3), seed_a).unwrap();
    let (best_a, _) = fit(&mut source, &train_a, &val_a, 10, &Preset::Desk.optimizer(), seed_a).unwrap();
    let ckpt = dir.join("task_a.ckpt");
    save_checkpoint(&best_a, &CheckpointMetadata::new(best_a.config().clone(), names_a, seed_a), &ckpt).unwrap();

    let (train_b, val_b, _) = synthetic_loaders(&dir.join("task_b"), 4, 100, seed_b);
    let mut target = Model::build(&Preset::Desk.model_config(3), seed_b).unwrap();
    import_pretrained(&ckpt, &mut target).unwrap();
    target.replace_head(4, 256, 0.2).unwrap();
    target.set_trainable(TrainablePolicy::HeadOnly);
    let before = backbone_bits(&target);
    let (_, report) = fit(&mut target, &train_b, &val_b, finetune_epochs, &Preset::Desk.optimizer(), seed_b).unwrap();
    let after = backbone_bits(&target);
    let changed = before
        .iter()
        .zip(&after)
        .filter(|(a, b)| a != b)
        .map(|(a, _)| a.0.clone())
        .collect();
    TransferOutcome { report, changed, backbone_tensors: before.len() }
}
