//! Checkpoint files: saving and loading models, and importing pretrained
//! backbone weights.

pub mod format;

pub use format::{Checkpoint, CheckpointEntry, CheckpointMetadata, DTYPE_F32, FORMAT_VERSION, MAGIC};

use std::collections::HashMap;
use std::path::Path;

use log::info;

use crate::error::{CheckpointError, Error, Result, ShapeConflict};
use crate::model::{is_head_tensor, Model, ModelConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LoadMode {
    /// Every model tensor must be present with the expected shape and the
    /// file may hold nothing else.
    #[default]
    Strict,
    /// Head entries in the file are skipped; the head keeps its fresh
    /// initialization.
    BackboneOnly,
}

#[derive(Debug, Clone)]
pub struct LoadedCheckpoint {
    pub model: Model,
    pub metadata: CheckpointMetadata,
    /// File entries that were not applied, in file order.
    pub skipped: Vec<String>,
}

/// Name-by-name outcome of [`import_pretrained`].
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ImportReport {
    pub loaded: Vec<String>,
    /// File entries that are head tensors or unknown to the model.
    pub skipped: Vec<String>,
    /// Backbone tensors of the model the file did not provide.
    pub missing: Vec<String>,
}

impl Checkpoint {
    /// Every parameter and buffer of `model` under its canonical name. The
    /// stored model config is always the model's own.
    pub fn from_model(model: &Model, metadata: &CheckpointMetadata) -> Self {
        let mut metadata = metadata.clone();
        metadata.model = Some(model.config().clone());
        let entries = model
            .tensors()
            .into_iter()
            .map(|t| CheckpointEntry {
                name: t.name,
                shape: t.tensor.shape().to_vec(),
                data: t.tensor.data().to_vec(),
            })
            .collect();
        Self { metadata, entries }
    }
}

pub fn save_checkpoint(model: &Model, metadata: &CheckpointMetadata, path: &Path) -> Result<()> {
    Checkpoint::from_model(model, metadata).write(path)
}

/// Rebuilds a model from a checkpoint.
///
/// The architecture comes from `expected` when given, otherwise from the
/// file's metadata. Stored tensors are shape-checked against it.
pub fn load_checkpoint(path: &Path, expected: Option<&ModelConfig>) -> Result<(Model, CheckpointMetadata)> {
    let loaded = load_checkpoint_with(path, expected, LoadMode::Strict)?;
    Ok((loaded.model, loaded.metadata))
}

pub fn load_checkpoint_with(path: &Path, expected: Option<&ModelConfig>, mode: LoadMode) -> Result<LoadedCheckpoint> {
    let ckpt = Checkpoint::read(path)?;
    restore(ckpt, expected, mode)
}

/// [`load_checkpoint_with`] on an already parsed checkpoint.
pub fn restore(ckpt: Checkpoint, expected: Option<&ModelConfig>, mode: LoadMode) -> Result<LoadedCheckpoint> {
    let config = match (expected, &ckpt.metadata.model) {
        (Some(c), _) | (None, Some(c)) => c.clone(),
        (None, None) => {
            return Err(CheckpointError::Malformed(
                "checkpoint has no model config and none was supplied".into(),
            )
            .into())
        }
    };
    let mut model = Model::build(&config, ckpt.metadata.seed)?;
    let by_name: HashMap<&str, &CheckpointEntry> = ckpt.entries.iter().map(|e| (e.name.as_str(), e)).collect();
    let mut conflicts = Vec::new();
    let mut used = Vec::new();
    for t in model.tensors() {
        if mode == LoadMode::BackboneOnly && is_head_tensor(&t.name) {
            continue;
        }
        let entry = by_name
            .get(t.name.as_str())
            .ok_or_else(|| CheckpointError::MissingEntry(t.name.clone()))?;
        if entry.shape != t.tensor.shape() {
            conflicts.push(ShapeConflict {
                name: t.name.clone(),
                expected: t.tensor.shape().to_vec(),
                found: entry.shape.clone(),
            });
        }
        used.push(t.name);
    }
    if !conflicts.is_empty() {
        return Err(CheckpointError::ShapeMismatch(conflicts).into());
    }
    let skipped: Vec<String> = ckpt
        .entries
        .iter()
        .filter(|e| !used.contains(&e.name))
        .map(|e| e.name.clone())
        .collect();
    if mode == LoadMode::Strict {
        if let Some(extra) = skipped.first() {
            return Err(CheckpointError::Malformed(format!("unexpected tensor {extra:?}")).into());
        }
    }
    for t in model.tensors_mut() {
        if let Some(entry) = by_name.get(t.name.as_str()).filter(|_| used.contains(&t.name)) {
            t.tensor.data_mut().copy_from_slice(&entry.data);
        }
    }
    Ok(LoadedCheckpoint {
        model,
        metadata: ckpt.metadata,
        skipped,
    })
}

/// Overwrites the backbone of `model` with the matching tensors of a
/// checkpoint file. Head tensors are never touched.
pub fn import_pretrained(path: &Path, model: &mut Model) -> Result<ImportReport> {
    import_checkpoint(&Checkpoint::read(path)?, model)
}

/// Nothing is modified unless every overlapping tensor has the right shape.
pub fn import_checkpoint(ckpt: &Checkpoint, model: &mut Model) -> Result<ImportReport> {
    let shapes: HashMap<String, Vec<usize>> = model
        .tensors()
        .into_iter()
        .filter(|t| !is_head_tensor(&t.name))
        .map(|t| (t.name, t.tensor.shape().to_vec()))
        .collect();
    let mut report = ImportReport::default();
    let mut conflicts = Vec::new();
    for e in &ckpt.entries {
        match shapes.get(&e.name) {
            Some(shape) if *shape == e.shape => report.loaded.push(e.name.clone()),
            Some(shape) => conflicts.push(ShapeConflict {
                name: e.name.clone(),
                expected: shape.clone(),
                found: e.shape.clone(),
            }),
            None => report.skipped.push(e.name.clone()),
        }
    }
    if !conflicts.is_empty() {
        return Err(CheckpointError::ShapeMismatch(conflicts).into());
    }
    if report.loaded.is_empty() {
        return Err(Error::from(CheckpointError::Import(
            "checkpoint shares no backbone tensor names with the model".into(),
        )));
    }
    let by_name: HashMap<&str, &CheckpointEntry> = ckpt.entries.iter().map(|e| (e.name.as_str(), e)).collect();
    for t in model.tensors_mut() {
        if is_head_tensor(&t.name) {
            continue;
        }
        match by_name.get(t.name.as_str()) {
            Some(entry) => t.tensor.data_mut().copy_from_slice(&entry.data),
            None => report.missing.push(t.name),
        }
    }
    info!(
        "imported {} tensors, skipped {}, missing {}",
        report.loaded.len(),
        report.skipped.len(),
        report.missing.len()
    );
    Ok(report)
}
