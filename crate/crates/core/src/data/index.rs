use std::fs;
use std::path::{Path, PathBuf};

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const IMAGE_EXTENSIONS: [&str; 3] = ["png", "jpg", "jpeg"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Origin {
    TrainDir,
    TestDir,
    Synthetic,
    /// A directory that is neither `train` nor `test`.
    Other,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sample {
    pub path: PathBuf,
    pub label: usize,
}

/// Labeled image paths plus the label encoding.
///
/// Class names are sorted by byte order and a class's integer label is its
/// position in that order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetIndex {
    pub samples: Vec<Sample>,
    pub class_names: Vec<String>,
    pub origin: Origin,
    /// Non-image files ignored while scanning.
    pub skipped_files: usize,
}

impl DatasetIndex {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn encode(&self, name: &str) -> Option<usize> {
        self.class_names.binary_search_by(|c| c.as_str().cmp(name)).ok()
    }

    pub fn decode(&self, label: usize) -> Option<&str> {
        self.class_names.get(label).map(String::as_str)
    }

    /// Sample count per label.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes()];
        for s in &self.samples {
            counts[s.label] += 1;
        }
        counts
    }

    pub fn labels(&self) -> Vec<usize> {
        self.samples.iter().map(|s| s.label).collect()
    }
}

pub fn is_image_file(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| IMAGE_EXTENSIONS.iter().any(|x| e.eq_ignore_ascii_case(x)))
}

fn dataset_error(path: &Path, reason: impl Into<String>) -> Error {
    Error::Dataset {
        path: path.to_path_buf(),
        reason: reason.into(),
    }
}

/// Indexes `root/<ClassName>/*.{png,jpg,jpeg}`.
pub fn scan_directory(root: &Path) -> Result<DatasetIndex> {
    let entries = fs::read_dir(root).map_err(|e| dataset_error(root, format!("cannot read directory: {e}")))?;
    let mut classes: Vec<(String, PathBuf)> = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(root, e))?;
        let path = entry.path();
        if !path.is_dir() {
            continue;
        }
        let name = entry
            .file_name()
            .into_string()
            .map_err(|n| dataset_error(&path, format!("class directory name {n:?} is not UTF-8")))?;
        classes.push((name, path));
    }
    if classes.is_empty() {
        return Err(dataset_error(root, "no class subdirectories"));
    }
    classes.sort();

    let mut samples = Vec::new();
    let mut skipped = 0;
    for (label, (_, dir)) in classes.iter().enumerate() {
        let mut files: Vec<PathBuf> = Vec::new();
        for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
            let path = entry.map_err(|e| Error::io(dir, e))?.path();
            if path.is_file() && is_image_file(&path) {
                files.push(path);
            } else {
                skipped += 1;
            }
        }
        if files.is_empty() {
            return Err(dataset_error(dir, "class directory contains no images"));
        }
        files.sort_by(|a, b| a.file_name().cmp(&b.file_name()));
        samples.extend(files.into_iter().map(|path| Sample { path, label }));
    }
    if skipped > 0 {
        warn!("{}: skipped {skipped} non-image entries", root.display());
    }

    let origin = match root.file_name().and_then(|n| n.to_str()) {
        Some("train") => Origin::TrainDir,
        Some("test") => Origin::TestDir,
        _ => Origin::Other,
    };
    Ok(DatasetIndex {
        samples,
        class_names: classes.into_iter().map(|(n, _)| n).collect(),
        origin,
        skipped_files: skipped,
    })
}
