use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape error: {0}")]
    Shape(String),

    #[error("invalid axis {axis} for tensor of rank {rank}")]
    Axis { axis: usize, rank: usize },

    #[error("invalid parameter: {0}")]
    Param(String),

    #[error("invalid model config: {0}")]
    Config(String),

    #[error("label {label} out of range for {classes} classes")]
    Label { label: usize, classes: usize },

    #[error("degenerate batch: batch norm in train mode needs at least 2 values per channel, got {0}")]
    DegenerateBatch(usize),

    #[error("optimizer error: {0}")]
    Optimizer(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("dataset error in {}: {reason}", path.display())]
    Dataset { path: PathBuf, reason: String },

    #[error("split error: {0}")]
    Split(String),

    #[error("failed to decode {}: {reason}", path.display())]
    Decode { path: PathBuf, reason: String },

    #[error("generation error: {0}")]
    Generation(String),

    #[error("report error: {0}")]
    Report(String),

    #[error("oracle error: {0}")]
    Oracle(String),

    #[error("io error at {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

/// A tensor whose stored shape disagrees with the shape the model expects.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShapeConflict {
    pub name: String,
    pub expected: Vec<usize>,
    pub found: Vec<usize>,
}

impl std::fmt::Display for ShapeConflict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{}: expected {:?}, found {:?}",
            self.name, self.expected, self.found
        )
    }
}

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: String, found: String },

    #[error("unsupported checkpoint format version {0}")]
    UnsupportedVersion(u32),

    #[error("checksum mismatch: stored {stored:#010x}, computed {computed:#010x}")]
    Checksum { stored: u32, computed: u32 },

    #[error("malformed checkpoint: {0}")]
    Malformed(String),

    #[error("duplicate tensor name {0:?}")]
    DuplicateName(String),

    #[error("missing tensor {0:?}")]
    MissingEntry(String),

    #[error("shape mismatch in {} tensor(s): {}", .0.len(), join_conflicts(.0))]
    ShapeMismatch(Vec<ShapeConflict>),

    #[error("import error: {0}")]
    Import(String),
}

fn join_conflicts(conflicts: &[ShapeConflict]) -> String {
    conflicts
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}
