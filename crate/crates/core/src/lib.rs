pub mod checkpoint;
pub mod data;
pub mod error;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod preset;
pub mod tensor;
pub mod training;

pub use error::{CheckpointError, Error, Result};
pub use preset::Preset;
pub use tensor::{Element, Tensor};
