use serde::{Deserialize, Serialize};

use crate::data::PreprocessSpec;
use crate::model::ModelConfig;
use crate::training::OptimizerConfig;

pub const DEFAULT_EPOCHS: usize = 10;
pub const DEFAULT_BATCH_SIZE: usize = 32;
pub const DEFAULT_TRAIN_FRACTION: f64 = 0.8;

/// Named bundles of model shape and training defaults.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    /// Quarter width, 32×32 inputs. Uses a larger step size with momentum
    /// so ten epochs on a small synthetic set are enough.
    #[default]
    Desk,
    /// Full-width network at 224×224 with plain SGD at 0.01.
    Full,
}

impl Preset {
    pub fn model_config(self, num_classes: usize) -> ModelConfig {
        match self {
            Preset::Desk => ModelConfig::desk(num_classes),
            Preset::Full => ModelConfig::full(num_classes),
        }
    }

    pub fn optimizer(self) -> OptimizerConfig {
        match self {
            Preset::Desk => OptimizerConfig {
                learning_rate: 0.05,
                momentum: 0.9,
                ..OptimizerConfig::default()
            },
            Preset::Full => OptimizerConfig::default(),
        }
    }

    pub fn preprocess(self) -> PreprocessSpec {
        PreprocessSpec::new(self.model_config(2).input_resolution)
    }
}
