use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One stage of inverted residual blocks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct InvertedResidualSpec {
    /// Channel expansion factor `t` of the hidden layer.
    pub expansion: usize,
    /// Output channels `c` before width scaling.
    pub out_channels: usize,
    /// Number of blocks `n` in the stage.
    pub repeats: usize,
    /// Stride `s` of the first block; later blocks use stride 1.
    pub stride: usize,
}

impl InvertedResidualSpec {
    pub const fn new(expansion: usize, out_channels: usize, repeats: usize, stride: usize) -> Self {
        Self {
            expansion,
            out_channels,
            repeats,
            stride,
        }
    }
}

/// The standard MobileNetV2 stage table `(t, c, n, s)`.
pub const MOBILENET_V2_STAGES: [InvertedResidualSpec; 7] = [
    InvertedResidualSpec::new(1, 16, 1, 1),
    InvertedResidualSpec::new(6, 24, 2, 2),
    InvertedResidualSpec::new(6, 32, 3, 2),
    InvertedResidualSpec::new(6, 64, 4, 2),
    InvertedResidualSpec::new(6, 96, 3, 1),
    InvertedResidualSpec::new(6, 160, 3, 2),
    InvertedResidualSpec::new(6, 320, 1, 1),
];

pub const DEFAULT_HEAD_HIDDEN: usize = 256;
pub const DEFAULT_HEAD_DROPOUT: f64 = 0.2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub input_resolution: usize,
    pub input_channels: usize,
    pub width_multiplier: f64,
    /// Stem width before scaling.
    pub stem_channels: usize,
    /// Width of the final 1×1 convolution before scaling.
    pub last_channels: usize,
    pub stage_specs: Vec<InvertedResidualSpec>,
    pub head_hidden: usize,
    pub head_dropout: f64,
    pub num_classes: usize,
}

/// Rounds `value` to the nearest multiple of `divisor` (at least `divisor`),
/// bumping up one step if rounding lost more than 10%.
pub fn make_divisible(value: f64, divisor: usize) -> usize {
    let d = divisor as f64;
    let rounded = (((value + d / 2.0) / d).floor() * d).max(d);
    let rounded = if rounded < 0.9 * value { rounded + d } else { rounded };
    rounded as usize
}

impl ModelConfig {
    /// Full-width network at 224×224.
    pub fn full(num_classes: usize) -> Self {
        Self {
            input_resolution: 224,
            input_channels: 3,
            width_multiplier: 1.0,
            stem_channels: 32,
            last_channels: 1280,
            stage_specs: MOBILENET_V2_STAGES.to_vec(),
            head_hidden: DEFAULT_HEAD_HIDDEN,
            head_dropout: DEFAULT_HEAD_DROPOUT,
            num_classes,
        }
    }

    /// Quarter-width network at 32×32 with the first four stages, small
    /// enough to train on a CPU in seconds.
    pub fn desk(num_classes: usize) -> Self {
        Self {
            input_resolution: 32,
            width_multiplier: 0.25,
            stage_specs: MOBILENET_V2_STAGES[..4].to_vec(),
            ..Self::full(num_classes)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.num_classes < 2 {
            return fail(format!("num_classes must be at least 2, got {}", self.num_classes));
        }
        if !(self.width_multiplier > 0.0 && self.width_multiplier.is_finite()) {
            return fail(format!("width_multiplier must be positive, got {}", self.width_multiplier));
        }
        if self.input_resolution == 0 || self.input_channels == 0 {
            return fail("input resolution and channels must be positive".into());
        }
        if self.stem_channels == 0 || self.last_channels == 0 || self.head_hidden == 0 {
            return fail("stem, last and head widths must be positive".into());
        }
        if !(0.0..1.0).contains(&self.head_dropout) {
            return fail(format!("head_dropout must be in [0, 1), got {}", self.head_dropout));
        }
        for (i, s) in self.stage_specs.iter().enumerate() {
            if s.expansion == 0 || s.out_channels == 0 || s.repeats == 0 {
                return fail(format!("stage {} has a zero expansion, width or repeat count", i + 1));
            }
            if s.stride != 1 && s.stride != 2 {
                return fail(format!("stage {} stride must be 1 or 2, got {}", i + 1, s.stride));
            }
        }
        Ok(())
    }

    /// Channel count after width scaling.
    pub fn scaled(&self, channels: usize) -> usize {
        make_divisible(channels as f64 * self.width_multiplier, 8)
    }

    pub fn stem_width(&self) -> usize {
        self.scaled(self.stem_channels)
    }

    /// The final convolution never shrinks below its nominal width.
    pub fn last_width(&self) -> usize {
        make_divisible(self.last_channels as f64 * self.width_multiplier.max(1.0), 8)
    }
}
