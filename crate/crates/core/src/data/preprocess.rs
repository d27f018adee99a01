use std::path::Path;

use image::DynamicImage;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Per-channel statistics of the large natural-image corpus the standard
/// pretrained backbones were fitted on.
pub const IMAGENET_MEAN: [f32; 3] = [0.485, 0.456, 0.406];
pub const IMAGENET_STD: [f32; 3] = [0.229, 0.224, 0.225];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum ResizeFilter {
    /// Bilinear with half-pixel centers (corners not aligned).
    #[default]
    Bilinear,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PreprocessSpec {
    pub resolution: usize,
    pub channel_mean: [f32; 3],
    pub channel_std: [f32; 3],
    pub resize_filter: ResizeFilter,
}

impl PreprocessSpec {
    pub fn new(resolution: usize) -> Self {
        Self {
            resolution,
            channel_mean: IMAGENET_MEAN,
            channel_std: IMAGENET_STD,
            resize_filter: ResizeFilter::Bilinear,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.resolution == 0 {
            return Err(Error::Param("preprocess resolution must be positive".into()));
        }
        if self.channel_std.iter().any(|&s| !(s > 0.0)) {
            return Err(Error::Param(format!(
                "channel std must be positive, got {:?}",
                self.channel_std
            )));
        }
        Ok(())
    }
}

/// Resamples one `h × w` plane to `size × size`.
///
/// Source coordinates are `(dst + 0.5) · in / out − 0.5`, clamped at the
/// borders, so equal sizes reproduce the input exactly.
pub fn resize_bilinear(plane: &[f32], h: usize, w: usize, size: usize) -> Vec<f32> {
    let axis = |n_in: usize| -> Vec<(usize, usize, f32)> {
        let scale = n_in as f64 / size as f64;
        (0..size)
            .map(|d| {
                let src = ((d as f64 + 0.5) * scale - 0.5).max(0.0);
                let lo = (src.floor() as usize).min(n_in - 1);
                let hi = (lo + 1).min(n_in - 1);
                (lo, hi, (src - lo as f64) as f32)
            })
            .collect()
    };
    let ys = axis(h);
    let xs = axis(w);
    let mut out = Vec::with_capacity(size * size);
    for &(y0, y1, fy) in &ys {
        for &(x0, x1, fx) in &xs {
            let top = plane[y0 * w + x0] * (1.0 - fx) + plane[y0 * w + x1] * fx;
            let bottom = plane[y1 * w + x0] * (1.0 - fx) + plane[y1 * w + x1] * fx;
            out.push(top * (1.0 - fy) + bottom * fy);
        }
    }
    out
}

/// Converts a decoded image into a normalized `[3, R, R]` tensor.
/// Single-channel images are replicated across the three channels.
pub fn preprocess_image(img: &DynamicImage, spec: &PreprocessSpec) -> Result<Tensor> {
    spec.validate()?;
    let rgb = img.to_rgb32f();
    let (w, h) = (rgb.width() as usize, rgb.height() as usize);
    let raw = rgb.as_raw();
    let r = spec.resolution;
    let mut data = Vec::with_capacity(3 * r * r);
    for c in 0..3 {
        let plane: Vec<f32> = raw.iter().skip(c).step_by(3).copied().collect();
        let resized = resize_bilinear(&plane, h, w, r);
        let (mean, std) = (spec.channel_mean[c], spec.channel_std[c]);
        data.extend(resized.into_iter().map(|v| (v - mean) / std));
    }
    Tensor::from_vec(&[3, r, r], data)
}

/// Decode, replicate grayscale to RGB, bilinear resize, scale to `[0, 1]`
/// and normalize per channel.
pub fn load_and_preprocess(path: &Path, spec: &PreprocessSpec) -> Result<Tensor> {
    let img = image::open(path).map_err(|e| Error::Decode {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    preprocess_image(&img, spec)
}
