use std::fs;
use std::path::{Path, PathBuf};

use image::{GrayImage, Luma};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub const MAX_SYNTH_CLASSES: usize = 10;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SynthSummary {
    pub root: PathBuf,
    pub class_names: Vec<String>,
    pub files: usize,
}

pub fn synth_class_name(k: usize) -> String {
    format!("class_{k}")
}

/// Writes `out/class_k/NNNNN.png` for each class `k`.
///
/// Every image of class `k` shows `k + 1` bright discs on a dark noisy
/// background. Discs sit in distinct cells of a coarse grid, so they never
/// overlap, and are jittered inside their cell. Each image draws from its own
/// generator keyed by `(seed, class, index)`, so output bytes depend only on
/// the arguments.
pub fn synthesize_toy_dataset(
    num_classes: usize,
    per_class: usize,
    resolution: usize,
    seed: u64,
    out: &Path,
) -> Result<SynthSummary> {
    generate(num_classes, per_class, resolution, seed, 0, out)
}

/// `out/train` and `out/test` trees drawn from disjoint generator streams.
pub fn synthesize_train_test(
    num_classes: usize,
    train_per_class: usize,
    test_per_class: usize,
    resolution: usize,
    seed: u64,
    out: &Path,
) -> Result<(SynthSummary, SynthSummary)> {
    let train = generate(num_classes, train_per_class, resolution, seed, 0, &out.join("train"))?;
    let test = generate(num_classes, test_per_class, resolution, seed, 1, &out.join("test"))?;
    Ok((train, test))
}

fn generate(
    num_classes: usize,
    per_class: usize,
    resolution: usize,
    seed: u64,
    split: u64,
    out: &Path,
) -> Result<SynthSummary> {
    if !(2..=MAX_SYNTH_CLASSES).contains(&num_classes) {
        return Err(Error::Generation(format!(
            "number of classes must be in 2..={MAX_SYNTH_CLASSES}, got {num_classes}"
        )));
    }
    if per_class == 0 {
        return Err(Error::Generation("images per class must be at least 1".into()));
    }
    if resolution < 8 {
        return Err(Error::Generation(format!("resolution must be at least 8, got {resolution}")));
    }
    let grid = (num_classes as f64).sqrt().ceil() as usize;
    let mut class_names = Vec::with_capacity(num_classes);
    for class in 0..num_classes {
        let name = synth_class_name(class);
        let dir = out.join(&name);
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        for i in 0..per_class {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream((split << 56) | ((class as u64) << 32) | i as u64);
            let img = draw(class + 1, grid, resolution, &mut rng);
            let path = dir.join(format!("{i:05}.png"));
            img.save(&path).map_err(|e| match e {
                image::ImageError::IoError(io) => Error::io(&path, io),
                other => Error::Generation(format!("{}: {other}", path.display())),
            })?;
        }
        class_names.push(name);
    }
    Ok(SynthSummary {
        root: out.to_path_buf(),
        class_names,
        files: num_classes * per_class,
    })
}

fn draw(discs: usize, grid: usize, res: usize, rng: &mut ChaCha8Rng) -> GrayImage {
    let cell = res as f64 / grid as f64;
    let background: f64 = rng.random_range(20.0..60.0);
    let mut shapes = Vec::with_capacity(discs);
    for c in sample(rng, grid * grid, discs).into_vec() {
        let radius = cell * rng.random_range(0.24..0.32);
        let slack = (cell / 2.0 - radius - 0.5).max(0.0);
        let cx = ((c % grid) as f64 + 0.5) * cell + rng.random_range(-1.0..=1.0) * slack;
        let cy = ((c / grid) as f64 + 0.5) * cell + rng.random_range(-1.0..=1.0) * slack;
        let level: f64 = rng.random_range(170.0..240.0);
        shapes.push((cx, cy, radius, level));
    }
    let mut img = GrayImage::new(res as u32, res as u32);
    for (x, y, px) in img.enumerate_pixels_mut() {
        let (fx, fy) = (x as f64 + 0.5, y as f64 + 0.5);
        let mut v = background;
        for &(cx, cy, r, level) in &shapes {
            if (fx - cx).powi(2) + (fy - cy).powi(2) <= r * r {
                v = level;
            }
        }
        v += rng.random_range(-20.0..20.0);
        *px = Luma([v.round().clamp(0.0, 255.0) as u8]);
    }
    img
}
