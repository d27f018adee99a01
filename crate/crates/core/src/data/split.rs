use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::DatasetIndex;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SplitMode {
    /// Each class contributes `⌈fraction · n_c⌉` samples to the train side,
    /// always leaving at least one for validation.
    #[default]
    Stratified,
    /// One shuffle over all samples; `⌈fraction · n⌉` go to train, at most `n - 1`.
    Random,
}

/// Seeded train/validation partition. Both halves keep the input's sample
/// order and label encoding.
pub fn split_train_val(
    index: &DatasetIndex,
    fraction: f64,
    seed: u64,
    mode: SplitMode,
) -> Result<(DatasetIndex, DatasetIndex)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::Split(format!("train fraction must be in (0, 1), got {fraction}")));
    }
    let counts = index.class_counts();
    if let Some((label, &n)) = counts.iter().enumerate().find(|(_, &n)| n < 2) {
        return Err(Error::Split(format!(
            "class {:?} has {n} sample(s); at least 2 are needed",
            index.class_names[label]
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut to_train = vec![false; index.len()];
    let take = |n: usize| ((fraction * n as f64).ceil() as usize).min(n - 1);
    match mode {
        SplitMode::Stratified => {
            for label in 0..index.num_classes() {
                let mut members: Vec<usize> = (0..index.len())
                    .filter(|&i| index.samples[i].label == label)
                    .collect();
                members.shuffle(&mut rng);
                for &i in &members[..take(members.len())] {
                    to_train[i] = true;
                }
            }
        }
        SplitMode::Random => {
            let mut all: Vec<usize> = (0..index.len()).collect();
            all.shuffle(&mut rng);
            for &i in &all[..take(all.len())] {
                to_train[i] = true;
            }
        }
    }
    let (train, val): (Vec<_>, Vec<_>) = index
        .samples
        .iter()
        .cloned()
        .zip(to_train)
        .partition(|(_, t)| *t);
    let side = |samples: Vec<_>| DatasetIndex {
        samples: samples.into_iter().map(|(s, _)| s).collect(),
        class_names: index.class_names.clone(),
        origin: index.origin,
        skipped_files: 0,
    };
    Ok((side(train), side(val)))
}
