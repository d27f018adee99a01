use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{load_and_preprocess, DatasetIndex, PreprocessSpec};
use crate::error::{Error, Result};
use crate::tensor::Tensor;
use crate::training::BatchSource;

/// Images `[B, 3, R, R]` and their integer labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub images: Tensor,
    pub labels: Vec<usize>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Stacks equally shaped `[3, R, R]` images.
    pub fn stack(images: &[Tensor], labels: Vec<usize>) -> Result<Self> {
        let first = images
            .first()
            .ok_or_else(|| Error::Data("cannot stack an empty batch".into()))?;
        if images.len() != labels.len() {
            return Err(Error::Data(format!(
                "{} images but {} labels",
                images.len(),
                labels.len()
            )));
        }
        let sample_shape = first.shape().to_vec();
        let mut data = Vec::with_capacity(first.len() * images.len());
        for img in images {
            if img.shape() != sample_shape.as_slice() {
                return Err(Error::Shape(format!(
                    "batch mixes image shapes {:?} and {:?}",
                    sample_shape,
                    img.shape()
                )));
            }
            data.extend_from_slice(img.data());
        }
        let mut shape = vec![images.len()];
        shape.extend(sample_shape);
        Ok(Self {
            images: Tensor::from_vec(&shape, data)?,
            labels,
        })
    }
}

/// Sample visiting order for one epoch. With `shuffle` the permutation is
/// drawn from a generator keyed by `seed` on stream `epoch`.
pub fn epoch_order(len: usize, shuffle: bool, seed: u64, epoch: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..len).collect();
    if shuffle {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(epoch as u64);
        order.shuffle(&mut rng);
    }
    order
}

/// Lazily decodes one batch at a time from disk.
///
/// Images within a batch are decoded in parallel; their position is fixed by
/// the epoch order, never by completion time.
pub struct BatchIter<'a> {
    index: &'a DatasetIndex,
    spec: PreprocessSpec,
    order: Vec<usize>,
    batch_size: usize,
    cursor: usize,
}

impl Iterator for BatchIter<'_> {
    type Item = Result<Batch>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.cursor >= self.order.len() {
            return None;
        }
        let end = (self.cursor + self.batch_size).min(self.order.len());
        let ids = &self.order[self.cursor..end];
        self.cursor = end;
        let images: Result<Vec<Tensor>> = ids
            .par_iter()
            .map(|&i| load_and_preprocess(&self.index.samples[i].path, &self.spec))
            .collect();
        let labels = ids.iter().map(|&i| self.index.samples[i].label).collect();
        Some(images.and_then(|imgs| Batch::stack(&imgs, labels)))
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let left = (self.order.len() - self.cursor).div_ceil(self.batch_size);
        (left, Some(left))
    }
}

impl ExactSizeIterator for BatchIter<'_> {}

/// Batches of one epoch read straight from the files in `index`. The final
/// batch may be smaller than `batch_size`.
pub fn batch_iterator<'a>(
    index: &'a DatasetIndex,
    spec: &PreprocessSpec,
    batch_size: usize,
    shuffle: bool,
    seed: u64,
    epoch: usize,
) -> Result<BatchIter<'a>> {
    if batch_size == 0 {
        return Err(Error::Param("batch size must be at least 1".into()));
    }
    spec.validate()?;
    Ok(BatchIter {
        index,
        spec: *spec,
        order: epoch_order(index.len(), shuffle, seed, epoch),
        batch_size,
        cursor: 0,
    })
}

/// Every image of an index decoded once and kept in memory.
#[derive(Debug, Clone)]
pub struct InMemoryDataset {
    pub images: Vec<Tensor>,
    pub labels: Vec<usize>,
    pub class_names: Vec<String>,
}

impl InMemoryDataset {
    pub fn load(index: &DatasetIndex, spec: &PreprocessSpec) -> Result<Self> {
        spec.validate()?;
        let images = index
            .samples
            .par_iter()
            .map(|s| load_and_preprocess(&s.path, spec))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            images,
            labels: index.labels(),
            class_names: index.class_names.clone(),
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn batches(&self, batch_size: usize, shuffle: bool, seed: u64, epoch: usize) -> Result<Vec<Batch>> {
        if batch_size == 0 {
            return Err(Error::Param("batch size must be at least 1".into()));
        }
        epoch_order(self.len(), shuffle, seed, epoch)
            .chunks(batch_size)
            .map(|ids| {
                let imgs: Vec<Tensor> = ids.iter().map(|&i| self.images[i].clone()).collect();
                Batch::stack(&imgs, ids.iter().map(|&i| self.labels[i]).collect())
            })
            .collect()
    }
}

/// A preloaded dataset with fixed batching, usable as a training or
/// validation source.
#[derive(Debug, Clone)]
pub struct Loader {
    pub data: InMemoryDataset,
    pub batch_size: usize,
    pub shuffle: bool,
    pub seed: u64,
}

impl Loader {
    pub fn new(data: InMemoryDataset, batch_size: usize, shuffle: bool, seed: u64) -> Self {
        Self {
            data,
            batch_size,
            shuffle,
            seed,
        }
    }
}

impl BatchSource for Loader {
    fn batches(&self, epoch: usize) -> Result<Vec<Batch>> {
        self.data.batches(self.batch_size, self.shuffle, self.seed, epoch)
    }
}
