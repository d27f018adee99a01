//! Directory datasets, splitting, preprocessing, batching and a synthetic
//! dataset generator.

pub mod batch;
pub mod index;
pub mod preprocess;
pub mod split;
pub mod synth;

pub use batch::{batch_iterator, epoch_order, Batch, BatchIter, InMemoryDataset, Loader};
pub use index::{is_image_file, scan_directory, DatasetIndex, Origin, Sample, IMAGE_EXTENSIONS};
pub use preprocess::{
    load_and_preprocess, preprocess_image, resize_bilinear, PreprocessSpec, ResizeFilter, IMAGENET_MEAN,
    IMAGENET_STD,
};
pub use split::{split_train_val, SplitMode};
pub use synth::{synth_class_name, synthesize_toy_dataset, synthesize_train_test, SynthSummary, MAX_SYNTH_CLASSES};
