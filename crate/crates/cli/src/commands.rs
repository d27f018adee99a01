use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use log::{info, warn};
use lnkt_core::checkpoint::{import_pretrained, load_checkpoint, save_checkpoint, CheckpointMetadata};
use lnkt_core::data::{
    load_and_preprocess, scan_directory, split_train_val, synthesize_train_test, DatasetIndex, InMemoryDataset,
    Loader, PreprocessSpec, SplitMode,
};
use lnkt_core::metrics::{classification_report, collect_predictions, predict as predict_image, ConfusionMatrix};
use lnkt_core::model::{Model, TrainablePolicy};
use lnkt_core::preset::DEFAULT_TRAIN_FRACTION;
use lnkt_core::training::{fit, OptimizerConfig};

use crate::{EvalArgs, PredictArgs, SynthArgs, TrainArgs};

/// `root/<sub>` when it exists, otherwise `root`.
fn subtree(root: &Path, sub: &str) -> PathBuf {
    let candidate = root.join(sub);
    if candidate.is_dir() {
        candidate
    } else {
        root.to_path_buf()
    }
}

fn split(root: &Path, seed: u64) -> Result<(DatasetIndex, DatasetIndex)> {
    let index = scan_directory(&subtree(root, "train"))?;
    Ok(split_train_val(&index, DEFAULT_TRAIN_FRACTION, seed, SplitMode::Stratified)?)
}

fn write(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).with_context(|| format!("cannot write {}", path.display()))
}

pub fn train(args: &TrainArgs) -> Result<()> {
    let preset = args.preset();
    if args.batch == 0 {
        bail!("--batch must be at least 1");
    }
    let (train_idx, val_idx) = split(&args.data, args.seed)?;
    let class_names = train_idx.class_names.clone();
    info!(
        "{} classes {:?}: {} training and {} validation images",
        class_names.len(),
        class_names,
        train_idx.len(),
        val_idx.len()
    );
    let config = preset.model_config(class_names.len());
    let spec = PreprocessSpec::new(config.input_resolution);
    let train = Loader::new(InMemoryDataset::load(&train_idx, &spec)?, args.batch, true, args.seed);
    let val = Loader::new(InMemoryDataset::load(&val_idx, &spec)?, args.batch, false, args.seed);

    let mut model = Model::build(&config, args.seed)?;
    if let Some(path) = &args.pretrained {
        let report = import_pretrained(path, &mut model)?;
        info!("backbone initialized from {}", path.display());
        if !report.missing.is_empty() {
            warn!("{} backbone tensors not in {}", report.missing.len(), path.display());
        }
    }
    if args.freeze_backbone {
        if args.pretrained.is_none() {
            warn!("freezing a randomly initialized backbone");
        }
        model.set_trainable(TrainablePolicy::HeadOnly);
    }
    let counts = model.count_parameters();
    info!("{} parameters, {} trainable", counts.total, counts.trainable);

    let defaults = preset.optimizer();
    let optimizer = OptimizerConfig {
        learning_rate: args.lr.unwrap_or(defaults.learning_rate),
        momentum: args.momentum.unwrap_or(defaults.momentum),
        ..defaults
    };
    let (best, report) = fit(&mut model, &train, &val, args.epochs, &optimizer, args.seed)?;

    let mut metadata = CheckpointMetadata::new(config, class_names, args.seed);
    metadata.preprocess = Some(spec);
    save_checkpoint(&best, &metadata, &args.out)?;
    write(&args.report, &report.to_table())?;
    println!(
        "best epoch {} validation accuracy {:.4}; checkpoint {}",
        report.best_epoch,
        report.best_validation_accuracy,
        args.out.display()
    );
    Ok(())
}

pub fn eval(args: &EvalArgs) -> Result<()> {
    if args.batch == 0 {
        bail!("--batch must be at least 1");
    }
    let (model, metadata) = load_checkpoint(&args.ckpt, None)?;
    let test_dir = args.data.join("test");
    let index = if test_dir.is_dir() {
        scan_directory(&test_dir)?
    } else {
        info!("{} has no test/ directory; evaluating the validation split", args.data.display());
        split(&args.data, args.seed)?.1
    };
    if index.class_names != metadata.class_names {
        bail!(
            "dataset classes {:?} do not match checkpoint classes {:?}",
            index.class_names,
            metadata.class_names
        );
    }
    let spec = metadata
        .preprocess
        .unwrap_or_else(|| PreprocessSpec::new(model.config().input_resolution));
    let data = InMemoryDataset::load(&index, &spec)?;
    let (truth, predicted) = collect_predictions(&model, &data.batches(args.batch, false, 0, 0)?)?;
    let cm = ConfusionMatrix::from_labels(&truth, &predicted, index.class_names.clone())?;
    let report = classification_report(&cm)?;
    print!("{}", report.to_text());
    if let Some(path) = &args.json {
        write(path, &report.to_json())?;
    }
    Ok(())
}

pub fn predict(args: &PredictArgs) -> Result<()> {
    let (model, metadata) = load_checkpoint(&args.ckpt, None)?;
    let spec = metadata
        .preprocess
        .unwrap_or_else(|| PreprocessSpec::new(model.config().input_resolution));
    let image = load_and_preprocess(&args.image, &spec)?;
    let p = predict_image(&model, &image)?;
    let name = metadata.class_names.get(p.index).cloned().unwrap_or_else(|| p.index.to_string());
    println!("{name}\t{}\t{:.6}", p.index, p.probability);
    Ok(())
}

pub fn synth(args: &SynthArgs) -> Result<()> {
    let test = args.test_per_class.unwrap_or((args.per_class / 5).max(1));
    let (train, test) =
        synthesize_train_test(args.classes, args.per_class, test, args.resolution, args.seed, &args.out)?;
    println!(
        "wrote {} training and {} test images to {}",
        train.files,
        test.files,
        args.out.display()
    );
    Ok(())
}
