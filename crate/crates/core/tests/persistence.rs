use std::fs;

use lnkt_core::checkpoint::{
    import_pretrained, load_checkpoint, save_checkpoint, Checkpoint, CheckpointMetadata,
};
use lnkt_core::model::{is_head_tensor, InvertedResidualSpec, Model, ModelConfig};
use lnkt_core::{CheckpointError, Error};
use proptest::prelude::*;

fn small_config() -> ModelConfig {
    ModelConfig {
        input_resolution: 16,
        stage_specs: vec![InvertedResidualSpec::new(1, 8, 1, 1), InvertedResidualSpec::new(6, 16, 2, 2)],
        last_channels: 32,
        head_hidden: 16,
        ..ModelConfig::full(3)
    }
}

fn small_bytes() -> Vec<u8> {
    let model = Model::build(&small_config(), 5).unwrap();
    let meta = CheckpointMetadata::new(small_config(), vec!["x".into(), "y".into(), "z".into()], 5);
    Checkpoint::from_model(&model, &meta).to_bytes().unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn any_single_byte_corruption_is_detected(pos in any::<prop::sample::Index>(), xor in 1u8..=255) {
        let mut bytes = small_bytes();
        let i = pos.index(bytes.len());
        bytes[i] ^= xor;
        prop_assert!(Checkpoint::from_bytes(&bytes).is_err());
    }

    #[test]
    fn any_truncation_is_detected(cut in any::<prop::sample::Index>()) {
        let bytes = small_bytes();
        let len = cut.index(bytes.len());
        prop_assert!(Checkpoint::from_bytes(&bytes[..len]).is_err());
    }
}

#[test]
fn round_trip_keeps_metadata_and_bits() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.ckpt");
    let model = Model::build(&small_config(), 9).unwrap();
    let meta = CheckpointMetadata::new(small_config(), vec!["Lung Tumor".into(), "Normal".into(), "Pneumonia".into()], 9);
    save_checkpoint(&model, &meta, &path).unwrap();
    let (back, md) = load_checkpoint(&path, Some(&small_config())).unwrap();
    assert_eq!(md, meta);
    for (a, b) in model.tensors().iter().zip(back.tensors()) {
        assert_eq!(a.name, b.name);
        assert_eq!(a.tensor.shape(), b.tensor.shape());
        assert!(a.tensor.data().iter().zip(b.tensor.data()).all(|(x, y)| x.to_bits() == y.to_bits()));
    }
}

/// Writes a backbone-only file byte by byte, the way an external converter
/// would, without going through the library's writer.
fn converter_style_file(model: &Model, fill: impl Fn(usize) -> f32) -> (Vec<u8>, Vec<(String, Vec<f32>)>) {
    let header = br#"{"format_version":1,"source":"reference weights rev 2"}"#;
    let mut out = b"LNKT0001".to_vec();
    out.extend_from_slice(&(header.len() as u32).to_le_bytes());
    out.extend_from_slice(header);
    let backbone: Vec<_> = model.tensors().into_iter().filter(|t| !is_head_tensor(&t.name)).collect();
    out.extend_from_slice(&(backbone.len() as u32).to_le_bytes());
    let mut written = Vec::new();
    let mut counter = 0usize;
    for t in backbone {
        out.extend_from_slice(&(t.name.len() as u32).to_le_bytes());
        out.extend_from_slice(t.name.as_bytes());
        out.push(0);
        out.push(t.tensor.rank() as u8);
        for &d in t.tensor.shape() {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        let values: Vec<f32> = (0..t.tensor.len())
            .map(|_| {
                counter += 1;
                fill(counter)
            })
            .collect();
        for v in &values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        written.push((t.name.clone(), values));
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    (out, written)
}

fn head_values(model: &Model) -> Vec<Vec<f32>> {
    model
        .tensors()
        .into_iter()
        .filter(|t| is_head_tensor(&t.name))
        .map(|t| t.tensor.data().to_vec())
        .collect()
}

#[test]
fn imports_a_converter_style_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("pretrained.ckpt");
    let mut model = Model::build(&small_config(), 1).unwrap();
    let (bytes, written) = converter_style_file(&model, |i| (i as f32 * 0.001).sin());
    fs::write(&path, bytes).unwrap();

    let head_before: Vec<Vec<f32>> = head_values(&model);
    let report = import_pretrained(&path, &mut model).unwrap();
    assert_eq!(report.loaded.len(), written.len());
    assert!(report.skipped.is_empty());
    assert!(report.missing.is_empty());
    for (name, values) in &written {
        let t = model.tensors().into_iter().find(|t| &t.name == name).unwrap();
        assert_eq!(t.tensor.data(), values.as_slice(), "{name}");
    }
    assert_eq!(head_before, head_values(&model));

    model.replace_head(4, 16, 0.2).unwrap();
    let logits = model.infer(&lnkt_core::Tensor::full(&[1, 3, 16, 16], 0.1).unwrap()).unwrap();
    assert_eq!(logits.shape(), &[1, 4]);
}

#[test]
fn converter_file_without_model_config_needs_expected_config() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("pretrained.ckpt");
    let model = Model::build(&small_config(), 1).unwrap();
    fs::write(&path, converter_style_file(&model, |_| 0.5).0).unwrap();
    let err = load_checkpoint(&path, None).unwrap_err();
    assert!(matches!(err, Error::Checkpoint(CheckpointError::Malformed(_))));
    // strict load also needs the head tensors
    let err = load_checkpoint(&path, Some(&small_config())).unwrap_err();
    assert!(matches!(err, Error::Checkpoint(CheckpointError::MissingEntry(ref n)) if n.starts_with("head.")), "{err}");
}

#[test]
fn unsupported_version_is_rejected() {
    let model = Model::build(&small_config(), 1).unwrap();
    let mut meta = CheckpointMetadata::new(small_config(), vec![], 0);
    meta.format_version = 2;
    let bytes = Checkpoint::from_model(&model, &meta).to_bytes().unwrap();
    assert!(matches!(
        Checkpoint::from_bytes(&bytes),
        Err(Error::Checkpoint(CheckpointError::UnsupportedVersion(2)))
    ));
}
