//! MobileNetV2-style backbone with a replaceable classification head.
//!
//! Layout, with canonical layer names:
//!
//! ```text
//! stem.{conv,bn,act}                      3×3 conv, stride 2
//! stage{S}.block{B}.expand.{conv,bn,act}  1×1, omitted when t = 1
//! stage{S}.block{B}.depthwise.{conv,bn,act}
//! stage{S}.block{B}.project.{conv,bn}     linear bottleneck
//! final.{conv,bn,act}                     1×1 to the last width
//! pool                                    global average pool
//! head.{fc1,act,dropout,fc2}              classification head
//! ```
//!
//! Stage and block indices start at 1. Tensor names append `.weight`,
//! `.bias`, `.gamma`, `.beta`, `.running_mean` or `.running_var`. Everything
//! before `head.` is the backbone.

pub mod block;
pub mod config;
pub mod layer;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

pub use block::InvertedResidual;
pub use config::{make_divisible, InvertedResidualSpec, ModelConfig, MOBILENET_V2_STAGES};
pub use layer::{
    BatchNorm, Conv, Dense, Dropout, ForwardCtx, GlobalAvgPool, Layer, NamedTensor, NamedTensorMut,
    Relu6, TensorKind,
};

use crate::error::{Error, Result};
use crate::nn::{BatchNormParams, Conv2dParams, DenseParams, Mode};
use crate::tensor::{Element, Tensor};

pub const HEAD_PREFIX: &str = "head.";

/// Which parameters receive gradient updates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TrainablePolicy {
    #[default]
    All,
    /// Backbone frozen, head trainable.
    HeadOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamCount {
    pub total: usize,
    pub trainable: usize,
}

pub fn is_head_tensor(name: &str) -> bool {
    name.starts_with(HEAD_PREFIX)
}

#[derive(Debug, Clone)]
pub struct Model<E: Element = f32> {
    config: ModelConfig,
    layers: Vec<Layer<E>>,
    head_start: usize,
    mode: Mode,
    init_rng: ChaCha8Rng,
    dropout_rng: ChaCha8Rng,
}

/// Conv weights ~ N(0, 2 / fan_out) with fan_out = C_out·kH·kW.
fn conv<E: Element>(
    name: &str,
    c_in: usize,
    c_out: usize,
    kernel: usize,
    stride: usize,
    groups: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Layer<E>> {
    let fan_out = c_out * kernel * kernel;
    let normal = Normal::new(0.0, (2.0 / fan_out as f64).sqrt()).expect("positive std");
    let len = c_out * (c_in / groups) * kernel * kernel;
    let weight = Tensor::from_vec(
        &[c_out, c_in / groups, kernel, kernel],
        (0..len).map(|_| E::from_acc(normal.sample(rng))).collect(),
    )?;
    Ok(Layer::Conv(Conv::new(
        format!("{name}.conv"),
        Conv2dParams {
            weight,
            bias: None,
            stride: (stride, stride),
            padding: (kernel / 2, kernel / 2),
            groups,
        },
    )))
}

fn bn<E: Element>(name: &str, channels: usize) -> Result<Layer<E>> {
    Ok(Layer::BatchNorm(BatchNorm::new(
        format!("{name}.bn"),
        BatchNormParams::new(channels)?,
    )))
}

fn act<E: Element>(name: &str) -> Layer<E> {
    Layer::Relu6(Relu6::new(format!("{name}.act")))
}

/// Weights and biases ~ U(−1/√fan_in, 1/√fan_in).
fn dense<E: Element>(name: &str, fan_in: usize, fan_out: usize, rng: &mut ChaCha8Rng) -> Result<Layer<E>> {
    let bound = (1.0 / fan_in as f64).sqrt();
    let mut draw = |n: usize| -> Vec<E> {
        (0..n)
            .map(|_| E::from_acc(rng.random_range(-bound..bound)))
            .collect()
    };
    let weight = Tensor::from_vec(&[fan_in, fan_out], draw(fan_in * fan_out))?;
    let bias = Tensor::from_vec(&[fan_out], draw(fan_out))?;
    Ok(Layer::Dense(Dense::new(name, DenseParams { weight, bias })))
}

fn inverted_residual<E: Element>(
    name: String,
    c_in: usize,
    c_out: usize,
    stride: usize,
    expansion: usize,
    rng: &mut ChaCha8Rng,
) -> Result<InvertedResidual<E>> {
    let hidden = c_in * expansion;
    let mut layers = Vec::with_capacity(8);
    if expansion != 1 {
        let p = format!("{name}.expand");
        layers.push(conv(&p, c_in, hidden, 1, 1, 1, rng)?);
        layers.push(bn(&p, hidden)?);
        layers.push(act(&p));
    }
    let p = format!("{name}.depthwise");
    layers.push(conv(&p, hidden, hidden, 3, stride, hidden, rng)?);
    layers.push(bn(&p, hidden)?);
    layers.push(act(&p));
    let p = format!("{name}.project");
    layers.push(conv(&p, hidden, c_out, 1, 1, 1, rng)?);
    layers.push(bn(&p, c_out)?);
    Ok(InvertedResidual {
        name,
        in_channels: c_in,
        out_channels: c_out,
        stride,
        expansion,
        layers,
    })
}

fn build_head<E: Element>(
    features: usize,
    hidden: usize,
    dropout: f64,
    num_classes: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<Layer<E>>> {
    Ok(vec![
        dense("head.fc1", features, hidden, rng)?,
        Layer::Relu6(Relu6::new("head.act")),
        Layer::Dropout(Dropout::new("head.dropout", dropout)),
        dense("head.fc2", hidden, num_classes, rng)?,
    ])
}

impl<E: Element> Model<E> {
    /// Builds the backbone and head from `config` with seed-controlled
    /// initialization. Batch norms start at `gamma = 1`, `beta = 0`.
    pub fn build(config: &ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut layers = Vec::new();

        let stem = config.stem_width();
        layers.push(conv("stem", config.input_channels, stem, 3, 2, 1, &mut rng)?);
        layers.push(bn("stem", stem)?);
        layers.push(act("stem"));

        let mut c_in = stem;
        for (s, spec) in config.stage_specs.iter().enumerate() {
            let c_out = config.scaled(spec.out_channels);
            for b in 0..spec.repeats {
                let stride = if b == 0 { spec.stride } else { 1 };
                let name = format!("stage{}.block{}", s + 1, b + 1);
                layers.push(Layer::InvertedResidual(inverted_residual(
                    name,
                    c_in,
                    c_out,
                    stride,
                    spec.expansion,
                    &mut rng,
                )?));
                c_in = c_out;
            }
        }

        let last = config.last_width();
        layers.push(conv("final", c_in, last, 1, 1, 1, &mut rng)?);
        layers.push(bn("final", last)?);
        layers.push(act("final"));
        layers.push(Layer::GlobalAvgPool(GlobalAvgPool::new("pool")));

        let head_start = layers.len();
        layers.extend(build_head(
            last,
            config.head_hidden,
            config.head_dropout,
            config.num_classes,
            &mut rng,
        )?);

        Ok(Self {
            config: config.clone(),
            layers,
            head_start,
            mode: Mode::Eval,
            init_rng: rng,
            dropout_rng: ChaCha8Rng::seed_from_u64(seed ^ 0x9E37_79B9_7F4A_7C15),
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn layers(&self) -> &[Layer<E>] {
        &self.layers
    }

    pub fn backbone(&self) -> &[Layer<E>] {
        &self.layers[..self.head_start]
    }

    pub fn head(&self) -> &[Layer<E>] {
        &self.layers[self.head_start..]
    }

    pub fn blocks(&self) -> impl Iterator<Item = &InvertedResidual<E>> {
        self.layers.iter().filter_map(|l| match l {
            Layer::InvertedResidual(b) => Some(b),
            _ => None,
        })
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn set_mode(&mut self, mode: Mode) {
        self.mode = mode;
        if mode == Mode::Eval {
            self.clear_caches();
        }
    }

    /// Restarts the dropout stream.
    pub fn reseed_dropout(&mut self, seed: u64) {
        self.dropout_rng = ChaCha8Rng::seed_from_u64(seed);
    }

    /// Swaps in a freshly initialized head. Backbone tensors are untouched.
    pub fn replace_head(&mut self, num_classes: usize, head_hidden: usize, head_dropout: f64) -> Result<()> {
        let mut config = self.config.clone();
        config.num_classes = num_classes;
        config.head_hidden = head_hidden;
        config.head_dropout = head_dropout;
        config.validate()?;
        let head = build_head(
            self.config.last_width(),
            head_hidden,
            head_dropout,
            num_classes,
            &mut self.init_rng,
        )?;
        self.layers.truncate(self.head_start);
        self.layers.extend(head);
        self.config = config;
        Ok(())
    }

    pub fn set_trainable(&mut self, policy: TrainablePolicy) {
        let head_start = self.head_start;
        for (i, layer) in self.layers.iter_mut().enumerate() {
            let trainable = match policy {
                TrainablePolicy::All => true,
                TrainablePolicy::HeadOnly => i >= head_start,
            };
            layer.set_trainable(trainable);
        }
    }

    fn check_input(&self, batch: &Tensor<E>) -> Result<()> {
        let c = &self.config;
        match batch.shape() {
            &[_, ch, h, w] if ch == c.input_channels && h == c.input_resolution && w == c.input_resolution => Ok(()),
            s => Err(Error::Shape(format!(
                "model expects [N, {}, {r}, {r}] input, got {s:?}",
                c.input_channels,
                r = c.input_resolution
            ))),
        }
    }

    /// Logits for `batch` according to the current mode.
    pub fn forward(&mut self, batch: &Tensor<E>) -> Result<Tensor<E>> {
        self.check_input(batch)?;
        let mut ctx = ForwardCtx {
            mode: self.mode,
            rng: &mut self.dropout_rng,
        };
        layer::forward_seq(&mut self.layers, batch, &mut ctx)
    }

    /// Eval-mode logits; a pure function of parameters and input.
    pub fn infer(&self, batch: &Tensor<E>) -> Result<Tensor<E>> {
        self.check_input(batch)?;
        layer::infer_seq(&self.layers, batch)
    }

    /// Pooled backbone features `[N, C_last]` in eval mode.
    pub fn features(&self, batch: &Tensor<E>) -> Result<Tensor<E>> {
        self.check_input(batch)?;
        layer::infer_seq(self.backbone(), batch)
    }

    /// Backpropagates from the logits of the last train-mode forward pass,
    /// accumulating into trainable parameter gradients.
    pub fn backward(&mut self, grad_logits: &Tensor<E>) -> Result<()> {
        layer::backward_seq(&mut self.layers, grad_logits, false)?;
        Ok(())
    }

    /// Same as [`backward`](Self::backward) but also returns the gradient
    /// with respect to the input batch.
    pub fn backward_with_input(&mut self, grad_logits: &Tensor<E>) -> Result<Tensor<E>> {
        layer::backward_seq(&mut self.layers, grad_logits, true)?
            .ok_or_else(|| Error::Param("input gradient was not produced".into()))
    }

    /// Every parameter and buffer in canonical order.
    pub fn tensors(&self) -> Vec<NamedTensor<'_, E>> {
        let mut out = Vec::new();
        self.layers.iter().for_each(|l| l.tensors(&mut out));
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<NamedTensorMut<'_, E>> {
        let mut out = Vec::new();
        self.layers.iter_mut().for_each(|l| l.tensors_mut(&mut out));
        out
    }

    pub fn parameters(&self) -> Vec<NamedTensor<'_, E>> {
        self.tensors().into_iter().filter(|t| t.kind.is_parameter()).collect()
    }

    pub fn parameters_mut(&mut self) -> Vec<NamedTensorMut<'_, E>> {
        self.tensors_mut()
            .into_iter()
            .filter(|t| t.kind.is_parameter())
            .collect()
    }

    pub fn count_parameters(&self) -> ParamCount {
        self.parameters().iter().fold(ParamCount { total: 0, trainable: 0 }, |acc, p| {
            let n = p.tensor.len();
            ParamCount {
                total: acc.total + n,
                trainable: acc.trainable + if p.kind.is_trainable() { n } else { 0 },
            }
        })
    }

    /// Allocates zeroed gradients on trainable parameters and drops them on
    /// frozen ones.
    pub fn zero_grad(&mut self) {
        for p in self.parameters_mut() {
            if p.kind.is_trainable() {
                p.tensor.zero_grad();
            } else {
                p.tensor.clear_grad();
            }
        }
    }

    pub fn clear_caches(&mut self) {
        self.layers.iter_mut().for_each(Layer::clear_cache);
    }

    /// An independent copy without activation caches or gradients.
    pub fn snapshot(&self) -> Self {
        let mut copy = self.clone();
        copy.clear_caches();
        for t in copy.tensors_mut() {
            t.tensor.clear_grad();
        }
        copy
    }
}
