//! Stateful layers: parameters, trainable flags and the activations a
//! train-mode forward pass caches for the backward pass.

use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::nn::{self, BatchNormCache, BatchNormParams, Conv2dParams, DenseParams, DropoutMask, Mode};
use crate::tensor::{Element, Tensor};

use super::block::InvertedResidual;

/// Whether a named tensor is learned or a running statistic.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TensorKind {
    Parameter { trainable: bool },
    Buffer,
}

impl TensorKind {
    pub fn is_parameter(self) -> bool {
        matches!(self, TensorKind::Parameter { .. })
    }

    pub fn is_trainable(self) -> bool {
        matches!(self, TensorKind::Parameter { trainable: true })
    }
}

#[derive(Debug)]
pub struct NamedTensor<'a, E> {
    pub name: String,
    pub tensor: &'a Tensor<E>,
    pub kind: TensorKind,
}

#[derive(Debug)]
pub struct NamedTensorMut<'a, E> {
    pub name: String,
    pub tensor: &'a mut Tensor<E>,
    pub kind: TensorKind,
}

/// Per-call state for a forward pass.
pub struct ForwardCtx<'a> {
    pub mode: Mode,
    pub rng: &'a mut ChaCha8Rng,
}

fn missing_cache(name: &str) -> Error {
    Error::Param(format!("backward through {name} without a train-mode forward pass"))
}

#[derive(Debug, Clone)]
pub struct Conv<E: Element = f32> {
    pub name: String,
    pub params: Conv2dParams<E>,
    pub trainable: bool,
    input: Option<Tensor<E>>,
}

impl<E: Element> Conv<E> {
    pub fn new(name: impl Into<String>, params: Conv2dParams<E>) -> Self {
        Self {
            name: name.into(),
            params,
            trainable: true,
            input: None,
        }
    }

    pub fn is_depthwise(&self) -> bool {
        let s = self.params.weight.shape();
        s[1] == 1 && self.params.groups == s[0] && self.params.groups > 1
    }

    pub fn is_pointwise(&self) -> bool {
        let s = self.params.weight.shape();
        s[2] == 1 && s[3] == 1
    }
}

#[derive(Debug, Clone)]
enum BatchNormTrace<E> {
    Batch(BatchNormCache<E>),
    Running(Tensor<E>),
}

#[derive(Debug, Clone)]
pub struct BatchNorm<E: Element = f32> {
    pub name: String,
    pub params: BatchNormParams<E>,
    /// Frozen batch norms normalize with running statistics in both modes
    /// and never update them.
    pub trainable: bool,
    trace: Option<BatchNormTrace<E>>,
}

impl<E: Element> BatchNorm<E> {
    pub fn new(name: impl Into<String>, params: BatchNormParams<E>) -> Self {
        Self {
            name: name.into(),
            params,
            trainable: true,
            trace: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Relu6<E: Element = f32> {
    pub name: String,
    input: Option<Tensor<E>>,
}

impl<E: Element> Relu6<E> {
    pub fn new(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            input: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Dense<E: Element = f32> {
    pub name: String,
    pub params: DenseParams<E>,
    pub trainable: bool,
    input: Option<Tensor<E>>,
}

impl<E: Element> Dense<E> {
    pub fn new(name: impl Into<String>, params: DenseParams<E>) -> Self {
        Self {
            name: name.into(),
            params,
            trainable: true,
            input: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Dropout<E: Element = f32> {
    pub name: String,
    pub rate: f64,
    mask: Option<DropoutMask<E>>,
}

impl<E: Element> Dropout<E> {
    pub fn new(name: impl Into<String>, rate: f64) -> Self {
        Self {
            name: name.into(),
            rate,
            mask: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GlobalAvgPool {
    pub name: String,
    input_shape: Option<Vec<usize>>,
}

impl GlobalAvgPool {
    pub fn new(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            input_shape: None,
        }
    }
}

#[derive(Debug, Clone)]
pub enum Layer<E: Element = f32> {
    Conv(Conv<E>),
    BatchNorm(BatchNorm<E>),
    Relu6(Relu6<E>),
    Dense(Dense<E>),
    Dropout(Dropout<E>),
    GlobalAvgPool(GlobalAvgPool),
    InvertedResidual(InvertedResidual<E>),
}

impl<E: Element> Layer<E> {
    pub fn name(&self) -> &str {
        match self {
            Layer::Conv(l) => &l.name,
            Layer::BatchNorm(l) => &l.name,
            Layer::Relu6(l) => &l.name,
            Layer::Dense(l) => &l.name,
            Layer::Dropout(l) => &l.name,
            Layer::GlobalAvgPool(l) => &l.name,
            Layer::InvertedResidual(b) => &b.name,
        }
    }

    /// Eval-mode forward pass; never touches layer state.
    pub fn infer(&self, x: &Tensor<E>) -> Result<Tensor<E>> {
        match self {
            Layer::Conv(l) => nn::conv2d(x, &l.params),
            Layer::BatchNorm(l) => nn::batchnorm2d_eval(x, &l.params),
            Layer::Relu6(_) => Ok(nn::relu6(x)),
            Layer::Dense(l) => nn::dense(x, &l.params),
            Layer::Dropout(_) => Ok(x.clone()),
            Layer::GlobalAvgPool(_) => nn::global_average_pool(x),
            Layer::InvertedResidual(b) => b.infer(x),
        }
    }

    /// Mode-aware forward pass. Train mode caches what backward needs,
    /// updates batch-norm running statistics and draws dropout masks.
    pub fn forward(&mut self, x: &Tensor<E>, ctx: &mut ForwardCtx<'_>) -> Result<Tensor<E>> {
        if ctx.mode == Mode::Eval {
            return self.infer(x);
        }
        match self {
            Layer::Conv(l) => {
                let y = nn::conv2d(x, &l.params)?;
                l.input = Some(x.clone());
                Ok(y)
            }
            Layer::BatchNorm(l) => {
                if l.trainable {
                    let (y, cache) = nn::batchnorm2d_train(x, &mut l.params)?;
                    l.trace = Some(BatchNormTrace::Batch(cache));
                    Ok(y)
                } else {
                    let y = nn::batchnorm2d_eval(x, &l.params)?;
                    l.trace = Some(BatchNormTrace::Running(x.clone()));
                    Ok(y)
                }
            }
            Layer::Relu6(l) => {
                l.input = Some(x.clone());
                Ok(nn::relu6(x))
            }
            Layer::Dense(l) => {
                let y = nn::dense(x, &l.params)?;
                l.input = Some(x.clone());
                Ok(y)
            }
            Layer::Dropout(l) => {
                let (y, mask) = nn::dropout(x, l.rate, Mode::Train, ctx.rng)?;
                l.mask = mask;
                Ok(y)
            }
            Layer::GlobalAvgPool(l) => {
                l.input_shape = Some(x.shape().to_vec());
                nn::global_average_pool(x)
            }
            Layer::InvertedResidual(b) => b.forward(x, ctx),
        }
    }

    /// Backpropagates `grad_out`, accumulating gradients into trainable
    /// parameters. Returns the input gradient when `need_input` is set.
    pub fn backward(&mut self, grad_out: &Tensor<E>, need_input: bool) -> Result<Option<Tensor<E>>> {
        match self {
            Layer::Conv(l) => {
                let x = l.input.take().ok_or_else(|| missing_cache(&l.name))?;
                if !l.trainable && !need_input {
                    return Ok(None);
                }
                let g = nn::conv2d_backward(&x, &l.params, grad_out)?;
                if l.trainable {
                    l.params.weight.accumulate_grad(g.weight.data())?;
                    if let (Some(b), Some(gb)) = (&mut l.params.bias, &g.bias) {
                        b.accumulate_grad(gb.data())?;
                    }
                }
                Ok(need_input.then_some(g.input))
            }
            Layer::BatchNorm(l) => {
                let trace = l.trace.take().ok_or_else(|| missing_cache(&l.name))?;
                let g = match trace {
                    BatchNormTrace::Batch(cache) => {
                        nn::batchnorm2d_backward_train(&cache, &l.params.gamma, grad_out)?
                    }
                    BatchNormTrace::Running(x) => nn::batchnorm2d_backward_eval(&x, &l.params, grad_out)?,
                };
                if l.trainable {
                    l.params.gamma.accumulate_grad(g.gamma.data())?;
                    l.params.beta.accumulate_grad(g.beta.data())?;
                }
                Ok(need_input.then_some(g.input))
            }
            Layer::Relu6(l) => {
                let x = l.input.take().ok_or_else(|| missing_cache(&l.name))?;
                Ok(if need_input {
                    Some(nn::relu6_backward(&x, grad_out)?)
                } else {
                    None
                })
            }
            Layer::Dense(l) => {
                let x = l.input.take().ok_or_else(|| missing_cache(&l.name))?;
                let g = nn::dense_backward(&x, &l.params, grad_out)?;
                if l.trainable {
                    l.params.weight.accumulate_grad(g.weight.data())?;
                    l.params.bias.accumulate_grad(g.bias.data())?;
                }
                Ok(need_input.then_some(g.input))
            }
            Layer::Dropout(l) => {
                let mask = l.mask.take().ok_or_else(|| missing_cache(&l.name))?;
                Ok(if need_input {
                    Some(nn::dropout_backward(&mask, grad_out)?)
                } else {
                    None
                })
            }
            Layer::GlobalAvgPool(l) => {
                let shape = l.input_shape.take().ok_or_else(|| missing_cache(&l.name))?;
                Ok(if need_input {
                    Some(nn::global_average_pool_backward(&shape, grad_out)?)
                } else {
                    None
                })
            }
            Layer::InvertedResidual(b) => b.backward(grad_out, need_input),
        }
    }

    /// Appends every parameter and buffer, in canonical order.
    pub fn tensors<'a>(&'a self, out: &mut Vec<NamedTensor<'a, E>>) {
        let param = |trainable| TensorKind::Parameter { trainable };
        match self {
            Layer::Conv(l) => {
                out.push(NamedTensor {
                    name: format!("{}.weight", l.name),
                    tensor: &l.params.weight,
                    kind: param(l.trainable),
                });
                if let Some(b) = &l.params.bias {
                    out.push(NamedTensor {
                        name: format!("{}.bias", l.name),
                        tensor: b,
                        kind: param(l.trainable),
                    });
                }
            }
            Layer::BatchNorm(l) => {
                let p = &l.params;
                for (role, tensor, kind) in [
                    ("gamma", &p.gamma, param(l.trainable)),
                    ("beta", &p.beta, param(l.trainable)),
                    ("running_mean", &p.running_mean, TensorKind::Buffer),
                    ("running_var", &p.running_var, TensorKind::Buffer),
                ] {
                    out.push(NamedTensor {
                        name: format!("{}.{role}", l.name),
                        tensor,
                        kind,
                    });
                }
            }
            Layer::Dense(l) => {
                out.push(NamedTensor {
                    name: format!("{}.weight", l.name),
                    tensor: &l.params.weight,
                    kind: param(l.trainable),
                });
                out.push(NamedTensor {
                    name: format!("{}.bias", l.name),
                    tensor: &l.params.bias,
                    kind: param(l.trainable),
                });
            }
            Layer::InvertedResidual(b) => b.layers.iter().for_each(|l| l.tensors(out)),
            Layer::Relu6(_) | Layer::Dropout(_) | Layer::GlobalAvgPool(_) => {}
        }
    }

    pub fn tensors_mut<'a>(&'a mut self, out: &mut Vec<NamedTensorMut<'a, E>>) {
        let param = |trainable| TensorKind::Parameter { trainable };
        match self {
            Layer::Conv(l) => {
                let kind = param(l.trainable);
                out.push(NamedTensorMut {
                    name: format!("{}.weight", l.name),
                    tensor: &mut l.params.weight,
                    kind,
                });
                if let Some(b) = &mut l.params.bias {
                    out.push(NamedTensorMut {
                        name: format!("{}.bias", l.name),
                        tensor: b,
                        kind,
                    });
                }
            }
            Layer::BatchNorm(l) => {
                let kind = param(l.trainable);
                let p = &mut l.params;
                for (role, tensor, kind) in [
                    ("gamma", &mut p.gamma, kind),
                    ("beta", &mut p.beta, kind),
                    ("running_mean", &mut p.running_mean, TensorKind::Buffer),
                    ("running_var", &mut p.running_var, TensorKind::Buffer),
                ] {
                    out.push(NamedTensorMut {
                        name: format!("{}.{role}", l.name),
                        tensor,
                        kind,
                    });
                }
            }
            Layer::Dense(l) => {
                let kind = param(l.trainable);
                out.push(NamedTensorMut {
                    name: format!("{}.weight", l.name),
                    tensor: &mut l.params.weight,
                    kind,
                });
                out.push(NamedTensorMut {
                    name: format!("{}.bias", l.name),
                    tensor: &mut l.params.bias,
                    kind,
                });
            }
            Layer::InvertedResidual(b) => b.layers.iter_mut().for_each(|l| l.tensors_mut(out)),
            Layer::Relu6(_) | Layer::Dropout(_) | Layer::GlobalAvgPool(_) => {}
        }
    }

    pub fn has_trainable(&self) -> bool {
        match self {
            Layer::Conv(l) => l.trainable,
            Layer::BatchNorm(l) => l.trainable,
            Layer::Dense(l) => l.trainable,
            Layer::InvertedResidual(b) => b.layers.iter().any(Layer::has_trainable),
            Layer::Relu6(_) | Layer::Dropout(_) | Layer::GlobalAvgPool(_) => false,
        }
    }

    pub fn set_trainable(&mut self, trainable: bool) {
        match self {
            Layer::Conv(l) => l.trainable = trainable,
            Layer::BatchNorm(l) => l.trainable = trainable,
            Layer::Dense(l) => l.trainable = trainable,
            Layer::InvertedResidual(b) => b.layers.iter_mut().for_each(|l| l.set_trainable(trainable)),
            Layer::Relu6(_) | Layer::Dropout(_) | Layer::GlobalAvgPool(_) => {}
        }
    }

    pub fn clear_cache(&mut self) {
        match self {
            Layer::Conv(l) => l.input = None,
            Layer::BatchNorm(l) => l.trace = None,
            Layer::Relu6(l) => l.input = None,
            Layer::Dense(l) => l.input = None,
            Layer::Dropout(l) => l.mask = None,
            Layer::GlobalAvgPool(l) => l.input_shape = None,
            Layer::InvertedResidual(b) => b.layers.iter_mut().for_each(Layer::clear_cache),
        }
    }
}

/// Runs `layers` in order.
pub(crate) fn forward_seq<E: Element>(
    layers: &mut [Layer<E>],
    x: &Tensor<E>,
    ctx: &mut ForwardCtx<'_>,
) -> Result<Tensor<E>> {
    let mut h = x.clone();
    for layer in layers {
        h = layer.forward(&h, ctx)?;
    }
    Ok(h)
}

pub(crate) fn infer_seq<E: Element>(layers: &[Layer<E>], x: &Tensor<E>) -> Result<Tensor<E>> {
    let mut h = x.clone();
    for layer in layers {
        h = layer.infer(&h)?;
    }
    Ok(h)
}

/// Backpropagates through `layers` in reverse. Stops as soon as no earlier
/// layer holds a trainable parameter, unless the caller needs the gradient
/// with respect to the sequence input.
pub(crate) fn backward_seq<E: Element>(
    layers: &mut [Layer<E>],
    grad_out: &Tensor<E>,
    need_input: bool,
) -> Result<Option<Tensor<E>>> {
    // trainable_before[i]: some layer in 0..i has a trainable parameter
    let mut trainable_before = Vec::with_capacity(layers.len());
    let mut any = false;
    for l in layers.iter() {
        trainable_before.push(any);
        any |= l.has_trainable();
    }
    let mut grad = grad_out.clone();
    for i in (0..layers.len()).rev() {
        let wants_input = need_input || trainable_before[i];
        match layers[i].backward(&grad, wants_input)? {
            Some(g) => grad = g,
            None => {
                layers[..i].iter_mut().for_each(Layer::clear_cache);
                return Ok(None);
            }
        }
    }
    Ok(Some(grad))
}
