use crate::error::{Error, Result};
use crate::tensor::{Element, Tensor};

pub const DEFAULT_EPSILON: f64 = 1e-5;
pub const DEFAULT_MOMENTUM: f64 = 0.1;

/// Per-channel batch normalization state.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNormParams<E = f32> {
    pub gamma: Tensor<E>,
    pub beta: Tensor<E>,
    pub running_mean: Tensor<E>,
    pub running_var: Tensor<E>,
    pub momentum: f64,
    pub epsilon: f64,
}

impl<E: Element> BatchNormParams<E> {
    /// `gamma = 1`, `beta = 0`, running mean 0 and running variance 1.
    pub fn new(channels: usize) -> Result<Self> {
        Ok(Self {
            gamma: Tensor::full(&[channels], E::one())?,
            beta: Tensor::zeros(&[channels])?,
            running_mean: Tensor::zeros(&[channels])?,
            running_var: Tensor::full(&[channels], E::one())?,
            momentum: DEFAULT_MOMENTUM,
            epsilon: DEFAULT_EPSILON,
        })
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }

    fn check(&self, shape: &[usize]) -> Result<(usize, usize, usize)> {
        let &[n, c, h, w] = shape else {
            return Err(Error::Shape(format!(
                "batchnorm2d input must be [N, C, H, W], got {shape:?}"
            )));
        };
        if c != self.channels() {
            return Err(Error::Shape(format!(
                "batchnorm2d has {} channels, input has {c}",
                self.channels()
            )));
        }
        if !(self.epsilon > 0.0) || !(self.momentum > 0.0 && self.momentum <= 1.0) {
            return Err(Error::Param(format!(
                "batchnorm2d needs epsilon > 0 and momentum in (0, 1], got {} and {}",
                self.epsilon, self.momentum
            )));
        }
        Ok((n, c, h * w))
    }
}

/// Values saved by a train-mode forward pass for the backward pass.
#[derive(Debug, Clone)]
pub struct BatchNormCache<E = f32> {
    shape: Vec<usize>,
    normalized: Vec<E>,
    inv_std: Vec<f64>,
}

/// Train-mode normalization with batch statistics.
///
/// Running statistics move toward the batch by `momentum`; the running
/// variance tracks the unbiased batch variance while normalization itself
/// uses the biased one.
pub fn batchnorm2d_train<E: Element>(
    input: &Tensor<E>,
    params: &mut BatchNormParams<E>,
) -> Result<(Tensor<E>, BatchNormCache<E>)> {
    let (n, c, plane) = params.check(input.shape())?;
    let count = n * plane;
    if count < 2 {
        return Err(Error::DegenerateBatch(count));
    }
    let x = input.data();
    let mut out = vec![E::zero(); x.len()];
    let mut normalized = vec![E::zero(); x.len()];
    let mut inv_std = vec![0.0f64; c];
    for ch in 0..c {
        let samples = || (0..n).flat_map(move |b| (b * c + ch) * plane..(b * c + ch + 1) * plane);
        let mean = samples().map(|i| x[i].to_acc()).sum::<f64>() / count as f64;
        let var = samples()
            .map(|i| {
                let d = x[i].to_acc() - mean;
                d * d
            })
            .sum::<f64>()
            / count as f64;
        let istd = 1.0 / (var + params.epsilon).sqrt();
        inv_std[ch] = istd;
        let gamma = params.gamma.data()[ch].to_acc();
        let beta = params.beta.data()[ch].to_acc();
        for i in samples() {
            let xhat = (x[i].to_acc() - mean) * istd;
            normalized[i] = E::from_acc(xhat);
            out[i] = E::from_acc(gamma * xhat + beta);
        }
        let m = params.momentum;
        let unbiased = var * count as f64 / (count - 1) as f64;
        let rm = &mut params.running_mean.data_mut()[ch];
        *rm = E::from_acc((1.0 - m) * rm.to_acc() + m * mean);
        let rv = &mut params.running_var.data_mut()[ch];
        *rv = E::from_acc((1.0 - m) * rv.to_acc() + m * unbiased);
    }
    Ok((
        Tensor::from_parts(input.shape().to_vec(), out),
        BatchNormCache {
            shape: input.shape().to_vec(),
            normalized,
            inv_std,
        },
    ))
}

/// Eval-mode normalization with the running statistics.
pub fn batchnorm2d_eval<E: Element>(input: &Tensor<E>, params: &BatchNormParams<E>) -> Result<Tensor<E>> {
    let (_, c, plane) = params.check(input.shape())?;
    let (scale, shift) = eval_affine(params);
    let mut out = input.data().to_vec();
    for (i, chunk) in out.chunks_mut(plane).enumerate() {
        let ch = i % c;
        for v in chunk {
            *v = E::from_acc(v.to_acc() * scale[ch] + shift[ch]);
        }
    }
    Ok(Tensor::from_parts(input.shape().to_vec(), out))
}

/// Eval-mode normalization folded into `y = scale·x + shift` per channel.
fn eval_affine<E: Element>(params: &BatchNormParams<E>) -> (Vec<f64>, Vec<f64>) {
    (0..params.channels())
        .map(|ch| {
            let istd = 1.0 / (params.running_var.data()[ch].to_acc() + params.epsilon).sqrt();
            let scale = params.gamma.data()[ch].to_acc() * istd;
            let shift = params.beta.data()[ch].to_acc() - params.running_mean.data()[ch].to_acc() * scale;
            (scale, shift)
        })
        .unzip()
}

/// Mode-dispatching wrapper; train mode updates the running statistics.
pub fn batchnorm2d<E: Element>(
    input: &Tensor<E>,
    params: &mut BatchNormParams<E>,
    mode: super::Mode,
) -> Result<Tensor<E>> {
    match mode {
        super::Mode::Train => batchnorm2d_train(input, params).map(|(out, _)| out),
        super::Mode::Eval => batchnorm2d_eval(input, params),
    }
}

#[derive(Debug, Clone)]
pub struct BatchNormGrads<E = f32> {
    pub input: Tensor<E>,
    pub gamma: Tensor<E>,
    pub beta: Tensor<E>,
}

/// Backward pass through train-mode normalization.
pub fn batchnorm2d_backward_train<E: Element>(
    cache: &BatchNormCache<E>,
    gamma: &Tensor<E>,
    grad_out: &Tensor<E>,
) -> Result<BatchNormGrads<E>> {
    if grad_out.shape() != cache.shape.as_slice() {
        return Err(Error::Shape(format!(
            "batchnorm2d output gradient {:?} does not match cached shape {:?}",
            grad_out.shape(),
            cache.shape
        )));
    }
    let (n, c, plane) = (cache.shape[0], cache.shape[1], cache.shape[2] * cache.shape[3]);
    let count = (n * plane) as f64;
    let dy = grad_out.data();
    let mut dx = vec![E::zero(); dy.len()];
    let mut dgamma = vec![E::zero(); c];
    let mut dbeta = vec![E::zero(); c];
    for ch in 0..c {
        let samples = || (0..n).flat_map(move |b| (b * c + ch) * plane..(b * c + ch + 1) * plane);
        let (mut sum_dy, mut sum_dy_xhat) = (0.0f64, 0.0f64);
        for i in samples() {
            sum_dy += dy[i].to_acc();
            sum_dy_xhat += dy[i].to_acc() * cache.normalized[i].to_acc();
        }
        dbeta[ch] = E::from_acc(sum_dy);
        dgamma[ch] = E::from_acc(sum_dy_xhat);
        let k = gamma.data()[ch].to_acc() * cache.inv_std[ch] / count;
        for i in samples() {
            let xhat = cache.normalized[i].to_acc();
            dx[i] = E::from_acc(k * (count * dy[i].to_acc() - sum_dy - xhat * sum_dy_xhat));
        }
    }
    Ok(BatchNormGrads {
        input: Tensor::from_parts(cache.shape.clone(), dx),
        gamma: Tensor::from_parts(vec![c], dgamma),
        beta: Tensor::from_parts(vec![c], dbeta),
    })
}

/// Backward pass through eval-mode normalization (statistics held fixed).
pub fn batchnorm2d_backward_eval<E: Element>(
    input: &Tensor<E>,
    params: &BatchNormParams<E>,
    grad_out: &Tensor<E>,
) -> Result<BatchNormGrads<E>> {
    let (_, c, plane) = params.check(input.shape())?;
    if grad_out.shape() != input.shape() {
        return Err(Error::Shape(format!(
            "batchnorm2d output gradient {:?} does not match input {:?}",
            grad_out.shape(),
            input.shape()
        )));
    }
    let (scale, _) = eval_affine(params);
    let mut dx = vec![E::zero(); input.len()];
    let mut dgamma = vec![0.0f64; c];
    let mut dbeta = vec![0.0f64; c];
    for (i, (dxc, (dyc, xc))) in dx
        .chunks_mut(plane)
        .zip(grad_out.data().chunks(plane).zip(input.data().chunks(plane)))
        .enumerate()
    {
        let ch = i % c;
        let mean = params.running_mean.data()[ch].to_acc();
        let istd = 1.0 / (params.running_var.data()[ch].to_acc() + params.epsilon).sqrt();
        for ((d, &g), &x) in dxc.iter_mut().zip(dyc).zip(xc) {
            *d = E::from_acc(g.to_acc() * scale[ch]);
            dgamma[ch] += g.to_acc() * (x.to_acc() - mean) * istd;
            dbeta[ch] += g.to_acc();
        }
    }
    Ok(BatchNormGrads {
        input: Tensor::from_parts(input.shape().to_vec(), dx),
        gamma: Tensor::from_parts(vec![c], dgamma.into_iter().map(E::from_acc).collect()),
        beta: Tensor::from_parts(vec![c], dbeta.into_iter().map(E::from_acc).collect()),
    })
}
