//! Finite-difference checks of every backward pass, run in f64.
//!
//! Each check builds seeded random inputs, contracts the layer output with a
//! fixed random weighting `R` so the scalar objective is `Σ y ⊙ R`, and
//! compares the analytic gradients against central differences.

use lnkt_core::model::{
    BatchNorm, Conv, ForwardCtx, InvertedResidual, InvertedResidualSpec, Layer, Model, ModelConfig, Relu6,
};
use lnkt_core::nn::{self, BatchNormParams, Conv2dParams, DenseParams, DropoutMask, Mode};
use lnkt_core::tensor::{finite_difference_grad, GradCheck};
use lnkt_core::training::cross_entropy;
use lnkt_core::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type T = Tensor<f64>;

pub const SEEDS: [u64; 3] = [11, 23, 47];
const STEP: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct Outcome {
    pub check: String,
    pub seed: u64,
    /// Worst relative error over all compared elements, or the first failure.
    pub result: Result<f64, String>,
}

impl Outcome {
    pub fn passed(&self) -> bool {
        self.result.is_ok()
    }
}

fn uniform(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> T {
    let n = shape.iter().product();
    T::from_vec(shape, (0..n).map(|_| rng.random_range(lo..hi)).collect()).unwrap()
}

/// Values in [-3, 9] kept at least 0.05 away from the ReLU6 kinks.
fn away_from_kinks(rng: &mut ChaCha8Rng, shape: &[usize]) -> T {
    let n = shape.iter().product();
    let data = (0..n)
        .map(|_| loop {
            let v: f64 = rng.random_range(-3.0..9.0);
            if (v.abs() > 0.05) && ((v - 6.0).abs() > 0.05) {
                break v;
            }
        })
        .collect();
    T::from_vec(shape, data).unwrap()
}

fn dot(a: &T, b: &T) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum()
}

fn compare(analytic: &T, numeric: &T) -> Result<f64, String> {
    if analytic.shape() != numeric.shape() {
        return Err(format!("shape {:?} vs {:?}", analytic.shape(), numeric.shape()));
    }
    GradCheck::default().compare(analytic.data(), numeric.data())
}

/// Runs every named comparison and keeps the worst error or first failure.
fn combine(parts: Vec<(&str, Result<f64, String>)>) -> Result<f64, String> {
    let mut worst = 0.0f64;
    for (what, r) in parts {
        worst = worst.max(r.map_err(|e| format!("{what}: {e}"))?);
    }
    Ok(worst)
}

fn numeric(f: impl FnMut(&T) -> f64, x: &T) -> T {
    finite_difference_grad(f, x, STEP).unwrap()
}

fn conv_case(seed: u64, c_out: usize, groups: usize, k: usize, stride: usize, bias: bool) -> Result<f64, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = uniform(&mut rng, &[2, 4, 8, 8], -1.0, 1.0);
    let params = Conv2dParams {
        weight: uniform(&mut rng, &[c_out, 4 / groups, k, k], -0.5, 0.5),
        bias: bias.then(|| uniform(&mut rng, &[c_out], -0.5, 0.5)),
        stride: (stride, stride),
        padding: (k / 2, k / 2),
        groups,
    };
    let y = nn::conv2d(&x, &params).map_err(|e| e.to_string())?;
    let r = uniform(&mut rng, y.shape(), -1.0, 1.0);
    let g = nn::conv2d_backward(&x, &params, &r).map_err(|e| e.to_string())?;
    let dx = numeric(|x| dot(&nn::conv2d(x, &params).unwrap(), &r), &x);
    let dw = numeric(
        |w| {
            let p = Conv2dParams { weight: w.clone(), ..params.clone() };
            dot(&nn::conv2d(&x, &p).unwrap(), &r)
        },
        &params.weight,
    );
    let mut parts = vec![("input", compare(&g.input, &dx)), ("weight", compare(&g.weight, &dw))];
    if let Some(b) = &params.bias {
        let db = numeric(
            |b| {
                let p = Conv2dParams { bias: Some(b.clone()), ..params.clone() };
                dot(&nn::conv2d(&x, &p).unwrap(), &r)
            },
            b,
        );
        parts.push(("bias", compare(g.bias.as_ref().ok_or("bias gradient missing")?, &db)));
    }
    combine(parts)
}

fn batchnorm_case(seed: u64) -> Result<f64, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = uniform(&mut rng, &[2, 4, 8, 8], -2.0, 3.0);
    let mut params = BatchNormParams::<f64>::new(4).unwrap();
    params.gamma = uniform(&mut rng, &[4], 0.5, 1.5);
    params.beta = uniform(&mut rng, &[4], -0.5, 0.5);
    let run = |x: &T, p: &BatchNormParams<f64>| nn::batchnorm2d_train(x, &mut p.clone()).unwrap();
    let (y, cache) = run(&x, &params);
    let r = uniform(&mut rng, y.shape(), -1.0, 1.0);
    let g = nn::batchnorm2d_backward_train(&cache, &params.gamma, &r).map_err(|e| e.to_string())?;
    let dx = numeric(|x| dot(&run(x, &params).0, &r), &x);
    let dgamma = numeric(
        |v| {
            let mut p = params.clone();
            p.gamma = v.clone();
            dot(&run(&x, &p).0, &r)
        },
        &params.gamma,
    );
    let dbeta = numeric(
        |v| {
            let mut p = params.clone();
            p.beta = v.clone();
            dot(&run(&x, &p).0, &r)
        },
        &params.beta,
    );
    combine(vec![
        ("input", compare(&g.input, &dx)),
        ("gamma", compare(&g.gamma, &dgamma)),
        ("beta", compare(&g.beta, &dbeta)),
    ])
}

fn relu6_case(seed: u64) -> Result<f64, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = away_from_kinks(&mut rng, &[2, 4, 8, 8]);
    let r = uniform(&mut rng, x.shape(), -1.0, 1.0);
    let g = nn::relu6_backward(&x, &r).map_err(|e| e.to_string())?;
    compare(&g, &numeric(|x| dot(&nn::relu6(x), &r), &x))
}

fn dense_case(seed: u64) -> Result<f64, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = uniform(&mut rng, &[2, 8], -1.0, 1.0);
    let params = DenseParams {
        weight: uniform(&mut rng, &[8, 5], -0.5, 0.5),
        bias: uniform(&mut rng, &[5], -0.5, 0.5),
    };
    let y = nn::dense(&x, &params).map_err(|e| e.to_string())?;
    let r = uniform(&mut rng, y.shape(), -1.0, 1.0);
    let g = nn::dense_backward(&x, &params, &r).map_err(|e| e.to_string())?;
    let dx = numeric(|x| dot(&nn::dense(x, &params).unwrap(), &r), &x);
    let dw = numeric(
        |w| dot(&nn::dense(&x, &DenseParams { weight: w.clone(), bias: params.bias.clone() }).unwrap(), &r),
        &params.weight,
    );
    let db = numeric(
        |b| dot(&nn::dense(&x, &DenseParams { weight: params.weight.clone(), bias: b.clone() }).unwrap(), &r),
        &params.bias,
    );
    combine(vec![
        ("input", compare(&g.input, &dx)),
        ("weight", compare(&g.weight, &dw)),
        ("bias", compare(&g.bias, &db)),
    ])
}

fn dropout_case(seed: u64) -> Result<f64, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = uniform(&mut rng, &[2, 4, 8, 8], -1.0, 1.0);
    let mask = DropoutMask::<f64>::sample(x.len(), 0.3, &mut rng).map_err(|e| e.to_string())?;
    let r = uniform(&mut rng, x.shape(), -1.0, 1.0);
    let g = nn::dropout_backward(&mask, &r).map_err(|e| e.to_string())?;
    compare(&g, &numeric(|x| dot(&mask.apply(x).unwrap(), &r), &x))
}

fn pool_case(seed: u64) -> Result<f64, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = uniform(&mut rng, &[2, 4, 8, 8], -1.0, 1.0);
    let r = uniform(&mut rng, &[2, 4], -1.0, 1.0);
    let g = nn::global_average_pool_backward(x.shape(), &r).map_err(|e| e.to_string())?;
    compare(&g, &numeric(|x| dot(&nn::global_average_pool(x).unwrap(), &r), &x))
}

fn softmax_case(seed: u64) -> Result<f64, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = uniform(&mut rng, &[4, 5], -3.0, 3.0);
    let r = uniform(&mut rng, &[4, 5], -1.0, 1.0);
    let p = nn::softmax(&x).map_err(|e| e.to_string())?;
    let g = nn::softmax_backward(&p, &r).map_err(|e| e.to_string())?;
    compare(&g, &numeric(|x| dot(&nn::softmax(x).unwrap(), &r), &x))
}

fn cross_entropy_case(seed: u64) -> Result<f64, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = uniform(&mut rng, &[4, 5], -3.0, 3.0);
    let labels: Vec<usize> = (0..4).map(|_| rng.random_range(0..5)).collect();
    let (_, g) = cross_entropy(&x, &labels).map_err(|e| e.to_string())?;
    compare(&g, &numeric(|x| cross_entropy(x, &labels).unwrap().0, &x))
}

/// A tiny network in f64 with every layer kind of the real model.
pub fn tiny_config() -> ModelConfig {
    ModelConfig {
        input_resolution: 8,
        input_channels: 3,
        width_multiplier: 1.0,
        stem_channels: 8,
        last_channels: 16,
        stage_specs: vec![InvertedResidualSpec::new(1, 8, 1, 1), InvertedResidualSpec::new(6, 8, 2, 2)],
        head_hidden: 8,
        head_dropout: 0.25,
        num_classes: 3,
    }
}

/// Loads `value` into the tensor called `name`.
fn set_tensor(layers: &mut [Layer<f64>], name: &str, value: &T) {
    let mut all = Vec::new();
    layers.iter_mut().for_each(|l| l.tensors_mut(&mut all));
    let t = all.into_iter().find(|t| t.name == name).expect("tensor exists");
    t.tensor.data_mut().copy_from_slice(value.data());
}

fn param_snapshot(layers: &[Layer<f64>]) -> Vec<(String, T, Option<Vec<f64>>)> {
    let mut all = Vec::new();
    layers.iter().for_each(|l| l.tensors(&mut all));
    all.into_iter()
        .filter(|t| t.kind.is_parameter())
        .map(|t| (t.name.clone(), t.tensor.clone(), t.tensor.grad().map(<[f64]>::to_vec)))
        .collect()
}

fn hand_block(seed: u64) -> InvertedResidual<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut conv = |name: &str, c_in: usize, c_out: usize, k: usize, groups: usize| {
        Layer::Conv(Conv::new(
            format!("block.{name}.conv"),
            Conv2dParams {
                weight: uniform(&mut rng, &[c_out, c_in / groups, k, k], -0.5, 0.5),
                bias: None,
                stride: (1, 1),
                padding: (k / 2, k / 2),
                groups,
            },
        ))
    };
    let bn = |name: &str, c: usize| Layer::BatchNorm(BatchNorm::new(format!("block.{name}.bn"), BatchNormParams::new(c).unwrap()));
    let act = |name: &str| Layer::Relu6(Relu6::new(format!("block.{name}.act")));
    let layers = vec![
        conv("expand", 4, 24, 1, 1),
        bn("expand", 24),
        act("expand"),
        conv("depthwise", 24, 24, 3, 24),
        bn("depthwise", 24),
        act("depthwise"),
        conv("project", 24, 4, 1, 1),
        bn("project", 4),
    ];
    InvertedResidual { name: "block".into(), in_channels: 4, out_channels: 4, stride: 1, expansion: 6, layers }
}

/// A residual inverted block `[2, 4, 8, 8]` in train mode: input and every
/// parameter.
fn block_case(seed: u64) -> Result<f64, String> {
    let template = hand_block(seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xB10C);
    let x = uniform(&mut rng, &[2, 4, 8, 8], -1.0, 1.0);
    let mut block = template.clone();
    let mut drop_rng = ChaCha8Rng::seed_from_u64(0);
    let mut run = |b: &mut InvertedResidual<f64>, x: &T| {
        let mut ctx = ForwardCtx { mode: Mode::Train, rng: &mut drop_rng };
        b.forward(x, &mut ctx).unwrap()
    };
    let y = run(&mut block, &x);
    let r = uniform(&mut rng, y.shape(), -1.0, 1.0);
    let dx = block.backward(&r, true).map_err(|e| e.to_string())?.ok_or("no input gradient")?;
    let mut parts = vec![(
        "input".to_string(),
        compare(&dx, &numeric(|x| dot(&run(&mut template.clone(), x), &r), &x)),
    )];
    for (name, value, grad) in param_snapshot(&block.layers) {
        let grad = T::from_vec(value.shape(), grad.ok_or(format!("{name}: no gradient"))?).unwrap();
        let num = numeric(
            |v| {
                let mut b = template.clone();
                set_tensor(&mut b.layers, &name, v);
                dot(&run(&mut b, &x), &r)
            },
            &value,
        );
        parts.push((name, compare(&grad, &num)));
    }
    combine(parts.iter().map(|(n, r)| (n.as_str(), r.clone())).collect())
}

/// The whole tiny network in train mode under cross-entropy, with the
/// dropout stream reseeded before every forward pass so the mask is fixed.
fn model_case(seed: u64) -> Result<f64, String> {
    let template = Model::<f64>::build(&tiny_config(), seed).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xE2E);
    let x = uniform(&mut rng, &[2, 3, 8, 8], -1.0, 1.0);
    let labels = vec![rng.random_range(0..3), rng.random_range(0..3)];
    let loss = |m: &mut Model<f64>, x: &T| {
        m.set_mode(Mode::Train);
        m.reseed_dropout(seed);
        let logits = m.forward(x).unwrap();
        cross_entropy(&logits, &labels).unwrap()
    };
    let mut model = template.clone();
    model.zero_grad();
    let (_, g) = loss(&mut model, &x);
    let dx = model.backward_with_input(&g).map_err(|e| e.to_string())?;
    let mut parts = vec![(
        "input".to_string(),
        compare(&dx, &numeric(|x| loss(&mut template.clone(), x).0, &x)),
    )];
    for (name, value, grad) in param_snapshot(model.layers()) {
        let grad = T::from_vec(value.shape(), grad.ok_or(format!("{name}: no gradient"))?).unwrap();
        let num = numeric(
            |v| {
                let mut m = template.clone();
                for t in m.tensors_mut() {
                    if t.name == name {
                        t.tensor.data_mut().copy_from_slice(v.data());
                    }
                }
                loss(&mut m, &x).0
            },
            &value,
        );
        parts.push((name, compare(&grad, &num)));
    }
    combine(parts.iter().map(|(n, r)| (n.as_str(), r.clone())).collect())
}

type Case = fn(u64) -> Result<f64, String>;

pub fn cases() -> Vec<(&'static str, Case)> {
    vec![
        ("conv2d standard 3x3", |s| conv_case(s, 3, 1, 3, 1, true)),
        ("conv2d standard 3x3 stride 2", |s| conv_case(s, 6, 1, 3, 2, false)),
        ("conv2d grouped", |s| conv_case(s, 4, 2, 3, 1, true)),
        ("conv2d depthwise", |s| conv_case(s, 4, 4, 3, 1, false)),
        ("conv2d depthwise stride 2", |s| conv_case(s, 4, 4, 3, 2, false)),
        ("conv2d pointwise", |s| conv_case(s, 6, 1, 1, 1, false)),
        ("batchnorm2d train", batchnorm_case),
        ("relu6", relu6_case),
        ("dense", dense_case),
        ("dropout fixed mask", dropout_case),
        ("global average pool", pool_case),
        ("softmax", softmax_case),
        ("softmax + cross-entropy", cross_entropy_case),
        ("inverted residual block", block_case),
        ("tiny model end to end", model_case),
    ]
}

pub fn run_all() -> Vec<Outcome> {
    let mut out = Vec::new();
    for (name, case) in cases() {
        for seed in SEEDS {
            out.push(Outcome { check: name.to_string(), seed, result: case(seed) });
        }
    }
    out
}
