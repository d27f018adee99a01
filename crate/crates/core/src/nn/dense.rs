use crate::error::{Error, Result};
use crate::tensor::{gemm, Element, Tensor};

/// Fully connected layer parameters, `y = x·W + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseParams<E = f32> {
    /// `[in_features, out_features]`
    pub weight: Tensor<E>,
    /// `[out_features]`
    pub bias: Tensor<E>,
}

impl<E: Element> DenseParams<E> {
    pub fn in_features(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn out_features(&self) -> usize {
        self.weight.shape()[1]
    }

    fn check(&self, input: &Tensor<E>) -> Result<usize> {
        if self.weight.rank() != 2 || self.bias.shape() != [self.out_features()] {
            return Err(Error::Shape(format!(
                "dense parameters inconsistent: weight {:?}, bias {:?}",
                self.weight.shape(),
                self.bias.shape()
            )));
        }
        match input.shape() {
            &[n, f] if f == self.in_features() => Ok(n),
            s => Err(Error::Shape(format!(
                "dense layer expects [N, {}] input, got {s:?}",
                self.in_features()
            ))),
        }
    }
}

pub fn dense<E: Element>(input: &Tensor<E>, params: &DenseParams<E>) -> Result<Tensor<E>> {
    let n = params.check(input)?;
    let (fi, fo) = (params.in_features(), params.out_features());
    let mut out: Vec<E> = params.bias.data().iter().copied().cycle().take(n * fo).collect();
    gemm(n, fi, fo, input.data(), false, params.weight.data(), false, &mut out, true);
    Ok(Tensor::from_parts(vec![n, fo], out))
}

#[derive(Debug, Clone)]
pub struct DenseGrads<E = f32> {
    pub input: Tensor<E>,
    pub weight: Tensor<E>,
    pub bias: Tensor<E>,
}

pub fn dense_backward<E: Element>(
    input: &Tensor<E>,
    params: &DenseParams<E>,
    grad_out: &Tensor<E>,
) -> Result<DenseGrads<E>> {
    let n = params.check(input)?;
    let (fi, fo) = (params.in_features(), params.out_features());
    if grad_out.shape() != [n, fo] {
        return Err(Error::Shape(format!(
            "dense output gradient {:?} does not match [{n}, {fo}]",
            grad_out.shape()
        )));
    }
    let dy = grad_out.data();
    let mut dx = vec![E::zero(); n * fi];
    gemm(n, fo, fi, dy, false, params.weight.data(), true, &mut dx, false);
    let mut dw = vec![E::zero(); fi * fo];
    gemm(fi, n, fo, input.data(), true, dy, false, &mut dw, false);
    let mut db = vec![0.0f64; fo];
    for row in dy.chunks(fo) {
        db.iter_mut().zip(row).for_each(|(a, v)| *a += v.to_acc());
    }
    Ok(DenseGrads {
        input: Tensor::from_parts(vec![n, fi], dx),
        weight: Tensor::from_parts(vec![fi, fo], dw),
        bias: Tensor::from_parts(vec![fo], db.into_iter().map(E::from_acc).collect()),
    })
}
