use crate::error::{Error, Result};
use crate::tensor::{Element, Tensor};

/// `min(max(x, 0), 6)` elementwise.
pub fn relu6<E: Element>(input: &Tensor<E>) -> Tensor<E> {
    let six = E::from_f64(6.0).unwrap();
    let data = input
        .data()
        .iter()
        .map(|&x| x.max(E::zero()).min(six))
        .collect();
    Tensor::from_parts(input.shape().to_vec(), data)
}

/// Gradient passes only where `0 < x < 6`.
pub fn relu6_backward<E: Element>(input: &Tensor<E>, grad_out: &Tensor<E>) -> Result<Tensor<E>> {
    if input.shape() != grad_out.shape() {
        return Err(Error::Shape(format!(
            "relu6 gradient {:?} does not match input {:?}",
            grad_out.shape(),
            input.shape()
        )));
    }
    let six = E::from_f64(6.0).unwrap();
    let data = input
        .data()
        .iter()
        .zip(grad_out.data())
        .map(|(&x, &g)| if x > E::zero() && x < six { g } else { E::zero() })
        .collect();
    Ok(Tensor::from_parts(input.shape().to_vec(), data))
}
