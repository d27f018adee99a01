use crate::error::{Error, Result};
use crate::tensor::{Element, Tensor};

/// Per-channel spatial mean: `[N, C, H, W] -> [N, C]`.
pub fn global_average_pool<E: Element>(input: &Tensor<E>) -> Result<Tensor<E>> {
    let &[n, c, h, w] = input.shape() else {
        return Err(Error::Shape(format!(
            "global average pool needs [N, C, H, W], got {:?}",
            input.shape()
        )));
    };
    let plane = h * w;
    let data = input
        .data()
        .chunks(plane)
        .map(|p| E::from_acc(p.iter().map(|v| v.to_acc()).sum::<f64>() / plane as f64))
        .collect();
    Ok(Tensor::from_parts(vec![n, c], data))
}

/// Spreads each pooled gradient evenly over its spatial plane.
pub fn global_average_pool_backward<E: Element>(
    input_shape: &[usize],
    grad_out: &Tensor<E>,
) -> Result<Tensor<E>> {
    let &[n, c, h, w] = input_shape else {
        return Err(Error::Shape(format!(
            "global average pool needs [N, C, H, W], got {input_shape:?}"
        )));
    };
    if grad_out.shape() != [n, c] {
        return Err(Error::Shape(format!(
            "pooled gradient {:?} does not match [{n}, {c}]",
            grad_out.shape()
        )));
    }
    let plane = h * w;
    let inv = 1.0 / plane as f64;
    let data = grad_out
        .data()
        .iter()
        .flat_map(|&g| std::iter::repeat_n(E::from_acc(g.to_acc() * inv), plane))
        .collect();
    Ok(Tensor::from_parts(input_shape.to_vec(), data))
}
