use crate::error::{Error, Result};
use crate::tensor::{Element, Tensor};

fn rows<E: Element>(t: &Tensor<E>, what: &str) -> Result<usize> {
    match t.shape() {
        &[_, k] => Ok(k),
        s => Err(Error::Shape(format!("{what} expects [N, K], got {s:?}"))),
    }
}

/// Row-wise softmax with max subtraction.
pub fn softmax<E: Element>(logits: &Tensor<E>) -> Result<Tensor<E>> {
    let k = rows(logits, "softmax")?;
    let mut out = Vec::with_capacity(logits.len());
    for row in logits.data().chunks(k) {
        let max = row.iter().map(|v| v.to_acc()).fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = row.iter().map(|v| (v.to_acc() - max).exp()).collect();
        let total: f64 = exps.iter().sum();
        out.extend(exps.into_iter().map(|e| E::from_acc(e / total)));
    }
    Ok(Tensor::from_parts(logits.shape().to_vec(), out))
}

/// Row-wise `log(softmax(x))` via log-sum-exp.
pub fn log_softmax<E: Element>(logits: &Tensor<E>) -> Result<Tensor<E>> {
    let k = rows(logits, "log_softmax")?;
    let mut out = Vec::with_capacity(logits.len());
    for row in logits.data().chunks(k) {
        let max = row.iter().map(|v| v.to_acc()).fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|v| (v.to_acc() - max).exp()).sum::<f64>().ln();
        out.extend(row.iter().map(|v| E::from_acc(v.to_acc() - lse)));
    }
    Ok(Tensor::from_parts(logits.shape().to_vec(), out))
}

/// Vector-Jacobian product through softmax given its output `probs`:
/// `dx_i = p_i · (g_i − Σ_j g_j p_j)`.
pub fn softmax_backward<E: Element>(probs: &Tensor<E>, grad_out: &Tensor<E>) -> Result<Tensor<E>> {
    let k = rows(probs, "softmax_backward")?;
    if probs.shape() != grad_out.shape() {
        return Err(Error::Shape(format!(
            "softmax gradient {:?} does not match {:?}",
            grad_out.shape(),
            probs.shape()
        )));
    }
    let mut out = Vec::with_capacity(probs.len());
    for (p, g) in probs.data().chunks(k).zip(grad_out.data().chunks(k)) {
        let dot: f64 = p.iter().zip(g).map(|(a, b)| a.to_acc() * b.to_acc()).sum();
        out.extend(
            p.iter()
                .zip(g)
                .map(|(a, b)| E::from_acc(a.to_acc() * (b.to_acc() - dot))),
        );
    }
    Ok(Tensor::from_parts(probs.shape().to_vec(), out))
}
