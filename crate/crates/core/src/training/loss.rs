use crate::error::{Error, Result};
use crate::tensor::{Element, Tensor};

/// Mean softmax cross-entropy and its gradient with respect to the logits.
///
/// `loss = −(1/N) Σ log softmax(logits)_i[label_i]` evaluated through
/// log-sum-exp; `grad = (softmax − one_hot) / N`.
pub fn cross_entropy<E: Element>(logits: &Tensor<E>, labels: &[usize]) -> Result<(f64, Tensor<E>)> {
    let &[n, k] = logits.shape() else {
        return Err(Error::Shape(format!(
            "cross entropy expects [N, K] logits, got {:?}",
            logits.shape()
        )));
    };
    if labels.len() != n {
        return Err(Error::Shape(format!(
            "{} labels for a batch of {n} logits",
            labels.len()
        )));
    }
    if let Some(&label) = labels.iter().find(|&&l| l >= k) {
        return Err(Error::Label { label, classes: k });
    }
    let mut total = 0.0f64;
    let mut grad = Vec::with_capacity(n * k);
    let inv_n = 1.0 / n as f64;
    for (row, &label) in logits.data().chunks(k).zip(labels) {
        let max = row.iter().map(|v| v.to_acc()).fold(f64::NEG_INFINITY, f64::max);
        let sum_exp: f64 = row.iter().map(|v| (v.to_acc() - max).exp()).sum();
        let lse = max + sum_exp.ln();
        total += lse - row[label].to_acc();
        for (j, v) in row.iter().enumerate() {
            let p = (v.to_acc() - max).exp() / sum_exp;
            let target = if j == label { 1.0 } else { 0.0 };
            grad.push(E::from_acc((p - target) * inv_n));
        }
    }
    Ok((total * inv_n, Tensor::from_vec(logits.shape(), grad)?))
}
