use super::{Element, Tensor};
use crate::error::{Error, Result};

/// Central-difference estimate of the gradient of a scalar function.
///
/// Element `i` of the result is `(f(x + h·e_i) − f(x − h·e_i)) / 2h`.
pub fn finite_difference_grad<E, F>(mut f: F, x: &Tensor<E>, h: f64) -> Result<Tensor<E>>
where
    E: Element,
    F: FnMut(&Tensor<E>) -> f64,
{
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::Param(format!("finite-difference step must be positive, got {h}")));
    }
    let mut probe = x.clone();
    probe.clear_grad();
    let mut grad = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let orig = probe.data()[i];
        probe.data_mut()[i] = E::from_acc(orig.to_acc() + h);
        let up = f(&probe);
        probe.data_mut()[i] = E::from_acc(orig.to_acc() - h);
        let down = f(&probe);
        probe.data_mut()[i] = orig;
        if !up.is_finite() || !down.is_finite() {
            return Err(Error::Oracle(format!(
                "function is not finite around element {i} (f+ = {up}, f- = {down})"
            )));
        }
        grad.push(E::from_acc((up - down) / (2.0 * h)));
    }
    Ok(Tensor::from_parts(x.shape().to_vec(), grad))
}

/// Elementwise comparison of an analytic gradient against a numeric one.
///
/// An element passes when `|a − n| ≤ rel_tol · max(|a|, |n|)` or
/// `|a − n| ≤ abs_floor`.
#[derive(Debug, Clone, Copy)]
pub struct GradCheck {
    pub rel_tol: f64,
    pub abs_floor: f64,
}

impl Default for GradCheck {
    fn default() -> Self {
        Self {
            rel_tol: 1e-3,
            abs_floor: 1e-5,
        }
    }
}

impl GradCheck {
    /// Returns the worst relative error among elements larger than the
    /// absolute floor, or a description of the first failing element.
    pub fn compare<E: Element>(&self, analytic: &[E], numeric: &[E]) -> Result<f64, String> {
        if analytic.len() != numeric.len() {
            return Err(format!(
                "length mismatch: analytic {} vs numeric {}",
                analytic.len(),
                numeric.len()
            ));
        }
        let mut worst = 0.0f64;
        for (i, (a, n)) in analytic.iter().zip(numeric).enumerate() {
            let (a, n) = (a.to_acc(), n.to_acc());
            let diff = (a - n).abs();
            let scale = a.abs().max(n.abs());
            if diff > self.abs_floor && diff > self.rel_tol * scale {
                return Err(format!(
                    "element {i}: analytic {a:.8e}, numeric {n:.8e}, rel err {:.3e}",
                    diff / scale
                ));
            }
            if scale > self.abs_floor {
                worst = worst.max(diff / scale);
            }
        }
        Ok(worst)
    }
}
