use crate::error::Result;
use crate::tensor::Tensor;
use crate::Element;

use super::layer::{backward_seq, forward_seq, infer_seq, ForwardCtx, Layer};

/// Expand (1×1) → depthwise (3×3) → linear project (1×1), with an identity
/// skip when the block keeps both resolution and width.
#[derive(Debug, Clone)]
pub struct InvertedResidual<E: Element = f32> {
    pub name: String,
    pub in_channels: usize,
    pub out_channels: usize,
    pub stride: usize,
    pub expansion: usize,
    /// Body layers in execution order. The projection's batch norm is last;
    /// no activation follows it.
    pub layers: Vec<Layer<E>>,
}

impl<E: Element> InvertedResidual<E> {
    pub fn has_residual(&self) -> bool {
        self.stride == 1 && self.in_channels == self.out_channels
    }

    pub fn infer(&self, x: &Tensor<E>) -> Result<Tensor<E>> {
        let h = infer_seq(&self.layers, x)?;
        if self.has_residual() {
            h.add(x)
        } else {
            Ok(h)
        }
    }

    pub fn forward(&mut self, x: &Tensor<E>, ctx: &mut ForwardCtx<'_>) -> Result<Tensor<E>> {
        let h = forward_seq(&mut self.layers, x, ctx)?;
        if self.has_residual() {
            h.add(x)
        } else {
            Ok(h)
        }
    }

    pub fn backward(&mut self, grad_out: &Tensor<E>, need_input: bool) -> Result<Option<Tensor<E>>> {
        let body = backward_seq(&mut self.layers, grad_out, need_input)?;
        Ok(match body {
            Some(g) if self.has_residual() => Some(g.add(grad_out)?),
            other => other,
        })
    }
}
