use rand::Rng;

use super::Mode;
use crate::error::{Error, Result};
use crate::tensor::{Element, Tensor};

/// Per-element multipliers applied by a train-mode dropout pass:
/// `0` for dropped elements, `1 / (1 − rate)` for survivors.
#[derive(Debug, Clone, PartialEq)]
pub struct DropoutMask<E = f32> {
    pub scale: Vec<E>,
}

impl<E: Element> DropoutMask<E> {
    /// Draws one uniform per element from `rng`.
    pub fn sample(len: usize, rate: f64, rng: &mut impl Rng) -> Result<Self> {
        check_rate(rate)?;
        let keep = E::from_acc(1.0 / (1.0 - rate));
        let scale = (0..len)
            .map(|_| {
                if rng.random::<f64>() < rate {
                    E::zero()
                } else {
                    keep
                }
            })
            .collect();
        Ok(Self { scale })
    }

    pub fn apply(&self, input: &Tensor<E>) -> Result<Tensor<E>> {
        if self.scale.len() != input.len() {
            return Err(Error::Shape(format!(
                "dropout mask of length {} for tensor of length {}",
                self.scale.len(),
                input.len()
            )));
        }
        let data = input.data().iter().zip(&self.scale).map(|(&x, &s)| x * s).collect();
        Ok(Tensor::from_parts(input.shape().to_vec(), data))
    }
}

fn check_rate(rate: f64) -> Result<()> {
    if (0.0..1.0).contains(&rate) {
        Ok(())
    } else {
        Err(Error::Param(format!("dropout rate must be in [0, 1), got {rate}")))
    }
}

/// Inverted dropout. Eval mode returns the input unchanged; train mode also
/// returns the mask so the backward pass can reuse it.
pub fn dropout<E: Element>(
    input: &Tensor<E>,
    rate: f64,
    mode: Mode,
    rng: &mut impl Rng,
) -> Result<(Tensor<E>, Option<DropoutMask<E>>)> {
    check_rate(rate)?;
    match mode {
        Mode::Eval => Ok((input.clone(), None)),
        Mode::Train => {
            let mask = DropoutMask::sample(input.len(), rate, rng)?;
            Ok((mask.apply(input)?, Some(mask)))
        }
    }
}

/// Same multiplication as the forward pass.
pub fn dropout_backward<E: Element>(mask: &DropoutMask<E>, grad_out: &Tensor<E>) -> Result<Tensor<E>> {
    mask.apply(grad_out)
}
