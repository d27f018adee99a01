//! Dense row-major tensors and the numeric kernels the layers are built on.
//!
//! Every kernel is generic over [`Element`]. Models, training and checkpoints
//! run on `f32`; the `f64` instantiation exists so that gradient checks can
//! run the exact same code without single-precision rounding swamping the
//! central differences.

mod gradcheck;
mod ops;

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, MulAssign, SubAssign};

use num_traits::{Float, FromPrimitive};

use crate::error::{Error, Result};

pub use gradcheck::{finite_difference_grad, GradCheck};
pub use ops::{ElementwiseOp, Operand, ReduceOp};
pub(crate) use ops::gemm;

/// Scalar type a [`Tensor`] can hold.
pub trait Element:
    Float
    + FromPrimitive
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + Sum
    + AddAssign
    + SubAssign
    + MulAssign
    + 'static
{
    fn to_acc(self) -> f64;
    fn from_acc(v: f64) -> Self;
}

impl Element for f32 {
    #[inline(always)]
    fn to_acc(self) -> f64 {
        self as f64
    }
    #[inline(always)]
    fn from_acc(v: f64) -> Self {
        v as f32
    }
}

impl Element for f64 {
    #[inline(always)]
    fn to_acc(self) -> f64 {
        self
    }
    #[inline(always)]
    fn from_acc(v: f64) -> Self {
        v
    }
}

/// Initial contents for [`Tensor::new`].
#[derive(Debug, Clone)]
pub enum Fill<E> {
    Scalar(E),
    Buffer(Vec<E>),
}

impl<E> From<Vec<E>> for Fill<E> {
    fn from(v: Vec<E>) -> Self {
        Fill::Buffer(v)
    }
}

impl From<f32> for Fill<f32> {
    fn from(v: f32) -> Self {
        Fill::Scalar(v)
    }
}

impl From<f64> for Fill<f64> {
    fn from(v: f64) -> Self {
        Fill::Scalar(v)
    }
}

#[derive(Clone, PartialEq)]
pub struct Tensor<E = f32> {
    shape: Vec<usize>,
    data: Vec<E>,
    grad: Option<Vec<E>>,
}

impl<E: Debug> Debug for Tensor<E> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        const PREVIEW: usize = 8;
        let mut s = f.debug_struct("Tensor");
        s.field("shape", &self.shape);
        if self.data.len() <= PREVIEW {
            s.field("data", &self.data);
        } else {
            s.field("data[..8]", &&self.data[..PREVIEW]);
        }
        s.field("has_grad", &self.grad.is_some()).finish()
    }
}

fn check_extents(shape: &[usize]) -> Result<usize> {
    if shape.is_empty() {
        return Err(Error::Shape("tensor shape must have at least one extent".into()));
    }
    if let Some(axis) = shape.iter().position(|&d| d == 0) {
        return Err(Error::Shape(format!(
            "extent {axis} of shape {shape:?} is zero"
        )));
    }
    Ok(shape.iter().product())
}

impl<E: Element> Tensor<E> {
    pub fn new(shape: &[usize], fill: impl Into<Fill<E>>) -> Result<Self> {
        let len = check_extents(shape)?;
        let data = match fill.into() {
            Fill::Scalar(v) => vec![v; len],
            Fill::Buffer(buf) => {
                if buf.len() != len {
                    return Err(Error::Shape(format!(
                        "buffer of length {} does not fit shape {shape:?} (length {len})",
                        buf.len()
                    )));
                }
                buf
            }
        };
        Ok(Self {
            shape: shape.to_vec(),
            data,
            grad: None,
        })
    }

    pub fn from_vec(shape: &[usize], data: Vec<E>) -> Result<Self> {
        Self::new(shape, Fill::Buffer(data))
    }

    pub fn full(shape: &[usize], value: E) -> Result<Self> {
        Self::new(shape, Fill::Scalar(value))
    }

    pub fn zeros(shape: &[usize]) -> Result<Self> {
        Self::full(shape, E::zero())
    }

    /// Identity matrix of size `n`.
    pub fn eye(n: usize) -> Result<Self> {
        let mut t = Self::zeros(&[n, n])?;
        for i in 0..n {
            t.data[i * n + i] = E::one();
        }
        Ok(t)
    }

    /// Builds a tensor from parts already known to be consistent.
    pub(crate) fn from_parts(shape: Vec<usize>, data: Vec<E>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Self {
            shape,
            data,
            grad: None,
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[E] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [E] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<E> {
        self.data
    }

    pub fn grad(&self) -> Option<&[E]> {
        self.grad.as_deref()
    }

    pub fn grad_mut(&mut self) -> Option<&mut [E]> {
        self.grad.as_deref_mut()
    }

    /// Adds `g` into the gradient buffer, allocating it on first use.
    pub fn accumulate_grad(&mut self, g: &[E]) -> Result<()> {
        if g.len() != self.data.len() {
            return Err(Error::Shape(format!(
                "gradient of length {} for tensor of length {}",
                g.len(),
                self.data.len()
            )));
        }
        match &mut self.grad {
            Some(buf) => buf.iter_mut().zip(g).for_each(|(b, &v)| *b += v),
            None => self.grad = Some(g.to_vec()),
        }
        Ok(())
    }

    /// Zeroes the gradient buffer, allocating it if absent.
    pub fn zero_grad(&mut self) {
        match &mut self.grad {
            Some(buf) => buf.iter_mut().for_each(|v| *v = E::zero()),
            None => self.grad = Some(vec![E::zero(); self.data.len()]),
        }
    }

    pub fn clear_grad(&mut self) {
        self.grad = None;
    }

    pub fn reshape(mut self, shape: &[usize]) -> Result<Self> {
        let len = check_extents(shape)?;
        if len != self.data.len() {
            return Err(Error::Shape(format!(
                "cannot reshape {:?} into {shape:?}",
                self.shape
            )));
        }
        self.shape = shape.to_vec();
        Ok(self)
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Converts every element to another precision.
    pub fn cast<T: Element>(&self) -> Tensor<T> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|v| T::from_acc(v.to_acc())).collect(),
            grad: self
                .grad
                .as_ref()
                .map(|g| g.iter().map(|v| T::from_acc(v.to_acc())).collect()),
        }
    }
}
