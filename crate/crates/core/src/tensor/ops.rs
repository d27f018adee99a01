use rayon::prelude::*;

use super::{Element, Tensor};
use crate::error::{Error, Result};

/// Work (m·k·n) above which [`Tensor::matmul`] splits rows across threads.
const PAR_THRESHOLD: usize = 1 << 16;

/// `out = op(a) · op(b)`, or `out += ...` when `accumulate` is set.
///
/// `op(a)` is `[m, k]`: `a` is stored `[m, k]`, or `[k, m]` when `a_trans`.
/// `op(b)` is `[k, n]`: `b` is stored `[k, n]`, or `[n, k]` when `b_trans`.
/// Sums are carried in f64 and rounded once per output element, so the
/// result depends only on the inputs, never on threading.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm<E: Element>(
    m: usize,
    k: usize,
    n: usize,
    a: &[E],
    a_trans: bool,
    b: &[E],
    b_trans: bool,
    out: &mut [E],
    accumulate: bool,
) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(out.len(), m * n);
    let mut a_row = vec![0.0f64; k];
    let mut acc = vec![0.0f64; n];
    for (i, out_row) in out.chunks_mut(n).enumerate() {
        gemm_row(i, m, k, n, a, a_trans, b, b_trans, &mut a_row, &mut acc);
        store_row(out_row, &acc, accumulate);
    }
}

#[allow(clippy::too_many_arguments)]
#[inline]
fn gemm_row<E: Element>(
    i: usize,
    m: usize,
    k: usize,
    n: usize,
    a: &[E],
    a_trans: bool,
    b: &[E],
    b_trans: bool,
    a_row: &mut [f64],
    acc: &mut [f64],
) {
    if a_trans {
        for (p, slot) in a_row.iter_mut().enumerate() {
            *slot = a[p * m + i].to_acc();
        }
    } else {
        for (slot, v) in a_row.iter_mut().zip(&a[i * k..(i + 1) * k]) {
            *slot = v.to_acc();
        }
    }
    if b_trans {
        for (j, out) in acc.iter_mut().enumerate() {
            let b_row = &b[j * k..(j + 1) * k];
            *out = a_row.iter().zip(b_row).map(|(x, y)| x * y.to_acc()).sum();
        }
    } else {
        acc.iter_mut().for_each(|v| *v = 0.0);
        for (p, &av) in a_row.iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            let b_row = &b[p * n..(p + 1) * n];
            for (out, bv) in acc.iter_mut().zip(b_row) {
                *out += av * bv.to_acc();
            }
        }
    }
}

#[inline]
fn store_row<E: Element>(out_row: &mut [E], acc: &[f64], accumulate: bool) {
    if accumulate {
        for (o, &v) in out_row.iter_mut().zip(acc) {
            *o = E::from_acc(o.to_acc() + v);
        }
    } else {
        for (o, &v) in out_row.iter_mut().zip(acc) {
            *o = E::from_acc(v);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ElementwiseOp {
    Add,
    Sub,
    Mul,
    /// Multiplies by the operand; normally used with a scalar.
    Scale,
}

/// Right-hand side of an elementwise operation.
#[derive(Debug, Clone, Copy)]
pub enum Operand<'a, E> {
    Tensor(&'a Tensor<E>),
    Scalar(E),
}

impl<'a, E> From<&'a Tensor<E>> for Operand<'a, E> {
    fn from(t: &'a Tensor<E>) -> Self {
        Operand::Tensor(t)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReduceOp {
    Sum,
    Mean,
    Argmax,
}

impl<E: Element> Tensor<E> {
    /// Matrix product of `[M, K]` and `[K, N]`.
    pub fn matmul(&self, rhs: &Tensor<E>) -> Result<Tensor<E>> {
        let (&[m, k], &[k2, n]) = (self.shape(), rhs.shape()) else {
            return Err(Error::Shape(format!(
                "matmul needs two matrices, got {:?} and {:?}",
                self.shape(),
                rhs.shape()
            )));
        };
        if k != k2 {
            return Err(Error::Shape(format!(
                "matmul inner dimensions disagree: {:?} x {:?}",
                self.shape(),
                rhs.shape()
            )));
        }
        let mut out = vec![E::zero(); m * n];
        if m * k * n < PAR_THRESHOLD || m == 1 {
            gemm(m, k, n, self.data(), false, rhs.data(), false, &mut out, false);
        } else {
            let (a, b) = (self.data(), rhs.data());
            out.par_chunks_mut(n).enumerate().for_each_init(
                || (vec![0.0f64; k], vec![0.0f64; n]),
                |(a_row, acc), (i, row)| {
                    gemm_row(i, m, k, n, a, false, b, false, a_row, acc);
                    store_row(row, acc, false);
                },
            );
        }
        Ok(Tensor::from_parts(vec![m, n], out))
    }

    /// Applies `op` pointwise. Tensor operands must share this tensor's shape.
    pub fn elementwise<'a>(
        &self,
        rhs: impl Into<Operand<'a, E>>,
        op: ElementwiseOp,
    ) -> Result<Tensor<E>> {
        let f = |x: E, y: E| match op {
            ElementwiseOp::Add => x + y,
            ElementwiseOp::Sub => x - y,
            ElementwiseOp::Mul | ElementwiseOp::Scale => x * y,
        };
        let data = match rhs.into() {
            Operand::Scalar(s) => self.data().iter().map(|&x| f(x, s)).collect(),
            Operand::Tensor(t) => {
                if t.shape() != self.shape() {
                    return Err(Error::Shape(format!(
                        "elementwise {op:?} on mismatched shapes {:?} and {:?}",
                        self.shape(),
                        t.shape()
                    )));
                }
                self.data()
                    .iter()
                    .zip(t.data())
                    .map(|(&x, &y)| f(x, y))
                    .collect()
            }
        };
        Ok(Tensor::from_parts(self.shape().to_vec(), data))
    }

    pub fn add(&self, rhs: &Tensor<E>) -> Result<Tensor<E>> {
        self.elementwise(rhs, ElementwiseOp::Add)
    }

    pub fn sub(&self, rhs: &Tensor<E>) -> Result<Tensor<E>> {
        self.elementwise(rhs, ElementwiseOp::Sub)
    }

    pub fn mul(&self, rhs: &Tensor<E>) -> Result<Tensor<E>> {
        self.elementwise(rhs, ElementwiseOp::Mul)
    }

    pub fn scale(&self, factor: E) -> Tensor<E> {
        let data = self.data().iter().map(|&x| x * factor).collect();
        Tensor::from_parts(self.shape().to_vec(), data)
    }

    /// Reduces over `axes`. Reduced extents are dropped, or kept as 1 when
    /// `keep_dims` is set; reducing every axis without `keep_dims` yields
    /// shape `[1]`.
    ///
    /// `Argmax` takes exactly one axis, returns indices as values and
    /// resolves ties to the lowest index.
    pub fn reduce(&self, axes: &[usize], op: ReduceOp, keep_dims: bool) -> Result<Tensor<E>> {
        let rank = self.rank();
        if let Some(&axis) = axes.iter().find(|&&a| a >= rank) {
            return Err(Error::Axis { axis, rank });
        }
        let mut reduced = vec![false; rank];
        for &a in axes {
            reduced[a] = true;
        }
        if op == ReduceOp::Argmax && axes.len() != 1 {
            return Err(Error::Param(format!(
                "argmax reduces exactly one axis, got {axes:?}"
            )));
        }

        let out_full: Vec<usize> = self
            .shape()
            .iter()
            .zip(&reduced)
            .map(|(&d, &r)| if r { 1 } else { d })
            .collect();
        let out_shape = if keep_dims {
            out_full.clone()
        } else {
            let s: Vec<usize> = self
                .shape()
                .iter()
                .zip(&reduced)
                .filter(|(_, &r)| !r)
                .map(|(&d, _)| d)
                .collect();
            if s.is_empty() {
                vec![1]
            } else {
                s
            }
        };
        let out_len: usize = out_full.iter().product();

        if op == ReduceOp::Argmax {
            let axis = axes[0];
            let outer: usize = self.shape()[..axis].iter().product();
            let extent = self.shape()[axis];
            let inner: usize = self.shape()[axis + 1..].iter().product();
            let mut out = Vec::with_capacity(out_len);
            for o in 0..outer {
                for i in 0..inner {
                    let base = o * extent * inner + i;
                    let mut best = 0;
                    let mut best_v = self.data()[base];
                    for j in 1..extent {
                        let v = self.data()[base + j * inner];
                        if v > best_v {
                            best = j;
                            best_v = v;
                        }
                    }
                    out.push(E::from_usize(best).expect("index fits element type"));
                }
            }
            return Ok(Tensor::from_parts(out_shape, out));
        }

        // Strides of the kept-dims output, with zero stride on reduced axes.
        let mut out_strides = vec![0usize; rank];
        let mut stride = 1;
        for a in (0..rank).rev() {
            if !reduced[a] {
                out_strides[a] = stride;
                stride *= self.shape()[a];
            }
        }
        let mut acc = vec![0.0f64; out_len];
        let mut index = vec![0usize; rank];
        let mut out_pos = 0usize;
        for &v in self.data() {
            acc[out_pos] += v.to_acc();
            // Advance the row-major multi-index and track the output position.
            for a in (0..rank).rev() {
                index[a] += 1;
                out_pos += out_strides[a];
                if index[a] < self.shape()[a] {
                    break;
                }
                out_pos -= out_strides[a] * index[a];
                index[a] = 0;
            }
        }
        let count = (self.len() / out_len) as f64;
        let data = acc
            .into_iter()
            .map(|s| match op {
                ReduceOp::Mean => E::from_acc(s / count),
                _ => E::from_acc(s),
            })
            .collect();
        Ok(Tensor::from_parts(out_shape, data))
    }

    /// Row-wise argmax of a `[N, K]` matrix, lowest index on ties.
    pub fn argmax_rows(&self) -> Result<Vec<usize>> {
        let &[_, k] = self.shape() else {
            return Err(Error::Shape(format!(
                "argmax_rows needs a matrix, got {:?}",
                self.shape()
            )));
        };
        Ok(self
            .data()
            .chunks(k)
            .map(|row| {
                let mut best = 0;
                for (j, v) in row.iter().enumerate().skip(1) {
                    if *v > row[best] {
                        best = j;
                    }
                }
                best
            })
            .collect())
    }
}
