//! 2-D convolution (cross-correlation) with stride, zero padding and groups.
//!
//! Grouped convolutions lower each (sample, group) pair to im2col + gemm.
//! Depthwise convolutions (one input and one output channel per group) use
//! direct loops. A 1×1, stride-1, unpadded convolution skips im2col entirely
//! since the input plane already is the column matrix.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::tensor::{gemm, Element, Tensor};

#[derive(Debug, Clone, PartialEq)]
pub struct Conv2dParams<E = f32> {
    /// `[C_out, C_in / groups, kH, kW]`
    pub weight: Tensor<E>,
    /// `[C_out]`
    pub bias: Option<Tensor<E>>,
    pub stride: (usize, usize),
    pub padding: (usize, usize),
    pub groups: usize,
}

#[derive(Debug, Clone)]
pub struct Conv2dGrads<E = f32> {
    pub input: Tensor<E>,
    pub weight: Tensor<E>,
    pub bias: Option<Tensor<E>>,
}

/// Resolved dimensions of one convolution call.
#[derive(Debug, Clone, Copy)]
struct Geometry {
    n: usize,
    c_in: usize,
    h: usize,
    w: usize,
    c_out: usize,
    kh: usize,
    kw: usize,
    sh: usize,
    sw: usize,
    ph: usize,
    pw: usize,
    groups: usize,
    ho: usize,
    wo: usize,
}

impl Geometry {
    fn cin_g(&self) -> usize {
        self.c_in / self.groups
    }
    fn cout_g(&self) -> usize {
        self.c_out / self.groups
    }
    fn patch(&self) -> usize {
        self.cin_g() * self.kh * self.kw
    }
    fn out_plane(&self) -> usize {
        self.ho * self.wo
    }
    fn in_plane(&self) -> usize {
        self.h * self.w
    }
    fn is_depthwise(&self) -> bool {
        self.cin_g() == 1 && self.cout_g() == 1
    }
    fn is_plain_pointwise(&self) -> bool {
        self.kh == 1 && self.kw == 1 && self.sh == 1 && self.sw == 1 && self.ph == 0 && self.pw == 0
    }
}

/// Output extent of a convolution along one axis, if the kernel fits.
pub fn conv_output_extent(input: usize, kernel: usize, stride: usize, padding: usize) -> Option<usize> {
    let padded = input + 2 * padding;
    if stride == 0 || kernel == 0 || padded < kernel {
        return None;
    }
    Some((padded - kernel) / stride + 1)
}

impl<E: Element> Conv2dParams<E> {
    fn geometry(&self, input_shape: &[usize]) -> Result<Geometry> {
        let &[n, c_in, h, w] = input_shape else {
            return Err(Error::Shape(format!(
                "conv2d input must be [N, C, H, W], got {input_shape:?}"
            )));
        };
        let &[c_out, cin_g, kh, kw] = self.weight.shape() else {
            return Err(Error::Shape(format!(
                "conv2d weight must be [C_out, C_in/groups, kH, kW], got {:?}",
                self.weight.shape()
            )));
        };
        let groups = self.groups;
        if groups == 0 {
            return Err(Error::Shape("conv2d groups must be positive".into()));
        }
        if c_in % groups != 0 {
            return Err(Error::Shape(format!(
                "conv2d input channels {c_in} not divisible by groups {groups}"
            )));
        }
        if c_out % groups != 0 {
            return Err(Error::Shape(format!(
                "conv2d output channels {c_out} not divisible by groups {groups}"
            )));
        }
        if c_in / groups != cin_g {
            return Err(Error::Shape(format!(
                "conv2d weight expects {cin_g} channels per group, input has {}",
                c_in / groups
            )));
        }
        if let Some(b) = &self.bias {
            if b.shape() != [c_out] {
                return Err(Error::Shape(format!(
                    "conv2d bias must be [{c_out}], got {:?}",
                    b.shape()
                )));
            }
        }
        let (sh, sw) = self.stride;
        let (ph, pw) = self.padding;
        let ho = conv_output_extent(h, kh, sh, ph).ok_or_else(|| {
            Error::Shape(format!(
                "conv2d kernel height {kh} does not fit input height {h} with padding {ph}, stride {sh}"
            ))
        })?;
        let wo = conv_output_extent(w, kw, sw, pw).ok_or_else(|| {
            Error::Shape(format!(
                "conv2d kernel width {kw} does not fit input width {w} with padding {pw}, stride {sw}"
            ))
        })?;
        Ok(Geometry {
            n,
            c_in,
            h,
            w,
            c_out,
            kh,
            kw,
            sh,
            sw,
            ph,
            pw,
            groups,
            ho,
            wo,
        })
    }
}

/// Unrolls one group of one sample into `[C_in/groups · kH · kW, H'·W']`.
fn im2col<E: Element>(g: &Geometry, x: &[E], cols: &mut [E]) {
    let plane = g.out_plane();
    for c in 0..g.cin_g() {
        let xc = &x[c * g.in_plane()..(c + 1) * g.in_plane()];
        for ky in 0..g.kh {
            for kx in 0..g.kw {
                let row = (c * g.kh + ky) * g.kw + kx;
                let dst = &mut cols[row * plane..(row + 1) * plane];
                for oy in 0..g.ho {
                    let iy = (oy * g.sh + ky) as isize - g.ph as isize;
                    for ox in 0..g.wo {
                        let ix = (ox * g.sw + kx) as isize - g.pw as isize;
                        dst[oy * g.wo + ox] = if iy >= 0
                            && (iy as usize) < g.h
                            && ix >= 0
                            && (ix as usize) < g.w
                        {
                            xc[iy as usize * g.w + ix as usize]
                        } else {
                            E::zero()
                        };
                    }
                }
            }
        }
    }
}

/// Scatter-adds a column matrix back onto one group of one sample.
fn col2im<E: Element>(g: &Geometry, cols: &[E], dx: &mut [E]) {
    let plane = g.out_plane();
    for c in 0..g.cin_g() {
        let dxc = &mut dx[c * g.in_plane()..(c + 1) * g.in_plane()];
        for ky in 0..g.kh {
            for kx in 0..g.kw {
                let row = (c * g.kh + ky) * g.kw + kx;
                let src = &cols[row * plane..(row + 1) * plane];
                for oy in 0..g.ho {
                    let iy = (oy * g.sh + ky) as isize - g.ph as isize;
                    if iy < 0 || iy as usize >= g.h {
                        continue;
                    }
                    for ox in 0..g.wo {
                        let ix = (ox * g.sw + kx) as isize - g.pw as isize;
                        if ix >= 0 && (ix as usize) < g.w {
                            dxc[iy as usize * g.w + ix as usize] += src[oy * g.wo + ox];
                        }
                    }
                }
            }
        }
    }
}

fn depthwise_forward_sample<E: Element>(g: &Geometry, x: &[E], weight: &[E], out: &mut [E]) {
    let k = g.kh * g.kw;
    for c in 0..g.c_in {
        let xc = &x[c * g.in_plane()..(c + 1) * g.in_plane()];
        let wc = &weight[c * k..(c + 1) * k];
        let oc = &mut out[c * g.out_plane()..(c + 1) * g.out_plane()];
        for oy in 0..g.ho {
            for ox in 0..g.wo {
                let mut acc = 0.0f64;
                for ky in 0..g.kh {
                    let iy = (oy * g.sh + ky) as isize - g.ph as isize;
                    if iy < 0 || iy as usize >= g.h {
                        continue;
                    }
                    for kx in 0..g.kw {
                        let ix = (ox * g.sw + kx) as isize - g.pw as isize;
                        if ix >= 0 && (ix as usize) < g.w {
                            acc += xc[iy as usize * g.w + ix as usize].to_acc()
                                * wc[ky * g.kw + kx].to_acc();
                        }
                    }
                }
                oc[oy * g.wo + ox] = E::from_acc(acc);
            }
        }
    }
}

/// Returns `(dx, dweight)` for one sample of a depthwise convolution.
fn depthwise_backward_sample<E: Element>(
    g: &Geometry,
    x: &[E],
    weight: &[E],
    dy: &[E],
) -> (Vec<E>, Vec<f64>) {
    let k = g.kh * g.kw;
    let mut dx = vec![0.0f64; x.len()];
    let mut dw = vec![0.0f64; weight.len()];
    for c in 0..g.c_in {
        let xc = &x[c * g.in_plane()..(c + 1) * g.in_plane()];
        let dxc = &mut dx[c * g.in_plane()..(c + 1) * g.in_plane()];
        let wc = &weight[c * k..(c + 1) * k];
        let dwc = &mut dw[c * k..(c + 1) * k];
        let dyc = &dy[c * g.out_plane()..(c + 1) * g.out_plane()];
        for oy in 0..g.ho {
            for ox in 0..g.wo {
                let d = dyc[oy * g.wo + ox].to_acc();
                if d == 0.0 {
                    continue;
                }
                for ky in 0..g.kh {
                    let iy = (oy * g.sh + ky) as isize - g.ph as isize;
                    if iy < 0 || iy as usize >= g.h {
                        continue;
                    }
                    for kx in 0..g.kw {
                        let ix = (ox * g.sw + kx) as isize - g.pw as isize;
                        if ix >= 0 && (ix as usize) < g.w {
                            let at = iy as usize * g.w + ix as usize;
                            dwc[ky * g.kw + kx] += d * xc[at].to_acc();
                            dxc[at] += d * wc[ky * g.kw + kx].to_acc();
                        }
                    }
                }
            }
        }
    }
    (dx.into_iter().map(E::from_acc).collect(), dw)
}

/// Forward convolution. Output is `[N, C_out, H', W']` with
/// `H' = (H + 2·padH − kH) / strideH + 1` (likewise for W').
pub fn conv2d<E: Element>(input: &Tensor<E>, params: &Conv2dParams<E>) -> Result<Tensor<E>> {
    let g = params.geometry(input.shape())?;
    let in_sample = g.c_in * g.in_plane();
    let out_sample = g.c_out * g.out_plane();
    let weight = params.weight.data();
    let mut out = vec![E::zero(); g.n * out_sample];

    out.par_chunks_mut(out_sample)
        .zip(input.data().par_chunks(in_sample))
        .for_each(|(y, x)| {
            if g.is_depthwise() {
                depthwise_forward_sample(&g, x, weight, y);
                return;
            }
            let mut cols = if g.is_plain_pointwise() {
                Vec::new()
            } else {
                vec![E::zero(); g.patch() * g.out_plane()]
            };
            for grp in 0..g.groups {
                let xg = &x[grp * g.cin_g() * g.in_plane()..(grp + 1) * g.cin_g() * g.in_plane()];
                let wg = &weight[grp * g.cout_g() * g.patch()..(grp + 1) * g.cout_g() * g.patch()];
                let yg = &mut y[grp * g.cout_g() * g.out_plane()..(grp + 1) * g.cout_g() * g.out_plane()];
                let cols_ref: &[E] = if g.is_plain_pointwise() {
                    xg
                } else {
                    im2col(&g, xg, &mut cols);
                    &cols
                };
                gemm(g.cout_g(), g.patch(), g.out_plane(), wg, false, cols_ref, false, yg, false);
            }
        });

    if let Some(bias) = &params.bias {
        for y in out.chunks_mut(out_sample) {
            for (plane, &b) in y.chunks_mut(g.out_plane()).zip(bias.data()) {
                plane.iter_mut().for_each(|v| *v += b);
            }
        }
    }
    Ok(Tensor::from_parts(vec![g.n, g.c_out, g.ho, g.wo], out))
}

/// Gradients of a convolution with respect to its input, weight and bias.
pub fn conv2d_backward<E: Element>(
    input: &Tensor<E>,
    params: &Conv2dParams<E>,
    grad_out: &Tensor<E>,
) -> Result<Conv2dGrads<E>> {
    let g = params.geometry(input.shape())?;
    if grad_out.shape() != [g.n, g.c_out, g.ho, g.wo] {
        return Err(Error::Shape(format!(
            "conv2d output gradient {:?} does not match output shape {:?}",
            grad_out.shape(),
            [g.n, g.c_out, g.ho, g.wo]
        )));
    }
    let in_sample = g.c_in * g.in_plane();
    let out_sample = g.c_out * g.out_plane();
    let weight = params.weight.data();

    // Per-sample partial weight gradients, summed afterwards in sample order
    // so the result does not depend on thread scheduling.
    let per_sample: Vec<(Vec<E>, Vec<f64>)> = input
        .data()
        .par_chunks(in_sample)
        .zip(grad_out.data().par_chunks(out_sample))
        .map(|(x, dy)| {
            if g.is_depthwise() {
                return depthwise_backward_sample(&g, x, weight, dy);
            }
            let mut dx = vec![E::zero(); in_sample];
            let mut dw = vec![E::zero(); weight.len()];
            let mut cols = vec![E::zero(); g.patch() * g.out_plane()];
            let mut dcols = vec![E::zero(); g.patch() * g.out_plane()];
            for grp in 0..g.groups {
                let in_range = grp * g.cin_g() * g.in_plane()..(grp + 1) * g.cin_g() * g.in_plane();
                let w_range = grp * g.cout_g() * g.patch()..(grp + 1) * g.cout_g() * g.patch();
                let out_range =
                    grp * g.cout_g() * g.out_plane()..(grp + 1) * g.cout_g() * g.out_plane();
                let xg = &x[in_range.clone()];
                let dyg = &dy[out_range];
                let cols_ref: &[E] = if g.is_plain_pointwise() {
                    xg
                } else {
                    im2col(&g, xg, &mut cols);
                    &cols
                };
                // dW_g = dY_g · colsᵀ
                gemm(
                    g.cout_g(),
                    g.out_plane(),
                    g.patch(),
                    dyg,
                    false,
                    cols_ref,
                    true,
                    &mut dw[w_range.clone()],
                    false,
                );
                // dcols = W_gᵀ · dY_g
                if g.is_plain_pointwise() {
                    gemm(
                        g.patch(),
                        g.cout_g(),
                        g.out_plane(),
                        &weight[w_range],
                        true,
                        dyg,
                        false,
                        &mut dx[in_range],
                        false,
                    );
                } else {
                    gemm(
                        g.patch(),
                        g.cout_g(),
                        g.out_plane(),
                        &weight[w_range],
                        true,
                        dyg,
                        false,
                        &mut dcols,
                        false,
                    );
                    col2im(&g, &dcols, &mut dx[in_range]);
                }
            }
            (dx, dw.into_iter().map(|v| v.to_acc()).collect())
        })
        .collect();

    let mut dx = Vec::with_capacity(input.len());
    let mut dw = vec![0.0f64; weight.len()];
    for (sample_dx, sample_dw) in per_sample {
        dx.extend(sample_dx);
        dw.iter_mut().zip(&sample_dw).for_each(|(a, b)| *a += b);
    }

    let bias = params.bias.as_ref().map(|_| {
        let mut db = vec![0.0f64; g.c_out];
        for dy in grad_out.data().chunks(out_sample) {
            for (acc, plane) in db.iter_mut().zip(dy.chunks(g.out_plane())) {
                *acc += plane.iter().map(|v| v.to_acc()).sum::<f64>();
            }
        }
        Tensor::from_parts(vec![g.c_out], db.into_iter().map(E::from_acc).collect())
    });

    Ok(Conv2dGrads {
        input: Tensor::from_parts(input.shape().to_vec(), dx),
        weight: Tensor::from_parts(
            params.weight.shape().to_vec(),
            dw.into_iter().map(E::from_acc).collect(),
        ),
        bias,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f64> {
        let n = shape.iter().product();
        Tensor::from_vec(shape, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    /// Direct seven-loop convolution used as the reference.
    fn reference(x: &Tensor<f64>, p: &Conv2dParams<f64>) -> Tensor<f64> {
        let &[n, c_in, h, w] = x.shape() else { unreachable!() };
        let &[c_out, cin_g, kh, kw] = p.weight.shape() else { unreachable!() };
        let cout_g = c_out / p.groups;
        let ho = (h + 2 * p.padding.0 - kh) / p.stride.0 + 1;
        let wo = (w + 2 * p.padding.1 - kw) / p.stride.1 + 1;
        let mut out = vec![0.0; n * c_out * ho * wo];
        for b in 0..n {
            for co in 0..c_out {
                let grp = co / cout_g;
                for oy in 0..ho {
                    for ox in 0..wo {
                        let mut s = p.bias.as_ref().map_or(0.0, |b| b.data()[co]);
                        for ci in 0..cin_g {
                            let cin = grp * cin_g + ci;
                            for ky in 0..kh {
                                for kx in 0..kw {
                                    let iy = (oy * p.stride.0 + ky) as isize - p.padding.0 as isize;
                                    let ix = (ox * p.stride.1 + kx) as isize - p.padding.1 as isize;
                                    if iy < 0 || ix < 0 || iy as usize >= h || ix as usize >= w {
                                        continue;
                                    }
                                    s += x.data()[((b * c_in + cin) * h + iy as usize) * w + ix as usize]
                                        * p.weight.data()[((co * cin_g + ci) * kh + ky) * kw + kx];
                                }
                            }
                        }
                        out[((b * c_out + co) * ho + oy) * wo + ox] = s;
                    }
                }
            }
        }
        Tensor::from_vec(&[n, c_out, ho, wo], out).unwrap()
    }

    #[test]
    fn stem_output_shape() {
        let x = Tensor::<f32>::zeros(&[1, 3, 224, 224]).unwrap();
        let p = Conv2dParams {
            weight: Tensor::zeros(&[32, 3, 3, 3]).unwrap(),
            bias: None,
            stride: (2, 2),
            padding: (1, 1),
            groups: 1,
        };
        assert_eq!(conv2d(&x, &p).unwrap().shape(), &[1, 32, 112, 112]);
    }

    #[test]
    fn identity_pointwise_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = random(&[2, 5, 4, 3], &mut rng);
        let mut w = Tensor::zeros(&[5, 5, 1, 1]).unwrap();
        for c in 0..5 {
            w.data_mut()[c * 5 + c] = 1.0;
        }
        let p = Conv2dParams { weight: w, bias: None, stride: (1, 1), padding: (0, 0), groups: 1 };
        assert_eq!(conv2d(&x, &p).unwrap(), x);
    }

    #[test]
    fn depthwise_channels_are_independent() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = random(&[1, 8, 16, 16], &mut rng);
        let p = Conv2dParams {
            weight: random(&[8, 1, 3, 3], &mut rng),
            bias: None,
            stride: (1, 1),
            padding: (1, 1),
            groups: 8,
        };
        let y = conv2d(&x, &p).unwrap();
        assert_eq!(y.shape(), &[1, 8, 16, 16]);
        let mut x2 = x.clone();
        x2.data_mut()[3 * 256..4 * 256].iter_mut().for_each(|v| *v = 0.0);
        let y2 = conv2d(&x2, &p).unwrap();
        for c in 0..8 {
            let same = y.data()[c * 256..(c + 1) * 256] == y2.data()[c * 256..(c + 1) * 256];
            assert_eq!(same, c != 3, "channel {c}");
        }
    }

    #[test]
    fn matches_reference_across_configurations() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        // (n, c_in, h, w, c_out, k, stride, pad, groups, bias)
        let cases = [
            (2, 3, 7, 6, 4, 3, 1, 1, 1, true),
            (1, 4, 8, 8, 4, 3, 2, 1, 4, false),
            (2, 4, 5, 5, 6, 1, 1, 0, 2, true),
            (1, 6, 9, 7, 3, 3, 2, 0, 3, false),
            (1, 2, 4, 4, 2, 1, 2, 0, 1, false),
            (2, 4, 6, 6, 8, 3, 1, 1, 4, true),
        ];
        for (n, c_in, h, w, c_out, k, s, pd, groups, bias) in cases {
            let x = random(&[n, c_in, h, w], &mut rng);
            let p = Conv2dParams {
                weight: random(&[c_out, c_in / groups, k, k], &mut rng),
                bias: bias.then(|| random(&[c_out], &mut rng)),
                stride: (s, s),
                padding: (pd, pd),
                groups,
            };
            let fast = conv2d(&x, &p).unwrap();
            let slow = reference(&x, &p);
            assert_eq!(fast.shape(), slow.shape());
            for (a, b) in fast.data().iter().zip(slow.data()) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn shape_errors_name_the_dimension() {
        let x = Tensor::<f32>::zeros(&[1, 6, 8, 8]).unwrap();
        let bad_groups = Conv2dParams {
            weight: Tensor::zeros(&[4, 2, 3, 3]).unwrap(),
            bias: None,
            stride: (1, 1),
            padding: (1, 1),
            groups: 4,
        };
        let msg = conv2d(&x, &bad_groups).unwrap_err().to_string();
        assert!(msg.contains("input channels"), "{msg}");

        let too_big = Conv2dParams {
            weight: Tensor::zeros(&[2, 6, 11, 3]).unwrap(),
            bias: None,
            stride: (1, 1),
            padding: (1, 1),
            groups: 1,
        };
        let msg = conv2d(&x, &too_big).unwrap_err().to_string();
        assert!(msg.contains("height"), "{msg}");
    }
}
