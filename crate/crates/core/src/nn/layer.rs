//! Layer kinds with per-sample forward and backward kernels.
//!
//! Tensors carry no batch axis: 1-D convolutions take `[channels, length]`,
//! 2-D convolutions `[channels, height, width]`. Products are accumulated in
//! the storage type; reductions over whole tensors happen in `f64` upstream.

use serde::{Deserialize, Serialize};

use super::tensor::{Scalar, Tensor};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    Conv1d {
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    },
    Conv2d {
        in_ch: usize,
        out_ch: usize,
        kernel: [usize; 2],
        stride: [usize; 2],
        padding: [usize; 2],
    },
    /// Non-overlapping max pooling over the last `window.len()` axes.
    MaxPool {
        window: Vec<usize>,
    },
    Dense {
        inputs: usize,
        units: usize,
    },
    Relu,
    Sigmoid,
    /// Merges every axis except the last `keep_trailing` into one.
    Flatten {
        keep_trailing: usize,
    },
    /// Channel-axis join of parallel branches; only valid at a network join.
    Concat,
}

impl LayerSpec {
    pub fn kind_name(&self) -> &'static str {
        match self {
            LayerSpec::Conv1d { .. } => "conv1d",
            LayerSpec::Conv2d { .. } => "conv2d",
            LayerSpec::MaxPool { .. } => "maxpool",
            LayerSpec::Dense { .. } => "dense",
            LayerSpec::Relu => "relu",
            LayerSpec::Sigmoid => "sigmoid",
            LayerSpec::Flatten { .. } => "flatten",
            LayerSpec::Concat => "concat",
        }
    }

    /// `(weight shape, bias shape, fan_in)` for parameterised layers.
    pub fn param_shapes(&self) -> Option<(Vec<usize>, Vec<usize>, usize)> {
        match *self {
            LayerSpec::Conv1d {
                in_ch,
                out_ch,
                kernel,
                ..
            } => Some((vec![out_ch, in_ch, kernel], vec![out_ch], in_ch * kernel)),
            LayerSpec::Conv2d {
                in_ch,
                out_ch,
                kernel,
                ..
            } => Some((
                vec![out_ch, in_ch, kernel[0], kernel[1]],
                vec![out_ch],
                in_ch * kernel[0] * kernel[1],
            )),
            LayerSpec::Dense { inputs, units } => Some((vec![units, inputs], vec![units], inputs)),
            _ => None,
        }
    }

    pub fn output_shape(&self, input: &[usize], name: &str) -> Result<Vec<usize>> {
        let fail = |d: String| {
            Err(Error::structural(
                format!("{name} ({})", self.kind_name()),
                d,
            ))
        };
        match self {
            LayerSpec::Conv1d {
                in_ch,
                out_ch,
                kernel,
                stride,
                padding,
            } => {
                if input.len() != 2 || input[0] != *in_ch {
                    return fail(format!("expected [{in_ch}, L], got {input:?}"));
                }
                if *stride == 0 || *kernel == 0 || input[1] + 2 * padding < *kernel {
                    return fail(format!(
                        "kernel {kernel} does not fit length {} (+2x{padding})",
                        input[1]
                    ));
                }
                Ok(vec![
                    *out_ch,
                    (input[1] + 2 * padding - kernel) / stride + 1,
                ])
            }
            LayerSpec::Conv2d {
                in_ch,
                out_ch,
                kernel,
                stride,
                padding,
            } => {
                if input.len() != 3 || input[0] != *in_ch {
                    return fail(format!("expected [{in_ch}, H, W], got {input:?}"));
                }
                let mut out = vec![*out_ch];
                for a in 0..2 {
                    let n = input[1 + a] + 2 * padding[a];
                    if stride[a] == 0 || kernel[a] == 0 || n < kernel[a] {
                        return fail(format!("kernel {kernel:?} does not fit {input:?}"));
                    }
                    out.push((n - kernel[a]) / stride[a] + 1);
                }
                Ok(out)
            }
            LayerSpec::MaxPool { window } => {
                if !(1..=2).contains(&window.len()) || window.len() > input.len() {
                    return fail(format!("window {window:?} incompatible with {input:?}"));
                }
                let lead = input.len() - window.len();
                let mut out = input[..lead].to_vec();
                for (d, &w) in input[lead..].iter().zip(window) {
                    if w == 0 || *d < w {
                        return fail(format!("window {window:?} larger than {input:?}"));
                    }
                    out.push(d / w);
                }
                Ok(out)
            }
            LayerSpec::Dense { inputs, units } => {
                let n: usize = input.iter().product();
                if n != *inputs {
                    return fail(format!("expected {inputs} inputs, got {input:?}"));
                }
                Ok(vec![*units])
            }
            LayerSpec::Relu | LayerSpec::Sigmoid => Ok(input.to_vec()),
            LayerSpec::Flatten { keep_trailing } => {
                if *keep_trailing >= input.len() {
                    return fail(format!(
                        "cannot keep {keep_trailing} trailing axes of {input:?}"
                    ));
                }
                let split = input.len() - keep_trailing;
                let mut out = vec![input[..split].iter().product()];
                out.extend_from_slice(&input[split..]);
                Ok(out)
            }
            LayerSpec::Concat => fail("concat is only valid as a branch join".into()),
        }
    }
}

/// What a layer keeps from the forward pass for its backward pass.
#[derive(Debug, Clone)]
pub(crate) enum LayerCache<F> {
    Input(Tensor<F>),
    Argmax {
        input_shape: Vec<usize>,
        argmax: Vec<u32>,
    },
    Output(Tensor<F>),
    Shape(Vec<usize>),
}

/// Zeroes subnormal values. Saturated sigmoids otherwise feed subnormals
/// into every downstream product, which is very slow on common hardware.
#[inline]
fn flush_subnormal<F: Scalar>(mut t: Tensor<F>) -> Tensor<F> {
    let tiny = F::min_positive_value();
    for v in t.data.iter_mut() {
        if v.abs() < tiny {
            *v = F::zero();
        }
    }
    t
}

/// Forward pass. `wb` holds the weight and bias for parameterised layers.
pub(crate) fn forward<F: Scalar>(
    spec: &LayerSpec,
    wb: Option<(&[F], &[F])>,
    x: Tensor<F>,
    out_shape: &[usize],
    keep_cache: bool,
) -> (Tensor<F>, Option<LayerCache<F>>) {
    match spec {
        LayerSpec::Sigmoid => {
            let y = flush_subnormal(Tensor {
                shape: x.shape,
                data: x.data.iter().map(|&v| sigmoid(v)).collect(),
            });
            let c = keep_cache.then(|| LayerCache::Output(y.clone()));
            (y, c)
        }
        _ => forward_raw(spec, wb, x, out_shape, keep_cache),
    }
}

fn forward_raw<F: Scalar>(
    spec: &LayerSpec,
    wb: Option<(&[F], &[F])>,
    x: Tensor<F>,
    out_shape: &[usize],
    keep_cache: bool,
) -> (Tensor<F>, Option<LayerCache<F>>) {
    match spec {
        LayerSpec::Conv1d {
            in_ch,
            out_ch,
            kernel,
            stride,
            padding,
        } => {
            let (w, b) = wb.expect("conv1d parameters");
            let y = conv1d_forward(
                &x,
                w,
                b,
                *in_ch,
                *out_ch,
                *kernel,
                *stride,
                *padding,
                out_shape[1],
            );
            (y, keep_cache.then(|| LayerCache::Input(x)))
        }
        LayerSpec::Conv2d {
            in_ch,
            out_ch,
            kernel,
            stride,
            padding,
        } => {
            let (w, b) = wb.expect("conv2d parameters");
            let y = conv2d_forward(
                &x, w, b, *in_ch, *out_ch, *kernel, *stride, *padding, out_shape,
            );
            (y, keep_cache.then(|| LayerCache::Input(x)))
        }
        LayerSpec::Dense { inputs, units } => {
            let (w, b) = wb.expect("dense parameters");
            let mut y = vec![F::zero(); *units];
            for (u, yv) in y.iter_mut().enumerate() {
                let row = &w[u * inputs..(u + 1) * inputs];
                *yv = b[u] + dot(row, &x.data);
            }
            (
                Tensor {
                    shape: vec![*units],
                    data: y,
                },
                keep_cache.then(|| LayerCache::Input(x)),
            )
        }
        LayerSpec::MaxPool { window } => {
            let (y, argmax) = maxpool_forward(&x, window, out_shape);
            (
                y,
                keep_cache.then(|| LayerCache::Argmax {
                    input_shape: x.shape.clone(),
                    argmax,
                }),
            )
        }
        LayerSpec::Relu => {
            let y = Tensor {
                shape: x.shape.clone(),
                data: x
                    .data
                    .iter()
                    .map(|&v| if v > F::zero() { v } else { F::zero() })
                    .collect(),
            };
            (y, keep_cache.then(|| LayerCache::Input(x)))
        }
        LayerSpec::Sigmoid => {
            let y = Tensor {
                shape: x.shape,
                data: x.data.iter().map(|&v| sigmoid(v)).collect(),
            };
            let c = keep_cache.then(|| LayerCache::Output(y.clone()));
            (y, c)
        }
        LayerSpec::Flatten { .. } => {
            let c = keep_cache.then(|| LayerCache::Shape(x.shape.clone()));
            (
                Tensor {
                    shape: out_shape.to_vec(),
                    data: x.data,
                },
                c,
            )
        }
        LayerSpec::Concat => unreachable!("concat handled by the network"),
    }
}

/// Backward pass: accumulates parameter gradients into `gwb` and returns the
/// gradient with respect to the layer input.
pub(crate) fn backward<F: Scalar>(
    spec: &LayerSpec,
    wb: Option<(&[F], &[F])>,
    gwb: Option<(&mut [F], &mut [F])>,
    cache: LayerCache<F>,
    dy: Tensor<F>,
) -> Tensor<F> {
    flush_subnormal(backward_raw(spec, wb, gwb, cache, dy))
}

fn backward_raw<F: Scalar>(
    spec: &LayerSpec,
    wb: Option<(&[F], &[F])>,
    gwb: Option<(&mut [F], &mut [F])>,
    cache: LayerCache<F>,
    dy: Tensor<F>,
) -> Tensor<F> {
    match (spec, cache) {
        (
            LayerSpec::Conv1d {
                in_ch,
                out_ch,
                kernel,
                stride,
                padding,
            },
            LayerCache::Input(x),
        ) => {
            let (w, _) = wb.expect("conv1d parameters");
            let (gw, gb) = gwb.expect("conv1d gradients");
            conv1d_backward(
                &x, w, gw, gb, &dy, *in_ch, *out_ch, *kernel, *stride, *padding,
            )
        }
        (
            LayerSpec::Conv2d {
                in_ch,
                out_ch,
                kernel,
                stride,
                padding,
            },
            LayerCache::Input(x),
        ) => {
            let (w, _) = wb.expect("conv2d parameters");
            let (gw, gb) = gwb.expect("conv2d gradients");
            conv2d_backward(
                &x, w, gw, gb, &dy, *in_ch, *out_ch, *kernel, *stride, *padding,
            )
        }
        (LayerSpec::Dense { inputs, units }, LayerCache::Input(x)) => {
            let (w, _) = wb.expect("dense parameters");
            let (gw, gb) = gwb.expect("dense gradients");
            let mut dx = vec![F::zero(); *inputs];
            for u in 0..*units {
                let g = dy.data[u];
                gb[u] += g;
                if g == F::zero() {
                    continue;
                }
                let row = &w[u * inputs..(u + 1) * inputs];
                let grow = &mut gw[u * inputs..(u + 1) * inputs];
                for i in 0..*inputs {
                    grow[i] += g * x.data[i];
                    dx[i] += g * row[i];
                }
            }
            Tensor {
                shape: x.shape,
                data: dx,
            }
        }
        (
            LayerSpec::MaxPool { .. },
            LayerCache::Argmax {
                input_shape,
                argmax,
            },
        ) => {
            let mut dx = Tensor::zeros(input_shape);
            for (&i, &g) in argmax.iter().zip(&dy.data) {
                dx.data[i as usize] += g;
            }
            dx
        }
        (LayerSpec::Relu, LayerCache::Input(x)) => Tensor {
            shape: x.shape,
            data: x
                .data
                .iter()
                .zip(&dy.data)
                .map(|(&v, &g)| if v > F::zero() { g } else { F::zero() })
                .collect(),
        },
        (LayerSpec::Sigmoid, LayerCache::Output(y)) => Tensor {
            shape: y.shape,
            data: y
                .data
                .iter()
                .zip(&dy.data)
                .map(|(&s, &g)| g * s * (F::one() - s))
                .collect(),
        },
        (LayerSpec::Flatten { .. }, LayerCache::Shape(shape)) => Tensor {
            shape,
            data: dy.data,
        },
        (spec, _) => unreachable!("cache does not belong to {}", spec.kind_name()),
    }
}

#[inline]
pub(crate) fn sigmoid<F: Scalar>(v: F) -> F {
    F::one() / (F::one() + (-v).exp())
}

#[inline]
fn dot<F: Scalar>(a: &[F], b: &[F]) -> F {
    let mut acc = F::zero();
    for (&p, &q) in a.iter().zip(b) {
        acc += p * q;
    }
    acc
}

/// Range of kernel taps `k` for which `t*stride + k - padding` lies in `[0, len)`.
#[inline]
fn tap_range(
    t: usize,
    stride: usize,
    padding: usize,
    kernel: usize,
    len: usize,
) -> (usize, usize, isize) {
    let start = (t * stride) as isize - padding as isize;
    let k0 = (-start).max(0) as usize;
    let k1 = ((len as isize - start).min(kernel as isize)).max(0) as usize;
    (k0, k1.max(k0), start)
}

#[allow(clippy::too_many_arguments)]
fn conv1d_forward<F: Scalar>(
    x: &Tensor<F>,
    w: &[F],
    b: &[F],
    in_ch: usize,
    out_ch: usize,
    kernel: usize,
    stride: usize,
    padding: usize,
    out_len: usize,
) -> Tensor<F> {
    let len = x.shape[1];
    let mut y = vec![F::zero(); out_ch * out_len];
    for t in 0..out_len {
        let (k0, k1, start) = tap_range(t, stride, padding, kernel, len);
        let base = (start + k0 as isize) as usize;
        let n = k1 - k0;
        for o in 0..out_ch {
            let mut acc = b[o];
            for c in 0..in_ch {
                let wr = &w[(o * in_ch + c) * kernel + k0..(o * in_ch + c) * kernel + k1];
                let xr = &x.data[c * len + base..c * len + base + n];
                acc += dot(wr, xr);
            }
            y[o * out_len + t] = acc;
        }
    }
    Tensor {
        shape: vec![out_ch, out_len],
        data: y,
    }
}

#[allow(clippy::too_many_arguments)]
fn conv1d_backward<F: Scalar>(
    x: &Tensor<F>,
    w: &[F],
    gw: &mut [F],
    gb: &mut [F],
    dy: &Tensor<F>,
    in_ch: usize,
    out_ch: usize,
    kernel: usize,
    stride: usize,
    padding: usize,
) -> Tensor<F> {
    let len = x.shape[1];
    let out_len = dy.shape[1];
    let mut dx = vec![F::zero(); in_ch * len];
    for o in 0..out_ch {
        for t in 0..out_len {
            let g = dy.data[o * out_len + t];
            if g == F::zero() {
                continue;
            }
            gb[o] += g;
            let (k0, k1, start) = tap_range(t, stride, padding, kernel, len);
            let base = (start + k0 as isize) as usize;
            for c in 0..in_ch {
                let woff = (o * in_ch + c) * kernel;
                let xoff = c * len + base;
                for k in k0..k1 {
                    let xi = xoff + (k - k0);
                    gw[woff + k] += g * x.data[xi];
                    dx[xi] += g * w[woff + k];
                }
            }
        }
    }
    Tensor {
        shape: x.shape.clone(),
        data: dx,
    }
}

#[allow(clippy::too_many_arguments)]
fn conv2d_forward<F: Scalar>(
    x: &Tensor<F>,
    w: &[F],
    b: &[F],
    in_ch: usize,
    out_ch: usize,
    kernel: [usize; 2],
    stride: [usize; 2],
    padding: [usize; 2],
    out_shape: &[usize],
) -> Tensor<F> {
    let (h, wd) = (x.shape[1], x.shape[2]);
    let (oh, ow) = (out_shape[1], out_shape[2]);
    let [kh, kw] = kernel;
    let mut y = vec![F::zero(); out_ch * oh * ow];
    for i in 0..oh {
        let (r0, r1, rs) = tap_range(i, stride[0], padding[0], kh, h);
        for j in 0..ow {
            let (c0, c1, cs) = tap_range(j, stride[1], padding[1], kw, wd);
            let n = c1 - c0;
            let col = (cs + c0 as isize) as usize;
            for o in 0..out_ch {
                let mut acc = b[o];
                for c in 0..in_ch {
                    for r in r0..r1 {
                        let row = (rs + r as isize) as usize;
                        let woff = ((o * in_ch + c) * kh + r) * kw;
                        let xoff = (c * h + row) * wd + col;
                        acc += dot(&w[woff + c0..woff + c1], &x.data[xoff..xoff + n]);
                    }
                }
                y[(o * oh + i) * ow + j] = acc;
            }
        }
    }
    Tensor {
        shape: vec![out_ch, oh, ow],
        data: y,
    }
}

#[allow(clippy::too_many_arguments)]
fn conv2d_backward<F: Scalar>(
    x: &Tensor<F>,
    w: &[F],
    gw: &mut [F],
    gb: &mut [F],
    dy: &Tensor<F>,
    in_ch: usize,
    out_ch: usize,
    kernel: [usize; 2],
    stride: [usize; 2],
    padding: [usize; 2],
) -> Tensor<F> {
    let (h, wd) = (x.shape[1], x.shape[2]);
    let (oh, ow) = (dy.shape[1], dy.shape[2]);
    let [kh, kw] = kernel;
    let mut dx = vec![F::zero(); in_ch * h * wd];
    for o in 0..out_ch {
        for i in 0..oh {
            let (r0, r1, rs) = tap_range(i, stride[0], padding[0], kh, h);
            for j in 0..ow {
                let g = dy.data[(o * oh + i) * ow + j];
                if g == F::zero() {
                    continue;
                }
                gb[o] += g;
                let (c0, c1, cs) = tap_range(j, stride[1], padding[1], kw, wd);
                let col = (cs + c0 as isize) as usize;
                for c in 0..in_ch {
                    for r in r0..r1 {
                        let row = (rs + r as isize) as usize;
                        let woff = ((o * in_ch + c) * kh + r) * kw;
                        let xoff = (c * h + row) * wd + col;
                        for k in c0..c1 {
                            let xi = xoff + (k - c0);
                            gw[woff + k] += g * x.data[xi];
                            dx[xi] += g * w[woff + k];
                        }
                    }
                }
            }
        }
    }
    Tensor {
        shape: x.shape.clone(),
        data: dx,
    }
}

/// Ties resolve to the first maximal element in row-major window order.
fn maxpool_forward<F: Scalar>(
    x: &Tensor<F>,
    window: &[usize],
    out_shape: &[usize],
) -> (Tensor<F>, Vec<u32>) {
    let n_out: usize = out_shape.iter().product();
    let mut y = Vec::with_capacity(n_out);
    let mut arg = Vec::with_capacity(n_out);
    match window.len() {
        1 => {
            let p = window[0];
            let len = x.shape[x.shape.len() - 1];
            let out_len = out_shape[out_shape.len() - 1];
            let lead = n_out / out_len;
            for c in 0..lead {
                for t in 0..out_len {
                    let off = c * len + t * p;
                    let (mut best, mut bi) = (x.data[off], off);
                    for i in off + 1..off + p {
                        if x.data[i] > best {
                            best = x.data[i];
                            bi = i;
                        }
                    }
                    y.push(best);
                    arg.push(bi as u32);
                }
            }
        }
        2 => {
            let (ph, pw) = (window[0], window[1]);
            let r = x.shape.len();
            let (h, w) = (x.shape[r - 2], x.shape[r - 1]);
            let (oh, ow) = (out_shape[r - 2], out_shape[r - 1]);
            let lead = n_out / (oh * ow);
            for c in 0..lead {
                for i in 0..oh {
                    for j in 0..ow {
                        let mut bi = (c * h + i * ph) * w + j * pw;
                        let mut best = x.data[bi];
                        for a in 0..ph {
                            for b in 0..pw {
                                let idx = (c * h + i * ph + a) * w + j * pw + b;
                                if x.data[idx] > best {
                                    best = x.data[idx];
                                    bi = idx;
                                }
                            }
                        }
                        y.push(best);
                        arg.push(bi as u32);
                    }
                }
            }
        }
        _ => unreachable!("pooling supports one or two axes"),
    }
    (
        Tensor {
            shape: out_shape.to_vec(),
            data: y,
        },
        arg,
    )
}
