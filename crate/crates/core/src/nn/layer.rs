//! Layer kinds and their batched forward/backward kernels.
//!
//! Batched tensors carry the batch on the leading axis. Convolutions are
//! fixed at 3×3 kernels, stride 1, zero padding 1, so they preserve the
//! spatial size of their input.

use std::fmt;
use std::str::FromStr;

use super::gemm::{matmul, MatRef};
use super::{Scalar, Tensor};
use crate::error::{Error, Result};

pub const KERNEL: usize = 3;
pub const PADDING: usize = 1;

#[derive(Clone, Debug, PartialEq)]
pub enum LayerSpec {
    /// `in_channels × H × W → kernels × H × W`.
    Conv2d { in_channels: usize, kernels: usize },
    Dense { inputs: usize, outputs: usize },
    Relu,
    LeakyRelu { slope: f32 },
    Sigmoid,
    Softmax,
    Flatten,
}

impl LayerSpec {
    /// Shapes of the trainable tensors of this layer (weights, then bias).
    pub fn param_shapes(&self) -> Vec<Vec<usize>> {
        match *self {
            LayerSpec::Conv2d {
                in_channels,
                kernels,
            } => vec![vec![kernels, in_channels, KERNEL, KERNEL], vec![kernels]],
            LayerSpec::Dense { inputs, outputs } => vec![vec![outputs, inputs], vec![outputs]],
            _ => Vec::new(),
        }
    }

    pub fn fan_in(&self) -> usize {
        match *self {
            LayerSpec::Conv2d { in_channels, .. } => in_channels * KERNEL * KERNEL,
            LayerSpec::Dense { inputs, .. } => inputs,
            _ => 0,
        }
    }

    /// Per-sample output shape for a per-sample input shape.
    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        match *self {
            LayerSpec::Conv2d {
                in_channels,
                kernels,
            } => match input {
                [c, h, w] if *c == in_channels && *h > 0 && *w > 0 => Ok(vec![kernels, *h, *w]),
                _ => Err(Error::shape(&[in_channels, 0, 0], input)),
            },
            LayerSpec::Dense { inputs, outputs } => match input {
                [n] if *n == inputs => Ok(vec![outputs]),
                _ => Err(Error::shape(&[inputs], input)),
            },
            LayerSpec::Flatten => Ok(vec![input.iter().product()]),
            LayerSpec::Softmax => match input {
                [n] if *n >= 1 => Ok(vec![*n]),
                _ => Err(Error::config(format!(
                    "softmax expects a flat input, found {input:?}"
                ))),
            },
            _ => Ok(input.to_vec()),
        }
    }

    /// True for the probability heads whose backward can be fused with a loss.
    pub fn is_head(&self) -> bool {
        matches!(self, LayerSpec::Sigmoid | LayerSpec::Softmax)
    }
}

impl fmt::Display for LayerSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LayerSpec::Conv2d {
                in_channels,
                kernels,
            } => write!(f, "conv2d in={in_channels} out={kernels}"),
            LayerSpec::Dense { inputs, outputs } => write!(f, "dense in={inputs} out={outputs}"),
            LayerSpec::Relu => f.write_str("relu"),
            LayerSpec::LeakyRelu { slope } => write!(f, "leaky_relu slope={slope}"),
            LayerSpec::Sigmoid => f.write_str("sigmoid"),
            LayerSpec::Softmax => f.write_str("softmax"),
            LayerSpec::Flatten => f.write_str("flatten"),
        }
    }
}

impl FromStr for LayerSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut parts = s.split_whitespace();
        let kind = parts.next().unwrap_or_default();
        let mut args = std::collections::BTreeMap::new();
        for part in parts {
            let (k, v) = part
                .split_once('=')
                .ok_or_else(|| Error::argument(format!("malformed layer argument `{part}`")))?;
            args.insert(k, v);
        }
        let get = |key: &str| -> Result<&str> {
            args.get(key)
                .copied()
                .ok_or_else(|| Error::argument(format!("layer `{kind}` is missing `{key}`")))
        };
        let int = |key: &str| -> Result<usize> {
            get(key)?
                .parse()
                .map_err(|_| Error::argument(format!("layer `{kind}`: `{key}` is not an integer")))
        };
        Ok(match kind {
            "conv2d" => LayerSpec::Conv2d {
                in_channels: int("in")?,
                kernels: int("out")?,
            },
            "dense" => LayerSpec::Dense {
                inputs: int("in")?,
                outputs: int("out")?,
            },
            "relu" => LayerSpec::Relu,
            "leaky_relu" => LayerSpec::LeakyRelu {
                slope: get("slope")?
                    .parse()
                    .map_err(|_| Error::argument("leaky_relu slope is not a number"))?,
            },
            "sigmoid" => LayerSpec::Sigmoid,
            "softmax" => LayerSpec::Softmax,
            "flatten" => LayerSpec::Flatten,
            other => return Err(Error::argument(format!("unknown layer kind `{other}`"))),
        })
    }
}

/// Single-sample 3×3, padding-1 cross-correlation: `C×H×W` input,
/// `K×C×3×3` kernels, `K` bias → `K×H×W`.
pub fn conv2d_forward<F: Scalar>(
    input: &Tensor<F>,
    kernels: &Tensor<F>,
    bias: &Tensor<F>,
) -> Result<Tensor<F>> {
    let (c, h, w) = match input.shape() {
        [c, h, w] => (*c, *h, *w),
        other => return Err(Error::shape(&[0, 0, 0], other)),
    };
    let k = match kernels.shape() {
        [k, kc, KERNEL, KERNEL] if *kc == c => *k,
        other => return Err(Error::shape(&[other.first().copied().unwrap_or(0), c, KERNEL, KERNEL], other)),
    };
    if bias.shape() != [k] {
        return Err(Error::shape(&[k], bias.shape()));
    }
    let batch = input.clone().reshape(&[1, c, h, w])?;
    let out = conv_forward_batch(&batch, kernels, bias);
    out.reshape(&[k, h, w])
}

/// Single-sample affine map: `weights (m×n) · input (n) + bias (m)`.
pub fn dense_forward<F: Scalar>(
    input: &Tensor<F>,
    weights: &Tensor<F>,
    bias: &Tensor<F>,
) -> Result<Tensor<F>> {
    let n = input.len();
    let m = match weights.shape() {
        [m, cols] if *cols == n && input.shape().len() == 1 => *m,
        other => return Err(Error::shape(&[other.first().copied().unwrap_or(0), n], other)),
    };
    if bias.shape() != [m] {
        return Err(Error::shape(&[m], bias.shape()));
    }
    let batch = input.clone().reshape(&[1, n])?;
    dense_forward_batch(&batch, weights, bias).reshape(&[m])
}

/// Numerically stable softmax of a flat tensor.
pub fn softmax<F: Scalar>(logits: &Tensor<F>) -> Result<Tensor<F>> {
    if logits.is_empty() {
        return Err(Error::argument("softmax of an empty vector"));
    }
    let mut out = logits.clone();
    softmax_in_place(out.data_mut());
    Ok(out)
}

pub(crate) fn softmax_in_place<F: Scalar>(row: &mut [F]) {
    let max = row.iter().copied().fold(F::neg_infinity(), F::max);
    let mut total = F::zero();
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        total += *v;
    }
    for v in row.iter_mut() {
        *v /= total;
    }
}

/// Logistic function, kept strictly inside (0, 1) at the precision of `F`.
pub(crate) fn sigmoid<F: Scalar>(x: F) -> F {
    let y = if x >= F::zero() {
        F::one() / (F::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (F::one() + e)
    };
    let half_ulp = F::epsilon() / F::from_f64(2.0);
    y.max(F::min_positive_value()).min(F::one() - half_ulp)
}

fn im2col<F: Scalar>(sample: &[F], c: usize, h: usize, w: usize, cols: &mut [F]) {
    let hw = h * w;
    for ch in 0..c {
        let plane = &sample[ch * hw..(ch + 1) * hw];
        for ky in 0..KERNEL {
            for kx in 0..KERNEL {
                let row = &mut cols[((ch * KERNEL + ky) * KERNEL + kx) * hw..][..hw];
                for y in 0..h {
                    let sy = y as isize + ky as isize - PADDING as isize;
                    let dst = &mut row[y * w..(y + 1) * w];
                    if sy < 0 || sy >= h as isize {
                        dst.iter_mut().for_each(|v| *v = F::zero());
                        continue;
                    }
                    let src = &plane[sy as usize * w..(sy as usize + 1) * w];
                    for (x, d) in dst.iter_mut().enumerate() {
                        let sx = x as isize + kx as isize - PADDING as isize;
                        *d = if sx < 0 || sx >= w as isize {
                            F::zero()
                        } else {
                            src[sx as usize]
                        };
                    }
                }
            }
        }
    }
}

fn col2im<F: Scalar>(cols: &[F], c: usize, h: usize, w: usize, sample: &mut [F]) {
    let hw = h * w;
    for ch in 0..c {
        let plane = &mut sample[ch * hw..(ch + 1) * hw];
        for ky in 0..KERNEL {
            for kx in 0..KERNEL {
                let row = &cols[((ch * KERNEL + ky) * KERNEL + kx) * hw..][..hw];
                for y in 0..h {
                    let sy = y as isize + ky as isize - PADDING as isize;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let dst = &mut plane[sy as usize * w..(sy as usize + 1) * w];
                    for x in 0..w {
                        let sx = x as isize + kx as isize - PADDING as isize;
                        if sx >= 0 && sx < w as isize {
                            dst[sx as usize] += row[y * w + x];
                        }
                    }
                }
            }
        }
    }
}

pub(crate) fn conv_forward_batch<F: Scalar>(
    input: &Tensor<F>,
    kernels: &Tensor<F>,
    bias: &Tensor<F>,
) -> Tensor<F> {
    let [b, c, h, w] = input.shape() else {
        unreachable!("conv input is rank 4")
    };
    let (b, c, h, w) = (*b, *c, *h, *w);
    let k = kernels.shape()[0];
    let hw = h * w;
    let ck = c * KERNEL * KERNEL;
    let mut out = Tensor::zeros(&[b, k, h, w]);
    let mut cols = vec![F::zero(); ck * hw];
    let weights = MatRef::new(kernels.data(), k, ck);
    for s in 0..b {
        im2col(input.row(s), c, h, w, &mut cols);
        let dst = &mut out.data_mut()[s * k * hw..(s + 1) * k * hw];
        for (kk, chunk) in dst.chunks_mut(hw).enumerate() {
            chunk.iter_mut().for_each(|v| *v = bias.data()[kk]);
        }
        matmul(weights, MatRef::new(&cols, ck, hw), dst, true);
    }
    out
}

/// Returns (d_input, d_kernels, d_bias).
pub(crate) fn conv_backward_batch<F: Scalar>(
    input: &Tensor<F>,
    kernels: &Tensor<F>,
    grad_out: &Tensor<F>,
) -> (Tensor<F>, Tensor<F>, Tensor<F>) {
    let [b, c, h, w] = input.shape() else {
        unreachable!("conv input is rank 4")
    };
    let (b, c, h, w) = (*b, *c, *h, *w);
    let k = kernels.shape()[0];
    let hw = h * w;
    let ck = c * KERNEL * KERNEL;
    let mut d_in = Tensor::zeros(input.shape());
    let mut d_k = Tensor::zeros(kernels.shape());
    let mut d_b = Tensor::zeros(&[k]);
    let mut cols = vec![F::zero(); ck * hw];
    let mut d_cols = vec![F::zero(); ck * hw];
    let weights = MatRef::new(kernels.data(), k, ck);
    for s in 0..b {
        let g = grad_out.row(s);
        im2col(input.row(s), c, h, w, &mut cols);
        matmul(
            MatRef::new(g, k, hw),
            MatRef::new(&cols, ck, hw).t(),
            d_k.data_mut(),
            true,
        );
        for (kk, chunk) in g.chunks(hw).enumerate() {
            d_b.data_mut()[kk] += chunk.iter().copied().sum::<F>();
        }
        matmul(weights.t(), MatRef::new(g, k, hw), &mut d_cols, false);
        let dst = &mut d_in.data_mut()[s * c * hw..(s + 1) * c * hw];
        col2im(&d_cols, c, h, w, dst);
    }
    (d_in, d_k, d_b)
}

pub(crate) fn dense_forward_batch<F: Scalar>(
    input: &Tensor<F>,
    weights: &Tensor<F>,
    bias: &Tensor<F>,
) -> Tensor<F> {
    let b = input.shape()[0];
    let n = input.len() / b.max(1);
    let m = weights.shape()[0];
    let mut out = Tensor::zeros(&[b, m]);
    for row in out.data_mut().chunks_mut(m) {
        row.copy_from_slice(bias.data());
    }
    matmul(
        MatRef::new(input.data(), b, n),
        MatRef::new(weights.data(), m, n).t(),
        out.data_mut(),
        true,
    );
    out
}

/// Returns (d_input, d_weights, d_bias).
pub(crate) fn dense_backward_batch<F: Scalar>(
    input: &Tensor<F>,
    weights: &Tensor<F>,
    grad_out: &Tensor<F>,
) -> (Tensor<F>, Tensor<F>, Tensor<F>) {
    let b = input.shape()[0];
    let n = input.len() / b.max(1);
    let m = weights.shape()[0];
    let mut d_w = Tensor::zeros(weights.shape());
    matmul(
        MatRef::new(grad_out.data(), b, m).t(),
        MatRef::new(input.data(), b, n),
        d_w.data_mut(),
        false,
    );
    let mut d_b = Tensor::zeros(&[m]);
    for row in grad_out.data().chunks(m) {
        for (acc, g) in d_b.data_mut().iter_mut().zip(row) {
            *acc += *g;
        }
    }
    let mut d_in = Tensor::zeros(input.shape());
    matmul(
        MatRef::new(grad_out.data(), b, m),
        MatRef::new(weights.data(), m, n),
        d_in.data_mut(),
        false,
    );
    (d_in, d_w, d_b)
}
