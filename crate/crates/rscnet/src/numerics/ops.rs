//! Differentiable operations: elementwise math, shape surgery, dense and
//! convolutional layers, batch normalization, the LSTM cell, and losses.
//!
//! Every operation validates shapes, checks the all-finite invariant on its
//! output, and registers a closure that routes gradients to its parents.

use std::rc::Rc;

use crate::error::NumericsError;

use super::gemm::{matmul_nn, matmul_nt, matmul_tn};
use super::scalar::Scalar;
use super::tensor::{fmt_shape, Tensor};

// ── elementwise ─────────────────────────────────────────────────────────

fn binary_shape_check<T: Scalar>(
    op: &'static str,
    a: &Tensor<T>,
    b: &Tensor<T>,
) -> Result<(), NumericsError> {
    if a.shape() != b.shape() {
        return Err(NumericsError::ShapeMismatch {
            op,
            expected: fmt_shape(a.shape()),
            got: fmt_shape(b.shape()),
        });
    }
    Ok(())
}

impl<T: Scalar> Tensor<T> {
    pub fn add(&self, other: &Tensor<T>) -> Result<Tensor<T>, NumericsError> {
        binary_shape_check("add", self, other)?;
        let values = self
            .values()
            .iter()
            .zip(other.values())
            .map(|(&a, &b)| a + b)
            .collect();
        Tensor::from_op(
            "add",
            self.shape().to_vec(),
            values,
            vec![self.clone(), other.clone()],
            Box::new(|node, go| {
                node.parents[0].accumulate_grad(go);
                node.parents[1].accumulate_grad(go);
            }),
        )
    }

    pub fn sub(&self, other: &Tensor<T>) -> Result<Tensor<T>, NumericsError> {
        binary_shape_check("sub", self, other)?;
        let values = self
            .values()
            .iter()
            .zip(other.values())
            .map(|(&a, &b)| a - b)
            .collect();
        Tensor::from_op(
            "sub",
            self.shape().to_vec(),
            values,
            vec![self.clone(), other.clone()],
            Box::new(|node, go| {
                node.parents[0].accumulate_grad(go);
                let neg: Vec<T> = go.iter().map(|&g| -g).collect();
                node.parents[1].accumulate_grad(&neg);
            }),
        )
    }

    pub fn mul(&self, other: &Tensor<T>) -> Result<Tensor<T>, NumericsError> {
        binary_shape_check("mul", self, other)?;
        let values = self
            .values()
            .iter()
            .zip(other.values())
            .map(|(&a, &b)| a * b)
            .collect();
        Tensor::from_op(
            "mul",
            self.shape().to_vec(),
            values,
            vec![self.clone(), other.clone()],
            Box::new(|node, go| {
                let a = node.parents[0].values();
                let b = node.parents[1].values();
                let ga: Vec<T> = go.iter().zip(b).map(|(&g, &bv)| g * bv).collect();
                let gb: Vec<T> = go.iter().zip(a).map(|(&g, &av)| g * av).collect();
                node.parents[0].accumulate_grad(&ga);
                node.parents[1].accumulate_grad(&gb);
            }),
        )
    }

    pub fn scale(&self, factor: f64) -> Result<Tensor<T>, NumericsError> {
        let c = T::from_f64(factor);
        let values = self.values().iter().map(|&v| v * c).collect();
        Tensor::from_op(
            "scale",
            self.shape().to_vec(),
            values,
            vec![self.clone()],
            Box::new(move |node, go| {
                let ga: Vec<T> = go.iter().map(|&g| g * c).collect();
                node.parents[0].accumulate_grad(&ga);
            }),
        )
    }

    pub fn reshape(&self, shape: Vec<usize>) -> Result<Tensor<T>, NumericsError> {
        if shape.iter().product::<usize>() != self.len() {
            return Err(NumericsError::ShapeMismatch {
                op: "reshape",
                expected: format!("{} elements", self.len()),
                got: fmt_shape(&shape),
            });
        }
        Ok(Tensor::from_view_op(
            shape,
            self.values_rc(),
            vec![self.clone()],
            Box::new(|node, go| node.parents[0].accumulate_grad(go)),
        ))
    }

    /// Contiguous slice `start..start + len` along one axis.
    pub fn narrow(
        &self,
        axis: usize,
        start: usize,
        len: usize,
    ) -> Result<Tensor<T>, NumericsError> {
        let shape = self.shape();
        if axis >= shape.len() || start + len > shape[axis] || len == 0 {
            return Err(NumericsError::ShapeMismatch {
                op: "narrow",
                expected: format!("axis {axis} within {}", fmt_shape(shape)),
                got: format!("start {start}, len {len}"),
            });
        }
        let outer: usize = shape[..axis].iter().product();
        let mid = shape[axis];
        let inner: usize = shape[axis + 1..].iter().product();
        let mut values = vec![T::ZERO; outer * len * inner];
        let src = self.values();
        for o in 0..outer {
            let s = (o * mid + start) * inner;
            let d = o * len * inner;
            values[d..d + len * inner].copy_from_slice(&src[s..s + len * inner]);
        }
        let mut out_shape = shape.to_vec();
        out_shape[axis] = len;
        let parent_len = self.len();
        Tensor::from_op(
            "narrow",
            out_shape,
            values,
            vec![self.clone()],
            Box::new(move |node, go| {
                let mut gx = vec![T::ZERO; parent_len];
                for o in 0..outer {
                    let d = (o * mid + start) * inner;
                    let s = o * len * inner;
                    gx[d..d + len * inner].copy_from_slice(&go[s..s + len * inner]);
                }
                node.parents[0].accumulate_grad(&gx);
            }),
        )
    }
}

/// Concatenate along `axis`; all other extents must agree.
pub fn concat<T: Scalar>(axis: usize, parts: &[Tensor<T>]) -> Result<Tensor<T>, NumericsError> {
    let first = parts.first().ok_or_else(|| NumericsError::Invalid(
        "concat: empty input list".into(),
    ))?;
    let rank = first.shape().len();
    if axis >= rank {
        return Err(NumericsError::Invalid(format!(
            "concat: axis {axis} out of range for rank {rank}"
        )));
    }
    let mut mids = Vec::with_capacity(parts.len());
    for p in parts {
        if p.shape().len() != rank {
            return Err(NumericsError::ShapeMismatch {
                op: "concat",
                expected: fmt_shape(first.shape()),
                got: fmt_shape(p.shape()),
            });
        }
        for (d, (&a, &b)) in first.shape().iter().zip(p.shape()).enumerate() {
            if d != axis && a != b {
                return Err(NumericsError::ShapeMismatch {
                    op: "concat",
                    expected: fmt_shape(first.shape()),
                    got: fmt_shape(p.shape()),
                });
            }
        }
        mids.push(p.shape()[axis]);
    }
    let outer: usize = first.shape()[..axis].iter().product();
    let inner: usize = first.shape()[axis + 1..].iter().product();
    let total_mid: usize = mids.iter().sum();
    let mut values = vec![T::ZERO; outer * total_mid * inner];
    let mut offset = 0;
    for (p, &mid) in parts.iter().zip(&mids) {
        let src = p.values();
        for o in 0..outer {
            let d = (o * total_mid + offset) * inner;
            let s = o * mid * inner;
            values[d..d + mid * inner].copy_from_slice(&src[s..s + mid * inner]);
        }
        offset += mid;
    }
    let mut out_shape = first.shape().to_vec();
    out_shape[axis] = total_mid;
    let mids_cap = mids.clone();
    Tensor::from_op(
        "concat",
        out_shape,
        values,
        parts.to_vec(),
        Box::new(move |node, go| {
            let mut offset = 0;
            for (pi, &mid) in mids_cap.iter().enumerate() {
                let mut gp = vec![T::ZERO; outer * mid * inner];
                for o in 0..outer {
                    let s = (o * total_mid + offset) * inner;
                    let d = o * mid * inner;
                    gp[d..d + mid * inner].copy_from_slice(&go[s..s + mid * inner]);
                }
                node.parents[pi].accumulate_grad(&gp);
                offset += mid;
            }
        }),
    )
}

// ── activations ─────────────────────────────────────────────────────────

pub fn relu<T: Scalar>(x: &Tensor<T>) -> Result<Tensor<T>, NumericsError> {
    let values = x.values().iter().map(|&v| v.max(T::ZERO)).collect();
    Tensor::from_op(
        "relu",
        x.shape().to_vec(),
        values,
        vec![x.clone()],
        Box::new(|node, go| {
            let x = node.parents[0].values();
            let gx: Vec<T> = go
                .iter()
                .zip(x)
                .map(|(&g, &v)| if v > T::ZERO { g } else { T::ZERO })
                .collect();
            node.parents[0].accumulate_grad(&gx);
        }),
    )
}

/// PReLU with one learnable slope per channel (axis 1).
pub fn prelu<T: Scalar>(x: &Tensor<T>, alpha: &Tensor<T>) -> Result<Tensor<T>, NumericsError> {
    let shape = x.shape();
    if shape.len() < 2 {
        return Err(NumericsError::ShapeMismatch {
            op: "prelu",
            expected: "rank >= 2 input".into(),
            got: fmt_shape(shape),
        });
    }
    let channels = shape[1];
    if alpha.shape() != [channels] {
        return Err(NumericsError::ShapeMismatch {
            op: "prelu",
            expected: format!("alpha [{channels}]"),
            got: fmt_shape(alpha.shape()),
        });
    }
    let batch = shape[0];
    let inner: usize = shape[2..].iter().product();
    let xv = x.values();
    let av = alpha.values();
    let mut values = vec![T::ZERO; xv.len()];
    for b in 0..batch {
        for c in 0..channels {
            let a = av[c];
            let off = (b * channels + c) * inner;
            for (dst, &v) in values[off..off + inner].iter_mut().zip(&xv[off..off + inner]) {
                *dst = if v > T::ZERO { v } else { a * v };
            }
        }
    }
    Tensor::from_op(
        "prelu",
        shape.to_vec(),
        values,
        vec![x.clone(), alpha.clone()],
        Box::new(move |node, go| {
            let xv = node.parents[0].values();
            let av = node.parents[1].values();
            let mut gx = vec![T::ZERO; xv.len()];
            let mut ga = vec![T::ZERO; av.len()];
            for b in 0..batch {
                for c in 0..channels {
                    let a = av[c];
                    let off = (b * channels + c) * inner;
                    let mut acc = T::ZERO;
                    for i in 0..inner {
                        let v = xv[off + i];
                        let g = go[off + i];
                        if v > T::ZERO {
                            gx[off + i] = g;
                        } else {
                            gx[off + i] = g * a;
                            acc += g * v;
                        }
                    }
                    ga[c] += acc;
                }
            }
            node.parents[0].accumulate_grad(&gx);
            node.parents[1].accumulate_grad(&ga);
        }),
    )
}

pub fn sigmoid<T: Scalar>(x: &Tensor<T>) -> Result<Tensor<T>, NumericsError> {
    let values = x
        .values()
        .iter()
        .map(|&v| {
            // Split by sign to avoid exp overflow.
            if v >= T::ZERO {
                T::ONE / (T::ONE + (-v).exp())
            } else {
                let e = v.exp();
                e / (T::ONE + e)
            }
        })
        .collect();
    Tensor::from_op(
        "sigmoid",
        x.shape().to_vec(),
        values,
        vec![x.clone()],
        Box::new(|node, go| {
            let y = node.values();
            let gx: Vec<T> = go
                .iter()
                .zip(y)
                .map(|(&g, &yv)| g * yv * (T::ONE - yv))
                .collect();
            node.parents[0].accumulate_grad(&gx);
        }),
    )
}

pub fn tanh<T: Scalar>(x: &Tensor<T>) -> Result<Tensor<T>, NumericsError> {
    let values = x.values().iter().map(|&v| v.tanh()).collect();
    Tensor::from_op(
        "tanh",
        x.shape().to_vec(),
        values,
        vec![x.clone()],
        Box::new(|node, go| {
            let y = node.values();
            let gx: Vec<T> = go
                .iter()
                .zip(y)
                .map(|(&g, &yv)| g * (T::ONE - yv * yv))
                .collect();
            node.parents[0].accumulate_grad(&gx);
        }),
    )
}

// ── reductions ──────────────────────────────────────────────────────────

pub fn sum_all<T: Scalar>(x: &Tensor<T>) -> Result<Tensor<T>, NumericsError> {
    let total = x.values().iter().copied().fold(T::ZERO, |a, v| a + v);
    Tensor::from_op(
        "sum_all",
        vec![1],
        vec![total],
        vec![x.clone()],
        Box::new(|node, go| {
            let g = go[0];
            let gx = vec![g; node.parents[0].len()];
            node.parents[0].accumulate_grad(&gx);
        }),
    )
}

pub fn mean_all<T: Scalar>(x: &Tensor<T>) -> Result<Tensor<T>, NumericsError> {
    let n = x.len();
    let total = x.values().iter().copied().fold(T::ZERO, |a, v| a + v);
    let inv = T::from_f64(1.0 / n as f64);
    Tensor::from_op(
        "mean_all",
        vec![1],
        vec![total * inv],
        vec![x.clone()],
        Box::new(move |node, go| {
            let g = go[0] * inv;
            let gx = vec![g; node.parents[0].len()];
            node.parents[0].accumulate_grad(&gx);
        }),
    )
}

// ── dense algebra ───────────────────────────────────────────────────────

/// c[m,n] = a[m,k] * b[k,n].
pub fn matmul<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>, NumericsError> {
    let (ash, bsh) = (a.shape(), b.shape());
    if ash.len() != 2 || bsh.len() != 2 || ash[1] != bsh[0] {
        return Err(NumericsError::ShapeMismatch {
            op: "matmul",
            expected: format!("[m,k] x [k,n], got lhs {}", fmt_shape(ash)),
            got: fmt_shape(bsh),
        });
    }
    let (m, k, n) = (ash[0], ash[1], bsh[1]);
    let values = matmul_nn(a.values(), b.values(), m, k, n);
    Tensor::from_op(
        "matmul",
        vec![m, n],
        values,
        vec![a.clone(), b.clone()],
        Box::new(move |node, go| {
            let av = node.parents[0].values();
            let bv = node.parents[1].values();
            // ga = go * b^T, gb = a^T * go
            let ga = matmul_nt(go, bv, m, n, k);
            let gb = matmul_tn(av, go, m, k, n);
            node.parents[0].accumulate_grad(&ga);
            node.parents[1].accumulate_grad(&gb);
        }),
    )
}

/// Affine map over the last axis: y = x * w^T + b, batching over all
/// leading axes.
pub fn linear<T: Scalar>(
    x: &Tensor<T>,
    weight: &Tensor<T>,
    bias: &Tensor<T>,
) -> Result<Tensor<T>, NumericsError> {
    let xsh = x.shape();
    let wsh = weight.shape();
    if wsh.len() != 2 {
        return Err(NumericsError::ShapeMismatch {
            op: "linear",
            expected: "[d_out, d_in] weight".into(),
            got: fmt_shape(wsh),
        });
    }
    let (d_out, d_in) = (wsh[0], wsh[1]);
    if *xsh.last().unwrap() != d_in {
        return Err(NumericsError::ShapeMismatch {
            op: "linear",
            expected: format!("input last extent {d_in}"),
            got: fmt_shape(xsh),
        });
    }
    if bias.shape() != [d_out] {
        return Err(NumericsError::ShapeMismatch {
            op: "linear",
            expected: format!("bias [{d_out}]"),
            got: fmt_shape(bias.shape()),
        });
    }
    let rows = x.len() / d_in;
    let mut values = matmul_nt(x.values(), weight.values(), rows, d_in, d_out);
    let bv = bias.values();
    for r in 0..rows {
        for (dst, &b) in values[r * d_out..(r + 1) * d_out].iter_mut().zip(bv) {
            *dst += b;
        }
    }
    let mut out_shape = xsh[..xsh.len() - 1].to_vec();
    out_shape.push(d_out);
    Tensor::from_op(
        "linear",
        out_shape,
        values,
        vec![x.clone(), weight.clone(), bias.clone()],
        Box::new(move |node, go| {
            let xv = node.parents[0].values();
            let wv = node.parents[1].values();
            // gx = go * w ; gw = go^T * x ; gb = column sums of go
            let gx = matmul_nn(go, wv, rows, d_out, d_in);
            let gw = matmul_tn(go, xv, rows, d_out, d_in);
            let mut gb = vec![T::ZERO; d_out];
            for r in 0..rows {
                for (acc, &g) in gb.iter_mut().zip(&go[r * d_out..(r + 1) * d_out]) {
                    *acc += g;
                }
            }
            node.parents[0].accumulate_grad(&gx);
            node.parents[1].accumulate_grad(&gw);
            node.parents[2].accumulate_grad(&gb);
        }),
    )
}

// ── convolution ─────────────────────────────────────────────────────────

/// Receptive span of a dilated kernel: k + (k-1)(d-1).
pub fn effective_kernel_size(k: usize, d: usize) -> usize {
    debug_assert!(k >= 1 && d >= 1);
    k + (k - 1) * (d - 1)
}

/// Geometry of one 2-D convolution. Padding is always "same": the output
/// spatial extent equals the input's.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvSpec {
    pub kernel_h: usize,
    pub kernel_w: usize,
    pub dilation: usize,
    pub in_channels: usize,
    pub out_channels: usize,
}

impl ConvSpec {
    pub fn effective_kernel(&self) -> (usize, usize) {
        (
            effective_kernel_size(self.kernel_h, self.dilation),
            effective_kernel_size(self.kernel_w, self.dilation),
        )
    }

    /// Symmetric "same" padding derived from the effective kernel.
    pub fn padding(&self) -> Result<(usize, usize), NumericsError> {
        let (keh, kew) = self.effective_kernel();
        if keh % 2 == 0 || kew % 2 == 0 {
            return Err(NumericsError::Invalid(format!(
                "conv2d: same padding requires odd effective kernels, got {keh}x{kew}"
            )));
        }
        Ok(((keh - 1) / 2, (kew - 1) / 2))
    }

    /// Check this spec against an input plane of `h` x `w`.
    pub fn validate(&self, h: usize, w: usize) -> Result<(), NumericsError> {
        if self.kernel_h == 0
            || self.kernel_w == 0
            || self.dilation == 0
            || self.in_channels == 0
            || self.out_channels == 0
        {
            return Err(NumericsError::Invalid(
                "conv2d: kernel, dilation, and channel counts must be positive".into(),
            ));
        }
        let (ph, pw) = self.padding()?;
        let (keh, kew) = self.effective_kernel();
        if keh > h + 2 * ph || kew > w + 2 * pw {
            return Err(NumericsError::KernelExceedsInput {
                k_eff_h: keh,
                k_eff_w: kew,
                padded_h: h + 2 * ph,
                padded_w: w + 2 * pw,
            });
        }
        Ok(())
    }
}

#[allow(clippy::too_many_arguments)]
fn im2col<T: Scalar>(
    x: &[T],
    batch: usize,
    cin: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    d: usize,
    ph: usize,
    pw: usize,
) -> Vec<T> {
    let hw = h * w;
    let ncols = batch * hw;
    let mut cols = vec![T::ZERO; cin * kh * kw * ncols];
    for b in 0..batch {
        for c in 0..cin {
            let xc = &x[(b * cin + c) * hw..(b * cin + c + 1) * hw];
            for m in 0..kh {
                for n in 0..kw {
                    let row = (c * kh + m) * kw + n;
                    let shift = (d * n) as isize - pw as isize;
                    let j0 = (-shift).max(0) as usize;
                    let j1 = ((w as isize - shift).max(0) as usize).min(w);
                    if j1 <= j0 {
                        continue;
                    }
                    for i in 0..h {
                        let ii = (i + d * m) as isize - ph as isize;
                        if ii < 0 || ii >= h as isize {
                            continue;
                        }
                        let src = (ii as usize) * w + (j0 as isize + shift) as usize;
                        let dst = row * ncols + b * hw + i * w + j0;
                        cols[dst..dst + (j1 - j0)].copy_from_slice(&xc[src..src + (j1 - j0)]);
                    }
                }
            }
        }
    }
    cols
}

#[allow(clippy::too_many_arguments)]
fn col2im_add<T: Scalar>(
    dcols: &[T],
    batch: usize,
    cin: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    d: usize,
    ph: usize,
    pw: usize,
    dx: &mut [T],
) {
    let hw = h * w;
    let ncols = batch * hw;
    for b in 0..batch {
        for c in 0..cin {
            let base = (b * cin + c) * hw;
            for m in 0..kh {
                for n in 0..kw {
                    let row = (c * kh + m) * kw + n;
                    let shift = (d * n) as isize - pw as isize;
                    let j0 = (-shift).max(0) as usize;
                    let j1 = ((w as isize - shift).max(0) as usize).min(w);
                    if j1 <= j0 {
                        continue;
                    }
                    for i in 0..h {
                        let ii = (i + d * m) as isize - ph as isize;
                        if ii < 0 || ii >= h as isize {
                            continue;
                        }
                        let src = row * ncols + b * hw + i * w + j0;
                        let dst = base + (ii as usize) * w + (j0 as isize + shift) as usize;
                        for t in 0..j1 - j0 {
                            dx[dst + t] += dcols[src + t];
                        }
                    }
                }
            }
        }
    }
}

/// 2-D dilated convolution with "same" zero padding and a per-output-channel
/// bias. Accepts `[c,h,w]` or `[b,c,h,w]` input.
pub fn conv2d<T: Scalar>(
    input: &Tensor<T>,
    spec: &ConvSpec,
    weights: &Tensor<T>,
    bias: &Tensor<T>,
) -> Result<Tensor<T>, NumericsError> {
    let rank3 = input.shape().len() == 3;
    let x = if rank3 {
        let mut s = vec![1];
        s.extend_from_slice(input.shape());
        input.reshape(s)?
    } else {
        input.clone()
    };
    let xsh = x.shape().to_vec();
    if xsh.len() != 4 {
        return Err(NumericsError::ShapeMismatch {
            op: "conv2d",
            expected: "[c,h,w] or [b,c,h,w] input".into(),
            got: fmt_shape(input.shape()),
        });
    }
    let (batch, cin, h, w) = (xsh[0], xsh[1], xsh[2], xsh[3]);
    let (cout, kh, kw, d) = (
        spec.out_channels,
        spec.kernel_h,
        spec.kernel_w,
        spec.dilation,
    );
    if cin != spec.in_channels {
        return Err(NumericsError::ShapeMismatch {
            op: "conv2d",
            expected: format!("{} input channels", spec.in_channels),
            got: format!("{cin}"),
        });
    }
    if weights.shape() != [cout, cin, kh, kw] {
        return Err(NumericsError::ShapeMismatch {
            op: "conv2d",
            expected: fmt_shape(&[cout, cin, kh, kw]),
            got: fmt_shape(weights.shape()),
        });
    }
    if bias.shape() != [cout] {
        return Err(NumericsError::ShapeMismatch {
            op: "conv2d",
            expected: format!("bias [{cout}]"),
            got: fmt_shape(bias.shape()),
        });
    }
    spec.validate(h, w)?;
    let (ph, pw) = spec.padding()?;

    let hw = h * w;
    let ncols = batch * hw;
    let krows = cin * kh * kw;
    let cols = im2col(x.values(), batch, cin, h, w, kh, kw, d, ph, pw);
    let ymat = matmul_nn(weights.values(), &cols, cout, krows, ncols);
    drop(cols);

    let bv = bias.values();
    let mut values = vec![T::ZERO; batch * cout * hw];
    for b in 0..batch {
        for o in 0..cout {
            let src = &ymat[o * ncols + b * hw..o * ncols + b * hw + hw];
            let dst = &mut values[(b * cout + o) * hw..(b * cout + o + 1) * hw];
            let bias_o = bv[o];
            for (dv, &sv) in dst.iter_mut().zip(src) {
                *dv = sv + bias_o;
            }
        }
    }

    let out = Tensor::from_op(
        "conv2d",
        vec![batch, cout, h, w],
        values,
        vec![x, weights.clone(), bias.clone()],
        Box::new(move |node, go| {
            // Rearrange [b,cout,h,w] -> [cout, b*h*w]
            let mut gm = vec![T::ZERO; cout * ncols];
            for b in 0..batch {
                for o in 0..cout {
                    gm[o * ncols + b * hw..o * ncols + b * hw + hw]
                        .copy_from_slice(&go[(b * cout + o) * hw..(b * cout + o + 1) * hw]);
                }
            }
            let mut gb = vec![T::ZERO; cout];
            for (o, acc) in gb.iter_mut().enumerate() {
                for &g in &gm[o * ncols..(o + 1) * ncols] {
                    *acc += g;
                }
            }
            let xv = node.parents[0].values();
            let cols = im2col(xv, batch, cin, h, w, kh, kw, d, ph, pw);
            let gw = matmul_nt(&gm, &cols, cout, ncols, krows);
            drop(cols);
            let dcols = matmul_tn(node.parents[1].values(), &gm, cout, krows, ncols);
            let mut gx = vec![T::ZERO; batch * cin * hw];
            col2im_add(&dcols, batch, cin, h, w, kh, kw, d, ph, pw, &mut gx);
            node.parents[0].accumulate_grad(&gx);
            node.parents[1].accumulate_grad(&gw);
            node.parents[2].accumulate_grad(&gb);
        }),
    )?;
    if rank3 {
        out.reshape(vec![cout, h, w])
    } else {
        Ok(out)
    }
}

// ── batch normalization ─────────────────────────────────────────────────

/// Per-channel batch normalization over a `[b,c,h,w]` tensor.
///
/// In training mode the batch statistics normalize the activations and the
/// running statistics are updated in place with `momentum`. In eval mode
/// the running statistics are applied unchanged.
#[allow(clippy::too_many_arguments)]
pub fn batchnorm2d<T: Scalar>(
    x: &Tensor<T>,
    gamma: &Tensor<T>,
    beta: &Tensor<T>,
    running_mean: &mut [T],
    running_var: &mut [T],
    eps: f64,
    momentum: f64,
    training: bool,
) -> Result<Tensor<T>, NumericsError> {
    let shape = x.shape();
    if shape.len() != 4 {
        return Err(NumericsError::ShapeMismatch {
            op: "batchnorm2d",
            expected: "[b,c,h,w] input".into(),
            got: fmt_shape(shape),
        });
    }
    let (batch, channels, hw) = (shape[0], shape[1], shape[2] * shape[3]);
    if gamma.shape() != [channels] || beta.shape() != [channels] {
        return Err(NumericsError::ShapeMismatch {
            op: "batchnorm2d",
            expected: format!("gamma/beta [{channels}]"),
            got: format!(
                "{} / {}",
                fmt_shape(gamma.shape()),
                fmt_shape(beta.shape())
            ),
        });
    }
    if running_mean.len() != channels || running_var.len() != channels {
        return Err(NumericsError::ShapeMismatch {
            op: "batchnorm2d",
            expected: format!("running stats [{channels}]"),
            got: format!("{} / {}", running_mean.len(), running_var.len()),
        });
    }

    let n = batch * hw;
    let xv = x.values();
    let gv = gamma.values();
    let bv = beta.values();

    let channel_slices = |c: usize| {
        (0..batch).map(move |b| (b * channels + c) * hw)
    };

    let (mean, var): (Vec<f64>, Vec<f64>) = if training {
        let mut mean = vec![0.0f64; channels];
        let mut var = vec![0.0f64; channels];
        for c in 0..channels {
            let mut acc = 0.0f64;
            for off in channel_slices(c) {
                for &v in &xv[off..off + hw] {
                    acc += v.to_f64();
                }
            }
            let mu = acc / n as f64;
            let mut acc2 = 0.0f64;
            for off in channel_slices(c) {
                for &v in &xv[off..off + hw] {
                    let d = v.to_f64() - mu;
                    acc2 += d * d;
                }
            }
            mean[c] = mu;
            var[c] = acc2 / n as f64;
        }
        for c in 0..channels {
            let unbiased = if n > 1 {
                var[c] * n as f64 / (n - 1) as f64
            } else {
                var[c]
            };
            running_mean[c] =
                T::from_f64((1.0 - momentum) * running_mean[c].to_f64() + momentum * mean[c]);
            running_var[c] =
                T::from_f64((1.0 - momentum) * running_var[c].to_f64() + momentum * unbiased);
        }
        (mean, var)
    } else {
        (
            running_mean.iter().map(|v| v.to_f64()).collect(),
            running_var.iter().map(|v| v.to_f64()).collect(),
        )
    };

    let inv: Vec<T> = var
        .iter()
        .map(|&v| T::from_f64(1.0 / (v + eps).sqrt()))
        .collect();
    let mean_t: Vec<T> = mean.iter().map(|&m| T::from_f64(m)).collect();

    let mut xhat = vec![T::ZERO; xv.len()];
    let mut values = vec![T::ZERO; xv.len()];
    for c in 0..channels {
        let (m, iv, g, be) = (mean_t[c], inv[c], gv[c], bv[c]);
        for off in channel_slices(c) {
            for i in off..off + hw {
                let xh = (xv[i] - m) * iv;
                xhat[i] = xh;
                values[i] = g * xh + be;
            }
        }
    }

    let xhat = Rc::new(xhat);
    let inv = Rc::new(inv);
    Tensor::from_op(
        "batchnorm2d",
        shape.to_vec(),
        values,
        vec![x.clone(), gamma.clone(), beta.clone()],
        Box::new(move |node, go| {
            let gv = node.parents[1].values();
            let mut gx = vec![T::ZERO; go.len()];
            let mut ggamma = vec![T::ZERO; channels];
            let mut gbeta = vec![T::ZERO; channels];
            for c in 0..channels {
                let mut sum_go = 0.0f64;
                let mut sum_go_xhat = 0.0f64;
                for b in 0..batch {
                    let off = (b * channels + c) * hw;
                    for i in off..off + hw {
                        sum_go += go[i].to_f64();
                        sum_go_xhat += go[i].to_f64() * xhat[i].to_f64();
                    }
                }
                ggamma[c] = T::from_f64(sum_go_xhat);
                gbeta[c] = T::from_f64(sum_go);
                let g = gv[c];
                let iv = inv[c];
                if training {
                    let mean_go = T::from_f64(sum_go / n as f64);
                    let mean_go_xhat = T::from_f64(sum_go_xhat / n as f64);
                    for b in 0..batch {
                        let off = (b * channels + c) * hw;
                        for i in off..off + hw {
                            gx[i] = g * iv * (go[i] - mean_go - xhat[i] * mean_go_xhat);
                        }
                    }
                } else {
                    for b in 0..batch {
                        let off = (b * channels + c) * hw;
                        for i in off..off + hw {
                            gx[i] = g * iv * go[i];
                        }
                    }
                }
            }
            node.parents[0].accumulate_grad(&gx);
            node.parents[1].accumulate_grad(&ggamma);
            node.parents[2].accumulate_grad(&gbeta);
        }),
    )
}

// ── recurrent cell ──────────────────────────────────────────────────────

/// LSTM gate parameters. Rows of the weight matrices are stacked in gate
/// order (input, forget, cell, output), each block `hidden` rows tall.
#[derive(Clone)]
pub struct LstmCellParams<T: Scalar> {
    pub w_ih: Tensor<T>,
    pub w_hh: Tensor<T>,
    pub b_ih: Tensor<T>,
    pub b_hh: Tensor<T>,
}

impl<T: Scalar> LstmCellParams<T> {
    pub fn hidden_size(&self) -> usize {
        self.w_hh.shape()[1]
    }

    pub fn input_size(&self) -> usize {
        self.w_ih.shape()[1]
    }
}

/// One LSTM step: sigmoid input/forget/output gates, tanh candidate and
/// output squashing. Accepts `[d]`/`[h]` vectors or `[b,d]`/`[b,h]` batches.
pub fn lstm_cell<T: Scalar>(
    x: &Tensor<T>,
    h: &Tensor<T>,
    c: &Tensor<T>,
    params: &LstmCellParams<T>,
) -> Result<(Tensor<T>, Tensor<T>), NumericsError> {
    let rank1 = x.shape().len() == 1;
    let (xb, hb, cb) = if rank1 {
        (
            x.reshape(vec![1, x.len()])?,
            h.reshape(vec![1, h.len()])?,
            c.reshape(vec![1, c.len()])?,
        )
    } else {
        (x.clone(), h.clone(), c.clone())
    };
    let hidden = params.hidden_size();
    if hb.shape().last() != Some(&hidden) || cb.shape().last() != Some(&hidden) {
        return Err(NumericsError::ShapeMismatch {
            op: "lstm_cell",
            expected: format!("hidden/cell state width {hidden}"),
            got: format!("{} / {}", fmt_shape(h.shape()), fmt_shape(c.shape())),
        });
    }
    let gates = linear(&xb, &params.w_ih, &params.b_ih)?
        .add(&linear(&hb, &params.w_hh, &params.b_hh)?)?;
    let gate_i = sigmoid(&gates.narrow(1, 0, hidden)?)?;
    let gate_f = sigmoid(&gates.narrow(1, hidden, hidden)?)?;
    let gate_g = tanh(&gates.narrow(1, 2 * hidden, hidden)?)?;
    let gate_o = sigmoid(&gates.narrow(1, 3 * hidden, hidden)?)?;
    let c_next = gate_f.mul(&cb)?.add(&gate_i.mul(&gate_g)?)?;
    let h_next = gate_o.mul(&tanh(&c_next)?)?;
    if rank1 {
        Ok((h_next.reshape(vec![hidden])?, c_next.reshape(vec![hidden])?))
    } else {
        Ok((h_next, c_next))
    }
}

// ── losses ──────────────────────────────────────────────────────────────

/// Numerically stable softmax over the last axis.
pub fn softmax<T: Scalar>(z: &Tensor<T>) -> Result<Tensor<T>, NumericsError> {
    let shape = z.shape();
    let classes = *shape.last().unwrap();
    let rows = z.len() / classes;
    let zv = z.values();
    let mut values = vec![T::ZERO; zv.len()];
    for r in 0..rows {
        let row = &zv[r * classes..(r + 1) * classes];
        let max = row.iter().copied().fold(row[0], |a, v| a.max(v));
        let mut denom = T::ZERO;
        for (i, &v) in row.iter().enumerate() {
            let e = (v - max).exp();
            values[r * classes + i] = e;
            denom += e;
        }
        for v in &mut values[r * classes..(r + 1) * classes] {
            *v = *v / denom;
        }
    }
    Tensor::from_op(
        "softmax",
        shape.to_vec(),
        values,
        vec![z.clone()],
        Box::new(move |node, go| {
            let y = node.values();
            let mut gz = vec![T::ZERO; y.len()];
            for r in 0..rows {
                let off = r * classes;
                let mut s = T::ZERO;
                for i in 0..classes {
                    s += go[off + i] * y[off + i];
                }
                for i in 0..classes {
                    gz[off + i] = y[off + i] * (go[off + i] - s);
                }
            }
            node.parents[0].accumulate_grad(&gz);
        }),
    )
}

/// Mean over the batch of -log softmax(logits)[label].
pub fn cross_entropy<T: Scalar>(
    logits: &Tensor<T>,
    labels: &[usize],
) -> Result<Tensor<T>, NumericsError> {
    let shape = logits.shape();
    let (rows, classes) = match shape.len() {
        1 => (1, shape[0]),
        2 => (shape[0], shape[1]),
        _ => {
            return Err(NumericsError::ShapeMismatch {
                op: "cross_entropy",
                expected: "[c] or [b,c] logits".into(),
                got: fmt_shape(shape),
            })
        }
    };
    if labels.len() != rows {
        return Err(NumericsError::ShapeMismatch {
            op: "cross_entropy",
            expected: format!("{rows} labels"),
            got: format!("{}", labels.len()),
        });
    }
    for &y in labels {
        if y >= classes {
            return Err(NumericsError::LabelOutOfRange { label: y, classes });
        }
    }
    let zv = logits.values();
    let mut total = 0.0f64;
    for (r, &y) in labels.iter().enumerate() {
        let row = &zv[r * classes..(r + 1) * classes];
        let max = row.iter().copied().fold(row[0], |a, v| a.max(v));
        let mut denom = 0.0f64;
        for &v in row {
            denom += (v - max).to_f64().exp();
        }
        let lse = max.to_f64() + denom.ln();
        total += lse - row[y].to_f64();
    }
    let labels = labels.to_vec();
    Tensor::from_op(
        "cross_entropy",
        vec![1],
        vec![T::from_f64(total / rows as f64)],
        vec![logits.clone()],
        Box::new(move |node, go| {
            let zv = node.parents[0].values();
            let g = go[0];
            let scale = T::from_f64(1.0 / rows as f64);
            let mut gz = vec![T::ZERO; zv.len()];
            for (r, &y) in labels.iter().enumerate() {
                let row = &zv[r * classes..(r + 1) * classes];
                let max = row.iter().copied().fold(row[0], |a, v| a.max(v));
                let mut denom = T::ZERO;
                for &v in row {
                    denom += (v - max).exp();
                }
                for i in 0..classes {
                    let p = (row[i] - max).exp() / denom;
                    let indicator = if i == y { T::ONE } else { T::ZERO };
                    gz[r * classes + i] = g * scale * (p - indicator);
                }
            }
            node.parents[0].accumulate_grad(&gz);
        }),
    )
}

/// Mean squared element difference between two equal-shape tensors.
pub fn mse<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>, NumericsError> {
    binary_shape_check("mse", a, b)?;
    let diff = a.sub(b)?;
    mean_all(&diff.mul(&diff)?)
}
