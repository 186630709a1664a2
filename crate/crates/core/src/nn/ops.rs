//! Forward and backward kernels for the layer primitives.
//!
//! Volumes are `[C, D, H, W]` row-major. Convolutions use 3×3×3 kernels with
//! one voxel of zero padding on every spatial side.

use super::tensor::Tensor;
use crate::error::{shape_err, Result};

pub const KERNEL: usize = 3;
const PAD: usize = 1;

fn dims4(t: &Tensor, what: &str) -> Result<[usize; 4]> {
    match *t.shape() {
        [c, d, h, w] => Ok([c, d, h, w]),
        ref s => Err(shape_err(format!("{what} must be [C,D,H,W], got {s:?}"))),
    }
}

pub fn conv3d_out_dim(dim: usize, stride: usize) -> usize {
    (dim + 2 * PAD - KERNEL) / stride + 1
}

/// Valid output range `[lo, hi)` for kernel tap `k` so that
/// `o * stride + k - PAD` stays inside `[0, dim)`.
fn tap_range(k: usize, dim: usize, out: usize, stride: usize) -> (usize, usize) {
    // o*stride + k >= PAD
    let lo = if k >= PAD { 0 } else { (PAD - k).div_ceil(stride) };
    // o*stride + k - PAD <= dim - 1
    let hi = if dim + PAD < k + 1 {
        0
    } else {
        ((dim + PAD - k - 1) / stride + 1).min(out)
    };
    (lo, hi.max(lo))
}

fn check_conv(input: &Tensor, kernels: &Tensor, bias: &Tensor, stride: usize) -> Result<([usize; 4], usize)> {
    let [c_in, d, h, w] = dims4(input, "conv3d input")?;
    let ks = kernels.shape();
    if ks.len() != 5 || ks[2] != KERNEL || ks[3] != KERNEL || ks[4] != KERNEL {
        return Err(shape_err(format!(
            "conv3d kernels must be [C_out,C_in,3,3,3], got {ks:?}"
        )));
    }
    if ks[1] != c_in {
        return Err(shape_err(format!(
            "conv3d kernels {ks:?} expect C_in={}, input {:?} has C_in={c_in}",
            ks[1],
            input.shape()
        )));
    }
    if bias.len() != ks[0] {
        return Err(shape_err(format!(
            "conv3d bias has {} entries for {} output channels",
            bias.len(),
            ks[0]
        )));
    }
    if d < KERNEL || h < KERNEL || w < KERNEL {
        return Err(shape_err(format!(
            "conv3d spatial dims must be >= 3, got {:?}",
            input.shape()
        )));
    }
    if stride == 0 {
        return Err(shape_err("conv3d stride must be >= 1"));
    }
    Ok(([c_in, d, h, w], ks[0]))
}

pub fn conv3d(input: &Tensor, kernels: &Tensor, bias: &Tensor, stride: usize) -> Result<Tensor> {
    let ([c_in, d, h, w], c_out) = check_conv(input, kernels, bias, stride)?;
    let (od, oh, ow) = (
        conv3d_out_dim(d, stride),
        conv3d_out_dim(h, stride),
        conv3d_out_dim(w, stride),
    );
    let x = input.data();
    let k = kernels.data();
    let mut out = vec![0.0; c_out * od * oh * ow];
    let in_vol = d * h * w;
    let out_vol = od * oh * ow;
    for co in 0..c_out {
        let o = &mut out[co * out_vol..(co + 1) * out_vol];
        o.fill(bias.data()[co]);
        for ci in 0..c_in {
            let xi = &x[ci * in_vol..(ci + 1) * in_vol];
            let kbase = (co * c_in + ci) * 27;
            for kd in 0..KERNEL {
                let (d0, d1) = tap_range(kd, d, od, stride);
                for kh in 0..KERNEL {
                    let (h0, h1) = tap_range(kh, h, oh, stride);
                    for kw in 0..KERNEL {
                        let (w0, w1) = tap_range(kw, w, ow, stride);
                        let kv = k[kbase + (kd * KERNEL + kh) * KERNEL + kw];
                        if kv == 0.0 || w0 >= w1 {
                            continue;
                        }
                        for od_i in d0..d1 {
                            let sd = od_i * stride + kd - PAD;
                            for oh_i in h0..h1 {
                                let sh = oh_i * stride + kh - PAD;
                                let orow = &mut o[(od_i * oh + oh_i) * ow..][w0..w1];
                                let xrow = &xi[(sd * h + sh) * w..(sd * h + sh + 1) * w];
                                if stride == 1 {
                                    let xs = &xrow[w0 + kw - PAD..w1 + kw - PAD];
                                    for (ov, xv) in orow.iter_mut().zip(xs) {
                                        *ov += kv * xv;
                                    }
                                } else {
                                    for (j, ov) in orow.iter_mut().enumerate() {
                                        *ov += kv * xrow[(w0 + j) * stride + kw - PAD];
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    Tensor::new(vec![c_out, od, oh, ow], out)
}

/// Gradients of `conv3d` w.r.t. input, kernels and bias.
pub fn conv3d_backward(
    input: &Tensor,
    kernels: &Tensor,
    stride: usize,
    grad_out: &Tensor,
) -> (Tensor, Tensor, Tensor) {
    let [c_in, d, h, w] = dims4(input, "conv3d input").expect("validated in forward");
    let c_out = kernels.shape()[0];
    let [_, od, oh, ow] = dims4(grad_out, "conv3d grad").expect("validated in forward");
    let x = input.data();
    let k = kernels.data();
    let g = grad_out.data();
    let in_vol = d * h * w;
    let out_vol = od * oh * ow;
    let mut gx = vec![0.0; x.len()];
    let mut gk = vec![0.0; k.len()];
    let mut gb = vec![0.0; c_out];
    for co in 0..c_out {
        let go = &g[co * out_vol..(co + 1) * out_vol];
        gb[co] = go.iter().sum();
        for ci in 0..c_in {
            let xi = &x[ci * in_vol..(ci + 1) * in_vol];
            let gxi = &mut gx[ci * in_vol..(ci + 1) * in_vol];
            let kbase = (co * c_in + ci) * 27;
            for kd in 0..KERNEL {
                let (d0, d1) = tap_range(kd, d, od, stride);
                for kh in 0..KERNEL {
                    let (h0, h1) = tap_range(kh, h, oh, stride);
                    for kw in 0..KERNEL {
                        let (w0, w1) = tap_range(kw, w, ow, stride);
                        if w0 >= w1 {
                            continue;
                        }
                        let kidx = kbase + (kd * KERNEL + kh) * KERNEL + kw;
                        let kv = k[kidx];
                        let mut acc = 0.0;
                        for od_i in d0..d1 {
                            let sd = od_i * stride + kd - PAD;
                            for oh_i in h0..h1 {
                                let sh = oh_i * stride + kh - PAD;
                                let grow = &go[(od_i * oh + oh_i) * ow..][w0..w1];
                                let row = (sd * h + sh) * w;
                                if stride == 1 {
                                    let lo = row + w0 + kw - PAD;
                                    let hi = row + w1 + kw - PAD;
                                    for (gv, xv) in grow.iter().zip(&xi[lo..hi]) {
                                        acc += gv * xv;
                                    }
                                    for (gxv, gv) in gxi[lo..hi].iter_mut().zip(grow) {
                                        *gxv += kv * gv;
                                    }
                                } else {
                                    for (j, gv) in grow.iter().enumerate() {
                                        let idx = row + (w0 + j) * stride + kw - PAD;
                                        acc += gv * xi[idx];
                                        gxi[idx] += kv * gv;
                                    }
                                }
                            }
                        }
                        gk[kidx] += acc;
                    }
                }
            }
        }
    }
    (
        Tensor::new(input.shape().to_vec(), gx).expect("same shape"),
        Tensor::new(kernels.shape().to_vec(), gk).expect("same shape"),
        Tensor::vector(gb),
    )
}

/// Max pooling over non-overlapping or strided windows. Returns the pooled
/// tensor and, per output cell, the linear input index that won. Ties go to
/// the lowest linear index.
pub fn max_pool3d(input: &Tensor, window: usize, stride: usize) -> Result<(Tensor, Vec<usize>)> {
    let [c, d, h, w] = dims4(input, "max_pool3d input")?;
    if window == 0 || stride == 0 {
        return Err(shape_err("max_pool3d window and stride must be >= 1"));
    }
    if d % window != 0 || h % window != 0 || w % window != 0 {
        return Err(shape_err(format!(
            "max_pool3d spatial dims {:?} not divisible by window {window}",
            &input.shape()[1..]
        )));
    }
    let (od, oh, ow) = (
        (d - window) / stride + 1,
        (h - window) / stride + 1,
        (w - window) / stride + 1,
    );
    let x = input.data();
    let mut out = Vec::with_capacity(c * od * oh * ow);
    let mut arg = Vec::with_capacity(out.capacity());
    for ci in 0..c {
        let base = ci * d * h * w;
        for a in 0..od {
            for b in 0..oh {
                for e in 0..ow {
                    let mut best = f64::NEG_INFINITY;
                    let mut best_idx = usize::MAX;
                    for i in 0..window {
                        for j in 0..window {
                            for l in 0..window {
                                let idx = base
                                    + ((a * stride + i) * h + b * stride + j) * w
                                    + e * stride
                                    + l;
                                // Scan order is increasing linear index, so a
                                // strict comparison keeps the first maximum.
                                if best_idx == usize::MAX || x[idx] > best {
                                    best = x[idx];
                                    best_idx = idx;
                                }
                            }
                        }
                    }
                    out.push(best);
                    arg.push(best_idx);
                }
            }
        }
    }
    Ok((Tensor::new(vec![c, od, oh, ow], out)?, arg))
}

pub fn max_pool3d_backward(input_shape: &[usize], argmax: &[usize], grad_out: &Tensor) -> Tensor {
    let mut g = Tensor::zeros(input_shape);
    let gd = g.data_mut();
    for (&idx, &gv) in argmax.iter().zip(grad_out.data()) {
        gd[idx] += gv;
    }
    g
}

pub fn upsample3d(input: &Tensor, factor: usize) -> Result<Tensor> {
    let [c, d, h, w] = dims4(input, "upsample3d input")?;
    if factor == 0 {
        return Err(shape_err("upsample factor must be >= 1"));
    }
    let (od, oh, ow) = (d * factor, h * factor, w * factor);
    let x = input.data();
    let mut out = vec![0.0; c * od * oh * ow];
    for ci in 0..c {
        for a in 0..od {
            for b in 0..oh {
                let src = ((ci * d + a / factor) * h + b / factor) * w;
                let dst = ((ci * od + a) * oh + b) * ow;
                for e in 0..ow {
                    out[dst + e] = x[src + e / factor];
                }
            }
        }
    }
    Tensor::new(vec![c, od, oh, ow], out)
}

pub fn upsample3d_backward(input_shape: &[usize], factor: usize, grad_out: &Tensor) -> Tensor {
    let [c, d, h, w] = [input_shape[0], input_shape[1], input_shape[2], input_shape[3]];
    let (od, oh, ow) = (d * factor, h * factor, w * factor);
    let g = grad_out.data();
    let mut gx = Tensor::zeros(input_shape);
    let gxd = gx.data_mut();
    for ci in 0..c {
        for a in 0..od {
            for b in 0..oh {
                let src = ((ci * d + a / factor) * h + b / factor) * w;
                let dst = ((ci * od + a) * oh + b) * ow;
                for e in 0..ow {
                    gxd[src + e / factor] += g[dst + e];
                }
            }
        }
    }
    gx
}

pub fn relu(input: &Tensor) -> Tensor {
    let data = input.data().iter().map(|&v| if v > 0.0 { v } else { 0.0 }).collect();
    Tensor::new(input.shape().to_vec(), data).expect("same shape")
}

/// Subgradient at zero is zero.
pub fn relu_backward(input: &Tensor, grad_out: &Tensor) -> Tensor {
    let data = input
        .data()
        .iter()
        .zip(grad_out.data())
        .map(|(&x, &g)| if x > 0.0 { g } else { 0.0 })
        .collect();
    Tensor::new(input.shape().to_vec(), data).expect("same shape")
}

pub fn sigmoid(input: &Tensor) -> Tensor {
    let data = input.data().iter().map(|&v| sigmoid_scalar(v)).collect();
    Tensor::new(input.shape().to_vec(), data).expect("same shape")
}

pub fn sigmoid_scalar(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

pub fn sigmoid_backward(output: &Tensor, grad_out: &Tensor) -> Tensor {
    let data = output
        .data()
        .iter()
        .zip(grad_out.data())
        .map(|(&y, &g)| g * y * (1.0 - y))
        .collect();
    Tensor::new(output.shape().to_vec(), data).expect("same shape")
}

/// `W·x + b` for a flat input.
pub fn fully_connected(input: &Tensor, weights: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let ws = weights.shape();
    if ws.len() != 2 {
        return Err(shape_err(format!("weights must be [n_out,n_in], got {ws:?}")));
    }
    let (n_out, n_in) = (ws[0], ws[1]);
    if input.len() != n_in {
        return Err(shape_err(format!(
            "fully_connected input has {} values, weights {ws:?} expect {n_in}",
            input.len()
        )));
    }
    if bias.len() != n_out {
        return Err(shape_err(format!(
            "fully_connected bias has {} values, weights {ws:?} expect {n_out}",
            bias.len()
        )));
    }
    let x = input.data();
    let out = weights
        .data()
        .chunks_exact(n_in)
        .zip(bias.data())
        .map(|(row, b)| row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + b)
        .collect();
    Ok(Tensor::vector(out))
}

pub fn fully_connected_backward(
    input: &Tensor,
    weights: &Tensor,
    grad_out: &Tensor,
) -> (Tensor, Tensor, Tensor) {
    let n_in = weights.shape()[1];
    let x = input.data();
    let g = grad_out.data();
    let mut gx = vec![0.0; n_in];
    let mut gw = vec![0.0; weights.len()];
    for ((row, grow), &go) in weights
        .data()
        .chunks_exact(n_in)
        .zip(gw.chunks_exact_mut(n_in))
        .zip(g)
    {
        for i in 0..n_in {
            gx[i] += row[i] * go;
            grow[i] = x[i] * go;
        }
    }
    (
        Tensor::new(input.shape().to_vec(), gx).expect("same shape"),
        Tensor::new(weights.shape().to_vec(), gw).expect("same shape"),
        Tensor::vector(g.to_vec()),
    )
}

/// Mean of squared elementwise differences.
pub fn mse(prediction: &Tensor, target: &Tensor) -> Result<f64> {
    if prediction.shape() != target.shape() {
        return Err(shape_err(format!(
            "mse shapes differ: prediction {:?} vs target {:?}",
            prediction.shape(),
            target.shape()
        )));
    }
    Ok(sum_squared_diff(prediction, target) / prediction.len() as f64)
}

pub(crate) fn sum_squared_diff(a: &Tensor, b: &Tensor) -> f64 {
    a.data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (x - y) * (x - y))
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ones(shape: &[usize]) -> Tensor {
        Tensor::filled(shape, 1.0)
    }

    #[test]
    fn conv_of_zeros_is_zero() {
        let x = Tensor::zeros(&[2, 4, 4, 4]);
        let k = Tensor::filled(&[3, 2, 3, 3, 3], 0.7);
        let y = conv3d(&x, &k, &Tensor::zeros(&[3]), 1).unwrap();
        assert_eq!(y.shape(), &[3, 4, 4, 4]);
        assert!(y.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn conv_ones_window_center_is_27() {
        let y = conv3d(&ones(&[1, 3, 3, 3]), &ones(&[1, 1, 3, 3, 3]), &Tensor::zeros(&[1]), 1).unwrap();
        assert_eq!(y.data()[13], 27.0);
        // Corner sees a 2x2x2 window.
        assert_eq!(y.data()[0], 8.0);
    }

    #[test]
    fn conv_identity_kernel_reproduces_impulse() {
        let mut x = Tensor::zeros(&[1, 5, 5, 5]);
        x.data_mut()[2 * 25 + 3 * 5 + 1] = 1.0;
        let mut k = Tensor::zeros(&[1, 1, 3, 3, 3]);
        k.data_mut()[13] = 1.0;
        let y = conv3d(&x, &k, &Tensor::zeros(&[1]), 1).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn conv_rejects_channel_mismatch_naming_shapes() {
        let err = conv3d(&ones(&[2, 4, 4, 4]), &ones(&[1, 3, 3, 3, 3]), &Tensor::zeros(&[1]), 1)
            .unwrap_err()
            .to_string();
        assert!(err.contains("[1, 3, 3, 3, 3]") && err.contains("[2, 4, 4, 4]"), "{err}");
    }

    #[test]
    fn strided_conv_matches_subsampled_unit_stride() {
        let x = Tensor::new(vec![1, 5, 5, 5], (0..125).map(|i| (i as f64 * 0.37).sin()).collect()).unwrap();
        let k = Tensor::new(vec![1, 1, 3, 3, 3], (0..27).map(|i| (i as f64 * 0.11).cos()).collect()).unwrap();
        let b = Tensor::vector(vec![0.25]);
        let full = conv3d(&x, &k, &b, 1).unwrap();
        let strided = conv3d(&x, &k, &b, 2).unwrap();
        assert_eq!(strided.shape(), &[1, 3, 3, 3]);
        for a in 0..3 {
            for c in 0..3 {
                for e in 0..3 {
                    let s = strided.data()[(a * 3 + c) * 3 + e];
                    let f = full.data()[(a * 2 * 5 + c * 2) * 5 + e * 2];
                    assert!((s - f).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn pool_constant_and_enumerated() {
        let (y, _) = max_pool3d(&Tensor::filled(&[2, 4, 4, 4], 3.5), 2, 2).unwrap();
        assert!(y.data().iter().all(|&v| v == 3.5));
        let x = Tensor::new(vec![1, 2, 2, 2], (0..8).map(f64::from).collect()).unwrap();
        let (y, arg) = max_pool3d(&x, 2, 2).unwrap();
        assert_eq!(y.data(), &[7.0]);
        assert_eq!(arg, vec![7]);
        assert!(max_pool3d(&Tensor::zeros(&[1, 3, 4, 4]), 2, 2).is_err());
    }

    #[test]
    fn pool_ties_go_to_lowest_index() {
        let (_, arg) = max_pool3d(&Tensor::filled(&[1, 2, 2, 2], 1.0), 2, 2).unwrap();
        assert_eq!(arg, vec![0]);
    }

    #[test]
    fn relu_values() {
        let y = relu(&Tensor::vector(vec![-1.0, 0.0, 2.0]));
        assert_eq!(y.data(), &[0.0, 0.0, 2.0]);
        let x = Tensor::vector(vec![0.5, 3.0]);
        assert_eq!(relu(&x), x);
    }

    #[test]
    fn fc_identity_and_hand_sum() {
        let x = Tensor::vector(vec![2.0, 3.0]);
        let eye = Tensor::new(vec![2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        assert_eq!(fully_connected(&x, &eye, &Tensor::zeros(&[2])).unwrap(), x);
        let w = Tensor::new(vec![1, 2], vec![1.0, 1.0]).unwrap();
        assert_eq!(fully_connected(&x, &w, &Tensor::zeros(&[1])).unwrap().data(), &[5.0]);
        assert!(fully_connected(&Tensor::vector(vec![1.0; 3]), &w, &Tensor::zeros(&[1])).is_err());
    }

    #[test]
    fn mse_values() {
        let a = Tensor::vector(vec![1.0, 1.0]);
        assert_eq!(mse(&a, &a).unwrap(), 0.0);
        assert_eq!(mse(&a, &Tensor::zeros(&[2])).unwrap(), 1.0);
        assert!(mse(&a, &Tensor::zeros(&[3])).is_err());
    }

    #[test]
    fn upsample_then_backward_sums_blocks() {
        let x = Tensor::new(vec![1, 1, 1, 2], vec![1.0, 2.0]).unwrap();
        let y = upsample3d(&x, 2).unwrap();
        assert_eq!(y.shape(), &[1, 2, 2, 4]);
        let g = upsample3d_backward(x.shape(), 2, &Tensor::filled(y.shape(), 1.0));
        assert_eq!(g.data(), &[8.0, 8.0]);
    }
}
