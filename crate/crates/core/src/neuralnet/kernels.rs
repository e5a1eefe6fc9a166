//! Forward/backward kernels over flat channel-major buffers
//! (`[batch][channel][time]`). Reductions accumulate in f64.

use super::Scalar;

pub(crate) const BN_EPS: f64 = 1e-5;

/// Left padding of a same-length convolution; the right side gets the rest.
pub(crate) fn same_padding_left(kernel: usize) -> usize {
    (kernel - 1) / 2
}

/// Valid output range `[t0, t1)` for tap offset `off` on a length-`len` row.
#[inline]
fn tap_range(off: isize, len: usize) -> (usize, usize) {
    let t0 = (-off).max(0) as usize;
    let t1 = (len as isize - off).clamp(0, len as isize) as usize;
    (t0, t1.max(t0))
}

pub(crate) struct ConvShape {
    pub batch: usize,
    pub c_in: usize,
    pub c_out: usize,
    pub kernel: usize,
    pub len: usize,
}

/// Stride-1 cross-correlation with zero "same" padding.
pub(crate) fn conv1d_forward<T: Scalar>(s: &ConvShape, x: &[T], w: &[T], bias: &[T], y: &mut [T]) {
    let left = same_padding_left(s.kernel) as isize;
    let (xs, ys) = (s.c_in * s.len, s.c_out * s.len);
    for b in 0..s.batch {
        let xb = &x[b * xs..(b + 1) * xs];
        let yb = &mut y[b * ys..(b + 1) * ys];
        for (o, yrow) in yb.chunks_exact_mut(s.len).enumerate() {
            yrow.fill(bias[o]);
            for (i, xrow) in xb.chunks_exact(s.len).enumerate() {
                let taps = &w[(o * s.c_in + i) * s.kernel..][..s.kernel];
                for (j, &wv) in taps.iter().enumerate() {
                    let off = j as isize - left;
                    let (t0, t1) = tap_range(off, s.len);
                    let src = &xrow[(t0 as isize + off) as usize..(t1 as isize + off) as usize];
                    for (yv, &xv) in yrow[t0..t1].iter_mut().zip(src) {
                        *yv += wv * xv;
                    }
                }
            }
        }
    }
}

/// Weight, bias and (optionally) input gradients of [`conv1d_forward`].
pub(crate) fn conv1d_backward<T: Scalar>(
    s: &ConvShape,
    x: &[T],
    w: &[T],
    dy: &[T],
    dw: &mut [T],
    db: &mut [T],
    dx: Option<&mut [T]>,
) {
    let left = same_padding_left(s.kernel) as isize;
    let (xs, ys) = (s.c_in * s.len, s.c_out * s.len);

    for o in 0..s.c_out {
        let mut acc = 0.0f64;
        for b in 0..s.batch {
            acc += dy[b * ys + o * s.len..][..s.len].iter().map(|v| v.to_f64()).sum::<f64>();
        }
        db[o] = T::from_f64(acc);
        for i in 0..s.c_in {
            for j in 0..s.kernel {
                let off = j as isize - left;
                let (t0, t1) = tap_range(off, s.len);
                let mut acc = 0.0f64;
                for b in 0..s.batch {
                    let g = &dy[b * ys + o * s.len..][t0..t1];
                    let xr = &x[b * xs + i * s.len..][(t0 as isize + off) as usize..(t1 as isize + off) as usize];
                    acc += dot(g, xr);
                }
                dw[(o * s.c_in + i) * s.kernel + j] = T::from_f64(acc);
            }
        }
    }

    if let Some(dx) = dx {
        dx.fill(T::ZERO);
        for b in 0..s.batch {
            let dxb = &mut dx[b * xs..(b + 1) * xs];
            let dyb = &dy[b * ys..(b + 1) * ys];
            for (o, grow) in dyb.chunks_exact(s.len).enumerate() {
                for (i, dxrow) in dxb.chunks_exact_mut(s.len).enumerate() {
                    let taps = &w[(o * s.c_in + i) * s.kernel..][..s.kernel];
                    for (j, &wv) in taps.iter().enumerate() {
                        let off = j as isize - left;
                        let (t0, t1) = tap_range(off, s.len);
                        let dst = &mut dxrow[(t0 as isize + off) as usize..(t1 as isize + off) as usize];
                        for (d, &g) in dst.iter_mut().zip(&grow[t0..t1]) {
                            *d += wv * g;
                        }
                    }
                }
            }
        }
    }
}

/// Dot product with four f64 partial sums.
#[inline]
fn dot<T: Scalar>(a: &[T], b: &[T]) -> f64 {
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for k in 0..chunks {
        for l in 0..4 {
            acc[l] += a[4 * k + l].to_f64() * b[4 * k + l].to_f64();
        }
    }
    let mut tail = 0.0;
    for k in 4 * chunks..a.len() {
        tail += a[k].to_f64() * b[k].to_f64();
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Per-channel batch statistics over `(batch, time)`.
pub(crate) fn channel_stats<T: Scalar>(x: &[T], batch: usize, channels: usize, len: usize) -> (Vec<f64>, Vec<f64>) {
    let n = (batch * len) as f64;
    let mut mean = vec![0.0; channels];
    let mut var = vec![0.0; channels];
    for c in 0..channels {
        let mut s = 0.0;
        for b in 0..batch {
            s += x[(b * channels + c) * len..][..len].iter().map(|v| v.to_f64()).sum::<f64>();
        }
        let m = s / n;
        let mut q = 0.0;
        for b in 0..batch {
            q += x[(b * channels + c) * len..][..len]
                .iter()
                .map(|v| {
                    let d = v.to_f64() - m;
                    d * d
                })
                .sum::<f64>();
        }
        mean[c] = m;
        var[c] = q / n;
    }
    (mean, var)
}

/// Normalizes with the given statistics, writes `xhat` and the affine
/// output `y = gamma * xhat + beta`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn batchnorm_apply<T: Scalar>(
    x: &[T],
    batch: usize,
    channels: usize,
    len: usize,
    mean: &[f64],
    inv_std: &[f64],
    gamma: &[T],
    beta: &[T],
    xhat: Option<&mut [T]>,
    y: &mut [T],
) {
    let mut xhat = xhat;
    for b in 0..batch {
        for c in 0..channels {
            let base = (b * channels + c) * len;
            let (m, is) = (T::from_f64(mean[c]), T::from_f64(inv_std[c]));
            let (g, be) = (gamma[c], beta[c]);
            let src = &x[base..base + len];
            let dst = &mut y[base..base + len];
            match xhat.as_deref_mut() {
                Some(h) => {
                    for ((yv, hv), &xv) in dst.iter_mut().zip(&mut h[base..base + len]).zip(src) {
                        let n = (xv - m) * is;
                        *hv = n;
                        *yv = g * n + be;
                    }
                }
                None => {
                    for (yv, &xv) in dst.iter_mut().zip(src) {
                        *yv = g * ((xv - m) * is) + be;
                    }
                }
            }
        }
    }
}

/// Batch-norm backward in train mode. Overwrites `dy` with the input gradient.
#[allow(clippy::too_many_arguments)]
pub(crate) fn batchnorm_backward<T: Scalar>(
    xhat: &[T],
    dy: &mut [T],
    batch: usize,
    channels: usize,
    len: usize,
    inv_std: &[f64],
    gamma: &[T],
    dgamma: &mut [T],
    dbeta: &mut [T],
) {
    let n = (batch * len) as f64;
    for c in 0..channels {
        let mut sum_dy = 0.0;
        let mut sum_dy_xhat = 0.0;
        for b in 0..batch {
            let base = (b * channels + c) * len;
            let g = &dy[base..base + len];
            sum_dy += g.iter().map(|v| v.to_f64()).sum::<f64>();
            sum_dy_xhat += dot(g, &xhat[base..base + len]);
        }
        dgamma[c] = T::from_f64(sum_dy_xhat);
        dbeta[c] = T::from_f64(sum_dy);
        let scale = T::from_f64(gamma[c].to_f64() * inv_std[c] / n);
        let (nn, mdy, mdyx) = (T::from_f64(n), T::from_f64(sum_dy), T::from_f64(sum_dy_xhat));
        for b in 0..batch {
            let base = (b * channels + c) * len;
            for (g, &h) in dy[base..base + len].iter_mut().zip(&xhat[base..base + len]) {
                *g = scale * (nn * *g - mdy - h * mdyx);
            }
        }
    }
}

/// ReLU followed by average pooling (window 2, stride 2, trailing odd sample
/// dropped). Writes the activation and the pooled output.
pub(crate) fn relu_pool_forward<T: Scalar>(y: &[T], rows: usize, len: usize, act: Option<&mut [T]>, pooled: &mut [T]) {
    let half = len / 2;
    let two = T::from_f64(0.5);
    let mut act = act;
    for r in 0..rows {
        let src = &y[r * len..(r + 1) * len];
        if let Some(a) = act.as_deref_mut() {
            for (av, &v) in a[r * len..(r + 1) * len].iter_mut().zip(src) {
                *av = if v > T::ZERO { v } else { T::ZERO };
            }
        }
        let dst = &mut pooled[r * half..(r + 1) * half];
        for (t, p) in dst.iter_mut().enumerate() {
            let (a, b) = (src[2 * t], src[2 * t + 1]);
            let a = if a > T::ZERO { a } else { T::ZERO };
            let b = if b > T::ZERO { b } else { T::ZERO };
            *p = (a + b) * two;
        }
    }
}

/// Gradient through average pooling and ReLU into the pre-activation.
pub(crate) fn relu_pool_backward<T: Scalar>(act: &[T], dpooled: &[T], rows: usize, len: usize, dy: &mut [T]) {
    let half = len / 2;
    let two = T::from_f64(0.5);
    for r in 0..rows {
        let d = &mut dy[r * len..(r + 1) * len];
        let a = &act[r * len..(r + 1) * len];
        let g = &dpooled[r * half..(r + 1) * half];
        for t in 0..half {
            let v = g[t] * two;
            d[2 * t] = if a[2 * t] > T::ZERO { v } else { T::ZERO };
            d[2 * t + 1] = if a[2 * t + 1] > T::ZERO { v } else { T::ZERO };
        }
        if len % 2 == 1 {
            d[len - 1] = T::ZERO;
        }
    }
}

/// Mean over time for each `(batch, channel)` row.
pub(crate) fn global_avg_pool<T: Scalar>(x: &[T], rows: usize, len: usize) -> Vec<T> {
    (0..rows)
        .map(|r| T::from_f64(x[r * len..(r + 1) * len].iter().map(|v| v.to_f64()).sum::<f64>() / len as f64))
        .collect()
}

pub(crate) fn global_avg_pool_backward<T: Scalar>(dout: &[T], rows: usize, len: usize) -> Vec<T> {
    let mut dx = vec![T::ZERO; rows * len];
    let inv = 1.0 / len as f64;
    for r in 0..rows {
        let v = T::from_f64(dout[r].to_f64() * inv);
        dx[r * len..(r + 1) * len].fill(v);
    }
    dx
}

/// `logits[b, k] = bias[k] + sum_f w[k, f] * h[b, f]`.
pub(crate) fn dense_forward<T: Scalar>(h: &[T], batch: usize, inputs: usize, w: &[T], bias: &[T], outputs: usize) -> Vec<T> {
    let mut out = Vec::with_capacity(batch * outputs);
    for b in 0..batch {
        let hb = &h[b * inputs..(b + 1) * inputs];
        for k in 0..outputs {
            out.push(T::from_f64(bias[k].to_f64() + dot(&w[k * inputs..(k + 1) * inputs], hb)));
        }
    }
    out
}

/// Returns `dh`, writes `dw` and `db`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn dense_backward<T: Scalar>(
    h: &[T],
    batch: usize,
    inputs: usize,
    w: &[T],
    outputs: usize,
    dlogits: &[T],
    dw: &mut [T],
    db: &mut [T],
) -> Vec<T> {
    for k in 0..outputs {
        db[k] = T::from_f64((0..batch).map(|b| dlogits[b * outputs + k].to_f64()).sum());
        for f in 0..inputs {
            dw[k * inputs + f] =
                T::from_f64((0..batch).map(|b| dlogits[b * outputs + k].to_f64() * h[b * inputs + f].to_f64()).sum());
        }
    }
    let mut dh = vec![T::ZERO; batch * inputs];
    for b in 0..batch {
        for f in 0..inputs {
            dh[b * inputs + f] = T::from_f64(
                (0..outputs)
                    .map(|k| w[k * inputs + f].to_f64() * dlogits[b * outputs + k].to_f64())
                    .sum(),
            );
        }
    }
    dh
}

/// Row-wise softmax with max subtraction, computed in f64.
pub(crate) fn softmax<T: Scalar>(logits: &[T], classes: usize) -> Vec<T> {
    let mut out = Vec::with_capacity(logits.len());
    for row in logits.chunks_exact(classes) {
        let max = row.iter().map(|v| v.to_f64()).fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = row.iter().map(|v| (v.to_f64() - max).exp()).collect();
        let z: f64 = exps.iter().sum();
        out.extend(exps.iter().map(|e| T::from_f64(e / z)));
    }
    out
}

/// Weighted cross-entropy `-(1/B) sum_b w[y_b] ln p_b[y_b]` from logits, and
/// its gradient with respect to the logits.
pub(crate) fn weighted_cross_entropy<T: Scalar>(
    logits: &[T],
    classes: usize,
    labels: &[usize],
    weights: &[f64],
) -> (f64, Vec<T>) {
    let batch = labels.len() as f64;
    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(logits.len());
    for (row, &y) in logits.chunks_exact(classes).zip(labels) {
        let max = row.iter().map(|v| v.to_f64()).fold(f64::NEG_INFINITY, f64::max);
        let shifted: Vec<f64> = row.iter().map(|v| v.to_f64() - max).collect();
        let log_z = shifted.iter().map(|v| v.exp()).sum::<f64>().ln();
        let w = weights[y];
        loss -= w * (shifted[y] - log_z);
        for (k, s) in shifted.iter().enumerate() {
            let p = (s - log_z).exp();
            let target = if k == y { 1.0 } else { 0.0 };
            grad.push(T::from_f64(w * (p - target) / batch));
        }
    }
    (loss / batch, grad)
}
