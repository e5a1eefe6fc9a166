//! Central finite-difference checks of the analytic gradients, run in f64.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::kernels::{self, ConvShape, BN_EPS};
use super::{Batch, ConvNet, Gradients, Mode, Scalar};
use crate::error::Result;
use crate::records::N_STAGES;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckOptions {
    pub epsilon: f64,
    /// Entries sampled from each checked tensor.
    pub per_tensor: usize,
    pub seed: u64,
    /// Indices into [`ConvNet::params`]; `None` checks every tensor.
    pub tensors: Option<Vec<usize>>,
    /// Smallest denominator of the relative error.
    pub floor: f64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            epsilon: 1e-3,
            per_tensor: 8,
            seed: 0,
            tensors: None,
            floor: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub checked: usize,
    /// Entries whose perturbation flipped a ReLU input sign.
    pub skipped: usize,
    /// Tensor name and flat index of the largest error.
    pub worst: Option<(String, usize)>,
}

fn rel_error(a: f64, n: f64, floor: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(floor)
}

/// Largest relative error over a random parameter subsample.
pub fn gradient_check<T: Scalar>(
    net: &ConvNet<T>,
    batch: &Batch<T>,
    labels: &[usize],
    weights: &[f64],
    epsilon: f64,
) -> Result<f64> {
    let opts = GradCheckOptions {
        epsilon,
        ..Default::default()
    };
    Ok(gradient_check_with(net, batch, labels, weights, &opts, |_| {})?.max_rel_error)
}

/// Like [`gradient_check`]; `corrupt` may tamper with the analytic
/// gradients before comparison.
pub fn gradient_check_with<T: Scalar>(
    net: &ConvNet<T>,
    batch: &Batch<T>,
    labels: &[usize],
    weights: &[f64],
    opts: &GradCheckOptions,
    corrupt: impl FnOnce(&mut Gradients<f64>),
) -> Result<GradCheckReport> {
    let mut net = net.cast::<f64>().with_dropout(0.0);
    let batch = batch.cast::<f64>();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let base = net.forward_cached(&batch, Mode::Train, &mut rng)?;
    let signature = base.relu_signature();
    let (_, mut grads) = net.backward(&base, labels, weights)?;
    drop(base);
    corrupt(&mut grads);

    let selected: Vec<usize> = opts.tensors.clone().unwrap_or_else(|| (0..net.params().len()).collect());
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        checked: 0,
        skipped: 0,
        worst: None,
    };
    for ti in selected {
        let len = net.params()[ti].data.len();
        let picks = sample(&mut rng, len, opts.per_tensor.min(len)).into_vec();
        for idx in picks {
            let orig = net.params()[ti].data[idx];
            let mut eval = |net: &mut ConvNet<f64>, v: f64| -> Result<(f64, bool)> {
                net.params_mut()[ti].data[idx] = v;
                let c = net.forward_cached(&batch, Mode::Train, &mut rng)?;
                let (loss, _) = kernels::weighted_cross_entropy(&c.logits, N_STAGES, labels, weights);
                Ok((loss, c.relu_signature() == signature))
            };
            let (lp, same_p) = eval(&mut net, orig + opts.epsilon)?;
            let (lm, same_m) = eval(&mut net, orig - opts.epsilon)?;
            net.params_mut()[ti].data[idx] = orig;
            if !(same_p && same_m) {
                report.skipped += 1;
                continue;
            }
            let numeric = (lp - lm) / (2.0 * opts.epsilon);
            let err = rel_error(grads.tensors[ti][idx], numeric, opts.floor);
            report.checked += 1;
            if err > report.max_rel_error || report.worst.is_none() {
                report.max_rel_error = report.max_rel_error.max(err);
                report.worst = Some((net.params()[ti].name.clone(), idx));
            }
        }
    }
    Ok(report)
}

/// Max relative error of `analytic` against central differences of `f`
/// over every entry of `x`.
fn fd_check(f: impl Fn(&[f64]) -> f64, x: &[f64], analytic: &[f64], eps: f64) -> f64 {
    let mut x = x.to_vec();
    let mut worst: f64 = 0.0;
    for i in 0..x.len() {
        let orig = x[i];
        x[i] = orig + eps;
        let lp = f(&x);
        x[i] = orig - eps;
        let lm = f(&x);
        x[i] = orig;
        worst = worst.max(rel_error(analytic[i], (lp - lm) / (2.0 * eps), 1e-8));
    }
    worst
}

fn uniform(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(lo..hi)).collect()
}

fn weighted_sum(r: &[f64], y: &[f64]) -> f64 {
    r.iter().zip(y).map(|(a, b)| a * b).sum()
}

/// Per-layer checks with ε = 1e-3 against every input and parameter entry.
/// Each layer is probed with the linear readout `L = sum r * output` for a
/// random `r`, except the loss which is checked directly.
pub fn layer_checks(seed: u64) -> Vec<(&'static str, f64)> {
    let eps = 1e-3;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();

    // conv1d, even kernel to exercise asymmetric padding
    {
        let s = ConvShape { batch: 2, c_in: 3, c_out: 4, kernel: 4, len: 9 };
        let x = uniform(&mut rng, s.batch * s.c_in * s.len, -1.0, 1.0);
        let w = uniform(&mut rng, s.c_out * s.c_in * s.kernel, -1.0, 1.0);
        let b = uniform(&mut rng, s.c_out, -1.0, 1.0);
        let r = uniform(&mut rng, s.batch * s.c_out * s.len, -1.0, 1.0);
        let run = |x: &[f64], w: &[f64], b: &[f64]| {
            let mut y = vec![0.0; r.len()];
            kernels::conv1d_forward(&s, x, w, b, &mut y);
            weighted_sum(&r, &y)
        };
        let (mut dw, mut db, mut dx) = (vec![0.0; w.len()], vec![0.0; b.len()], vec![0.0; x.len()]);
        kernels::conv1d_backward(&s, &x, &w, &r, &mut dw, &mut db, Some(&mut dx));
        let e = fd_check(|v| run(v, &w, &b), &x, &dx, eps)
            .max(fd_check(|v| run(&x, v, &b), &w, &dw, eps))
            .max(fd_check(|v| run(&x, &w, v), &b, &db, eps));
        out.push(("conv1d", e));
    }

    // batch norm, train-mode statistics
    {
        let (n, c, len) = (2, 3, 7);
        let x = uniform(&mut rng, n * c * len, -2.0, 2.0);
        let gamma = uniform(&mut rng, c, 0.5, 1.5);
        let beta = uniform(&mut rng, c, -0.5, 0.5);
        let r = uniform(&mut rng, x.len(), -1.0, 1.0);
        let run = |x: &[f64], g: &[f64], b: &[f64], xhat: Option<&mut [f64]>| {
            let (mean, var) = kernels::channel_stats(x, n, c, len);
            let inv: Vec<f64> = var.iter().map(|v| 1.0 / (v + BN_EPS).sqrt()).collect();
            let mut y = vec![0.0; x.len()];
            kernels::batchnorm_apply(x, n, c, len, &mean, &inv, g, b, xhat, &mut y);
            (weighted_sum(&r, &y), inv)
        };
        let mut xhat = vec![0.0; x.len()];
        let (_, inv) = run(&x, &gamma, &beta, Some(&mut xhat));
        let (mut dg, mut db, mut dx) = (vec![0.0; c], vec![0.0; c], r.clone());
        kernels::batchnorm_backward(&xhat, &mut dx, n, c, len, &inv, &gamma, &mut dg, &mut db);
        let e = fd_check(|v| run(v, &gamma, &beta, None).0, &x, &dx, eps)
            .max(fd_check(|v| run(&x, v, &beta, None).0, &gamma, &dg, eps))
            .max(fd_check(|v| run(&x, &gamma, v, None).0, &beta, &db, eps));
        out.push(("batchnorm", e));
    }

    // ReLU + average pool on an odd length, inputs kept away from the kink
    {
        let (rows, len) = (4, 9);
        let x: Vec<f64> = uniform(&mut rng, rows * len, 0.1, 1.0)
            .into_iter()
            .map(|v| if rng.random::<bool>() { v } else { -v })
            .collect();
        let r = uniform(&mut rng, rows * (len / 2), -1.0, 1.0);
        let run = |x: &[f64], act: Option<&mut [f64]>| {
            let mut p = vec![0.0; r.len()];
            kernels::relu_pool_forward(x, rows, len, act, &mut p);
            weighted_sum(&r, &p)
        };
        let mut act = vec![0.0; x.len()];
        run(&x, Some(&mut act));
        let mut dx = vec![0.0; x.len()];
        kernels::relu_pool_backward(&act, &r, rows, len, &mut dx);
        out.push(("relu_avgpool", fd_check(|v| run(v, None), &x, &dx, eps)));
    }

    // global average pool
    {
        let (rows, len) = (6, 5);
        let x = uniform(&mut rng, rows * len, -1.0, 1.0);
        let r = uniform(&mut rng, rows, -1.0, 1.0);
        let dx = kernels::global_avg_pool_backward(&r, rows, len);
        let run = |x: &[f64]| weighted_sum(&r, &kernels::global_avg_pool(x, rows, len));
        out.push(("global_avgpool", fd_check(run, &x, &dx, eps)));
    }

    // dense
    {
        let (n, fin, fout) = (3, 6, N_STAGES);
        let h = uniform(&mut rng, n * fin, -1.0, 1.0);
        let w = uniform(&mut rng, fout * fin, -1.0, 1.0);
        let b = uniform(&mut rng, fout, -1.0, 1.0);
        let r = uniform(&mut rng, n * fout, -1.0, 1.0);
        let run = |h: &[f64], w: &[f64], b: &[f64]| weighted_sum(&r, &kernels::dense_forward(h, n, fin, w, b, fout));
        let (mut dw, mut db) = (vec![0.0; w.len()], vec![0.0; b.len()]);
        let dh = kernels::dense_backward(&h, n, fin, &w, fout, &r, &mut dw, &mut db);
        let e = fd_check(|v| run(v, &w, &b), &h, &dh, eps)
            .max(fd_check(|v| run(&h, v, &b), &w, &dw, eps))
            .max(fd_check(|v| run(&h, &w, v), &b, &db, eps));
        out.push(("dense", e));
    }

    // softmax + weighted cross-entropy
    {
        let n = 4;
        let logits = uniform(&mut rng, n * N_STAGES, -3.0, 3.0);
        let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..N_STAGES)).collect();
        let weights = uniform(&mut rng, N_STAGES, 0.2, 3.0);
        let (_, grad) = kernels::weighted_cross_entropy(&logits, N_STAGES, &labels, &weights);
        let run = |z: &[f64]| kernels::weighted_cross_entropy(z, N_STAGES, &labels, &weights).0;
        out.push(("softmax_xent", fd_check(run, &logits, &grad, eps)));
    }

    out
}
