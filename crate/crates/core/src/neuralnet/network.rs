use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::kernels::{self, ConvShape, BN_EPS};
use super::{Batch, ModelConfig, Scalar};
use crate::error::{Error, Result};
use crate::records::{EpochTensor, EPOCH_SAMPLES, N_STAGES};

/// Weight of the previous running statistic in the batch-norm moving average.
pub const BN_MOMENTUM: f64 = 0.9;

const PARAMS_PER_BLOCK: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Batch statistics in batch norm, dropout active.
    Train,
    /// Running statistics in batch norm, dropout is the identity.
    Infer,
}

/// A named tensor, stored flat in row-major order of `shape`.
#[derive(Debug, Clone, PartialEq)]
pub struct Param<T> {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<T>,
}

impl<T: Scalar> Param<T> {
    fn new(name: String, shape: Vec<usize>, data: Vec<T>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Self { name, shape, data }
    }

    fn cast<U: Scalar>(&self) -> Param<U> {
        Param {
            name: self.name.clone(),
            shape: self.shape.clone(),
            data: self.data.iter().map(|v| U::from_f64(v.to_f64())).collect(),
        }
    }
}

/// One gradient tensor per trainable parameter, in [`ConvNet::params`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<T: Scalar = f32> {
    pub tensors: Vec<Vec<T>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn zeros_like(net: &ConvNet<T>) -> Self {
        Self {
            tensors: net.params.iter().map(|p| vec![T::ZERO; p.data.len()]).collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.tensors.iter().flatten().all(|v| v.is_finite())
    }

    pub fn max_abs(&self) -> f64 {
        self.tensors.iter().flatten().map(|v| v.to_f64().abs()).fold(0.0, f64::max)
    }
}

/// Block stack + classification head with its parameters and batch-norm
/// running statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvNet<T: Scalar = f32> {
    config: ModelConfig,
    seed: u64,
    input_channels: usize,
    input_len: usize,
    params: Vec<Param<T>>,
    buffers: Vec<Param<T>>,
    pub(crate) steps: u64,
}

/// Builds the network for 3750 × 5 epochs.
pub fn build_network(config: &ModelConfig, seed: u64) -> Result<ConvNet<f32>> {
    ConvNet::new(config, seed, EpochTensor::COLS, EPOCH_SAMPLES)
}

struct BlockCache<T> {
    input: Vec<T>,
    c_in: usize,
    len: usize,
    xhat: Vec<T>,
    act: Vec<T>,
    inv_std: Vec<f64>,
    batch_mean: Vec<f64>,
    batch_var: Vec<f64>,
}

/// Intermediate values of one forward pass, consumed by the backward pass.
pub struct ForwardCache<T: Scalar> {
    mode: Mode,
    n: usize,
    blocks: Vec<BlockCache<T>>,
    last_len: usize,
    dropout_scale: Vec<T>,
    dense_in: Vec<T>,
    pub logits: Vec<T>,
    pub probs: Vec<T>,
}

impl<T: Scalar> ForwardCache<T> {
    pub fn batch_size(&self) -> usize {
        self.n
    }

    /// Sign pattern of every ReLU input; differs between two passes when a
    /// perturbation crosses a kink.
    pub fn relu_signature(&self) -> Vec<bool> {
        self.blocks.iter().flat_map(|b| b.act.iter().map(|v| *v > T::ZERO)).collect()
    }
}

impl<T: Scalar> ConvNet<T> {
    /// Builds a network for inputs of `input_channels` × `input_len` with
    /// seeded fan-in-scaled uniform weights.
    pub fn new(config: &ModelConfig, seed: u64, input_channels: usize, input_len: usize) -> Result<Self> {
        config.validate()?;
        if input_channels == 0 || input_len >> config.n_blocks == 0 {
            return Err(Error::ConfigOutOfRange(format!(
                "{} blocks cannot process inputs of {input_channels} x {input_len}",
                config.n_blocks
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut uniform = |n: usize, bound: f64| -> Vec<T> {
            (0..n).map(|_| T::from_f64(rng.random_range(-bound..bound))).collect()
        };

        let k = config.kernel_size;
        let mut params = Vec::new();
        let mut buffers = Vec::new();
        let mut c_in = input_channels;
        for (i, f) in config.block_filters().into_iter().enumerate() {
            let fan_in = (c_in * k) as f64;
            let b = i + 1;
            params.push(Param::new(format!("block{b}.conv.weight"), vec![f, c_in, k], uniform(f * c_in * k, (6.0 / fan_in).sqrt())));
            params.push(Param::new(format!("block{b}.conv.bias"), vec![f], vec![T::ZERO; f]));
            params.push(Param::new(format!("block{b}.bn.gamma"), vec![f], vec![T::ONE; f]));
            params.push(Param::new(format!("block{b}.bn.beta"), vec![f], vec![T::ZERO; f]));
            buffers.push(Param::new(format!("block{b}.bn.running_mean"), vec![f], vec![T::ZERO; f]));
            buffers.push(Param::new(format!("block{b}.bn.running_var"), vec![f], vec![T::ONE; f]));
            c_in = f;
        }
        params.push(Param::new("dense.weight".into(), vec![N_STAGES, c_in], uniform(N_STAGES * c_in, (3.0 / c_in as f64).sqrt())));
        params.push(Param::new("dense.bias".into(), vec![N_STAGES], vec![T::ZERO; N_STAGES]));

        Ok(Self {
            config: *config,
            seed,
            input_channels,
            input_len,
            params,
            buffers,
            steps: 0,
        })
    }

    pub(crate) fn from_parts(
        config: ModelConfig,
        seed: u64,
        input_channels: usize,
        input_len: usize,
        params: Vec<Param<T>>,
        buffers: Vec<Param<T>>,
        steps: u64,
    ) -> Self {
        Self {
            config,
            seed,
            input_channels,
            input_len,
            params,
            buffers,
            steps,
        }
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn input_channels(&self) -> usize {
        self.input_channels
    }

    pub fn input_len(&self) -> usize {
        self.input_len
    }

    /// Optimizer steps applied so far.
    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn params(&self) -> &[Param<T>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Param<T>] {
        &mut self.params
    }

    /// Batch-norm running means and variances, two per block.
    pub fn buffers(&self) -> &[Param<T>] {
        &self.buffers
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().map(|p| p.data.len()).sum()
    }

    pub fn n_blocks(&self) -> usize {
        self.config.n_blocks
    }

    /// Same network with a different dropout rate.
    pub fn with_dropout(&self, rate: f64) -> Self {
        let mut net = self.clone();
        net.config.dropout_rate = rate;
        net
    }

    pub fn cast<U: Scalar>(&self) -> ConvNet<U> {
        ConvNet {
            config: self.config,
            seed: self.seed,
            input_channels: self.input_channels,
            input_len: self.input_len,
            params: self.params.iter().map(Param::cast).collect(),
            buffers: self.buffers.iter().map(Param::cast).collect(),
            steps: self.steps,
        }
    }

    fn check_batch(&self, batch: &Batch<T>) -> Result<()> {
        if batch.channels != self.input_channels || batch.len != self.input_len || batch.n == 0 {
            return Err(Error::BadInputShape(format!(
                "network expects {} x {} inputs, got batch of {} x {} x {}",
                self.input_len, self.input_channels, batch.n, batch.len, batch.channels
            )));
        }
        Ok(())
    }

    /// Class probabilities, `batch.n × 5`, in inference mode.
    pub fn infer(&self, batch: &Batch<T>) -> Result<Vec<T>> {
        Ok(self.run(batch, Mode::Infer, &mut NoRng, false)?.probs)
    }

    /// Class probabilities, `batch.n × 5`. `rng` drives dropout in train mode.
    pub fn forward<R: Rng + ?Sized>(&self, batch: &Batch<T>, mode: Mode, rng: &mut R) -> Result<Vec<T>> {
        Ok(self.run(batch, mode, rng, false)?.probs)
    }

    pub fn forward_cached<R: Rng + ?Sized>(&self, batch: &Batch<T>, mode: Mode, rng: &mut R) -> Result<ForwardCache<T>> {
        self.run(batch, mode, rng, true)
    }

    fn run<R: Rng + ?Sized>(&self, batch: &Batch<T>, mode: Mode, rng: &mut R, keep: bool) -> Result<ForwardCache<T>> {
        self.check_batch(batch)?;
        let n = batch.n;
        let k = self.config.kernel_size;
        let mut x = batch.data.clone();
        let mut c_in = self.input_channels;
        let mut len = self.input_len;
        let mut blocks = Vec::with_capacity(if keep { self.config.n_blocks } else { 0 });

        for i in 0..self.config.n_blocks {
            let p = &self.params[i * PARAMS_PER_BLOCK..(i + 1) * PARAMS_PER_BLOCK];
            let f = p[1].data.len();
            let shape = ConvShape { batch: n, c_in, c_out: f, kernel: k, len };
            let mut z = vec![T::ZERO; n * f * len];
            kernels::conv1d_forward(&shape, &x, &p[0].data, &p[1].data, &mut z);

            let (mean, var) = match mode {
                Mode::Train => kernels::channel_stats(&z, n, f, len),
                Mode::Infer => (
                    self.buffers[2 * i].data.iter().map(|v| v.to_f64()).collect(),
                    self.buffers[2 * i + 1].data.iter().map(|v| v.to_f64()).collect(),
                ),
            };
            let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + BN_EPS).sqrt()).collect();
            let mut xhat = if keep { vec![T::ZERO; z.len()] } else { Vec::new() };
            // `z` is reused as the batch-norm output buffer.
            let mut y = vec![T::ZERO; z.len()];
            kernels::batchnorm_apply(
                &z,
                n,
                f,
                len,
                &mean,
                &inv_std,
                &p[2].data,
                &p[3].data,
                keep.then_some(xhat.as_mut_slice()),
                &mut y,
            );
            drop(z);
            let half = len / 2;
            let mut pooled = vec![T::ZERO; n * f * half];
            let mut act = if keep { vec![T::ZERO; y.len()] } else { Vec::new() };
            kernels::relu_pool_forward(&y, n * f, len, keep.then_some(act.as_mut_slice()), &mut pooled);

            if keep {
                blocks.push(BlockCache {
                    input: std::mem::take(&mut x),
                    c_in,
                    len,
                    xhat,
                    act,
                    inv_std,
                    batch_mean: mean,
                    batch_var: var,
                });
            }
            x = pooled;
            c_in = f;
            len = half;
        }

        let features = kernels::global_avg_pool(&x, n * c_in, len);
        let p = self.config.dropout_rate;
        let (dense_in, dropout_scale) = if mode == Mode::Train && p > 0.0 {
            let keep_scale = T::from_f64(1.0 / (1.0 - p));
            let scale: Vec<T> = (0..features.len())
                .map(|_| if rng.random::<f64>() < p { T::ZERO } else { keep_scale })
                .collect();
            (features.iter().zip(&scale).map(|(&a, &s)| a * s).collect(), scale)
        } else {
            (features, Vec::new())
        };
        let nb = self.config.n_blocks;
        let logits = kernels::dense_forward(
            &dense_in,
            n,
            c_in,
            &self.params[nb * PARAMS_PER_BLOCK].data,
            &self.params[nb * PARAMS_PER_BLOCK + 1].data,
            N_STAGES,
        );
        if !logits.iter().all(|v| v.is_finite()) {
            return Err(Error::NumericalFailure { epoch: None, batch: None });
        }
        let probs = kernels::softmax(&logits, N_STAGES);
        Ok(ForwardCache {
            mode,
            n,
            blocks,
            last_len: len,
            dropout_scale,
            dense_in,
            logits,
            probs,
        })
    }

    /// Weighted cross-entropy of a forward pass.
    pub fn loss<R: Rng + ?Sized>(
        &self,
        batch: &Batch<T>,
        labels: &[usize],
        weights: &[f64],
        mode: Mode,
        rng: &mut R,
    ) -> Result<f64> {
        check_targets(batch.n, labels, weights)?;
        let cache = self.run(batch, mode, rng, false)?;
        let (loss, _) = kernels::weighted_cross_entropy(&cache.logits, N_STAGES, labels, weights);
        if !loss.is_finite() {
            return Err(Error::NumericalFailure { epoch: None, batch: None });
        }
        Ok(loss)
    }

    /// Loss and gradients for every trainable parameter from a cached pass.
    pub fn backward(&self, cache: &ForwardCache<T>, labels: &[usize], weights: &[f64]) -> Result<(f64, Gradients<T>)> {
        check_targets(cache.n, labels, weights)?;
        if cache.blocks.len() != self.config.n_blocks {
            return Err(Error::BadInputShape("forward cache was not retained".into()));
        }
        let n = cache.n;
        let nb = self.config.n_blocks;
        let k = self.config.kernel_size;
        let (loss, dlogits) = kernels::weighted_cross_entropy(&cache.logits, N_STAGES, labels, weights);
        if !loss.is_finite() {
            return Err(Error::NumericalFailure { epoch: None, batch: None });
        }

        let mut grads = Gradients::zeros_like(self);
        let features = cache.dense_in.len() / n;
        let (dw, rest) = grads.tensors[nb * PARAMS_PER_BLOCK..].split_at_mut(1);
        let mut dh = kernels::dense_backward(
            &cache.dense_in,
            n,
            features,
            &self.params[nb * PARAMS_PER_BLOCK].data,
            N_STAGES,
            &dlogits,
            &mut dw[0],
            &mut rest[0],
        );
        if !cache.dropout_scale.is_empty() {
            for (d, &s) in dh.iter_mut().zip(&cache.dropout_scale) {
                *d *= s;
            }
        }
        let mut dpooled = kernels::global_avg_pool_backward(&dh, n * features, cache.last_len);

        for i in (0..nb).rev() {
            let bc = &cache.blocks[i];
            let p = &self.params[i * PARAMS_PER_BLOCK..(i + 1) * PARAMS_PER_BLOCK];
            let f = p[1].data.len();
            let mut dy = vec![T::ZERO; n * f * bc.len];
            kernels::relu_pool_backward(&bc.act, &dpooled, n * f, bc.len, &mut dy);

            let g = &mut grads.tensors[i * PARAMS_PER_BLOCK..(i + 1) * PARAMS_PER_BLOCK];
            let (g_conv, g_bn) = g.split_at_mut(2);
            let (g_gamma, g_beta) = g_bn.split_at_mut(1);
            match cache.mode {
                Mode::Train => kernels::batchnorm_backward(
                    &bc.xhat,
                    &mut dy,
                    n,
                    f,
                    bc.len,
                    &bc.inv_std,
                    &p[2].data,
                    &mut g_gamma[0],
                    &mut g_beta[0],
                ),
                Mode::Infer => fixed_batchnorm_backward(&bc.xhat, &mut dy, n, f, bc.len, &bc.inv_std, &p[2].data, &mut g_gamma[0], &mut g_beta[0]),
            }

            let shape = ConvShape { batch: n, c_in: bc.c_in, c_out: f, kernel: k, len: bc.len };
            let (g_w, g_b) = g_conv.split_at_mut(1);
            if i > 0 {
                let mut dx = vec![T::ZERO; bc.input.len()];
                kernels::conv1d_backward(&shape, &bc.input, &p[0].data, &dy, &mut g_w[0], &mut g_b[0], Some(&mut dx));
                dpooled = dx;
            } else {
                kernels::conv1d_backward(&shape, &bc.input, &p[0].data, &dy, &mut g_w[0], &mut g_b[0], None);
            }
        }

        if !grads.is_finite() {
            return Err(Error::NumericalFailure { epoch: None, batch: None });
        }
        Ok((loss, grads))
    }

    /// Train-mode forward + backward in one call.
    pub fn loss_and_gradients<R: Rng + ?Sized>(
        &self,
        batch: &Batch<T>,
        labels: &[usize],
        weights: &[f64],
        rng: &mut R,
    ) -> Result<(f64, Gradients<T>, ForwardCache<T>)> {
        let cache = self.forward_cached(batch, Mode::Train, rng)?;
        let (loss, grads) = self.backward(&cache, labels, weights)?;
        Ok((loss, grads, cache))
    }

    /// Folds the batch statistics of a train-mode pass into the running
    /// averages: `r <- 0.9 r + 0.1 batch`.
    pub fn update_running_stats(&mut self, cache: &ForwardCache<T>) {
        if cache.mode != Mode::Train {
            return;
        }
        for (i, bc) in cache.blocks.iter().enumerate() {
            for (stat, src) in [(2 * i, &bc.batch_mean), (2 * i + 1, &bc.batch_var)] {
                for (r, &b) in self.buffers[stat].data.iter_mut().zip(src) {
                    *r = T::from_f64(BN_MOMENTUM * r.to_f64() + (1.0 - BN_MOMENTUM) * b);
                }
            }
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn fixed_batchnorm_backward<T: Scalar>(
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
    for c in 0..channels {
        let (mut sg, mut sb) = (0.0, 0.0);
        let scale = T::from_f64(gamma[c].to_f64() * inv_std[c]);
        for b in 0..batch {
            let base = (b * channels + c) * len;
            for (g, &h) in dy[base..base + len].iter_mut().zip(&xhat[base..base + len]) {
                sg += g.to_f64() * h.to_f64();
                sb += g.to_f64();
                *g *= scale;
            }
        }
        dgamma[c] = T::from_f64(sg);
        dbeta[c] = T::from_f64(sb);
    }
}

fn check_targets(n: usize, labels: &[usize], weights: &[f64]) -> Result<()> {
    if labels.len() != n {
        return Err(Error::BadInputShape(format!("{} labels for a batch of {n}", labels.len())));
    }
    if let Some(l) = labels.iter().find(|&&l| l >= N_STAGES) {
        return Err(Error::BadInputShape(format!("label {l} outside 0..{N_STAGES}")));
    }
    if weights.len() != N_STAGES || !weights.iter().all(|w| *w > 0.0 && w.is_finite()) {
        return Err(Error::ConfigOutOfRange(format!("class weights must be {N_STAGES} positive values")));
    }
    Ok(())
}

/// Stand-in generator for passes that never draw.
struct NoRng;

impl rand::RngCore for NoRng {
    fn next_u32(&mut self) -> u32 {
        unreachable!("inference does not sample")
    }
    fn next_u64(&mut self) -> u64 {
        unreachable!("inference does not sample")
    }
    fn fill_bytes(&mut self, _: &mut [u8]) {
        unreachable!("inference does not sample")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(blocks: usize, seed: u64) -> ConvNet<f64> {
        ConvNet::new(&ModelConfig::new(blocks, 3, 8, 1e-3), seed, 5, 64).unwrap()
    }

    fn random_batch(n: usize, len: usize, seed: u64) -> Batch<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Batch::new(n, 5, len, (0..n * 5 * len).map(|_| rng.random_range(-2.0..2.0)).collect()).unwrap()
    }

    #[test]
    fn shapes_follow_config() {
        let net = build_network(&ModelConfig::new(7, 6, 16, 5.99e-2), 0).unwrap();
        let filters: Vec<usize> = net.params().chunks(4).take(7).map(|p| p[0].shape[0]).collect();
        assert_eq!(filters, vec![16, 32, 64, 128, 256, 512, 1024]);
        assert_eq!(net.params().last().unwrap().shape, vec![5]);
        assert_eq!(net.params()[net.params().len() - 2].shape, vec![5, 1024]);
        assert_eq!(net.buffers().len(), 14);
    }

    #[test]
    fn same_seed_same_weights() {
        assert_eq!(tiny(2, 3), tiny(2, 3));
        assert_ne!(tiny(2, 3), tiny(2, 4));
    }

    #[test]
    fn outputs_are_distributions() {
        let net = tiny(2, 1);
        let batch = random_batch(3, 64, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for mode in [Mode::Train, Mode::Infer] {
            let p = net.forward(&batch, mode, &mut rng).unwrap();
            assert_eq!(p.len(), 15);
            for row in p.chunks(5) {
                assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-6);
                assert!(row.iter().all(|v| *v >= 0.0));
            }
        }
    }

    #[test]
    fn zero_dense_layer_gives_uniform_output() {
        let mut net = tiny(1, 1);
        let nparams = net.params().len();
        for p in &mut net.params_mut()[nparams - 2..] {
            p.data.fill(0.0);
        }
        let p = net.infer(&random_batch(2, 64, 0)).unwrap();
        assert!(p.iter().all(|v| (v - 0.2).abs() < 1e-12));
    }

    #[test]
    fn wrong_shape_is_rejected() {
        let net = tiny(1, 0);
        let bad = random_batch(1, 32, 0);
        assert!(matches!(net.infer(&bad), Err(Error::BadInputShape(_))));
    }

    #[test]
    fn inference_is_repeatable() {
        let net = tiny(2, 5);
        let b = random_batch(2, 64, 1);
        assert_eq!(net.infer(&b).unwrap(), net.infer(&b).unwrap());
    }

    #[test]
    fn running_stats_move_toward_batch_stats() {
        let mut net = tiny(1, 5);
        let b = random_batch(4, 64, 9);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let cache = net.forward_cached(&b, Mode::Train, &mut rng).unwrap();
        net.update_running_stats(&cache);
        let bc = &cache.blocks[0];
        for c in 0..8 {
            assert!((net.buffers()[0].data[c] - 0.1 * bc.batch_mean[c]).abs() < 1e-12);
            assert!((net.buffers()[1].data[c] - (0.9 + 0.1 * bc.batch_var[c])).abs() < 1e-12);
        }
    }

    #[test]
    fn bad_labels_are_rejected() {
        let net = tiny(1, 0);
        let b = random_batch(2, 64, 0);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let cache = net.forward_cached(&b, Mode::Train, &mut rng).unwrap();
        assert!(net.backward(&cache, &[0], &[1.0; 5]).is_err());
        assert!(net.backward(&cache, &[0, 5], &[1.0; 5]).is_err());
        assert!(net.backward(&cache, &[0, 1], &[1.0, 1.0, 0.0, 1.0, 1.0]).is_err());
    }

    #[test]
    fn doubling_weights_doubles_loss_and_gradients() {
        let net = tiny(2, 7);
        let b = random_batch(3, 64, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let cache = net.forward_cached(&b, Mode::Train, &mut rng).unwrap();
        let w = [0.4, 2.0, 0.7, 1.3, 1.0];
        let (l1, g1) = net.backward(&cache, &[0, 2, 4], &w).unwrap();
        let (l2, g2) = net.backward(&cache, &[0, 2, 4], &w.map(|v| 2.0 * v)).unwrap();
        assert!((l2 - 2.0 * l1).abs() < 1e-12 * l1.abs().max(1.0));
        for (a, b) in g1.tensors.iter().flatten().zip(g2.tensors.iter().flatten()) {
            assert!((b - 2.0 * a).abs() <= 1e-9 * a.abs().max(1e-12));
        }
    }

    #[test]
    fn f32_and_f64_agree() {
        let net = tiny(2, 11);
        let b = random_batch(2, 64, 4);
        let p64 = net.infer(&b).unwrap();
        let p32 = net.cast::<f32>().infer(&b.cast()).unwrap();
        for (a, b) in p64.iter().zip(&p32) {
            assert!((a - *b as f64).abs() < 1e-5);
        }
    }
}
