//! Class weighting, shuffled mini-batch training with Adam, validation-loss
//! early stopping and argmax prediction.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluate::{cohen_kappa, confusion};
use crate::neuralnet::{save_checkpoint, AdamState, Batch, ConvNet};
use crate::records::{EpochTensor, StageLabel, EPOCH_SAMPLES, N_STAGES};

/// Per-stage loss weights, indexed W..REM.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassWeights(pub [f64; N_STAGES]);

impl ClassWeights {
    pub fn uniform() -> Self {
        Self([1.0; N_STAGES])
    }

    pub fn get(&self, stage: StageLabel) -> f64 {
        self.0[stage.index()]
    }
}

/// `w_c = N / (5 N_c)`.
pub fn compute_class_weights(labels: &[StageLabel]) -> Result<ClassWeights> {
    let mut counts = [0usize; N_STAGES];
    for l in labels {
        counts[l.index()] += 1;
    }
    if let Some(c) = counts.iter().position(|&n| n == 0) {
        return Err(Error::ClassMissing(StageLabel::ALL[c]));
    }
    let n = labels.len() as f64;
    Ok(ClassWeights(counts.map(|c| n / (N_STAGES as f64 * c as f64))))
}

/// Inputs in channel-major layout with optional labels.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochSet {
    pub channels: usize,
    pub len: usize,
    data: Vec<f32>,
    pub labels: Vec<Option<StageLabel>>,
}

impl EpochSet {
    pub fn new(channels: usize, len: usize, data: Vec<f32>, labels: Vec<Option<StageLabel>>) -> Result<Self> {
        if data.len() != channels * len * labels.len() {
            return Err(Error::BadInputShape(format!(
                "{} values do not form {} samples of {channels} x {len}",
                data.len(),
                labels.len()
            )));
        }
        Ok(Self {
            channels,
            len,
            data,
            labels,
        })
    }

    pub fn from_epochs(epochs: &[EpochTensor]) -> Self {
        let stride = EpochTensor::COLS * EPOCH_SAMPLES;
        let mut data = vec![0.0; stride * epochs.len()];
        for (e, chunk) in epochs.iter().zip(data.chunks_exact_mut(stride)) {
            e.write_channel_major(chunk);
        }
        Self {
            channels: EpochTensor::COLS,
            len: EPOCH_SAMPLES,
            data,
            labels: epochs.iter().map(|e| e.label).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn batch(&self, indices: &[usize]) -> Result<Batch<f32>> {
        let stride = self.channels * self.len;
        let mut data = Vec::with_capacity(stride * indices.len());
        for &i in indices {
            data.extend_from_slice(&self.data[i * stride..(i + 1) * stride]);
        }
        Batch::new(indices.len(), self.channels, self.len, data)
    }

    /// Label indices, failing if any sample is unlabeled.
    pub fn label_indices(&self) -> Result<Vec<usize>> {
        self.labels
            .iter()
            .enumerate()
            .map(|(i, l)| l.map(StageLabel::index).ok_or_else(|| Error::BadInputShape(format!("sample {i} has no label"))))
            .collect()
    }

    pub fn stage_labels(&self) -> Result<Vec<StageLabel>> {
        Ok(self.label_indices()?.into_iter().map(|i| StageLabel::ALL[i]).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainRunConfig {
    pub max_epochs: usize,
    pub patience: usize,
    pub shuffle_seed: u64,
    /// A validation loss must drop by more than this to count as improvement.
    pub min_delta: f64,
    /// Fill the history's wall-time column; off keeps outputs byte-reproducible.
    pub record_time: bool,
    /// Written whenever the validation loss improves.
    pub checkpoint_path: Option<PathBuf>,
}

impl Default for TrainRunConfig {
    fn default() -> Self {
        Self {
            max_epochs: 100,
            patience: 10,
            shuffle_seed: 0,
            min_delta: 1e-6,
            record_time: false,
            checkpoint_path: None,
        }
    }
}

impl TrainRunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.patience == 0 || self.max_epochs == 0 {
            return Err(Error::ConfigOutOfRange(
                "max_epochs and patience must both be >= 1".into(),
            ));
        }
        if !(self.min_delta >= 0.0) {
            return Err(Error::ConfigOutOfRange(format!("min_delta {} must be >= 0", self.min_delta)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopDecision {
    Improved,
    Continue,
    Stop,
}

/// Patience counter over validation losses.
#[derive(Debug, Clone, PartialEq)]
pub struct EarlyStopping {
    patience: usize,
    min_delta: f64,
    best: Option<(usize, f64)>,
    since_best: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize, min_delta: f64) -> Self {
        Self {
            patience,
            min_delta,
            best: None,
            since_best: 0,
        }
    }

    pub fn observe(&mut self, epoch: usize, loss: f64) -> StopDecision {
        let improved = match self.best {
            None => true,
            Some((_, best)) => loss < best - self.min_delta,
        };
        if improved {
            self.best = Some((epoch, loss));
            self.since_best = 0;
            StopDecision::Improved
        } else {
            self.since_best += 1;
            if self.since_best >= self.patience {
                StopDecision::Stop
            } else {
                StopDecision::Continue
            }
        }
    }

    /// Epoch and loss of the best observation so far.
    pub fn best(&self) -> Option<(usize, f64)> {
        self.best
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_kappa: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub stop_epoch: usize,
    pub stopped_early: bool,
}

pub const HISTORY_HEADER: &str = "epoch,train_loss,val_loss,val_kappa,seconds";

impl TrainHistory {
    pub fn to_csv(&self) -> String {
        let mut s = format!("{HISTORY_HEADER}\n");
        for r in &self.epochs {
            writeln!(s, "{},{},{},{},{}", r.epoch, r.train_loss, r.val_loss, r.val_kappa, r.seconds).unwrap();
        }
        s
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    /// Parses the CSV form; best and stop epochs are recomputed from the rows.
    pub fn from_csv(text: &str) -> Result<Self> {
        let bad = |detail: String| Error::format("training history", "<csv>", detail);
        let mut lines = text.lines();
        if lines.next() != Some(HISTORY_HEADER) {
            return Err(bad("missing header".into()));
        }
        let mut epochs = Vec::new();
        for (i, line) in lines.enumerate() {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 5 {
                return Err(bad(format!("row {}: expected 5 fields", i + 1)));
            }
            let num = |s: &str| s.parse::<f64>().map_err(|e| bad(format!("row {}: {e}", i + 1)));
            epochs.push(EpochRecord {
                epoch: f[0].parse().map_err(|e| bad(format!("row {}: {e}", i + 1)))?,
                train_loss: num(f[1])?,
                val_loss: num(f[2])?,
                val_kappa: num(f[3])?,
                seconds: num(f[4])?,
            });
        }
        let best_epoch = epochs
            .iter()
            .fold(None::<&EpochRecord>, |b, r| match b {
                Some(b) if b.val_loss <= r.val_loss => Some(b),
                _ => Some(r),
            })
            .map_or(0, |r| r.epoch);
        Ok(Self {
            stop_epoch: epochs.last().map_or(0, |r| r.epoch),
            best_epoch,
            stopped_early: false,
            epochs,
        })
    }
}

/// Index ranges of mini-batches over `n` samples; a trailing batch of one
/// sample joins the batch before it.
pub fn batch_ranges(n: usize, batch_size: usize) -> Vec<std::ops::Range<usize>> {
    let mut ranges: Vec<_> = (0..n).step_by(batch_size).map(|s| s..(s + batch_size).min(n)).collect();
    if ranges.len() > 1 && ranges.last().is_some_and(|r| r.len() == 1) {
        let last = ranges.pop().unwrap();
        ranges.last_mut().unwrap().end = last.end;
    }
    ranges
}

/// Index of the largest entry, lowest index on ties.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Infer-mode class probabilities for every sample.
pub fn predict_proba(net: &ConvNet<f32>, set: &EpochSet, batch_size: usize) -> Result<Vec<[f64; N_STAGES]>> {
    let mut out = Vec::with_capacity(set.len());
    let idx: Vec<usize> = (0..set.len()).collect();
    for chunk in idx.chunks(batch_size.max(1)) {
        let probs = net.infer(&set.batch(chunk)?)?;
        out.extend(probs.chunks_exact(N_STAGES).map(|r| std::array::from_fn(|k| r[k] as f64)));
    }
    Ok(out)
}

/// Argmax labels and probabilities.
pub fn predict(net: &ConvNet<f32>, set: &EpochSet, batch_size: usize) -> Result<(Vec<StageLabel>, Vec<[f64; N_STAGES]>)> {
    let probs = predict_proba(net, set, batch_size)?;
    let labels = probs.iter().map(|p| StageLabel::ALL[argmax(p)]).collect();
    Ok((labels, probs))
}

/// Weighted loss and kappa of `net` on a labeled set in inference mode.
pub fn validation_metrics(net: &ConvNet<f32>, set: &EpochSet, weights: &ClassWeights, batch_size: usize) -> Result<(f64, f64)> {
    let labels = set.label_indices()?;
    let probs = predict_proba(net, set, batch_size)?;
    let n = labels.len() as f64;
    let loss = labels
        .iter()
        .zip(&probs)
        .map(|(&y, p)| -weights.0[y] * p[y].max(f64::MIN_POSITIVE).ln())
        .sum::<f64>()
        / n;
    let truth: Vec<StageLabel> = labels.iter().map(|&y| StageLabel::ALL[y]).collect();
    let pred: Vec<StageLabel> = probs.iter().map(|p| StageLabel::ALL[argmax(p)]).collect();
    Ok((loss, cohen_kappa(&confusion(&truth, &pred)?)))
}

/// Trains `net` and returns the parameters of the epoch with the lowest
/// validation loss together with the per-epoch history.
pub fn train(
    mut net: ConvNet<f32>,
    train_set: &EpochSet,
    val_set: &EpochSet,
    cfg: &TrainRunConfig,
    weights: &ClassWeights,
) -> Result<(ConvNet<f32>, TrainHistory)> {
    cfg.validate()?;
    if train_set.is_empty() || val_set.is_empty() {
        return Err(Error::BadInputShape("training and validation sets must be nonempty".into()));
    }
    let labels = train_set.label_indices()?;
    val_set.label_indices()?;
    let lr = net.config().learning_rate;
    let batch_size = net.config().batch_size.max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.shuffle_seed);
    let mut adam = AdamState::new(&net);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut stopper = EarlyStopping::new(cfg.patience, cfg.min_delta);
    let mut history = TrainHistory::default();
    let mut best = net.clone();

    for epoch in 1..=cfg.max_epochs {
        let started = Instant::now();
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for (bi, range) in batch_ranges(order.len(), batch_size).into_iter().enumerate() {
            let idx = &order[range];
            let batch = train_set.batch(idx)?;
            let y: Vec<usize> = idx.iter().map(|&i| labels[i]).collect();
            let (loss, grads, cache) = net
                .loss_and_gradients(&batch, &y, &weights.0, &mut rng)
                .map_err(|e| e.with_batch_context(epoch, bi))?;
            net.update_running_stats(&cache);
            drop(cache);
            adam.step(&mut net, &grads, lr)?;
            loss_sum += loss * idx.len() as f64;
        }
        let train_loss = loss_sum / order.len() as f64;
        let (val_loss, val_kappa) = validation_metrics(&net, val_set, weights, batch_size)?;
        if !val_loss.is_finite() {
            return Err(Error::NumericalFailure {
                epoch: Some(epoch),
                batch: None,
            });
        }
        let seconds = if cfg.record_time { started.elapsed().as_secs_f64() } else { 0.0 };
        history.epochs.push(EpochRecord {
            epoch,
            train_loss,
            val_loss,
            val_kappa,
            seconds,
        });
        log::info!("epoch {epoch}: train loss {train_loss:.5}, val loss {val_loss:.5}, val kappa {val_kappa:.4}");
        history.stop_epoch = epoch;
        match stopper.observe(epoch, val_loss) {
            StopDecision::Improved => {
                best = net.clone();
                history.best_epoch = epoch;
                if let Some(path) = &cfg.checkpoint_path {
                    save_checkpoint(&best, path)?;
                }
            }
            StopDecision::Continue => {}
            StopDecision::Stop => {
                history.stopped_early = true;
                break;
            }
        }
    }
    Ok((best, history))
}
