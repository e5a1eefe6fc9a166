use super::{ChannelKind, EpochTensor, PsgRecord, EPOCH_SAMPLES, TARGET_RATE_HZ};
use crate::error::{Error, Result};

/// Per-channel mean and population standard deviation of the model inputs,
/// in [`ChannelKind::MODEL_INPUTS`] order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalizationStats {
    means: [f64; 5],
    stds: [f64; 5],
}

impl NormalizationStats {
    pub fn new(means: [f64; 5], stds: [f64; 5]) -> Result<Self> {
        for (col, (&m, &s)) in means.iter().zip(&stds).enumerate() {
            if !m.is_finite() || !(s > 0.0) || !s.is_finite() {
                return Err(Error::DegenerateChannel(ChannelKind::MODEL_INPUTS[col]));
            }
        }
        Ok(Self { means, stds })
    }

    /// Zero mean, unit deviation: normalization becomes the identity.
    pub fn identity() -> Self {
        Self {
            means: [0.0; 5],
            stds: [1.0; 5],
        }
    }

    pub fn mean(&self, kind: ChannelKind) -> Option<f64> {
        kind.column().map(|c| self.means[c])
    }

    pub fn std(&self, kind: ChannelKind) -> Option<f64> {
        kind.column().map(|c| self.stds[c])
    }

    /// `(mean, std)` pairs in column order.
    pub fn iter(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.means.iter().copied().zip(self.stds.iter().copied())
    }

    /// Pooled statistics of already-cut epochs.
    pub fn from_epochs(epochs: &[EpochTensor]) -> Result<Self> {
        let mut acc: [Pooled; 5] = Default::default();
        for e in epochs {
            for (col, a) in acc.iter_mut().enumerate() {
                a.extend(e.column(col).map(f64::from));
            }
        }
        Self::finish(acc)
    }

    fn finish(acc: [Pooled; 5]) -> Result<Self> {
        let mut means = [0.0; 5];
        let mut stds = [0.0; 5];
        for (col, a) in acc.into_iter().enumerate() {
            let (m, s) = a
                .mean_std()
                .ok_or(Error::DegenerateChannel(ChannelKind::MODEL_INPUTS[col]))?;
            means[col] = m;
            stds[col] = s;
        }
        Self::new(means, stds)
    }
}

/// Neumaier-compensated running sum.
#[derive(Debug, Default, Clone, Copy)]
struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.comp += (self.sum - t) + v;
        } else {
            self.comp += (v - t) + self.sum;
        }
        self.sum = t;
    }

    fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Two-pass pooled statistics. Values are buffered per channel so the
/// second pass sees the exact same sequence; accumulation order is fixed.
#[derive(Debug, Default)]
struct Pooled {
    values: Vec<f64>,
}

impl Pooled {
    fn extend(&mut self, it: impl Iterator<Item = f64>) {
        self.values.extend(it);
    }

    fn mean_std(&self) -> Option<(f64, f64)> {
        if self.values.is_empty() {
            return None;
        }
        let n = self.values.len() as f64;
        let mut s = CompensatedSum::default();
        self.values.iter().for_each(|&v| s.add(v));
        let mean = s.value() / n;
        let mut q = CompensatedSum::default();
        self.values.iter().for_each(|&v| q.add((v - mean) * (v - mean)));
        let std = (q.value() / n).sqrt();
        (std > 0.0 && std.is_finite()).then_some((mean, std))
    }
}

/// Pools every sample of each model-input channel across `records`.
pub fn compute_norm_stats(records: &[PsgRecord]) -> Result<NormalizationStats> {
    if records.is_empty() {
        return Err(Error::ChannelAbsent("empty training set".into()));
    }
    let mut acc: [Pooled; 5] = Default::default();
    for rec in records {
        for (col, kind) in ChannelKind::MODEL_INPUTS.iter().enumerate() {
            acc[col].extend(rec.channel(*kind)?.samples.iter().copied());
        }
    }
    NormalizationStats::finish(acc)
}

/// Applies `(x - mean_c) / std_c` to every column.
pub fn normalize(epoch: &EpochTensor, stats: &NormalizationStats) -> EpochTensor {
    let values = epoch
        .values()
        .chunks_exact(EpochTensor::COLS)
        .flat_map(|row| {
            row.iter()
                .zip(stats.iter())
                .map(|(&v, (m, s))| ((v as f64 - m) / s) as f32)
        })
        .collect();
    EpochTensor {
        values,
        label: epoch.label,
        record_id: epoch.record_id.clone(),
        epoch_index: epoch.epoch_index,
    }
}

/// Cuts a 125 Hz record into normalized, non-overlapping 30 s epochs, one
/// per annotation, in temporal order.
pub fn cut_epochs(record: &PsgRecord, stats: &NormalizationStats) -> Result<Vec<EpochTensor>> {
    let mut columns = Vec::with_capacity(5);
    for kind in ChannelKind::MODEL_INPUTS {
        let ch = record.channel(kind)?;
        if ch.rate != TARGET_RATE_HZ {
            return Err(Error::IncompatibleRates(format!(
                "{} in record {} is at {} Hz; resample to {} Hz before epoching",
                kind, record.id, ch.rate, TARGET_RATE_HZ
            )));
        }
        if ch.samples.len() != record.n_epochs() * EPOCH_SAMPLES {
            return Err(Error::LengthMismatch(format!(
                "{} in record {} has {} samples for {} epochs",
                kind,
                record.id,
                ch.samples.len(),
                record.n_epochs()
            )));
        }
        columns.push(&ch.samples);
    }
    let params: Vec<(f64, f64)> = stats.iter().collect();

    record
        .annotations
        .iter()
        .enumerate()
        .map(|(i, &label)| {
            let start = i * EPOCH_SAMPLES;
            let mut values = Vec::with_capacity(EPOCH_SAMPLES * EpochTensor::COLS);
            for t in start..start + EPOCH_SAMPLES {
                for (col, samples) in columns.iter().enumerate() {
                    let (m, s) = params[col];
                    values.push(((samples[t] - m) / s) as f32);
                }
            }
            EpochTensor::new(values, Some(label), record.id.clone(), i)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeMap;

    use super::*;
    use crate::records::{Channel, StageLabel};

    fn record_with(values: impl Fn(ChannelKind, usize) -> f64, epochs: usize, id: &str) -> PsgRecord {
        let mut channels = BTreeMap::new();
        for kind in ChannelKind::MODEL_INPUTS {
            let samples = (0..epochs * EPOCH_SAMPLES).map(|i| values(kind, i)).collect();
            channels.insert(kind, Channel::new(TARGET_RATE_HZ, "uV", samples));
        }
        let labels = (0..epochs).map(|i| StageLabel::ALL[(i * 3) % 5]).collect();
        PsgRecord::new(id, channels, labels).unwrap()
    }

    #[test]
    fn population_std_of_one_two_three() {
        let pooled = Pooled {
            values: vec![1.0, 2.0, 3.0],
        };
        let (m, s) = pooled.mean_std().unwrap();
        assert_eq!(m, 2.0);
        assert!((s - (2.0f64 / 3.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn duplicated_records_give_same_stats() {
        let rec = record_with(|k, i| (i % 11) as f64 * (k as usize + 1) as f64, 2, "a");
        let one = compute_norm_stats(std::slice::from_ref(&rec)).unwrap();
        let two = compute_norm_stats(&[rec.clone(), rec]).unwrap();
        for (a, b) in one.iter().zip(two.iter()) {
            assert!((a.0 - b.0).abs() < 1e-12 && (a.1 - b.1).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_channel_is_degenerate() {
        let rec = record_with(
            |k, i| if k == ChannelKind::EogR { 0.0 } else { i as f64 },
            1,
            "z",
        );
        assert!(matches!(
            compute_norm_stats(&[rec]),
            Err(Error::DegenerateChannel(ChannelKind::EogR))
        ));
    }

    #[test]
    fn normalized_corpus_has_zero_mean_unit_std() {
        let recs: Vec<_> = (0..3)
            .map(|r| {
                record_with(
                    |k, i| {
                        let x = (i as f64 * 0.37 + r as f64).sin() * 40.0 + 15.0 * k as usize as f64;
                        x + ((i * 7919 + r) % 13) as f64
                    },
                    2,
                    &format!("r{r}"),
                )
            })
            .collect();
        let stats = compute_norm_stats(&recs).unwrap();
        let epochs: Vec<_> = recs
            .iter()
            .flat_map(|r| cut_epochs(r, &stats).unwrap())
            .collect();
        let after = NormalizationStats::from_epochs(&epochs).unwrap();
        for (m, s) in after.iter() {
            assert!(m.abs() < 1e-6, "mean {m}");
            assert!((s - 1.0).abs() < 1e-6, "std {s}");
        }
        // Fixed point: normalizing again with the recomputed stats is a no-op.
        let again = normalize(&epochs[0], &after);
        for (a, b) in again.values().iter().zip(epochs[0].values()) {
            assert!((a - b).abs() < 1e-5);
        }
    }

    #[test]
    fn epoch_equal_to_means_normalizes_to_zero() {
        let stats = NormalizationStats::new([1.0, -2.0, 3.5, 0.25, 10.0], [2.0; 5]).unwrap();
        let row = [1.0f32, -2.0, 3.5, 0.25, 10.0];
        let values = row.iter().copied().cycle().take(EPOCH_SAMPLES * 5).collect();
        let e = EpochTensor::new(values, None, "m", 0).unwrap();
        assert!(normalize(&e, &stats).values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn epochs_partition_the_record() {
        let rec = record_with(|k, i| i as f64 + 0.5 * k as usize as f64, 4, "p");
        let epochs = cut_epochs(&rec, &NormalizationStats::identity()).unwrap();
        assert_eq!(epochs.len(), 4);
        for (col, kind) in ChannelKind::MODEL_INPUTS.iter().enumerate() {
            let joined: Vec<f64> = epochs
                .iter()
                .flat_map(|e| e.column(col).map(f64::from).collect::<Vec<_>>())
                .collect();
            let original: Vec<f64> = rec.channels[kind].samples.iter().map(|&v| v as f32 as f64).collect();
            assert_eq!(joined, original);
        }
        for (i, e) in epochs.iter().enumerate() {
            assert_eq!(e.label, Some(rec.annotations[i]));
            assert_eq!(e.epoch_index, i);
        }
    }

    #[test]
    fn cut_requires_network_rate() {
        let mut rec = record_with(|_, i| i as f64, 1, "x");
        let emg = rec.channels.get_mut(&ChannelKind::Emg).unwrap();
        emg.rate = 250.0;
        emg.samples = vec![1.0; 2 * EPOCH_SAMPLES];
        assert!(matches!(
            cut_epochs(&rec, &NormalizationStats::identity()),
            Err(Error::IncompatibleRates(_))
        ));
    }
}
