use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sleepnet_core::records::{cut_epochs, list_records, load_record, load_stats};
use sleepnet_core::{EpochTensor, NormalizationStats, PsgRecord};

use crate::config::{DataError, PipelineConfig, Split};

/// Epochs per hour of recording.
pub const EPOCHS_PER_HOUR: f64 = 120.0;

/// File locations under the output directory.
#[derive(Debug, Clone)]
pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn new(cfg: &PipelineConfig) -> Self {
        Self {
            root: cfg.output.dir.clone(),
        }
    }

    pub fn store(&self, split: Split) -> PathBuf {
        self.root.join("store").join(split.name())
    }

    pub fn stats(&self) -> PathBuf {
        self.root.join("norm_stats.txt")
    }

    pub fn model(&self) -> PathBuf {
        self.root.join("model.ckpt")
    }

    pub fn history(&self) -> PathBuf {
        self.root.join("history.csv")
    }

    pub fn hpo(&self) -> PathBuf {
        self.root.join("hpo")
    }

    pub fn trials(&self) -> PathBuf {
        self.hpo().join("trials.csv")
    }

    pub fn best_members(&self) -> PathBuf {
        self.hpo().join("best_configs.toml")
    }

    pub fn trial_checkpoint(&self, index: usize) -> PathBuf {
        self.hpo().join(format!("trial_{index}.ckpt"))
    }

    pub fn predictions(&self) -> PathBuf {
        self.root.join("predictions")
    }

    pub fn hypnogram(&self, record: &str) -> PathBuf {
        self.predictions().join(format!("{record}.hyp"))
    }

    pub fn evaluation(&self) -> PathBuf {
        self.root.join("evaluation")
    }

    pub fn report(&self) -> PathBuf {
        self.root.join("report")
    }
}

pub fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).with_context(|| format!("cannot create {}", path.display()))
}

/// Record directories of one split; the directory itself must exist.
pub fn split_dirs(root: &Path) -> Result<Vec<PathBuf>> {
    if !root.is_dir() {
        return Err(DataError(format!("record directory {} does not exist", root.display())).into());
    }
    Ok(list_records(root)?)
}

pub fn load_split(root: &Path) -> Result<Vec<PsgRecord>> {
    split_dirs(root)?
        .iter()
        .map(|d| load_record(d).with_context(|| format!("loading record {}", d.display())))
        .collect()
}

/// Stored records of `split`, which must hold at least one.
pub fn load_nonempty(layout: &Layout, split: Split) -> Result<Vec<PsgRecord>> {
    let dir = layout.store(split);
    let records = load_split(&dir)?;
    if records.is_empty() {
        return Err(DataError(format!(
            "no preprocessed {} records in {}; run `sleepnet preprocess` first",
            split.name(),
            dir.display()
        ))
        .into());
    }
    Ok(records)
}

pub fn require_stats(layout: &Layout) -> Result<NormalizationStats> {
    let path = layout.stats();
    if !path.is_file() {
        return Err(DataError(format!(
            "normalization statistics {} not found; run `sleepnet preprocess` first",
            path.display()
        ))
        .into());
    }
    Ok(load_stats(&path)?)
}

/// Normalized epochs of every record. With `cap`, each record keeps at most
/// that many epochs, drawn at random with a per-record seed.
pub fn epochs_of(records: &[PsgRecord], stats: &NormalizationStats, cap: Option<(usize, u64)>) -> Result<Vec<EpochTensor>> {
    let mut out = Vec::new();
    for (i, r) in records.iter().enumerate() {
        let epochs = cut_epochs(r, stats)?;
        match cap {
            Some((max, seed)) => out.extend(subsample(epochs, max, seed.wrapping_add(i as u64))),
            None => out.extend(epochs),
        }
    }
    Ok(out)
}

/// Seeded random subset of at most `max` epochs, kept in time order.
pub fn subsample(epochs: Vec<EpochTensor>, max: usize, seed: u64) -> Vec<EpochTensor> {
    if epochs.len() <= max {
        return epochs;
    }
    let mut idx: Vec<usize> = (0..epochs.len()).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut keep = vec![false; epochs.len()];
    for &i in &idx[..max] {
        keep[i] = true;
    }
    epochs.into_iter().zip(keep).filter(|(_, k)| *k).map(|(e, _)| e).collect()
}

/// Per-record epoch cap from the configuration.
pub fn train_cap(cfg: &PipelineConfig) -> Option<(usize, u64)> {
    cfg.data
        .max_train_hours
        .map(|h| (((h * EPOCHS_PER_HOUR).floor() as usize).max(1), cfg.data.cap_seed))
}
