use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sleepnet_core::evaluate::{cohen_kappa, confusion};
use sleepnet_core::hpo::{append_trial, best_k, read_trials, run_search, TrialHistory};
use sleepnet_core::training::{compute_class_weights, predict, train, ClassWeights};
use sleepnet_core::{build_network, EpochSet, ModelConfig, NormalizationStats, PsgRecord, TrainRunConfig};

use crate::config::{ConfigError, DataError, PipelineConfig, Split};
use crate::store::{create_dir, epochs_of, load_nonempty, require_stats, train_cap, Layout};

/// One ensemble member chosen by the search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Member {
    pub trial: usize,
    pub kappa: f64,
    /// Relative to the member file's directory.
    pub checkpoint: PathBuf,
    pub config: ModelConfig,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MemberFile {
    pub member: Vec<Member>,
}

impl MemberFile {
    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
        toml::from_str(&text).map_err(|e| DataError(format!("{}: {e}", path.display())).into())
    }

    /// Member checkpoints as paths relative to the working directory.
    pub fn checkpoints(&self, path: &Path) -> Vec<PathBuf> {
        let base = path.parent().unwrap_or(Path::new("."));
        self.member.iter().map(|m| base.join(&m.checkpoint)).collect()
    }
}

/// Training, early-stopping and scoring sets of the search.
pub struct Folds {
    pub train: EpochSet,
    pub val: EpochSet,
    pub test: EpochSet,
    pub ids: [Vec<String>; 3],
}

fn ids(records: &[PsgRecord]) -> Vec<String> {
    records.iter().map(|r| r.id.clone()).collect()
}

/// Partitions the train split by record into train/val/test folds, or
/// uses the stored val and test splits when carving is off.
pub fn folds(cfg: &PipelineConfig, layout: &Layout, stats: &NormalizationStats) -> Result<Folds> {
    let cap = train_cap(cfg);
    let (train, val, test) = if cfg.hpo.carve_folds {
        let mut records = load_nonempty(layout, Split::Train)?;
        let (nv, nt) = (cfg.hpo.fold_val_records, cfg.hpo.fold_test_records);
        if nv == 0 || nt == 0 || records.len() < nv + nt + 1 {
            return Err(ConfigError(format!(
                "carving {nv} validation and {nt} test records needs at least {} training records with both counts >= 1; found {}",
                nv + nt + 1,
                records.len()
            ))
            .into());
        }
        records.shuffle(&mut ChaCha8Rng::seed_from_u64(cfg.hpo.seed));
        let test: Vec<_> = records.drain(..nt).collect();
        let val: Vec<_> = records.drain(..nv).collect();
        (records, val, test)
    } else {
        (
            load_nonempty(layout, Split::Train)?,
            load_nonempty(layout, Split::Val)?,
            load_nonempty(layout, Split::Test)?,
        )
    };
    Ok(Folds {
        train: EpochSet::from_epochs(&epochs_of(&train, stats, cap)?),
        val: EpochSet::from_epochs(&epochs_of(&val, stats, None)?),
        test: EpochSet::from_epochs(&epochs_of(&test, stats, None)?),
        ids: [ids(&train), ids(&val), ids(&test)],
    })
}

/// Trains one suggested configuration and returns its kappa on the test fold.
fn evaluate_trial(
    cfg: &PipelineConfig,
    suggested: &ModelConfig,
    seed: u64,
    folds: &Folds,
    weights: &ClassWeights,
    checkpoint: PathBuf,
) -> sleepnet_core::Result<f64> {
    let model = ModelConfig {
        dropout_rate: cfg.model.dropout_rate,
        batch_size: cfg.model.batch_size,
        ..*suggested
    };
    let run = TrainRunConfig {
        shuffle_seed: seed,
        checkpoint_path: Some(checkpoint),
        ..cfg.train.clone()
    };
    let (best, _) = train(build_network(&model, seed)?, &folds.train, &folds.val, &run, weights)?;
    let (pred, _) = predict(&best, &folds.test, model.batch_size)?;
    Ok(cohen_kappa(&confusion(&folds.test.stage_labels()?, &pred)?))
}

pub fn run(cfg: &PipelineConfig, resume: bool) -> Result<()> {
    let layout = Layout::new(cfg);
    let stats = require_stats(&layout)?;
    let folds = folds(cfg, &layout, &stats)?;
    log::info!(
        "search folds: train {:?}, val {:?}, test {:?}",
        folds.ids[0],
        folds.ids[1],
        folds.ids[2]
    );
    let weights = compute_class_weights(&folds.train.stage_labels()?)?;

    create_dir(&layout.hpo())?;
    let log_path = layout.trials();
    let history = if resume && log_path.exists() {
        let h = read_trials(&log_path)?;
        log::info!("resuming after {} logged trials", h.trials.len());
        h
    } else {
        if log_path.exists() {
            std::fs::remove_file(&log_path).with_context(|| format!("cannot replace {}", log_path.display()))?;
        }
        TrialHistory::default()
    };

    let mut index = history.trials.len();
    let objective = |c: &ModelConfig, seed: u64| {
        let checkpoint = layout.trial_checkpoint(index);
        index += 1;
        evaluate_trial(cfg, c, seed, &folds, &weights, checkpoint)
    };
    let on_trial = |_: &TrialHistory, t: &sleepnet_core::hpo::Trial| {
        log::info!(
            "trial {}: blocks {}, kernel {}, filters {}, lr {:.3e} -> {}",
            t.index,
            t.config.n_blocks,
            t.config.kernel_size,
            t.config.initial_filters,
            t.config.learning_rate,
            t.objective.map_or("failed".to_string(), |k| format!("kappa {k:.4}"))
        );
        append_trial(&log_path, t)
    };
    let history = run_search(objective, &cfg.hpo.space, &cfg.hpo.search(), history, on_trial)?;

    let completed = history.completed().count();
    let k = cfg.hpo.top_k.min(completed.max(1));
    if completed < cfg.hpo.top_k {
        log::warn!("only {completed} completed trials; keeping {k} of the requested {}", cfg.hpo.top_k);
    }
    let members = MemberFile {
        member: best_k(&history, k)?
            .into_iter()
            .map(|t| Member {
                trial: t.index,
                kappa: t.objective.unwrap_or(f64::NAN),
                checkpoint: PathBuf::from(format!("trial_{}.ckpt", t.index)),
                config: t.config,
            })
            .collect(),
    };
    let path = layout.best_members();
    std::fs::write(&path, toml::to_string(&members).expect("member file serializes"))
        .with_context(|| format!("cannot write {}", path.display()))?;
    for m in &members.member {
        println!("trial {:>3}  kappa {:.4}  {:?}", m.trial, m.kappa, m.config);
    }
    println!("trial log {}, members {}", log_path.display(), path.display());
    Ok(())
}
