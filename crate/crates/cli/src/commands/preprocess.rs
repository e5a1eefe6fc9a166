use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use anyhow::{Context, Result};
use sleepnet_core::preprocess::{preprocess_record, PreprocessConfig};
use sleepnet_core::records::{compute_norm_stats, load_record, save_record, save_stats};

use crate::config::{DataError, PipelineConfig, Split};
use crate::store::{create_dir, load_split, split_dirs, Layout};

struct Job {
    split: Split,
    source: PathBuf,
    target: PathBuf,
}

fn process(job: &Job, cfg: &PreprocessConfig) -> Result<()> {
    let raw = load_record(&job.source)?;
    let (clean, summary) = preprocess_record(&raw, cfg)?;
    log::info!(
        "{} record {}: {} epochs, {} beats, {:.1}% cardiac-safe",
        job.split.name(),
        clean.id,
        clean.n_epochs(),
        summary.beats,
        100.0 * summary.safe_fraction
    );
    save_record(&clean, &job.target)?;
    Ok(())
}

/// Runs `jobs` on all available cores and returns the failures by job index.
fn run_parallel(jobs: &[Job], cfg: &PreprocessConfig) -> BTreeMap<usize, anyhow::Error> {
    let next = AtomicUsize::new(0);
    let failures = Mutex::new(BTreeMap::new());
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get()).min(jobs.len()).max(1);
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(job) = jobs.get(i) else { break };
                if let Err(e) = process(job, cfg) {
                    failures.lock().unwrap().insert(i, e);
                }
            });
        }
    });
    failures.into_inner().unwrap()
}

pub fn run(cfg: &PipelineConfig) -> Result<()> {
    let layout = Layout::new(cfg);
    let mut jobs = Vec::new();
    let mut owner: BTreeMap<String, Split> = BTreeMap::new();
    for split in Split::ALL {
        let raw = cfg.data.raw_dir.join(split.name());
        let target_root = layout.store(split);
        for source in split_dirs(&raw)? {
            let name = source.file_name().unwrap().to_string_lossy().into_owned();
            if let Some(other) = owner.insert(name.clone(), split) {
                return Err(DataError(format!(
                    "record {name} appears in both the {} and {} splits",
                    other.name(),
                    split.name()
                ))
                .into());
            }
            jobs.push(Job {
                split,
                target: target_root.join(&name),
                source,
            });
        }
    }
    for split in Split::ALL {
        let dir = layout.store(split);
        if dir.exists() {
            std::fs::remove_dir_all(&dir).with_context(|| format!("cannot clear {}", dir.display()))?;
        }
        create_dir(&dir)?;
    }

    let failures = run_parallel(&jobs, &cfg.preprocess);
    for (i, e) in &failures {
        log::error!("{}: {e:#}", jobs[*i].source.display());
    }

    let train = load_split(&layout.store(Split::Train))?;
    if train.is_empty() {
        return Err(DataError("no training record could be preprocessed".into()).into());
    }
    let stats = compute_norm_stats(&train)?;
    save_stats(&stats, layout.stats())?;
    log::info!(
        "{} of {} records preprocessed; statistics from {} training records in {}",
        jobs.len() - failures.len(),
        jobs.len(),
        train.len(),
        layout.stats().display()
    );
    if !failures.is_empty() {
        return Err(DataError(format!("{} of {} records failed preprocessing", failures.len(), jobs.len())).into());
    }
    Ok(())
}
