use anyhow::{Context, Result};
use sleepnet_core::evaluate::{evaluate_run, EnsemblePrediction};
use sleepnet_core::{StageLabel, N_STAGES};

use crate::commands::predict::parse_hypnogram;
use crate::config::{DataError, PipelineConfig};
use crate::store::{create_dir, load_split, Layout};

fn one_hot(label: StageLabel) -> [f64; N_STAGES] {
    let mut p = [0.0; N_STAGES];
    p[label.index()] = 1.0;
    p
}

pub fn run(cfg: &PipelineConfig) -> Result<()> {
    let layout = Layout::new(cfg);
    let split = cfg.evaluate.split;
    let records = load_split(&layout.store(split))?;
    if records.is_empty() {
        return Err(DataError(format!("no {} records to evaluate", split.name())).into());
    }
    let mut truth = Vec::new();
    let mut predictions = Vec::new();
    let mut problems = Vec::new();
    for record in &records {
        let path = layout.hypnogram(&record.id);
        let text = match std::fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) => {
                problems.push(format!("record {}: cannot read {}: {e}", record.id, path.display()));
                continue;
            }
        };
        let hyp = match parse_hypnogram(&text) {
            Ok(h) => h,
            Err(e) => {
                problems.push(format!("record {}: {}: {e}", record.id, path.display()));
                continue;
            }
        };
        if hyp.len() != record.n_epochs() {
            problems.push(format!(
                "record {}: {} predicted epochs vs {} annotated",
                record.id,
                hyp.len(),
                record.n_epochs()
            ));
            continue;
        }
        if let Some((pos, (i, _))) = hyp.iter().enumerate().find(|(pos, (i, _))| pos != i) {
            problems.push(format!("record {}: line {} carries epoch index {i}", record.id, pos + 1));
            continue;
        }
        truth.extend_from_slice(&record.annotations);
        predictions.extend(
            hyp.into_iter()
                .map(|(i, l)| EnsemblePrediction::from_members(&record.id, i, vec![l], vec![one_hot(l)])),
        );
    }
    for p in &problems {
        log::error!("{p}");
    }
    if !problems.is_empty() {
        return Err(DataError(format!(
            "{} of {} records could not be aligned: {}",
            problems.len(),
            records.len(),
            problems.join("; ")
        ))
        .into());
    }

    let report = evaluate_run(&truth, &predictions)?;
    let dir = layout.evaluation();
    create_dir(&dir)?;
    for (name, text) in [
        ("report.json", report.to_json()),
        ("confusion.csv", report.confusion.to_csv()),
        ("table.txt", report.to_table()),
    ] {
        let path = dir.join(name);
        std::fs::write(&path, text).with_context(|| format!("cannot write {}", path.display()))?;
    }
    print!("{}", report.to_table());
    Ok(())
}
