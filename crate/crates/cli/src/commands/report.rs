use std::fmt::Write as _;

use anyhow::{Context, Result};
use sleepnet_core::evaluate::MetricsReport;
use sleepnet_core::hpo::{read_trials, TrialHistory};

use crate::config::{DataError, PipelineConfig};
use crate::store::{create_dir, Layout};

pub const SCATTER_HEADER: &str = "trial,n_blocks,kernel,filters,ln_lr,kappa";

/// One row per completed trial: each hyperparameter against its kappa.
pub fn scatter_csv(history: &TrialHistory) -> String {
    let mut s = format!("{SCATTER_HEADER}\n");
    for t in history.completed() {
        let c = &t.config;
        writeln!(
            s,
            "{},{},{},{},{:.6},{:.6}",
            t.index,
            c.n_blocks,
            c.kernel_size,
            c.initial_filters,
            c.learning_rate.ln(),
            t.objective.unwrap_or(f64::NAN)
        )
        .unwrap();
    }
    s
}

pub fn run(cfg: &PipelineConfig, scatter: bool) -> Result<()> {
    let layout = Layout::new(cfg);
    let report_json = layout.evaluation().join("report.json");
    if scatter {
        let trials = layout.trials();
        if !trials.is_file() {
            return Err(DataError(format!("trial log {} not found; run `sleepnet hpo` first", trials.display())).into());
        }
        let history = read_trials(&trials)?;
        create_dir(&layout.report())?;
        let path = layout.report().join("scatter.csv");
        std::fs::write(&path, scatter_csv(&history)).with_context(|| format!("cannot write {}", path.display()))?;
        println!("{} completed trials in {}", history.completed().count(), path.display());
    } else if !report_json.is_file() {
        return Err(DataError(format!("{} not found; run `sleepnet evaluate` first", report_json.display())).into());
    }
    if report_json.is_file() {
        let text = std::fs::read_to_string(&report_json).with_context(|| format!("cannot read {}", report_json.display()))?;
        let report = MetricsReport::from_json(&text)?;
        print!("{}", report.to_table());
        for (id, kappa) in &report.per_record_kappa {
            println!("record {id}: kappa {kappa:.4}");
        }
    }
    Ok(())
}
