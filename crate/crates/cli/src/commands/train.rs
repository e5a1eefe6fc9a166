use anyhow::{Context, Result};
use sleepnet_core::training::{compute_class_weights, predict, train};
use sleepnet_core::{build_network, EpochSet, TrainRunConfig};

use crate::config::{PipelineConfig, Split};
use crate::store::{create_dir, epochs_of, load_nonempty, require_stats, train_cap, Layout};

pub fn run(cfg: &PipelineConfig) -> Result<()> {
    let layout = Layout::new(cfg);
    let stats = require_stats(&layout)?;
    let train_records = load_nonempty(&layout, Split::Train)?;
    let val_records = load_nonempty(&layout, Split::Val)?;
    let train_set = EpochSet::from_epochs(&epochs_of(&train_records, &stats, train_cap(cfg))?);
    let val_set = EpochSet::from_epochs(&epochs_of(&val_records, &stats, None)?);
    let weights = compute_class_weights(&train_set.stage_labels()?)?;
    log::info!(
        "training on {} epochs, validating on {}; class weights {:?}",
        train_set.len(),
        val_set.len(),
        weights.0
    );

    create_dir(&layout.root)?;
    let run = TrainRunConfig {
        checkpoint_path: Some(layout.model()),
        ..cfg.train.clone()
    };
    let net = build_network(&cfg.model, cfg.seed)?;
    let (best, history) = train(net, &train_set, &val_set, &run, &weights).context("training failed")?;
    history.write_csv(layout.history())?;

    let (pred, _) = predict(&best, &train_set, cfg.model.batch_size)?;
    let truth = train_set.stage_labels()?;
    let correct = pred.iter().zip(&truth).filter(|(p, t)| p == t).count();
    let best_row = &history.epochs[history.best_epoch - 1];
    println!(
        "best epoch {} of {}: val loss {:.5}, val kappa {:.4}, train accuracy {:.4}",
        history.best_epoch,
        history.stop_epoch,
        best_row.val_loss,
        best_row.val_kappa,
        correct as f64 / truth.len() as f64
    );
    println!("checkpoint {}", layout.model().display());
    Ok(())
}
