use sleepnet_core::neuralnet::{load_checkpoint, save_checkpoint};
use sleepnet_core::preprocess::{preprocess_record, PreprocessConfig};
use sleepnet_core::records::{compute_norm_stats, cut_epochs, load_record, save_record};
use sleepnet_core::synthetic::{synthetic_record, SyntheticRecordSpec};
use sleepnet_core::training::{compute_class_weights, train, validation_metrics};
use sleepnet_core::{build_network, EpochSet, ModelConfig, TrainRunConfig};

fn raw(id: &str, seed: u64) -> sleepnet_core::PsgRecord {
    synthetic_record(&SyntheticRecordSpec { epochs: 15, ..Default::default() }, id, seed)
}

#[test]
fn raw_records_to_trained_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = PreprocessConfig::default();
    let mut processed = Vec::new();
    for (i, id) in ["a", "b", "c"].iter().enumerate() {
        let (rec, summary) = preprocess_record(&raw(id, i as u64), &cfg).unwrap();
        assert!(summary.safe_fraction > 0.9, "{summary:?}");
        let path = dir.path().join(id);
        save_record(&rec, &path).unwrap();
        processed.push(load_record(&path).unwrap());
    }
    let stats = compute_norm_stats(&processed[..2]).unwrap();
    let cut = |r| cut_epochs(r, &stats).unwrap();
    let train_epochs: Vec<_> = processed[..2].iter().flat_map(cut).collect();
    let val_epochs = cut(&processed[2]);
    assert_eq!((train_epochs.len(), val_epochs.len()), (30, 15));

    let (tr, va) = (EpochSet::from_epochs(&train_epochs), EpochSet::from_epochs(&val_epochs));
    let weights = compute_class_weights(&tr.stage_labels().unwrap()).unwrap();
    let ckpt = dir.path().join("best.ckpt");
    let run = TrainRunConfig { max_epochs: 2, checkpoint_path: Some(ckpt.clone()), ..Default::default() };
    let net = build_network(&ModelConfig { batch_size: 8, ..ModelConfig::new(2, 5, 8, 1e-3) }, 1).unwrap();
    let (best, history) = train(net, &tr, &va, &run, &weights).unwrap();
    assert_eq!(history.epochs.len(), 2);

    let loaded = load_checkpoint(&ckpt).unwrap();
    assert_eq!(loaded, best);
    let (a, _) = validation_metrics(&best, &va, &weights, 64).unwrap();
    let (b, _) = validation_metrics(&loaded, &va, &weights, 64).unwrap();
    assert!((a - b).abs() <= 1e-7 * a.abs());

    let again = dir.path().join("again.ckpt");
    save_checkpoint(&loaded, &again).unwrap();
    assert_eq!(std::fs::read(&ckpt).unwrap(), std::fs::read(&again).unwrap());
}
