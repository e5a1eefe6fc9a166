use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use sleepnet_core::evaluate::EnsemblePrediction;
use sleepnet_core::neuralnet::load_checkpoint;
use sleepnet_core::records::cut_epochs;
use sleepnet_core::training::predict;
use sleepnet_core::{ConvNet, EpochSet, StageLabel, EPOCH_SAMPLES, N_STAGES};

use crate::commands::hpo::MemberFile;
use crate::config::{DataError, PipelineConfig};
use crate::store::{create_dir, load_split, require_stats, Layout};

/// Checkpoints listed in the configuration, else the search's members,
/// else the trained model.
pub fn member_paths(cfg: &PipelineConfig, layout: &Layout) -> Result<Vec<PathBuf>> {
    if !cfg.predict.members.is_empty() {
        return Ok(cfg.predict.members.iter().map(|p| layout.root.join(p)).collect());
    }
    let file = layout.best_members();
    if file.is_file() {
        return Ok(MemberFile::read(&file)?.checkpoints(&file));
    }
    Ok(vec![layout.model()])
}

fn load_member(path: &Path) -> Result<ConvNet<f32>> {
    let net = load_checkpoint(path).with_context(|| format!("ensemble member {}", path.display()))?;
    if net.input_channels() != 5 || net.input_len() != EPOCH_SAMPLES {
        return Err(DataError(format!(
            "ensemble member {} expects {}x{} inputs, not 5x{EPOCH_SAMPLES}",
            path.display(),
            net.input_channels(),
            net.input_len()
        ))
        .into());
    }
    Ok(net)
}

/// `index label` per line.
pub fn hypnogram_text(predictions: &[EnsemblePrediction]) -> String {
    let mut s = String::new();
    for p in predictions {
        writeln!(s, "{} {}", p.epoch_index, p.label).unwrap();
    }
    s
}

pub fn parse_hypnogram(text: &str) -> std::result::Result<Vec<(usize, StageLabel)>, String> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, line)| {
            let mut f = line.split_whitespace();
            let (Some(i), Some(l), None) = (f.next(), f.next(), f.next()) else {
                return Err(format!("line {}: expected `index label`", n + 1));
            };
            let i = i.parse().map_err(|_| format!("line {}: bad epoch index `{i}`", n + 1))?;
            let l = l.parse().map_err(|e| format!("line {}: {e}", n + 1))?;
            Ok((i, l))
        })
        .collect()
}

/// Vote counts per epoch; independent of member order.
fn votes_csv(predictions: &[EnsemblePrediction]) -> String {
    let mut s = String::from("epoch,label");
    for stage in StageLabel::ALL {
        write!(s, ",votes_{stage}").unwrap();
    }
    s.push('\n');
    for p in predictions {
        write!(s, "{},{}", p.epoch_index, p.label).unwrap();
        for v in p.votes {
            write!(s, ",{v}").unwrap();
        }
        s.push('\n');
    }
    s
}

/// Every member's label and probabilities, in member-list order.
fn members_csv(predictions: &[EnsemblePrediction]) -> String {
    let mut s = String::from("epoch,member,label");
    for stage in StageLabel::ALL {
        write!(s, ",p_{stage}").unwrap();
    }
    s.push('\n');
    for p in predictions {
        for (m, (label, probs)) in p.model_labels.iter().zip(&p.model_probs).enumerate() {
            write!(s, "{},{m},{label}", p.epoch_index).unwrap();
            for v in probs.iter().take(N_STAGES) {
                write!(s, ",{v:.6}").unwrap();
            }
            s.push('\n');
        }
    }
    s
}

pub fn run(cfg: &PipelineConfig, only: &[String]) -> Result<()> {
    let layout = Layout::new(cfg);
    let stats = require_stats(&layout)?;
    let paths = member_paths(cfg, &layout)?;
    let members: Vec<ConvNet<f32>> = paths.iter().map(|p| load_member(p)).collect::<Result<_>>()?;
    log::info!("ensemble of {} members", members.len());

    let mut records = load_split(&layout.store(cfg.predict.split))?;
    if !only.is_empty() {
        if let Some(missing) = only.iter().find(|id| !records.iter().any(|r| &r.id == *id)) {
            return Err(DataError(format!("record {missing} is not in the {} split", cfg.predict.split.name())).into());
        }
        records.retain(|r| only.contains(&r.id));
    }
    let out = layout.predictions();
    create_dir(&out)?;
    for record in &records {
        let epochs = cut_epochs(record, &stats)?;
        let set = EpochSet::from_epochs(&epochs);
        let mut outputs = Vec::with_capacity(members.len());
        for (net, path) in members.iter().zip(&paths) {
            let o = predict(net, &set, net.config().batch_size)
                .with_context(|| format!("member {} on record {}", path.display(), record.id))?;
            outputs.push(o);
        }
        let predictions: Vec<EnsemblePrediction> = epochs
            .iter()
            .enumerate()
            .map(|(i, e)| {
                let labels = outputs.iter().map(|(l, _)| l[i]).collect();
                let probs = outputs.iter().map(|(_, p)| p[i]).collect();
                EnsemblePrediction::from_members(&record.id, e.epoch_index, labels, probs)
            })
            .collect();
        let write = |name: String, text: String| -> Result<()> {
            let path = out.join(name);
            std::fs::write(&path, text).with_context(|| format!("cannot write {}", path.display()))
        };
        write(format!("{}.hyp", record.id), hypnogram_text(&predictions))?;
        write(format!("{}.votes.csv", record.id), votes_csv(&predictions))?;
        write(format!("{}.members.csv", record.id), members_csv(&predictions))?;
        log::info!("record {}: {} epochs", record.id, predictions.len());
    }
    println!("{} hypnograms in {}", records.len(), out.display());
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hypnogram_round_trips() {
        let preds: Vec<_> = StageLabel::ALL
            .iter()
            .enumerate()
            .map(|(i, &l)| EnsemblePrediction::from_members("r", i, vec![l], vec![[0.2; 5]]))
            .collect();
        let text = hypnogram_text(&preds);
        assert_eq!(text.lines().next(), Some("0 W"));
        let parsed = parse_hypnogram(&text).unwrap();
        assert_eq!(parsed, StageLabel::ALL.iter().enumerate().map(|(i, &l)| (i, l)).collect::<Vec<_>>());
    }

    #[test]
    fn malformed_hypnogram_lines_are_reported() {
        assert!(parse_hypnogram("0 W\n1\n").unwrap_err().starts_with("line 2"));
        assert!(parse_hypnogram("0 X\n").is_err());
    }
}
