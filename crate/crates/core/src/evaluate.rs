//! Confusion matrix, per-class precision/sensitivity/F1, Cohen's kappa and
//! majority-vote ensembling.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::records::{StageLabel, N_STAGES};

/// Counts indexed `[true][predicted]` in W, N1, N2, N3, REM order.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: [[u64; N_STAGES]; N_STAGES],
}

impl ConfusionMatrix {
    pub fn add(&mut self, truth: StageLabel, predicted: StageLabel) {
        self.counts[truth.index()][predicted.index()] += 1;
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    /// Epochs whose true stage is `c`.
    pub fn row_sum(&self, c: usize) -> u64 {
        self.counts[c].iter().sum()
    }

    /// Epochs predicted as `c`.
    pub fn col_sum(&self, c: usize) -> u64 {
        self.counts.iter().map(|r| r[c]).sum()
    }

    pub fn diagonal(&self) -> u64 {
        (0..N_STAGES).map(|c| self.counts[c][c]).sum()
    }

    pub fn merge(&mut self, other: &ConfusionMatrix) {
        for (a, b) in self.counts.iter_mut().flatten().zip(other.counts.iter().flatten()) {
            *a += b;
        }
    }

    /// CSV with a header row of predicted stages and a leading true-stage column.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("true\\predicted");
        for st in StageLabel::ALL {
            write!(s, ",{st}").unwrap();
        }
        s.push('\n');
        for (st, row) in StageLabel::ALL.iter().zip(&self.counts) {
            write!(s, "{st}").unwrap();
            for v in row {
                write!(s, ",{v}").unwrap();
            }
            s.push('\n');
        }
        s
    }
}

pub fn confusion(truth: &[StageLabel], predicted: &[StageLabel]) -> Result<ConfusionMatrix> {
    if truth.len() != predicted.len() || truth.is_empty() {
        return Err(Error::LabelLengthMismatch {
            truth: truth.len(),
            predicted: predicted.len(),
        });
    }
    let mut cm = ConfusionMatrix::default();
    for (&t, &p) in truth.iter().zip(predicted) {
        cm.add(t, p);
    }
    Ok(cm)
}

/// Kappa and whether chance agreement was total (`p_e = 1`).
pub fn cohen_kappa_flagged(cm: &ConfusionMatrix) -> (f64, bool) {
    let n = cm.total() as f64;
    if n == 0.0 {
        return (0.0, true);
    }
    let po = cm.diagonal() as f64 / n;
    let pe = (0..N_STAGES)
        .map(|c| cm.row_sum(c) as f64 * cm.col_sum(c) as f64)
        .sum::<f64>()
        / (n * n);
    if pe >= 1.0 {
        return (if po >= 1.0 { 1.0 } else { 0.0 }, true);
    }
    ((po - pe) / (1.0 - pe), false)
}

pub fn cohen_kappa(cm: &ConfusionMatrix) -> f64 {
    cohen_kappa_flagged(cm).0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub stage: StageLabel,
    pub precision: f64,
    pub sensitivity: f64,
    pub f1: f64,
    /// True epochs of this stage.
    pub support: u64,
    /// Epochs predicted as this stage.
    pub predicted: u64,
    /// Set when the stage was never predicted; precision is reported as 0.
    pub precision_undefined: bool,
    /// Set when the stage never occurs in the truth; sensitivity is reported as 0.
    pub sensitivity_undefined: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub confusion: ConfusionMatrix,
    pub classes: Vec<ClassMetrics>,
    pub macro_precision: f64,
    pub macro_sensitivity: f64,
    pub macro_f1: f64,
    pub accuracy: f64,
    pub kappa: f64,
    pub kappa_degenerate: bool,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub per_record_kappa: BTreeMap<String, f64>,
}

fn ratio(num: u64, den: u64) -> (f64, bool) {
    if den == 0 {
        (0.0, true)
    } else {
        (num as f64 / den as f64, false)
    }
}

pub fn f1_score(precision: f64, sensitivity: f64) -> f64 {
    if precision + sensitivity == 0.0 {
        0.0
    } else {
        2.0 * precision * sensitivity / (precision + sensitivity)
    }
}

pub fn per_class_metrics(cm: &ConfusionMatrix) -> MetricsReport {
    let classes: Vec<ClassMetrics> = StageLabel::ALL
        .iter()
        .map(|&stage| {
            let c = stage.index();
            let tp = cm.counts[c][c];
            let (precision, precision_undefined) = ratio(tp, cm.col_sum(c));
            let (sensitivity, sensitivity_undefined) = ratio(tp, cm.row_sum(c));
            ClassMetrics {
                stage,
                precision,
                sensitivity,
                f1: f1_score(precision, sensitivity),
                support: cm.row_sum(c),
                predicted: cm.col_sum(c),
                precision_undefined,
                sensitivity_undefined,
            }
        })
        .collect();
    let mean = |f: fn(&ClassMetrics) -> f64| classes.iter().map(f).sum::<f64>() / N_STAGES as f64;
    let (kappa, kappa_degenerate) = cohen_kappa_flagged(cm);
    MetricsReport {
        confusion: *cm,
        macro_precision: mean(|m| m.precision),
        macro_sensitivity: mean(|m| m.sensitivity),
        macro_f1: mean(|m| m.f1),
        accuracy: ratio(cm.diagonal(), cm.total()).0,
        kappa,
        kappa_degenerate,
        classes,
        per_record_kappa: BTreeMap::new(),
    }
}

impl MetricsReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::format("report", "<json>", e.to_string()))
    }

    /// Plain-text table of the per-class rows, the macro average and kappa.
    pub fn to_table(&self) -> String {
        let mut s = String::new();
        writeln!(s, "{:<8}{:>10}{:>12}{:>8}{:>9}", "stage", "precision", "sensitivity", "f1", "support").unwrap();
        for m in &self.classes {
            let flag = if m.precision_undefined || m.sensitivity_undefined { " *" } else { "" };
            writeln!(
                s,
                "{:<8}{:>10.2}{:>12.2}{:>8.2}{:>9}{flag}",
                m.stage.name(),
                m.precision,
                m.sensitivity,
                m.f1,
                m.support
            )
            .unwrap();
        }
        writeln!(
            s,
            "{:<8}{:>10.2}{:>12.2}{:>8.2}{:>9}",
            "average",
            self.macro_precision,
            self.macro_sensitivity,
            self.macro_f1,
            self.confusion.total()
        )
        .unwrap();
        writeln!(s, "accuracy {:.4}", self.accuracy).unwrap();
        writeln!(s, "kappa {:.4}{}", self.kappa, if self.kappa_degenerate { " (degenerate)" } else { "" }).unwrap();
        if self.classes.iter().any(|m| m.precision_undefined || m.sensitivity_undefined) {
            writeln!(s, "* stage absent from truth or predictions; undefined ratios reported as 0").unwrap();
        }
        s
    }
}

/// Label with the most votes; ties go to the largest summed probability,
/// then to the lowest class index.
pub fn majority_vote(labels: &[StageLabel], probs: &[[f64; N_STAGES]]) -> StageLabel {
    let votes = vote_counts(labels);
    let top = *votes.iter().max().expect("five classes");
    let tied: Vec<usize> = (0..N_STAGES).filter(|&c| votes[c] == top).collect();
    if tied.len() == 1 {
        return StageLabel::ALL[tied[0]];
    }
    let mut best = tied[0];
    let mut best_mass = f64::NEG_INFINITY;
    for c in tied {
        // Sorted summation keeps the result independent of member order.
        let mut column: Vec<f64> = probs.iter().map(|row| row[c]).collect();
        column.sort_by(f64::total_cmp);
        let mass: f64 = column.iter().sum();
        if mass > best_mass {
            best = c;
            best_mass = mass;
        }
    }
    StageLabel::ALL[best]
}

fn vote_counts(labels: &[StageLabel]) -> [usize; N_STAGES] {
    let mut votes = [0usize; N_STAGES];
    for l in labels {
        votes[l.index()] += 1;
    }
    votes
}

/// One epoch's ensemble outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsemblePrediction {
    pub record_id: String,
    pub epoch_index: usize,
    pub model_labels: Vec<StageLabel>,
    pub model_probs: Vec<[f64; N_STAGES]>,
    pub label: StageLabel,
    pub votes: [usize; N_STAGES],
}

impl EnsemblePrediction {
    pub fn from_members(
        record_id: impl Into<String>,
        epoch_index: usize,
        model_labels: Vec<StageLabel>,
        model_probs: Vec<[f64; N_STAGES]>,
    ) -> Self {
        let label = majority_vote(&model_labels, &model_probs);
        Self {
            record_id: record_id.into(),
            epoch_index,
            votes: vote_counts(&model_labels),
            model_labels,
            model_probs,
            label,
        }
    }
}

/// Full report over aligned truth and ensemble predictions, with a kappa per
/// record.
pub fn evaluate_run(truth: &[StageLabel], predictions: &[EnsemblePrediction]) -> Result<MetricsReport> {
    let predicted: Vec<StageLabel> = predictions.iter().map(|p| p.label).collect();
    let cm = confusion(truth, &predicted)?;
    let mut report = per_class_metrics(&cm);
    let mut per_record: BTreeMap<&str, ConfusionMatrix> = BTreeMap::new();
    for (&t, p) in truth.iter().zip(predictions) {
        per_record.entry(&p.record_id).or_default().add(t, p.label);
    }
    report.per_record_kappa = per_record
        .into_iter()
        .map(|(id, cm)| (id.to_string(), cohen_kappa(&cm)))
        .collect();
    Ok(report)
}
