//! Polysomnography records: channel model, stage labels, resampling to the
//! common network rate, normalization statistics and 30 s epoching.

mod container;
mod epochs;
mod resample;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use container::{load_record, load_stats, save_record, save_stats, list_records};
pub use epochs::{compute_norm_stats, cut_epochs, normalize, NormalizationStats};
pub use resample::{resample, RationalRatio};

/// Length of one scoring epoch in seconds.
pub const EPOCH_SECONDS: usize = 30;
/// Common sample rate of the network input.
pub const TARGET_RATE_HZ: f64 = 125.0;
/// Rows of an [`EpochTensor`]: 30 s at 125 Hz.
pub const EPOCH_SAMPLES: usize = 3750;
/// Number of sleep stages.
pub const N_STAGES: usize = 5;

/// Sleep stage with the fixed encoding W=0, N1=1, N2=2, N3=3, REM=4.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum StageLabel {
    W,
    N1,
    N2,
    N3,
    #[serde(rename = "REM")]
    Rem,
}

impl StageLabel {
    pub const ALL: [StageLabel; N_STAGES] = [
        StageLabel::W,
        StageLabel::N1,
        StageLabel::N2,
        StageLabel::N3,
        StageLabel::Rem,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<Self> {
        Self::ALL.get(index).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            StageLabel::W => "W",
            StageLabel::N1 => "N1",
            StageLabel::N2 => "N2",
            StageLabel::N3 => "N3",
            StageLabel::Rem => "REM",
        }
    }
}

impl fmt::Display for StageLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for StageLabel {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "W" => Ok(StageLabel::W),
            "N1" => Ok(StageLabel::N1),
            "N2" => Ok(StageLabel::N2),
            "N3" => Ok(StageLabel::N3),
            "REM" | "R" => Ok(StageLabel::Rem),
            other => Err(format!("unknown stage {other:?}")),
        }
    }
}

/// Signal slot of a recording. EEG1/EEG2 are generic derivation slots.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ChannelKind {
    #[serde(rename = "EEG1")]
    Eeg1,
    #[serde(rename = "EEG2")]
    Eeg2,
    #[serde(rename = "EOG_L")]
    EogL,
    #[serde(rename = "EOG_R")]
    EogR,
    #[serde(rename = "EMG")]
    Emg,
    #[serde(rename = "ECG")]
    Ecg,
}

impl ChannelKind {
    /// Network input channels in column order.
    pub const MODEL_INPUTS: [ChannelKind; 5] = [
        ChannelKind::Eeg1,
        ChannelKind::Eeg2,
        ChannelKind::EogL,
        ChannelKind::EogR,
        ChannelKind::Emg,
    ];

    pub const ALL: [ChannelKind; 6] = [
        ChannelKind::Eeg1,
        ChannelKind::Eeg2,
        ChannelKind::EogL,
        ChannelKind::EogR,
        ChannelKind::Emg,
        ChannelKind::Ecg,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ChannelKind::Eeg1 => "EEG1",
            ChannelKind::Eeg2 => "EEG2",
            ChannelKind::EogL => "EOG_L",
            ChannelKind::EogR => "EOG_R",
            ChannelKind::Emg => "EMG",
            ChannelKind::Ecg => "ECG",
        }
    }

    pub fn is_model_input(self) -> bool {
        self != ChannelKind::Ecg
    }

    /// Column of this channel in an [`EpochTensor`], if it is a model input.
    pub fn column(self) -> Option<usize> {
        Self::MODEL_INPUTS.iter().position(|&k| k == self)
    }
}

impl fmt::Display for ChannelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ChannelKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Self::ALL
            .iter()
            .copied()
            .find(|k| k.name() == s)
            .ok_or_else(|| format!("unknown channel kind {s:?}"))
    }
}

/// One sampled signal.
#[derive(Debug, Clone, PartialEq)]
pub struct Channel {
    pub rate: f64,
    pub unit: String,
    pub samples: Vec<f64>,
}

impl Channel {
    pub fn new(rate: f64, unit: impl Into<String>, samples: Vec<f64>) -> Self {
        Self {
            rate,
            unit: unit.into(),
            samples,
        }
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.rate
    }
}

/// A multi-channel recording with one stage annotation per 30 s epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct PsgRecord {
    pub id: String,
    pub channels: BTreeMap<ChannelKind, Channel>,
    pub annotations: Vec<StageLabel>,
}

impl PsgRecord {
    /// Builds a record and checks the duration invariants.
    pub fn new(
        id: impl Into<String>,
        channels: BTreeMap<ChannelKind, Channel>,
        annotations: Vec<StageLabel>,
    ) -> Result<Self> {
        let record = Self {
            id: id.into(),
            channels,
            annotations,
        };
        record.validate()?;
        Ok(record)
    }

    pub fn channel(&self, kind: ChannelKind) -> Result<&Channel> {
        self.channels
            .get(&kind)
            .ok_or_else(|| Error::ChannelAbsent(format!("{} in record {}", kind, self.id)))
    }

    pub fn n_epochs(&self) -> usize {
        self.annotations.len()
    }

    /// All model input channels must exist, every channel must span the same
    /// duration, and that duration must be exactly `annotations × 30 s`.
    pub fn validate(&self) -> Result<()> {
        for kind in ChannelKind::MODEL_INPUTS {
            self.channel(kind)?;
        }
        let expected = (self.annotations.len() * EPOCH_SECONDS) as f64;
        for (kind, ch) in &self.channels {
            if !(ch.rate > 0.0 && ch.rate.is_finite()) {
                return Err(Error::IncompatibleRates(format!(
                    "{} in record {} has rate {}",
                    kind, self.id, ch.rate
                )));
            }
            let expected_samples = expected * ch.rate;
            if (ch.samples.len() as f64 - expected_samples).abs() > 1e-6 {
                return Err(Error::LengthMismatch(format!(
                    "{} in record {} has {} samples at {} Hz, expected {} for {} epochs",
                    kind,
                    self.id,
                    ch.samples.len(),
                    ch.rate,
                    expected_samples,
                    self.annotations.len()
                )));
            }
        }
        Ok(())
    }
}

/// One 30 s network input: 3750 rows × 5 columns, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochTensor {
    values: Vec<f32>,
    pub label: Option<StageLabel>,
    pub record_id: String,
    pub epoch_index: usize,
}

impl EpochTensor {
    pub const ROWS: usize = EPOCH_SAMPLES;
    pub const COLS: usize = 5;

    pub fn new(
        values: Vec<f32>,
        label: Option<StageLabel>,
        record_id: impl Into<String>,
        epoch_index: usize,
    ) -> Result<Self> {
        if values.len() != Self::ROWS * Self::COLS {
            return Err(Error::BadInputShape(format!(
                "epoch tensor needs {}x{} values, got {}",
                Self::ROWS,
                Self::COLS,
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::BadInputShape(format!(
                "non-finite value at row {}, column {}",
                i / Self::COLS,
                i % Self::COLS
            )));
        }
        Ok(Self {
            values,
            label,
            record_id: record_id.into(),
            epoch_index,
        })
    }

    /// Row-major values, `values()[row * 5 + col]`.
    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn get(&self, row: usize, col: usize) -> f32 {
        self.values[row * Self::COLS + col]
    }

    pub fn column(&self, col: usize) -> impl Iterator<Item = f32> + '_ {
        self.values.iter().skip(col).step_by(Self::COLS).copied()
    }

    /// Copies the tensor into channel-major layout (5 × 3750).
    pub fn write_channel_major(&self, out: &mut [f32]) {
        debug_assert_eq!(out.len(), Self::ROWS * Self::COLS);
        for (row, chunk) in self.values.chunks_exact(Self::COLS).enumerate() {
            for (col, &v) in chunk.iter().enumerate() {
                out[col * Self::ROWS + row] = v;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stage_encoding_is_fixed() {
        let names: Vec<_> = StageLabel::ALL.iter().map(|s| (s.index(), s.name())).collect();
        assert_eq!(
            names,
            vec![(0, "W"), (1, "N1"), (2, "N2"), (3, "N3"), (4, "REM")]
        );
        for s in StageLabel::ALL {
            assert_eq!(StageLabel::from_index(s.index()), Some(s));
            assert_eq!(s.name().parse::<StageLabel>().unwrap(), s);
        }
        assert_eq!(StageLabel::from_index(5), None);
    }

    #[test]
    fn model_input_column_order() {
        let cols: Vec<_> = ChannelKind::MODEL_INPUTS.iter().map(|k| k.column()).collect();
        assert_eq!(cols, vec![Some(0), Some(1), Some(2), Some(3), Some(4)]);
        assert_eq!(ChannelKind::Ecg.column(), None);
        assert!(!ChannelKind::Ecg.is_model_input());
    }

    #[test]
    fn epoch_tensor_rejects_bad_shape_and_nan() {
        assert!(matches!(
            EpochTensor::new(vec![0.0; 10], None, "r", 0),
            Err(Error::BadInputShape(_))
        ));
        let mut v = vec![0.0; EPOCH_SAMPLES * 5];
        v[7] = f32::NAN;
        assert!(EpochTensor::new(v, None, "r", 0).is_err());
    }

    #[test]
    fn channel_major_transpose() {
        let v: Vec<f32> = (0..EPOCH_SAMPLES * 5).map(|i| i as f32).collect();
        let t = EpochTensor::new(v, None, "r", 0).unwrap();
        let mut out = vec![0.0; EPOCH_SAMPLES * 5];
        t.write_channel_major(&mut out);
        assert_eq!(out[0], 0.0);
        assert_eq!(out[1], 5.0);
        assert_eq!(out[EPOCH_SAMPLES], 1.0);
        assert_eq!(out[4 * EPOCH_SAMPLES + 2], 14.0);
        assert_eq!(t.column(2).nth(3), Some(17.0));
    }
}
