//! Noise and artifact reduction ahead of epoching: mains notch on EEG/EMG,
//! EMG high-pass, QRS detection on the ECG and beat-synchronous removal of
//! cardiac interference from the model inputs.
//!
//! Processing order per record: filter at the native rate, resample to
//! 125 Hz, then remove cardiac artifacts.

mod artifact;
mod filter;
mod qrs;
mod quality;

use serde::{Deserialize, Serialize};

pub use artifact::{remove_ecg_artifact, TemplateConfig};
pub use filter::{apply_highpass, apply_notch, Biquad, FilterKind, FilterSpec, Sos};
pub use qrs::{detect_qrs, detect_qrs_with, BeatSeries, QrsConfig, MIN_ECG_SECONDS};
pub use quality::{assess_quality, QualityConfig, QualityMask};

use crate::error::Result;
use crate::records::{resample, Channel, ChannelKind, PsgRecord, TARGET_RATE_HZ};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PreprocessConfig {
    pub notch_hz: f64,
    pub notch_q: f64,
    pub highpass_hz: f64,
    pub highpass_order: usize,
    pub target_rate_hz: f64,
    /// Disable to skip QRS detection and template subtraction.
    pub remove_cardiac: bool,
    pub qrs: QrsConfig,
    pub quality: QualityConfig,
    pub template: TemplateConfig,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            notch_hz: 60.0,
            notch_q: 30.0,
            highpass_hz: 15.0,
            highpass_order: 4,
            target_rate_hz: TARGET_RATE_HZ,
            remove_cardiac: true,
            qrs: QrsConfig::default(),
            quality: QualityConfig::default(),
            template: TemplateConfig::default(),
        }
    }
}

impl PreprocessConfig {
    pub fn notch(&self) -> FilterSpec {
        FilterSpec::notch(self.notch_hz, self.notch_q)
    }

    pub fn highpass(&self) -> FilterSpec {
        FilterSpec::highpass(self.highpass_hz, self.highpass_order)
    }
}

/// What the cardiac stage found, for logging.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PreprocessSummary {
    pub beats: usize,
    pub safe_fraction: f64,
}

fn notch_applies(kind: ChannelKind) -> bool {
    matches!(kind, ChannelKind::Eeg1 | ChannelKind::Eeg2 | ChannelKind::Emg)
}

/// Runs the full preprocessing chain on one record and returns it with
/// every channel at the target rate.
pub fn preprocess_record(raw: &PsgRecord, cfg: &PreprocessConfig) -> Result<(PsgRecord, PreprocessSummary)> {
    let notch = cfg.notch();
    let highpass = cfg.highpass();
    let mut channels = std::collections::BTreeMap::new();
    for (&kind, ch) in &raw.channels {
        let mut x = ch.samples.clone();
        if notch_applies(kind) && ch.rate > 2.0 * cfg.notch_hz {
            x = apply_notch(&x, ch.rate, &notch)?;
        }
        if kind == ChannelKind::Emg {
            x = apply_highpass(&x, ch.rate, &highpass)?;
        }
        let x = resample(&x, ch.rate, cfg.target_rate_hz)?;
        channels.insert(kind, Channel::new(cfg.target_rate_hz, ch.unit.clone(), x));
    }

    let mut summary = PreprocessSummary::default();
    if cfg.remove_cardiac {
        if let Some(ecg) = channels.get(&ChannelKind::Ecg) {
            let rate = cfg.target_rate_hz;
            let beats = detect_qrs_with(&ecg.samples, rate, &cfg.qrs);
            let mask = assess_quality(ecg.samples.len(), &beats, &cfg.quality);
            summary.beats = beats.len();
            summary.safe_fraction = mask.fraction_true();
            for kind in ChannelKind::MODEL_INPUTS {
                if let Some(ch) = channels.get_mut(&kind) {
                    ch.samples = remove_ecg_artifact(&ch.samples, &beats, &mask, rate, &cfg.template);
                }
            }
        } else {
            log::warn!("record {}: no ECG channel, cardiac artifact removal skipped", raw.id);
        }
    }

    let record = PsgRecord::new(raw.id.clone(), channels, raw.annotations.clone())?;
    Ok((record, summary))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::records::EPOCH_SAMPLES;
    use crate::synthetic::{synthetic_record, SyntheticRecordSpec};

    #[test]
    fn record_comes_out_at_network_rate() {
        let raw = synthetic_record(&SyntheticRecordSpec { epochs: 6, ..Default::default() }, "s1", 3);
        assert_eq!(raw.channel(ChannelKind::EogL).unwrap().rate, 50.0);
        let (rec, summary) = preprocess_record(&raw, &PreprocessConfig::default()).unwrap();
        for ch in rec.channels.values() {
            assert_eq!(ch.rate, 125.0);
            assert_eq!(ch.samples.len(), 6 * EPOCH_SAMPLES);
            assert!(ch.samples.iter().all(|v| v.is_finite()));
        }
        assert!(summary.beats > 150, "{summary:?}");
        assert_eq!(rec.annotations, raw.annotations);
    }

    #[test]
    fn deterministic() {
        let raw = synthetic_record(&SyntheticRecordSpec { epochs: 2, ..Default::default() }, "s", 9);
        let a = preprocess_record(&raw, &PreprocessConfig::default()).unwrap().0;
        let b = preprocess_record(&raw, &PreprocessConfig::default()).unwrap().0;
        assert_eq!(a, b);
    }
}
