//! Seeded synthetic signals: ECG with known beat positions, EEG-like
//! background, cardiac-shaped pulses and whole records whose channels carry
//! stage-specific spectral signatures. Used by tests, benchmarks and the
//! CLI's fixture generator.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::Result;
use crate::records::{
    compute_norm_stats, cut_epochs, Channel, ChannelKind, EpochTensor, NormalizationStats, PsgRecord, StageLabel,
    EPOCH_SECONDS, N_STAGES,
};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EcgSpec {
    pub bpm: f64,
    /// R-peak amplitude, mV.
    pub amplitude: f64,
    /// Uniform beat-time jitter, ± seconds.
    pub jitter_s: f64,
}

impl Default for EcgSpec {
    fn default() -> Self {
        Self {
            bpm: 60.0,
            amplitude: 1.0,
            jitter_s: 0.0,
        }
    }
}

fn gaussian(t: f64, center: f64, width: f64) -> f64 {
    (-0.5 * ((t - center) / width).powi(2)).exp()
}

/// PQRST waveform value at `dt` seconds from the R peak.
fn pqrst(dt: f64) -> f64 {
    0.12 * gaussian(dt, -0.16, 0.025) - 0.12 * gaussian(dt, -0.025, 0.008) + gaussian(dt, 0.0, 0.010)
        - 0.2 * gaussian(dt, 0.025, 0.008)
        + 0.3 * gaussian(dt, 0.30, 0.04)
}

/// ECG of `secs` seconds; returns samples and true R-peak indices.
pub fn synthetic_ecg(spec: &EcgSpec, rate: f64, secs: f64, seed: u64) -> (Vec<f64>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = (secs * rate).round() as usize;
    let period = 60.0 / spec.bpm;
    let mut times = Vec::new();
    let mut t = 0.5 * period;
    while t < secs {
        let jitter = if spec.jitter_s > 0.0 {
            rng.random_range(-spec.jitter_s..spec.jitter_s)
        } else {
            0.0
        };
        times.push(t + jitter);
        t += period;
    }
    let mut x = vec![0.0; n];
    let reach = (0.5 * rate) as isize;
    for &bt in &times {
        let center = (bt * rate).round() as isize;
        for i in (center - reach).max(0)..(center + reach).min(n as isize) {
            x[i as usize] += spec.amplitude * pqrst(i as f64 / rate - bt);
        }
    }
    let truth = times
        .iter()
        .map(|&bt| (bt * rate).round() as usize)
        .filter(|&i| i < n)
        .collect();
    (x, truth)
}

/// Adds white Gaussian noise at the given signal-to-noise ratio (power, dB).
pub fn add_white_noise(x: &[f64], snr_db: f64, seed: u64) -> Vec<f64> {
    let power = x.iter().map(|v| v * v).sum::<f64>() / x.len().max(1) as f64;
    let sigma = (power / 10f64.powf(snr_db / 10.0)).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, sigma.max(f64::MIN_POSITIVE)).unwrap();
    x.iter().map(|&v| v + normal.sample(&mut rng)).collect()
}

/// Low-pass dominated background (AR(1), coefficient 0.9) scaled to `std`.
pub fn eeg_like_noise(n: usize, std: f64, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let mut prev = 0.0;
    let mut x: Vec<f64> = (0..n)
        .map(|_| {
            prev = 0.9 * prev + normal.sample(&mut rng);
            prev
        })
        .collect();
    let m = x.iter().sum::<f64>() / n.max(1) as f64;
    let s = (x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n.max(1) as f64).sqrt();
    if s > 0.0 {
        x.iter_mut().for_each(|v| *v = (*v - m) / s * std);
    }
    x
}

/// Cardiac interference shape sampled over (-0.2 s, +0.4 s) around the R
/// peak, peak value `amplitude`.
pub fn cardiac_pulse(rate: f64, amplitude: f64) -> Vec<f64> {
    let pre = (0.2 * rate).round() as usize;
    let post = (0.4 * rate).round() as usize;
    (0..pre + post)
        .map(|i| {
            let dt = (i as f64 - pre as f64) / rate;
            amplitude
                * (gaussian(dt, 0.0, 0.012) - 0.3 * gaussian(dt, 0.03, 0.01)
                    + 0.35 * gaussian(dt, 0.25, 0.05))
        })
        .collect()
}

/// Dominant frequency (Hz) of each model input channel for each stage.
/// Rows are stages W..REM, columns EEG1, EEG2, EOG_L, EOG_R, EMG.
pub const STAGE_SIGNATURE_HZ: [[f64; 5]; N_STAGES] = [
    [10.0, 10.0, 1.0, 1.0, 22.0],
    [6.0, 5.0, 0.5, 0.5, 18.0],
    [13.0, 13.0, 3.0, 3.0, 20.0],
    [1.5, 1.5, 5.0, 5.0, 16.0],
    [4.0, 7.0, 2.0, 2.0, 24.0],
];

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticRecordSpec {
    pub epochs: usize,
    pub eeg_rate: f64,
    pub eog_rate: f64,
    pub emg_rate: f64,
    /// `None` omits the ECG channel.
    pub ecg: Option<EcgSpec>,
    /// Peak of the cardiac pulse leaking into EEG/EOG/EMG.
    pub cardiac_leak: f64,
    /// 60 Hz mains amplitude added to channels sampled above 120 Hz.
    pub mains: f64,
    /// Amplitude of the stage signature relative to a unit background.
    pub signature: f64,
}

impl Default for SyntheticRecordSpec {
    fn default() -> Self {
        Self {
            epochs: 10,
            eeg_rate: 125.0,
            eog_rate: 50.0,
            emg_rate: 125.0,
            ecg: Some(EcgSpec::default()),
            cardiac_leak: 0.5,
            mains: 0.5,
            signature: 1.5,
        }
    }
}

impl SyntheticRecordSpec {
    /// Every channel at 125 Hz, no ECG, no mains, no cardiac leak.
    pub fn clean_125hz(epochs: usize) -> Self {
        Self {
            epochs,
            eog_rate: 125.0,
            ecg: None,
            cardiac_leak: 0.0,
            mains: 0.0,
            ..Self::default()
        }
    }
}

/// Stage sequence in which every run of 5 epochs is a shuffled W..REM block.
pub fn balanced_stages(epochs: usize, rng: &mut impl Rng) -> Vec<StageLabel> {
    let mut out = Vec::with_capacity(epochs);
    while out.len() < epochs {
        let mut block = StageLabel::ALL;
        block.shuffle(rng);
        out.extend(block.iter().take(epochs - out.len()));
    }
    out
}

/// A raw record whose epochs carry the stage signatures of
/// [`STAGE_SIGNATURE_HZ`] on top of background noise.
pub fn synthetic_record(spec: &SyntheticRecordSpec, id: &str, seed: u64) -> PsgRecord {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let stages = balanced_stages(spec.epochs, &mut rng);
    let secs = (spec.epochs * EPOCH_SECONDS) as f64;
    let ecg = spec
        .ecg
        .map(|e| synthetic_ecg(&e, 125.0, secs, rng.random()));

    let mut channels = BTreeMap::new();
    for (col, kind) in ChannelKind::MODEL_INPUTS.iter().enumerate() {
        let rate = match kind {
            ChannelKind::EogL | ChannelKind::EogR => spec.eog_rate,
            ChannelKind::Emg => spec.emg_rate,
            _ => spec.eeg_rate,
        };
        let per_epoch = (EPOCH_SECONDS as f64 * rate).round() as usize;
        let n = per_epoch * spec.epochs;
        let mut x = eeg_like_noise(n, 0.7, rng.random());
        let white = Normal::new(0.0, 0.3).unwrap();
        for v in x.iter_mut() {
            *v += white.sample(&mut rng);
        }
        for (e, stage) in stages.iter().enumerate() {
            let f = STAGE_SIGNATURE_HZ[stage.index()][col] * rng.random_range(0.95..1.05);
            let amp = spec.signature * rng.random_range(0.8..1.2);
            let phase = rng.random_range(0.0..2.0 * PI);
            for i in 0..per_epoch {
                let t = i as f64 / rate;
                x[e * per_epoch + i] += amp * (2.0 * PI * f * t + phase).sin();
            }
        }
        if spec.mains > 0.0 && rate > 120.0 {
            for (i, v) in x.iter_mut().enumerate() {
                *v += spec.mains * (2.0 * PI * 60.0 * i as f64 / rate).sin();
            }
        }
        if let (Some((_, beats)), true) = (&ecg, spec.cardiac_leak > 0.0) {
            let pulse = cardiac_pulse(rate, spec.cardiac_leak);
            let pre = (0.2 * rate).round() as usize;
            for &b in beats {
                let center = (b as f64 / 125.0 * rate).round() as usize;
                for (k, &p) in pulse.iter().enumerate() {
                    if let Some(idx) = (center + k).checked_sub(pre) {
                        if idx < n {
                            x[idx] += p;
                        }
                    }
                }
            }
        }
        channels.insert(*kind, Channel::new(rate, "uV", x));
    }
    if let Some((samples, _)) = ecg {
        channels.insert(ChannelKind::Ecg, Channel::new(125.0, "mV", samples));
    }
    PsgRecord::new(id, channels, stages).expect("synthetic record is consistent")
}

/// Normalized train/val/test epochs from clean synthetic records of
/// `per_record` epochs each; statistics come from the train records only.
pub struct SyntheticSplits {
    pub train: Vec<EpochTensor>,
    pub val: Vec<EpochTensor>,
    pub test: Vec<EpochTensor>,
    pub stats: NormalizationStats,
}

pub fn synthetic_splits(records: [usize; 3], per_record: usize, seed: u64) -> Result<SyntheticSplits> {
    let spec = SyntheticRecordSpec::clean_125hz(per_record);
    let mut next = 0u64;
    let mut make = |n: usize, tag: &str| -> Vec<PsgRecord> {
        (0..n)
            .map(|i| {
                next += 1;
                synthetic_record(&spec, &format!("{tag}{i:03}"), seed.wrapping_mul(1000).wrapping_add(next))
            })
            .collect()
    };
    let (tr, va, te) = (make(records[0], "train"), make(records[1], "val"), make(records[2], "test"));
    let stats = compute_norm_stats(&tr)?;
    let cut = |rs: &[PsgRecord]| -> Result<Vec<EpochTensor>> {
        let mut out = Vec::new();
        for r in rs {
            out.extend(cut_epochs(r, &stats)?);
        }
        Ok(out)
    };
    Ok(SyntheticSplits {
        train: cut(&tr)?,
        val: cut(&va)?,
        test: cut(&te)?,
        stats,
    })
}
