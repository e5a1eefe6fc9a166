use serde::{Deserialize, Serialize};

use super::qrs::BeatSeries;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QualityConfig {
    pub window_s: f64,
    pub min_bpm: f64,
    pub max_bpm: f64,
    /// Upper bound (exclusive) on the inter-beat-interval coefficient of variation.
    pub max_ibi_cv: f64,
}

impl Default for QualityConfig {
    fn default() -> Self {
        Self {
            window_s: 10.0,
            min_bpm: 30.0,
            max_bpm: 180.0,
            max_ibi_cv: 0.5,
        }
    }
}

/// Per-sample flags marking where the beat series is trustworthy enough to
/// build and apply a cardiac template. Decided per window of
/// `window_len` samples; the last window may be shorter.
#[derive(Debug, Clone, PartialEq)]
pub struct QualityMask {
    pub samples: Vec<bool>,
    pub window_len: usize,
}

impl QualityMask {
    pub fn all(len: usize, value: bool) -> Self {
        Self {
            samples: vec![value; len],
            window_len: len.max(1),
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn get(&self, i: usize) -> bool {
        self.samples.get(i).copied().unwrap_or(false)
    }

    pub fn fraction_true(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        self.samples.iter().filter(|&&b| b).count() as f64 / self.samples.len() as f64
    }

    /// Per-window verdicts.
    pub fn windows(&self) -> impl Iterator<Item = bool> + '_ {
        self.samples.chunks(self.window_len).map(|w| w[0])
    }
}

/// A window is safe when its beats imply a heart rate inside
/// `[min_bpm, max_bpm]`, the inter-beat-interval CV is below `max_ibi_cv`,
/// and no gap (window edges included) is longer than one beat at `min_bpm`.
pub fn assess_quality(ecg_len: usize, beats: &BeatSeries, cfg: &QualityConfig) -> QualityMask {
    let rate = beats.rate;
    let window_len = ((cfg.window_s * rate).round() as usize).max(1);
    let max_gap = 60.0 / cfg.min_bpm * rate;
    let mut samples = vec![false; ecg_len];

    let mut first = 0usize;
    for start in (0..ecg_len).step_by(window_len) {
        let end = (start + window_len).min(ecg_len);
        while first < beats.indices.len() && beats.indices[first] < start {
            first += 1;
        }
        let inside: Vec<usize> = beats.indices[first..]
            .iter()
            .copied()
            .take_while(|&b| b < end)
            .collect();
        let ok = window_is_plausible(&inside, start, end, rate, max_gap, cfg);
        if ok {
            samples[start..end].iter_mut().for_each(|s| *s = true);
        }
    }
    QualityMask {
        samples,
        window_len,
    }
}

fn window_is_plausible(
    beats: &[usize],
    start: usize,
    end: usize,
    rate: f64,
    max_gap: f64,
    cfg: &QualityConfig,
) -> bool {
    if beats.len() < 2 {
        return false;
    }
    let ibis: Vec<f64> = beats.windows(2).map(|w| (w[1] - w[0]) as f64).collect();
    let mean = ibis.iter().sum::<f64>() / ibis.len() as f64;
    let var = ibis.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / ibis.len() as f64;
    let bpm = 60.0 * rate / mean;
    let cv = var.sqrt() / mean;
    let lead = (beats[0] - start) as f64;
    let tail = (end - 1 - beats[beats.len() - 1]) as f64;
    bpm >= cfg.min_bpm
        && bpm <= cfg.max_bpm
        && cv < cfg.max_ibi_cv
        && lead <= max_gap
        && tail <= max_gap
}
