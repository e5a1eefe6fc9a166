//! QRS detection: band-pass, derivative, squaring, moving-window integration
//! and an adaptive threshold with refractory period and search-back, in the
//! style of Pan and Tompkins.

use serde::{Deserialize, Serialize};

use super::filter::Sos;

/// Ordered R-peak positions on the ECG channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeatSeries {
    pub indices: Vec<usize>,
    pub rate: f64,
}

impl BeatSeries {
    pub fn empty(rate: f64) -> Self {
        Self {
            indices: Vec::new(),
            rate,
        }
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn times_secs(&self) -> impl Iterator<Item = f64> + '_ {
        self.indices.iter().map(move |&i| i as f64 / self.rate)
    }

    /// Beat indices expressed at another sample rate.
    pub fn at_rate(&self, rate: f64) -> BeatSeries {
        if rate == self.rate {
            return self.clone();
        }
        let scale = rate / self.rate;
        let mut indices: Vec<usize> = self
            .indices
            .iter()
            .map(|&i| (i as f64 * scale).round() as usize)
            .collect();
        indices.dedup();
        BeatSeries { indices, rate }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QrsConfig {
    /// Minimum spacing between beats, seconds.
    pub refractory_s: f64,
    pub band_low_hz: f64,
    pub band_high_hz: f64,
    /// Moving-window integration width, seconds.
    pub integration_s: f64,
}

impl Default for QrsConfig {
    fn default() -> Self {
        Self {
            refractory_s: 0.2,
            band_low_hz: 5.0,
            band_high_hz: 15.0,
            integration_s: 0.15,
        }
    }
}

/// Minimum ECG length the detector needs to initialize its thresholds.
pub const MIN_ECG_SECONDS: f64 = 10.0;

const INIT_SECONDS: f64 = 2.0;
const SEARCHBACK_RR_FACTOR: f64 = 1.66;
const RR_HISTORY: usize = 8;

fn bandpass(ecg: &[f64], rate: f64, cfg: &QrsConfig) -> Vec<f64> {
    let mut y = Sos::butterworth_highpass(cfg.band_low_hz, 2, rate).filtfilt(ecg);
    if cfg.band_high_hz < rate / 2.0 {
        y = Sos::butterworth_lowpass(cfg.band_high_hz, 2, rate).filtfilt(&y);
    }
    y
}

/// Five-point centered derivative, squared.
fn squared_slope(x: &[f64]) -> Vec<f64> {
    let n = x.len() as isize;
    let at = |i: isize| x[i.clamp(0, n - 1) as usize];
    (0..n)
        .map(|i| {
            let d = (2.0 * at(i + 1) + at(i + 2) - at(i - 2) - 2.0 * at(i - 1)) / 8.0;
            d * d
        })
        .collect()
}

/// Centered moving average with an odd window.
fn integrate(x: &[f64], width: usize) -> Vec<f64> {
    let half = width / 2;
    let n = x.len();
    let mut prefix = Vec::with_capacity(n + 1);
    prefix.push(0.0);
    let mut acc = 0.0;
    for &v in x {
        acc += v;
        prefix.push(acc);
    }
    (0..n)
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half + 1).min(n);
            (prefix[hi] - prefix[lo]) / (2 * half + 1) as f64
        })
        .collect()
}

fn local_maxima(x: &[f64]) -> Vec<usize> {
    (1..x.len().saturating_sub(1))
        .filter(|&i| x[i] > x[i - 1] && x[i] >= x[i + 1] && x[i] > 0.0)
        .collect()
}

struct Thresholds {
    signal: f64,
    noise: f64,
}

impl Thresholds {
    fn level(&self) -> f64 {
        self.noise + 0.25 * (self.signal - self.noise)
    }
}

/// Detects R peaks with the default configuration.
pub fn detect_qrs(ecg: &[f64], rate: f64) -> BeatSeries {
    detect_qrs_with(ecg, rate, &QrsConfig::default())
}

pub fn detect_qrs_with(ecg: &[f64], rate: f64, cfg: &QrsConfig) -> BeatSeries {
    if (ecg.len() as f64) < MIN_ECG_SECONDS * rate || ecg.iter().all(|&v| v == ecg[0]) {
        return BeatSeries::empty(rate);
    }
    let refractory = (cfg.refractory_s * rate).ceil() as usize;
    let filtered = bandpass(ecg, rate, cfg);
    let width = ((cfg.integration_s * rate).round() as usize) | 1;
    let energy = integrate(&squared_slope(&filtered), width);
    let candidates = local_maxima(&energy);

    let init = ((INIT_SECONDS * rate) as usize).min(energy.len());
    let init_max = energy[..init].iter().cloned().fold(0.0, f64::max);
    let init_mean = energy[..init].iter().sum::<f64>() / init as f64;
    let mut th = Thresholds {
        signal: 0.25 * init_max,
        noise: 0.5 * init_mean,
    };

    let mut peaks: Vec<usize> = Vec::new();
    let mut rr: Vec<usize> = Vec::new();
    let mut cursor = 0usize;
    for (ci, &p) in candidates.iter().enumerate() {
        let h = energy[p];
        if let Some(&last) = peaks.last() {
            // Search back over skipped candidates when a beat seems missed.
            if !rr.is_empty() {
                let mean_rr = rr.iter().sum::<usize>() as f64 / rr.len() as f64;
                if (p - last) as f64 > SEARCHBACK_RR_FACTOR * mean_rr {
                    let half = 0.5 * th.level();
                    let best = candidates[cursor..ci]
                        .iter()
                        .copied()
                        .filter(|&q| q >= last + refractory && q + refractory <= p && energy[q] > half)
                        .max_by(|&a, &b| energy[a].total_cmp(&energy[b]));
                    if let Some(q) = best {
                        th.signal = 0.25 * energy[q] + 0.75 * th.signal;
                        push_rr(&mut rr, q - last);
                        peaks.push(q);
                    }
                }
            }
        }
        let last = peaks.last().copied();
        if h > th.level() {
            match last {
                Some(l) if p - l < refractory => {
                    if h > energy[l] {
                        *peaks.last_mut().unwrap() = p;
                    }
                }
                _ => {
                    if let Some(l) = last {
                        push_rr(&mut rr, p - l);
                    }
                    th.signal = 0.125 * h + 0.875 * th.signal;
                    peaks.push(p);
                    cursor = ci + 1;
                }
            }
        } else {
            th.noise = 0.125 * h + 0.875 * th.noise;
        }
    }

    // Place each beat on the band-passed R peak near the energy maximum.
    let reach = (0.075 * rate).round() as usize;
    let mut indices: Vec<usize> = Vec::with_capacity(peaks.len());
    for p in peaks {
        let lo = p.saturating_sub(reach);
        let hi = (p + reach + 1).min(filtered.len());
        let r = (lo..hi)
            .max_by(|&a, &b| filtered[a].abs().total_cmp(&filtered[b].abs()).then(b.cmp(&a)))
            .unwrap_or(p);
        match indices.last() {
            Some(&l) if r < l + refractory => {
                if filtered[r].abs() > filtered[l].abs() {
                    *indices.last_mut().unwrap() = r;
                }
            }
            _ => indices.push(r),
        }
    }
    // Replacement above may break spacing with the beat before; re-check.
    let mut clean: Vec<usize> = Vec::with_capacity(indices.len());
    for r in indices {
        if clean.last().is_none_or(|&l| r >= l + refractory) {
            clean.push(r);
        }
    }
    BeatSeries {
        indices: clean,
        rate,
    }
}

fn push_rr(rr: &mut Vec<usize>, v: usize) {
    rr.push(v);
    if rr.len() > RR_HISTORY {
        rr.remove(0);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic::{add_white_noise, synthetic_ecg, EcgSpec};

    fn matched(truth: &[usize], found: &[usize], tol: usize) -> usize {
        truth
            .iter()
            .filter(|&&t| found.iter().any(|&f| f.abs_diff(t) <= tol))
            .count()
    }

    #[test]
    fn clean_sixty_bpm_five_minutes() {
        let rate = 125.0;
        let (ecg, truth) = synthetic_ecg(&EcgSpec::default(), rate, 300.0, 1);
        let beats = detect_qrs(&ecg, rate);
        assert!(beats.len().abs_diff(300) <= 2, "{} beats", beats.len());
        assert_eq!(truth.len(), 300);
        let tol = (0.040 * rate) as usize;
        assert!(matched(&truth, &beats.indices, tol) >= 298);
        for w in beats.indices.windows(2) {
            assert!(w[1] - w[0] >= 25);
        }
    }

    #[test]
    fn flat_signal_has_no_beats() {
        assert!(detect_qrs(&vec![0.0; 125 * 60], 125.0).is_empty());
    }

    #[test]
    fn noisy_ecg_recall() {
        let rate = 125.0;
        let (ecg, truth) = synthetic_ecg(&EcgSpec::default(), rate, 300.0, 3);
        let noisy = add_white_noise(&ecg, 10.0, 17);
        let beats = detect_qrs(&noisy, rate);
        let tol = (0.050 * rate) as usize;
        let recall = matched(&truth, &beats.indices, tol) as f64 / truth.len() as f64;
        assert!(recall >= 0.95, "recall {recall}");
    }

    #[test]
    fn too_short_is_empty() {
        let (ecg, _) = synthetic_ecg(&EcgSpec::default(), 125.0, 8.0, 1);
        assert!(detect_qrs(&ecg, 125.0).is_empty());
    }

    #[test]
    fn beats_rescale_between_rates() {
        let b = BeatSeries {
            indices: vec![0, 50, 100],
            rate: 50.0,
        };
        assert_eq!(b.at_rate(125.0).indices, vec![0, 125, 250]);
    }
}
