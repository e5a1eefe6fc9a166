use serde::{Deserialize, Serialize};

use super::qrs::BeatSeries;
use super::quality::QualityMask;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TemplateConfig {
    /// Template extent before the R peak, seconds.
    pub pre_s: f64,
    /// Template extent after the R peak, seconds.
    pub post_s: f64,
    /// Weight of the previous template at each update.
    pub factor: f64,
}

impl Default for TemplateConfig {
    fn default() -> Self {
        Self {
            pre_s: 0.2,
            post_s: 0.4,
            factor: 0.9,
        }
    }
}

/// Removes beat-synchronous cardiac interference from one channel.
///
/// For every beat whose window lies inside the channel, the running template
/// (built from earlier beats only) is subtracted at masked-true samples; the
/// template is then updated with the current segment if the whole window is
/// masked-true. The first accepted segment initializes the template.
pub fn remove_ecg_artifact(
    channel: &[f64],
    beats: &BeatSeries,
    mask: &QualityMask,
    rate: f64,
    cfg: &TemplateConfig,
) -> Vec<f64> {
    let mut out = channel.to_vec();
    if beats.is_empty() {
        return out;
    }
    let beats = beats.at_rate(rate);
    let pre = (cfg.pre_s * rate).round() as usize;
    let post = (cfg.post_s * rate).round() as usize;
    let len = pre + post;
    let n = channel.len();
    let lambda = cfg.factor;

    let mut template: Option<Vec<f64>> = None;
    for &b in &beats.indices {
        if b < pre || b + post > n {
            continue;
        }
        let start = b - pre;
        let segment = &channel[start..start + len];
        if let Some(t) = &template {
            for (i, &tv) in t.iter().enumerate() {
                if mask.get(start + i) {
                    out[start + i] -= tv;
                }
            }
        }
        if (start..start + len).all(|i| mask.get(i)) {
            match &mut template {
                None => template = Some(segment.to_vec()),
                Some(t) => {
                    for (tv, &s) in t.iter_mut().zip(segment) {
                        *tv = lambda * *tv + (1.0 - lambda) * s;
                    }
                }
            }
        }
    }
    out
}
