use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Reduced up/down factors for a rate change `from -> to = from * up / down`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RationalRatio {
    pub up: usize,
    pub down: usize,
}

impl RationalRatio {
    /// Rates are resolved to millihertz.
    pub fn between(from_rate: f64, to_rate: f64) -> Result<Self> {
        let to_milli = |r: f64| -> Result<u64> {
            let m = (r * 1000.0).round();
            if !(r > 0.0) || !r.is_finite() || (m - r * 1000.0).abs() > 1e-6 * m.max(1.0) {
                return Err(Error::IncompatibleRates(format!(
                    "{r} Hz is not a positive multiple of 1 mHz"
                )));
            }
            Ok(m as u64)
        };
        let (a, b) = (to_milli(from_rate)?, to_milli(to_rate)?);
        let g = gcd(a, b);
        Ok(Self {
            up: (b / g) as usize,
            down: (a / g) as usize,
        })
    }
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Zeroth-order modified Bessel function of the first kind (power series).
fn bessel_i0(x: f64) -> f64 {
    let mut sum = 1.0;
    let mut term = 1.0;
    let q = x * x / 4.0;
    for k in 1..64 {
        term *= q / (k * k) as f64;
        sum += term;
        if term < 1e-17 * sum {
            break;
        }
    }
    sum
}

const KAISER_BETA: f64 = 5.0;
const HALF_LEN_PER_FACTOR: usize = 10;

/// Kaiser-windowed sinc low-pass at the upsampled rate, split into polyphase
/// branches whose taps each sum to exactly one so constants pass unchanged.
fn design_polyphase(ratio: RationalRatio) -> (Vec<f64>, usize) {
    let max_factor = ratio.up.max(ratio.down);
    let half_len = HALF_LEN_PER_FACTOR * max_factor;
    let len = 2 * half_len + 1;
    let cutoff = 0.5 / max_factor as f64;
    let denom = bessel_i0(KAISER_BETA);
    let mut taps: Vec<f64> = (0..len)
        .map(|n| {
            let t = n as f64 - half_len as f64;
            let sinc = if t == 0.0 {
                1.0
            } else {
                (2.0 * PI * cutoff * t).sin() / (2.0 * PI * cutoff * t)
            };
            let r = t / half_len as f64;
            let w = bessel_i0(KAISER_BETA * (1.0 - r * r).max(0.0).sqrt()) / denom;
            2.0 * cutoff * sinc * w
        })
        .collect();
    for phase in 0..ratio.up {
        let sum: f64 = taps.iter().skip(phase).step_by(ratio.up).sum();
        for t in taps.iter_mut().skip(phase).step_by(ratio.up) {
            *t /= sum;
        }
    }
    (taps, half_len)
}

/// Odd reflection about the end points, clamped for very short inputs.
fn extended(x: &[f64], j: isize) -> f64 {
    let n = x.len() as isize;
    if j < 0 {
        let k = (-j).min(n - 1) as usize;
        2.0 * x[0] - x[k]
    } else if j >= n {
        let k = (2 * (n - 1) - j).max(0) as usize;
        2.0 * x[(n - 1) as usize] - x[k]
    } else {
        x[j as usize]
    }
}

/// Polyphase rational upsampling from `from_rate` to `to_rate`.
///
/// Only upsampling (or the identity) is supported; the output length must be
/// an integer multiple `len * to_rate / from_rate`.
pub fn resample(signal: &[f64], from_rate: f64, to_rate: f64) -> Result<Vec<f64>> {
    if from_rate > to_rate {
        return Err(Error::DownsamplingForbidden { from_rate, to_rate });
    }
    let ratio = RationalRatio::between(from_rate, to_rate)?;
    if ratio.up == ratio.down {
        return Ok(signal.to_vec());
    }
    let scaled = signal.len() * ratio.up;
    if scaled % ratio.down != 0 {
        return Err(Error::IncompatibleRates(format!(
            "{} samples at {from_rate} Hz do not map to a whole number of samples at {to_rate} Hz",
            signal.len()
        )));
    }
    let out_len = scaled / ratio.down;
    if signal.is_empty() {
        return Ok(Vec::new());
    }

    let (taps, half_len) = design_polyphase(ratio);
    let (up, down) = (ratio.up as isize, ratio.down as isize);
    let last_tap = (taps.len() - 1) as isize;
    let mut out = Vec::with_capacity(out_len);
    for m in 0..out_len as isize {
        let t0 = m * down + half_len as isize;
        // Input indices j with 0 <= t0 - j*up <= last_tap.
        let j_lo = (t0 - last_tap + up - 1).div_euclid(up);
        let j_hi = t0.div_euclid(up);
        let mut acc = 0.0;
        for j in j_lo..=j_hi {
            acc += taps[(t0 - j * up) as usize] * extended(signal, j);
        }
        out.push(acc);
    }
    Ok(out)
}
