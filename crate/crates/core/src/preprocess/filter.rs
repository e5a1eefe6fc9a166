//! IIR filters as cascades of second-order sections, applied forward and
//! backward for zero phase.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One normalized second-order section (`a0 = 1`), transposed direct form II.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Biquad {
    pub b: [f64; 3],
    pub a: [f64; 2],
}

impl Biquad {
    fn normalized(b: [f64; 3], a: [f64; 3]) -> Self {
        Self {
            b: [b[0] / a[0], b[1] / a[0], b[2] / a[0]],
            a: [a[1] / a[0], a[2] / a[0]],
        }
    }

    /// RBJ notch with quality factor `q`.
    pub fn notch(center: f64, q: f64, rate: f64) -> Self {
        let w0 = 2.0 * PI * center / rate;
        let alpha = w0.sin() / (2.0 * q);
        let c = w0.cos();
        Self::normalized([1.0, -2.0 * c, 1.0], [1.0 + alpha, -2.0 * c, 1.0 - alpha])
    }

    /// Bilinear (prewarped) second-order high-pass.
    pub fn highpass(cutoff: f64, q: f64, rate: f64) -> Self {
        let w0 = 2.0 * PI * cutoff / rate;
        let alpha = w0.sin() / (2.0 * q);
        let c = w0.cos();
        Self::normalized(
            [(1.0 + c) / 2.0, -(1.0 + c), (1.0 + c) / 2.0],
            [1.0 + alpha, -2.0 * c, 1.0 - alpha],
        )
    }

    /// Bilinear (prewarped) second-order low-pass.
    pub fn lowpass(cutoff: f64, q: f64, rate: f64) -> Self {
        let w0 = 2.0 * PI * cutoff / rate;
        let alpha = w0.sin() / (2.0 * q);
        let c = w0.cos();
        Self::normalized(
            [(1.0 - c) / 2.0, 1.0 - c, (1.0 - c) / 2.0],
            [1.0 + alpha, -2.0 * c, 1.0 - alpha],
        )
    }

    /// First-order bilinear high-pass stored as a degenerate biquad.
    fn highpass_first_order(cutoff: f64, rate: f64) -> Self {
        let k = (PI * cutoff / rate).tan();
        Self::normalized([1.0, -1.0, 0.0], [1.0 + k, k - 1.0, 0.0])
    }

    fn lowpass_first_order(cutoff: f64, rate: f64) -> Self {
        let k = (PI * cutoff / rate).tan();
        Self::normalized([k, k, 0.0], [1.0 + k, k - 1.0, 0.0])
    }

    pub fn dc_gain(&self) -> f64 {
        (self.b[0] + self.b[1] + self.b[2]) / (1.0 + self.a[0] + self.a[1])
    }

    /// Filter state after an infinitely long unit-step input.
    fn step_state(&self) -> [f64; 2] {
        let g = self.dc_gain();
        let z2 = self.b[2] - self.a[1] * g;
        let z1 = self.b[1] - self.a[0] * g + z2;
        [z1, z2]
    }

    /// Complex response magnitude at `freq` Hz.
    pub fn magnitude(&self, freq: f64, rate: f64) -> f64 {
        let w = 2.0 * PI * freq / rate;
        let (c1, s1, c2, s2) = (w.cos(), w.sin(), (2.0 * w).cos(), (2.0 * w).sin());
        let num_re = self.b[0] + self.b[1] * c1 + self.b[2] * c2;
        let num_im = -(self.b[1] * s1 + self.b[2] * s2);
        let den_re = 1.0 + self.a[0] * c1 + self.a[1] * c2;
        let den_im = -(self.a[0] * s1 + self.a[1] * s2);
        (num_re.hypot(num_im)) / (den_re.hypot(den_im))
    }
}

/// Q values of the second-order sections of an order-`n` Butterworth filter.
fn butterworth_qs(order: usize) -> Vec<f64> {
    // Pole angles from the negative real axis; odd orders also have a real
    // pole at angle zero, handled as a first-order section.
    (1..=order / 2)
        .map(|k| {
            let theta = if order % 2 == 0 {
                PI * (2 * k - 1) as f64 / (2 * order) as f64
            } else {
                PI * k as f64 / order as f64
            };
            1.0 / (2.0 * theta.cos())
        })
        .collect()
}

/// A cascade of biquads.
#[derive(Debug, Clone, PartialEq)]
pub struct Sos {
    pub sections: Vec<Biquad>,
}

impl Sos {
    pub fn butterworth_highpass(cutoff: f64, order: usize, rate: f64) -> Self {
        let mut sections: Vec<_> = butterworth_qs(order)
            .into_iter()
            .map(|q| Biquad::highpass(cutoff, q, rate))
            .collect();
        if order % 2 == 1 {
            sections.push(Biquad::highpass_first_order(cutoff, rate));
        }
        Self { sections }
    }

    pub fn butterworth_lowpass(cutoff: f64, order: usize, rate: f64) -> Self {
        let mut sections: Vec<_> = butterworth_qs(order)
            .into_iter()
            .map(|q| Biquad::lowpass(cutoff, q, rate))
            .collect();
        if order % 2 == 1 {
            sections.push(Biquad::lowpass_first_order(cutoff, rate));
        }
        Self { sections }
    }

    pub fn magnitude(&self, freq: f64, rate: f64) -> f64 {
        self.sections.iter().map(|s| s.magnitude(freq, rate)).product()
    }

    fn initial_state(&self) -> Vec<[f64; 2]> {
        let mut scale = 1.0;
        self.sections
            .iter()
            .map(|s| {
                let z = s.step_state();
                let out = [z[0] * scale, z[1] * scale];
                scale *= s.dc_gain();
                out
            })
            .collect()
    }

    /// Causal filtering with explicit per-section state.
    fn run(&self, x: &mut [f64], state: &mut [[f64; 2]]) {
        for (s, z) in self.sections.iter().zip(state.iter_mut()) {
            for v in x.iter_mut() {
                let input = *v;
                let y = s.b[0] * input + z[0];
                z[0] = s.b[1] * input - s.a[0] * y + z[1];
                z[1] = s.b[2] * input - s.a[1] * y;
                *v = y;
            }
        }
    }

    /// Causal filtering from rest.
    pub fn filter(&self, x: &[f64]) -> Vec<f64> {
        let mut y = x.to_vec();
        let mut state = vec![[0.0; 2]; self.sections.len()];
        self.run(&mut y, &mut state);
        y
    }

    /// Zero-phase forward-backward filtering with odd-reflection padding and
    /// steady-state initial conditions, so constants see no start-up transient.
    pub fn filtfilt(&self, x: &[f64]) -> Vec<f64> {
        let n = x.len();
        if n == 0 || self.sections.is_empty() {
            return x.to_vec();
        }
        let pad = (3 * (2 * self.sections.len() + 1)).min(n - 1);
        let mut ext = Vec::with_capacity(n + 2 * pad);
        ext.extend((1..=pad).rev().map(|k| 2.0 * x[0] - x[k]));
        ext.extend_from_slice(x);
        ext.extend((1..=pad).map(|k| 2.0 * x[n - 1] - x[n - 1 - k]));

        let zi = self.initial_state();
        let scaled = |v: f64| zi.iter().map(|z| [z[0] * v, z[1] * v]).collect::<Vec<_>>();

        let mut state = scaled(ext[0]);
        self.run(&mut ext, &mut state);
        ext.reverse();
        let mut state = scaled(ext[0]);
        self.run(&mut ext, &mut state);
        ext.reverse();
        ext[pad..pad + n].to_vec()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FilterKind {
    Notch,
    Highpass,
}

/// Parameters of a notch or high-pass stage. The sample rate is supplied
/// when the filter is applied.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterSpec {
    pub kind: FilterKind,
    /// Center (notch) or cutoff (high-pass) frequency in Hz.
    pub frequency: f64,
    /// Quality factor, notch only.
    pub q: f64,
    /// Filter order, high-pass only.
    pub order: usize,
}

impl FilterSpec {
    pub fn notch(center: f64, q: f64) -> Self {
        Self {
            kind: FilterKind::Notch,
            frequency: center,
            q,
            order: 2,
        }
    }

    pub fn highpass(cutoff: f64, order: usize) -> Self {
        Self {
            kind: FilterKind::Highpass,
            frequency: cutoff,
            q: std::f64::consts::FRAC_1_SQRT_2,
            order,
        }
    }

    fn check_band(&self, rate: f64) -> Result<()> {
        if !(self.frequency > 0.0) || self.frequency >= rate / 2.0 {
            return Err(Error::InvalidCutoff {
                cutoff: self.frequency,
                rate,
            });
        }
        Ok(())
    }

    pub fn design(&self, rate: f64) -> Result<Sos> {
        self.check_band(rate)?;
        match self.kind {
            FilterKind::Notch => {
                if !(self.q > 0.0) {
                    return Err(Error::ConfigOutOfRange(format!("notch Q {} must be > 0", self.q)));
                }
                Ok(Sos {
                    sections: vec![Biquad::notch(self.frequency, self.q, rate)],
                })
            }
            FilterKind::Highpass => {
                if self.order == 0 {
                    return Err(Error::ConfigOutOfRange("high-pass order must be >= 1".into()));
                }
                Ok(Sos::butterworth_highpass(self.frequency, self.order, rate))
            }
        }
    }
}

/// Zero-phase mains notch. Requires the sample rate to exceed twice the
/// notch frequency.
pub fn apply_notch(signal: &[f64], rate: f64, spec: &FilterSpec) -> Result<Vec<f64>> {
    if spec.kind != FilterKind::Notch {
        return Err(Error::ConfigOutOfRange("apply_notch needs a notch spec".into()));
    }
    let min = 2.0 * spec.frequency;
    if rate <= min {
        return Err(Error::NotchNotApplicable { rate, min });
    }
    Ok(spec.design(rate)?.filtfilt(signal))
}

/// Zero-phase Butterworth high-pass.
pub fn apply_highpass(signal: &[f64], rate: f64, spec: &FilterSpec) -> Result<Vec<f64>> {
    if spec.kind != FilterKind::Highpass {
        return Err(Error::ConfigOutOfRange("apply_highpass needs a high-pass spec".into()));
    }
    Ok(spec.design(rate)?.filtfilt(signal))
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub(crate) fn sine(freq: f64, rate: f64, secs: f64, amp: f64) -> Vec<f64> {
        (0..(secs * rate) as usize)
            .map(|i| amp * (2.0 * PI * freq * i as f64 / rate + 0.3).sin())
            .collect()
    }

    /// RMS after discarding `discard` samples at each end.
    pub(crate) fn rms_core(x: &[f64], discard: usize) -> f64 {
        let core = &x[discard..x.len() - discard];
        (core.iter().map(|v| v * v).sum::<f64>() / core.len() as f64).sqrt()
    }

    fn gain_db(spec: &FilterSpec, freq: f64, rate: f64) -> f64 {
        let x = sine(freq, rate, 60.0, 1.0);
        let y = match spec.kind {
            FilterKind::Notch => apply_notch(&x, rate, spec).unwrap(),
            FilterKind::Highpass => apply_highpass(&x, rate, spec).unwrap(),
        };
        let discard = (5.0 * rate) as usize;
        20.0 * (rms_core(&y, discard) / rms_core(&x, discard)).log10()
    }

    #[test]
    fn notch_attenuates_mains_only() {
        let spec = FilterSpec::notch(60.0, 30.0);
        assert!(gain_db(&spec, 60.0, 125.0) <= -30.0);
        assert!(gain_db(&spec, 10.0, 125.0).abs() <= 1.0);
        assert!(gain_db(&spec, 30.0, 125.0).abs() <= 1.0);
    }

    #[test]
    fn notch_passes_dc_exactly() {
        let spec = FilterSpec::notch(60.0, 30.0);
        let y = apply_notch(&[5.0; 2000], 125.0, &spec).unwrap();
        assert!(y.iter().all(|v| (v - 5.0).abs() < 1e-9));
    }

    #[test]
    fn notch_needs_rate_above_120() {
        let spec = FilterSpec::notch(60.0, 30.0);
        assert!(matches!(
            apply_notch(&[0.0; 100], 50.0, &spec),
            Err(Error::NotchNotApplicable { .. })
        ));
        assert!(apply_notch(&[0.0; 100], 120.0, &spec).is_err());
    }

    #[test]
    fn highpass_band_edges() {
        let spec = FilterSpec::highpass(15.0, 4);
        assert!(gain_db(&spec, 40.0, 125.0).abs() <= 1.0);
        assert!(gain_db(&spec, 5.0, 125.0) <= -20.0);
        let y = apply_highpass(&[5.0; 3000], 125.0, &spec).unwrap();
        assert!(rms_core(&y, 250) <= 1e-3 * 5.0);
    }

    #[test]
    fn highpass_cutoff_at_nyquist_rejected() {
        let spec = FilterSpec::highpass(62.5, 4);
        assert!(matches!(
            apply_highpass(&[0.0; 10], 125.0, &spec),
            Err(Error::InvalidCutoff { .. })
        ));
    }

    #[test]
    fn butterworth_is_maximally_flat() {
        // |H(fc)| of a Butterworth prototype is 1/sqrt(2) after prewarping.
        for order in 1..=6 {
            let hp = Sos::butterworth_highpass(15.0, order, 125.0);
            assert!((hp.magnitude(15.0, 125.0) - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
            let lp = Sos::butterworth_lowpass(15.0, order, 125.0);
            assert!((lp.magnitude(15.0, 125.0) - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
        }
    }

    #[test]
    fn filters_preserve_length_and_handle_short_input() {
        let spec = FilterSpec::highpass(15.0, 4);
        for n in [0usize, 1, 2, 5, 40] {
            let x: Vec<f64> = (0..n).map(|i| i as f64).collect();
            let y = apply_highpass(&x, 125.0, &spec).unwrap();
            assert_eq!(y.len(), n);
            assert!(y.iter().all(|v| v.is_finite()));
        }
    }
}
