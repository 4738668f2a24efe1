//! Zero-phase Butterworth low-pass filtering.
//!
//! The digital filter is a cascade of second-order sections obtained by the
//! bilinear transform with frequency prewarping, so the −3 dB point lands
//! exactly on the requested cutoff.

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug)]
struct Section {
    b: [f64; 3],
    a: [f64; 2],
}

impl Section {
    /// Delay-line state of the transposed direct form II at unit DC input.
    fn steady_state(&self) -> [f64; 2] {
        let z2 = self.b[2] - self.a[1];
        [self.b[1] - self.a[0] + z2, z2]
    }

    fn run(&self, x: &mut [f64]) {
        let Some(&x0) = x.first() else { return };
        let [mut z1, mut z2] = self.steady_state().map(|z| z * x0);
        for v in x.iter_mut() {
            let y = self.b[0] * *v + z1;
            z1 = self.b[1] * *v - self.a[0] * y + z2;
            z2 = self.b[2] * *v - self.a[1] * y;
            *v = y;
        }
    }
}

#[derive(Clone, Debug)]
pub struct ButterworthLowpass {
    order: usize,
    sections: Vec<Section>,
}

impl ButterworthLowpass {
    pub fn new(order: usize, cutoff_hz: f64, rate_hz: f64) -> Result<Self> {
        if order == 0 {
            return Err(Error::InvalidFilter("order must be at least 1".into()));
        }
        if !(rate_hz > 0.0) || !(cutoff_hz > 0.0 && cutoff_hz < 0.5 * rate_hz) {
            return Err(Error::InvalidFilter(format!(
                "cutoff {cutoff_hz} Hz must lie in (0, {}) for rate {rate_hz} Hz",
                0.5 * rate_hz
            )));
        }
        let k = (std::f64::consts::PI * cutoff_hz / rate_hz).tan();
        let k2 = k * k;
        let mut sections = Vec::new();
        for i in 1..=order / 2 {
            let inv_q = 2.0 * (std::f64::consts::PI * (2 * i - 1) as f64 / (2 * order) as f64).sin();
            let norm = 1.0 / (1.0 + k * inv_q + k2);
            let b0 = k2 * norm;
            sections.push(Section {
                b: [b0, 2.0 * b0, b0],
                a: [2.0 * (k2 - 1.0) * norm, (1.0 - k * inv_q + k2) * norm],
            });
        }
        if order % 2 == 1 {
            let norm = 1.0 / (1.0 + k);
            sections.push(Section {
                b: [k * norm, k * norm, 0.0],
                a: [(k - 1.0) * norm, 0.0],
            });
        }
        Ok(ButterworthLowpass { order, sections })
    }

    /// Causal single pass, started from the steady state of the first sample.
    pub fn filter(&self, x: &[f64]) -> Vec<f64> {
        let mut y = x.to_vec();
        for s in &self.sections {
            s.run(&mut y);
        }
        y
    }

    /// Forward-backward pass with odd reflection padding at both ends.
    pub fn filtfilt(&self, x: &[f64]) -> Vec<f64> {
        let n = x.len();
        if n < 2 {
            return x.to_vec();
        }
        let pad = (3 * (self.order + 1)).min(n - 1);
        let mut ext = Vec::with_capacity(n + 2 * pad);
        ext.extend((1..=pad).rev().map(|i| 2.0 * x[0] - x[i]));
        ext.extend_from_slice(x);
        ext.extend((1..=pad).map(|i| 2.0 * x[n - 1] - x[n - 1 - i]));
        let mut y = self.filter(&ext);
        y.reverse();
        let mut y = self.filter(&y);
        y.reverse();
        y[pad..pad + n].to_vec()
    }
}

/// Zero-phase low-pass filtering of every channel.
pub fn butterworth_lowpass(channels: &[Vec<f64>], cutoff_hz: f64, order: usize, rate_hz: f64) -> Result<Vec<Vec<f64>>> {
    let f = ButterworthLowpass::new(order, cutoff_hz, rate_hz)?;
    Ok(channels.iter().map(|c| f.filtfilt(c)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn sine(freq: f64, rate: f64, n: usize) -> Vec<f64> {
        (0..n).map(|i| (2.0 * PI * freq * i as f64 / rate).sin()).collect()
    }

    fn amplitude(y: &[f64]) -> f64 {
        y.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    #[test]
    fn constant_signal_passes_unchanged() {
        for order in 1..=4 {
            let f = ButterworthLowpass::new(order, 6.0, 50.0).unwrap();
            let y = f.filtfilt(&[2.5; 40]);
            assert!(y.iter().all(|v| (v - 2.5).abs() < 1e-9));
            let y = f.filter(&[2.5; 40]);
            assert!(y.iter().all(|v| (v - 2.5).abs() < 1e-9));
        }
    }

    #[test]
    fn half_power_at_cutoff() {
        let (fc, fs) = (6.0, 50.0);
        let f = ButterworthLowpass::new(2, fc, fs).unwrap();
        let y = f.filter(&sine(fc, fs, 5000));
        let gain = amplitude(&y[2500..]);
        assert!((gain - std::f64::consts::FRAC_1_SQRT_2).abs() < 0.02 * std::f64::consts::FRAC_1_SQRT_2, "gain {gain}");
    }

    #[test]
    fn zero_phase_stopband_attenuation() {
        let (fc, fs) = (2.0, 100.0);
        let f = ButterworthLowpass::new(2, fc, fs).unwrap();
        let y = f.filtfilt(&sine(4.0 * fc, fs, 4000));
        let gain = amplitude(&y[1000..3000]);
        assert!(20.0 * gain.log10() <= -40.0, "gain {gain}");
    }

    #[test]
    fn forward_backward_has_no_phase_lag() {
        let fs = 50.0;
        let x = sine(1.0, fs, 1000);
        let y = ButterworthLowpass::new(2, 6.0, fs).unwrap().filtfilt(&x);
        // zero phase: the output is a pure rescaling of the input
        let mid = 100..900;
        let gain = x[mid.clone()].iter().zip(&y[mid.clone()]).map(|(a, b)| a * b).sum::<f64>()
            / x[mid.clone()].iter().map(|a| a * a).sum::<f64>();
        assert!(mid.into_iter().all(|i| (y[i] - gain * x[i]).abs() < 1e-3));
    }

    #[test]
    fn output_length_matches_input() {
        let f = ButterworthLowpass::new(3, 6.0, 50.0).unwrap();
        for n in [0, 1, 2, 5, 100] {
            assert_eq!(f.filtfilt(&vec![1.0; n]).len(), n);
        }
    }

    #[test]
    fn invalid_cutoff_is_rejected() {
        assert!(ButterworthLowpass::new(2, 25.0, 50.0).is_err());
        assert!(ButterworthLowpass::new(2, 0.0, 50.0).is_err());
        assert!(ButterworthLowpass::new(0, 5.0, 50.0).is_err());
    }
}
