use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One-sided amplitude spectrum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    pub magnitudes: Vec<f64>,
    pub bin_width: f64,
}

impl Spectrum {
    pub fn len(&self) -> usize {
        self.magnitudes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.magnitudes.is_empty()
    }

    pub fn bin_of(&self, freq: f64) -> f64 {
        freq / self.bin_width
    }
}

pub(crate) fn check_pow2(len: usize) -> Result<()> {
    if len < 2 || !len.is_power_of_two() {
        return Err(Error::Size(format!(
            "signal length {len} is not a power of two"
        )));
    }
    Ok(())
}

/// Reusable forward transform for one signal length.
#[derive(Clone)]
pub struct SpectrumPlan {
    len: usize,
    fft: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for SpectrumPlan {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SpectrumPlan")
            .field("len", &self.len)
            .finish()
    }
}

impl SpectrumPlan {
    pub fn new(len: usize) -> Result<Self> {
        check_pow2(len)?;
        let fft = FftPlanner::new().plan_fft_forward(len);
        Ok(SpectrumPlan { len, fft })
    }

    /// Unnormalized complex DFT of a real signal.
    pub fn dft(&self, signal: &[f32]) -> Result<Vec<Complex<f64>>> {
        if signal.len() != self.len {
            return Err(Error::Size(format!(
                "plan is for length {}, signal has {}",
                self.len,
                signal.len()
            )));
        }
        let mut buf: Vec<Complex<f64>> = signal
            .iter()
            .map(|&v| Complex::new(v as f64, 0.0))
            .collect();
        self.fft.process(&mut buf);
        Ok(buf)
    }

    /// Magnitudes scaled by 2/L (1/L for the DC bin) so that a unit sinusoid
    /// centred on a bin reads 1.0. Returns L/2 bins; the Nyquist bin is dropped.
    pub fn spectrum(&self, signal: &[f32], sampling_rate: f64) -> Result<Spectrum> {
        let buf = self.dft(signal)?;
        let l = self.len as f64;
        let magnitudes = buf[..self.len / 2]
            .iter()
            .enumerate()
            .map(|(k, c)| {
                if k == 0 {
                    c.norm() / l
                } else {
                    2.0 * c.norm() / l
                }
            })
            .collect();
        Ok(Spectrum {
            magnitudes,
            bin_width: sampling_rate / l,
        })
    }
}

/// One-shot convenience wrapper around [`SpectrumPlan`].
pub fn spectrum(signal: &[f32], sampling_rate: f64) -> Result<Spectrum> {
    SpectrumPlan::new(signal.len())?.spectrum(signal, sampling_rate)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn tone(len: usize, fs: f64, f: f64, a: f64) -> Vec<f32> {
        (0..len)
            .map(|n| (a * (2.0 * PI * f * n as f64 / fs).sin()) as f32)
            .collect()
    }

    /// Direct O(L^2) evaluation, used as the independent reference.
    fn direct_magnitudes(x: &[f32]) -> Vec<f64> {
        let l = x.len();
        (0..l / 2)
            .map(|k| {
                let (mut re, mut im) = (0.0, 0.0);
                for (n, &v) in x.iter().enumerate() {
                    let th = -2.0 * PI * (k * n) as f64 / l as f64;
                    re += v as f64 * th.cos();
                    im += v as f64 * th.sin();
                }
                let m = (re * re + im * im).sqrt() / l as f64;
                if k == 0 {
                    m
                } else {
                    2.0 * m
                }
            })
            .collect()
    }

    #[test]
    fn bin_centred_unit_tone() {
        // 50 Hz sits exactly on bin 25 for fs = 1024 Hz, L = 512.
        let x = tone(512, 1024.0, 50.0, 1.0);
        let s = spectrum(&x, 1024.0).unwrap();
        assert_eq!(s.len(), 256);
        assert!((s.bin_width - 2.0).abs() < 1e-12);
        for (k, &m) in s.magnitudes.iter().enumerate() {
            if k == 25 {
                assert!((m - 1.0).abs() < 1e-6, "peak {m}");
            } else {
                assert!(m <= 1e-6, "bin {k} = {m}");
            }
        }
    }

    #[test]
    fn zero_signal_zero_spectrum() {
        let s = spectrum(&[0.0; 64], 100.0).unwrap();
        assert!(s.magnitudes.iter().all(|&m| m == 0.0));
    }

    #[test]
    fn two_tones_superpose_and_match_direct_dft() {
        let a = tone(256, 256.0, 20.0, 0.7);
        let b = tone(256, 256.0, 45.0, 1.3);
        let x: Vec<f32> = a.iter().zip(&b).map(|(p, q)| p + q).collect();
        let s = spectrum(&x, 256.0).unwrap();
        let reference = direct_magnitudes(&x);
        for (m, r) in s.magnitudes.iter().zip(&reference) {
            assert!((m - r).abs() < 1e-6);
        }
        assert!((s.magnitudes[20] - 0.7).abs() < 1e-5);
        assert!((s.magnitudes[45] - 1.3).abs() < 1e-5);
    }

    #[test]
    fn parseval() {
        let x: Vec<f32> = (0..128)
            .map(|n| ((n * 37 % 11) as f32 - 5.0) * 0.3)
            .collect();
        let plan = SpectrumPlan::new(128).unwrap();
        let c = plan.dft(&x).unwrap();
        let spectral: f64 = c.iter().map(|v| v.norm_sqr()).sum::<f64>() / 128.0;
        let energy: f64 = x.iter().map(|&v| (v as f64).powi(2)).sum();
        assert!((spectral - energy).abs() / energy < 1e-6);
    }

    #[test]
    fn non_power_of_two_rejected() {
        assert!(matches!(spectrum(&[0.0; 100], 1.0), Err(Error::Size(_))));
    }
}
