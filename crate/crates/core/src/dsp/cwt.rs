//! Morlet continuous wavelet transform, evaluated in the frequency domain.
//!
//! For a scale `a` (in samples) the analytic Morlet filter is
//! `2 exp(-(a w - w0)^2 / 2)` on positive frequencies and zero elsewhere, so a
//! real sinusoid of amplitude `A` at the scale's centre frequency produces
//! coefficients of magnitude close to `A`. The signal is zero-padded to twice
//! its length before filtering to avoid wrap-around.

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use super::spectrum::check_pow2;
use crate::error::{Error, Result};

pub const MORLET_W0: f64 = 6.0;

/// `|C|` over scales (rows, highest frequency first) and pooled time (columns).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scalogram {
    pub scales: usize,
    pub time: usize,
    pub coefficients: Vec<f64>,
}

impl Scalogram {
    pub fn row(&self, s: usize) -> &[f64] {
        &self.coefficients[s * self.time..(s + 1) * self.time]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CwtConfig {
    pub scales: usize,
    /// Lowest analysed frequency, Hz.
    pub f_min: f64,
    /// Highest analysed frequency, Hz.
    pub f_max: f64,
    pub sampling_rate: f64,
    /// Columns after average pooling in time.
    pub pooled_len: usize,
}

impl CwtConfig {
    /// Scales spanning half the shaft speed up to half of Nyquist.
    pub fn for_channel(
        scales: usize,
        rotating_freq: f64,
        sampling_rate: f64,
        pooled_len: usize,
    ) -> Self {
        CwtConfig {
            scales,
            f_min: rotating_freq / 2.0,
            f_max: sampling_rate / 4.0,
            sampling_rate,
            pooled_len,
        }
    }

    /// Centre frequencies, geometric, from `f_max` down to `f_min`.
    pub fn frequencies(&self) -> Vec<f64> {
        let s = self.scales;
        let ratio = (self.f_min / self.f_max).ln();
        (0..s)
            .map(|i| self.f_max * (ratio * i as f64 / (s - 1) as f64).exp())
            .collect()
    }
}

/// Precomputed transforms and filters for one signal length and configuration.
#[derive(Clone)]
pub struct CwtPlan {
    len: usize,
    config: CwtConfig,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    /// Per scale: first non-negligible bin and the filter values from there.
    filters: Vec<(usize, Vec<f64>)>,
}

impl std::fmt::Debug for CwtPlan {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CwtPlan")
            .field("len", &self.len)
            .field("config", &self.config)
            .finish()
    }
}

impl CwtPlan {
    pub fn new(len: usize, config: CwtConfig) -> Result<Self> {
        check_pow2(len)?;
        if config.scales < 4 {
            return Err(Error::Size(format!(
                "need at least 4 scales, got {}",
                config.scales
            )));
        }
        if config.pooled_len == 0 || len % config.pooled_len != 0 {
            return Err(Error::Size(format!(
                "pooled length {} does not divide signal length {len}",
                config.pooled_len
            )));
        }
        if !(config.f_min > 0.0
            && config.f_max > config.f_min
            && config.f_max <= config.sampling_rate / 2.0)
        {
            return Err(Error::Domain(format!(
                "invalid CWT band [{}, {}] Hz at {} Hz sampling",
                config.f_min, config.f_max, config.sampling_rate
            )));
        }
        let n = 2 * len;
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(n);
        let inverse = planner.plan_fft_inverse(n);
        let filters = config
            .frequencies()
            .into_iter()
            .map(|f| {
                let scale = MORLET_W0 * config.sampling_rate / (2.0 * PI * f);
                let vals: Vec<f64> = (0..=n / 2)
                    .map(|k| {
                        let w = 2.0 * PI * k as f64 / n as f64;
                        if k == 0 {
                            0.0
                        } else {
                            2.0 * (-0.5 * (scale * w - MORLET_W0).powi(2)).exp()
                        }
                    })
                    .collect();
                let first = vals.iter().position(|&v| v > 1e-12).unwrap_or(vals.len());
                let last = vals
                    .iter()
                    .rposition(|&v| v > 1e-12)
                    .map_or(first, |p| p + 1);
                (first, vals[first..last].to_vec())
            })
            .collect();
        Ok(CwtPlan {
            len,
            config,
            forward,
            inverse,
            filters,
        })
    }

    pub fn config(&self) -> &CwtConfig {
        &self.config
    }

    pub fn transform(&self, signal: &[f32]) -> Result<Scalogram> {
        if signal.len() != self.len {
            return Err(Error::Size(format!(
                "CWT plan is for length {}, signal has {}",
                self.len,
                signal.len()
            )));
        }
        let n = 2 * self.len;
        let mut spec = vec![Complex::new(0.0, 0.0); n];
        for (d, &v) in spec.iter_mut().zip(signal) {
            d.re = v as f64;
        }
        self.forward.process(&mut spec);

        let pooled = self.config.pooled_len;
        let window = self.len / pooled;
        let mut coefficients = Vec::with_capacity(self.config.scales * pooled);
        let mut buf = vec![Complex::new(0.0, 0.0); n];
        let mut scratch = vec![Complex::new(0.0, 0.0); self.inverse.get_inplace_scratch_len()];
        for (first, filter) in &self.filters {
            buf.iter_mut().for_each(|c| *c = Complex::new(0.0, 0.0));
            for (j, &h) in filter.iter().enumerate() {
                buf[first + j] = spec[first + j] * h;
            }
            self.inverse.process_with_scratch(&mut buf, &mut scratch);
            let norm = 1.0 / n as f64;
            for p in 0..pooled {
                let s: f64 = buf[p * window..(p + 1) * window]
                    .iter()
                    .map(|c| c.norm())
                    .sum();
                coefficients.push(s * norm / window as f64);
            }
        }
        Ok(Scalogram {
            scales: self.config.scales,
            time: pooled,
            coefficients,
        })
    }
}

/// One-shot convenience wrapper around [`CwtPlan`].
pub fn cwt(signal: &[f32], config: CwtConfig) -> Result<Scalogram> {
    CwtPlan::new(signal.len(), config)?.transform(signal)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> CwtConfig {
        CwtConfig::for_channel(16, 50.0, 2000.0, 64)
    }

    #[test]
    fn zero_in_zero_out() {
        let s = cwt(&[0.0; 1024], cfg()).unwrap();
        assert_eq!(s.coefficients.len(), 16 * 64);
        assert!(s.coefficients.iter().all(|&c| c == 0.0));
    }

    #[test]
    fn positive_scaling_is_linear() {
        let x: Vec<f32> = (0..1024)
            .map(|n| ((n as f32) * 0.37).sin() + 0.2 * ((n as f32) * 1.9).cos())
            .collect();
        let y: Vec<f32> = x.iter().map(|v| 4.0 * v).collect();
        let a = cwt(&x, cfg()).unwrap();
        let b = cwt(&y, cfg()).unwrap();
        for (p, q) in a.coefficients.iter().zip(&b.coefficients) {
            assert!((4.0 * p - q).abs() <= 1e-9 * (1.0 + q.abs()));
        }
    }

    #[test]
    fn tone_lights_up_its_scale() {
        let c = cfg();
        let freqs = c.frequencies();
        let target = 6;
        let f = freqs[target];
        let x: Vec<f32> = (0..1024)
            .map(|n| (2.0 * PI * f * n as f64 / c.sampling_rate).sin() as f32)
            .collect();
        let s = cwt(&x, c).unwrap();
        let mid = |r: usize| s.row(r)[32];
        let best = (0..16)
            .max_by(|&a, &b| mid(a).partial_cmp(&mid(b)).unwrap())
            .unwrap();
        assert_eq!(best, target);
        assert!(
            (mid(target) - 1.0).abs() < 0.05,
            "centre magnitude {}",
            mid(target)
        );
    }

    #[test]
    fn frequencies_span_band() {
        let f = cfg().frequencies();
        assert!((f[0] - 500.0).abs() < 1e-9);
        assert!((f[15] - 25.0).abs() < 1e-9);
        assert!(f.windows(2).all(|w| w[0] > w[1]));
    }

    #[test]
    fn rejects_bad_sizes() {
        let mut c = cfg();
        c.scales = 3;
        assert!(cwt(&[0.0; 1024], c).is_err());
        assert!(cwt(&[0.0; 1000], cfg()).is_err());
    }
}
