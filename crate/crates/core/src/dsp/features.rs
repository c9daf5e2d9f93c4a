use std::collections::BTreeMap;
use std::sync::{Arc, Mutex};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::cwt::{CwtConfig, CwtPlan, Scalogram};
use super::indices::{freq_indices, time_indices, IndexVector};
use super::spectrum::{Spectrum, SpectrumPlan};
use crate::error::{Error, Result};
use crate::stats::{MomentSums, Standardizer};
use crate::synth::{ChannelConfig, VibrationRecord};

/// Model input sizes for one channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChannelShape {
    pub signal_len: usize,
    pub spectrum_len: usize,
    pub cwt_scales: usize,
    pub cwt_time: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureProfile {
    pub name: String,
    pub channels: Vec<ChannelShape>,
}

impl FeatureProfile {
    /// 3 x (1024-sample signal, 512-bin spectrum, 16 x 64 scalogram).
    pub fn desk() -> Self {
        let ch = ChannelShape {
            signal_len: 1024,
            spectrum_len: 512,
            cwt_scales: 16,
            cwt_time: 64,
        };
        FeatureProfile {
            name: "desk".into(),
            channels: vec![ch; 3],
        }
    }

    /// The reference case study's input sizes. Used for shape arithmetic only.
    pub fn paper_shape() -> Self {
        let mk = |signal_len, spectrum_len, s| ChannelShape {
            signal_len,
            spectrum_len,
            cwt_scales: s,
            cwt_time: s,
        };
        FeatureProfile {
            name: "paper-shape".into(),
            channels: vec![mk(4096, 128, 128), mk(8192, 128, 256), mk(16384, 256, 384)],
        }
    }

    pub fn by_name(name: &str) -> Result<Self> {
        match name {
            "desk" => Ok(Self::desk()),
            "paper-shape" | "paper" => Ok(Self::paper_shape()),
            other => Err(Error::Config(format!(
                "unknown profile '{other}' (expected desk or paper-shape)"
            ))),
        }
    }

    /// Shapes of the nine model inputs: signals, then spectra, then scalograms.
    pub fn input_shapes(&self) -> Vec<Vec<usize>> {
        let mut v: Vec<Vec<usize>> = self
            .channels
            .iter()
            .map(|c| vec![1, c.signal_len])
            .collect();
        v.extend(self.channels.iter().map(|c| vec![1, c.spectrum_len]));
        v.extend(
            self.channels
                .iter()
                .map(|c| vec![1, c.cwt_scales, c.cwt_time]),
        );
        v
    }

    pub fn input_count(&self) -> usize {
        3 * self.channels.len()
    }
}

/// Raw (unnormalised) per-record features.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureBundle {
    pub signals: Vec<Vec<f32>>,
    pub spectra: Vec<Spectrum>,
    pub scalograms: Vec<Scalogram>,
    pub indices: IndexVector,
}

impl FeatureBundle {
    /// Flattened model inputs in profile order.
    pub fn raw_inputs(&self) -> Vec<Vec<f64>> {
        let mut v: Vec<Vec<f64>> = self
            .signals
            .iter()
            .map(|s| s.iter().map(|&x| x as f64).collect())
            .collect();
        v.extend(self.spectra.iter().map(|s| s.magnitudes.clone()));
        v.extend(self.scalograms.iter().map(|s| s.coefficients.clone()));
        v
    }
}

/// Computes spectra, scalograms and indices for records of one scenario.
pub struct FeatureExtractor {
    channels: Vec<ChannelConfig>,
    profile: FeatureProfile,
    spectrum_plans: Vec<SpectrumPlan>,
    cwt_plans: Mutex<BTreeMap<u64, Arc<Vec<CwtPlan>>>>,
}

impl FeatureExtractor {
    pub fn new(channels: &[ChannelConfig], profile: &FeatureProfile) -> Result<Self> {
        if channels.len() != profile.channels.len() {
            return Err(Error::Config(format!(
                "profile '{}' expects {} channels, scenario has {}",
                profile.name,
                profile.channels.len(),
                channels.len()
            )));
        }
        let mut spectrum_plans = Vec::with_capacity(channels.len());
        for (ch, shape) in channels.iter().zip(&profile.channels) {
            if ch.length != shape.signal_len {
                return Err(Error::Config(format!(
                    "channel {} has length {}, profile expects {}",
                    ch.channel_id, ch.length, shape.signal_len
                )));
            }
            let half = ch.length / 2;
            if shape.spectrum_len == 0 || half % shape.spectrum_len != 0 {
                return Err(Error::Config(format!(
                    "spectrum length {} does not divide {half}",
                    shape.spectrum_len
                )));
            }
            spectrum_plans.push(SpectrumPlan::new(ch.length)?);
        }
        Ok(FeatureExtractor {
            channels: channels.to_vec(),
            profile: profile.clone(),
            spectrum_plans,
            cwt_plans: Mutex::new(BTreeMap::new()),
        })
    }

    pub fn profile(&self) -> &FeatureProfile {
        &self.profile
    }

    fn cwt_plans(&self, rotating_freq: f64) -> Result<Arc<Vec<CwtPlan>>> {
        let key = rotating_freq.to_bits();
        if let Some(p) = self.cwt_plans.lock().unwrap().get(&key) {
            return Ok(p.clone());
        }
        let plans = self
            .channels
            .iter()
            .zip(&self.profile.channels)
            .map(|(ch, shape)| {
                CwtPlan::new(
                    ch.length,
                    CwtConfig::for_channel(
                        shape.cwt_scales,
                        rotating_freq,
                        ch.sampling_rate,
                        shape.cwt_time,
                    ),
                )
            })
            .collect::<Result<Vec<_>>>()?;
        let plans = Arc::new(plans);
        self.cwt_plans.lock().unwrap().insert(key, plans.clone());
        Ok(plans)
    }

    /// Index vector only; what federated clustering consumes.
    pub fn indices(&self, record: &VibrationRecord) -> Result<IndexVector> {
        self.check(record)?;
        let parts = record
            .channels
            .iter()
            .zip(&self.channels)
            .zip(&self.spectrum_plans)
            .map(|((x, ch), plan)| {
                let spec = plan.spectrum(x, ch.sampling_rate)?;
                Ok((
                    time_indices(x)?.to_array(),
                    freq_indices(&spec, record.rotating_freq)?,
                ))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(IndexVector::from_channels(&parts))
    }

    fn check(&self, record: &VibrationRecord) -> Result<()> {
        if record.channels.len() != self.channels.len() {
            return Err(Error::Size(format!(
                "record from machine {} has {} channels, expected {}",
                record.machine_id,
                record.channels.len(),
                self.channels.len()
            )));
        }
        for (x, ch) in record.channels.iter().zip(&self.channels) {
            if x.len() != ch.length {
                return Err(Error::Size(format!(
                    "channel {} has {} samples, expected {}",
                    ch.channel_id,
                    x.len(),
                    ch.length
                )));
            }
        }
        Ok(())
    }

    pub fn featurize(&self, record: &VibrationRecord) -> Result<FeatureBundle> {
        self.check(record)?;
        let cwt = self.cwt_plans(record.rotating_freq)?;
        let mut spectra = Vec::with_capacity(self.channels.len());
        let mut scalograms = Vec::with_capacity(self.channels.len());
        let mut parts = Vec::with_capacity(self.channels.len());
        for (c, x) in record.channels.iter().enumerate() {
            let ch = &self.channels[c];
            let spec = self.spectrum_plans[c].spectrum(x, ch.sampling_rate)?;
            parts.push((
                time_indices(x)?.to_array(),
                freq_indices(&spec, record.rotating_freq)?,
            ));
            spectra.push(pool_spectrum(spec, self.profile.channels[c].spectrum_len));
            scalograms.push(cwt[c].transform(x)?);
        }
        Ok(FeatureBundle {
            signals: record.channels.clone(),
            spectra,
            scalograms,
            indices: IndexVector::from_channels(&parts),
        })
    }

    pub fn featurize_all(&self, records: &[VibrationRecord]) -> Result<Vec<FeatureBundle>> {
        records.par_iter().map(|r| self.featurize(r)).collect()
    }
}

fn pool_spectrum(spec: Spectrum, len: usize) -> Spectrum {
    let factor = spec.len() / len;
    if factor <= 1 {
        return spec;
    }
    let magnitudes = spec
        .magnitudes
        .chunks(factor)
        .map(|c| c.iter().sum::<f64>() / factor as f64)
        .collect();
    Spectrum {
        magnitudes,
        bin_width: spec.bin_width * factor as f64,
    }
}

/// Per-dimension standardisation of each of the nine input families.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureStats {
    pub inputs: Vec<Standardizer>,
}

/// Standardised model inputs for one record, flattened in profile order.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelInput(pub Vec<Vec<f32>>);

impl FeatureStats {
    pub fn moments<'a>(
        bundles: impl IntoIterator<Item = &'a FeatureBundle>,
    ) -> Option<Vec<MomentSums>> {
        let mut acc: Option<Vec<MomentSums>> = None;
        for b in bundles {
            let raw = b.raw_inputs();
            let m =
                acc.get_or_insert_with(|| raw.iter().map(|r| MomentSums::new(r.len())).collect());
            for (m, r) in m.iter_mut().zip(&raw) {
                m.push(r);
            }
        }
        acc
    }

    pub fn from_moments(m: &[MomentSums]) -> Self {
        FeatureStats {
            inputs: m.iter().map(Standardizer::from_moments).collect(),
        }
    }

    /// Fits on the given (training) bundles.
    pub fn fit<'a>(bundles: impl IntoIterator<Item = &'a FeatureBundle>) -> Result<Self> {
        let m = Self::moments(bundles)
            .ok_or_else(|| Error::Data("no bundles to fit normalisation on".into()))?;
        Ok(Self::from_moments(&m))
    }

    pub fn normalize(&self, bundle: &FeatureBundle) -> ModelInput {
        let raw = bundle.raw_inputs();
        ModelInput(
            raw.iter()
                .zip(&self.inputs)
                .map(|(r, s)| s.apply_f32(r))
                .collect(),
        )
    }
}
