use serde::{Deserialize, Serialize};

use super::spectrum::Spectrum;
use crate::error::{Error, Result};

pub const TIME_INDEX_NAMES: [&str; 6] = [
    "peak",
    "rms",
    "kurtosis",
    "skewness",
    "crest_factor",
    "impulse_factor",
];
pub const FREQ_INDEX_NAMES: [&str; 6] =
    ["amp_0.5x", "amp_1x", "amp_2x", "amp_3x", "amp_4x", "amp_5x"];
/// Orders of the shaft speed probed by [`freq_indices`].
pub const ORDERS: [f64; 6] = [0.5, 1.0, 2.0, 3.0, 4.0, 5.0];
pub const INDICES_PER_CHANNEL: usize = 12;

/// Half-width, in bins, of the window searched around each order.
const ORDER_WINDOW: isize = 2;
const EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeIndices {
    pub peak: f64,
    pub rms: f64,
    pub kurtosis: f64,
    pub skewness: f64,
    pub crest_factor: f64,
    pub impulse_factor: f64,
    /// Set when the signal carries no energy and every index was zeroed.
    pub degenerate: bool,
}

impl TimeIndices {
    pub fn to_array(&self) -> [f64; 6] {
        [
            self.peak,
            self.rms,
            self.kurtosis,
            self.skewness,
            self.crest_factor,
            self.impulse_factor,
        ]
    }
}

/// Time-domain indices. Moments are taken about zero (vibration signals are
/// AC-coupled), biased, and kurtosis is non-excess.
pub fn time_indices(signal: &[f32]) -> Result<TimeIndices> {
    if signal.len() < 8 {
        return Err(Error::Size(format!(
            "time indices need at least 8 samples, got {}",
            signal.len()
        )));
    }
    let n = signal.len() as f64;
    let (mut peak, mut abs_sum, mut m2, mut m3, mut m4) = (0.0_f64, 0.0, 0.0, 0.0, 0.0);
    for &v in signal {
        let x = v as f64;
        let a = x.abs();
        peak = peak.max(a);
        abs_sum += a;
        let x2 = x * x;
        m2 += x2;
        m3 += x2 * x;
        m4 += x2 * x2;
    }
    m2 /= n;
    m3 /= n;
    m4 /= n;
    if m2 <= EPS * EPS {
        return Ok(TimeIndices {
            peak: 0.0,
            rms: 0.0,
            kurtosis: 0.0,
            skewness: 0.0,
            crest_factor: 0.0,
            impulse_factor: 0.0,
            degenerate: true,
        });
    }
    let rms = m2.sqrt();
    let mean_abs = abs_sum / n;
    Ok(TimeIndices {
        peak,
        rms,
        kurtosis: m4 / (m2 * m2),
        skewness: m3 / m2.powf(1.5),
        crest_factor: peak / rms,
        impulse_factor: peak / mean_abs.max(EPS),
        degenerate: false,
    })
}

/// Largest magnitude within two bins of each order of `rotating_freq`.
pub fn freq_indices(spec: &Spectrum, rotating_freq: f64) -> Result<[f64; 6]> {
    if !(rotating_freq > 0.0) {
        return Err(Error::Domain(format!(
            "rotating frequency must be positive, got {rotating_freq}"
        )));
    }
    let nyquist = spec.bin_width * spec.len() as f64;
    if 5.0 * rotating_freq >= nyquist {
        return Err(Error::Domain(format!(
            "5X = {} Hz is not below Nyquist ({nyquist} Hz)",
            5.0 * rotating_freq
        )));
    }
    let last = spec.len() as isize - 1;
    let mut out = [0.0; 6];
    for (slot, &order) in out.iter_mut().zip(ORDERS.iter()) {
        let centre = spec.bin_of(order * rotating_freq).round() as isize;
        let lo = (centre - ORDER_WINDOW).max(0);
        let hi = (centre + ORDER_WINDOW).min(last);
        *slot = (lo..=hi)
            .map(|k| spec.magnitudes[k as usize])
            .fold(0.0, f64::max);
    }
    Ok(out)
}

/// Twelve indices per channel, concatenated channel by channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexVector(pub Vec<f64>);

impl IndexVector {
    pub fn from_channels(parts: &[([f64; 6], [f64; 6])]) -> Self {
        let mut v = Vec::with_capacity(parts.len() * INDICES_PER_CHANNEL);
        for (t, f) in parts {
            v.extend_from_slice(t);
            v.extend_from_slice(f);
        }
        IndexVector(v)
    }

    pub fn names(channels: usize) -> Vec<String> {
        (0..channels)
            .flat_map(|c| {
                TIME_INDEX_NAMES
                    .iter()
                    .chain(FREQ_INDEX_NAMES.iter())
                    .map(move |n| format!("ch{c}_{n}"))
            })
            .collect()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Writes one row per record, headed by the index names.
pub fn write_index_csv<W: std::io::Write>(
    out: W,
    channels: usize,
    rows: impl IntoIterator<Item = (u32, usize, IndexVector)>,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["machine_id".to_string(), "record".to_string()];
    header.extend(IndexVector::names(channels));
    w.write_record(&header)?;
    for (machine, rec, iv) in rows {
        let mut row = vec![machine.to_string(), rec.to_string()];
        row.extend(iv.0.iter().map(|v| format!("{v:e}")));
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}
