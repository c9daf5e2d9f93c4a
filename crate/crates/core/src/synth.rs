//! Synthetic vibration fleets.
//!
//! Each machine produces multi-channel records whose healthy baseline is a
//! rotating-frequency sinusoid with harmonics and noise. Fault labels add
//! physically-motivated signatures on top:
//!
//! - unbalance: the 1X component is amplified;
//! - misalignment: 2X and 3X rise above the 1X baseline;
//! - bearing: a non-synchronous train of exponentially decaying rings;
//! - friction: a 0.5X subharmonic plus extra broadband noise.
//!
//! Active faults superpose additively. Every record is a pure function of the
//! scenario and a seed derived from `(master_seed, machine_id, record_index)`.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::{self, stream};

/// Bearing defect frequency in orders of the shaft speed.
pub const BEARING_ORDER: f64 = 3.58;

/// Fault types in label order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FaultType {
    Unbalance,
    Misalignment,
    Bearing,
    Friction,
}

impl FaultType {
    pub const ALL: [FaultType; 4] = [
        FaultType::Unbalance,
        FaultType::Misalignment,
        FaultType::Bearing,
        FaultType::Friction,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            FaultType::Unbalance => "unbalance",
            FaultType::Misalignment => "misalignment",
            FaultType::Bearing => "bearing",
            FaultType::Friction => "friction",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChannelKind {
    Velocity,
    Acceleration,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelConfig {
    pub channel_id: u32,
    pub kind: ChannelKind,
    pub sampling_rate: f64,
    pub length: usize,
}

impl ChannelConfig {
    /// Resonance excited by bearing impacts, kept below Nyquist for this channel.
    pub fn ring_frequency(&self) -> f64 {
        0.3 * self.sampling_rate
    }

    fn harmonic_gain(&self) -> f64 {
        match self.kind {
            ChannelKind::Velocity => 1.0,
            ChannelKind::Acceleration => 0.6,
        }
    }

    fn impulse_gain(&self) -> f64 {
        match self.kind {
            ChannelKind::Velocity => 0.35,
            ChannelKind::Acceleration => 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MachineSpec {
    pub machine_id: u32,
    pub factory_id: u32,
    /// Ground-truth similar-machine group.
    pub archetype_id: u32,
    pub rotating_freq: f64,
    pub vibration_scale: f64,
    pub sample_count: usize,
    #[serde(default)]
    pub fault_rates: BTreeMap<FaultType, f64>,
    pub noise_level: f64,
}

impl MachineSpec {
    pub fn rate(&self, fault: FaultType) -> f64 {
        self.fault_rates.get(&fault).copied().unwrap_or(0.0)
    }

    /// Exact number of positive records for `fault`.
    pub fn positive_count(&self, fault: FaultType) -> usize {
        (self.rate(fault) * self.sample_count as f64).round() as usize
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub machines: Vec<MachineSpec>,
    pub channels: Vec<ChannelConfig>,
    pub fault_types: usize,
    pub master_seed: u64,
}

/// One multi-channel sample.
#[derive(Debug, Clone, PartialEq)]
pub struct VibrationRecord {
    pub machine_id: u32,
    pub channels: Vec<Vec<f32>>,
    pub rotating_freq: f64,
    pub labels: Vec<u8>,
}

impl VibrationRecord {
    pub fn is_normal(&self) -> bool {
        self.labels.iter().all(|&l| l == 0)
    }
}

pub type Dataset = BTreeMap<u32, Vec<VibrationRecord>>;

/// Harmonic content of a machine family's healthy signal, relative to 1X.
#[derive(Debug, Clone, Copy)]
struct Archetype {
    h2: f64,
    h3: f64,
}

impl Archetype {
    fn for_id(id: u32) -> Self {
        match id % 3 {
            0 => Archetype { h2: 0.12, h3: 0.05 },
            1 => Archetype { h2: 0.35, h3: 0.15 },
            _ => Archetype { h2: 0.22, h3: 0.30 },
        }
    }
}

pub fn desk_channels() -> Vec<ChannelConfig> {
    vec![
        ChannelConfig {
            channel_id: 0,
            kind: ChannelKind::Velocity,
            sampling_rate: 2000.0,
            length: 1024,
        },
        ChannelConfig {
            channel_id: 1,
            kind: ChannelKind::Acceleration,
            sampling_rate: 4000.0,
            length: 1024,
        },
        ChannelConfig {
            channel_id: 2,
            kind: ChannelKind::Acceleration,
            sampling_rate: 8000.0,
            length: 1024,
        },
    ]
}

impl ScenarioConfig {
    /// The 13-machine, 3-factory fleet of the reference case study, with the
    /// published sample counts multiplied by `sample_scale`.
    ///
    /// Archetype 0 holds the 45 kW and 90 kW pumps, archetype 1 the 280 kW ones.
    pub fn reference_fleet(sample_scale: f64, master_seed: u64) -> Self {
        use FaultType::*;
        // (id, factory, archetype, scale, samples, faults)
        let table: [(u32, u32, u32, f64, usize, &[(FaultType, f64)]); 13] = [
            (1, 0, 0, 0.90, 1271, &[(Bearing, 0.028), (Friction, 0.217)]),
            (2, 0, 0, 0.90, 2416, &[(Friction, 0.829)]),
            (3, 0, 1, 2.60, 300, &[]),
            (4, 0, 1, 2.60, 1144, &[(Bearing, 0.115)]),
            (5, 0, 1, 2.60, 1020, &[(Bearing, 0.035)]),
            (6, 1, 0, 1.15, 1064, &[(Friction, 0.519)]),
            (7, 1, 0, 1.15, 712, &[(Friction, 0.051)]),
            (8, 1, 0, 0.90, 824, &[(Bearing, 0.015), (Friction, 0.248)]),
            (
                9,
                1,
                1,
                2.60,
                1848,
                &[(Unbalance, 0.045), (Misalignment, 0.455), (Bearing, 0.123)],
            ),
            (10, 1, 1, 2.60, 1060, &[(Bearing, 0.023)]),
            (11, 2, 0, 1.15, 872, &[(Friction, 0.317)]),
            (
                12,
                2,
                0,
                1.15,
                1018,
                &[(Misalignment, 0.059), (Bearing, 0.065), (Friction, 0.371)],
            ),
            (
                13,
                2,
                1,
                2.60,
                2360,
                &[(Unbalance, 0.325), (Bearing, 0.488)],
            ),
        ];
        let machines = table
            .iter()
            .map(|&(id, factory, arch, scale, samples, faults)| MachineSpec {
                machine_id: id,
                factory_id: factory,
                archetype_id: arch,
                rotating_freq: 50.0,
                vibration_scale: scale,
                sample_count: ((samples as f64 * sample_scale).round() as usize).max(10),
                fault_rates: faults.iter().copied().collect(),
                noise_level: if arch == 0 { 0.25 } else { 0.3 },
            })
            .collect();
        ScenarioConfig {
            machines,
            channels: desk_channels(),
            fault_types: 4,
            master_seed,
        }
    }

    /// Default desk scenario: the reference fleet at a quarter of its sample counts.
    pub fn desk_default(master_seed: u64) -> Self {
        Self::reference_fleet(0.25, master_seed)
    }

    pub fn machine(&self, machine_id: u32) -> Option<&MachineSpec> {
        self.machines.iter().find(|m| m.machine_id == machine_id)
    }

    pub fn validate(&self) -> Result<()> {
        if self.machines.is_empty() {
            return Err(Error::Config("scenario has no machines".into()));
        }
        if self.channels.is_empty() {
            return Err(Error::Config("scenario has no channels".into()));
        }
        if self.fault_types == 0 || self.fault_types > FaultType::ALL.len() {
            return Err(Error::Config(format!(
                "fault_types must be in 1..={}, got {}",
                FaultType::ALL.len(),
                self.fault_types
            )));
        }
        let mut seen = std::collections::BTreeSet::new();
        let max_freq = self
            .machines
            .iter()
            .map(|m| 5.0 * m.rotating_freq)
            .fold(0.0_f64, f64::max);
        for ch in &self.channels {
            if ch.length < 8 || !ch.length.is_power_of_two() {
                return Err(Error::Config(format!(
                    "channel {} length {} is not a power of two >= 8",
                    ch.channel_id, ch.length
                )));
            }
            if !(ch.sampling_rate > 2.0 * max_freq) {
                return Err(Error::Config(format!(
                    "channel {} sampling rate {} Hz does not exceed twice the highest harmonic ({} Hz)",
                    ch.channel_id, ch.sampling_rate, max_freq
                )));
            }
        }
        for m in &self.machines {
            if !seen.insert(m.machine_id) {
                return Err(Error::Config(format!(
                    "duplicate machine_id {}",
                    m.machine_id
                )));
            }
            if m.sample_count == 0 {
                return Err(Error::Config(format!(
                    "machine {} has zero samples",
                    m.machine_id
                )));
            }
            if !(m.rotating_freq > 0.0) || !(m.vibration_scale > 0.0) || !(m.noise_level >= 0.0) {
                return Err(Error::Config(format!(
                    "machine {}: rotating_freq and vibration_scale must be positive, noise_level non-negative",
                    m.machine_id
                )));
            }
            for (fault, &rate) in &m.fault_rates {
                if fault.index() >= self.fault_types {
                    return Err(Error::Config(format!(
                        "machine {} uses {} but the scenario has {} fault types",
                        m.machine_id,
                        fault.name(),
                        self.fault_types
                    )));
                }
                if !(0.0..1.0).contains(&rate) {
                    return Err(Error::Config(format!(
                        "machine {}: {} rate {} outside [0, 1)",
                        m.machine_id,
                        fault.name(),
                        rate
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Label matrix for one machine: Bernoulli draws corrected to the exact count
/// `round(rate * sample_count)` per fault.
pub fn assign_labels(spec: &MachineSpec, fault_types: usize, master_seed: u64) -> Vec<Vec<u8>> {
    let n = spec.sample_count;
    let mut labels = vec![vec![0u8; fault_types]; n];
    for fault in FaultType::ALL.iter().take(fault_types) {
        let f = fault.index();
        let rate = spec.rate(*fault);
        let target = spec.positive_count(*fault);
        let mut rng = seed::rng(
            master_seed,
            &[stream::LABELS, spec.machine_id as u64, f as u64],
        );
        let mut positives = Vec::new();
        let mut negatives = Vec::new();
        for i in 0..n {
            if rng.random::<f64>() < rate {
                positives.push(i);
            } else {
                negatives.push(i);
            }
        }
        if positives.len() > target {
            positives.shuffle(&mut rng);
            positives.truncate(target);
        } else if positives.len() < target {
            negatives.shuffle(&mut rng);
            let missing = target - positives.len();
            positives.extend_from_slice(&negatives[..missing]);
        }
        for i in positives {
            labels[i][f] = 1;
        }
    }
    labels
}

/// Generates every machine's records. Machines and records are produced in
/// parallel; output is independent of scheduling.
pub fn generate_scenario(config: &ScenarioConfig) -> Result<Dataset> {
    config.validate()?;
    let per_machine: Vec<(u32, Vec<VibrationRecord>)> = config
        .machines
        .par_iter()
        .map(|spec| {
            let labels = assign_labels(spec, config.fault_types, config.master_seed);
            let records = labels
                .into_par_iter()
                .enumerate()
                .map(|(idx, l)| {
                    let s = seed::derive(
                        config.master_seed,
                        &[stream::RECORD, spec.machine_id as u64, idx as u64],
                    );
                    synthesize_record(spec, &config.channels, &l, s)
                })
                .collect::<Result<Vec<_>>>()?;
            Ok((spec.machine_id, records))
        })
        .collect::<Result<_>>()?;
    Ok(per_machine.into_iter().collect())
}

/// Builds one record. `labels[i]` activates `FaultType::ALL[i]`.
pub fn synthesize_record(
    spec: &MachineSpec,
    channels: &[ChannelConfig],
    labels: &[u8],
    seed: u64,
) -> Result<VibrationRecord> {
    if labels.len() > FaultType::ALL.len() {
        return Err(Error::Config(format!(
            "label vector has {} entries, at most {} fault types are modelled",
            labels.len(),
            FaultType::ALL.len()
        )));
    }
    let active = |f: FaultType| labels.get(f.index()).copied().unwrap_or(0) != 0;
    let arch = Archetype::for_id(spec.archetype_id);
    let fr = spec.rotating_freq;
    let mut rng = seed::rng(seed, &[]);

    // Per-record fault severities in [0, 1), shared by all channels.
    let sev: [f64; 4] = std::array::from_fn(|_| rng.random::<f64>());
    let amp_jitter = 1.0 + 0.05 * (2.0 * rng.random::<f64>() - 1.0);

    let out = channels
        .iter()
        .map(|ch| {
            let fs = ch.sampling_rate;
            let a = spec.vibration_scale * ch.harmonic_gain() * amp_jitter;
            let phases: [f64; 6] = std::array::from_fn(|_| 2.0 * PI * rng.random::<f64>());

            let mut a1 = a;
            let mut a2 = a * arch.h2;
            let mut a3 = a * arch.h3;
            let mut a_half = 0.0;
            let mut noise = spec.noise_level * spec.vibration_scale * amp_jitter;
            if active(FaultType::Unbalance) {
                a1 *= 3.0 + 1.5 * sev[0];
            }
            if active(FaultType::Misalignment) {
                a2 = a * (1.1 + 0.6 * sev[1]);
                a3 = a * (1.02 + 0.4 * sev[1]);
            }
            if active(FaultType::Friction) {
                a_half = a * (0.35 + 0.4 * sev[3]);
                noise *= 1.3 + 0.4 * sev[3];
            }

            let mut x: Vec<f64> = (0..ch.length)
                .map(|n| {
                    let t = n as f64 / fs;
                    let w = 2.0 * PI * fr * t;
                    a1 * (w + phases[0]).sin()
                        + a2 * (2.0 * w + phases[1]).sin()
                        + a3 * (3.0 * w + phases[2]).sin()
                        + a_half * (0.5 * w + phases[3]).sin()
                })
                .collect();
            for v in x.iter_mut() {
                let z: f64 = StandardNormal.sample(&mut rng);
                *v += noise * z;
            }

            if active(FaultType::Bearing) {
                let f_defect = BEARING_ORDER * fr;
                let period = 1.0 / f_defect;
                let f_ring = ch.ring_frequency();
                // Ring decays to ~1% within 40 carrier cycles.
                let tau = 40.0 / f_ring / 4.6;
                let amp =
                    spec.vibration_scale * ch.impulse_gain() * (1.0 + 2.0 * sev[2]) * amp_jitter;
                let duration = ch.length as f64 / fs;
                let mut t0 = phases[4] / (2.0 * PI) * period;
                while t0 < duration {
                    let hit = amp * (0.8 + 0.4 * rng.random::<f64>());
                    let start = (t0 * fs).ceil() as usize;
                    let stop = ((t0 + 5.0 * tau) * fs).ceil() as usize;
                    for (n, v) in x
                        .iter_mut()
                        .enumerate()
                        .take(stop.min(ch.length))
                        .skip(start)
                    {
                        let dt = n as f64 / fs - t0;
                        *v += hit * (-dt / tau).exp() * (2.0 * PI * f_ring * dt + phases[5]).sin();
                    }
                    // 1% slip between impacts.
                    t0 += period * (1.0 + 0.01 * (2.0 * rng.random::<f64>() - 1.0));
                }
            }
            x.into_iter().map(|v| v as f32).collect()
        })
        .collect();

    Ok(VibrationRecord {
        machine_id: spec.machine_id,
        channels: out,
        rotating_freq: fr,
        labels: labels.to_vec(),
    })
}
