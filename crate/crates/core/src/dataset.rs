//! On-disk dataset layout.
//!
//! A dataset directory holds `scenario.json` plus, per machine,
//! `machine_{id}.bin` with the raw samples and `machine_{id}.json` with the
//! labels. Binary layout (integers little-endian `u32`):
//!
//! ```text
//! b"FSPN1"  channel_count  lengths[channel_count]  sample_count  n_faults
//! per record, per channel: lengths[c] x f32 LE
//! ```

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fedclust::{read_json, write_json};
use crate::synth::{Dataset, ScenarioConfig, VibrationRecord};

pub const DATASET_MAGIC: &[u8; 5] = b"FSPN1";
pub const SCENARIO_FILE: &str = "scenario.json";

/// Sidecar next to each machine's binary file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MachineManifest {
    pub machine_id: u32,
    pub factory_id: u32,
    pub data_file: String,
    pub rotating_freq: Vec<f64>,
    pub labels: Vec<Vec<u8>>,
}

pub fn machine_paths(dir: &Path, machine_id: u32) -> (PathBuf, PathBuf) {
    (
        dir.join(format!("machine_{machine_id}.bin")),
        dir.join(format!("machine_{machine_id}.json")),
    )
}

pub fn encode_records(
    records: &[VibrationRecord],
    lengths: &[usize],
    n_faults: usize,
) -> Result<Vec<u8>> {
    let per_record: usize = lengths.iter().sum();
    let mut out = Vec::with_capacity(5 + 4 * (3 + lengths.len()) + 4 * per_record * records.len());
    out.extend_from_slice(DATASET_MAGIC);
    out.extend_from_slice(&(lengths.len() as u32).to_le_bytes());
    for &l in lengths {
        out.extend_from_slice(&(l as u32).to_le_bytes());
    }
    out.extend_from_slice(&(records.len() as u32).to_le_bytes());
    out.extend_from_slice(&(n_faults as u32).to_le_bytes());
    for r in records {
        if r.channels.len() != lengths.len()
            || r.channels.iter().zip(lengths).any(|(c, &l)| c.len() != l)
        {
            return Err(Error::Size(format!(
                "record of machine {} does not match the channel layout",
                r.machine_id
            )));
        }
        for c in &r.channels {
            for v in c {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    Ok(out)
}

/// Decoded binary payload: channel lengths, label count and per-record channels.
pub struct RawRecords {
    pub lengths: Vec<usize>,
    pub n_faults: usize,
    pub channels: Vec<Vec<Vec<f32>>>,
}

pub fn decode_records(bytes: &[u8], path: &Path) -> Result<RawRecords> {
    let bad = |detail: &str| Error::Format {
        path: path.to_path_buf(),
        detail: detail.to_string(),
    };
    if bytes.len() < 5 || &bytes[..5] != DATASET_MAGIC {
        return Err(bad("bad magic"));
    }
    let mut pos = 5;
    let u32_at = |pos: &mut usize| -> Result<usize> {
        let b = bytes
            .get(*pos..*pos + 4)
            .ok_or_else(|| bad("truncated header"))?;
        *pos += 4;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as usize)
    };
    let nc = u32_at(&mut pos)?;
    let lengths = (0..nc)
        .map(|_| u32_at(&mut pos))
        .collect::<Result<Vec<_>>>()?;
    let count = u32_at(&mut pos)?;
    let n_faults = u32_at(&mut pos)?;
    let per_record: usize = lengths.iter().sum();
    if bytes.len() - pos != 4 * per_record * count {
        return Err(bad(&format!(
            "payload holds {} bytes, header implies {}",
            bytes.len() - pos,
            4 * per_record * count
        )));
    }
    let mut values = bytes[pos..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]));
    let channels = (0..count)
        .map(|_| {
            lengths
                .iter()
                .map(|&l| values.by_ref().take(l).collect())
                .collect()
        })
        .collect();
    Ok(RawRecords {
        lengths,
        n_faults,
        channels,
    })
}

/// Writes the scenario and every machine's files into `dir` (created if needed).
pub fn save_dataset(dir: &Path, scenario: &ScenarioConfig, dataset: &Dataset) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_json(&dir.join(SCENARIO_FILE), scenario)?;
    let lengths: Vec<usize> = scenario.channels.iter().map(|c| c.length).collect();
    for spec in &scenario.machines {
        let records = dataset.get(&spec.machine_id).ok_or_else(|| {
            Error::Data(format!(
                "dataset has no records for machine {}",
                spec.machine_id
            ))
        })?;
        let (bin, side) = machine_paths(dir, spec.machine_id);
        let bytes = encode_records(records, &lengths, scenario.fault_types)?;
        let mut f = std::fs::File::create(&bin).map_err(|e| Error::io(&bin, e))?;
        f.write_all(&bytes).map_err(|e| Error::io(&bin, e))?;
        let manifest = MachineManifest {
            machine_id: spec.machine_id,
            factory_id: spec.factory_id,
            data_file: bin.file_name().unwrap().to_string_lossy().into_owned(),
            rotating_freq: records.iter().map(|r| r.rotating_freq).collect(),
            labels: records.iter().map(|r| r.labels.clone()).collect(),
        };
        write_json(&side, &manifest)?;
    }
    Ok(())
}

pub fn load_dataset(dir: &Path) -> Result<(ScenarioConfig, Dataset)> {
    let scenario: ScenarioConfig = read_json(&dir.join(SCENARIO_FILE))?;
    scenario.validate()?;
    let mut dataset = Dataset::new();
    for spec in &scenario.machines {
        let (bin, side) = machine_paths(dir, spec.machine_id);
        let manifest: MachineManifest = read_json(&side)?;
        let bytes = std::fs::read(&bin).map_err(|e| Error::io(&bin, e))?;
        let raw = decode_records(&bytes, &bin)?;
        let expected: Vec<usize> = scenario.channels.iter().map(|c| c.length).collect();
        if raw.lengths != expected || raw.n_faults != scenario.fault_types {
            return Err(Error::Format {
                path: bin,
                detail: "header disagrees with the scenario".into(),
            });
        }
        if manifest.machine_id != spec.machine_id
            || manifest.labels.len() != raw.channels.len()
            || manifest.rotating_freq.len() != raw.channels.len()
            || manifest.labels.iter().any(|l| l.len() != raw.n_faults)
        {
            return Err(Error::Format {
                path: side,
                detail: "sidecar does not match the binary file".into(),
            });
        }
        let records = raw
            .channels
            .into_iter()
            .zip(manifest.labels)
            .zip(manifest.rotating_freq)
            .map(|((channels, labels), rotating_freq)| VibrationRecord {
                machine_id: spec.machine_id,
                channels,
                rotating_freq,
                labels,
            })
            .collect();
        dataset.insert(spec.machine_id, records);
    }
    Ok((scenario, dataset))
}
