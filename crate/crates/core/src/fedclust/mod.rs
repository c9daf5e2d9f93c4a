//! Federated k-means over machine index vectors and majority-rule grouping.

mod kmeans;
mod protocol;

use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use kmeans::{
    federated_normalize, kmeans_plus_plus, local_kmeans_step, nearest, run_federated_kmeans,
    server_merge, ClusterClient, KMeansConfig,
};
pub use protocol::{CentroidReport, ClientMessage, GlobalCentroids, MomentReport};

use crate::dsp::FeatureExtractor;
use crate::error::{Error, Result};
use crate::stats::Standardizer;
use crate::synth::{Dataset, ScenarioConfig};

/// Raw index vectors of one machine's records and whether each is normal.
#[derive(Debug, Clone, PartialEq)]
pub struct MachineIndices {
    pub machine_id: u32,
    pub factory_id: u32,
    pub indices: Vec<Vec<f64>>,
    pub normal: Vec<bool>,
}

impl MachineIndices {
    pub fn normal_points(&self) -> impl Iterator<Item = &Vec<f64>> {
        self.indices
            .iter()
            .zip(&self.normal)
            .filter(|(_, &n)| n)
            .map(|(p, _)| p)
    }
}

/// Index vectors for every record, grouped by machine in id order.
pub fn collect_indices(
    scenario: &ScenarioConfig,
    dataset: &Dataset,
    extractor: &FeatureExtractor,
) -> Result<Vec<MachineIndices>> {
    dataset
        .iter()
        .map(|(&id, records)| {
            let spec = scenario
                .machine(id)
                .ok_or_else(|| Error::Data(format!("machine {id} is not in the scenario")))?;
            let indices = records
                .par_iter()
                .map(|r| extractor.indices(r).map(|v| v.0))
                .collect::<Result<Vec<_>>>()?;
            Ok(MachineIndices {
                machine_id: id,
                factory_id: spec.factory_id,
                indices,
                normal: records.iter().map(|r| r.is_normal()).collect(),
            })
        })
        .collect()
}

/// Machine to group map. `flagged` lists machines grouped from all their
/// records because none was normal.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupAssignment {
    pub groups: BTreeMap<u32, u32>,
    pub flagged: Vec<u32>,
}

impl GroupAssignment {
    pub fn group(&self, machine_id: u32) -> Option<u32> {
        self.groups.get(&machine_id).copied()
    }

    pub fn group_ids(&self) -> Vec<u32> {
        let mut g: Vec<u32> = self.groups.values().copied().collect();
        g.sort_unstable();
        g.dedup();
        g
    }

    pub fn members(&self, group: u32) -> Vec<u32> {
        self.groups
            .iter()
            .filter(|(_, &g)| g == group)
            .map(|(&m, _)| m)
            .collect()
    }

    /// Every machine in one group.
    pub fn single(machine_ids: impl IntoIterator<Item = u32>) -> Self {
        GroupAssignment {
            groups: machine_ids.into_iter().map(|m| (m, 0)).collect(),
            flagged: Vec::new(),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }

    pub fn load(path: &Path) -> Result<Self> {
        read_json(path)
    }
}

/// Modal nearest centroid of normalised points; ties go to the lower id.
pub fn majority_group(points: &[Vec<f64>], centroids: &[Vec<f64>]) -> Option<usize> {
    if points.is_empty() {
        return None;
    }
    let mut votes = vec![0usize; centroids.len()];
    for p in points {
        votes[nearest(p, centroids)] += 1;
    }
    let best = *votes.iter().max()?;
    votes.iter().position(|&v| v == best)
}

/// Nearest-centroid majority over each machine's normal records, falling back
/// to all records (flagged) for machines without any.
pub fn assign_groups(
    machines: &[MachineIndices],
    std: &Standardizer,
    centroids: &[Vec<f64>],
) -> Result<GroupAssignment> {
    let mut out = GroupAssignment::default();
    for m in machines {
        let mut pts: Vec<Vec<f64>> = m.normal_points().map(|p| std.apply(p)).collect();
        if pts.is_empty() {
            out.flagged.push(m.machine_id);
            pts = m.indices.iter().map(|p| std.apply(p)).collect();
        }
        let g = majority_group(&pts, centroids).ok_or_else(|| {
            Error::Data(format!("machine {} has no records to group", m.machine_id))
        })?;
        out.groups.insert(m.machine_id, g as u32);
    }
    Ok(out)
}

/// Everything a deployment needs to place a new machine in a group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CentroidExport {
    pub k: usize,
    pub d: usize,
    pub index_names: Vec<String>,
    pub normalization: Standardizer,
    pub centroids: Vec<Vec<f64>>,
    pub converged: bool,
    pub rounds: usize,
}

impl CentroidExport {
    pub fn save(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let e: CentroidExport = read_json(path)?;
        if e.centroids.len() != e.k
            || e.centroids.iter().any(|c| c.len() != e.d)
            || e.normalization.mean.len() != e.d
            || e.normalization.std.len() != e.d
        {
            return Err(Error::Format {
                path: path.to_path_buf(),
                detail: "centroid export dimensions are inconsistent".into(),
            });
        }
        Ok(e)
    }

    /// Group of a machine from its raw index vectors.
    pub fn classify(&self, indices: &[Vec<f64>]) -> Result<u32> {
        if let Some(bad) = indices.iter().find(|p| p.len() != self.d) {
            return Err(Error::Size(format!(
                "index vector has {} values, export expects {}",
                bad.len(),
                self.d
            )));
        }
        let pts: Vec<Vec<f64>> = indices
            .iter()
            .map(|p| self.normalization.apply(p))
            .collect();
        majority_group(&pts, &self.centroids)
            .map(|g| g as u32)
            .ok_or_else(|| Error::Data("cannot classify a machine with no records".into()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterOutcome {
    pub export: CentroidExport,
    pub assignment: GroupAssignment,
}

/// One client per factory holding the normal records of its machines.
pub fn factory_clients(machines: &[MachineIndices]) -> Vec<ClusterClient> {
    let mut by_factory: BTreeMap<u32, Vec<Vec<f64>>> = BTreeMap::new();
    for m in machines {
        by_factory
            .entry(m.factory_id)
            .or_default()
            .extend(m.normal_points().cloned());
    }
    by_factory
        .into_iter()
        .map(|(factory_id, points)| ClusterClient { factory_id, points })
        .collect()
}

/// Full clustering stage. Group ids are renumbered so that they follow the
/// smallest machine id of each group.
pub fn cluster_fleet(
    machines: &[MachineIndices],
    index_names: Vec<String>,
    cfg: &KMeansConfig,
) -> Result<ClusterOutcome> {
    let clients = factory_clients(machines);
    let (std, scaled) = federated_normalize(&clients)?;
    let global = run_federated_kmeans(&scaled, cfg)?;
    let raw = assign_groups(machines, &std, &global.centroids)?;

    let mut order: Vec<usize> = Vec::new();
    for g in raw.groups.values() {
        if !order.contains(&(*g as usize)) {
            order.push(*g as usize);
        }
    }
    let unused: Vec<usize> = (0..global.k()).filter(|g| !order.contains(g)).collect();
    order.extend(unused);
    let centroids: Vec<Vec<f64>> = order.iter().map(|&g| global.centroids[g].clone()).collect();
    let assignment = GroupAssignment {
        groups: raw
            .groups
            .iter()
            .map(|(&m, &g)| {
                (
                    m,
                    order.iter().position(|&o| o == g as usize).unwrap() as u32,
                )
            })
            .collect(),
        flagged: raw.flagged,
    };
    Ok(ClusterOutcome {
        export: CentroidExport {
            k: global.k(),
            d: global.dim(),
            index_names,
            normalization: std,
            centroids,
            converged: global.converged,
            rounds: global.round,
        },
        assignment,
    })
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    std::fs::write(path, s).map_err(|e| Error::io(path, e))
}

pub(crate) fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&s).map_err(|e| Error::Format {
        path: path.to_path_buf(),
        detail: e.to_string(),
    })
}
