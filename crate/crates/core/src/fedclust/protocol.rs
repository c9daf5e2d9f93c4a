//! Client/server messages. Nothing else crosses the boundary: clients never
//! send index vectors, only moment sums and centroid summaries.

use serde::{Deserialize, Serialize};

use crate::stats::MomentSums;

/// Per-dimension sums used for federated z-scoring.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentReport {
    pub factory_id: u32,
    pub moments: MomentSums,
}

/// Local Lloyd result. `padded` marks slots the client could not populate and
/// filled with the broadcast centroid (their count is 0).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CentroidReport {
    pub factory_id: u32,
    pub centroids: Vec<Vec<f64>>,
    pub counts: Vec<u64>,
    pub padded: bool,
}

impl CentroidReport {
    pub fn is_empty(&self) -> bool {
        self.counts.iter().all(|&c| c == 0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ClientMessage {
    Moments(MomentReport),
    Centroids(CentroidReport),
}

/// Server broadcast.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalCentroids {
    pub centroids: Vec<Vec<f64>>,
    pub round: usize,
    pub converged: bool,
}

impl GlobalCentroids {
    pub fn k(&self) -> usize {
        self.centroids.len()
    }

    pub fn dim(&self) -> usize {
        self.centroids.first().map_or(0, Vec::len)
    }
}
