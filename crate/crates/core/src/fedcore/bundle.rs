//! Round logs, checkpoints and the deployable manifest.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::ServerState;
use crate::error::{Error, Result};
use crate::fedclust::{read_json, write_json};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundLogRow {
    pub round: usize,
    pub agent: u32,
    pub factory_id: u32,
    pub group_id: u32,
    pub mean_f1: f64,
    pub loss: f64,
}

pub fn write_round_log(path: &Path, rows: &[RoundLogRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Format {
        path: path.to_path_buf(),
        detail: e.to_string(),
    })?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Ties the trained blocks to the clustering that defines the groups.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleManifest {
    pub common_checkpoint: String,
    /// (group id, head checkpoint file).
    pub group_checkpoints: Vec<(u32, String)>,
    pub centroid_export: Option<String>,
    pub round: usize,
    pub profile: String,
    pub seed: u64,
    pub config_hash: String,
}

impl BundleManifest {
    pub fn load(path: &Path) -> Result<Self> {
        read_json(path)
    }

    pub fn head_path(&self, dir: &Path, group: u32) -> Option<PathBuf> {
        self.group_checkpoints
            .iter()
            .find(|(g, _)| *g == group)
            .map(|(_, f)| dir.join(f))
    }
}

/// Writes `common.ckpt`, one `group{j}.ckpt` per group and `manifest.json`.
pub fn write_bundle(
    dir: &Path,
    server: &ServerState,
    centroid_export: Option<&str>,
    profile: &str,
    seed: u64,
    config_hash: &str,
) -> Result<BundleManifest> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    server.w_global.save(&dir.join("common.ckpt"))?;
    let mut group_checkpoints = Vec::new();
    for (g, theta) in &server.theta {
        let name = format!("group{g}.ckpt");
        theta.save(&dir.join(&name))?;
        group_checkpoints.push((*g, name));
    }
    let manifest = BundleManifest {
        common_checkpoint: "common.ckpt".into(),
        group_checkpoints,
        centroid_export: centroid_export.map(str::to_string),
        round: server.round,
        profile: profile.to_string(),
        seed,
        config_hash: config_hash.to_string(),
    };
    write_json(&dir.join("manifest.json"), &manifest)?;
    Ok(manifest)
}
