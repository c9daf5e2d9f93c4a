//! Cross-validated comparison of the personalised federation against the
//! single-machine, vanilla and clustering baselines, and deployment helpers.

mod folds;
mod methods;
mod report;

use std::path::Path;

use serde::{Deserialize, Serialize};

pub use folds::{make_folds, stratify, FoldPlan};
pub use methods::{
    federations, run_experiment, run_federation, run_fold, train_federation, AgentLayout,
    ExperimentConfig, ExperimentData, ExperimentResult, Federation, FederationRun, Method,
    TrainedFederation, DESK_CLIP_NORM, DESK_LR,
};
pub use report::{
    config_hash, fault_rate_bands, fault_type_summary, method_means, rate_band, summarize,
    write_bands, write_comparison, write_fault_types, write_rows, write_summary, BandRow,
    ResultRow, SummaryRow, RATE_BANDS,
};

use crate::error::{Error, Result};
use crate::fedclust::CentroidExport;
use crate::fedcore::BundleManifest;

/// Where a new machine belongs and which head checkpoint serves it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NewMachineAssignment {
    pub group_id: u32,
    pub common_checkpoint: Option<String>,
    pub head_checkpoint: Option<String>,
}

/// Nearest-centroid majority over the new machine's raw index vectors.
pub fn assign_new_machine(
    indices: &[Vec<f64>],
    export: &CentroidExport,
    bundle: Option<(&BundleManifest, &Path)>,
) -> Result<NewMachineAssignment> {
    if indices.is_empty() {
        return Err(Error::Data("new machine has no records".into()));
    }
    let group_id = export.classify(indices)?;
    let (common, head) = match bundle {
        Some((m, dir)) => {
            let head = m.head_path(dir, group_id).ok_or_else(|| {
                Error::Data(format!(
                    "model bundle has no head checkpoint for group {group_id}"
                ))
            })?;
            (
                Some(dir.join(&m.common_checkpoint).display().to_string()),
                Some(head.display().to_string()),
            )
        }
        None => (None, None),
    };
    Ok(NewMachineAssignment {
        group_id,
        common_checkpoint: common,
        head_checkpoint: head,
    })
}
