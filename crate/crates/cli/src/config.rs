//! Run configuration: an optional JSON file overridden by flags.

use std::path::{Path, PathBuf};

use anyhow::{bail, Result};
use fspn_core::dsp::FeatureProfile;
use fspn_core::eval::ExperimentConfig;
use fspn_core::model::ArchConfig;
use serde::{Deserialize, Serialize};

/// Every field is optional in the file. The resolved form, with all
/// defaults filled in, is what stage manifests record, so a manifest's
/// `config` can be passed back through `--config` to replay the stage.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Scenario JSON for `synth`; the desk fleet when absent.
    pub scenario: Option<PathBuf>,
    /// Sample-count multiplier of the built-in fleet.
    pub sample_scale: Option<f64>,
    /// Dataset directory written by `synth`.
    pub data: Option<PathBuf>,
    /// Output directory of `cluster`.
    pub clusters: Option<PathBuf>,
    /// Output directory of `train`.
    pub model: Option<PathBuf>,
    pub profile: Option<String>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub experiment: Option<ExperimentConfig>,
    /// Methods for `evaluate`.
    pub methods: Option<Vec<String>>,
    /// Run only this fold of the cross-validation.
    pub fold: Option<usize>,
    /// Machines to place with `assign`; all machines of `data` when absent.
    pub machines: Option<Vec<u32>>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        crate::stage::read_json(path)
    }

    /// Fills `self`'s unset fields from `other`.
    pub fn or(self, other: RunConfig) -> RunConfig {
        RunConfig {
            scenario: self.scenario.or(other.scenario),
            sample_scale: self.sample_scale.or(other.sample_scale),
            data: self.data.or(other.data),
            clusters: self.clusters.or(other.clusters),
            model: self.model.or(other.model),
            profile: self.profile.or(other.profile),
            seed: self.seed.or(other.seed),
            out: self.out.or(other.out),
            experiment: self.experiment.or(other.experiment),
            methods: self.methods.or(other.methods),
            fold: self.fold.or(other.fold),
            machines: self.machines.or(other.machines),
        }
    }

    /// Fills in defaults and applies the seed to every seeded stage.
    pub fn resolve(mut self) -> Result<RunConfig> {
        let seed = self.seed();
        let profile = self.profile.get_or_insert_with(|| "desk".into()).clone();
        let mut exp = match self.experiment.take() {
            Some(e) => e,
            None => ExperimentConfig {
                arch: ArchConfig::for_profile(&FeatureProfile::by_name(&profile)?),
                ..ExperimentConfig::desk()
            },
        };
        exp.federation.seed = seed;
        exp.kmeans.seed = seed;
        self.experiment = Some(exp);
        Ok(self)
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    pub fn feature_profile(&self) -> Result<FeatureProfile> {
        Ok(FeatureProfile::by_name(
            self.profile.as_deref().unwrap_or("desk"),
        )?)
    }

    pub fn experiment(&self) -> ExperimentConfig {
        self.experiment
            .clone()
            .unwrap_or_else(ExperimentConfig::desk)
    }

    pub fn require<'a>(&self, value: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path> {
        match value {
            Some(p) => Ok(p),
            None => bail!("--{flag} is required (or set \"{flag}\" in the config file)"),
        }
    }
}

/// Sets the round budget and keeps patience below it.
pub fn set_rounds(exp: &mut ExperimentConfig, rounds: usize) {
    exp.federation.max_rounds = rounds;
    exp.federation.patience = exp.federation.patience.min(rounds.saturating_sub(1)).max(1);
}
