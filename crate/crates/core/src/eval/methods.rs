//! The four training layouts, all driven through the federated trainer.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::folds::FoldPlan;
use super::report::ResultRow;
use crate::dsp::{
    FeatureBundle, FeatureExtractor, FeatureProfile, FeatureStats, IndexVector, ModelInput,
};
use crate::error::{Error, Result};
use crate::fedclust::{cluster_fleet, GroupAssignment, KMeansConfig, MachineIndices};
use crate::fedcore::{run_training, Agent, FederationConfig, TrainingOutcome, Weighting};
use crate::model::{
    build_model_with, metric_counts, ArchConfig, DiagnosisModel, Sample, THRESHOLD,
};
use crate::seed::{self, stream};
use crate::stats::MomentSums;
use crate::synth::{generate_scenario, Dataset, FaultType, ScenarioConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    SingleMachine,
    VanillaFl,
    ClusteringFl,
    PersonalizedFl,
}

impl Method {
    pub const ALL: [Method; 4] = [
        Method::SingleMachine,
        Method::VanillaFl,
        Method::ClusteringFl,
        Method::PersonalizedFl,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::SingleMachine => "single_machine",
            Method::VanillaFl => "vanilla_fl",
            Method::ClusteringFl => "clustering_fl",
            Method::PersonalizedFl => "personalized_fl",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s || m.name().replace('_', "-") == s)
            .ok_or_else(|| Error::Config(format!("unknown method '{s}'")))
    }

    pub fn needs_groups(self) -> bool {
        matches!(self, Method::ClusteringFl | Method::PersonalizedFl)
    }
}

/// One agent of a federation: the machines it pools.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentLayout {
    pub agent_id: u32,
    pub factory_id: u32,
    pub group_id: u32,
    pub machines: Vec<u32>,
}

/// A set of agents trained together; normalisation is fitted over `scope`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Federation {
    pub scope: Vec<u32>,
    pub agents: Vec<AgentLayout>,
    pub weighting: Weighting,
}

/// Agent layouts of `method`.
pub fn federations(
    method: Method,
    scenario: &ScenarioConfig,
    groups: &GroupAssignment,
) -> Result<Vec<Federation>> {
    let machines: Vec<(u32, u32)> = scenario
        .machines
        .iter()
        .map(|m| (m.machine_id, m.factory_id))
        .collect();
    let group_of = |id: u32| {
        groups
            .group(id)
            .ok_or_else(|| Error::Data(format!("machine {id} has no group")))
    };
    // (factory, group) -> machines, for machines matching `keep`.
    let pool = |keep: &dyn Fn(u32) -> Result<Option<u32>>| -> Result<Vec<AgentLayout>> {
        let mut by: BTreeMap<(u32, u32), Vec<u32>> = BTreeMap::new();
        for &(id, factory) in &machines {
            if let Some(g) = keep(id)? {
                by.entry((factory, g)).or_default().push(id);
            }
        }
        Ok(by
            .into_iter()
            .map(|((factory_id, group_id), machines)| AgentLayout {
                agent_id: factory_id * 1000 + group_id,
                factory_id,
                group_id,
                machines,
            })
            .collect())
    };
    let all: Vec<u32> = machines.iter().map(|m| m.0).collect();
    Ok(match method {
        Method::SingleMachine => machines
            .iter()
            .map(|&(id, factory)| Federation {
                scope: vec![id],
                agents: vec![AgentLayout {
                    agent_id: id,
                    factory_id: factory,
                    group_id: 0,
                    machines: vec![id],
                }],
                weighting: Weighting::Uniform,
            })
            .collect(),
        Method::VanillaFl => vec![Federation {
            scope: all,
            agents: pool(&|_| Ok(Some(0)))?,
            weighting: Weighting::Uniform,
        }],
        Method::ClusteringFl => {
            let mut ids: Vec<u32> = all.iter().map(|&m| group_of(m)).collect::<Result<_>>()?;
            ids.sort_unstable();
            ids.dedup();
            ids.into_iter()
                .map(|g| {
                    let agents = pool(&|m| Ok((group_of(m)? == g).then_some(g)))?;
                    Ok(Federation {
                        scope: agents.iter().flat_map(|a| a.machines.clone()).collect(),
                        agents,
                        weighting: Weighting::Uniform,
                    })
                })
                .collect::<Result<_>>()?
        }
        Method::PersonalizedFl => vec![Federation {
            scope: all,
            agents: pool(&|m| group_of(m).map(Some))?,
            weighting: Weighting::Adaptive,
        }],
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub federation: FederationConfig,
    pub kmeans: KMeansConfig,
    pub folds: usize,
    pub arch: ArchConfig,
    pub methods: Vec<Method>,
}

/// Learning rate used by the desk experiment. Adaptive weighting can hand
/// one agent most of the aggregate, so steps are kept small and clipped.
pub const DESK_LR: f64 = 0.003;
pub const DESK_CLIP_NORM: f64 = 1.0;

impl ExperimentConfig {
    pub fn desk() -> Self {
        ExperimentConfig {
            federation: FederationConfig {
                lr: DESK_LR,
                clip_norm: Some(DESK_CLIP_NORM),
                ..FederationConfig::default()
            },
            kmeans: KMeansConfig::default(),
            folds: 5,
            arch: ArchConfig::desk(),
            methods: Method::ALL.to_vec(),
        }
    }
}

/// A scenario with its records featurised once.
pub struct ExperimentData {
    pub scenario: ScenarioConfig,
    pub dataset: Dataset,
    pub profile: FeatureProfile,
    pub bundles: BTreeMap<u32, Vec<FeatureBundle>>,
}

impl ExperimentData {
    pub fn generate(scenario: ScenarioConfig, profile: FeatureProfile) -> Result<Self> {
        let dataset = generate_scenario(&scenario)?;
        Self::from_dataset(scenario, dataset, profile)
    }

    pub fn from_dataset(
        scenario: ScenarioConfig,
        dataset: Dataset,
        profile: FeatureProfile,
    ) -> Result<Self> {
        let fx = FeatureExtractor::new(&scenario.channels, &profile)?;
        let bundles = dataset
            .iter()
            .map(|(&id, recs)| Ok((id, fx.featurize_all(recs)?)))
            .collect::<Result<_>>()?;
        Ok(ExperimentData {
            scenario,
            dataset,
            profile,
            bundles,
        })
    }

    pub fn n_tasks(&self) -> usize {
        self.scenario.fault_types
    }

    pub fn machine_indices(&self, keep: impl Fn(u32, usize) -> bool) -> Vec<MachineIndices> {
        self.dataset
            .iter()
            .map(|(&id, recs)| {
                let idx: Vec<usize> = (0..recs.len()).filter(|&i| keep(id, i)).collect();
                MachineIndices {
                    machine_id: id,
                    factory_id: self.scenario.machine(id).map_or(0, |m| m.factory_id),
                    indices: idx
                        .iter()
                        .map(|&i| self.bundles[&id][i].indices.0.clone())
                        .collect(),
                    normal: idx.iter().map(|&i| recs[i].is_normal()).collect(),
                }
            })
            .collect()
    }

    /// Groups from the training records of `fold` only.
    pub fn groups_for_fold(
        &self,
        plan: &FoldPlan,
        fold: usize,
        cfg: &KMeansConfig,
    ) -> Result<GroupAssignment> {
        let machines = self.machine_indices(|id, i| plan.assignment[&id][i] as usize != fold);
        let names = IndexVector::names(self.scenario.channels.len());
        Ok(cluster_fleet(&machines, names, cfg)?.assignment)
    }
}

/// Outcome of one federation on one fold.
#[derive(Debug, Clone)]
pub struct FederationRun {
    pub training: TrainingOutcome,
    pub rows: Vec<ResultRow>,
}

/// A trained federation with the normalisation it was trained under.
#[derive(Debug, Clone)]
pub struct TrainedFederation {
    pub training: TrainingOutcome,
    pub stats: FeatureStats,
    pub template: DiagnosisModel,
}

/// Trains one federation on the records `train(machine_id)` selects.
/// Normalisation is fitted on those records over the federation's scope.
pub fn train_federation(
    data: &ExperimentData,
    fed: &Federation,
    cfg: &ExperimentConfig,
    train: &dyn Fn(u32) -> Vec<usize>,
) -> Result<(TrainedFederation, BTreeMap<u32, Vec<ModelInput>>)> {
    let mut moments: Option<Vec<MomentSums>> = None;
    for &id in &fed.scope {
        let b = &data.bundles[&id];
        if let Some(m) = FeatureStats::moments(train(id).into_iter().map(|i| &b[i])) {
            match moments.as_mut() {
                None => moments = Some(m),
                Some(acc) => acc.iter_mut().zip(&m).for_each(|(a, b)| a.merge(b)),
            }
        }
    }
    let stats = FeatureStats::from_moments(
        &moments.ok_or_else(|| Error::Data("federation has no training records".into()))?,
    );
    let inputs: BTreeMap<u32, Vec<ModelInput>> = fed
        .scope
        .iter()
        .map(|&id| {
            (
                id,
                data.bundles[&id]
                    .par_iter()
                    .map(|b| stats.normalize(b))
                    .collect(),
            )
        })
        .collect();

    let template = build_model_with(
        &data.profile,
        &cfg.arch,
        data.n_tasks(),
        seed::derive(cfg.federation.seed, &[stream::INIT]),
    )?;
    let mut agents = Vec::with_capacity(fed.agents.len());
    for a in &fed.agents {
        let samples: Vec<Sample<'_>> = a
            .machines
            .iter()
            .flat_map(|&id| {
                let recs = &data.dataset[&id];
                let inp = &inputs[&id];
                train(id).into_iter().map(move |i| Sample {
                    input: &inp[i],
                    labels: &recs[i].labels,
                })
            })
            .collect();
        agents.push(Agent::new(
            a.agent_id,
            a.factory_id,
            a.group_id,
            samples,
            &template,
        )?);
    }
    let mut fcfg = cfg.federation.clone();
    fcfg.weighting = fed.weighting;
    let training = run_training(&mut agents, &template.params, &fcfg)?;
    drop(agents);
    Ok((
        TrainedFederation {
            training,
            stats,
            template,
        },
        inputs,
    ))
}

/// Trains one federation on the training records of `fold` and scores each
/// of its machines on the held-out records with its group's model.
pub fn run_federation(
    data: &ExperimentData,
    plan: &FoldPlan,
    fold: usize,
    fed: &Federation,
    method: Method,
    cfg: &ExperimentConfig,
) -> Result<FederationRun> {
    let (trained, inputs) = train_federation(data, fed, cfg, &|id| plan.train_indices(id, fold))?;
    let TrainedFederation {
        training, template, ..
    } = trained;

    let mut rows = Vec::new();
    for a in &fed.agents {
        let model = template.with_params(training.best.group_model(a.group_id)?)?;
        for &id in &a.machines {
            let test = plan.test_indices(id, fold);
            let recs = &data.dataset[&id];
            let preds = test
                .par_iter()
                .map(|&i| model.predict(&inputs[&id][i]))
                .collect::<Result<Vec<_>>>()?;
            let labels: Vec<&[u8]> = test.iter().map(|&i| recs[i].labels.as_slice()).collect();
            let counts = metric_counts(&preds, &labels, THRESHOLD);
            let spec = data
                .scenario
                .machine(id)
                .ok_or_else(|| Error::Data(format!("machine {id} is not in the scenario")))?;
            for (t, c) in counts.iter().enumerate() {
                let fault = FaultType::ALL[t];
                if spec.positive_count(fault) == 0 {
                    continue;
                }
                rows.push(ResultRow::new(method, fold, id, fault, a.group_id, *c));
            }
        }
    }
    Ok(FederationRun { training, rows })
}

/// Per-method results of a full cross-validation.
#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub rows: Vec<ResultRow>,
    /// (method, fold, federation index, rounds run, best round).
    pub training: Vec<(Method, usize, usize, usize, usize)>,
    pub groups: Vec<GroupAssignment>,
}

/// Runs every configured method on every fold.
pub fn run_experiment(
    data: &ExperimentData,
    plan: &FoldPlan,
    cfg: &ExperimentConfig,
) -> Result<ExperimentResult> {
    let mut out = ExperimentResult {
        rows: Vec::new(),
        training: Vec::new(),
        groups: Vec::new(),
    };
    for fold in 0..plan.folds {
        let part = run_fold(data, plan, fold, cfg)?;
        out.rows.extend(part.rows);
        out.training.extend(part.training);
        out.groups.extend(part.groups);
    }
    Ok(out)
}

/// Runs every configured method on one fold.
pub fn run_fold(
    data: &ExperimentData,
    plan: &FoldPlan,
    fold: usize,
    cfg: &ExperimentConfig,
) -> Result<ExperimentResult> {
    if fold >= plan.folds {
        return Err(Error::Usage(format!(
            "fold {fold} out of range for a {}-fold plan",
            plan.folds
        )));
    }
    let groups = if cfg.methods.iter().any(|m| m.needs_groups()) {
        data.groups_for_fold(plan, fold, &cfg.kmeans)?
    } else {
        GroupAssignment::single(data.dataset.keys().copied())
    };
    let mut out = ExperimentResult {
        rows: Vec::new(),
        training: Vec::new(),
        groups: Vec::new(),
    };
    for &method in &cfg.methods {
        for (fi, fed) in federations(method, &data.scenario, &groups)?
            .iter()
            .enumerate()
        {
            let run = run_federation(data, plan, fold, fed, method, cfg)?;
            out.training.push((
                method,
                fold,
                fi,
                run.training.rounds_run,
                run.training.best_round,
            ));
            out.rows.extend(run.rows);
        }
    }
    out.groups.push(groups);
    Ok(out)
}
