//! Hierarchical federated training: the common block is averaged over every
//! agent, the heads only among agents of the same machine group.

mod aggregate;
mod bundle;

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use aggregate::{adaptive_weights, aggregate, normalized, weights, Weighting};
pub use bundle::{write_bundle, write_round_log, BundleManifest, RoundLogRow};

use crate::error::{Error, Result};
use crate::model::{train_local, DiagnosisModel, LocalConfig, Sample, TaskState, F1_FLOOR};
use crate::nn::{ParamSet, Sgd};
use crate::seed::{self, stream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FederationConfig {
    /// Local epochs per round.
    pub local_epochs: usize,
    pub max_rounds: usize,
    /// Rounds without a mean-F1 gain above `min_delta` before stopping.
    pub patience: usize,
    pub min_delta: f64,
    pub lr: f64,
    pub momentum: f64,
    pub clip_norm: Option<f64>,
    pub batch_size: usize,
    pub weighting: Weighting,
    pub seed: u64,
}

impl Default for FederationConfig {
    fn default() -> Self {
        FederationConfig {
            local_epochs: 2,
            max_rounds: 30,
            patience: 5,
            min_delta: 1e-3,
            lr: crate::nn::DEFAULT_LR,
            momentum: crate::nn::DEFAULT_MOMENTUM,
            clip_norm: None,
            batch_size: 16,
            weighting: Weighting::Adaptive,
            seed: 0,
        }
    }
}

impl FederationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.local_epochs == 0
            || self.max_rounds == 0
            || self.batch_size == 0
            || self.patience == 0
        {
            return Err(Error::Config(
                "local epochs, rounds, patience and batch size must be positive".into(),
            ));
        }
        if self.patience >= self.max_rounds && self.max_rounds > 1 {
            return Err(Error::Config(format!(
                "patience {} must be below max_rounds {}",
                self.patience, self.max_rounds
            )));
        }
        if !(self.lr >= 0.0 && (0.0..1.0).contains(&self.momentum)) {
            return Err(Error::Config(
                "lr must be non-negative and momentum in [0, 1)".into(),
            ));
        }
        Ok(())
    }
}

/// One (factory, group) training party. Its samples never leave it.
pub struct Agent<'a> {
    pub agent_id: u32,
    pub factory_id: u32,
    pub group_id: u32,
    samples: Vec<Sample<'a>>,
    model: DiagnosisModel,
    task: TaskState,
    opt: Sgd<f32>,
    pub last_f1: Option<f64>,
}

impl<'a> Agent<'a> {
    pub fn new(
        agent_id: u32,
        factory_id: u32,
        group_id: u32,
        samples: Vec<Sample<'a>>,
        template: &DiagnosisModel,
    ) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::Data(format!(
                "agent {agent_id} has no training samples"
            )));
        }
        let labels: Vec<&[u8]> = samples.iter().map(|s| s.labels).collect();
        Ok(Agent {
            agent_id,
            factory_id,
            group_id,
            task: TaskState::from_labels(&labels, template.n_tasks)?,
            samples,
            model: template.clone(),
            opt: Sgd::new(0.0, 0.0),
            last_f1: None,
        })
    }

    pub fn sample_count(&self) -> usize {
        self.samples.len()
    }

    pub fn task_state(&self) -> &TaskState {
        &self.task
    }

    /// Parameters currently loaded by the agent.
    pub fn params(&self) -> &ParamSet<f32> {
        &self.model.params
    }

    /// Replaces the local parameters with the server's common block and the
    /// head block of this agent's group.
    pub fn load(&mut self, server: &ServerState) -> Result<()> {
        let theta = server.theta.get(&self.group_id).ok_or_else(|| {
            Error::Protocol(format!(
                "server holds no head block for group {}",
                self.group_id
            ))
        })?;
        self.model.params = ParamSet::merge(server.w_global.clone(), theta.clone())?;
        Ok(())
    }
}

/// What an agent sends after local training.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentUpload {
    pub agent_id: u32,
    pub params: ParamSet<f32>,
    /// Mean F1 over tasks with positives, floored; the floor when none has any.
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ServerState {
    pub w_global: ParamSet<f32>,
    pub theta: BTreeMap<u32, ParamSet<f32>>,
    pub round: usize,
    /// Per round, (agent id, uploaded F1).
    pub f1_history: Vec<Vec<(u32, f64)>>,
}

impl ServerState {
    /// Round-0 state: every group starts from the same initial heads.
    pub fn init(initial: &ParamSet<f32>, groups: impl IntoIterator<Item = u32>) -> Self {
        let (w, theta) = initial.split();
        ServerState {
            w_global: w,
            theta: groups.into_iter().map(|g| (g, theta.clone())).collect(),
            round: 0,
            f1_history: Vec::new(),
        }
    }

    /// Full parameter set served to machines of `group`.
    pub fn group_model(&self, group: u32) -> Result<ParamSet<f32>> {
        let theta = self
            .theta
            .get(&group)
            .ok_or_else(|| Error::Protocol(format!("no head block for group {group}")))?;
        ParamSet::merge(self.w_global.clone(), theta.clone())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundOutcome {
    pub mean_f1: f64,
    pub rows: Vec<RoundLogRow>,
}

/// Load, train, upload, then aggregate the common block over all agents and
/// each head block within its group. Any agent error aborts the round.
pub fn run_round(
    agents: &mut [Agent<'_>],
    server: &mut ServerState,
    cfg: &FederationConfig,
) -> Result<RoundOutcome> {
    if agents.is_empty() {
        return Err(Error::Data("a round needs at least one agent".into()));
    }
    let round = server.round + 1;
    let results: Vec<Result<(AgentUpload, RoundLogRow)>> = agents
        .par_iter_mut()
        .map(|a| {
            a.load(server)?;
            let local = LocalConfig {
                epochs: cfg.local_epochs,
                batch_size: cfg.batch_size,
                lr: cfg.lr,
                momentum: cfg.momentum,
                clip_norm: cfg.clip_norm,
                seed: seed::derive(
                    cfg.seed,
                    &[stream::SHUFFLE, a.agent_id as u64, round as u64],
                ),
            };
            let out = train_local(&mut a.model, &a.samples, &local, &mut a.task, &mut a.opt)?;
            a.last_f1 = out.mean_f1;
            let f1 = out.mean_f1.unwrap_or(F1_FLOOR).max(F1_FLOOR);
            let row = RoundLogRow {
                round,
                agent: a.agent_id,
                factory_id: a.factory_id,
                group_id: a.group_id,
                mean_f1: f1,
                loss: out.loss,
            };
            Ok((
                AgentUpload {
                    agent_id: a.agent_id,
                    params: a.model.params.clone(),
                    f1,
                },
                row,
            ))
        })
        .collect();
    let mut uploads = Vec::with_capacity(results.len());
    let mut rows = Vec::with_capacity(results.len());
    for r in results {
        let (u, row) = r?;
        uploads.push(u);
        rows.push(row);
    }
    let groups: Vec<u32> = agents.iter().map(|a| a.group_id).collect();
    apply_uploads(server, &uploads, &groups, cfg.weighting)?;
    server.round = round;
    server
        .f1_history
        .push(uploads.iter().map(|u| (u.agent_id, u.f1)).collect());
    let mean_f1 = uploads.iter().map(|u| u.f1).sum::<f64>() / uploads.len() as f64;
    Ok(RoundOutcome { mean_f1, rows })
}

/// Server side of a round. `groups[i]` is the group of `uploads[i]`.
pub fn apply_uploads(
    server: &mut ServerState,
    uploads: &[AgentUpload],
    groups: &[u32],
    scheme: Weighting,
) -> Result<()> {
    let split: Vec<(ParamSet<f32>, ParamSet<f32>)> =
        uploads.iter().map(|u| u.params.split()).collect();
    let f1: Vec<f64> = uploads.iter().map(|u| u.f1).collect();
    let commons: Vec<&ParamSet<f32>> = split.iter().map(|(w, _)| w).collect();
    server.w_global = aggregate(&commons, &weights(&f1, scheme))?;
    for (&g, theta) in server.theta.iter_mut() {
        let idx: Vec<usize> = (0..uploads.len()).filter(|&i| groups[i] == g).collect();
        if idx.is_empty() {
            continue;
        }
        let heads: Vec<&ParamSet<f32>> = idx.iter().map(|&i| &split[i].1).collect();
        let gf1: Vec<f64> = idx.iter().map(|&i| f1[i]).collect();
        *theta = aggregate(&heads, &weights(&gf1, scheme))?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingOutcome {
    /// State after the round with the best mean F1.
    pub best: ServerState,
    pub best_round: usize,
    pub best_mean_f1: f64,
    /// Mean F1 of the initial parameters, before any round.
    pub initial_mean_f1: f64,
    pub rounds_run: usize,
    pub log: Vec<RoundLogRow>,
}

/// Mean uploaded F1 of the agents under the current server parameters,
/// without training.
pub fn evaluate_agents(agents: &mut [Agent<'_>], server: &ServerState) -> Result<f64> {
    let f: Vec<f64> = agents
        .par_iter_mut()
        .map(|a| {
            a.load(server)?;
            let mut task = a.task.clone();
            let out = train_local(
                &mut a.model,
                &a.samples,
                &LocalConfig {
                    epochs: 0,
                    ..LocalConfig::default()
                },
                &mut task,
                &mut Sgd::new(0.0, 0.0),
            )?;
            Ok(out.mean_f1.unwrap_or(F1_FLOOR).max(F1_FLOOR))
        })
        .collect::<Result<_>>()?;
    Ok(f.iter().sum::<f64>() / f.len() as f64)
}

/// Rounds until the mean agent F1 stalls for `patience` rounds or
/// `max_rounds` is reached.
pub fn run_training(
    agents: &mut [Agent<'_>],
    initial: &ParamSet<f32>,
    cfg: &FederationConfig,
) -> Result<TrainingOutcome> {
    cfg.validate()?;
    let mut groups: Vec<u32> = agents.iter().map(|a| a.group_id).collect();
    groups.sort_unstable();
    groups.dedup();
    let mut server = ServerState::init(initial, groups);
    let initial_mean_f1 = evaluate_agents(agents, &server)?;
    let mut best = (server.clone(), 0usize, f64::NEG_INFINITY);
    let mut stale = 0;
    let mut log = Vec::new();
    while server.round < cfg.max_rounds {
        let out = run_round(agents, &mut server, cfg)?;
        log.extend(out.rows);
        if out.mean_f1 > best.2 + cfg.min_delta || best.1 == 0 {
            best = (server.clone(), server.round, out.mean_f1);
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.patience {
                break;
            }
        }
    }
    Ok(TrainingOutcome {
        best_round: best.1,
        best_mean_f1: best.2,
        best: best.0,
        initial_mean_f1,
        rounds_run: server.round,
        log,
    })
}
