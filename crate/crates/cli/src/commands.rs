//! The stages. Inputs are read and checked before the output directory is
//! staged, so bad inputs never leave anything on disk.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{bail, Context, Result};
use fspn_core::dataset::{load_dataset, save_dataset};
use fspn_core::dsp::{FeatureExtractor, IndexVector};
use fspn_core::eval::{
    assign_new_machine, fault_rate_bands, federations, make_folds, method_means, run_fold,
    summarize, train_federation, write_bands, write_comparison, write_fault_types, write_rows,
    write_summary, ExperimentData, Method, NewMachineAssignment,
};
use fspn_core::fedclust::{cluster_fleet, collect_indices, CentroidExport, GroupAssignment};
use fspn_core::fedcore::{write_bundle, write_round_log, BundleManifest};
use fspn_core::synth::{generate_scenario, ScenarioConfig};
use serde::Serialize;

use crate::config::RunConfig;
use crate::stage::{read_json, write_json, Staging};

const CENTROIDS: &str = "centroids.json";
const GROUPS: &str = "groups.json";
const MODEL_DIR: &str = "model";
const NORMALIZATION: &str = "normalization.json";

fn out_dir(cfg: &RunConfig) -> Result<&Path> {
    cfg.require(&cfg.out, "out")
}

fn load_data(cfg: &RunConfig) -> Result<(ScenarioConfig, fspn_core::Dataset)> {
    let dir = cfg.require(&cfg.data, "data")?;
    load_dataset(dir).with_context(|| format!("loading dataset {}", dir.display()))
}

pub fn synth(cfg: &RunConfig) -> Result<Vec<String>> {
    let scenario = match &cfg.scenario {
        Some(path) => {
            let mut s: ScenarioConfig = read_json(path)?;
            if let Some(seed) = cfg.seed {
                s.master_seed = seed;
            }
            s
        }
        None => ScenarioConfig::reference_fleet(cfg.sample_scale.unwrap_or(0.25), cfg.seed()),
    };
    scenario.validate()?;
    let out = out_dir(cfg)?;
    let dataset = generate_scenario(&scenario)?;
    let stage = Staging::new(out)?;
    save_dataset(stage.path(), &scenario, &dataset)?;
    let records: usize = dataset.values().map(Vec::len).sum();
    eprintln!("synth: {} machines, {records} records", dataset.len());
    // Record the seed actually used, which a scenario file may supply.
    let resolved = RunConfig {
        seed: Some(scenario.master_seed),
        ..cfg.clone()
    };
    stage.commit("synth", &resolved, &[])?;
    Ok(Vec::new())
}

pub fn cluster(cfg: &RunConfig) -> Result<Vec<String>> {
    let (scenario, dataset) = load_data(cfg)?;
    let out = out_dir(cfg)?;
    let fx = FeatureExtractor::new(&scenario.channels, &cfg.feature_profile()?)?;
    let machines = collect_indices(&scenario, &dataset, &fx)?;
    let exp = cfg.experiment();
    let outcome = cluster_fleet(
        &machines,
        IndexVector::names(scenario.channels.len()),
        &exp.kmeans,
    )?;
    let mut warnings = Vec::new();
    if !outcome.export.converged {
        warnings.push(format!(
            "k-means stopped at its {}-round cap before converging",
            outcome.export.rounds
        ));
    }
    if !outcome.assignment.flagged.is_empty() {
        warnings.push(format!(
            "machines {:?} have no normal records and were grouped from all records",
            outcome.assignment.flagged
        ));
    }
    let stage = Staging::new(out)?;
    outcome.export.save(&stage.path().join(CENTROIDS))?;
    outcome.assignment.save(&stage.path().join(GROUPS))?;
    for g in outcome.assignment.group_ids() {
        eprintln!(
            "cluster: group {g}: machines {:?}",
            outcome.assignment.members(g)
        );
    }
    stage.commit("cluster", cfg, &warnings)?;
    Ok(warnings)
}

pub fn train(cfg: &RunConfig) -> Result<Vec<String>> {
    let (scenario, dataset) = load_data(cfg)?;
    let clusters = cfg.require(&cfg.clusters, "clusters")?;
    let groups = GroupAssignment::load(&clusters.join(GROUPS))?;
    let export = CentroidExport::load(&clusters.join(CENTROIDS))?;
    let out = out_dir(cfg)?;
    let exp = cfg.experiment();
    let data = ExperimentData::from_dataset(scenario, dataset, cfg.feature_profile()?)?;
    let fed = federations(Method::PersonalizedFl, &data.scenario, &groups)?.remove(0);
    let counts: BTreeMap<u32, usize> = data.dataset.iter().map(|(&id, r)| (id, r.len())).collect();
    let (trained, _) = train_federation(&data, &fed, &exp, &|id| (0..counts[&id]).collect())?;

    let stage = Staging::new(out)?;
    let model_dir = stage.path().join(MODEL_DIR);
    let hash = fspn_core::eval::config_hash(cfg)?;
    let profile = cfg.profile.as_deref().unwrap_or("desk");
    write_bundle(
        &model_dir,
        &trained.training.best,
        Some(CENTROIDS),
        profile,
        cfg.seed(),
        &hash,
    )?;
    export.save(&model_dir.join(CENTROIDS))?;
    write_json(&model_dir.join(NORMALIZATION), &trained.stats)?;
    write_round_log(&stage.path().join("rounds.csv"), &trained.training.log)?;
    eprintln!(
        "train: {} rounds, best round {} with mean F1 {:.3}",
        trained.training.rounds_run, trained.training.best_round, trained.training.best_mean_f1
    );
    stage.commit("train", cfg, &[])?;
    Ok(Vec::new())
}

#[derive(Serialize)]
struct EvaluationSummary {
    seed: u64,
    config_hash: String,
    folds: Vec<usize>,
    method_mean_f1: BTreeMap<String, f64>,
}

#[derive(Serialize)]
struct TrainingRow {
    method: String,
    fold: usize,
    federation: usize,
    rounds_run: usize,
    best_round: usize,
}

/// Cross-validation; `compare` runs all methods and adds the cross-method tables.
pub fn evaluate(cfg: &RunConfig, compare: bool) -> Result<Vec<String>> {
    let (scenario, dataset) = load_data(cfg)?;
    let out = out_dir(cfg)?;
    let mut exp = cfg.experiment();
    exp.methods = if compare {
        Method::ALL.to_vec()
    } else {
        let names = cfg
            .methods
            .clone()
            .unwrap_or_else(|| vec!["personalized_fl".into()]);
        names
            .iter()
            .map(|m| Method::parse(m))
            .collect::<fspn_core::Result<_>>()?
    };
    let plan = make_folds(&dataset, exp.folds, cfg.seed())?;
    let folds: Vec<usize> = match cfg.fold {
        Some(f) if f >= exp.folds => bail!("--fold {f} is out of range for {} folds", exp.folds),
        Some(f) => vec![f],
        None => (0..exp.folds).collect(),
    };
    let data = ExperimentData::from_dataset(scenario, dataset, cfg.feature_profile()?)?;

    let mut rows = Vec::new();
    let mut training = Vec::new();
    let mut groups = Vec::new();
    for &fold in &folds {
        let part = run_fold(&data, &plan, fold, &exp)?;
        eprintln!("evaluate: fold {fold} done");
        rows.extend(part.rows);
        training.extend(
            part.training
                .into_iter()
                .map(|(m, fold, fi, rounds_run, best_round)| TrainingRow {
                    method: m.name().into(),
                    fold,
                    federation: fi,
                    rounds_run,
                    best_round,
                }),
        );
        groups.extend(part.groups.into_iter().map(|g| (fold, g)));
    }
    let summary = summarize(&rows);
    let means = method_means(&summary);

    let stage = Staging::new(out)?;
    let dir = stage.path();
    write_rows(&dir.join("rows.csv"), &rows)?;
    write_summary(&dir.join("summary.csv"), &summary)?;
    let mut w = csv::Writer::from_path(dir.join("training.csv"))?;
    for t in &training {
        w.serialize(t)?;
    }
    w.flush()?;
    for (fold, g) in &groups {
        g.save(&dir.join(format!("groups_fold{fold}.json")))?;
    }
    if compare {
        write_comparison(&dir.join("comparison.csv"), &summary, &exp.methods)?;
        write_fault_types(&dir.join("fault_types.csv"), &summary)?;
        write_bands(
            &dir.join("bands.csv"),
            &fault_rate_bands(&summary, &data.scenario),
        )?;
    }
    write_json(
        &dir.join("summary.json"),
        &EvaluationSummary {
            seed: cfg.seed(),
            config_hash: fspn_core::eval::config_hash(cfg)?,
            folds: folds.clone(),
            method_mean_f1: means
                .iter()
                .map(|(m, v)| (m.name().to_string(), *v))
                .collect(),
        },
    )?;
    for (m, v) in &means {
        eprintln!("{}: mean F1 {v:.3}", m.name());
    }
    stage.commit(if compare { "compare" } else { "evaluate" }, cfg, &[])?;
    Ok(Vec::new())
}

#[derive(Serialize)]
struct PlacedMachine {
    machine_id: u32,
    #[serde(flatten)]
    assignment: NewMachineAssignment,
}

pub fn assign(cfg: &RunConfig) -> Result<Vec<String>> {
    let (scenario, dataset) = load_data(cfg)?;
    let clusters = cfg.require(&cfg.clusters, "clusters")?;
    let export = CentroidExport::load(&clusters.join(CENTROIDS))?;
    let bundle = match &cfg.model {
        Some(dir) => {
            let dir = dir.join(MODEL_DIR);
            Some((BundleManifest::load(&dir.join("manifest.json"))?, dir))
        }
        None => None,
    };
    let out = out_dir(cfg)?;
    let ids: Vec<u32> = match &cfg.machines {
        Some(ids) => ids.clone(),
        None => dataset.keys().copied().collect(),
    };
    let fx = FeatureExtractor::new(&scenario.channels, &cfg.feature_profile()?)?;
    let mut placed = Vec::new();
    for id in ids {
        let records = dataset
            .get(&id)
            .with_context(|| format!("machine {id} is not in the dataset"))?;
        let indices = records
            .iter()
            .map(|r| fx.indices(r).map(|v| v.0))
            .collect::<fspn_core::Result<Vec<_>>>()?;
        let assignment = assign_new_machine(
            &indices,
            &export,
            bundle.as_ref().map(|(m, d)| (m, d.as_path())),
        )
        .with_context(|| format!("placing machine {id}"))?;
        println!("machine {id}: group {}", assignment.group_id);
        placed.push(PlacedMachine {
            machine_id: id,
            assignment,
        });
    }
    let stage = Staging::new(out)?;
    write_json(&stage.path().join("assignments.json"), &placed)?;
    stage.commit("assign", cfg, &[])?;
    Ok(Vec::new())
}
