use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use fspn_core::synth::ScenarioConfig;

fn fspn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fspn"))
        .args(args)
        .env("FSPN_WORKERS", "2")
        .output()
        .unwrap()
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "exit {:?}\n{}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Four desk machines with 30 records each, written as a scenario file.
fn small_scenario(dir: &Path) -> PathBuf {
    let mut sc = ScenarioConfig::desk_default(3);
    sc.machines.retain(|m| [1, 4, 8, 9].contains(&m.machine_id));
    for m in &mut sc.machines {
        m.sample_count = 30;
    }
    let path = dir.join("scenario.json");
    std::fs::write(&path, serde_json::to_string_pretty(&sc).unwrap()).unwrap();
    path
}

fn entries(dir: &Path) -> Vec<String> {
    let mut v: Vec<String> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    v.sort();
    v
}

#[test]
fn missing_scenario_fails_without_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("data");
    let missing = tmp.path().join("nope.json");
    let r = fspn(&["synth", "--scenario", s(&missing), "--out", s(&out)]);
    assert_eq!(r.status.code(), Some(1));
    let err = String::from_utf8_lossy(&r.stderr);
    assert!(err.contains("fspn synth: error"), "{err}");
    assert!(err.contains("nope.json"), "{err}");
    assert!(entries(tmp.path()).is_empty(), "{:?}", entries(tmp.path()));
}

#[test]
fn usage_and_config_errors() {
    let tmp = tempfile::tempdir().unwrap();
    // Unknown flag: clap's usage exit code.
    assert_eq!(fspn(&["synth", "--bogus"]).status.code(), Some(2));
    // Missing required input names the flag.
    let r = fspn(&["cluster", "--out", s(&tmp.path().join("c"))]);
    assert_eq!(r.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&r.stderr).contains("--data"));
    // Unknown profile and unknown config fields are rejected.
    let r = fspn(&[
        "synth",
        "--profile",
        "huge",
        "--out",
        s(&tmp.path().join("d")),
    ]);
    assert_eq!(r.status.code(), Some(1));
    let cfg = tmp.path().join("run.json");
    std::fs::write(&cfg, r#"{"seed": 1, "colour": "blue"}"#).unwrap();
    let r = fspn(&[
        "synth",
        "--config",
        s(&cfg),
        "--out",
        s(&tmp.path().join("e")),
    ]);
    assert_eq!(r.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&r.stderr).contains("colour"));
    assert_eq!(entries(tmp.path()), vec!["run.json"]);
}

#[test]
fn refuses_to_replace_foreign_directory() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("precious");
    std::fs::create_dir(&out).unwrap();
    std::fs::write(out.join("notes.txt"), "keep me").unwrap();
    let scenario = small_scenario(tmp.path());
    let r = fspn(&["synth", "--scenario", s(&scenario), "--out", s(&out)]);
    assert_eq!(r.status.code(), Some(1));
    assert_eq!(entries(&out), vec!["notes.txt"]);
}

#[test]
fn stages_run_end_to_end_and_replay_identically() {
    let tmp = tempfile::tempdir().unwrap();
    let t = tmp.path();
    let scenario = small_scenario(t);
    let (data, clusters, model) = (t.join("data"), t.join("clusters"), t.join("model"));

    ok(&fspn(&[
        "synth",
        "--scenario",
        s(&scenario),
        "--seed",
        "3",
        "--out",
        s(&data),
    ]));
    assert!(data.join("scenario.json").is_file());
    assert!(data.join("manifest.json").is_file());

    let r = fspn(&["cluster", "--data", s(&data), "--out", s(&clusters)]);
    assert!(
        matches!(r.status.code(), Some(0) | Some(3)),
        "{}",
        String::from_utf8_lossy(&r.stderr)
    );
    let groups: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(clusters.join("groups.json")).unwrap())
            .unwrap();
    assert_eq!(groups["groups"].as_object().unwrap().len(), 4);

    let train = [
        "train",
        "--data",
        s(&data),
        "--clusters",
        s(&clusters),
        "--rounds",
        "2",
        "--out",
        s(&model),
    ];
    ok(&fspn(&train));
    for f in [
        "model/manifest.json",
        "model/common.ckpt",
        "model/normalization.json",
        "rounds.csv",
    ] {
        assert!(model.join(f).is_file(), "{f} missing");
    }
    let manifest = std::fs::read(model.join("manifest.json")).unwrap();
    let common = std::fs::read(model.join("model/common.ckpt")).unwrap();
    // Same inputs and seed, same bytes.
    ok(&fspn(&train));
    assert_eq!(
        std::fs::read(model.join("manifest.json")).unwrap(),
        manifest
    );
    assert_eq!(
        std::fs::read(model.join("model/common.ckpt")).unwrap(),
        common
    );
    let stage: serde_json::Value = serde_json::from_slice(&manifest).unwrap();
    assert_eq!(stage["stage"], "train");
    assert_eq!(stage["config"]["experiment"]["federation"]["max_rounds"], 2);
    assert!(
        stage["outputs"]["model/common.ckpt"]
            .as_str()
            .unwrap()
            .len()
            == 64
    );

    let eval = t.join("eval");
    ok(&fspn(&[
        "evaluate",
        "--data",
        s(&data),
        "--folds",
        "2",
        "--rounds",
        "2",
        "--method",
        "single_machine",
        "--method",
        "personalized_fl",
        "--out",
        s(&eval),
    ]));
    for f in [
        "rows.csv",
        "summary.csv",
        "summary.json",
        "training.csv",
        "groups_fold0.json",
        "groups_fold1.json",
    ] {
        assert!(eval.join(f).is_file(), "{f} missing");
    }
    let rows = std::fs::read_to_string(eval.join("rows.csv")).unwrap();
    assert!(rows
        .lines()
        .skip(1)
        .all(|l| l.starts_with("single_machine") || l.starts_with("personalized_fl")));

    let cmp = t.join("compare");
    ok(&fspn(&[
        "compare",
        "--data",
        s(&data),
        "--folds",
        "2",
        "--fold",
        "1",
        "--rounds",
        "2",
        "--out",
        s(&cmp),
    ]));
    for f in ["comparison.csv", "fault_types.csv", "bands.csv"] {
        assert!(cmp.join(f).is_file(), "{f} missing");
    }
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(cmp.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["folds"], serde_json::json!([1]));
    assert_eq!(summary["method_mean_f1"].as_object().unwrap().len(), 4);

    let placed = t.join("placed");
    let r = fspn(&[
        "assign",
        "--data",
        s(&data),
        "--clusters",
        s(&clusters),
        "--model",
        s(&model),
        "--machine",
        "4",
        "--out",
        s(&placed),
    ]);
    ok(&r);
    let stdout = String::from_utf8_lossy(&r.stdout);
    let group = groups["groups"]["4"].as_u64().unwrap();
    assert!(
        stdout.contains(&format!("machine 4: group {group}")),
        "{stdout}"
    );
    let a: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(placed.join("assignments.json")).unwrap())
            .unwrap();
    assert!(a[0]["head_checkpoint"].as_str().unwrap().ends_with(".ckpt"));

    // No staging directories are left behind.
    assert!(
        entries(t).iter().all(|e| !e.contains("partial")),
        "{:?}",
        entries(t)
    );
}

#[test]
fn config_file_supplies_flags() {
    let tmp = tempfile::tempdir().unwrap();
    let scenario = small_scenario(tmp.path());
    let out = tmp.path().join("data");
    let cfg = tmp.path().join("run.json");
    let body = serde_json::json!({ "scenario": scenario, "seed": 9, "out": out });
    std::fs::write(&cfg, body.to_string()).unwrap();
    ok(&fspn(&["synth", "--config", s(&cfg)]));
    let sc: ScenarioConfig =
        serde_json::from_str(&std::fs::read_to_string(out.join("scenario.json")).unwrap()).unwrap();
    assert_eq!(sc.master_seed, 9);
    // The recorded configuration replays the stage to the same bytes.
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    let replay = tmp.path().join("replay.json");
    std::fs::write(&replay, manifest["config"].to_string()).unwrap();
    let before = std::fs::read(out.join("manifest.json")).unwrap();
    ok(&fspn(&["synth", "--config", s(&replay)]));
    assert_eq!(std::fs::read(out.join("manifest.json")).unwrap(), before);
}
