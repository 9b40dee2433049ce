use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn hamflow(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hamflow"))
        .args(args)
        .current_dir(cwd)
        .env_remove("HAMFLOW_SEED")
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn manifest_hash(o: &Output) -> String {
    stdout(o).lines().find_map(|l| l.strip_prefix("manifest ")).expect("manifest line").to_string()
}

fn write_config(dir: &Path, name: &str, system: &str, counts: (usize, usize, usize)) -> PathBuf {
    let path = dir.join(name);
    let text = format!(
        r#"{{
  "schema_version": 1,
  "seed": 3,
  "dataset": {{"system": {system}, "counts": {{"train": {}, "validation": {}, "test": {}}}, "substeps_per_dt": 4}},
  "training": {{"model": {{"hidden": 6, "n_layers": 1, "encoder_depth": 1, "encoder_width": 4}}, "epochs": 2, "batch_size": 4}},
  "paths": {{"data_dir": "data", "out_dir": "out"}}
}}"#,
        counts.0, counts.1, counts.2
    );
    std::fs::write(&path, text).unwrap();
    path
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn gen_is_reproducible_and_creates_directories() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "tfim.json", r#"{"kind": "tfim", "n_qubits": 3}"#, (4, 1, 1));
    let cfg = cfg.to_str().unwrap();
    let a = hamflow(&["gen", "--config", cfg, "--seed", "7", "--out", "nested/a"], tmp.path());
    assert!(a.status.success(), "{}", stderr(&a));
    let b = hamflow(&["gen", "--config", cfg, "--seed", "7", "--out", "nested/b"], tmp.path());
    assert_eq!(manifest_hash(&a), manifest_hash(&b));
    assert!(stdout(&a).contains("records 6"));
    assert!(tmp.path().join("nested/a/resolved_config.json").exists());
    let resolved = read_json(&tmp.path().join("nested/a/resolved_config.json"));
    assert_eq!(resolved["seed"], 7);
    assert!(resolved["dataset"]["grid"].is_object());

    let other = Command::new(env!("CARGO_BIN_EXE_hamflow"))
        .args(["gen", "--config", cfg, "--out", "nested/c"])
        .current_dir(tmp.path())
        .env("HAMFLOW_SEED", "7")
        .output()
        .unwrap();
    assert_eq!(manifest_hash(&other), manifest_hash(&a));
    let file_seed = hamflow(&["gen", "--config", cfg, "--out", "nested/d"], tmp.path());
    assert_ne!(manifest_hash(&file_seed), manifest_hash(&a));
}

#[test]
fn empty_dataset_is_fine() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "empty.json", r#"{"kind": "qubit"}"#, (0, 0, 0));
    let o = hamflow(&["gen", "--config", cfg.to_str().unwrap()], tmp.path());
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("records 0"));
    assert!(tmp.path().join("data/manifest.json").exists());
}

#[test]
fn config_errors_exit_one_and_name_the_key() {
    let tmp = TempDir::new().unwrap();
    let path = tmp.path().join("bad.json");
    std::fs::write(&path, r#"{"schema_version": 1, "dataset": {"system": {"kind": "tfim"}, "counts": {"train": -1}}}"#)
        .unwrap();
    let o = hamflow(&["gen", "--config", path.to_str().unwrap()], tmp.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("dataset.counts.train"), "{}", stderr(&o));

    let o = hamflow(&["gen"], tmp.path());
    assert_eq!(o.status.code(), Some(1));
    let o = hamflow(&["frobnicate"], tmp.path());
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn train_eval_predict_infer_round_trip() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "tfim.json", r#"{"kind": "tfim", "n_qubits": 3}"#, (6, 2, 2));
    let cfg = cfg.to_str().unwrap();
    let g = hamflow(&["gen", "--config", cfg], tmp.path());
    assert!(g.status.success(), "{}", stderr(&g));
    let hash = manifest_hash(&g);

    for dir in ["dynamics", "hamiltonian"] {
        let o = hamflow(&["train", "--config", cfg, "--direction", dir, "--deterministic"], tmp.path());
        assert!(o.status.success(), "{}", stderr(&o));
        let resolved = read_json(&tmp.path().join(format!("out/resolved_config_train_{dir}.json")));
        assert_eq!(resolved["manifest_hash"], Value::String(hash.clone()));
        let history = std::fs::read_to_string(tmp.path().join(format!("out/loss_history_{dir}.csv"))).unwrap();
        assert!(history.starts_with("epoch,train_loss,validation_loss\n"));
        assert_eq!(history.lines().count(), 3);
    }

    // Deterministic repeats give identical checkpoints.
    let first = std::fs::read(tmp.path().join("out/model_dynamics.json")).unwrap();
    let o = hamflow(
        &["train", "--config", cfg, "--direction", "dynamics", "--deterministic", "--out", "again"],
        tmp.path(),
    );
    assert!(o.status.success());
    assert_eq!(first, std::fs::read(tmp.path().join("again/model_dynamics.json")).unwrap());

    // Resuming a finished run reproduces it.
    let o = hamflow(&["train", "--config", cfg, "--direction", "dynamics", "--deterministic", "--resume"], tmp.path());
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(first, std::fs::read(tmp.path().join("out/model_dynamics.json")).unwrap());

    let refused = hamflow(
        &["eval", "--model", "out/model_dynamics.json", "--data", "data", "--split", "train", "--out", "ev"],
        tmp.path(),
    );
    assert_eq!(refused.status.code(), Some(1));
    assert!(stderr(&refused).contains("--allow-train-split"));
    let allowed = hamflow(
        &[
            "eval",
            "--model",
            "out/model_dynamics.json",
            "--data",
            "data",
            "--split",
            "train",
            "--allow-train-split",
            "--out",
            "ev",
        ],
        tmp.path(),
    );
    assert!(allowed.status.success(), "{}", stderr(&allowed));
    let ev = hamflow(&["eval", "--model", "out/model_hamiltonian.json", "--data", "data", "--out", "ev"], tmp.path());
    assert!(ev.status.success(), "{}", stderr(&ev));
    let report = read_json(&tmp.path().join("ev/eval.json"));
    assert_eq!(report["instance_count"], 2);
    assert_eq!(report["rescale"], 5.0);
    let csv = std::fs::read_to_string(tmp.path().join("ev/mse_vs_time.csv")).unwrap();
    assert!(csv.starts_with("t,B,mean\n"));

    std::fs::write(tmp.path().join("field.csv"), "t,B\n0,1\n0.1,1.5\n0.2,2\n0.3,1\n").unwrap();
    let p = hamflow(
        &[
            "predict",
            "--model",
            "out/model_dynamics.json",
            "--field",
            "field.csv",
            "--initial",
            "0,0,-1",
            "--out",
            "pred.csv",
        ],
        tmp.path(),
    );
    assert!(p.status.success(), "{}", stderr(&p));
    let pred = std::fs::read_to_string(tmp.path().join("pred.csv")).unwrap();
    let header = pred.lines().next().unwrap();
    let expected = hamflow_core::dynamics::ObservableSet::tfim_default(3).unwrap().names().join(",");
    assert_eq!(header, format!("t,{expected}"));
    assert_eq!(pred.lines().count(), 5);

    let wrong = hamflow(
        &["infer", "--model", "out/model_dynamics.json", "--observables", "pred.csv", "--out", "f.csv"],
        tmp.path(),
    );
    assert_eq!(wrong.status.code(), Some(1));
    assert!(stderr(&wrong).contains("direction"), "{}", stderr(&wrong));
    let inf = hamflow(
        &[
            "infer",
            "--model",
            "out/model_hamiltonian.json",
            "--observables",
            "pred.csv",
            "--initial",
            "0,0,-1",
            "--out",
            "f.csv",
        ],
        tmp.path(),
    );
    assert!(inf.status.success(), "{}", stderr(&inf));
    let f = std::fs::read_to_string(tmp.path().join("f.csv")).unwrap();
    assert!(f.starts_with("t,B\n"));
    assert_eq!(f.lines().count(), 5);
}

#[test]
fn train_rejects_unexpected_manifest() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "q.json", r#"{"kind": "qubit"}"#, (2, 0, 0));
    assert!(hamflow(&["gen", "--config", cfg.to_str().unwrap()], tmp.path()).status.success());
    let mut v = read_json(&cfg);
    v["training"]["expected_manifest_hash"] = Value::String("00".into());
    std::fs::write(&cfg, v.to_string()).unwrap();
    let o = hamflow(&["train", "--config", cfg.to_str().unwrap(), "--direction", "dynamics"], tmp.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("expected_manifest_hash"));
}

#[test]
fn sc_inference_writes_two_detuning_columns() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "sc.json", r#"{"kind": "sc"}"#, (4, 0, 1));
    let cfg = cfg.to_str().unwrap();
    assert!(hamflow(&["gen", "--config", cfg], tmp.path()).status.success());
    let o = hamflow(&["train", "--config", cfg, "--direction", "hamiltonian", "--jobs", "1"], tmp.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let ds = hamflow_core::pipeline::Dataset::load(&tmp.path().join("data")).unwrap();
    let rec = &ds.split(hamflow_core::pipeline::Split::Test)[0];
    rec.observables.write_csv(std::fs::File::create(tmp.path().join("obs.csv")).unwrap()).unwrap();
    let o = hamflow(
        &["infer", "--model", "out/model_hamiltonian.json", "--observables", "obs.csv", "--out", "d.csv"],
        tmp.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let text = std::fs::read_to_string(tmp.path().join("d.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("delta_1,delta_2"));
    assert!(lines.all(|l| l.split(',').count() == 2));
    assert_eq!(text.lines().count(), 12);
}

fn tiny_scale(dir: &Path) -> PathBuf {
    let path = dir.join("scale.json");
    std::fs::write(
        &path,
        r#"{"counts": {"train": 6, "validation": 2, "test": 3}, "probe_count": 2,
            "model": {"hidden": 6, "n_layers": 1, "encoder_depth": 1, "encoder_width": 4},
            "epochs": 1, "batch_size": 4, "learning_rate": 0.001}"#,
    )
    .unwrap();
    path
}

fn tiny_repro(figure: &str, tmp: &TempDir) -> Value {
    let scale = tiny_scale(tmp.path());
    let o =
        hamflow(&["repro", figure, "--scale", scale.to_str().unwrap(), "--out", figure, "--deterministic"], tmp.path());
    // A one-epoch toy model is expected to miss the desk-scale thresholds.
    assert!(matches!(o.status.code(), Some(0) | Some(2)), "{}", stderr(&o));
    let summary = read_json(&tmp.path().join(figure).join("summary.json"));
    let passed = summary["passed"].as_bool().unwrap();
    assert_eq!(o.status.code() == Some(0), passed);
    if !passed {
        assert!(stderr(&o).contains("criterion"), "{}", stderr(&o));
    }
    summary
}

#[test]
fn repro_fig3_reports_both_windows() {
    let tmp = TempDir::new().unwrap();
    let s = tiny_repro("fig3", &tmp);
    let m = &s["metrics"]["dynamics_gp_test"];
    assert!(m["train_window_mse"].is_number());
    assert!(m["extrapolation_window_mse"].is_number());
    assert!(s["metrics"]["hamiltonian_quench"]["train_window_mse"].is_number());
    let ids: Vec<&str> = s["criteria"].as_array().unwrap().iter().map(|c| c["id"].as_str().unwrap()).collect();
    assert!(ids.contains(&"7") && ids.contains(&"8"));
    for f in ["fig3_dynamics_mse_vs_time.csv", "fig3_example_dynamics.csv", "fig3_quench_field_mse_vs_time.csv"] {
        assert!(tmp.path().join("fig3").join(f).exists(), "{f}");
    }
}

#[test]
fn repro_fig4cde_reports_closed_loop_mse() {
    let tmp = TempDir::new().unwrap();
    let s = tiny_repro("fig4cde", &tmp);
    let inst = s["metrics"]["constant_detuning_instances"].as_array().unwrap();
    assert!(!inst.is_empty());
    assert!(inst[0]["closed_loop_mse"].is_number());
    assert!(s["metrics"]["zero_detuning_closed_loop_mse"].is_number());
}

#[test]
fn repro_fig_s4_reports_both_variants() {
    let tmp = TempDir::new().unwrap();
    let s = tiny_repro("figS4", &tmp);
    assert!(s["metrics"]["noise_trained_on_lindblad_test"]["overall_mse"].is_number());
    assert!(s["metrics"]["noiseless_trained_on_lindblad_test"]["overall_mse"].is_number());
    assert!(s["metrics"]["noise_trained_is_better"].is_boolean());
}

#[test]
fn repro_fig4ab_writes_protocol_traces() {
    let tmp = TempDir::new().unwrap();
    tiny_repro("fig4ab", &tmp);
    let text = std::fs::read_to_string(tmp.path().join("fig4ab/fig4ab_quench.csv")).unwrap();
    assert_eq!(text.lines().count(), 251);
    assert!(text.lines().next().unwrap().starts_with("t,B,sim_"));
}
