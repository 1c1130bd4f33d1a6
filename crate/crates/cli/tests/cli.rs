use std::path::Path;
use std::process::{Command, Output};

use serde_json::{json, Value};

fn zsda(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_zsda"))
        .args(args)
        .env("ZSDA_THREADS", "1")
        .output()
        .expect("binary runs")
}

fn write(path: &Path, v: &Value) {
    std::fs::write(path, serde_json::to_string_pretty(v).unwrap()).unwrap();
}

fn rotated(n: usize) -> Value {
    json!({"rotated": {
        "angles_deg": [0.0, 15.0, 30.0, 45.0, 60.0, 75.0],
        "n_per_domain": n,
        "classes": 3,
        "noise": 0.3,
        "seed": 4
    }})
}

fn small_experiment() -> Value {
    json!({
        "dataset": rotated(30),
        "targets": [2],
        "trials": 2,
        "seed": 9,
        "baseline_hidden": 8,
        "train": {
            "max_epochs": 4,
            "min_selection_epoch": 1,
            "minibatch": 60,
            "encoder_hidden": [8],
            "feature_hidden": [8]
        }
    })
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn run_writes_reports_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.json");
    write(&cfg, &small_experiment());
    let out = dir.path().join("results");
    let o = zsda(&["run", "--config", p(&cfg), "--out", p(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(out.join("metrics.csv")).unwrap();
    assert!(csv.starts_with("target,method,trial,metric,value\n"));
    assert_eq!(csv.lines().count(), 1 + 2 * 2);
    let summary: Value = serde_json::from_str(&std::fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["metric"], "accuracy");
    assert_eq!(summary["summary"].as_array().unwrap().len(), 2);
    assert!(out.join("traces/proposed_target2_trial1.csv").exists());
    assert!(out.join("traces/baseline_target2_trial0.csv").exists());

    let again = zsda(&["run", "--config", p(&cfg), "--out", p(&out)]);
    assert!(again.status.success());
    assert_eq!(std::fs::read_to_string(out.join("metrics.csv")).unwrap(), csv);
}

#[test]
fn missing_config_exits_2_and_names_path() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("nope.json");
    let o = zsda(&["run", "--config", p(&cfg), "--out", p(dir.path())]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("nope.json"));
}

#[test]
fn unknown_keys_and_bad_values_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.json");
    write(&cfg, &small_experiment());
    for set in ["train.latnet_dim=3", "trials=0", "train_fraction=1.5", "targets=[99]"] {
        let o = zsda(&["run", "--config", p(&cfg), "--out", p(dir.path()), "--set", set]);
        assert_eq!(o.status.code(), Some(2), "{set}: {}", String::from_utf8_lossy(&o.stderr));
    }
    std::fs::write(&cfg, "{ not json").unwrap();
    let o = zsda(&["run", "--config", p(&cfg), "--out", p(dir.path())]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!dir.path().join("metrics.csv").exists());
}

#[test]
fn training_failure_exits_1_without_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.json");
    write(&cfg, &small_experiment());
    let out = dir.path().join("r");
    let o = zsda(&["run", "--config", p(&cfg), "--out", p(&out), "--set", "train.lr=1e300"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("target 2"));
    assert!(!out.join("metrics.csv").exists());
}

#[test]
fn gen_writes_reloadable_identical_files() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("gen.json");
    write(&cfg, &rotated(200));
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let o = zsda(&["gen", "--config", p(&cfg), "--out", p(out)]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let text = std::fs::read(a.join("dataset.txt")).unwrap();
    assert_eq!(text, std::fs::read(b.join("dataset.txt")).unwrap());
    let ds = zsda_core::data::load_text(a.join("dataset.txt")).unwrap();
    assert_eq!(ds.total_points(), 1200);
    assert_eq!(zsda_core::data::to_text(&ds).into_bytes(), text);

    let o = zsda(&["gen", "--config", p(&cfg), "--out", p(&b), "--seed", "5"]);
    assert!(o.status.success());
    assert_ne!(std::fs::read(b.join("dataset.txt")).unwrap(), text);

    let o = zsda(&["gen", "--config", p(&cfg), "--out", p(&b), "--set", "rotated.noise=-1"]);
    assert_eq!(o.status.code(), Some(2));
}

fn count(hay: &str, needle: &str) -> usize {
    hay.matches(needle).count()
}

#[test]
fn train_then_export_latents() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let gen_cfg = dir.path().join("gen.json");
    write(&gen_cfg, &rotated(30));
    assert!(zsda(&["gen", "--config", p(&gen_cfg), "--out", p(&data)]).status.success());

    let mut exp = small_experiment();
    exp["dataset"] = json!({"file": "data/dataset.txt"});
    let cfg = dir.path().join("exp.json");
    write(&cfg, &exp);
    let model_dir = dir.path().join("model");
    let o = zsda(&["train", "--config", p(&cfg), "--out", p(&model_dir)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let info: Value = serde_json::from_str(&std::fs::read_to_string(model_dir.join("train.json")).unwrap()).unwrap();
    assert_eq!(info["targets"], json!([2]));
    assert!(model_dir.join("trace.csv").exists());
    let model = model_dir.join("model.txt");

    let lat = dir.path().join("lat");
    let o = zsda(&["export-latents", "--config", p(&cfg), "--out", p(&lat), "--model", p(&model)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(lat.join("latents.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "id,role,mu_1,mu_2,logvar_1,logvar_2");
    assert_eq!(lines.len(), 7);
    assert!(lines[3].starts_with("2,held_out,"));
    let svg = std::fs::read_to_string(lat.join("latents.svg")).unwrap();
    assert_eq!(count(&svg, "<circle class=\"mean\""), 6);
    assert_eq!(count(&svg, "<ellipse"), 12);
}

#[test]
fn export_latents_without_svg_or_with_mismatch() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.json");
    write(&cfg, &small_experiment());
    let m3 = dir.path().join("m3");
    let o = zsda(&["train", "--config", p(&cfg), "--out", p(&m3), "--set", "train.latent_dim=3"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let lat = dir.path().join("lat");
    let o = zsda(&["export-latents", "--config", p(&cfg), "--out", p(&lat), "--model", p(&m3.join("model.txt"))]);
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stdout).contains("requires K=2"));
    assert!(lat.join("latents.csv").exists());
    assert!(!lat.join("latents.svg").exists());

    let slope = json!({"slope": {"slopes": [-1.0, 0.0, 1.0], "n_per_domain": 20, "dim": 2, "noise": 0.1, "seed": 1}});
    let o = zsda(&[
        "export-latents", "--config", p(&cfg), "--out", p(&lat), "--model", p(&m3.join("model.txt")),
        "--set", &format!("dataset={slope}"), "--set", "targets=null",
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("model task"));
}

#[test]
fn sweep_k_writes_one_report_per_value() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.json");
    write(&cfg, &small_experiment());
    let out = dir.path().join("sweep");
    let o = zsda(&["sweep-k", "--config", p(&cfg), "--out", p(&out), "--values", "1,3", "--set", "trials=1"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for k in [1, 3] {
        let s: Value = serde_json::from_str(&std::fs::read_to_string(out.join(format!("k{k}/summary.json"))).unwrap()).unwrap();
        assert_eq!(s["metadata"]["latent_dim"], k.to_string());
    }
    let sweep = std::fs::read_to_string(out.join("sweep.csv")).unwrap();
    assert_eq!(sweep.lines().count(), 1 + 2 * 2);
    let o = zsda(&["sweep-k", "--config", p(&cfg), "--out", p(&out), "--values", "0"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn sweep_sources_reports_means() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.json");
    write(&cfg, &small_experiment());
    let out = dir.path().join("sweep");
    let o = zsda(&[
        "sweep-sources", "--config", p(&cfg), "--out", p(&out), "--values", "0.5", "--set", "trials=1",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(out.join("fraction0.5/metrics.csv")).unwrap();
    assert!(csv.lines().skip(1).all(|l| l.starts_with("mean,")));
    let o = zsda(&["sweep-sources", "--config", p(&cfg), "--out", p(&out), "--values", "1.0"]);
    assert_eq!(o.status.code(), Some(2));
}
