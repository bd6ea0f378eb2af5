use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::Arc;

use catapult_core::experiments::{sweep_cell, SweepConfig};
use catapult_core::models::{generate_sparse_regression, DatasetConfig};

fn lab(args: &[&str], config: Option<&Path>, out: &Path) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_catapult-lab"));
    cmd.args(args)
        .arg("--out")
        .arg(out)
        .env_remove("CATAPULT_LAB_THREADS");
    if let Some(c) = config {
        cmd.arg("--config").arg(c);
    }
    cmd.output().unwrap()
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

/// The single `<out>/<command>/<hash>` directory and its hash.
fn result_dir(out: &Path, command: &str) -> (PathBuf, String) {
    let mut dirs: Vec<_> = fs::read_dir(out.join(command))
        .unwrap()
        .map(|e| e.unwrap().path())
        .collect();
    assert_eq!(dirs.len(), 1, "{dirs:?}");
    let d = dirs.pop().unwrap();
    let hash = d.file_name().unwrap().to_string_lossy().into_owned();
    (d, hash)
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const SCALAR_RUN: &str = r#"
model = "scalar_relu"
[optimizer]
beta = 0.9
[optimizer.schedule]
kind = "constant"
eta = 0.0381
[run]
steps = 3000
record_every = 10
"#;

#[test]
fn run_writes_hashed_outputs_and_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", SCALAR_RUN);
    let out = tmp.path().join("out");
    let o = lab(&["run"], Some(&cfg), &out);
    assert!(o.status.success(), "{}", stderr(&o));
    let (dir, hash) = result_dir(&out, "run");
    assert_eq!(hash.len(), 16);
    let mut names: Vec<String> = fs::read_dir(&dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    names.sort();
    let want: Vec<String> = [
        "config-{h}.toml",
        "events-{h}.json",
        "log-{h}.txt",
        "metadata-{h}.json",
        "trajectory-{h}.csv",
    ]
    .iter()
    .map(|n| n.replace("{h}", &hash))
    .collect();
    assert_eq!(names, want);

    let csv_path = dir.join(format!("trajectory-{hash}.csv"));
    let first = fs::read(&csv_path).unwrap();
    let text = String::from_utf8(first.clone()).unwrap();
    assert!(text.starts_with("t,loss,eta,mss,sharpness\n"));
    assert_eq!(text.lines().count(), 1 + 301);

    let meta: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.join(format!("metadata-{hash}.json"))).unwrap())
            .unwrap();
    assert_eq!(meta["hash"], hash.as_str());
    assert_eq!(meta["config"]["detector"]["kappa"], 5.0);
    assert_eq!(meta["config"]["run"]["tol"], 1e-8);
    assert_eq!(meta["config"]["optimizer"]["beta"], 0.9);
    let events: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.join(format!("events-{hash}.json"))).unwrap()).unwrap();
    assert!(events.is_array());

    // Same config again, with a thread count: data files are byte-identical,
    // only the log grows.
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_catapult-lab"));
    cmd.args(["run", "--out"])
        .arg(&out)
        .arg("--config")
        .arg(&cfg)
        .env("CATAPULT_LAB_THREADS", "1");
    assert!(cmd.output().unwrap().status.success());
    assert_eq!(fs::read(&csv_path).unwrap(), first);
    let log = fs::read_to_string(dir.join(format!("log-{hash}.txt"))).unwrap();
    assert_eq!(log.lines().filter(|l| l.contains("start run")).count(), 2);
    assert!(log.contains("threads=Some(1)"));
}

#[test]
fn seed_flag_changes_the_hash_and_json_config_is_accepted() {
    let tmp = tempfile::tempdir().unwrap();
    let json = r#"{"model": "scalar_relu", "run": {"steps": 50}}"#;
    let cfg = write_config(tmp.path(), "c.json", json);
    let out = tmp.path().join("out");
    assert!(lab(&["run"], Some(&cfg), &out).status.success());
    assert!(lab(&["run", "--seed", "7"], Some(&cfg), &out).status.success());
    assert_eq!(fs::read_dir(out.join("run")).unwrap().count(), 2);
}

#[test]
fn config_errors_exit_1_with_key_path() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let cases = [
        ("[optimizer]\nbeta = 1.2\n", "beta must be in [0,1)"),
        ("[run]\nstepz = 10\n", "stepz"),
        ("[detector]\nkappa = 0.5\n", "detector"),
        ("model = \"mlp\"\n", "model"),
    ];
    for (i, (text, needle)) in cases.iter().enumerate() {
        let cfg = write_config(tmp.path(), &format!("bad{i}.toml"), text);
        let o = lab(&["run"], Some(&cfg), &out);
        assert_eq!(o.status.code(), Some(1), "{text}");
        assert!(stderr(&o).contains(needle), "{text}: {}", stderr(&o));
    }
    let o = lab(&["sweep"], None, &out);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("ldn"), "{}", stderr(&o));
    let o = lab(&["run", "--threads", "0"], None, &out);
    assert_eq!(o.status.code(), Some(1));
    let o = lab(&["run"], Some(&tmp.path().join("missing.toml")), &out);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("missing.toml"));
    assert!(!out.exists(), "config errors must not create outputs");
}

#[test]
fn runtime_errors_exit_3() {
    let tmp = tempfile::tempdir().unwrap();
    // Valid config, but the warm start cannot reach its loss target.
    let cfg = write_config(
        tmp.path(),
        "c.toml",
        "model = \"ldn\"\n[dataset]\nn = 5\nd = 8\nk = 2\n[init]\nkind = \"warm_start\"\nalpha = 0.1\neta = 1e-12\nloss_below = 1e-30\n[run]\nsteps = 10\n",
    );
    let o = lab(&["run"], Some(&cfg), &tmp.path().join("out"));
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(stderr(&o).contains("warm start"), "{}", stderr(&o));
}

#[test]
fn scenarios_table_is_strictly_ordered() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", "[run]\nrecord_every = 500\n");
    let out = tmp.path().join("out");
    let o = lab(&["scenarios"], Some(&cfg), &out);
    assert!(o.status.success(), "{}", stderr(&o));
    let (dir, hash) = result_dir(&out, "scenarios");
    for slug in ["gd", "phb_then_gd", "gd_then_phb", "phb"] {
        assert!(dir.join(format!("scenario-{slug}-{hash}.csv")).exists(), "{slug}");
    }
    let table = fs::read_to_string(dir.join(format!("delta_s-{hash}.csv"))).unwrap();
    let rows: Vec<Vec<&str>> = table.lines().skip(1).map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 4);
    let ds: Vec<f64> = rows.iter().map(|r| r[1].parse().unwrap()).collect();
    assert!(ds.windows(2).all(|w| w[1] > w[0] + 0.01 * ds[0]), "{ds:?}");
    let ratio: f64 = rows[3][2].parse().unwrap();
    assert!(ratio > 3.5, "{ratio}");
}

#[test]
fn beta_sweep_writes_one_row_per_beta() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    for model in ["scalar_relu", "simple2d"] {
        let cfg = write_config(
            tmp.path(),
            &format!("{model}.toml"),
            &format!("model = \"{model}\"\n[beta_sweep]\nbetas = [0.0, 0.5, 0.9]\nsteps = 20000\n"),
        );
        let o = lab(&["beta-sweep"], Some(&cfg), &out);
        assert!(o.status.success(), "{model}: {}", stderr(&o));
    }
    for d in fs::read_dir(out.join("beta-sweep")).unwrap() {
        let d = d.unwrap().path();
        let hash = d.file_name().unwrap().to_string_lossy().into_owned();
        let csv = fs::read_to_string(d.join(format!("beta_sweep-{hash}.csv"))).unwrap();
        assert_eq!(csv.lines().count(), 4, "{csv}");
        assert!(csv.starts_with("beta,"));
    }
}

const SMALL_VERIFY: &str = r#"
[verify.scalar]
beta_step = 0.1
steps = 20000
[verify.gd]
steps = 20000
cubic_points = 10000
[verify.flow]
starts = 5
[verify.generalized]
betas = [0.0, 0.5, 0.9]
steps = 20000
[verify.ldn]
enabled = false
"#;

#[test]
fn verify_theory_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let cfg = write_config(tmp.path(), "ok.toml", SMALL_VERIFY);
    let o = lab(&["verify-theory"], Some(&cfg), &out);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}\n{}",
        String::from_utf8_lossy(&o.stdout),
        stderr(&o)
    );
    let (dir, hash) = result_dir(&out, "verify-theory");
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.join(format!("report-{hash}.json"))).unwrap()).unwrap();
    assert_eq!(report["passed"], true);
    let checks = report["checks"].as_array().unwrap();
    assert!(checks.len() > 20);
    assert!(checks
        .iter()
        .all(|c| c["name"].is_string() && c.get("margin").is_some()));

    // An unreachable tightness floor turns a bound check into a failure.
    let strict =
        format!("{SMALL_VERIFY}\n").replace("beta_step = 0.1", "beta_step = 0.1\ntightness_floor = 0.999");
    let cfg = write_config(tmp.path(), "strict.toml", &strict);
    let o = lab(&["verify-theory"], Some(&cfg), &out);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(String::from_utf8_lossy(&o.stdout).contains("FAIL bound_tightness"));
}

#[test]
fn one_cell_sweep_matches_a_single_run() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "c.toml",
        "model = \"ldn\"\n[sweep]\nalphas = [0.2]\neta_fs = [0.004]\nwarmup_per_eta = 2e5\npost_warmup_factor = 2\n",
    );
    let out = tmp.path().join("out");
    let o = lab(&["sweep"], Some(&cfg), &out);
    assert!(o.status.success(), "{}", stderr(&o));
    let (dir, hash) = result_dir(&out, "sweep");
    let csv = fs::read_to_string(dir.join(format!("sweep-{hash}.csv"))).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(
        lines[0],
        "alpha,eta_f,test_loss,train_loss,sharpness,mss,diverged,catapults"
    );
    assert_eq!(lines.len(), 2);

    let data = Arc::new(generate_sparse_regression(&DatasetConfig::sparse_default(0)).unwrap());
    let scfg = SweepConfig {
        warmup_per_eta: 2e5,
        post_warmup_factor: 2,
        ..SweepConfig::default()
    };
    let (c, _) = sweep_cell(&data, 0.2, 0.004, 0.9, &scfg).unwrap();
    let want = format!(
        "{:?},{:?},{:?},{:?},{:?},{:?},{},{}",
        c.alpha, c.eta_f, c.test_loss, c.train_loss, c.sharpness, c.mss, c.diverged, c.catapults
    );
    assert_eq!(lines[1], want);
    let baselines: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.join(format!("baselines-{hash}.json"))).unwrap())
            .unwrap();
    assert!(baselines["baselines"]["l1_test_loss"].as_f64().unwrap() < 1e-8);
}
