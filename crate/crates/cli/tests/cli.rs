use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn qlm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qlm")).args(args).output().expect("qlm runs")
}

fn config(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name).display().to_string()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn json(p: PathBuf) -> Value {
    serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap()
}

fn write_state(dir: &Path, name: &str, re: &[f64]) -> PathBuf {
    let p = dir.join(name);
    let n = re.len().trailing_zeros();
    let doc = serde_json::json!({ "n_qubits": n, "kind": "pure", "re": re, "im": vec![0.0; re.len()] });
    fs::write(&p, doc.to_string()).unwrap();
    p
}

#[test]
fn train_reaches_target_and_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for out in [&a, &b] {
        let o = qlm(&["train", "--config", &config("two_qubit_lm.json"), "--out", path(out)]);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let summary = json(a.join("summary.json"));
    assert!(summary["finish_rms"].as_f64().unwrap() < 0.01, "{summary}");
    assert_eq!(summary["epochs_run"], 50);
    assert_eq!(summary["seed"], 1);
    assert_eq!(fs::read(a.join("epochs.csv")).unwrap(), fs::read(b.join("epochs.csv")).unwrap());
    assert_eq!(fs::read(a.join("checkpoint.json")).unwrap(), fs::read(b.join("checkpoint.json")).unwrap());
}

#[test]
fn fdgd_with_shots_runs() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    let o = qlm(&["train", "--seed", "4", "--optimizer", "fdgd", "--backend", "shots:1024", "--out", path(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let log = fs::read_to_string(out.join("epochs.csv")).unwrap();
    assert_eq!(log.lines().count(), 51);
    assert!(log.lines().nth(1).unwrap().starts_with("1,"));
}

#[test]
fn config_errors_exit_2_without_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("bad.json");
    fs::write(&cfg, "{\n  \"seed\": 1,\n  \"optimizer\": \"newton\"\n}\n").unwrap();
    let out = tmp.path().join("run");
    let o = qlm(&["train", "--config", path(&cfg), "--out", path(&out)]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("bad.json:3:"), "{err}");
    assert!(!out.exists());

    let o = qlm(&["train", "--out", path(&out)]);
    assert_eq!(o.status.code(), Some(2), "unseeded runs are refused");
    assert!(!out.exists());

    let o = qlm(&["train", "--seed", "1", "--backend", "gpu", "--out", path(&out)]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn unreachable_backend_is_a_runtime_failure() {
    let tmp = tempfile::tempdir().unwrap();
    let o = qlm(&["train", "--seed", "1", "--backend", "external", "--out", path(&tmp.path().join("run"))]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("unavailable"));
}

#[test]
fn stage_writes_table_and_resumes() {
    let tmp = tempfile::tempdir().unwrap();
    let full = tmp.path().join("full");
    let o = qlm(&["stage", "--seed", "0", "--qubits", "4", "--out", path(&full)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let table = fs::read_to_string(full.join("stage_summary.csv")).unwrap();
    let rows: Vec<&str> = table.lines().collect();
    assert_eq!(rows[0], "n_qubits,n_pairs,epochs,start_rms,finish_rms");
    assert_eq!(rows.len(), 4);
    assert!(rows[1].starts_with("2,4,20,") && rows[2].starts_with("3,12,20,") && rows[3].starts_with("4,24,20,"));

    // an interrupted run: only the first two stages made it to disk
    let part = tmp.path().join("part");
    assert_eq!(qlm(&["stage", "--seed", "0", "--qubits", "3", "--out", path(&part)]).status.code(), Some(0));
    let o = qlm(&["stage", "--seed", "0", "--qubits", "4", "--out", path(&part), "--resume"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stderr).contains("from stage 2"));
    for f in ["stage_summary.csv", "stage_4/epochs.csv", "stage_4/checkpoint.json"] {
        assert_eq!(fs::read(full.join(f)).unwrap(), fs::read(part.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn plot_emits_curves() {
    let tmp = tempfile::tempdir().unwrap();
    let run = tmp.path().join("run");
    assert_eq!(qlm(&["train", "--seed", "2", "--out", path(&run)]).status.code(), Some(0));
    let o = qlm(&["plot", path(&run)]);
    assert_eq!(o.status.code(), Some(0));
    for f in ["rms_vs_epoch", "lambda_vs_epoch", "params_vs_time"] {
        assert!(run.join(format!("{f}.csv")).exists() && run.join(format!("{f}.svg")).exists(), "{f}");
    }
    let log = fs::read_to_string(run.join("epochs.csv")).unwrap();
    let logged: Vec<f64> = log.lines().skip(1).map(|l| l.split(',').nth(2).unwrap().parse().unwrap()).collect();
    let curve = fs::read_to_string(run.join("lambda_vs_epoch.csv")).unwrap();
    let plotted: Vec<f64> = curve.lines().skip(1).map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert_eq!(logged, plotted);
    assert!(plotted.iter().all(|l| l.is_finite() && *l > 0.0));
    let params = fs::read_to_string(run.join("params_vs_time.csv")).unwrap();
    assert_eq!(params.lines().count(), 201);
    assert_eq!(params.lines().next().unwrap(), "t_ns,K0,K1,eps0,eps1,zeta0_1");

    let staged = tmp.path().join("staged");
    assert_eq!(qlm(&["stage", "--seed", "1", "--qubits", "3", "--out", path(&staged)]).status.code(), Some(0));
    assert_eq!(qlm(&["plot", path(&staged)]).status.code(), Some(0));
    let overlay = fs::read_to_string(staged.join("tunneling_vs_time.csv")).unwrap();
    assert_eq!(overlay.lines().next().unwrap(), "t_ns,N2,N3");
    assert_eq!(overlay.lines().count(), 201);

    assert_eq!(qlm(&["plot", path(&tmp.path().join("missing"))]).status.code(), Some(3));
}

#[test]
fn eval_trained_checkpoint() {
    let tmp = tempfile::tempdir().unwrap();
    let run = tmp.path().join("run");
    assert_eq!(qlm(&["train", "--config", &config("two_qubit_lm.json"), "--out", path(&run)]).status.code(), Some(0));
    let ck = run.join("checkpoint.json");
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let bell = write_state(tmp.path(), "bell.json", &[h, 0.0, 0.0, h]);
    let ground = write_state(tmp.path(), "ground.json", &[1.0, 0.0, 0.0, 0.0]);
    let value = |args: &[&str]| -> f64 {
        let o = qlm(args);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
        let v: Value = serde_json::from_slice(&o.stdout).unwrap();
        v["value"].as_f64().unwrap()
    };
    let exact = value(&["eval", path(&ck), path(&bell)]);
    assert!((exact - 1.0).abs() < 0.05, "{exact}");
    let zero = value(&["eval", path(&ck), path(&ground)]);
    assert!(zero.abs() < 0.05, "{zero}");
    let sampled = value(&["eval", path(&ck), path(&bell), "--backend", "shots:1000000", "--seed", "5"]);
    assert!((sampled - exact).abs() < 0.01, "{sampled} vs {exact}");

    let three = write_state(tmp.path(), "three.json", &[1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
    assert_eq!(qlm(&["eval", path(&ck), path(&three)]).status.code(), Some(3));
}
