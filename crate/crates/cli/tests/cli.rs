use std::path::Path;
use std::process::{Command, Output};

fn qmtomo(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qmtomo")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = qmtomo(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

/// Data rows of a CSV report as numbers.
fn rows(text: &str) -> Vec<Vec<f64>> {
    text.lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| l.split(',').map(|v| v.parse().unwrap_or(f64::NAN)).collect())
        .collect()
}

fn small_config(dir: &Path, d: usize) -> std::path::PathBuf {
    let cfg = format!(
        r#"{{
  "potential": {{"kind": "quartic", "alpha": 5.0}},
  "gamma": 0.0,
  "d": {d},
  "trajectory": {{"n_points": 101, "dt": 0.05}},
  "dataset": {{"train_count": 40, "val_count": 20, "seed": 11}},
  "training": {{"batch_size": 16, "max_epochs": 30, "patience": 10, "eval_every": 5, "seed": 2, "hidden_layers": [16, 8]}},
  "simulation": {{"dim_policy": {{"fixed": 32}}}},
  "output": {{"dir": "{}"}}
}}"#,
        dir.display()
    );
    let p = dir.join("config.json");
    std::fs::write(&p, cfg).unwrap();
    p
}

#[test]
fn simulate_parity_state() {
    let text = ok(&["simulate", "--potential", "quartic", "--alpha", "5", "--state", "fock:1", "--t-max", "20", "--dt", "0.05"]);
    assert!(text.starts_with('#'));
    let r = rows(&text);
    assert_eq!(r.len(), 401);
    assert!(r.iter().all(|row| row[1].abs() <= 1e-8));
    assert!((r[0][2] - 3.0).abs() < 1e-12);
}

#[test]
fn simulate_harmonic_vacuum() {
    let text = ok(&["simulate", "--potential", "harmonic", "--state", "fock:0"]);
    assert!(rows(&text).iter().all(|row| (row[2] - 1.0).abs() < 1e-9));
}

#[test]
fn decoherence_raises_late_variance() {
    let dir = tempfile::tempdir().unwrap();
    let state = dir.path().join("eta.json");
    std::fs::write(&state, r#"{"re": [[0.6, 0.3], [0.3, 0.4]], "im": [[0.0, 0.1], [-0.1, 0.0]]}"#).unwrap();
    let s = state.to_str().unwrap();
    let late_mean = |gamma: &str| {
        let r = rows(&ok(&["simulate", "--alpha", "5", "--state", s, "--gamma", gamma, "--dim", "32"]));
        let tail: Vec<f64> = r.iter().filter(|row| row[0] >= 15.0 - 1e-9).map(|row| row[2]).collect();
        tail.iter().sum::<f64>() / tail.len() as f64
    };
    assert!(late_mean("0.01") > late_mean("0"));
}

#[test]
fn bad_arguments_exit_with_two() {
    assert_eq!(qmtomo(&["simulate", "--state", "fock:1"]).status.code(), Some(2));
    assert_eq!(qmtomo(&["simulate", "--alpha", "-1", "--state", "fock:1"]).status.code(), Some(2));
    assert_eq!(qmtomo(&["budget", "--alpha", "5"]).status.code(), Some(2));
    assert_eq!(qmtomo(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn missing_files_exit_with_four() {
    assert_eq!(qmtomo(&["simulate", "--alpha", "5", "--state", "/nonexistent/eta.json"]).status.code(), Some(4));
    assert_eq!(qmtomo(&["eval", "--model", "/nope", "--dataset", "/nope", "--report-out", "/tmp/x"]).status.code(), Some(4));
}

#[test]
fn budget_reference_case() {
    let text = ok(&["budget", "--alpha", "5", "--gamma", "1e-3"]);
    assert!(text.contains("t_star_omega0: 5\n"));
    assert!(text.contains("ratio: 0.005\n"));
    assert!(text.contains("verdict: satisfied"));
    let text = ok(&["budget", "--sigma", "1e-3", "--x0", "1e-8", "--omega-gamma-ratio", "1000"]);
    assert!(text.contains("verdict: violated"));
    let text = ok(&["budget", "--alpha", "5", "--gamma", "0"]);
    assert!(text.contains("ratio: 0\n"));
}

#[test]
fn wigner_of_first_excited_state() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("w.csv");
    ok(&["wigner", "--state", "fock:1", "--out", out.to_str().unwrap()]);
    let text = std::fs::read_to_string(&out).unwrap();
    let r = rows(&text);
    let origin = r.iter().find(|row| row[0].abs() < 1e-12 && row[1].abs() < 1e-12).unwrap();
    let min = r.iter().map(|row| row[2]).fold(f64::INFINITY, f64::min);
    assert!(origin[2] < 0.0 && origin[2] == min);
    let integral: f64 = r.iter().map(|row| row[2]).sum::<f64>() * 0.05 * 0.05;
    assert!((integral - 1.0).abs() < 0.02);
}

#[test]
fn moments_report_contains_every_order() {
    let text = ok(&["moments", "--alpha", "5", "--state", "fock:1", "--nt-list", "2,3,4", "--t-max", "2"]);
    let header = text.lines().find(|l| !l.starts_with('#')).unwrap();
    assert_eq!(header, "t,n_t,x2_truncated,x2_quantum,abs_error,rel_error");
    let r = rows(&text);
    assert_eq!(r.len(), 3 * 41);
    for nt in [2.0, 3.0, 4.0] {
        assert!(r.iter().any(|row| row[1] == nt));
    }
    // <x²>(0) = 3 for |1>
    assert!(r.iter().filter(|row| row[0] == 0.0).all(|row| (row[3] - 3.0).abs() < 1e-9));
}

#[test]
fn dataset_train_eval_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), 2);
    let c = cfg.to_str().unwrap();
    let p = |name: &str| dir.path().join(name).to_str().unwrap().to_string();

    ok(&["gen-dataset", "--config", c, "--split", "train", "--workers", "1", "--out", &p("t1.ds")]);
    ok(&["gen-dataset", "--config", c, "--split", "train", "--workers", "8", "--out", &p("t8.ds")]);
    assert_eq!(std::fs::read(p("t1.ds")).unwrap(), std::fs::read(p("t8.ds")).unwrap());
    std::env::set_var("QMTOMO_WORKERS", "3");
    ok(&["gen-dataset", "--config", c, "--split", "val"]);
    assert!(dir.path().join("val.ds").exists());

    let train = |model: &str, curve: &str| {
        ok(&[
            "train", "--dataset", &p("t1.ds"), "--val-dataset", &p("val.ds"), "--traj-len", "2", "--config", c,
            "--out-model", &p(model), "--curve-out", &p(curve),
        ])
    };
    let stdout = train("m1.ckpt", "c1.csv");
    train("m2.ckpt", "c2.csv");
    assert_eq!(std::fs::read(p("m1.ckpt")).unwrap(), std::fs::read(p("m2.ckpt")).unwrap());
    let curve = std::fs::read_to_string(p("c1.csv")).unwrap();
    assert!(curve.lines().any(|l| l == "epoch,train_loss,val_loss,val_infidelity"));
    assert!(curve.lines().any(|l| l.starts_with("1,") && l.ends_with(',')));

    ok(&["eval", "--model", &p("m1.ckpt"), "--dataset", &p("val.ds"), "--report-out", &p("eval.csv")]);
    let report = std::fs::read_to_string(p("eval.csv")).unwrap();
    let mean: f64 = report
        .lines()
        .find_map(|l| l.strip_prefix("# mean_infidelity: "))
        .unwrap()
        .parse()
        .unwrap();
    let recorded: f64 = stdout.split("mean validation infidelity ").nth(1).unwrap().trim().parse().unwrap();
    assert!((mean - recorded).abs() <= 1e-12);
    assert_eq!(rows(&report).len(), 20);
    assert!(report.contains("# mismatch: false"));

    ok(&["xval", "--model", &p("m1.ckpt"), "--dataset", &p("val.ds"), "--report-out", &p("xval.csv")]);
    let x = std::fs::read_to_string(p("xval.csv")).unwrap();
    assert!(x.contains("# mismatch: true") && x.contains("# model_scenario: quartic"));

    // a d = 3 dataset cannot feed a d = 2 model
    let dir3 = tempfile::tempdir().unwrap();
    let cfg3 = small_config(dir3.path(), 3);
    ok(&["gen-dataset", "--config", cfg3.to_str().unwrap(), "--split", "val"]);
    let v3 = dir3.path().join("val.ds");
    let out = qmtomo(&["eval", "--model", &p("m1.ckpt"), "--dataset", v3.to_str().unwrap(), "--report-out", &p("e3.csv")]);
    assert_eq!(out.status.code(), Some(2));
    let out = qmtomo(&[
        "train", "--dataset", &p("t1.ds"), "--val-dataset", v3.to_str().unwrap(), "--traj-len", "2", "--out-model", &p("x.ckpt"),
    ]);
    assert_eq!(out.status.code(), Some(2));

    // reconstructed-vs-true Wigner pair
    ok(&[
        "wigner", "--model", &p("m1.ckpt"), "--dataset", &p("val.ds"), "--index", "3", "--out", &p("wt.csv"),
        "--out-reconstructed", &p("wr.csv"), "--step", "0.25",
    ]);
    assert!(std::fs::read_to_string(p("wr.csv")).unwrap().contains("# infidelity: "));
}

#[test]
fn d4_initial_variance_is_bounded() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), 4);
    ok(&["gen-dataset", "--config", cfg.to_str().unwrap(), "--split", "train"]);
    let ds = qmtomo::pipeline::Dataset::read(&dir.path().join("train.ds")).unwrap();
    for r in &ds.records {
        assert!(r.u2[0] > 0.0 && r.u2[0] <= 7.0);
        assert_eq!(r.u1[0], 0.0);
    }
}
