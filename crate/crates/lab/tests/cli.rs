use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use qntk_lab::config::ExperimentConfig;
use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_qntk-lab"))
}

fn run_in(dir: &Path, args: &[&str]) -> Output {
    bin().args(args).arg("--out").arg(dir).output().expect("spawn qntk-lab")
}

fn replica_config() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../sec5.toml")
}

fn manifest(dir: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

/// Rows of a CSV file with a header line, parsed as floats.
fn csv_rows(path: &Path) -> (Vec<String>, Vec<Vec<f64>>) {
    let text = std::fs::read_to_string(path).unwrap();
    let mut lines = text.lines().filter(|l| !l.starts_with('#'));
    let header = lines.next().unwrap().split(',').map(String::from).collect();
    let rows = lines
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect();
    (header, rows)
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "exit {:?}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn single_qubit_optimization_follows_the_scalar_recursion() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(
        dir.path(),
        &["optimize", "--qubits", "1", "--ansatz", "ry", "--obs", "Z", "--target", "-1", "--eta", "0.05", "--steps", "200"],
    );
    ok(&out);
    let theta0 = manifest(dir.path())["results"]["theta_star"][0].as_f64().unwrap();
    let (header, rows) = csv_rows(&dir.path().join("trace.csv"));
    assert_eq!(header, ["t", "loss", "eps_0", "theta_0"]);
    assert_eq!(rows.len(), 201);

    // z = cos(2 theta) under exp(i theta Y); eps = z + 1 and dL/dtheta = -2 eps sin(2 theta).
    let mut theta = theta0;
    for row in &rows {
        let eps = (2.0 * theta).cos() + 1.0;
        assert!((row[3] - theta).abs() < 1e-12, "t {}: {} vs {}", row[0], row[3], theta);
        assert!((row[2] - eps).abs() < 1e-12);
        theta -= 0.05 * eps * (-2.0 * (2.0 * theta).sin());
    }
    // The target is the smallest eigenvalue, so eps is quadratic in the distance to
    // the minimizer and the loss quartic: convergence is algebraic, |eps| ~ 1/(8 eta t).
    let final_eps = rows.last().unwrap()[2].abs();
    let algebraic = 1.0 / (8.0 * 0.05 * 200.0);
    assert!(final_eps > 0.5 * algebraic && final_eps < 2.0 * algebraic, "{final_eps}");

    let dir = tempfile::tempdir().unwrap();
    let out = run_in(
        dir.path(),
        &["optimize", "--qubits", "1", "--ansatz", "ry", "--obs", "Z", "--target", "-1", "--eta", "0.05", "--steps", "5000"],
    );
    ok(&out);
    let fin = manifest(dir.path())["results"]["final_abs_eps"].as_f64().unwrap();
    assert!(fin < 1e-3, "{fin}");
}

#[test]
fn replica_kernel_has_twelve_nonzero_eigenvalues() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = replica_config();
    ok(&run_in(dir.path(), &["kernel", "--config", cfg.to_str().unwrap()]));
    let (header, rows) = csv_rows(&dir.path().join("spectrum.csv"));
    assert_eq!(header, ["index", "eigenvalue"]);
    assert_eq!(rows.len(), 20);
    let lmax = rows[0][1];
    assert_eq!(rows.iter().filter(|r| r[1] > 1e-9 * lmax).count(), 12);
    let m = manifest(dir.path());
    assert_eq!(m["results"]["rank"], 12);
    assert_eq!(m["results"]["symmetric_psd"], true);
    assert!(dir.path().join("kernel.csv").exists());
}

#[test]
fn hybrid_scan_writes_scan_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    ok(&run_in(dir.path(), &["hybrid-scan", "--widths", "4,16,64", "--samples", "20000"]));
    let (header, rows) = csv_rows(&dir.path().join("scan.csv"));
    assert_eq!(header[0], "width");
    assert_eq!(rows.iter().map(|r| r[0] as usize).collect::<Vec<_>>(), [4, 16, 64]);
    let summary = std::fs::read_to_string(dir.path().join("summary.txt")).unwrap();
    assert!(summary.starts_with("slope "));
    let slope = manifest(dir.path())["results"]["slope"].as_f64().unwrap();
    assert!(slope < 0.0);
}

#[test]
fn manifest_echoes_every_resolved_default() {
    let dir = tempfile::tempdir().unwrap();
    ok(&run_in(dir.path(), &["optimize", "--steps", "3", "--seed", "5"]));
    let m = manifest(dir.path());
    assert_eq!(m["mode"], "optimize");
    let echoed: ExperimentConfig = serde_json::from_value(m["config"].clone()).unwrap();
    let mut want = ExperimentConfig {
        seed: 5,
        ..Default::default()
    };
    want.descent.steps = 3;
    want.output.dir = dir.path().to_path_buf();
    assert_eq!(echoed, want.resolve().unwrap());
    // optional settings appear explicitly, not by omission
    let descent = m["config"]["descent"].as_object().unwrap();
    for key in ["eta_k", "pretrain_eta", "grad_tol", "theta_star", "record_every"] {
        assert!(descent.contains_key(key), "{key} missing");
    }
    assert_eq!(m["config"]["data"]["seed"], 5);
}

#[test]
fn flags_override_the_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "seed = 2\n[descent]\neta = 0.3\nsteps = 4\n[circuit]\nqubits = 2\nobservables = [\"ZI\"]\n").unwrap();
    let out_dir = dir.path().join("o");
    ok(&run_in(&out_dir, &["optimize", "--config", cfg.to_str().unwrap(), "--eta", "0.01"]));
    let m = manifest(&out_dir);
    assert_eq!(m["config"]["descent"]["eta"], 0.01);
    assert_eq!(m["config"]["descent"]["steps"], 4);
    assert_eq!(m["config"]["seed"], 2);
    assert_eq!(m["results"]["eta"], 0.01);
}

fn csv_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect();
    v.sort();
    v
}

#[test]
fn identical_runs_write_identical_csvs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = replica_config();
    for args in [
        vec!["predict", "--config", cfg.to_str().unwrap(), "--steps", "40", "--n-test", "2", "--phi0", "gaussian", "--delta", "0.1"],
        vec!["dataset-gen", "--qubits", "2", "--n-train", "30", "--n-test", "6", "--seed", "3"],
        vec!["hybrid-scan", "--widths", "4,16", "--samples", "2000", "--hybrid-qubits", "3", "--depth", "3", "--out-dim", "4"],
    ] {
        let (a, b) = (dir.path().join("a"), dir.path().join("b"));
        ok(&run_in(&a, &args));
        ok(&run_in(&b, &args));
        let (fa, fb) = (csv_files(&a), csv_files(&b));
        assert!(!fa.is_empty());
        assert_eq!(fa, fb, "{args:?}");
        std::fs::remove_dir_all(&a).unwrap();
        std::fs::remove_dir_all(&b).unwrap();
    }
}

#[test]
fn predict_reports_train_and_held_out_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = replica_config();
    ok(&run_in(
        dir.path(),
        &["predict", "--config", cfg.to_str().unwrap(), "--steps", "30", "--n-test", "4", "--plots"],
    ));
    let text = std::fs::read_to_string(dir.path().join("asymptotic.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "index,sample,observable,split,label,z0,z_frozen,z_dqntk,z_trained");
    assert_eq!(lines.len(), 1 + 24);
    assert_eq!(lines.iter().filter(|l| l.contains(",test,")).count(), 4);
    for f in ["trace.csv", "spectrum.csv", "frozen_spectrum.csv", "prediction_frozen.csv", "prediction_dqntk.csv"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    for f in ["residual.svg", "spectrum.svg"] {
        let svg = std::fs::read_to_string(dir.path().join(f)).unwrap();
        assert!(svg.starts_with("<svg"));
    }
}

fn error_record(dir: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("error.json")).unwrap()).unwrap()
}

#[test]
fn divergence_has_its_own_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    // eps(0) = 0.01 and a huge step sends |eps| far past ten times that
    let target = (1.4f64).cos() - 0.01;
    let out = run_in(
        dir.path(),
        &["optimize", "--theta-star-values", "0.7", "--target", &target.to_string(), "--eta", "500", "--steps", "5"],
    );
    assert_eq!(out.status.code(), Some(3));
    let rec = error_record(dir.path());
    assert_eq!(rec["kind"], "diverged");
    assert_eq!(rec["exit_code"], 3);
}

#[test]
fn invalid_configs_are_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(dir.path(), &["optimize", "--theta-star-values", "1,2"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_record(dir.path())["kind"], "config");

    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "[circuit]\nqbits = 3\n").unwrap();
    let d2 = dir.path().join("d2");
    let out = run_in(&d2, &["kernel", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(error_record(&d2)["message"].as_str().unwrap().contains("qbits"));

    let out = bin().args(["optimize", "--bogus"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));

    let d3 = dir.path().join("d3");
    let out = bin()
        .env("QNTK_LAB_THREADS", "zero")
        .args(["kernel", "--out"])
        .arg(&d3)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn thread_cap_and_sweeps() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .env("QNTK_LAB_THREADS", "1")
        .args(["optimize", "--steps", "3", "--sweep", "3", "--seed", "10", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    ok(&out);
    for s in 10..13 {
        let m = manifest(&dir.path().join(format!("seed-{s}")));
        assert_eq!(m["config"]["seed"], s);
    }
}
