use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};

const BIN: &str = env!("CARGO_BIN_EXE_asymdiv");

fn write_config(dir: &Path, name: &str, cfg: &Value) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, serde_json::to_string_pretty(cfg).unwrap()).unwrap();
    path
}

fn asymdiv(args: &[&str]) -> Output {
    Command::new(BIN).args(args).env_remove("ASYMDIV_OUTPUT_DIR").output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn manifest(dir: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

/// Every file under `dir` other than the manifest is listed in it, and
/// every listed file exists.
fn assert_no_orphans(dir: &Path) {
    let listed: BTreeSet<String> =
        manifest(dir)["files"].as_array().unwrap().iter().map(|f| f["path"].as_str().unwrap().to_string()).collect();
    let mut found = BTreeSet::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(dir).unwrap().to_string_lossy().replace('\\', "/");
                if rel != "manifest.json" {
                    found.insert(rel);
                }
            }
        }
    }
    assert_eq!(listed, found);
}

fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let text = std::fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap().split(',').map(String::from).collect();
    let rows = lines.map(|l| l.split(',').map(String::from).collect()).collect();
    (header, rows)
}

fn column(path: &Path, name: &str) -> Vec<f64> {
    let (header, rows) = read_csv(path);
    let k = header.iter().position(|h| h == name).unwrap_or_else(|| panic!("no column {name}"));
    rows.iter().map(|r| r[k].parse().unwrap()).collect()
}

fn params(alpha: f64, eps: f64, theta: f64) -> Value {
    json!({ "alpha": alpha, "epsilon": eps, "theta": theta })
}

#[test]
fn spectral_symmetric_lambda_is_alpha() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let cfg = json!({ "mode": "spectral", "params": params(1.0, 0.0, 0.7), "B": { "kind": "identity" },
                      "output_dir": out });
    let path = write_config(tmp.path(), "spectral.json", &cfg);
    let o = asymdiv(&["run", path.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let m = manifest(&out);
    let lambda = m["results"]["lambda"].as_f64().unwrap();
    assert!((lambda - 1.0).abs() < 1e-3, "lambda = {lambda}");
    assert_eq!(m["config"]["mode"], "spectral");
    assert!(m["wall_seconds"].as_f64().unwrap() >= 0.0);
    assert!(m["diagnostics"]["leakage"].as_f64().is_some());
    assert_no_orphans(&out);
    let (header, rows) = read_csv(&out.join("eigen.csv"));
    assert_eq!(header, ["x", "status", "h", "gamma"]);
    assert_eq!(rows.len(), 2 * 512);
}

#[test]
fn crossval_rows_pass() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("cv");
    let cfg = json!({
        "mode": "crossval",
        "params": params(1.0, 0.0, 0.7),
        "seed": 3,
        "simulation": { "replicas": 600, "horizon": 5.0, "snapshot_count": 20 },
    });
    let path = write_config(tmp.path(), "cv.json", &cfg);
    let o = asymdiv(&["run", path.to_str().unwrap(), "--output-dir", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let (header, rows) = read_csv(&out.join("agreement.csv"));
    let pass = header.iter().position(|h| h == "pass").unwrap();
    assert!(rows.len() >= 10);
    for r in &rows {
        assert_eq!(r[pass], "true", "{r:?}");
    }
    assert_eq!(manifest(&out)["results"]["all_pass"], true);
    assert_no_orphans(&out);
}

#[test]
fn failed_agreement_exits_3_and_keeps_the_table() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("cv");
    let cfg = json!({
        "mode": "crossval",
        "params": params(1.2, 0.2, 0.7),
        "seed": 3,
        "simulation": { "replicas": 50, "horizon": 3.0, "snapshot_count": 10 },
        "spectral": { "n": 128 },
        "crossval": { "lambda_rel_tol": 1e-12 },
    });
    let path = write_config(tmp.path(), "cv.json", &cfg);
    let o = asymdiv(&["run", path.to_str().unwrap(), "--output-dir", out.to_str().unwrap()]);
    assert_eq!(code(&o), 3, "{}", stderr(&o));
    assert!(out.join("agreement.csv").exists());
    assert_eq!(manifest(&out)["results"]["all_pass"], false);
    assert_no_orphans(&out);
}

#[test]
fn non_convergence_exits_3() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = json!({ "mode": "spectral", "params": params(1.0, 0.3, 0.7),
                      "spectral": { "n": 64, "solver": { "max_iter": 2 } } });
    let path = write_config(tmp.path(), "c.json", &cfg);
    let o = asymdiv(&["run", path.to_str().unwrap(), "--output-dir", tmp.path().join("o").to_str().unwrap()]);
    assert_eq!(code(&o), 3, "{}", stderr(&o));
}

#[test]
fn empty_snapshot_times_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = json!({ "mode": "simulate", "params": params(1.0, 0.0, 0.7),
                      "simulation": { "replicas": 10, "horizon": 2.0, "snapshot_times": [] } });
    let path = write_config(tmp.path(), "sim.json", &cfg);
    let out = tmp.path().join("o");
    let o = asymdiv(&["run", path.to_str().unwrap(), "--output-dir", out.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("snapshot_times"), "{}", stderr(&o));
    assert!(!out.exists(), "nothing is written for an invalid config");
}

#[test]
fn parse_errors_name_line_and_field() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("bad.json");
    std::fs::write(
        &path,
        "{\n  \"mode\": \"spectral\",\n  \"params\": { \"alpha\": 1.0, \"epsilon\": 0.0, \"theta\": 0.7 },\n  \"spectral\": { \"nodes\": 64 }\n}\n",
    )
    .unwrap();
    let o = asymdiv(&["validate", path.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    let err = stderr(&o);
    assert!(err.contains("line 4") && err.contains("spectral") && err.contains("nodes"), "{err}");

    let o = asymdiv(&["run", tmp.path().join("missing.json").to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    std::fs::write(&path, "{ \"mode\": \"spectral\", ").unwrap();
    assert_eq!(code(&asymdiv(&["validate", path.to_str().unwrap()])), 2);
}

#[test]
fn validate_checks_mode_requirements() {
    let tmp = tempfile::tempdir().unwrap();
    let ok = write_config(tmp.path(), "ok.json", &json!({ "mode": "closedform", "params": params(1.0, 0.0, 0.3) }));
    let o = asymdiv(&["validate", ok.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(String::from_utf8_lossy(&o.stdout).contains("valid"));
    let asym = write_config(tmp.path(), "asym.json", &json!({ "mode": "closedform", "params": params(1.0, 0.1, 0.3) }));
    assert_eq!(code(&asymdiv(&["validate", asym.to_str().unwrap()])), 2);
    let power = write_config(
        tmp.path(),
        "power.json",
        &json!({ "mode": "closedform", "params": params(1.0, 0.0, 0.3), "rate": { "kind": "power", "exponent": 2.0 } }),
    );
    assert_eq!(code(&asymdiv(&["validate", power.to_str().unwrap()])), 2);
    let no_sim = write_config(tmp.path(), "nosim.json", &json!({ "mode": "crossval", "params": params(1.0, 0.0, 0.3) }));
    assert_eq!(code(&asymdiv(&["validate", no_sim.to_str().unwrap()])), 2);
}

#[test]
fn unwritable_output_dir_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    let blocker = tmp.path().join("file");
    std::fs::write(&blocker, "x").unwrap();
    let cfg = json!({ "mode": "spectral", "params": params(1.0, 0.0, 0.7), "spectral": { "n": 32 } });
    let path = write_config(tmp.path(), "c.json", &cfg);
    let o = asymdiv(&["run", path.to_str().unwrap(), "--output-dir", blocker.join("sub").to_str().unwrap()]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
}

#[test]
fn output_dir_from_environment() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = json!({ "mode": "spectral", "params": params(1.0, 0.0, 0.5), "spectral": { "n": 32 } });
    let path = write_config(tmp.path(), "c.json", &cfg);
    let env_dir = tmp.path().join("from-env");
    let o = Command::new(BIN).args(["run", path.to_str().unwrap()]).env("ASYMDIV_OUTPUT_DIR", &env_dir).output().unwrap();
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(env_dir.join("manifest.json").exists());
}

#[test]
fn theta_sweep_is_flat_at_symmetric_growth() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("sweep");
    let cfg = json!({ "mode": "spectral", "params": params(1.0, 0.0, 0.7) });
    let path = write_config(tmp.path(), "c.json", &cfg);
    let o = asymdiv(&[
        "sweep", path.to_str().unwrap(), "--axis", "theta", "--values", "0.2,0.35,0.5,0.65,0.8",
        "--output-dir", out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let csv = out.join("sweep.csv");
    assert_eq!(column(&csv, "axis_value"), [0.2, 0.35, 0.5, 0.65, 0.8]);
    for l in column(&csv, "lambda") {
        assert!((l - 1.0).abs() < 1e-3, "lambda = {l}");
    }
    assert_no_orphans(&out);
}

#[test]
fn alpha_sweep_has_unit_slope() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("sweep");
    let cfg = json!({ "mode": "spectral", "params": params(1.0, 0.0, 0.3), "spectral": { "n": 256 } });
    let path = write_config(tmp.path(), "c.json", &cfg);
    let o = asymdiv(&[
        "sweep", path.to_str().unwrap(), "--axis", "alpha", "--values", "0.5,1,1.5,2,3",
        "--output-dir", out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let csv = out.join("sweep.csv");
    let (a, l) = (column(&csv, "alpha"), column(&csv, "lambda"));
    let n = a.len() as f64;
    let (ma, ml) = (a.iter().sum::<f64>() / n, l.iter().sum::<f64>() / n);
    let slope = a.iter().zip(&l).map(|(x, y)| (x - ma) * (y - ml)).sum::<f64>()
        / a.iter().map(|x| (x - ma).powi(2)).sum::<f64>();
    assert!((slope - 1.0).abs() < 1e-3, "slope {slope}");
    for (x, y) in a.iter().zip(&l) {
        assert!((y - x).abs() < 1e-3 * x, "{x} -> {y}");
    }
}

#[test]
fn eps_sweep_decreases_through_zero() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("sweep");
    let cfg = json!({ "mode": "spectral", "params": params(1.0, 0.0, 0.7), "spectral": { "n": 256 } });
    let path = write_config(tmp.path(), "c.json", &cfg);
    let o = asymdiv(&[
        "sweep", path.to_str().unwrap(), "--axis", "eps", "--values", "-0.2,-0.1,-0.05,0,0.05,0.1,0.2",
        "--output-dir", out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let csv = out.join("sweep.csv");
    let eps = column(&csv, "eps");
    let lambda = column(&csv, "lambda");
    let zero = eps.iter().position(|e| *e == 0.0).unwrap();
    assert!(lambda[zero - 1] > lambda[zero] && lambda[zero] > lambda[zero + 1], "{lambda:?}");
    for name in ["dl_deps_formula", "dl_deps_fd"] {
        assert!(column(&csv, name)[zero] < 0.0, "{name}");
    }
    let f = column(&csv, "dl_deps_formula")[zero];
    let d = column(&csv, "dl_deps_fd")[zero];
    assert!((f / d - 1.0).abs() < 0.05, "{f} vs {d}");
    assert_eq!(std::fs::read_dir(out.join("points")).unwrap().count(), eps.len());
}

#[test]
fn inadmissible_sweep_value_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = json!({ "mode": "spectral", "params": params(1.0, 0.0, 0.7), "spectral": { "n": 32 } });
    let path = write_config(tmp.path(), "c.json", &cfg);
    let out = tmp.path().join("o");
    for (axis, values) in [("theta", "0.5,1.2"), ("eps", "0.5,1.0"), ("alpha", "-1")] {
        let o = asymdiv(&["sweep", path.to_str().unwrap(), "--axis", axis, "--values", values, "--output-dir", out.to_str().unwrap()]);
        assert_eq!(code(&o), 2, "{axis} {values}: {}", stderr(&o));
    }
    let o = asymdiv(&["sweep", path.to_str().unwrap(), "--axis", "beta", "--values", "1"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn reruns_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let sim = json!({
        "mode": "simulate",
        "params": params(1.2, 0.2, 0.7),
        "seed": 99,
        "simulation": { "replicas": 40, "horizon": 3.0, "snapshot_count": 12, "record_events": true, "record_snapshots": true },
    });
    let spec = json!({ "mode": "spectral", "params": params(1.2, 0.2, 0.7), "spectral": { "n": 96 } });
    let cf = json!({ "mode": "closedform", "params": params(1.0, 0.0, 0.3), "spectral": { "n": 96 },
                     "closedform": { "series": { "n_max": 12 } } });
    for (name, cfg) in [("sim", sim), ("spec", spec), ("cf", cf)] {
        let path = write_config(tmp.path(), &format!("{name}.json"), &cfg);
        let dirs: Vec<PathBuf> = (0..2).map(|k| tmp.path().join(format!("{name}{k}"))).collect();
        for d in &dirs {
            let o = asymdiv(&["run", path.to_str().unwrap(), "--output-dir", d.to_str().unwrap()]);
            assert_eq!(code(&o), 0, "{name}: {}", stderr(&o));
        }
        let files: Vec<String> = manifest(&dirs[0])["files"]
            .as_array()
            .unwrap()
            .iter()
            .map(|f| f["path"].as_str().unwrap().to_string())
            .collect();
        assert!(!files.is_empty());
        for f in files {
            let a = std::fs::read(dirs[0].join(&f)).unwrap();
            let b = std::fs::read(dirs[1].join(&f)).unwrap();
            assert!(a == b, "{name}/{f} differs between runs");
        }
    }
}

#[test]
fn simulate_writes_the_event_log() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("sim");
    let cfg = json!({
        "mode": "simulate",
        "params": params(1.0, 0.2, 0.6),
        "seed": 5,
        "simulation": { "replicas": 20, "horizon": 4.0, "snapshot_times": [1.0, 2.0, 2.5, 3.0, 3.5, 4.0], "record_events": true },
    });
    let path = write_config(tmp.path(), "sim.json", &cfg);
    let o = asymdiv(&["run", path.to_str().unwrap(), "--output-dir", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let (header, rows) = read_csv(&out.join("events.csv"));
    assert_eq!(header, ["replica", "time", "label", "size", "status", "event_type"]);
    assert!(!rows.is_empty());
    let lambda = manifest(&out)["results"]["lambda"].as_f64().unwrap();
    assert!(lambda > 0.8 && lambda < 1.2, "lambda = {lambda}");
    assert_no_orphans(&out);
}
