use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn attrep(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_attrep"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn result_json(out: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(out.join("result.json")).unwrap()).unwrap()
}

#[test]
fn energy_of_two_atoms_against_dirac() {
    let dir = tempfile::tempdir().unwrap();
    let mu = dir.path().join("mu.csv");
    let omega = dir.path().join("omega.csv");
    std::fs::write(&mu, "x0,w\n0,0.5\n1,0.5\n").unwrap();
    std::fs::write(&omega, "x0,w\n0,1\n").unwrap();
    let out = dir.path().join("out");
    let o = attrep(
        &["energy", "--mu", mu.to_str().unwrap(), "--omega", omega.to_str().unwrap(), "--qa", "1", "--qr", "1"],
        &out,
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let doc = result_json(&out);
    assert_eq!(doc["command"], "energy");
    let total = doc["result"]["report"]["total"].as_f64().unwrap();
    assert!((total - 0.25).abs() < 1e-12);
    let stdout: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(stdout, doc["result"]);
}

#[test]
fn quadratic_flow_reports_rate_two() {
    let dir = tempfile::tempdir().unwrap();
    let o = attrep(
        &["flow", "--qa", "2", "--qr", "2", "--mu", "uniform:0,1", "--omega", "uniform:1,2", "--t-end", "3", "--m-grid", "100"],
        dir.path(),
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let doc = result_json(dir.path());
    let rate = doc["result"]["diagnostics"]["fitted_rate"].as_f64().unwrap();
    assert!((rate - 2.0).abs() <= 0.02, "{rate}");
    let csv = std::fs::read_to_string(dir.path().join("trajectory.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("t,energy,dissipation,w2_to_target,mean"));
}

#[test]
fn five_uniform_tiles() {
    let dir = tempfile::tempdir().unwrap();
    let o = attrep(&["tile", "--n", "5", "--d", "2", "--uniform"], dir.path());
    assert!(o.status.success());
    let doc = result_json(dir.path());
    let masses = doc["result"]["masses"].as_array().unwrap();
    assert_eq!(masses.len(), 5);
    assert!(masses.iter().all(|m| (m.as_f64().unwrap() - 0.2).abs() < 1e-6));
    let tiling: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("tiling.json")).unwrap()).unwrap();
    assert_eq!(tiling["N"], 5);
    assert_eq!(tiling["boxes"].as_array().unwrap().len(), 5);
}

#[test]
fn pgm_datum_is_tiled_by_darkness() {
    let dir = tempfile::tempdir().unwrap();
    let img = dir.path().join("img.pgm");
    std::fs::write(&img, "P2\n# two pixels\n2 1\n255\n0 128\n").unwrap();
    let out = dir.path().join("out");
    let o = attrep(&["tile", "--n", "2", "--pgm", img.to_str().unwrap()], &out);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let doc = result_json(&out);
    let masses: Vec<f64> = doc["result"]["masses"].as_array().unwrap().iter().map(|m| m.as_f64().unwrap()).collect();
    assert!(masses.iter().all(|m| (m - 0.5).abs() < 1e-9), "{masses:?}");

    let white = dir.path().join("white.pgm");
    std::fs::write(&white, "P2\n1 1\n255\n255\n").unwrap();
    let o = attrep(&["tile", "--n", "2", "--pgm", white.to_str().unwrap()], &out);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn config_file_overrides_flags_and_is_echoed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.json");
    std::fs::write(&cfg, r#"{"qa": 1.5, "qr": 1.5, "n": 9, "seed": 4, "max-iters": 50}"#).unwrap();
    let out = dir.path().join("out");
    let o = attrep(
        &["minimize", "--qa", "2", "--datum", "omega2", "--config", cfg.to_str().unwrap()],
        &out,
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let doc = result_json(&out);
    let echoed = &doc["config"];
    assert_eq!(echoed["qa"], 1.5);
    assert_eq!(echoed["n"], 9);
    assert_eq!(echoed["seed"], 4);
    assert_eq!(echoed["omega"], "omega2");
    for key in ["lambda", "dt", "t_end", "scheme", "tv_method", "h", "out", "m_grid"] {
        assert!(echoed.get(key).is_some(), "{key} missing from echoed config");
    }
    let points = std::fs::read_to_string(out.join("points.csv")).unwrap();
    assert_eq!(points.lines().count(), 10);
    assert!(out.join("trace.csv").exists());
}

#[test]
fn grid_minimizer_writes_density() {
    let dir = tempfile::tempdir().unwrap();
    let o = attrep(
        &["minimize", "--grid", "--datum", "omega1", "--m-grid", "100", "--lambda", "1e-4", "--max-iters", "300"],
        dir.path(),
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let density = std::fs::read_to_string(dir.path().join("density.csv")).unwrap();
    assert_eq!(density.lines().next(), Some("x,u"));
    assert_eq!(density.lines().count(), 101);
}

#[test]
fn tv_and_wasserstein_commands() {
    let dir = tempfile::tempdir().unwrap();
    let mu = dir.path().join("mu.csv");
    std::fs::write(&mu, "x0,w\n0,1\n1,1\n2,1\n").unwrap();
    let out = dir.path().join("out");
    let o = attrep(&["tv", "--mu", mu.to_str().unwrap(), "--tv-method", "pwc"], &out);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let tv = result_json(&out)["result"]["tv"].as_f64().unwrap();
    assert!((tv - 2.0 / 3.0).abs() < 1e-15);

    let o = attrep(&["wasserstein", "--mu", "dirac:0", "--omega", "dirac:3", "--p", "1"], &out);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let doc = result_json(&out);
    assert!((doc["result"]["w_p"].as_f64().unwrap() - 3.0).abs() < 1e-12);
    assert!((doc["result"]["w1_exact"].as_f64().unwrap() - 3.0).abs() < 1e-12);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bad = attrep(&["energy", "--qa", "3", "--mu", "dirac:0", "--omega", "dirac:1"], dir.path());
    assert_eq!(bad.status.code(), Some(1));
    let unknown = attrep(&["bogus"], dir.path());
    assert_eq!(unknown.status.code(), Some(1));
    let missing = attrep(&["energy", "--mu", "/no/such.csv", "--omega", "dirac:0"], dir.path());
    assert_eq!(missing.status.code(), Some(1));
    let blowup = attrep(
        &["flow", "--qa", "2", "--qr", "2", "--mu", "uniform:0,1", "--omega", "uniform:5,6", "--t-end", "3", "--max-abs", "2"],
        dir.path(),
    );
    assert_eq!(blowup.status.code(), Some(2), "{}", String::from_utf8_lossy(&blowup.stderr));
}

#[test]
fn seeded_runs_repeat_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["minimize", "--n", "12", "--datum", "omega2", "--seed", "42", "--max-iters", "100"];
    assert!(attrep(&args, dir.path()).status.success());
    let first = std::fs::read(dir.path().join("points.csv")).unwrap();
    let first_result = std::fs::read(dir.path().join("result.json")).unwrap();
    assert!(attrep(&args, dir.path()).status.success());
    assert_eq!(first, std::fs::read(dir.path().join("points.csv")).unwrap());
    assert_eq!(first_result, std::fs::read(dir.path().join("result.json")).unwrap());

    let other = ["minimize", "--n", "12", "--datum", "omega2", "--seed", "43", "--max-iters", "100"];
    assert!(attrep(&other, dir.path()).status.success());
    assert_ne!(first, std::fs::read(dir.path().join("points.csv")).unwrap());
}
