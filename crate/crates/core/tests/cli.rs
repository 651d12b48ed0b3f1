use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

use iioss::cert::Certificate;

fn iioss(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_iioss"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn report(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn write_cert(dir: &Path, name: &str, c: &Certificate) -> String {
    let path = dir.join(name);
    fs::write(&path, c.to_json()).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn check_ct_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let good = write_cert(dir.path(), "good.json", &Certificate::scalar(1.0, 1.0, 1.0, 1.0).unwrap());
    let out = iioss(&["check-ct", "--builtin", "scalar_linear", "--cert", &good]);
    assert_eq!(out.status.code(), Some(0));
    let doc = report(&out);
    assert_eq!(doc["tool"], "iioss");
    assert_eq!(doc["command"], "check-ct");
    assert_eq!(doc["report"]["violations"], 0);
    assert_eq!(doc["report"]["total_points"], 121);

    let bad = write_cert(dir.path(), "bad.json", &Certificate::scalar(1.0, 1.0, 1.0, 10.0).unwrap());
    let out = iioss(&["check-ct", "--builtin", "scalar_linear", "--cert", &bad]);
    assert_eq!(out.status.code(), Some(1));
    assert!(report(&out)["report"]["violations"].as_u64().unwrap() > 0);
}

#[test]
fn errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let cert = write_cert(dir.path(), "c.json", &Certificate::scalar(1.0, 1.0, 1.0, 1.0).unwrap());
    let missing = dir.path().join("nope.grid");
    let out = iioss(&[
        "check-ct",
        "--builtin",
        "scalar_linear",
        "--grid",
        missing.to_str().unwrap(),
        "--cert",
        &cert,
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("nope.grid"));

    let out = iioss(&["check-ct", "--builtin", "no_such_model", "--cert", &cert]);
    assert_eq!(out.status.code(), Some(2));

    // dimension mismatch: a 2x2 P for a scalar system
    let wide = Certificate::new(
        iioss::SymMatrix::identity(2),
        iioss::SymMatrix::identity(1),
        iioss::SymMatrix::identity(1),
        1.0,
    )
    .unwrap();
    let wide = write_cert(dir.path(), "wide.json", &wide);
    let out = iioss(&["check-ct", "--builtin", "scalar_linear", "--cert", &wide]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn model_and_grid_files() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("lin.model");
    fs::write(&model, "dims 1 1 0 1\nf1 = -2*x1 + u1\nh1 = x1\n").unwrap();
    let grid = dir.path().join("lin.grid");
    fs::write(&grid, "# x1\n-1 1 5\n# u1\n-1 1 3\n").unwrap();
    let cert = write_cert(dir.path(), "c.json", &Certificate::scalar(1.0, 1.0, 1.0, 2.0).unwrap());
    let out = iioss(&[
        "check-ct",
        "--model",
        model.to_str().unwrap(),
        "--grid",
        grid.to_str().unwrap(),
        "--cert",
        &cert,
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(report(&out)["report"]["total_points"], 15);
}

#[test]
fn transfer_then_check_dt() {
    let dir = tempfile::tempdir().unwrap();
    let cert = write_cert(dir.path(), "c.json", &Certificate::scalar(1.0, 1.0, 1.0, 1.0).unwrap());
    let out_path = dir.path().join("transfer.json");
    let out = iioss(&[
        "transfer",
        "--builtin",
        "scalar_linear",
        "--cert",
        &cert,
        "--tau",
        "0.1",
        "--samples",
        "500",
        "--out",
        out_path.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let doc: Value = serde_json::from_str(&fs::read_to_string(&out_path).unwrap()).unwrap();
    let rep = &doc["report"];
    assert!((rep["tau1"].as_f64().unwrap() - 0.5).abs() < 1e-9);
    assert_eq!(rep["binding_constraint"], "alpha_inv");
    assert_eq!(rep["certified"], true);
    assert_eq!(rep["lyapunov"]["violations"], 0);

    let dc_path = dir.path().join("dt.json");
    fs::write(&dc_path, rep["dt_certificate"].to_string()).unwrap();
    let out = iioss(&[
        "check-dt",
        "--builtin",
        "scalar_linear",
        "--cert",
        dc_path.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(report(&out)["report"]["scheme"], "euler");

    // at or beyond tau1 the transfer is refused with exit 1
    let out = iioss(&["transfer", "--builtin", "scalar_linear", "--cert", &cert, "--tau", "0.6"]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(report(&out)["report"]["certified"], false);
}

#[test]
fn consistency_and_builtins() {
    let out = iioss(&[
        "consistency",
        "--builtin",
        "reactor",
        "--points",
        "4",
        "--scheme",
        "rk2",
        "--taus",
        "0.5,0.1",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let doc = report(&out);
    assert_eq!(doc["report"]["sweeps"].as_array().unwrap().len(), 2);

    // Euler defects are rounding noise and must not count as violations
    let out = iioss(&[
        "consistency", "--builtin", "reactor", "--points", "5", "--taus", "1,0.1,0.01",
    ]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(report(&out)["report"]["bound_satisfied"], true);

    let out = iioss(&["builtins"]);
    assert_eq!(out.status.code(), Some(0));
    let names = report(&out)["report"]["builtins"].clone();
    assert!(names.as_array().unwrap().iter().any(|n| n == "reactor"));
}

#[test]
fn synth_writes_certificate() {
    let dir = tempfile::tempdir().unwrap();
    let cert_out = dir.path().join("found.json");
    let out = iioss(&[
        "synth",
        "--builtin",
        "scalar_linear",
        "--points",
        "5",
        "--stop-at-first",
        "--seed",
        "3",
        "--cert-out",
        cert_out.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let doc = report(&out);
    assert_eq!(doc["seed"], 3);
    assert!(doc["report"]["synth_log"].as_array().is_some());
    let found = Certificate::from_json(&fs::read_to_string(&cert_out).unwrap()).unwrap();
    assert!(found.kappa > 0.0);

    let out = iioss(&["synth", "--builtin", "zero", "--points", "3", "--max-iters", "200"]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(report(&out)["report"]["feasible"], false);
}

#[test]
fn bench_small() {
    let out = iioss(&["bench", "--points", "5", "--repeats", "1"]);
    assert_eq!(out.status.code(), Some(0));
    let doc = report(&out);
    assert_eq!(doc["report"]["adt"]["points"], 125);
    assert_eq!(doc["seed"], Value::Null);
}

#[test]
fn usage_errors() {
    assert_eq!(iioss(&["--version"]).status.code(), Some(0));
    assert_eq!(iioss(&["check-ct"]).status.code(), Some(2));
    assert_eq!(iioss(&["transfer", "--scheme", "rk4"]).status.code(), Some(2));
}

#[test]
fn consistency_hand_values() {
    // scalar_linear, RK2: defect (tau/2)|A^2| = 0.05, rho = (tau/2) L_f^2 = 0.1
    let out = iioss(&["consistency", "--builtin", "scalar_linear", "--scheme", "rk2", "--taus", "0.1"]);
    assert_eq!(out.status.code(), Some(0));
    let sweep = &report(&out)["report"]["sweeps"][0];
    assert!((sweep["max_defect"].as_f64().unwrap() - 0.05).abs() < 1e-15);
    assert!((sweep["rho_of_tau"].as_f64().unwrap() - 0.1).abs() < 1e-15);

    // x' = x^2 on [0, 10] with the sigma term forced to zero: at x = 10 the
    // defect is 40 but rho(0.1) = 0.05 * 20^2 = 20
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("sq.model");
    fs::write(&model, "dims 1 0 0 1\nf1 = x1^2\nh1 = x1\n").unwrap();
    let grid = dir.path().join("sq.grid");
    fs::write(&grid, "0 10 11\n").unwrap();
    let out = iioss(&[
        "consistency",
        "--model",
        model.to_str().unwrap(),
        "--grid",
        grid.to_str().unwrap(),
        "--scheme",
        "rk2",
        "--sigma-slope",
        "0",
        "--taus",
        "0.1",
    ]);
    assert_eq!(out.status.code(), Some(1));
    let sweep = &report(&out)["report"]["sweeps"][0];
    assert!((sweep["max_defect"].as_f64().unwrap() - 40.0).abs() < 1e-12);
}

#[test]
fn reactor_rk2_transfer_at_half_tau1() {
    use iioss::builtins::{builtin_model, default_grid};
    use iioss::discretize::SchemeId;
    use iioss::synth::{synthesize_certificate, SynthOptions};
    use iioss::transfer::{best_for_transfer, consistency_bound_for, TransferConfig};

    let sys = builtin_model("reactor").unwrap();
    let grid = default_grid(&sys, "reactor", 10).unwrap();
    let synth = synthesize_certificate(&sys, &grid, &SynthOptions::default()).unwrap();
    let cfg = TransferConfig {
        scheme: SchemeId::Rk2,
        ..TransferConfig::default()
    };
    let (bound, _) = consistency_bound_for(&sys, &grid, &cfg).unwrap();
    let (k, _) = best_for_transfer(synth.feasible_kappas.iter().map(|f| &f.certificate), &bound).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let cert = write_cert(dir.path(), "reactor.json", &synth.feasible_kappas[k].certificate);

    let out = iioss(&[
        "transfer", "--builtin", "reactor", "--points", "10", "--scheme", "rk2", "--cert", &cert,
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let rep = &report(&out)["report"];
    let (tau, tau1) = (rep["tau"].as_f64().unwrap(), rep["tau1"].as_f64().unwrap());
    assert_eq!(tau, 0.5 * tau1);
    assert_eq!(rep["dt_check"]["violations"], 0);
    assert_eq!(rep["lyapunov"]["violations"], 0);
}
