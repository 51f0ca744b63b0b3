use std::process::Command;

use ellipsoid_cr_cli::{run, EXIT_FAIL, EXIT_PASS, EXIT_USAGE};
use serde_json::Value;

fn json_run(args: &[&str]) -> (i32, Value) {
    let mut argv = vec!["ellipsoid-cr"];
    argv.extend_from_slice(args);
    argv.push("--json");
    let out = run(argv);
    assert!(out.stderr.is_empty(), "{}", out.stderr);
    (out.code, serde_json::from_str(&out.stdout).expect("json report"))
}

fn check<'a>(report: &'a Value, name: &str) -> &'a Value {
    report["checks"].as_array().unwrap().iter().find(|c| c["name"] == name).unwrap_or_else(|| panic!("no check {name}"))
}

#[test]
fn scalar_curvature_at_reference_point() {
    let (code, r) = json_run(&[
        "invariants",
        "--signature",
        "m=2;n=2,1",
        "--point",
        r#"{"z":[[1,0],[0,0],[0,0]],"t":0}"#,
    ]);
    assert_eq!(code, EXIT_PASS);
    assert_eq!(r["schema"], 1);
    assert_eq!(r["command"], "invariants");
    assert_eq!(r["signature"], "m=2;n=2,1");
    assert!((r["values"]["scalar"].as_f64().unwrap() + 0.5).abs() < 1e-12);
    assert!((r["values"]["ricci"][1][1][0].as_f64().unwrap() + 2.0).abs() < 1e-12);
}

#[test]
fn dilation_factor_at_every_sample() {
    let (code, r) = json_run(&["verify-map", "--signature", "m=2;n=2,1", "--map", "dil(r=2)", "--samples", "20"]);
    assert_eq!(code, EXIT_PASS);
    let lambda = r["values"]["lambda"].as_array().unwrap();
    assert_eq!(lambda.len(), 20);
    assert!(lambda.iter().all(|l| (l.as_f64().unwrap() - 4.0).abs() < 1e-12));
}

#[test]
fn selftest_passes() {
    let (code, r) = json_run(&["selftest", "--signature", "m=2,2;n=2,2,0", "--seed", "7"]);
    assert_eq!(code, EXIT_PASS, "{r:#}");
    assert_eq!(r["pass"], true);
    assert_eq!(r["seed"], 7);
    assert!(r["checks"].as_array().unwrap().len() > 30);
}

#[test]
fn reports_are_deterministic() {
    for args in [
        vec!["selftest", "--signature", "m=2;n=2,1", "--seed", "3", "--json"],
        vec!["lee-check", "--signature", "m=2,3;n=2,2,1", "--map", "inv . phi(a=[0.2i];t0=1)", "--samples", "5", "--json"],
        vec!["classify", "--signature", "m=2;n=2,1", "--map", "dil(r=0.5) . inv . phi(a=[0.1];t0=0.3)", "--json"],
    ] {
        let mut argv = vec!["ellipsoid-cr"];
        argv.extend(args);
        let a = run(argv.clone());
        let b = run(argv);
        assert_eq!(a.code, EXIT_PASS, "{}", a.stderr);
        assert_eq!(a.stdout, b.stdout);
    }
}

#[test]
fn classify_map_mode() {
    let (code, r) = json_run(&["classify", "--signature", "m=2;n=2,1", "--map", "psi(b=[0.3];t0=0.2) . dil(r=2) . inv . phi(a=[0.1-0.4i];t0=-0.5)"]);
    assert_eq!(code, EXIT_PASS, "{r:#}");
    assert_eq!(r["values"]["j"], "inversion");
    assert!((r["values"]["r"].as_f64().unwrap() - 2.0).abs() < 1e-8);
    assert!((r["values"]["a_t0"].as_f64().unwrap() + 0.5).abs() < 1e-8);
    assert!(check(&r, "held_out_reconstruction")["pass"].as_bool().unwrap());
}

#[test]
fn classify_from_emitted_samples() {
    let path = std::env::temp_dir().join(format!("ellipsoid-cr-samples-{}.json", std::process::id()));
    let path = path.to_str().unwrap();
    let (code, _) = json_run(&[
        "classify",
        "--signature",
        "m=2;n=2,0",
        "--map",
        "psi(t0=0.1) . dil(r=0.7) . inv . phi(t0=0.4)",
        "--emit-samples",
        path,
    ]);
    assert_eq!(code, EXIT_PASS);
    let (code, r) = json_run(&["classify", "--samples", path]);
    std::fs::remove_file(path).ok();
    assert_eq!(code, EXIT_PASS, "{r:#}");
    assert_eq!(r["values"]["j"], "inversion");
    assert!((r["values"]["r"].as_f64().unwrap() - 0.7).abs() < 1e-8);
}

#[test]
fn usage_errors_exit_two() {
    for args in [
        vec!["ellipsoid-cr", "invariants"],
        vec!["ellipsoid-cr", "invariants", "--signature", "m=1;n=2,1"],
        vec!["ellipsoid-cr", "verify-map", "--signature", "n=2", "--map", "dil(r=)"],
        vec!["ellipsoid-cr", "invariants", "--signature", "n=2", "--point", r#"{"z":[[1,0]],"t":0}"#],
        vec!["ellipsoid-cr", "frobnicate"],
    ] {
        assert_eq!(run(args.clone()).code, EXIT_USAGE, "{args:?}");
    }
}

#[test]
fn computational_failures_exit_one() {
    let out = run(["ellipsoid-cr", "invariants", "--signature", "m=2;n=2,1", "--point", r#"{"z":[[0,0],[0,0],[1,0]],"t":0}"#]);
    assert_eq!(out.code, EXIT_FAIL);
    assert!(!out.stderr.is_empty());
}

#[test]
fn binary_exit_codes() {
    let bin = env!("CARGO_BIN_EXE_ellipsoid-cr");
    let ok = Command::new(bin).args(["verify-map", "--signature", "m=2;n=2,1", "--map", "inv", "--samples", "3"]).output().unwrap();
    assert_eq!(ok.status.code(), Some(EXIT_PASS));
    assert!(String::from_utf8_lossy(&ok.stdout).contains("all checks pass"));
    let bad = Command::new(bin).args(["cone"]).output().unwrap();
    assert_eq!(bad.status.code(), Some(EXIT_USAGE));
}
