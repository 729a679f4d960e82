use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use gmmcc_core::factory::planar_example;
use gmmcc_core::json::{instance_to_json, solution_to_json};
use gmmcc_core::model::{lp, MiqpModel};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_gmmcc"));
    c.env_remove("GMMCC_SEED");
    c
}

fn run(args: &[&str], dir: &Path) -> Output {
    bin().args(args).current_dir(dir).output().expect("spawn gmmcc")
}

fn ok(args: &[&str], dir: &Path) -> Output {
    let out = run(args, dir);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn scratch() -> tempfile::TempDir {
    tempfile::tempdir().unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

#[test]
fn generate_build_round_trip() {
    let d = scratch();
    let dir = d.path();
    ok(
        &["generate", "--n", "100", "--k", "5", "--theta", "0.999", "--varrho", "2", "--varsigma", "2", "--seed", "7", "--out", "inst.json"],
        dir,
    );
    ok(&["build", "--instance", "inst.json", "--kind", "pwl-o", "--out-dir", "model"], dir);
    let lp_text = std::fs::read_to_string(dir.join("model/model.lp")).unwrap();
    let ir = std::fs::read_to_string(dir.join("model/model.ir.json")).unwrap();
    let parsed = lp::parse(&lp_text).unwrap();
    assert_eq!(parsed.to_json().unwrap(), ir);
    assert_eq!(lp::export(&MiqpModel::from_json(&ir).unwrap()).unwrap(), lp_text);
    assert!(dir.join("model/manifest.json").exists());
    assert!(dir.join("inst.json.manifest.json").exists());
}

#[test]
fn breakpoints_echo_defaults() {
    let d = scratch();
    let out = ok(&["breakpoints", "--theta", "0.95", "--out", "bp.json"], d.path());
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("tau = 0.005,"), "{err}");
    assert!(err.contains("endpoints = ±6.466"), "{err}");
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(d.path().join("bp.json")).unwrap()).unwrap();
    assert_eq!(v["tau"].as_f64(), Some(0.005));
    assert_eq!(v["endpoints"][0].as_f64(), Some(-6.466));
    assert_eq!(v["arrays"].as_array().unwrap().len(), 2);
    assert_eq!(v["arrays"][0]["count"].as_u64(), Some(24));
}

#[test]
fn saa_default_sample_count() {
    let d = scratch();
    let dir = d.path();
    ok(&["generate", "--n", "10", "--k", "5", "--theta", "0.99", "--seed", "1", "--out", "i.json"], dir);
    ok(&["build", "--instance", "i.json", "--kind", "saa", "--theta", "0.95", "--out-dir", "saa"], dir);
    let m = MiqpModel::from_json(&std::fs::read_to_string(dir.join("saa/model.ir.json")).unwrap()).unwrap();
    assert_eq!(m.meta("sample_count"), Some("2000"));
    assert_eq!(m.num_binaries(), 2000);
}

#[test]
fn seed_environment_overrides_flag() {
    let d = scratch();
    let dir = d.path();
    ok(&["generate", "--n", "4", "--k", "2", "--theta", "0.9", "--seed", "5", "--out", "a.json"], dir);
    let out = bin()
        .args(["generate", "--n", "4", "--k", "2", "--theta", "0.9", "--seed", "1", "--out", "b.json"])
        .env("GMMCC_SEED", "5")
        .current_dir(dir)
        .output()
        .unwrap();
    assert!(out.status.success());
    let read = |n: &str| std::fs::read(dir.join(n)).unwrap();
    assert_eq!(read("a.json"), read("b.json"));
    let m: serde_json::Value = serde_json::from_slice(&read("b.json.manifest.json")).unwrap();
    assert_eq!(m["seed"].as_u64(), Some(5));
    assert_eq!(m["seed_source"].as_str(), Some("env"));
    let bad = bin().args(["generate", "--n", "4", "--k", "2", "--theta", "0.9"]).env("GMMCC_SEED", "x").output().unwrap();
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn exit_codes() {
    let d = scratch();
    let dir = d.path();
    assert_eq!(run(&["build"], dir).status.code(), Some(2));
    assert_eq!(run(&["generate", "--n", "4", "--k", "7", "--theta", "0.9", "--weights", "unequal"], dir).status.code(), Some(3));

    write(dir, "broken.json", "{\"schema\": \"gmmcc-instance-v1\"}");
    assert_eq!(run(&["verify", "--instance", "broken.json", "--solution", "x"], dir).status.code(), Some(3));

    let mut inst = planar_example();
    write(dir, "planar.json", &instance_to_json(&inst).unwrap());
    inst.b = -50.0;
    write(dir, "hopeless.json", &instance_to_json(&inst).unwrap());
    let out = run(&["desk-solve", "--instance", "hopeless.json", "--resolution", "16", "--out", "d.json"], dir);
    assert_eq!(out.status.code(), Some(5));
    assert!(std::fs::read_to_string(dir.join("d.json")).unwrap().contains("infeasible_at_resolution"));

    write(dir, "far.json", &solution_to_json(&[15.0, 15.0]).unwrap());
    let args = ["verify", "--instance", "planar.json", "--solution", "far.json", "--require-feasible"];
    assert_eq!(run(&args, dir).status.code(), Some(4));
    assert_eq!(run(&args[..5], dir).status.code(), Some(0));
}

#[test]
fn verify_text_solution() {
    let d = scratch();
    let dir = d.path();
    write(dir, "planar.json", &instance_to_json(&planar_example()).unwrap());
    write(dir, "sol.txt", "# incumbent\nx_1 0.5\nz_1 3.0\nx_2 0.25\n");
    let out = ok(&["verify", "--instance", "planar.json", "--solution", "sol.txt", "--out", "r.json"], dir);
    assert!(out.stdout.is_empty());
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.join("r.json")).unwrap()).unwrap();
    assert_eq!(v["objective"].as_f64(), Some(-0.75));
    assert_eq!(v["tau_feasible"].as_bool(), Some(true));
}

#[test]
fn desk_solve_reports_witness() {
    let d = scratch();
    let dir = d.path();
    write(dir, "planar.json", &instance_to_json(&planar_example()).unwrap());
    ok(&["desk-solve", "--instance", "planar.json", "--resolution", "64", "--refine", "2", "--witness", "--out", "d.json"], dir);
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.join("d.json")).unwrap()).unwrap();
    assert_eq!(v["status"].as_str(), Some("solved"));
    let w = &v["convexity_witness"];
    assert!(w["p_mid"].as_f64().unwrap() < w["level"].as_f64().unwrap());
}

#[test]
fn audit_and_probe() {
    let d = scratch();
    let dir = d.path();
    write(dir, "planar.json", &instance_to_json(&planar_example()).unwrap());
    let out = ok(&["audit", "--instance", "planar.json", "--samples", "500", "--seed", "3"], dir);
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["samples"].as_u64(), Some(500));
    assert!(v["max_outer_gap"].as_f64().unwrap() <= 0.01);
    // With everything on stdout the manifest goes to stderr.
    let m: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(m["command"].as_str(), Some("audit"));

    let out = ok(&["probe", "--kind", "inner", "--taus", "1e-2,1e-3"], dir);
    let csv = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "tau,count,bound_ratio");
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("0.01,15,"));
}

#[test]
fn sequential_flag_gives_identical_bytes() {
    let d = scratch();
    let dir = d.path();
    ok(&["generate", "--n", "30", "--k", "5", "--theta", "0.95", "--seed", "2", "--out", "p.json"], dir);
    ok(&["--sequential", "generate", "--n", "30", "--k", "5", "--theta", "0.95", "--seed", "2", "--out", "s.json"], dir);
    assert_eq!(std::fs::read(dir.join("p.json")).unwrap(), std::fs::read(dir.join("s.json")).unwrap());
}
