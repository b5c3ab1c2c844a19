use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_smc-synth"))
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn write_json(dir: &Path, name: &str, v: &Value) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, serde_json::to_string_pretty(v).unwrap()).unwrap();
    p
}

fn cfg(name: &str) -> String {
    configs().join(name).display().to_string()
}

fn example1_vsc(dir: &Path, edit: impl FnOnce(&mut Value)) -> PathBuf {
    let text = std::fs::read_to_string(configs().join("example1_vsc.json")).unwrap();
    let mut v: Value = serde_json::from_str(&text).unwrap();
    edit(&mut v);
    write_json(dir, "scenario.json", &v)
}

#[test]
fn missing_config_names_the_path() {
    let o = run(&["synth", "--config", "/nonexistent/scenario.json"]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("/nonexistent/scenario.json"), "{}", stderr(&o));
}

#[test]
fn zero_xi_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let c = example1_vsc(dir.path(), |v| v["xi_or_mu"] = 0.0.into());
    let o = run(&["synth", "--config", c.to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("xi must be positive"), "{}", stderr(&o));
}

#[test]
fn malformed_scenarios_are_input_errors() {
    let dir = tempfile::tempdir().unwrap();
    let both = example1_vsc(dir.path(), |v| v["system"]["vertices"] = serde_json::json!([[[1.0]]]));
    assert_eq!(code(&run(&["synth", "--config", both.to_str().unwrap()])), 1);
    let short = example1_vsc(dir.path(), |v| v["sigma0"] = serde_json::json!([1.0]));
    let o = run(&["synth", "--config", short.to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("sigma0"));
}

#[test]
fn synth_example_one_has_half_second_bound() {
    let o = run(&["synth", "--config", &cfg("example1_vsc.json")]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let d: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(d["law"], "vsc");
    assert!((d["t_bound"].as_f64().unwrap() - 0.5).abs() < 1e-9);
}

#[test]
fn synth_then_verify_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    for name in ["example1_vsc", "example1_uvc"] {
        let design = dir.path().join(format!("{name}.json"));
        let c = cfg(&format!("{name}.json"));
        let o = run(&["synth", "--config", &c, "--out", design.to_str().unwrap()]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        let o = run(&["verify", "--design", design.to_str().unwrap(), "--config", &c]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        let report: Value = serde_json::from_str(&stdout(&o)).unwrap();
        assert!(report["margin"].as_f64().unwrap() < 0.0);
        assert_eq!(report["rho_consistent"], true);
        // Writing the verified design again gives the same margin.
        let again = dir.path().join("again.json");
        run(&["verify", "--design", design.to_str().unwrap(), "--config", &c, "--out", again.to_str().unwrap()]);
        let o2 = run(&["verify", "--design", again.to_str().unwrap(), "--config", &c]);
        let r2: Value = serde_json::from_str(&stdout(&o2)).unwrap();
        assert_eq!(report["margin"], r2["margin"]);
    }
}

#[test]
fn infeasible_synthesis_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let c = example1_vsc(dir.path(), |v| {
        v["system"] = serde_json::json!({ "vertices": [[[1.0]], [[-1.0]]] });
        v["sigma0"] = serde_json::json!([1.0]);
    });
    let o = run(&["synth", "--config", c.to_str().unwrap()]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
}

#[test]
fn zero_gain_is_not_certified() {
    let dir = tempfile::tempdir().unwrap();
    let design = write_json(dir.path(), "zero.json", &serde_json::json!({
        "law": "vsc",
        "k": [[0.0, 0.0], [0.0, 0.0]]
    }));
    let o = run(&["verify", "--design", design.to_str().unwrap(), "--config", &cfg("example1_vsc.json")]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
}

#[test]
fn reference_uvc_gain_is_certified() {
    let o = run(&[
        "verify",
        "--design",
        &cfg("example1_uvc_reference_gain.json"),
        "--config",
        &cfg("example1_uvc.json"),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
}

#[test]
fn reference_vsc_gain_reaches_within_half_second_at_vertex_three() {
    let dir = tempfile::tempdir().unwrap();
    let prefix = dir.path().join("trace");
    let o = run(&[
        "simulate",
        "--design",
        &cfg("example1_vsc_reference_gain.json"),
        "--config",
        &cfg("example1_vsc.json"),
        "--vertex",
        "3",
        "--out",
        prefix.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let reach: Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("trace.reach.json")).unwrap()).unwrap();
    let t = reach["reach_time"].as_f64().unwrap();
    assert!(t < 0.5, "reach time {t}");
    let csv = std::fs::read_to_string(dir.path().join("trace.csv")).unwrap();
    assert!(csv.starts_with("t,sigma_1,sigma_2,u_1,u_2,lyap\n"));
}

#[test]
fn simulate_rejects_bad_plant_selection() {
    let dir = tempfile::tempdir().unwrap();
    let prefix = dir.path().join("trace");
    let base = [
        "simulate",
        "--design",
        &cfg("example1_vsc_reference_gain.json"),
        "--config",
        &cfg("example1_vsc.json"),
        "--out",
        prefix.to_str().unwrap(),
    ];
    let mut args = base.to_vec();
    args.extend(["--alpha", "0.2,0.3,0.5"]);
    assert_eq!(code(&run(&args)), 1);
    let mut args = base.to_vec();
    args.extend(["--vertex", "5"]);
    assert_eq!(code(&run(&args)), 1);
    let mut args = base.to_vec();
    args.extend(["--vertex", "0"]);
    assert_eq!(code(&run(&args)), 1);
}

#[test]
fn simulate_from_origin_reaches_immediately() {
    let dir = tempfile::tempdir().unwrap();
    let c = example1_vsc(dir.path(), |v| {
        v["sigma0"] = serde_json::json!([0.0, 0.0]);
        v["sim"]["horizon"] = 0.01.into();
    });
    let prefix = dir.path().join("origin");
    let o = run(&[
        "simulate",
        "--design",
        &cfg("example1_vsc_reference_gain.json"),
        "--config",
        c.to_str().unwrap(),
        "--alpha",
        "0.25,0.25,0.25,0.25",
        "--out",
        prefix.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let reach: Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("origin.reach.json")).unwrap()).unwrap();
    assert_eq!(reach["reach_time"].as_f64(), Some(0.0));
    let csv = std::fs::read_to_string(dir.path().join("origin.csv")).unwrap();
    for line in csv.lines().skip(1) {
        let cols: Vec<f64> = line.split(',').map(|s| s.parse().unwrap()).collect();
        assert!(cols[1..].iter().all(|v| *v == 0.0), "{line}");
    }
}

#[test]
fn single_point_sweep_matches_synth() {
    let dir = tempfile::tempdir().unwrap();
    let c = cfg("example2_uvc.json");
    let out = dir.path().join("sweep.csv");
    let o = run(&["sweep", "--config", &c, "--grid", "32.9034:32.9034:1", "--out", out.to_str().unwrap(), "--jobs", "1"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let csv = std::fs::read_to_string(&out).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "param,T_bound,status");
    assert_eq!(lines.len(), 2);
    let cols: Vec<&str> = lines[1].split(',').collect();
    assert_eq!(cols[2], "ok");
    let t_sweep: f64 = cols[1].parse().unwrap();

    let o = run(&["synth", "--config", &c]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let d: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(d["t_bound"].as_f64().unwrap(), t_sweep);
}

#[test]
fn empty_or_malformed_grid_is_an_input_error() {
    for grid in ["1:2:0", "1:2", "a:b:c", "-1:2:3"] {
        let o = run(&["sweep", "--config", &cfg("example2_vsc.json"), "--grid", grid]);
        assert_eq!(code(&o), 1, "grid {grid}");
    }
}

#[test]
fn montecarlo_is_reproducible_for_a_seed() {
    let dir = tempfile::tempdir().unwrap();
    let design = cfg("example1_uvc_reference_gain.json");
    let c = cfg("example1_uvc.json");
    let mut reports = Vec::new();
    for name in ["a.json", "b.json"] {
        let out = dir.path().join(name);
        let o = run(&[
            "montecarlo", "--design", &design, "--config", &c, "--trials", "3", "--seed", "11", "--out",
            out.to_str().unwrap(),
        ]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        reports.push(std::fs::read_to_string(&out).unwrap());
    }
    assert_eq!(reports[0], reports[1]);
    let r: Value = serde_json::from_str(&reports[0]).unwrap();
    assert_eq!(r["trials"].as_array().unwrap().len(), 3);
}
