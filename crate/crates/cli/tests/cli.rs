use std::path::Path;
use std::process::{Command, Output};

fn wtgfm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wtgfm")).args(args).output().expect("binary runs")
}

const SHORT: [&str; 4] = ["--set", "scenario.duration=12", "--set", r#"scenario.events=[{"time": 2, "delta": 0.004}]"#];

fn out_arg(dir: &Path) -> String {
    dir.to_str().unwrap().to_string()
}

#[test]
fn simulate_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = out_arg(dir.path());
    let mut args = vec!["simulate", "--out", &out, "--plot", "--set", "scenario.v_w=10"];
    args.extend(SHORT);
    let o = wtgfm(&args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let stdout = String::from_utf8(o.stdout).unwrap();
    assert!(stdout.contains("GFM_FR at 10 m/s"));
    for f in ["trace_GFM_FR_10ms.csv", "trace_GFM_FR_10ms.svg", "metrics.json"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
}

#[test]
fn failed_checks_exit_two_unless_disabled() {
    let dir = tempfile::tempdir().unwrap();
    let out = out_arg(dir.path());
    // a large step drives the measured droop away from the design value
    let base = ["--out", &out, "--set", "scenario.duration=12", "--set", r#"scenario.events=[{"time": 2, "delta": 0.4}]"#];
    let mut args = vec!["simulate"];
    args.extend(base);
    assert_eq!(wtgfm(&args).status.code(), Some(2));
    args.push("--no-check");
    assert_eq!(wtgfm(&args).status.code(), Some(0));
}

#[test]
fn compare_writes_all_modes() {
    let dir = tempfile::tempdir().unwrap();
    let out = out_arg(dir.path());
    let mut args = vec!["compare", "--out", &out, "--no-check", "--set", "scenario.v_w=10"];
    args.extend(SHORT);
    let o = wtgfm(&args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("comparison.json")).unwrap()).unwrap();
    assert_eq!(json["runs"].as_array().unwrap().len(), 3);
    for m in ["GFL_MPPT", "GFM_MPPT", "GFM_FR"] {
        assert!(dir.path().join(format!("trace_{m}_10ms.csv")).exists());
    }
}

#[test]
fn deload_table_default_grid() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.csv");
    let o = wtgfm(&["deload-table", "--out", path.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(&path).unwrap();
    assert_eq!(text.lines().next().unwrap(), "v_w,eta,lambda_del,omega_del_pu,beta_del_deg");
    assert!(text.lines().count() > 10);
}

#[test]
fn gain_design_json() {
    let o = wtgfm(&["gain-design", "--preset", "table3", "--set", "scenario.v_w=10"]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["k_theta_gsc"], 0.5);
    assert_eq!(v["status"], "ok");
}

#[test]
fn droop_map_with_plot() {
    let dir = tempfile::tempdir().unwrap();
    let out = out_arg(dir.path());
    let o = wtgfm(&["droop-map", "--preset", "fig7", "--v-grid", "8,10,12", "--eta-grid", "0.9,1", "--plot", "--out", &out]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(dir.path().join("droop_map.csv")).unwrap();
    assert_eq!(csv.lines().count(), 7);
    assert!(dir.path().join("droop_map.svg").exists());
}

#[test]
fn smallsignal_to_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ss.json");
    let o = wtgfm(&["smallsignal", "--mode", "GFM_FR", "--out", path.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(v["stable"], true);
    assert!(v["jacobian_deviation"].as_f64().unwrap() < 1e-8);
}

#[test]
fn configuration_errors_exit_three() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    std::fs::write(&cfg, r#"{"scenario": {"wind": 10}}"#).unwrap();
    assert_eq!(wtgfm(&["simulate", "-c", cfg.to_str().unwrap()]).status.code(), Some(3));
    assert_eq!(wtgfm(&["simulate", "--set", "scenario.dt=0.0003"]).status.code(), Some(3));
    assert_eq!(wtgfm(&["gain-design", "--preset", "nope"]).status.code(), Some(3));
    assert_eq!(wtgfm(&["frobnicate"]).status.code(), Some(3));
    assert_eq!(wtgfm(&["smallsignal", "--mode", "GFL_MPPT"]).status.code(), Some(3));
}

#[test]
fn help_exits_zero() {
    let o = wtgfm(&["--help"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(String::from_utf8(o.stdout).unwrap().contains("droop-map"));
}
