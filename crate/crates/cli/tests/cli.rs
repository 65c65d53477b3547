use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tariff_cli::{exit, ResultRecord};

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios").join(name)
}

fn tariff(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tariff")).args(args).output().expect("binary runs")
}

fn run_on(cmd: &str, path: &Path, extra: &[&str]) -> Output {
    let mut args = vec![cmd, "--scenario", path.to_str().unwrap()];
    args.extend_from_slice(extra);
    tariff(&args)
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr_record(o: &Output) -> Value {
    serde_json::from_str(String::from_utf8_lossy(&o.stderr).lines().last().expect("an error record")).unwrap()
}

fn write_scenario(dir: &tempfile::TempDir, text: &str) -> PathBuf {
    let path = dir.path().join("scenario.toml");
    std::fs::write(&path, text).unwrap();
    path
}

#[test]
fn sweep_csv_is_deterministic() {
    let path = scenario("three_groups_bottom_heavy.toml");
    let args = ["--s-max", "30", "--j", "1,2,3"];
    let a = run_on("sweep", &path, &args);
    let b = run_on("sweep", &path, &args);
    assert_eq!(a.status.code(), Some(exit::OK as i32));
    assert_eq!(a.stdout, b.stdout);
    let text = stdout(&a);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("schema=1"));
    assert_eq!(lines.next(), Some("scheme,S,J,revenue,gain_vs_sp,k_eff"));
    assert_eq!(lines.count(), 3 * 3001);
    assert!(text.contains("\nSP,0.01,1,"));
    assert!(text.contains("\nCP,30,3,"));
}

#[test]
fn sweep_reports_peaks() {
    let out = run_on("sweep", &scenario("three_groups_even.toml"), &["--format", "json-lines", "--j", "2,3"]);
    assert!(out.status.success());
    let text = stdout(&out);
    let summary: Value = serde_json::from_str(text.lines().last().unwrap()).unwrap();
    assert_eq!(summary["summary"], "CP");
    assert_eq!(summary["peaks"], serde_json::json!([16.5, 99.0]));
}

#[test]
fn out_flag_writes_file() {
    let dir = tempfile::tempdir().unwrap();
    let target = dir.path().join("result.csv");
    let out = run_on("solve-sp", &scenario("five_groups.toml"), &["--out", target.to_str().unwrap()]);
    assert!(out.status.success());
    assert!(out.stdout.is_empty());
    let text = std::fs::read_to_string(target).unwrap();
    assert!(text.lines().nth(2).unwrap().starts_with("SP,100,1,"));
}

#[test]
fn solve_pp_five_group_gain() {
    let out = run_on("solve-pp", &scenario("five_groups.toml"), &["--format", "json-lines"]);
    assert!(out.status.success());
    let rec: ResultRecord = serde_json::from_str(stdout(&out).trim()).unwrap();
    assert_eq!((rec.scheme.as_str(), rec.j, rec.k_eff), ("PP2", 2, 5));
    assert!((rec.gain_vs_sp - 0.148).abs() < 5e-4, "{}", rec.gain_vs_sp);
    assert!(!rec.flags.capped);
    let used: f64 = rec.allocations.iter().zip([2.0, 3.0, 5.0, 10.0, 80.0]).map(|(s, n)| s * n).sum();
    assert!((used - 100.0).abs() < 1e-9);
}

#[test]
fn solvers_agree_at_degenerate_counts() {
    let path = scenario("three_groups_top_heavy.toml");
    let row = |cmd: &str, extra: &[&str]| {
        let text = stdout(&run_on(cmd, &path, extra));
        let line = text.lines().nth(2).unwrap().to_string();
        line.split(',').nth(3).unwrap().to_string()
    };
    assert_eq!(row("solve-pp", &["--j", "1"]), row("solve-sp", &[]));
    assert_eq!(row("solve-pp", &["--j", "3"]), row("solve-cp", &[]));
    assert_eq!(row("solve-pp", &["--j", "7"]), row("solve-cp", &[]));
}

#[test]
fn supply_override() {
    let out = run_on("solve-cp", &scenario("five_groups.toml"), &["--supply", "0"]);
    assert!(out.status.success());
    assert_eq!(stdout(&out).lines().nth(2), Some("CP,0,5,0,0,0"));
    let bad = run_on("solve-cp", &scenario("five_groups.toml"), &["--supply", "-1"]);
    assert_eq!(bad.status.code(), Some(exit::PARSE as i32));
}

#[test]
fn check_ic_two_groups() {
    let out = run_on("check-ic", &scenario("two_group_menu.toml"), &[]);
    assert!(out.status.success());
    let v: Value = serde_json::from_str(stdout(&out).trim()).unwrap();
    let t = v["t_thresholds"][0].as_f64().unwrap();
    assert!((t - 1.7562).abs() < 1e-4, "{t}");
    assert_eq!(v["feasible"], true);
}

#[test]
fn design_menu_two_groups() {
    let out = run_on("design-menu", &scenario("two_group_menu.toml"), &["--placement", "midpoint"]);
    assert!(out.status.success());
    let v: Value = serde_json::from_str(stdout(&out).trim()).unwrap();
    assert_eq!(v["selection"]["compatible"], true);
    assert!((v["selection"]["revenue"].as_f64().unwrap() - 3.5).abs() < 1e-9);
    let steps = v["menu"]["steps"].as_array().unwrap();
    assert_eq!(steps.len(), 2);
    assert_eq!(steps[0]["price"], 1.0);
    assert_eq!(steps[1]["price"], 0.5);
}

#[test]
fn infeasible_menu_exits_three() {
    for cmd in ["check-ic", "design-menu"] {
        let out = run_on(cmd, &scenario("five_groups.toml"), &[]);
        assert_eq!(out.status.code(), Some(exit::INFEASIBLE as i32), "{cmd}");
        assert_eq!(stderr_record(&out)["error"], "infeasible");
        assert!(!out.stdout.is_empty());
    }
}

#[test]
fn verify_passes() {
    let out = run_on("verify", &scenario("three_groups_bottom_heavy.toml"), &["--seed", "7", "--cases", "40"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let reports: Vec<Value> = stdout(&out).lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(reports.len(), 8);
    assert!(reports.iter().all(|r| r["pass"] == true));
    assert!(reports.iter().any(|r| r["subject"] == "random" && r["cases"].as_u64().unwrap() >= 40));
}

#[test]
fn schema_errors_exit_two_with_context() {
    let dir = tempfile::tempdir().unwrap();
    let cases: [(&str, &str, Option<u64>); 6] = [
        ("supply = 1.0\ngroups = []\n", "at least one group", Some(2)),
        ("supply = 1.0\n[[groups]]\ntheta = 2.0\nn = 1\nweight = 3\n", "weight", Some(5)),
        ("supply = 1.0\n[[groups]]\ntheta = -2.0\nn = 1\n", "groups[0].theta", Some(3)),
        ("supply = 1.0\n[[groups]]\ntheta = 2.0\nn = -4\n", "groups[0].n", Some(4)),
        ("supply = -1.0\n[[groups]]\ntheta = 2.0\nn = 1\n", "supply", Some(1)),
        ("supply = 1.0\n[[groups]\ntheta = 2.0\n", "", Some(2)),
    ];
    for (text, needle, line) in cases {
        let out = run_on("solve-cp", &write_scenario(&dir, text), &[]);
        assert_eq!(out.status.code(), Some(exit::PARSE as i32), "{text}");
        let err = stderr_record(&out);
        assert!(err["message"].as_str().unwrap().contains(needle), "{err}");
        assert_eq!(err["line"].as_u64(), line, "{err}");
        assert!(out.stdout.is_empty() || stdout(&out).trim().is_empty());
    }
}

#[test]
fn duplicate_theta_names_both_entries() {
    let dir = tempfile::tempdir().unwrap();
    let text = "supply = 1.0\n\n[[groups]]\ntheta = 2.0\nn = 1\n\n[[groups]]\ntheta = 1.0\nn = 1\n\n[[groups]]\ntheta = 2.0\nn = 5\n";
    let out = run_on("solve-sp", &write_scenario(&dir, text), &[]);
    assert_eq!(out.status.code(), Some(exit::PARSE as i32));
    let err = stderr_record(&out);
    let msg = err["message"].as_str().unwrap();
    assert!(msg.contains("groups[0] (line 3)") && msg.contains("groups[2] (line 11)"), "{msg}");
    assert_eq!(err["field"], "groups[2].theta");
}

#[test]
fn missing_file_exits_one() {
    let out = tariff(&["solve-cp", "--scenario", "/nonexistent/scenario.toml"]);
    assert_eq!(out.status.code(), Some(exit::OTHER as i32));
    assert_eq!(stderr_record(&out)["error"], "io");
}

#[test]
fn bad_arguments_exit_two() {
    let out = tariff(&["solve-pp", "--scenario", scenario("five_groups.toml").to_str().unwrap(), "--j", "0"]);
    assert_eq!(out.status.code(), Some(exit::PARSE as i32));
    let out = tariff(&["solve-pp", "--bogus"]);
    assert_eq!(out.status.code(), Some(2));
}
