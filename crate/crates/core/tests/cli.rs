//! The `comgrasp` binary end to end: exit codes and written files.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn comgrasp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_comgrasp")).args(args).output().unwrap()
}

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios").join(name)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn detect_lists_handles_of_a_scenario() {
    let out = comgrasp(&["detect", "--scenario", s(&scenario("exp11_drill.toml")), "--noiseless"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("handles"), "{text}");
    assert!(text.contains("visual"), "{text}");
}

fn field(text: &str, prefix: &str) -> Vec<f64> {
    let line = text.lines().find(|l| l.starts_with(prefix)).unwrap_or_else(|| panic!("no {prefix} in {text}"));
    line[prefix.len()..].split_whitespace().map_while(|t| t.parse().ok()).collect()
}

#[test]
fn detect_finds_the_rod_handles_and_a_central_com() {
    let out = comgrasp(&["detect", "--scenario", s(&scenario("exp1_rod_weights.toml")), "--noiseless"]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(field(&text, "handles:")[0] >= 95.0, "{text}");
    assert!(field(&text, "visual CoM:")[0].abs() < 0.08);
}

#[test]
fn detect_puts_the_hammer_com_in_its_head() {
    let out = comgrasp(&["detect", "--scenario", s(&scenario("exp10_hammer.toml")), "--noiseless"]);
    let text = String::from_utf8(out.stdout).unwrap();
    let com = field(&text, "visual CoM:");
    // head spans x 0.10..0.24
    assert!((0.10..=0.24).contains(&com[0]), "{text}");
}

#[test]
fn detect_on_an_empty_cloud_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let pcd = dir.path().join("empty.pcd");
    std::fs::write(
        &pcd,
        "VERSION 0.7\nFIELDS x y z\nSIZE 4 4 4\nTYPE F F F\nCOUNT 1 1 1\nWIDTH 0\nHEIGHT 1\nPOINTS 0\nDATA ascii\n",
    )
    .unwrap();
    let out = comgrasp(&["detect", "--cloud", s(&pcd)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));
}

#[test]
fn detect_needs_exactly_one_input() {
    assert!(!comgrasp(&["detect"]).status.success());
    let both = comgrasp(&["detect", "--scenario", "a.toml", "--cloud", "b.pcd"]);
    assert!(!both.status.success());
}

#[test]
fn episode_writes_its_three_files() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("run");
    let out = comgrasp(&["episode", "--scenario", s(&scenario("exp11_drill.toml")), "--seed", "4", "--out", s(&out_dir)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let csv = std::fs::read_to_string(out_dir.join("episode.csv")).unwrap();
    assert!(csv.starts_with("exp_id,rep,iter,d_r,d_v,f_g,tau,d,tau_prime,d_prime,pct,decision\n"));
    assert!(csv.lines().count() >= 2);
    let summary = std::fs::read_to_string(out_dir.join("summary.txt")).unwrap();
    assert!(summary.contains("outcome:"));
    let trace = std::fs::read_to_string(out_dir.join("torque_trace.csv")).unwrap();
    assert!(trace.starts_with("lift,time,tau_x,tau_y,tau_z,tau_norm\n"));
    // 2 s at 100 Hz per lift
    assert!(trace.lines().count() > 200);
}

#[test]
fn light_object_episode_is_one_done_torque_row() {
    let dir = tempfile::tempdir().unwrap();
    let out = comgrasp(&["episode", "--scenario", s(&scenario("exp11_drill.toml")), "--noiseless", "--out", s(dir.path())]);
    assert!(out.status.success());
    let csv = std::fs::read_to_string(dir.path().join("episode.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert_eq!(rows.len(), 1, "{csv}");
    assert!(rows[0].ends_with(",done_torque"));
}

#[test]
fn missing_scenario_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = comgrasp(&["episode", "--scenario", "no/such/file.toml", "--out", s(dir.path())]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn empty_experiment_list_gives_a_header_only_table() {
    let dir = tempfile::tempdir().unwrap();
    let list = dir.path().join("list.toml");
    std::fs::write(&list, "").unwrap();
    let table = dir.path().join("table.csv");
    let out = comgrasp(&["table", "--experiments", s(&list), "--out", s(&table)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(
        std::fs::read_to_string(&table).unwrap(),
        "exp_id,rep,iter,d_r,d_v,f_g,tau,d,tau_prime,d_prime,pct,decision\n"
    );
}
