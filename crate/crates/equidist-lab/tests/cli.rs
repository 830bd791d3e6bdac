use equidist_lab::report::CSV_COLUMNS;
use std::process::{Command, Output};

fn lab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_equidist-lab")).args(args).output().unwrap()
}

fn code(args: &[&str]) -> i32 {
    lab(args).status.code().unwrap()
}

#[test]
fn exit_zero_on_all_pass() {
    assert_eq!(code(&["birch", "--p", "101,211"]), 0);
    assert_eq!(code(&["--help"]), 0);
    assert_eq!(code(&["--version"]), 0);
}

#[test]
fn exit_one_on_violation() {
    let out = lab(&["birch", "--p", "101,211", "--constant", "0.001"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("failed: row p=101"));
}

#[test]
fn exit_two_on_usage_error() {
    assert_eq!(code(&["birch", "--bogus"]), 2);
    assert_eq!(code(&["frobnicate"]), 2);
    assert_eq!(code(&["joint-ec", "--n", "2", "--f-expr", "x3", "--p", "101"]), 2);
    assert_eq!(code(&["joint-ec", "--n", "2", "--f-expr", "x1 +", "--p", "101"]), 2);
    assert_eq!(code(&["birch", "--j", "0.5"]), 2);
    assert_eq!(code(&["joint-mf-prime", "--k", "12,x"]), 2);
}

#[test]
fn csv_output() {
    let out = lab(&["birch", "--p", "101", "--format", "csv"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), CSV_COLUMNS.join(","));
    assert!(lines.next().unwrap().starts_with("birch,p=101,"));
}

#[test]
fn census_csv_sums_to_family_size() {
    let out = lab(&["census", "--p", "5", "--format", "csv"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "p,t,count");
    let total: u64 = lines.map(|l| l.rsplit(',').next().unwrap().parse::<u64>().unwrap()).sum();
    assert_eq!(total, 20);
}

#[test]
fn json_to_file_is_worker_independent() {
    let dir = tempfile::tempdir().unwrap();
    let paths: Vec<_> = ["1", "4"].iter().map(|w| dir.path().join(format!("w{w}.json"))).collect();
    for (w, path) in ["1", "4"].iter().zip(&paths) {
        let args = ["joint-ec", "--n", "2", "--f-expr", "x1*x2", "--j", "0,1", "--p", "101,211", "--workers", w, "--out", path.to_str().unwrap()];
        assert_eq!(code(&args), 0);
    }
    let (a, b) = (std::fs::read(&paths[0]).unwrap(), std::fs::read(&paths[1]).unwrap());
    assert_eq!(a, b);
    let v: serde_json::Value = serde_json::from_slice(&a).unwrap();
    assert_eq!(v["schema_version"], 1);
    assert_eq!(v["all_pass"], true);
}

#[test]
fn negative_interval_flag() {
    let out = lab(&["convolve", "--p", "101", "--lambda", "1,-1", "--j", "-0.2,0.2", "--format", "csv"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}
