use std::path::PathBuf;
use std::process::{Command, Output};

use sag_core::experiment::{parse_csv, CSV_HEADER};

fn sag(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sag"))
        .args(args)
        .env("SAG_THREADS", "2")
        .output()
        .expect("spawn sag")
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("sag-cli-{}-{name}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn run_writes_one_row_per_pass() {
    let o = sag(&[
        "run",
        "--synthetic",
        "150,6,1,4",
        "--passes",
        "4",
        "--seed",
        "2",
    ]);
    assert_eq!(o.status.code(), Some(0));
    let rows = parse_csv(&stdout(&o)).unwrap();
    assert_eq!(rows.len(), 5);
    assert!(rows.iter().all(|r| r.method == "sag" && r.seed == 2));
    assert!(rows[4].train_obj < rows[0].train_obj);
}

#[test]
fn run_is_byte_deterministic() {
    let args = [
        "run",
        "--synthetic",
        "120,5,0.4,9",
        "--method",
        "iag",
        "--passes",
        "3",
    ];
    assert_eq!(sag(&args).stdout, sag(&args).stdout);
}

#[test]
fn out_flag_writes_file() {
    let dir = scratch("out");
    let path = dir.join("m.csv");
    let o = sag(&[
        "run",
        "--synthetic",
        "80,4,1,1",
        "--method",
        "sg",
        "--step",
        "0.1/L",
        "--passes",
        "2",
        "--out",
        path.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0));
    assert!(o.stdout.is_empty());
    let text = std::fs::read_to_string(&path).unwrap();
    assert!(text.starts_with(CSV_HEADER));
    assert_eq!(parse_csv(&text).unwrap()[0].step, "1e-1/L");
    std::fs::remove_dir_all(dir).unwrap();
}

#[test]
fn data_file_source() {
    let dir = scratch("data");
    let path = dir.join("d.svm");
    let mut text = String::new();
    for i in 0..40 {
        let label = if i % 3 == 0 { 1 } else { -1 };
        text.push_str(&format!(
            "{label} 1:{} 3:{}\n",
            i as f64 / 10.0,
            (i % 7) as f64
        ));
    }
    std::fs::write(&path, text).unwrap();
    let o = sag(&[
        "run",
        "--data",
        path.to_str().unwrap(),
        "--lambda",
        "0.01",
        "--passes",
        "2",
    ]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    assert_eq!(parse_csv(&stdout(&o)).unwrap().len(), 3);
    std::fs::remove_dir_all(dir).unwrap();
}

#[test]
fn divergence_exits_two() {
    let o = sag(&[
        "run",
        "--synthetic",
        "50,3,1,0",
        "--method",
        "fg",
        "--step",
        "1e200",
        "--passes",
        "5",
    ]);
    assert_eq!(o.status.code(), Some(2));
    let rows = parse_csv(&stdout(&o)).unwrap();
    assert!(!rows.last().unwrap().train_obj.is_finite());
}

#[test]
fn config_errors_exit_one() {
    for args in [
        vec!["run", "--synthetic", "50,3,1,0", "--method", "nope"],
        vec!["run", "--synthetic", "50,3"],
        vec!["run"],
        vec!["run", "--data", "/nonexistent/file.svm"],
        vec![
            "run",
            "--synthetic",
            "50,3,1,0",
            "--method",
            "fg",
            "--step",
            "linesearch",
        ],
        vec!["grid", "--synthetic", "50,3,1,0", "--method", "pegasos"],
        vec!["check-bounds", "--prop", "7"],
        vec!["frobnicate"],
    ] {
        assert_eq!(sag(&args).status.code(), Some(1), "{args:?}");
    }
}

#[test]
fn bad_thread_override_is_config_error() {
    let o = Command::new(env!("CARGO_BIN_EXE_sag"))
        .args(["run", "--synthetic", "20,2,1,0", "--passes", "1"])
        .env("SAG_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn help_exits_zero() {
    assert_eq!(sag(&["--help"]).status.code(), Some(0));
}

#[test]
fn grid_emits_all_traces() {
    let o = sag(&[
        "grid",
        "--synthetic",
        "100,4,1,3",
        "--method",
        "fg",
        "--grid",
        "powers2",
        "--base",
        "1",
        "--passes",
        "3",
    ]);
    assert_eq!(o.status.code(), Some(0));
    let rows = parse_csv(&stdout(&o)).unwrap();
    assert_eq!(rows.len(), 13 * 4);
    assert!(String::from_utf8_lossy(&o.stderr).contains("best step"));
}

#[test]
fn grid_all_divergent_exits_two() {
    let o = sag(&[
        "grid",
        "--synthetic",
        "60,3,1,0",
        "--method",
        "fg",
        "--base",
        "1e200",
        "--passes",
        "3",
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn check_bounds_lyapunov_passes() {
    let o = sag(&["check-bounds", "--prop", "lyapunov", "--seeds", "20"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert!(stdout(&o).contains("contraction"));
}

#[test]
fn check_bounds_prop1_passes() {
    let o = sag(&["check-bounds", "--prop", "1", "--seeds", "8"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert!(stdout(&o).contains("0 violations"));
}
