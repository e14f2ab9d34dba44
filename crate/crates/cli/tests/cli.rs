use std::fs;
use std::path::PathBuf;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_hierpoly"))
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("hierpoly-cli-{}-{name}", std::process::id()));
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn selftest_passes_on_clean_build() {
    let o = run(&["selftest"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert!(stdout(&o).contains("PASS orthonormality"));
}

#[test]
fn selftest_fault_names_orthonormality() {
    let o = run(&["selftest", "--inject-fault"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("FAIL orthonormality"));
}

#[test]
fn selftest_filter_runs_only_matching_checks() {
    let o = run(&["selftest", "--filter", "addition"]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    assert_eq!(out.lines().count(), 1);
    assert!(out.starts_with("PASS addition"));
}

#[test]
fn stein_writes_table_and_summary() {
    let dir = scratch("stein");
    let o = run(&["stein", "--dims", "4", "--out", dir.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let table = fs::read_to_string(dir.join("stein.csv")).unwrap();
    assert!(table.starts_with("d,k,q,L,link_id,c_g,residual_k,residual_lt_k\n"));
    assert_eq!(table.lines().count(), 2);
    let summary = fs::read_to_string(dir.join("stein_summary.csv")).unwrap();
    assert!(summary.lines().nth(1).unwrap().ends_with("NA,NA"));
    assert!(dir.join("config.txt").exists());
}

#[test]
fn stein_identity_link_has_zero_residual() {
    let dir = scratch("stein-id");
    let o = run(&["stein", "--dims", "4,6", "--link", "0,1", "--out", dir.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let table = fs::read_to_string(dir.join("stein.csv")).unwrap();
    for line in table.lines().skip(1) {
        let r: f64 = line.split(',').nth(6).unwrap().parse().unwrap();
        assert!(r.abs() < 1e-12, "{line}");
    }
}

#[test]
fn stein_capacity_error_exit_code() {
    let dir = scratch("stein-cap");
    let o = run(&["stein", "--dims", "20", "--out", dir.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("requested 20"));
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(run(&["train", "--no-such-flag"]).status.code(), Some(2));
    assert_eq!(run(&["train", "--set", "nonsense=1", "--dry-run"]).status.code(), Some(2));
    assert_eq!(run(&["train", "--mode", "sideways", "--dry-run"]).status.code(), Some(2));
}

#[test]
fn dry_run_prints_config_only() {
    let dir = scratch("dry");
    let out = dir.join("o");
    let o = run(&["train", "--d", "4", "--m1", "40", "--dry-run", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert!(text.contains("m1=40"));
    assert!(text.contains("xi1="));
    assert!(!out.exists());
}

#[test]
fn config_file_values_yield_to_flags() {
    let dir = scratch("layer");
    let cfg = dir.join("c.txt");
    fs::write(&cfg, "# test\nd=5\nn=123\n").unwrap();
    let o = run(&["train", "--config", cfg.to_str().unwrap(), "--n", "77", "--dry-run"]);
    let text = stdout(&o);
    assert!(text.contains("d=5\n"));
    assert!(text.contains("n=77\n"));
}

#[test]
fn train_outputs_and_snapshot_reproduce_run() {
    let dir = scratch("train");
    let a = dir.join("a");
    let o = run(&["train", "--d", "4", "--n", "1500", "--m1", "40", "--seed", "3", "--out", a.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["records.csv", "checkpoint.txt", "config.txt"] {
        assert!(a.join(f).exists(), "{f}");
    }
    let b = dir.join("b");
    let snap = a.join("config.txt");
    let o = run(&["train", "--config", snap.to_str().unwrap(), "--out", b.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(fs::read(a.join("records.csv")).unwrap(), fs::read(b.join("records.csv")).unwrap());
    assert_eq!(fs::read(a.join("checkpoint.txt")).unwrap(), fs::read(b.join("checkpoint.txt")).unwrap());
}

#[test]
fn dump_poly_prints_terms() {
    let dir = scratch("dump");
    let o = run(&["train", "--d", "2", "--n", "200", "--m1", "6", "--m2", "3", "--dump-poly", "--out", dir.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let first = stdout(&o).lines().next().unwrap().to_string();
    assert_eq!(first.split_whitespace().count(), 3, "{first}");
}

#[test]
fn sweep_resume_is_byte_identical() {
    let dir = scratch("sweep");
    let out = dir.to_str().unwrap();
    let args = [
        "sweep", "--dims", "3", "--sizes", "300,600", "--seeds", "0", "--width", "12", "--out", out,
    ];
    let o = run(&args);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let records = fs::read(dir.join("records.csv")).unwrap();
    let summary = fs::read_to_string(dir.join("summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 3);
    fs::remove_file(dir.join("cells/cell0001.summary.csv")).unwrap();
    let before = fs::read(dir.join("cells/cell0000.csv")).unwrap();
    let o = run(&args);
    assert!(stdout(&o).contains("1 run, 1 resumed"), "{}", stdout(&o));
    assert_eq!(fs::read(dir.join("cells/cell0000.csv")).unwrap(), before);
    assert_eq!(fs::read(dir.join("records.csv")).unwrap(), records);
    assert_eq!(fs::read_to_string(dir.join("summary.csv")).unwrap(), summary);
}

#[test]
fn rf1d_writes_grid_table() {
    let dir = scratch("rf1d");
    let o = run(&["rf1d", "--n-mc", "20000", "--grid", "8", "--out", dir.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let table = fs::read_to_string(dir.join("rf1d.csv")).unwrap();
    assert!(table.starts_with("x,estimate,se,target,abs_err\n"));
    assert_eq!(table.lines().count(), 10);
    let summary = fs::read_to_string(dir.join("rf1d_summary.txt")).unwrap();
    assert!(summary.contains("growth_slope="));
}

#[test]
fn rf1d_rejects_light_tailed_bias() {
    let o = run(&["rf1d", "--nu", "3", "--dry-run"]);
    assert_eq!(o.status.code(), Some(0));
    let o = run(&["rf1d", "--nu", "3", "--n-mc", "100", "--out", scratch("nu").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}
