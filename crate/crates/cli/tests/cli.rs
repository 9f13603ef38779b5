use std::path::Path;
use std::process::{Command, Output};

use gradflow::io::{read_convergence, read_timeseries, validate_timeseries};

fn gradflow(args: &[&str], envs: &[(&str, &Path)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_gradflow"));
    cmd.args(args).env_remove("GRADFLOW_OUT");
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn examples_lists_six() {
    let o = gradflow(&["examples"], &[]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert_eq!(text.lines().count(), 6, "{text}");
    for id in 1..=6 {
        assert!(text.lines().any(|l| l.starts_with(&format!("{id} "))), "{text}");
    }
}

#[test]
fn run_writes_files() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("heat");
    let o = gradflow(
        &["run", "--example", "1", "--N", "16", "--k", "2", "--t-final", "0.1", "--snapshots", "0.05", "--out"],
        &[],
    );
    // missing value for --out is a usage error
    assert_eq!(o.status.code(), Some(2));

    let o = gradflow(
        &[
            "run", "--example", "1", "--N", "16", "--k", "2", "--t-final", "0.1", "--snapshots", "0.05,0.1", "--out",
            out.to_str().unwrap(),
        ],
        &[],
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let recs = read_timeseries(&out.join("timeseries.csv")).unwrap();
    validate_timeseries(&recs).unwrap();
    assert_eq!(recs.last().unwrap().t, 0.1);
    assert!(out.join("snapshot_t0.05.csv").exists());
    assert!(out.join("snapshot_t0.1.csv").exists());
    assert!(out.join("config.txt").exists());
}

#[test]
fn unknown_example_is_a_usage_error() {
    let o = gradflow(&["run", "--example", "9"], &[]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("unknown example 9"), "{err}");
    assert!(err.contains("Usage"), "{err}");
}

#[test]
fn bad_flag_values_exit_2() {
    for args in [
        &["run", "--N", "1"][..],
        &["run", "--t-final", "nan"],
        &["run", "--integrator", "leapfrog"],
        &["run", "--k", "two"],
        &["run", "--config", "/nonexistent/file.cfg"],
        &["converge", "--example", "2"],
        &["converge", "--N", "32,16"],
        &["frobnicate"],
    ] {
        let o = gradflow(args, &[]);
        assert_eq!(o.status.code(), Some(2), "{args:?}: {}", stderr(&o));
    }
}

#[test]
fn config_file_with_flag_override_and_env_out() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "# porous medium\nexample = 2\nN = 12   # coarse\nk = 1\nt_final = 0.5\n").unwrap();
    let o = gradflow(&["run", "--config", cfg.to_str().unwrap(), "--t-final", "0.05"], &[("GRADFLOW_OUT", dir.path())]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("N = 12 k = 1 t_final = 0.05"), "{}", stdout(&o));
    let recs = read_timeseries(&dir.path().join("timeseries.csv")).unwrap();
    assert_eq!(recs.last().unwrap().t, 0.05);
    let saved = std::fs::read_to_string(dir.path().join("config.txt")).unwrap();
    assert!(saved.contains("t_final = 0.05"), "{saved}");
}

#[test]
fn converge_writes_table() {
    let dir = tempfile::tempdir().unwrap();
    let o = gradflow(
        &["converge", "--example", "1", "--k", "1", "--N", "8,16,32", "--t-final", "0.05", "--out", dir.path().to_str().unwrap()],
        &[],
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let rows = read_convergence(&dir.path().join("convergence.csv")).unwrap();
    assert_eq!(rows.len(), 3);
    assert!(rows[0].l2_order.is_none());
    for r in &rows[1..] {
        assert!((r.l2_order.unwrap() - 2.0).abs() < 0.3, "{rows:?}");
    }
}

#[test]
fn verify_passes() {
    let o = gradflow(&["verify"], &[]);
    let text = stdout(&o);
    assert_eq!(o.status.code(), Some(0), "{text}");
    assert!(!text.contains("FAIL"), "{text}");
}
