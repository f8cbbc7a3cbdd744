use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn qtraj(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qtraj")).args(args).output().expect("binary runs")
}

fn qtraj_env(args: &[&str], key: &str, val: &str) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qtraj")).args(args).env(key, val).output().expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn born_curve_reproduces_from_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let first = dir.path().join("a.csv");
    let o = qtraj(&["born-curve", "--gsxi", "1", "--gsxi", "0", "--x-grid", "0.3,0.7", "--n-traj", "300", "--out", p(&first)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = fs::read_to_string(&first).unwrap();
    assert!(text.starts_with("gsxi,x,p_hat,std_err,n_absorbed,n_total\n"));
    assert_eq!(text.lines().count(), 5);

    let manifest = dir.path().join("a.csv.manifest.json");
    let m: serde_json::Value = serde_json::from_str(&fs::read_to_string(&manifest).unwrap()).unwrap();
    assert_eq!(m["command"], "born-curve");
    assert_eq!(m["seed"], 42);
    assert!(m["version"].as_str().unwrap().starts_with("qtraj "));

    let second = dir.path().join("b.csv");
    let o = qtraj(&["born-curve", "--config", p(&manifest), "--out", p(&second)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(fs::read(&first).unwrap(), fs::read(&second).unwrap());
}

#[test]
fn output_is_independent_of_worker_count() {
    let dir = tempfile::tempdir().unwrap();
    let mut files = Vec::new();
    for threads in ["1", "4"] {
        let out = dir.path().join(format!("j{threads}.csv"));
        let o = qtraj_env(&["jump", "--n-traj", "2000", "--out", p(&out)], "QTRAJ_THREADS", threads);
        assert!(o.status.success(), "{}", stderr(&o));
        files.push(fs::read(&out).unwrap());
    }
    assert_eq!(files[0], files[1]);
}

#[test]
fn distribution_writes_histograms_and_oracles() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("d");
    let o = qtraj(&["distribution", "--n-traj", "500", "--tau-snapshots", "1,3", "--out-dir", p(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    for f in ["hist_tau1.csv", "hist_tau3.csv", "oracle_tau1.csv", "oracle_tau3.csv", "summary.csv", "manifest.json"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let hist = fs::read_to_string(out.join("hist_tau1.csv")).unwrap();
    assert!(hist.starts_with("bin_lo,bin_hi,center,count,density\n"));
    assert_eq!(hist.lines().count(), 201);
}

#[test]
fn usage_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x.csv");
    let o = qtraj(&["born-curve", "--n-traj", "0", "--out", p(&out)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("n-traj must be positive"));

    for x in ["0", "1"] {
        let o = qtraj(&["distribution", "--x", x, "--n-traj", "10", "--out-dir", p(dir.path())]);
        assert_eq!(o.status.code(), Some(2));
        assert!(stderr(&o).contains("x must be interior for diffusion"));
    }

    let o = qtraj(&["born-curve", "--scheme", "rk4", "--out", p(&out)]);
    assert_eq!(o.status.code(), Some(2));

    let bad = dir.path().join("bad.json");
    fs::write(&bad, "{ not json").unwrap();
    let o = qtraj(&["jump", "--config", p(&bad), "--out", p(&out)]);
    assert_eq!(o.status.code(), Some(2));

    let o = qtraj(&["born-curve", "--bogus-flag"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn io_errors_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("no/such/dir/out.csv");
    let o = qtraj(&["jump", "--n-traj", "10", "--out", p(&missing)]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));

    let o = qtraj(&["jump", "--config", p(&dir.path().join("absent.json"))]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn verify_negative_control_fails() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("r.json");
    let o = qtraj(&["verify", "--only", "7", "--out", p(&report)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("[PASS] C7"));
    let r: serde_json::Value = serde_json::from_str(&fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(r["passed"], true);

    let o = qtraj(&["verify", "--only", "7", "--tolerance-scale", "0", "--out", p(&report)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stdout).contains("[FAIL] C7"));
}
