use std::fs;
use std::path::Path;
use std::process::Command;

fn lvp(args: &[&str]) -> (i32, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_lvp")).args(args).output().unwrap();
    (out.status.code().unwrap(), String::from_utf8(out.stdout).unwrap(), String::from_utf8(out.stderr).unwrap())
}

fn scenario(name: &str) -> String {
    format!("{}/../core/scenarios/{name}.cfg", env!("CARGO_MANIFEST_DIR"))
}

fn manifest(dir: &Path) -> String {
    fs::read_to_string(dir.join("manifest.txt")).unwrap()
}

#[test]
fn analyze_reports_eps_times() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("a");
    let (code, stdout, _) = lvp(&["analyze", &scenario("six-node"), "--out-dir", out.to_str().unwrap()]);
    assert_eq!(code, 0);
    assert!(stdout.contains("12.8883") && stdout.contains("11.4003"), "{stdout}");
    let m = manifest(&out);
    assert!(m.starts_with("config_hash ") && m.contains("artifact teps.csv"));
}

#[test]
fn analyze_accepts_edge_lists() {
    let dir = tempfile::tempdir().unwrap();
    let graph = dir.path().join("g.txt");
    fs::write(&graph, "n 3\n2 1 1\n3 2 1\n1 3 1\n").unwrap();
    let out = dir.path().join("o");
    let (code, stdout, _) = lvp(&["analyze", graph.to_str().unwrap(), "--out-dir", out.to_str().unwrap()]);
    assert_eq!(code, 0);
    assert!(stdout.contains("spanning tree               true"), "{stdout}");
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    let out = out.to_str().unwrap();
    assert_eq!(lvp(&["frobnicate"]).0, 1);
    assert_eq!(lvp(&["simulate", "/no/such/file.cfg", "--out-dir", out]).0, 1);
    assert!(!Path::new(out).exists());
    let bad = dir.path().join("bad.cfg");
    fs::write(&bad, "[topology]\nn = 2\nedge 1 2 1 1 0\n[schedule]\nalpha = 5\n[run]\nstrict = true\n").unwrap();
    let (code, _, stderr) = lvp(&["simulate", bad.to_str().unwrap(), "--out-dir", out]);
    assert_eq!(code, 1, "{stderr}");
    let diverging = dir.path().join("diverging.cfg");
    fs::write(&diverging, "[topology]\nn = 2\nedge 1 2 1 1 0\nedge 2 1 1 1 0\n[schedule]\nalpha = 5\n[initial]\nx0 = 0 1\n[run]\nhorizon = 2000\n").unwrap();
    let (code, _, stderr) = lvp(&["simulate", diverging.to_str().unwrap(), "--out-dir", out]);
    assert_eq!(code, 2, "{stderr}");
    assert!(stderr.contains("non-finite"), "{stderr}");
    let graph = dir.path().join("g.txt");
    fs::write(&graph, "n 2\n1 2 1\n2 1 1\n").unwrap();
    let (code, _, stderr) = lvp(&["analyze", graph.to_str().unwrap(), "--out-dir", out, "--eps", "0.1"]);
    assert_eq!(code, 0, "{stderr}");
}

#[test]
fn simulate_is_identical_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = scenario("six-node-delayed");
    let read = |threads: &str| {
        let out = dir.path().join(threads);
        let (code, _, stderr) =
            lvp(&["simulate", &cfg, "--seeds", "6", "--threads", threads, "--out-dir", out.to_str().unwrap()]);
        assert_eq!(code, 0, "{stderr}");
        (fs::read(out.join("trace.csv")).unwrap(), fs::read(out.join("seeds.csv")).unwrap(), manifest(&out))
    };
    assert_eq!(read("1"), read("4"));
}

#[test]
fn compare_writes_both_arms() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("c");
    let (code, _, stderr) = lvp(&["compare", &scenario("ring"), "--out-dir", out.to_str().unwrap()]);
    assert_eq!(code, 0, "{stderr}");
    let metrics = fs::read_to_string(out.join("metrics.csv")).unwrap();
    assert!(metrics.starts_with("t,err,d_abs,completion,arm\n"));
    assert!(metrics.contains(",without\n"));
    assert!(manifest(&out).contains("artifact config.cfg"));
}
