use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn floret(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_floret")).args(args).current_dir(dir).output().expect("binary runs")
}

fn write_config(dir: &Path, text: &str) -> String {
    let p = dir.join("run.toml");
    fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

fn tree(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(dir).unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn driving_output_is_byte_identical_across_runs_and_workers() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "seed = 11\n[driving]\nn = 32\nwidth = 32\n");
    let mut trees = Vec::new();
    for (name, workers) in [("one", "1"), ("again", "1"), ("two", "2")] {
        let out = floret(&["driving", "--config", &cfg, "--workers", workers, "--out", name], tmp.path());
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
        trees.push(tree(&tmp.path().join(name)));
    }
    assert!(trees[0].iter().any(|(p, _)| p.ends_with("curve_00031.csv")));
    assert!(trees[0].iter().any(|(p, _)| p == "stats.ndjson"));
    assert_eq!(trees[0], trees[1]);
    assert_eq!(trees[0], trees[2]);

    let out = floret(&["driving", "--config", &cfg, "--seed", "12", "--out", "other"], tmp.path());
    assert_eq!(out.status.code(), Some(0));
    assert_ne!(tree(&tmp.path().join("other")), trees[0]);
}

#[test]
fn manifest_lists_every_file_with_its_hash() {
    let tmp = tempfile::tempdir().unwrap();
    let out = floret(&["enumerate-flower", "--out", "f"], tmp.path());
    assert_eq!(out.status.code(), Some(0));
    let dir = tmp.path().join("f");
    let m: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m["schema"], "floret.manifest.v1");
    assert_eq!(m["verdict"]["status"], "pass");
    let files = m["files"].as_array().unwrap();
    let names: Vec<&str> = files.iter().map(|f| f["path"].as_str().unwrap()).collect();
    assert_eq!(names, ["config.toml", "flower.csv", "summary.ndjson"]);
    assert_eq!(m["config_hash"], files[0]["sha256"]);
    let csv = fs::read_to_string(dir.join("flower.csv")).unwrap();
    assert_eq!(csv.lines().count(), 321);
    assert_eq!(files[1]["bytes"].as_u64().unwrap() as usize, csv.len());
}

#[test]
fn bk_verify_on_a_small_grid_exits_zero() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("grid.txt"), "# three points\n0\n1/12\nboundary\n").unwrap();
    let cfg = write_config(tmp.path(), "[bk_verify]\ngrid_file = \"grid.txt\"\n");
    let out = floret(&["bk-verify", "--config", &cfg, "--out", "bk"], tmp.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(tmp.path().join("bk/bk.csv")).unwrap();
    assert!(csv.starts_with("tuple_id,a,s,lhs,rhs,margin,verdict\n"));
    assert!(!csv.contains("violated"));
    let ce = fs::read_to_string(tmp.path().join("bk/counterexample.ndjson")).unwrap();
    assert_eq!(ce.lines().count(), 3);
}

#[test]
fn configuration_errors_exit_two_with_a_json_record() {
    let tmp = tempfile::tempdir().unwrap();
    let cases = [
        ("sample", "sede = 3\n"),
        ("sample", "[model]\na = 0.5\ns = 0.1\n"),
        ("cardy-scan", "[cardy_scan]\nn = 10\n[[cardy_scan.targets]]\nkind = \"separation\"\nz = [0.5, 0.5]\n"),
        ("no-such-command", ""),
    ];
    for (cmd, text) in cases {
        let cfg = write_config(tmp.path(), text);
        let out = floret(&[cmd, "--config", &cfg, "--out", "bad"], tmp.path());
        assert_eq!(out.status.code(), Some(2), "{cmd} {text}");
        let err: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
        assert_eq!(err["schema"], "floret.error.v1");
        assert!(!err["message"].as_str().unwrap().is_empty());
    }
    let out = floret(&["sample", "--bogus"], tmp.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn failed_checks_exit_three() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "[domain]\neps = 0.0625\n[markov_test]\nn_outer = 20\nn_inner = 10\nsteps = [5]\nz_max = 0.0\n",
    );
    let out = floret(&["markov-test", "--config", &cfg, "--out", "m"], tmp.path());
    assert_eq!(out.status.code(), Some(3));
    let m: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("m/manifest.json")).unwrap()).unwrap();
    assert_eq!(m["verdict"]["status"], "fail");
}

#[test]
fn samples_and_explorations_write_their_records() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "[domain]\neps = 0.0625\n[sample]\nn = 3\n[explore]\nn = 2\n");
    for cmd in ["sample", "explore"] {
        let out = floret(&[cmd, "--config", &cfg, "--out", cmd], tmp.path());
        assert_eq!(out.status.code(), Some(0));
    }
    let conf = fs::read_to_string(tmp.path().join("sample/configurations.ndjson")).unwrap();
    assert_eq!(conf.lines().count(), 3);
    let summary = fs::read_to_string(tmp.path().join("explore/summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 3);
    assert!(summary.lines().skip(1).all(|l| l.ends_with(",true")));
}
