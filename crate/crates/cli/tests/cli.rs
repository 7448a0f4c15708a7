use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

use trafficdig::rng;
use trafficdig::series::write_csv;
use trafficdig::{CausalGraphResult, FlowSeries};
use trafficdig_cli::{read_result, result_to_json};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_trafficdig"))
}

fn ok(cmd: &mut Command) -> Output {
    let out = cmd.output().unwrap();
    assert!(out.status.success(), "{:?} failed: {}", cmd, String::from_utf8_lossy(&out.stderr));
    out
}

/// Asserts a failing run printed exactly one `error:` line.
fn fails(cmd: &mut Command) -> String {
    let out = cmd.output().unwrap();
    assert!(!out.status.success(), "{cmd:?} unexpectedly succeeded");
    let err = String::from_utf8(out.stderr).unwrap();
    assert_eq!(err.lines().count(), 1, "stderr: {err}");
    assert!(err.starts_with("error: "), "stderr: {err}");
    err
}

fn write_series(path: &Path, series: &[FlowSeries]) {
    write_csv(fs::File::create(path).unwrap(), series, 0).unwrap();
}

fn edges(dot: &str) -> Vec<String> {
    dot.lines().filter(|l| l.contains("->")).map(|l| l.split(" [").next().unwrap().trim().to_owned()).collect()
}

fn s1_csv(dir: &Path) -> PathBuf {
    ok(bin().args(["simulate", "--scenario", "s1", "--samples", "100000", "--seed", "1"]).arg("--output-dir").arg(dir));
    dir.join("s1.csv")
}

fn estimate(input: &Path, out: &Path, extra: &[&str]) -> Output {
    ok(bin().arg("estimate").arg("--input").arg(input).arg("--output-dir").arg(out).args(extra))
}

const S1_FLAGS: &[&str] = &["--levels", "2", "--alpha", "0.4", "--depth", "1", "--strategy", "equal-frequency"];

#[test]
fn s1_chain_edges() {
    let dir = TempDir::new().unwrap();
    let csv = s1_csv(dir.path());
    let out = dir.path().join("est");
    estimate(&csv, &out, S1_FLAGS);
    let dot = fs::read_to_string(out.join("graph.dot")).unwrap();
    assert_eq!(edges(&dot), vec!["s1 -> s2", "s2 -> s3", "s3 -> s4"]);

    // The stored JSON round-trips byte for byte and re-exports to the same DOT.
    let json = fs::read_to_string(out.join("result.json")).unwrap();
    let parsed: CausalGraphResult = serde_json::from_str(&json).unwrap();
    assert_eq!(result_to_json(&parsed), json);
    assert_eq!(read_result(&out.join("result.json")).unwrap(), parsed);
    let exported = ok(bin().arg("export").arg("--input").arg(out.join("result.json")));
    assert_eq!(String::from_utf8(exported.stdout).unwrap(), dot);

    // Same input, same bytes; an empty exclusion list changes nothing.
    let again = dir.path().join("again");
    estimate(&csv, &again, &[S1_FLAGS, &["--exclude", ""]].concat());
    assert_eq!(fs::read(again.join("result.json")).unwrap(), json.as_bytes());
    assert_eq!(fs::read_to_string(again.join("graph.dot")).unwrap(), dot);
}

fn latent_fixture(n: usize, seed: u64) -> Vec<FlowSeries> {
    let mut r = rng::stream(seed, "cli/latent");
    let mut noise = |mean: f64| rng::poisson(&mut r, mean) as f64;
    let lag = |v: &Vec<f64>, i: usize, k: usize| if i >= k { v[i - k] } else { 0.0 };
    let mut h = vec![0.0; n];
    let mut x: Vec<Vec<f64>> = vec![vec![0.0; n]; 7];
    for i in 0..n {
        h[i] = noise(4.0);
        x[0][i] = noise(4.0);
        x[6][i] = lag(&h, i, 1) + noise(0.3);
        x[5][i] = lag(&h, i, 2) + noise(1.0);
        x[4][i] = 0.5 * lag(&x[0], i, 1) + 0.5 * lag(&x[5], i, 1) + noise(1.0);
        x[2][i] = 0.5 * lag(&x[0], i, 1) + noise(1.0);
        x[1][i] = 0.5 * lag(&x[0], i, 1) + 0.5 * lag(&x[5], i, 1) + noise(1.0);
        x[3][i] = x[6][i] + 0.3 * lag(&x[4], i, 1) + noise(1.0);
    }
    x.iter()
        .enumerate()
        .map(|(k, v)| FlowSeries::new(format!("{}", k + 1), v.iter().map(|a| a.round() as u64).collect(), 300).unwrap())
        .collect()
}

#[test]
fn excluding_the_hidden_drivers_proxy_adds_an_edge() {
    let dir = TempDir::new().unwrap();
    let csv = dir.path().join("latent.csv");
    write_series(&csv, &latent_fixture(50_000, 8));
    let flags = ["--levels", "2", "--alpha", "0.7", "--depth", "1", "--strategy", "equal-frequency", "--estimator", "ctw"];
    estimate(&csv, &dir.path().join("full"), &flags);
    estimate(&csv, &dir.path().join("hidden"), &[&flags[..], &["--exclude", "7"]].concat());
    let full = edges(&fs::read_to_string(dir.path().join("full/graph.dot")).unwrap());
    let hidden = edges(&fs::read_to_string(dir.path().join("hidden/graph.dot")).unwrap());
    assert!(hidden.contains(&"4 -> 6".to_owned()), "hidden {hidden:?}");
    assert!(!full.contains(&"4 -> 6".to_owned()), "full {full:?}");
}

#[test]
fn independent_noise_has_no_edges() {
    let dir = TempDir::new().unwrap();
    let mut r = rng::stream(11, "cli/noise");
    let series: Vec<FlowSeries> = ["a", "b"]
        .iter()
        .map(|id| FlowSeries::new(*id, (0..20_000).map(|_| rng::poisson(&mut r, 5.0)).collect(), 300).unwrap())
        .collect();
    let csv = dir.path().join("noise.csv");
    write_series(&csv, &series);
    estimate(&csv, dir.path(), &[]);
    let result = read_result(&dir.path().join("result.json")).unwrap();
    assert!(result.edges.is_empty(), "{:?}", result.edges);
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("result.json")).unwrap()).unwrap();
    assert_eq!(json["edges"], serde_json::json!([]));
    for key in ["node_ids", "depth", "estimator", "alpha", "I", "H", "G", "G_nor"] {
        assert!(json.get(key).is_some(), "missing {key}");
    }
}

#[test]
fn config_file_supplies_defaults_and_flags_win() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("run.toml");
    fs::write(&cfg, "scenario = \"s2\"\nsamples = 500\nseed = 3\n").unwrap();
    ok(bin().arg("simulate").arg("--config").arg(&cfg).arg("--output-dir").arg(dir.path()));
    let csv = fs::read_to_string(dir.path().join("s2.csv")).unwrap();
    assert_eq!(csv.lines().count(), 501);
    assert_eq!(csv.lines().next().unwrap(), "timestamp,s1,s2,s3,s4");

    ok(bin().arg("simulate").arg("--config").arg(&cfg).args(["--scenario", "c2"]).arg("--output-dir").arg(dir.path()));
    let ctm = fs::read_to_string(dir.path().join("c2.csv")).unwrap();
    assert_eq!(ctm.lines().next().unwrap(), "timestamp,s1,s2,s3");
    assert_eq!(ctm.lines().count(), 501);
}

#[test]
fn every_scenario_simulates() {
    let dir = TempDir::new().unwrap();
    for (name, cols) in [("s1", 4), ("s2", 4), ("s3", 3), ("c1", 4), ("c2", 3), ("linear", 3)] {
        ok(bin().args(["simulate", "--samples", "300", "--seed", "5", "--scenario", name]).arg("--output-dir").arg(dir.path()));
        let text = fs::read_to_string(dir.path().join(format!("{name}.csv"))).unwrap();
        assert_eq!(text.lines().next().unwrap().split(',').count(), cols + 1, "{name}");
        let again = dir.path().join("again");
        ok(bin().args(["simulate", "--samples", "300", "--seed", "5", "--scenario", name]).arg("--output-dir").arg(&again));
        assert_eq!(fs::read_to_string(again.join(format!("{name}.csv"))).unwrap(), text, "{name}");
    }
}

#[test]
fn lags_writes_pair_profiles() {
    let dir = TempDir::new().unwrap();
    ok(bin().args(["simulate", "--scenario", "s1", "--samples", "2000", "--seed", "2"]).arg("--output-dir").arg(dir.path()));
    let out = ok(bin().arg("lags").arg("--input").arg(dir.path().join("s1.csv")).args(["--tau-max", "4"]).arg("--output-dir").arg(dir.path()));
    assert!(String::from_utf8(out.stdout).unwrap().contains("estimated depth 3"));
    let text = fs::read_to_string(dir.path().join("lags.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("from,to,tau,cov,cod"));
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 12 * 5);
    let peak = rows
        .iter()
        .filter(|r| r[0] == "s1" && r[1] == "s2")
        .max_by(|a, b| a[3].parse::<f64>().unwrap().total_cmp(&b[3].parse::<f64>().unwrap()))
        .unwrap();
    assert_eq!(peak[2], "1");
    assert!(peak[4].parse::<f64>().unwrap() > 0.1);
}

#[test]
fn bounds_prints_json() {
    let out = ok(bin().args(["bounds", "--sensors", "4", "--order", "1", "--levels", "2", "--w1", "3", "--threshold", "40"]));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["w0"], 9);
    let pf = v["pf_upper"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&pf));
}

#[test]
fn export_to_directory() {
    let dir = TempDir::new().unwrap();
    let json = dir.path().join("r.json");
    fs::write(
        &json,
        r#"{"node_ids":["b","a"],"depth":1,"estimator":"ctw","levels":2,"alpha":0.4,
            "I":[[0,0.5],[0,0]],"H":[[1,1],[1,1]],"G":[[0,0.5],[0,0]],"G_nor":[[0,1],[0,0]],
            "edges":[{"from":"b","to":"a","weight":1.0}],"diagnostics":[],"no_information":false}"#,
    )
    .unwrap();
    ok(bin().arg("export").arg("--input").arg(&json).arg("--output-dir").arg(dir.path().join("dot")));
    let dot = fs::read_to_string(dir.path().join("dot/graph.dot")).unwrap();
    assert_eq!(dot, "digraph DIG {\n  a\n  b\n  b -> a [label=\"1.00\"]\n}\n");
}

#[test]
fn error_paths_are_single_lines() {
    let dir = TempDir::new().unwrap();
    let csv = dir.path().join("small.csv");
    fs::write(&csv, "timestamp,a,b\n0,1,2\n300,2,1\n600,3,3\n900,1,0\n1200,0,2\n").unwrap();
    let est = |extra: &[&str]| {
        let mut c = bin();
        c.arg("estimate").arg("--input").arg(&csv).arg("--output-dir").arg(dir.path()).args(extra);
        c
    };

    let e = fails(&mut est(&["--exclude", "zz"]));
    assert!(e.contains("unknown node id 'zz'"), "{e}");
    let e = fails(&mut est(&["--alpha", "1.5"]));
    assert!(e.contains("alpha"), "{e}");
    let e = fails(&mut est(&["--levels", "1"]));
    assert!(e.contains("level"), "{e}");
    let e = fails(bin().args(["estimate", "--input"]).arg(dir.path().join("missing.csv")));
    assert!(e.contains("cannot read"), "{e}");
    let e = fails(bin().arg("estimate"));
    assert!(e.contains("--input"), "{e}");
    fails(bin().args(["estimate", "--levels", "two"]));
    fails(bin().arg("frobnicate"));
    fails(bin().arg("simulate"));
    fails(bin().args(["bounds", "--sensors", "3"]));

    let bad_csv = dir.path().join("bad.csv");
    fs::write(&bad_csv, "timestamp,a\n0,1\n300,x\n").unwrap();
    fails(bin().arg("estimate").arg("--input").arg(&bad_csv));

    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "alpha = \"high\"\n").unwrap();
    let e = fails(bin().arg("estimate").arg("--config").arg(&cfg));
    assert!(e.contains("bad.toml"), "{e}");
    fs::write(&cfg, "colour = 1\n").unwrap();
    fails(bin().arg("estimate").arg("--config").arg(&cfg));

    let json = dir.path().join("bad.json");
    fs::write(&json, "{\"node_ids\": [").unwrap();
    let e = fails(bin().arg("export").arg("--input").arg(&json));
    assert!(e.contains("malformed result JSON"), "{e}");
}

#[test]
fn help_and_version_exit_cleanly() {
    let out = ok(bin().arg("--help"));
    assert!(String::from_utf8(out.stdout).unwrap().contains("estimate"));
    ok(bin().arg("--version"));
}
