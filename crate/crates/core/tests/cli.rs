use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use osbm::inference::FitConfig;
use osbm::{Graph, LatentMatrix, OsbmParams};

const COMMUNITY_PARAMS: &str = r#"{
  "q": 2,
  "alpha": [0.3, 0.3],
  "w_tilde": [[4.0, -1.0, 1.0], [-1.0, 4.0, 1.0], [1.0, 1.0, -5.5]]
}"#;

fn osbm(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_osbm"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("spawn osbm")
}

fn setup() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("params.json"), COMMUNITY_PARAMS).unwrap();
    dir
}

fn generate(dir: &Path, n: &str, seed: &str) -> Output {
    osbm(
        dir,
        &["generate", "--params", "params.json", "--n", n, "--seed", seed, "--out", "g.txt", "--z-out", "z.json"],
    )
}

#[test]
fn generate_writes_graph_and_memberships() {
    let dir = setup();
    let out = generate(dir.path(), "100", "1");
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let g = Graph::from_edge_list(&fs::read_to_string(dir.path().join("g.txt")).unwrap()).unwrap();
    let z = LatentMatrix::from_json(&fs::read_to_string(dir.path().join("z.json")).unwrap()).unwrap();
    assert_eq!(g.n_vertices(), 100);
    assert_eq!((z.n(), z.q()), (100, 2));
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("density") && stdout.contains("overlaps") && stdout.contains("outliers"));
}

#[test]
fn generate_with_empty_classes_has_bias_density() {
    let dir = tempfile::tempdir().unwrap();
    let params = r#"{"q": 1, "alpha": [0.0], "w_tilde": [[3.0, 2.0], [2.0, -2.0]]}"#;
    fs::write(dir.path().join("params.json"), params).unwrap();
    let out = generate(dir.path(), "120", "5");
    assert_eq!(out.status.code(), Some(0));
    let g = Graph::from_edge_list(&fs::read_to_string(dir.path().join("g.txt")).unwrap()).unwrap();
    // every logit is W* = -2, g(-2) = 0.1192...
    let expected = 1.0 / (1.0 + 2f64.exp());
    let pairs = 120.0 * 119.0;
    let sd = (expected * (1.0 - expected) / pairs).sqrt();
    assert!((g.density().unwrap() - expected).abs() < 5.0 * sd);
}

#[test]
fn missing_or_malformed_params_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = generate(dir.path(), "10", "1");
    assert_eq!(out.status.code(), Some(1));
    assert!(!dir.path().join("g.txt").exists());

    fs::write(dir.path().join("params.json"), r#"{"q": 2, "alpha": [0.5, 1.5], "w_tilde": [[0,0,0],[0,0,0],[0,0,0]]}"#).unwrap();
    let out = generate(dir.path(), "10", "1");
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("alpha"));
    assert!(!dir.path().join("g.txt").exists() && !dir.path().join("z.json").exists());
}

#[test]
fn fit_round_trip() {
    let dir = setup();
    assert_eq!(generate(dir.path(), "40", "2").status.code(), Some(0));
    let out = osbm(dir.path(), &["fit", "--graph", "g.txt", "--q", "2", "--seed", "1", "--out", "fit.json"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = fs::read_to_string(dir.path().join("fit.json")).unwrap();
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(v["converged"], serde_json::Value::Bool(true));
    let trace: Vec<f64> = serde_json::from_value(v["bound_trace"].clone()).unwrap();
    assert!(trace.windows(2).all(|w| w[1] >= w[0] - 1e-6));
    assert_eq!(v["iterations"].as_u64().unwrap() as usize, trace.len());
    assert_eq!(v["tau"].as_array().unwrap().len(), 40);
    assert_eq!(v["z_map"].as_array().unwrap().len(), 40);
    OsbmParams::from_json(&v["params"].to_string()).unwrap();
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("bound") && stdout.contains("converged true"));
}

#[test]
fn fit_rejects_too_many_classes() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("g.txt"), "n=3\n0 1\n1 2\n").unwrap();
    let out = osbm(dir.path(), &["fit", "--graph", "g.txt", "--q", "4", "--out", "fit.json"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(!dir.path().join("fit.json").exists());
}

#[test]
fn fit_reports_bad_graph_line() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("g.txt"), "n=3\n0 1\n2 2\n").unwrap();
    let out = osbm(dir.path(), &["fit", "--graph", "g.txt", "--q", "1", "--out", "fit.json"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 3"));
}

#[test]
fn fit_defaults_match_library() {
    let d = FitConfig::default();
    assert_eq!((d.max_outer_iters, d.bound_tol, d.map_threshold), (200, 1e-4, 0.5));
}

#[test]
fn canonicalize_examples() {
    let dir = tempfile::tempdir().unwrap();
    let p = r#"{"q": 2, "alpha": [0.7, 0.2], "w_tilde": [[0, 1, 2], [3, 4, 5], [6, 7, 8]]}"#;
    fs::write(dir.path().join("p.json"), p).unwrap();
    let out = osbm(dir.path(), &["canonicalize", "--params", "p.json", "--out", "c1.json"]);
    assert_eq!(out.status.code(), Some(0));
    let c1 = fs::read_to_string(dir.path().join("c1.json")).unwrap();
    let canon = OsbmParams::from_json(&c1).unwrap();
    assert!((canon.alpha()[0] - 0.2).abs() < 1e-12 && (canon.alpha()[1] - 0.3).abs() < 1e-12);
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("permutation [1, 0]") && stdout.contains("inversion [1, 0]"));

    let out = osbm(dir.path(), &["canonicalize", "--params", "c1.json", "--out", "c2.json"]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(c1, fs::read_to_string(dir.path().join("c2.json")).unwrap());
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("permutation [0, 1]") && stdout.contains("inversion [0, 0]"));
}

#[test]
fn benchmark_small_run() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["benchmark", "community", "--q", "2", "--n", "30", "--replicates", "1", "--seed", "7", "--out", "r.json"];
    let out = osbm(dir.path(), &args);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let table = String::from_utf8(out.stdout).unwrap();
    for col in ["Mean", "Median", "Min", "Max"] {
        assert!(table.contains(col));
    }
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("r.json")).unwrap()).unwrap();
    assert_eq!(v["outcomes"].as_array().unwrap().len(), 1);
}

#[test]
fn benchmark_stars_needs_even_q() {
    let dir = tempfile::tempdir().unwrap();
    let out = osbm(dir.path(), &["benchmark", "stars", "--q", "3", "--out", "r.json"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(!dir.path().join("r.json").exists());
}

#[test]
fn usage_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(osbm(dir.path(), &[]).status.code(), Some(1));
    assert_eq!(osbm(dir.path(), &["frobnicate"]).status.code(), Some(1));
    assert_eq!(osbm(dir.path(), &["fit", "--q", "2"]).status.code(), Some(1));
    assert_eq!(osbm(dir.path(), &["benchmark", "ring", "--out", "r.json"]).status.code(), Some(1));
    assert_eq!(osbm(dir.path(), &["--help"]).status.code(), Some(0));
}

#[test]
fn unwritable_output_exits_two() {
    let dir = setup();
    let out = osbm(
        dir.path(),
        &["generate", "--params", "params.json", "--n", "10", "--out", "missing/g.txt", "--z-out", "z.json"],
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(!dir.path().join("z.json").exists());
}
