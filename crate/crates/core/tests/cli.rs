use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_anisomax");

fn run(config: &str, experiment: &str, args: &[&str], env_out: Option<&Path>) -> (Output, tempfile::TempDir) {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("config.toml");
    fs::write(&cfg, config).unwrap();
    let mut cmd = Command::new(BIN);
    cmd.current_dir(dir.path()).args(["run", "--config"]).arg(&cfg).args(["--experiment", experiment]).args(args);
    cmd.env_remove("ANISOMAX_OUT");
    if let Some(p) = env_out {
        cmd.env("ANISOMAX_OUT", p);
    }
    (cmd.output().unwrap(), dir)
}

#[test]
fn validate_dilation_reports_structure() {
    let (o, dir) = run("", "validate-dilation", &["--out", "o"], None);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let summary = fs::read_to_string(dir.path().join("o/validate-dilation/summary.txt")).unwrap();
    for line in ["a = 8", "r = 2", "n = 1", "norm_power = 1"] {
        assert!(summary.contains(line), "missing `{line}` in\n{summary}");
    }
    let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("o/validate-dilation/manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 1);
    assert_eq!(manifest["config"]["matrix"][1][1], 4.0);
    assert!(manifest["constants"]["spectral_tol"].is_number());
    assert!(manifest["versions"]["anisomax"].is_string());
}

#[test]
fn empty_whitney_passes_with_empty_csv() {
    let cfg = "[atoms]\ncount = 0\n[suite]\ninstances = 0\n";
    let (o, dir) = run(cfg, "whitney", &["--out", "o"], None);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(dir.path().join("o/whitney/selected.csv")).unwrap();
    assert_eq!(csv, "instance,sigma,tau,index,volume\n");
}

#[test]
fn listed_atoms_are_decomposed() {
    let cfg = "[atoms]\nlist = [{ tau = -2, index = [0, 0], lambda = 5.0 }]\n[suite]\ninstances = 0\n";
    let (o, dir) = run(cfg, "whitney", &["--out", "o"], None);
    assert_eq!(o.status.code(), Some(0));
    // density 5·64 = 320 > 16α, so something is selected around the cube
    let csv = fs::read_to_string(dir.path().join("o/whitney/selected.csv")).unwrap();
    assert!(csv.lines().count() >= 2, "{csv}");
}

#[test]
fn config_errors_exit_2() {
    for cfg in ["matrix = [[1.0, 0.0], [0.0, 1.0]]", "matrix = [[2.0, 0.0]]", "eps = 3.0", "bogus = 1", "alpha = ["] {
        let (o, _d) = run(cfg, "validate-dilation", &["--out", "o"], None);
        assert_eq!(o.status.code(), Some(2), "{cfg}: {}", String::from_utf8_lossy(&o.stderr));
    }
    let (o, _d) = run("", "whitney", &["--out", "o", "--override", "noequals"], None);
    assert_eq!(o.status.code(), Some(2));
    let (o, _d) = run("matrix = [[2.0, 1.0], [0.0, 2.0]]", "maximal-weak-type", &["--out", "o"], None);
    assert_eq!(o.status.code(), Some(2), "non-diagonal scale sweep is a config error");
}

#[test]
fn failed_check_exits_1() {
    let (o, dir) = run("", "whitney", &["--out", "o", "--override", "suite.instances=5", "--override", "verifier.c_w=0.01"], None);
    assert_eq!(o.status.code(), Some(1), "{}", String::from_utf8_lossy(&o.stderr));
    let summary = fs::read_to_string(dir.path().join("o/whitney/summary.txt")).unwrap();
    assert!(summary.contains("FAIL whitney conditions 1-3"));
}

#[test]
fn budget_exceeded_exits_3() {
    let (o, _d) = run("eps = 0.99\ns_range = [60, 60]\n", "surface-classify", &["--out", "o"], None);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn output_root_precedence() {
    let env_dir = tempfile::tempdir().unwrap();
    let (o, dir) = run("out = \"from-config\"\n", "validate-dilation", &[], Some(env_dir.path()));
    assert_eq!(o.status.code(), Some(0));
    assert!(env_dir.path().join("validate-dilation/manifest.json").exists());
    assert!(!dir.path().join("from-config").exists());

    let (o, dir) = run("out = \"from-config\"\n", "validate-dilation", &["--out", "cli"], Some(env_dir.path()));
    assert_eq!(o.status.code(), Some(0));
    assert!(dir.path().join("cli/validate-dilation/summary.txt").exists());

    let (o, dir) = run("out = \"from-config\"\n", "validate-dilation", &[], None);
    assert_eq!(o.status.code(), Some(0));
    assert!(dir.path().join("from-config/validate-dilation/summary.txt").exists());
}

#[test]
fn seed_flag_changes_instances_and_is_recorded() {
    let a = run("", "whitney", &["--out", "o", "--override", "suite.instances=3", "--seed", "5"], None);
    let b = run("", "whitney", &["--out", "o", "--override", "suite.instances=3", "--seed", "6"], None);
    let read = |d: &tempfile::TempDir, f: &str| fs::read_to_string(d.path().join("o/whitney").join(f)).unwrap();
    assert_ne!(read(&a.1, "whitney.csv"), read(&b.1, "whitney.csv"));
    assert!(read(&a.1, "manifest.json").contains("\"seed\": 5"));
}
