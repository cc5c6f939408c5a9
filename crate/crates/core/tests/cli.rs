use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_etree");

fn etree(args: &[&str]) -> Output {
    Command::new(BIN).args(args).env_remove("ETREE_DATA_DIR").output().unwrap()
}

fn write_config(dir: &Path, protocols: &str, topology: &str, budget_ms: f64) -> String {
    let text = format!(
        r#"
output_dir = "out"
seeds = [1, 2]
protocols = [{protocols}]

[dataset]
kind = "synthetic"
classes = 3
train_per_class = 24
test_per_class = 8
features = 4
noise_std = 0.8

[distribution]
kind = "iid"

[topology]
{topology}

[tree]
layer_ks = [2]
frequencies = [2]
probe_size = 12

[sim]
budget_ms = {budget_ms:?}
"#
    );
    let path = dir.join("exp.toml");
    std::fs::write(&path, text).unwrap();
    path.display().to_string()
}

const RANDOM: &str = "kind = \"random\"\nnodes = 6\nlinks = 8\ndelay = { mean_ms = 20.0, std_ms = 5.0 }";

#[test]
fn run_writes_run_files_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "\"etree\", \"federated\"", RANDOM, 1500.0);
    let out = etree(&["run", &cfg]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let files: Vec<String> = std::fs::read_dir(dir.path().join("out"))
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    assert_eq!(files.len(), 5);
    assert!(files.contains(&"summary.csv".to_string()));
    assert!(files.contains(&"federated_iid_2.csv".to_string()));
    assert!(String::from_utf8_lossy(&out.stdout).contains("federated"));
}

#[test]
fn cluster_eval_runs_each_threshold() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "\"etree\"", RANDOM, 800.0);
    let out = etree(&["cluster-eval", &cfg]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let summary = std::fs::read_to_string(dir.path().join("out/summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 1 + 2 + 5);
    assert!(summary.contains("\nkma-d0.09,iid,2,"));
}

#[test]
fn validation_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "", RANDOM, 800.0);
    let out = etree(&["run", &cfg]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("protocols"));
    assert!(!dir.path().join("out").exists());

    assert_eq!(etree(&["run", "/nonexistent/config.toml"]).status.code(), Some(1));
    assert_eq!(etree(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(etree(&[]).status.code(), Some(1));
    assert_eq!(etree(&["replicate-table3"]).status.code(), Some(1));
    let empty = tempfile::tempdir().unwrap();
    let out = etree(&["replicate-table3", "--data-dir", &empty.path().display().to_string(), "--seeds", "1,2"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn help_exits_cleanly() {
    let out = etree(&["--help"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8_lossy(&out.stdout);
    for sub in ["run", "replicate-table3", "cluster-eval"] {
        assert!(text.contains(sub), "{text}");
    }
}

#[test]
fn runtime_failures_exit_with_two() {
    // zero delays and no minimum cycle: rounds take no time and never end
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "\"federated\"", "kind = \"complete\"\nnodes = 4\ndelay_ms = 0.0", 800.0);
    let text = std::fs::read_to_string(&cfg).unwrap().replace("[sim]", "[sim]\nmin_cycle_ms = 0.0");
    std::fs::write(&cfg, text).unwrap();
    let out = etree(&["run", &cfg]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(!dir.path().join("out").exists());
}

#[test]
fn data_dir_comes_from_the_environment() {
    let empty = tempfile::tempdir().unwrap();
    let out = Command::new(BIN)
        .args(["replicate-table3", "--seeds", "1"])
        .env("ETREE_DATA_DIR", empty.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains(&empty.path().display().to_string()), "{err}");
}
