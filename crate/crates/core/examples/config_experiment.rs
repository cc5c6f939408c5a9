//! Running a TOML-described experiment; writes CSVs under a temporary directory.

use etree::experiment::{run_experiment, ExperimentConfig};

const CONFIG: &str = r#"
name = "smoke"
output_dir = "out"
seeds = [1, 2, 3]
protocols = ["etree", "federated", "gossip", "individual", "grouped"]

[dataset]
kind = "synthetic"
classes = 6
train_per_class = 100
test_per_class = 40
features = 8
noise_std = 1.0

[distribution]
kind = "noniid-k"
classes_per_node = 4

[topology]
kind = "random"
nodes = 20
links = 50
delay = { mean_ms = 50.0, std_ms = 50.0 }

[tree]
layer_ks = [4]
frequencies = [5]

[sim]
budget_ms = 5000.0
"#;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::env::temp_dir().join(format!("etree-example-{}", std::process::id()));
    let mut cfg = ExperimentConfig::from_toml(CONFIG)?;
    cfg.output_dir = dir.join("out");
    let report = run_experiment(&cfg)?;
    print!("{}", report.to_text());
    println!("{} run files, summary at {}", report.runs.len(), report.summary_path.display());
    std::fs::remove_dir_all(&dir)?;
    Ok(())
}
