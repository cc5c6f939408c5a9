use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use etree::experiment::{cluster_eval, replicate_table3, run_experiment, ExperimentConfig, ExperimentError, DATA_DIR_ENV};

#[derive(Parser)]
#[command(name = "etree", version, about = "Hierarchical learning simulator for edge networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every protocol and seed listed in a config file.
    Run { config: PathBuf },
    /// Five protocols under IID and 4-classes-per-node HAR data.
    #[command(name = "replicate-table3")]
    ReplicateTable3 {
        /// HAR directory; defaults to $ETREE_DATA_DIR.
        #[arg(long)]
        data_dir: Option<PathBuf>,
        #[arg(long, value_delimiter = ',', default_value = "1,2,3")]
        seeds: Vec<u64>,
        #[arg(long, default_value = "table3_out")]
        output_dir: PathBuf,
    },
    /// K-Means, ununiform KMA and KMA over the configured thresholds.
    #[command(name = "cluster-eval")]
    ClusterEval { config: PathBuf },
}

fn fail(e: ExperimentError) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(e.exit_code() as u8)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Run { config } => {
            ExperimentConfig::load(&config).and_then(|cfg| run_experiment(&cfg)).map(|r| r.to_text())
        }
        Command::ClusterEval { config } => {
            ExperimentConfig::load(&config).and_then(|cfg| cluster_eval(&cfg)).map(|r| r.to_text())
        }
        Command::ReplicateTable3 { data_dir, seeds, output_dir } => {
            let Some(dir) = data_dir.or_else(|| std::env::var_os(DATA_DIR_ENV).map(PathBuf::from)) else {
                return fail(ExperimentError::Config {
                    field: "--data-dir".into(),
                    msg: format!("pass --data-dir or set {DATA_DIR_ENV}"),
                });
            };
            replicate_table3(&dir, &seeds, &output_dir).map(|r| r.to_text())
        }
    };
    match result {
        Ok(text) => {
            print!("{text}");
            ExitCode::SUCCESS
        }
        Err(e) => fail(e),
    }
}
