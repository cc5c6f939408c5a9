//! Config-driven experiment runs: builds the world for every seed, runs the
//! requested protocols or clustering variants, and writes one CSV per run
//! plus a `summary.csv`.

mod config;
mod groups;
mod table3;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use thiserror::Error;

use crate::clustering::{pretrain_profile, AccuracyProfile, ClusterError, KmaConfig};
use crate::dataset::{
    default_class_weights, load_csv_dataset, load_uci_har_split, partition_iid, partition_noniid_classes_per_node,
    partition_noniid_sorted, sample_skewed_test_set, synthetic_blobs, CsvSchema, DatasetError, LabeledDataset,
    NodePartition,
};
use crate::sim::{run_protocol, MetricsLog, Protocol, SimConfig, SimError, SimInputs};
use crate::topology::{
    complete_topology, generate_class_centered_topology, generate_random_topology, read_edge_list, Routes,
    TopologyError, TopologyGraph,
};
use crate::tree::{attach_public_nodes, build_etree, select_public_nodes, ETree, LeafClustering, PublicNodeConfig, TreeError};

pub use config::{ClusteringKind, DatasetSpec, Distribution, ExperimentConfig, TopologySpec, TreeSpec, DATA_DIR_ENV};
pub use groups::{class_aligned_groups, class_group_run, contiguous_groups, round_robin_groups, GroupRun};
pub use table3::{replicate_table3, table3_config, Table3Report, REFERENCE_ACCURACY};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid config at `{field}`: {msg}")]
    Config { field: String, msg: String },
    #[error("dataset: {0}")]
    Data(#[from] DatasetError),
    #[error("topology file: {0}")]
    TopologyFile(TopologyError),
    #[error("topology: {0}")]
    Topology(#[from] TopologyError),
    #[error("clustering: {0}")]
    Cluster(#[from] ClusterError),
    #[error("tree: {0}")]
    Tree(#[from] TreeError),
    #[error("seed {seed}, {variant}: {source}")]
    Sim { variant: String, seed: u64, source: SimError },
    #[error("writing {path}: {msg}")]
    Output { path: String, msg: String },
}

impl ExperimentError {
    /// 1 for problems with the inputs, 2 for failures while running.
    pub fn exit_code(&self) -> i32 {
        match self {
            ExperimentError::Config { .. } | ExperimentError::Data(_) | ExperimentError::TopologyFile(_) => 1,
            _ => 2,
        }
    }
}

/// Loaded train and test splits; the test labels share the train label ids.
#[derive(Clone, Debug)]
pub struct DataSplits {
    pub train: LabeledDataset,
    pub test: LabeledDataset,
}

pub fn load_data(cfg: &ExperimentConfig) -> Result<DataSplits, ExperimentError> {
    match &cfg.dataset {
        DatasetSpec::Har { .. } => {
            let dir = cfg.har_dir(None).ok_or_else(|| ExperimentError::Config {
                field: "dataset.dir".into(),
                msg: format!("no HAR directory given and {DATA_DIR_ENV} is not set"),
            })?;
            load_har(&dir)
        }
        DatasetSpec::Csv { train, test, feature_count, label_column, skip_header } => {
            let schema = CsvSchema { feature_count: *feature_count, label_column: *label_column, skip_header: *skip_header };
            let train = load_csv_dataset(train, &schema)?;
            let test = load_csv_dataset(test, &schema)?.aligned_to(&train)?;
            Ok(DataSplits { train, test })
        }
        DatasetSpec::Synthetic { classes, train_per_class, test_per_class, features, noise_std, seed } => {
            // both splits share the class means, which depend on the seed only
            let train = synthetic_blobs(&vec![*train_per_class; *classes], *features, *noise_std, *seed)?;
            let test = synthetic_blobs(&vec![*test_per_class; *classes], *features, *noise_std, *seed)?;
            Ok(DataSplits { train, test })
        }
    }
}

/// Reads HAR from `har_train.csv`/`har_test.csv` (561 features, label last)
/// or from the original `train/X_train.txt` layout.
pub fn load_har(dir: &Path) -> Result<DataSplits, ExperimentError> {
    let csv_train = dir.join("har_train.csv");
    let (train, test) = if csv_train.is_file() {
        let schema = CsvSchema::new(561);
        (load_csv_dataset(&csv_train, &schema)?, load_csv_dataset(dir.join("har_test.csv"), &schema)?)
    } else {
        // the official archive unpacks into this folder
        let nested = dir.join("UCI HAR Dataset");
        let root = if !dir.join("train").is_dir() && nested.is_dir() { nested } else { dir.to_path_buf() };
        (load_uci_har_split(&root, "train")?, load_uci_har_split(&root, "test")?)
    };
    let test = test.aligned_to(&train)?;
    Ok(DataSplits { train, test })
}

/// Per-seed network, data placement and (when needed) accuracy profile.
#[derive(Clone, Debug)]
pub struct World {
    pub seed: u64,
    pub graph: TopologyGraph,
    pub routes: Routes,
    pub partition: NodePartition,
    pub profile: Option<AccuracyProfile>,
}

pub fn partition(ds: &LabeledDataset, nodes: usize, dist: Distribution, seed: u64) -> Result<NodePartition, DatasetError> {
    match dist {
        Distribution::Iid => partition_iid(ds, nodes, seed),
        Distribution::NoniidK { classes_per_node } => partition_noniid_classes_per_node(ds, nodes, classes_per_node, seed),
        Distribution::NoniidSorted => partition_noniid_sorted(ds, nodes),
    }
}

/// Pre-trained accuracy of every node on a class-skewed probe drawn from the
/// test split.
pub fn accuracy_profile(
    data: &DataSplits,
    partition: &NodePartition,
    spec: &TreeSpec,
    sim: &SimConfig,
    seed: u64,
) -> Result<AccuracyProfile, ExperimentError> {
    let size = spec.probe_size.min(data.test.len());
    let weights = default_class_weights(data.test.class_count());
    let probe = sample_skewed_test_set(&data.test, size, &weights, seed)?;
    Ok(pretrain_profile(partition, &data.train, &probe, spec.pretrain_rounds, &sim.train.with_seed(seed))?)
}

pub fn build_world(
    cfg: &ExperimentConfig,
    data: &DataSplits,
    seed: u64,
    need_profile: bool,
) -> Result<World, ExperimentError> {
    let nodes = cfg.topology.nodes();
    let partition = partition(&data.train, nodes, cfg.distribution, seed)?;
    let graph = match &cfg.topology {
        TopologySpec::Random { nodes, links, delay } => generate_random_topology(*nodes, *links, *delay, seed)?,
        TopologySpec::ClassCentered { delay, .. } => {
            generate_class_centered_topology(&partition.label_sets(&data.train), *delay, seed)?
        }
        TopologySpec::Complete { nodes, delay_ms } => complete_topology(*nodes, *delay_ms)?,
        TopologySpec::File { path, nodes } => {
            let g = read_edge_list(path).map_err(ExperimentError::TopologyFile)?;
            if g.node_count() != *nodes {
                return Err(ExperimentError::Config {
                    field: "topology.nodes".into(),
                    msg: format!("{} lists {} nodes, config says {nodes}", path.display(), g.node_count()),
                });
            }
            g
        }
    };
    let routes = Routes::compute(&graph)?;
    let profile = if need_profile { Some(accuracy_profile(data, &partition, &cfg.tree, &cfg.sim, seed)?) } else { None };
    Ok(World { seed, graph, routes, partition, profile })
}

/// One line of the run matrix: a protocol, and for tree protocols the leaf
/// clustering used to build the tree.
#[derive(Clone, Debug, PartialEq)]
pub struct Variant {
    pub label: String,
    pub protocol: Protocol,
    pub clustering: ClusteringKind,
    pub delta: f64,
}

impl Variant {
    pub fn protocol(cfg: &ExperimentConfig, protocol: Protocol) -> Self {
        Variant { label: protocol.name().into(), protocol, clustering: cfg.tree.clustering, delta: cfg.tree.delta }
    }
}

/// Builds the tree for `variant` in `world`, attaching public nodes when
/// `spec.gamma` is set.
pub fn build_tree(spec: &TreeSpec, variant: &Variant, world: &World) -> Result<ETree, ExperimentError> {
    let d = world.routes.delays();
    let missing = || ExperimentError::Config { field: "tree.clustering".into(), msg: "accuracy profile missing".into() };
    let leaf = match variant.clustering {
        ClusteringKind::Kmeans => LeafClustering::KMeans,
        ClusteringKind::Kma => LeafClustering::Kma {
            profile: world.profile.as_ref().ok_or_else(missing)?,
            cfg: KmaConfig { delta: variant.delta, max_iters: spec.max_iters, seed: world.seed },
        },
        ClusteringKind::UnuniformKma => LeafClustering::UnuniformKma { profile: world.profile.as_ref().ok_or_else(missing)? },
    };
    let tree = build_etree(d, &spec.layer_ks, leaf, &spec.frequencies, world.seed)?;
    let Some(gamma) = spec.gamma else {
        return Ok(tree);
    };
    let profile = world.profile.as_ref().ok_or_else(missing)?;
    let publics = select_public_nodes(tree.leaf_clusters(), profile, d, &PublicNodeConfig { gamma, delta: variant.delta })?;
    Ok(attach_public_nodes(&tree, &publics)?)
}

#[derive(Clone, Debug)]
pub struct RunRecord {
    pub variant: String,
    pub seed: u64,
    pub log: MetricsLog,
    pub csv_path: PathBuf,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SummaryRow {
    pub variant: String,
    pub distribution: String,
    pub final_accuracies: Vec<f64>,
    pub hops: Vec<u64>,
}

pub const SUMMARY_HEADER: &str = "variant,distribution,runs,accuracy_mean,accuracy_std,hops_mean,final_accuracies";

impl SummaryRow {
    pub fn accuracy_mean(&self) -> f64 {
        mean(&self.final_accuracies)
    }

    /// Sample standard deviation; zero for a single run.
    pub fn accuracy_std(&self) -> f64 {
        let n = self.final_accuracies.len();
        if n < 2 {
            return 0.0;
        }
        let m = self.accuracy_mean();
        (self.final_accuracies.iter().map(|a| (a - m).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    }

    pub fn hops_mean(&self) -> f64 {
        self.hops.iter().sum::<u64>() as f64 / self.hops.len().max(1) as f64
    }

    fn to_csv_line(&self) -> String {
        let accs: Vec<String> = self.final_accuracies.iter().map(|a| a.to_string()).collect();
        format!(
            "{},{},{},{},{},{},{}",
            self.variant,
            self.distribution,
            self.final_accuracies.len(),
            self.accuracy_mean(),
            self.accuracy_std(),
            self.hops_mean(),
            accs.join(";")
        )
    }
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len().max(1) as f64
}

#[derive(Clone, Debug)]
pub struct ExperimentReport {
    pub name: String,
    pub distribution: String,
    pub runs: Vec<RunRecord>,
    pub summary: Vec<SummaryRow>,
    pub summary_path: PathBuf,
}

impl ExperimentReport {
    pub fn row(&self, variant: &str) -> Option<&SummaryRow> {
        self.summary.iter().find(|r| r.variant == variant)
    }

    pub fn run(&self, variant: &str, seed: u64) -> Option<&RunRecord> {
        self.runs.iter().find(|r| r.variant == variant && r.seed == seed)
    }

    pub fn summary_csv(&self) -> String {
        let mut out = String::from(SUMMARY_HEADER);
        out.push('\n');
        for row in &self.summary {
            out.push_str(&row.to_csv_line());
            out.push('\n');
        }
        out
    }

    /// Fixed-width text table of the summary.
    pub fn to_text(&self) -> String {
        let mut out = format!("{} ({})\n", self.name, self.distribution);
        out.push_str(&format!("{:<24} {:>6} {:>10} {:>8} {:>12}\n", "variant", "runs", "accuracy", "std", "hops"));
        for r in &self.summary {
            out.push_str(&format!(
                "{:<24} {:>6} {:>10.4} {:>8.4} {:>12.1}\n",
                r.variant,
                r.final_accuracies.len(),
                r.accuracy_mean(),
                r.accuracy_std(),
                r.hops_mean()
            ));
        }
        out
    }
}

/// Runs every protocol of `cfg` for every seed.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport, ExperimentError> {
    cfg.validate()?;
    let variants: Vec<Variant> = cfg.protocols.iter().map(|&p| Variant::protocol(cfg, p)).collect();
    run_variants(cfg, &variants)
}

/// Compares leaf clusterings for the tree protocol: K-Means, ununiform KMA,
/// and KMA at every threshold of `tree.deltas`.
pub fn cluster_eval(cfg: &ExperimentConfig) -> Result<ExperimentReport, ExperimentError> {
    cfg.validate()?;
    run_variants(cfg, &cluster_variants(&cfg.tree))
}

pub fn cluster_variants(spec: &TreeSpec) -> Vec<Variant> {
    let mut out = vec![
        Variant { label: "kmeans".into(), protocol: Protocol::Etree, clustering: ClusteringKind::Kmeans, delta: spec.delta },
        Variant {
            label: "ununiform-kma".into(),
            protocol: Protocol::Etree,
            clustering: ClusteringKind::UnuniformKma,
            delta: spec.delta,
        },
    ];
    for &delta in &spec.deltas {
        out.push(Variant { label: format!("kma-d{delta}"), protocol: Protocol::Etree, clustering: ClusteringKind::Kma, delta });
    }
    out
}

/// Runs `variants` × seeds on already loaded data, without touching the disk.
pub fn run_variants_on(
    cfg: &ExperimentConfig,
    data: &DataSplits,
    variants: &[Variant],
) -> Result<Vec<(Variant, u64, MetricsLog)>, ExperimentError> {
    let need_profile = cfg.tree.gamma.is_some()
        || variants.iter().any(|v| v.protocol.needs_tree() && v.clustering.needs_profile());
    let worlds = cfg
        .seeds
        .par_iter()
        .map(|&seed| build_world(cfg, data, seed, need_profile))
        .collect::<Result<Vec<_>, _>>()?;

    let jobs: Vec<(&Variant, &World)> = variants.iter().flat_map(|v| worlds.iter().map(move |w| (v, w))).collect();
    jobs.into_par_iter()
        .map(|(variant, world)| {
            let tree = if variant.protocol.needs_tree() { Some(build_tree(&cfg.tree, variant, world)?) } else { None };
            let inputs = SimInputs {
                graph: &world.graph,
                routes: &world.routes,
                train: &data.train,
                test: &data.test,
                partition: &world.partition,
                tree: tree.as_ref(),
            };
            let sim = SimConfig { seed: world.seed, ..cfg.sim.clone() };
            let log = run_protocol(variant.protocol, &inputs, &sim).map_err(|source| ExperimentError::Sim {
                variant: variant.label.clone(),
                seed: world.seed,
                source,
            })?;
            Ok((variant.clone(), world.seed, log))
        })
        .collect()
}

fn run_variants(cfg: &ExperimentConfig, variants: &[Variant]) -> Result<ExperimentReport, ExperimentError> {
    let data = load_data(cfg)?;
    let results = run_variants_on(cfg, &data, variants)?;
    write_report(cfg, results)
}

fn output_err(path: &Path, e: impl std::fmt::Display) -> ExperimentError {
    ExperimentError::Output { path: path.display().to_string(), msg: e.to_string() }
}

/// Writes per-run CSVs and `summary.csv` once every run has finished.
pub fn write_report(
    cfg: &ExperimentConfig,
    results: Vec<(Variant, u64, MetricsLog)>,
) -> Result<ExperimentReport, ExperimentError> {
    let dist = cfg.distribution.to_string();
    let dir = &cfg.output_dir;
    std::fs::create_dir_all(dir).map_err(|e| output_err(dir, e))?;

    let mut by_variant: BTreeMap<usize, SummaryRow> = BTreeMap::new();
    let mut order: Vec<String> = Vec::new();
    let mut runs = Vec::with_capacity(results.len());
    for (variant, seed, log) in results {
        let path = dir.join(format!("{}_{}_{}.csv", variant.label, dist, seed));
        log.write_csv(&path).map_err(|e| output_err(&path, e))?;
        let idx = match order.iter().position(|l| *l == variant.label) {
            Some(i) => i,
            None => {
                order.push(variant.label.clone());
                order.len() - 1
            }
        };
        let row = by_variant.entry(idx).or_insert_with(|| SummaryRow {
            variant: variant.label.clone(),
            distribution: dist.clone(),
            final_accuracies: Vec::new(),
            hops: Vec::new(),
        });
        row.final_accuracies.push(log.final_accuracy());
        row.hops.push(log.total_hops);
        runs.push(RunRecord { variant: variant.label, seed, log, csv_path: path });
    }

    let report = ExperimentReport {
        name: cfg.name.clone(),
        distribution: dist,
        runs,
        summary: by_variant.into_values().collect(),
        summary_path: dir.join("summary.csv"),
    };
    std::fs::write(&report.summary_path, report.summary_csv()).map_err(|e| output_err(&report.summary_path, e))?;
    Ok(report)
}
