use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::ExperimentError;
use crate::sim::{Protocol, SimConfig};
use crate::topology::DelayDistribution;

/// Environment variable that overrides the dataset directory.
pub const DATA_DIR_ENV: &str = "ETREE_DATA_DIR";

/// Whole experiment description, read from TOML.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_name")]
    pub name: String,
    pub output_dir: PathBuf,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    pub protocols: Vec<Protocol>,
    pub dataset: DatasetSpec,
    pub distribution: Distribution,
    pub topology: TopologySpec,
    #[serde(default)]
    pub tree: TreeSpec,
    #[serde(default)]
    pub sim: SimConfig,
}

fn default_name() -> String {
    "experiment".into()
}

fn default_seeds() -> Vec<u64> {
    vec![1, 2, 3]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DatasetSpec {
    /// UCI HAR: `har_train.csv`/`har_test.csv` or the original
    /// `train/X_train.txt` layout. Falls back to `$ETREE_DATA_DIR`.
    Har {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        dir: Option<PathBuf>,
    },
    /// Numeric CSV pair, label in the last column unless stated.
    Csv {
        train: PathBuf,
        test: PathBuf,
        feature_count: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        label_column: Option<usize>,
        #[serde(default)]
        skip_header: bool,
    },
    /// Gaussian blobs, for smoke runs without data files.
    Synthetic {
        classes: usize,
        train_per_class: usize,
        test_per_class: usize,
        features: usize,
        noise_std: f64,
        #[serde(default)]
        seed: u64,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Distribution {
    Iid,
    /// Every node holds `classes_per_node` random classes.
    NoniidK { classes_per_node: usize },
    /// Samples sorted by label and cut into contiguous shards.
    NoniidSorted,
}

impl fmt::Display for Distribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Distribution::Iid => f.write_str("iid"),
            Distribution::NoniidK { classes_per_node } => write!(f, "noniid-{classes_per_node}"),
            Distribution::NoniidSorted => f.write_str("noniid-sorted"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum TopologySpec {
    Random { nodes: usize, links: usize, delay: DelayDistribution },
    /// One star per class around a random owner of that class.
    ClassCentered { nodes: usize, delay: DelayDistribution },
    Complete { nodes: usize, delay_ms: f64 },
    /// Edge-list file (`nodes N` header, then `u v delay_ms`).
    File { path: PathBuf, nodes: usize },
}

impl TopologySpec {
    pub fn nodes(&self) -> usize {
        match *self {
            TopologySpec::Random { nodes, .. }
            | TopologySpec::ClassCentered { nodes, .. }
            | TopologySpec::Complete { nodes, .. }
            | TopologySpec::File { nodes, .. } => nodes,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ClusteringKind {
    Kmeans,
    Kma,
    UnuniformKma,
}

impl ClusteringKind {
    pub fn name(self) -> &'static str {
        match self {
            ClusteringKind::Kmeans => "kmeans",
            ClusteringKind::Kma => "kma",
            ClusteringKind::UnuniformKma => "ununiform-kma",
        }
    }

    pub fn needs_profile(self) -> bool {
        self != ClusteringKind::Kmeans
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TreeSpec {
    pub layer_ks: Vec<usize>,
    /// One aggregation frequency per layer between leaves and root.
    pub frequencies: Vec<u32>,
    pub clustering: ClusteringKind,
    /// Threshold for KMA and public-node selection.
    pub delta: f64,
    /// Thresholds swept by `cluster-eval`.
    pub deltas: Vec<f64>,
    /// Local epochs behind the accuracy profile.
    pub pretrain_rounds: usize,
    /// Size of the class-skewed probe set drawn from the test split.
    pub probe_size: usize,
    pub max_iters: usize,
    /// Share of nodes probed as public nodes; none when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
}

impl Default for TreeSpec {
    fn default() -> Self {
        TreeSpec {
            layer_ks: vec![20],
            frequencies: vec![5],
            clustering: ClusteringKind::Kmeans,
            delta: 0.05,
            deltas: vec![0.01, 0.03, 0.05, 0.07, 0.09],
            pretrain_rounds: 5,
            probe_size: 1000,
            max_iters: crate::clustering::DEFAULT_MAX_ITERS,
            gamma: None,
        }
    }
}

fn invalid(field: &str, msg: impl Into<String>) -> ExperimentError {
    ExperimentError::Config { field: field.to_string(), msg: msg.into() }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, ExperimentError> {
        toml::from_str(text).map_err(|e| invalid("<root>", e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always representable as TOML")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ExperimentError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| invalid("<file>", format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        if let Some(base) = path.parent() {
            cfg.resolve_relative(base);
        }
        Ok(cfg)
    }

    /// Makes relative data and output paths relative to `base`.
    pub fn resolve_relative(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.output_dir);
        match &mut self.dataset {
            DatasetSpec::Har { dir: Some(d) } => fix(d),
            DatasetSpec::Csv { train, test, .. } => {
                fix(train);
                fix(test);
            }
            _ => {}
        }
        if let TopologySpec::File { path, .. } = &mut self.topology {
            fix(path);
        }
    }

    /// Directory to read HAR from: explicit override, then the environment
    /// variable, then the config.
    pub fn har_dir(&self, override_dir: Option<&Path>) -> Option<PathBuf> {
        let DatasetSpec::Har { dir } = &self.dataset else {
            return None;
        };
        override_dir
            .map(Path::to_path_buf)
            .or_else(|| std::env::var_os(DATA_DIR_ENV).map(PathBuf::from))
            .or_else(|| dir.clone())
    }

    /// Checks every parameter range and referenced file. Nothing is written.
    pub fn validate(&self) -> Result<(), ExperimentError> {
        if self.protocols.is_empty() {
            return Err(invalid("protocols", "at least one protocol is required"));
        }
        if self.seeds.is_empty() {
            return Err(invalid("seeds", "at least one seed is required"));
        }
        let mut seen = self.seeds.clone();
        seen.sort_unstable();
        seen.dedup();
        if seen.len() != self.seeds.len() {
            return Err(invalid("seeds", "seeds must be distinct"));
        }
        self.sim.validate().map_err(|e| invalid("sim", e.to_string()))?;

        match &self.dataset {
            DatasetSpec::Har { .. } => {
                let dir = self.har_dir(None).ok_or_else(|| {
                    invalid("dataset.dir", format!("no HAR directory given and {DATA_DIR_ENV} is not set"))
                })?;
                if !dir.is_dir() {
                    return Err(invalid("dataset.dir", format!("{} is not a directory", dir.display())));
                }
            }
            DatasetSpec::Csv { train, test, feature_count, .. } => {
                for (field, p) in [("dataset.train", train), ("dataset.test", test)] {
                    if !p.is_file() {
                        return Err(invalid(field, format!("{} does not exist", p.display())));
                    }
                }
                if *feature_count == 0 {
                    return Err(invalid("dataset.feature_count", "must be >= 1"));
                }
            }
            DatasetSpec::Synthetic { classes, train_per_class, test_per_class, features, noise_std, .. } => {
                if *classes < 2 {
                    return Err(invalid("dataset.classes", "must be >= 2"));
                }
                if *train_per_class == 0 || *test_per_class == 0 || *features == 0 {
                    return Err(invalid("dataset", "sample and feature counts must be >= 1"));
                }
                if !(noise_std.is_finite() && *noise_std >= 0.0) {
                    return Err(invalid("dataset.noise_std", "must be finite and >= 0"));
                }
            }
        }

        if let Distribution::NoniidK { classes_per_node } = self.distribution {
            if classes_per_node == 0 {
                return Err(invalid("distribution.classes_per_node", "must be >= 1"));
            }
        }

        let nodes = self.topology.nodes();
        match &self.topology {
            TopologySpec::Random { nodes, links, delay } => {
                delay.validate().map_err(|e| invalid("topology.delay", e.to_string()))?;
                let max = nodes * nodes.saturating_sub(1) / 2;
                if *nodes < 2 || *links < nodes - 1 || *links > max {
                    return Err(invalid(
                        "topology.links",
                        format!("{links} links cannot connect {nodes} nodes (need {}..={max})", nodes.saturating_sub(1)),
                    ));
                }
            }
            TopologySpec::ClassCentered { nodes, delay } => {
                delay.validate().map_err(|e| invalid("topology.delay", e.to_string()))?;
                if *nodes < 2 {
                    return Err(invalid("topology.nodes", "must be >= 2"));
                }
            }
            TopologySpec::Complete { nodes, delay_ms } => {
                if *nodes < 2 {
                    return Err(invalid("topology.nodes", "must be >= 2"));
                }
                if !(delay_ms.is_finite() && *delay_ms >= 0.0) {
                    return Err(invalid("topology.delay_ms", "must be finite and >= 0"));
                }
            }
            TopologySpec::File { path, .. } => {
                if !path.is_file() {
                    return Err(invalid("topology.path", format!("{} does not exist", path.display())));
                }
            }
        }

        let t = &self.tree;
        if self.protocols.iter().any(|p| p.needs_tree()) || t.gamma.is_some() {
            let mut available = nodes;
            for (i, &k) in t.layer_ks.iter().enumerate() {
                if k == 0 || k > available {
                    return Err(invalid(&format!("tree.layer_ks[{i}]"), format!("K = {k} must be in 1..={available}")));
                }
                available = k;
            }
            if t.layer_ks.is_empty() {
                return Err(invalid("tree.layer_ks", "at least one layer is required"));
            }
            let intermediate = t.layer_ks.len() - usize::from(available == 1);
            if t.frequencies.len() != intermediate {
                return Err(invalid(
                    "tree.frequencies",
                    format!("expected {intermediate} values (one per intermediate layer), got {}", t.frequencies.len()),
                ));
            }
            if t.frequencies.contains(&0) {
                return Err(invalid("tree.frequencies", "frequencies must be >= 1"));
            }
        }
        if !(t.delta > 0.0) {
            return Err(invalid("tree.delta", "must be > 0"));
        }
        if let Some(i) = t.deltas.iter().position(|d| !(*d > 0.0)) {
            return Err(invalid(&format!("tree.deltas[{i}]"), "must be > 0"));
        }
        if let Some(g) = t.gamma {
            if !(g > 0.0 && g < 1.0) {
                return Err(invalid("tree.gamma", "must lie in (0, 1)"));
            }
        }
        if t.probe_size == 0 {
            return Err(invalid("tree.probe_size", "must be >= 1"));
        }
        if t.max_iters == 0 {
            return Err(invalid("tree.max_iters", "must be >= 1"));
        }
        Ok(())
    }
}
