//! Discrete-event execution of the learning protocols over a delay network.
//!
//! Every protocol moves models and updates between devices along shortest
//! delay paths, trains with [`sgd_train`], and reports accuracy on a held-out
//! test set together with the number of link hops messages have crossed.
//! A local update is always handed over as a delta and folded in with
//! [`apply_averaged_deltas`], even when a device aggregates only itself.

mod engine;
mod federated;
mod hierarchy;
mod local;
mod metrics;

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clustering::ClusterError;
use crate::dataset::{LabeledDataset, NodePartition};
use crate::model::{delta, evaluate, sgd_train, ModelDelta, ModelError, ModelParams, TrainConfig};
use crate::topology::{Routes, TopologyError, TopologyGraph};
use crate::tree::ETree;

pub use engine::{EventQueue, Micros};
pub use metrics::{communication_cost, MetricsLog, MetricsRow, CSV_HEADER};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("protocol {0} needs an aggregation tree")]
    MissingTree(Protocol),
    #[error("{shards} shards for a {nodes}-node topology")]
    ShardMismatch { nodes: usize, shards: usize },
    #[error("tree covers {tree} leaves but the topology has {nodes} nodes")]
    TreeMismatch { nodes: usize, tree: usize },
    #[error("no simulated time passes between rounds at {at_ms} ms; set a positive cycle time or max_rounds")]
    Stall { at_ms: f64 },
    #[error("invalid simulation config: {0}")]
    Config(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error(transparent)]
    Cluster(#[from] ClusterError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Protocol {
    Etree,
    Federated,
    Gossip,
    Individual,
    Grouped,
}

impl Protocol {
    pub const ALL: [Protocol; 5] =
        [Protocol::Etree, Protocol::Federated, Protocol::Gossip, Protocol::Individual, Protocol::Grouped];

    pub fn name(self) -> &'static str {
        match self {
            Protocol::Etree => "etree",
            Protocol::Federated => "federated",
            Protocol::Gossip => "gossip",
            Protocol::Individual => "individual",
            Protocol::Grouped => "grouped",
        }
    }

    pub fn needs_tree(self) -> bool {
        matches!(self, Protocol::Etree | Protocol::Grouped)
    }
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.name())
    }
}

impl FromStr for Protocol {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Protocol::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| format!("unknown protocol `{s}`"))
    }
}

/// Run parameters shared by all protocols. Times are simulated milliseconds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub train: TrainConfig,
    /// Share of devices asked to train in each federated round.
    pub client_fraction: f64,
    /// Time a device spends on one local update.
    pub compute_time_ms: f64,
    /// Shortest time between the starts of two consecutive rounds of a
    /// synchronous protocol, or two local updates of an asynchronous one.
    pub min_cycle_ms: f64,
    pub budget_ms: f64,
    /// Accuracy sampling period for gossip, individual and grouped runs.
    pub sample_interval_ms: f64,
    /// Stop after this many completed rounds (tree and federated protocols).
    pub max_rounds: Option<usize>,
    pub seed: u64,
    /// Keep a copy of the evaluated models for every logged row.
    pub record_models: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            train: TrainConfig::default(),
            client_fraction: 1.0,
            compute_time_ms: 0.0,
            min_cycle_ms: 100.0,
            budget_ms: 30_000.0,
            sample_interval_ms: 1000.0,
            max_rounds: None,
            seed: 1,
            record_models: false,
        }
    }
}

fn to_micros(field: &str, ms: f64) -> Result<Micros, SimError> {
    if !(ms.is_finite() && ms >= 0.0) {
        return Err(SimError::Config(format!("{field} must be finite and >= 0, got {ms}")));
    }
    Ok((ms * 1000.0).round() as Micros)
}

/// [`SimConfig`] with times converted to the integer clock.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Clock {
    pub compute: Micros,
    pub min_cycle: Micros,
    pub budget: Micros,
    pub sample: Micros,
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        self.clock().map(|_| ())?;
        self.train.validate()?;
        if !(self.client_fraction > 0.0 && self.client_fraction <= 1.0) {
            return Err(SimError::Config(format!("client_fraction must lie in (0, 1], got {}", self.client_fraction)));
        }
        Ok(())
    }

    pub(crate) fn clock(&self) -> Result<Clock, SimError> {
        let sample = to_micros("sample_interval_ms", self.sample_interval_ms)?;
        if sample == 0 {
            return Err(SimError::Config("sample_interval_ms must be > 0".into()));
        }
        Ok(Clock {
            compute: to_micros("compute_time_ms", self.compute_time_ms)?,
            min_cycle: to_micros("min_cycle_ms", self.min_cycle_ms)?,
            budget: to_micros("budget_ms", self.budget_ms)?,
            sample,
        })
    }
}

/// Everything a run reads but never mutates.
#[derive(Clone, Copy)]
pub struct SimInputs<'a> {
    pub graph: &'a TopologyGraph,
    pub routes: &'a Routes,
    pub train: &'a LabeledDataset,
    pub test: &'a LabeledDataset,
    pub partition: &'a NodePartition,
    pub tree: Option<&'a ETree>,
}

impl SimInputs<'_> {
    fn check(&self, protocol: Protocol) -> Result<(), SimError> {
        let nodes = self.graph.node_count();
        if self.partition.node_count() != nodes {
            return Err(SimError::ShardMismatch { nodes, shards: self.partition.node_count() });
        }
        if protocol.needs_tree() {
            let tree = self.tree.ok_or(SimError::MissingTree(protocol))?;
            if tree.layer(0).len() != nodes {
                return Err(SimError::TreeMismatch { nodes, tree: tree.layer(0).len() });
            }
        }
        Ok(())
    }
}

/// Runs one protocol to the end of the time budget (or `max_rounds`).
pub fn run_protocol(protocol: Protocol, inputs: &SimInputs, cfg: &SimConfig) -> Result<MetricsLog, SimError> {
    cfg.validate()?;
    inputs.check(protocol)?;
    match protocol {
        Protocol::Etree => hierarchy::run(inputs, cfg, hierarchy::Mode::Tree),
        Protocol::Grouped => hierarchy::run(inputs, cfg, hierarchy::Mode::Groups),
        Protocol::Federated => federated::run(inputs, cfg),
        Protocol::Individual => local::run_individual(inputs, cfg),
        Protocol::Gossip => local::run_gossip(inputs, cfg),
    }
}

pub fn run_etree(inputs: &SimInputs, cfg: &SimConfig) -> Result<MetricsLog, SimError> {
    run_protocol(Protocol::Etree, inputs, cfg)
}

pub fn run_federated(inputs: &SimInputs, cfg: &SimConfig) -> Result<MetricsLog, SimError> {
    run_protocol(Protocol::Federated, inputs, cfg)
}

pub fn run_gossip(inputs: &SimInputs, cfg: &SimConfig) -> Result<MetricsLog, SimError> {
    run_protocol(Protocol::Gossip, inputs, cfg)
}

pub fn run_individual(inputs: &SimInputs, cfg: &SimConfig) -> Result<MetricsLog, SimError> {
    run_protocol(Protocol::Individual, inputs, cfg)
}

pub fn run_grouped(inputs: &SimInputs, cfg: &SimConfig) -> Result<MetricsLog, SimError> {
    run_protocol(Protocol::Grouped, inputs, cfg)
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of the `count`-th local update of `node` in a run; protocols that
/// train the same device the same number of times see the same shuffles.
pub fn update_seed(run_seed: u64, node: usize, count: u64) -> u64 {
    splitmix(splitmix(splitmix(run_seed) ^ node as u64) ^ count)
}

/// Trains a copy of `base` on the node's shard and returns the change.
pub(crate) fn local_update(
    inputs: &SimInputs,
    cfg: &SimConfig,
    node: usize,
    count: u64,
    base: &ModelParams,
) -> Result<ModelDelta, SimError> {
    let train = cfg.train.with_seed(update_seed(cfg.seed, node, count));
    let trained = sgd_train(base, inputs.train, inputs.partition.shard(node), &train)?;
    Ok(delta(&trained, base)?)
}

/// Accuracy and loss of each model on the test set, evaluated in parallel.
pub(crate) fn evaluate_all(models: &[&ModelParams], test: &LabeledDataset) -> Result<Vec<(f64, f64)>, SimError> {
    let evals = models
        .par_iter()
        .map(|m| evaluate(m, test).map(|e| (e.accuracy, e.loss)))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(evals)
}

/// Weighted mean of `(accuracy, loss)` pairs, summed in order.
pub(crate) fn weighted_mean(evals: &[(f64, f64)], weights: &[f64]) -> (f64, f64) {
    let total: f64 = weights.iter().sum();
    let (mut a, mut l) = (0.0, 0.0);
    for (&(acc, loss), &w) in evals.iter().zip(weights) {
        a += w * acc;
        l += w * loss;
    }
    (a / total, l / total)
}
