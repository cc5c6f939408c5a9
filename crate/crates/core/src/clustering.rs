//! Delay-medoid clustering of devices: plain K-Means, the accuracy-constrained
//! KMA variant, and an accuracy-sorted block baseline.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{LabeledDataset, NodePartition};
use crate::model::{evaluate, init_model, sgd_train, ModelError, TrainConfig};
use crate::topology::{DelayMatrix, NodeId};

pub const DEFAULT_MAX_ITERS: usize = 50;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ClusterError {
    #[error("cluster is empty")]
    EmptyCluster,
    #[error("cannot form {k} clusters from {nodes} nodes")]
    InfeasibleK { k: usize, nodes: usize },
    #[error("node {node} is outside the {size}-node delay matrix")]
    NodeOutOfRange { node: NodeId, size: usize },
    #[error("node {0} listed twice")]
    DuplicateNode(NodeId),
    #[error("accuracy profile has no entry for node {0}")]
    MissingProfile(NodeId),
    #[error("accuracy {0} outside [0, 1]")]
    InvalidAccuracy(f64),
    #[error("delta must be > 0, got {0}")]
    InvalidDelta(f64),
    #[error("pre-training failed: {0}")]
    Training(#[from] ModelError),
}

/// Per-node accuracy of locally pre-trained models on a common probe set.
#[derive(Clone, Debug, PartialEq)]
pub struct AccuracyProfile {
    acc: Vec<f64>,
    acc_avg: f64,
    rounds: usize,
}

impl AccuracyProfile {
    pub fn new(acc: Vec<f64>, rounds: usize) -> Result<Self, ClusterError> {
        if let Some(&bad) = acc.iter().find(|a| !(0.0..=1.0).contains(*a)) {
            return Err(ClusterError::InvalidAccuracy(bad));
        }
        if acc.is_empty() {
            return Err(ClusterError::EmptyCluster);
        }
        let acc_avg = acc.iter().sum::<f64>() / acc.len() as f64;
        Ok(AccuracyProfile { acc, acc_avg, rounds })
    }

    pub fn acc(&self, node: NodeId) -> f64 {
        self.acc[node]
    }

    pub fn accuracies(&self) -> &[f64] {
        &self.acc
    }

    pub fn acc_avg(&self) -> f64 {
        self.acc_avg
    }

    pub fn rounds(&self) -> usize {
        self.rounds
    }

    pub fn len(&self) -> usize {
        self.acc.len()
    }

    pub fn is_empty(&self) -> bool {
        self.acc.is_empty()
    }

    /// Mean accuracy over `members`.
    pub fn mean_over(&self, members: &[NodeId]) -> f64 {
        members.iter().map(|&n| self.acc[n]).sum::<f64>() / members.len() as f64
    }

    fn covers(&self, nodes: &[NodeId]) -> Result<(), ClusterError> {
        match nodes.iter().find(|&&n| n >= self.acc.len()) {
            Some(&n) => Err(ClusterError::MissingProfile(n)),
            None => Ok(()),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KmaConfig {
    pub delta: f64,
    pub max_iters: usize,
    pub seed: u64,
}

impl Default for KmaConfig {
    fn default() -> Self {
        KmaConfig { delta: 0.05, max_iters: DEFAULT_MAX_ITERS, seed: 0 }
    }
}

impl KmaConfig {
    pub fn validate(&self) -> Result<(), ClusterError> {
        if self.delta > 0.0 {
            Ok(())
        } else {
            Err(ClusterError::InvalidDelta(self.delta))
        }
    }
}

/// A partition of a node set into `K` non-empty clusters, each with a center
/// that belongs to it.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClusterSet {
    clusters: Vec<Vec<NodeId>>,
    centers: Vec<NodeId>,
    iterations: usize,
    converged: bool,
}

impl ClusterSet {
    /// Builds a cluster set from member lists, choosing each center by
    /// [`center_node`].
    pub fn from_clusters(clusters: Vec<Vec<NodeId>>, d: &DelayMatrix) -> Result<Self, ClusterError> {
        let mut all: Vec<NodeId> = clusters.iter().flatten().copied().collect();
        check_nodes(&mut all, d)?;
        let mut clusters = clusters;
        for c in &mut clusters {
            c.sort_unstable();
        }
        let centers = clusters.iter().map(|c| center_node(c, d)).collect::<Result<_, _>>()?;
        Ok(ClusterSet { clusters, centers, iterations: 0, converged: true })
    }

    pub fn k(&self) -> usize {
        self.clusters.len()
    }

    pub fn clusters(&self) -> &[Vec<NodeId>] {
        &self.clusters
    }

    pub fn members(&self, cluster: usize) -> &[NodeId] {
        &self.clusters[cluster]
    }

    pub fn centers(&self) -> &[NodeId] {
        &self.centers
    }

    pub fn center(&self, cluster: usize) -> NodeId {
        self.centers[cluster]
    }

    pub fn cluster_of(&self, node: NodeId) -> Option<usize> {
        self.clusters.iter().position(|c| c.binary_search(&node).is_ok())
    }

    /// Node → cluster index for every member.
    pub fn assignment(&self) -> BTreeMap<NodeId, usize> {
        self.clusters
            .iter()
            .enumerate()
            .flat_map(|(k, c)| c.iter().map(move |&n| (n, k)))
            .collect()
    }

    pub fn nodes(&self) -> Vec<NodeId> {
        let mut v: Vec<NodeId> = self.clusters.iter().flatten().copied().collect();
        v.sort_unstable();
        v
    }

    /// Sweeps run before stopping.
    pub fn iterations(&self) -> usize {
        self.iterations
    }

    /// Whether the last sweep left every node where it was.
    pub fn converged(&self) -> bool {
        self.converged
    }

    /// Sum over nodes of the delay to their cluster center, in microseconds.
    pub fn objective(&self, d: &DelayMatrix) -> u64 {
        objective(&self.clusters, &self.centers, d)
    }

    /// One line per cluster: `k: n1 n2 ...; center=c`.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, (members, center)) in self.clusters.iter().zip(&self.centers).enumerate() {
            let ids: Vec<String> = members.iter().map(ToString::to_string).collect();
            let _ = writeln!(out, "{k}: {}; center={center}", ids.join(" "));
        }
        out
    }
}

fn objective(clusters: &[Vec<NodeId>], centers: &[NodeId], d: &DelayMatrix) -> u64 {
    clusters
        .iter()
        .zip(centers)
        .map(|(c, &ctr)| c.iter().map(|&n| d.get(n, ctr).as_micros()).sum::<u64>())
        .sum()
}

/// Member minimizing the summed delay to all other members; ties go to the
/// smallest id.
pub fn center_node(cluster: &[NodeId], d: &DelayMatrix) -> Result<NodeId, ClusterError> {
    cluster
        .iter()
        .map(|&c| (cluster.iter().map(|&m| d.get(c, m).as_micros()).sum::<u64>(), c))
        .min()
        .map(|(_, c)| c)
        .ok_or(ClusterError::EmptyCluster)
}

/// Sorts and validates a node list against the matrix.
fn check_nodes(nodes: &mut [NodeId], d: &DelayMatrix) -> Result<(), ClusterError> {
    nodes.sort_unstable();
    for w in nodes.windows(2) {
        if w[0] == w[1] {
            return Err(ClusterError::DuplicateNode(w[0]));
        }
    }
    if let Some(&n) = nodes.iter().find(|&&n| n >= d.len()) {
        return Err(ClusterError::NodeOutOfRange { node: n, size: d.len() });
    }
    Ok(())
}

/// Trains a fresh model on every shard for `rounds` epochs and records its
/// accuracy on `probe`. All nodes use `cfg.seed`, so equal shards give equal
/// accuracies.
pub fn pretrain_profile(
    partition: &NodePartition,
    ds: &LabeledDataset,
    probe: &LabeledDataset,
    rounds: usize,
    cfg: &TrainConfig,
) -> Result<AccuracyProfile, ClusterError> {
    let cfg = TrainConfig { local_epochs: rounds, ..*cfg };
    let acc = (0..partition.node_count())
        .into_par_iter()
        .map(|node| {
            let start = init_model(ds.feature_count(), ds.class_count(), cfg.seed);
            let m = if rounds == 0 { start } else { sgd_train(&start, ds, partition.shard(node), &cfg)? };
            Ok(evaluate(&m, probe)?.accuracy)
        })
        .collect::<Result<Vec<f64>, ModelError>>()?;
    AccuracyProfile::new(acc, rounds)
}

/// Acceptance test applied to a tentative cluster.
struct AccuracyGate<'a> {
    profile: &'a AccuracyProfile,
    delta: f64,
}

impl AccuracyGate<'_> {
    fn accepts(&self, members: &[NodeId], extra: NodeId) -> bool {
        let sum: f64 = members.iter().map(|&n| self.profile.acc(n)).sum::<f64>() + self.profile.acc(extra);
        let acc_k = sum / (members.len() + 1) as f64;
        (acc_k - self.profile.acc_avg()).abs() < self.delta
    }
}

/// Cluster indices ordered by (delay from `node` to the center, center id).
fn centers_by_delay(node: NodeId, centers: &[NodeId], d: &DelayMatrix) -> Vec<usize> {
    let mut order: Vec<usize> = (0..centers.len()).collect();
    order.sort_by_key(|&k| (d.get(node, centers[k]), centers[k]));
    order
}

/// Cluster a node would join given the current clusters (with the node
/// already removed from its own).
fn choose_cluster(
    node: NodeId,
    clusters: &[Vec<NodeId>],
    centers: &[NodeId],
    d: &DelayMatrix,
    gate: Option<&AccuracyGate>,
) -> usize {
    let order = centers_by_delay(node, centers, d);
    if let Some(gate) = gate {
        let half = centers.len().div_ceil(2);
        if let Some(&k) = order[..half].iter().find(|&&k| gate.accepts(&clusters[k], node)) {
            return k;
        }
    }
    order[0]
}

/// Online medoid sweeps shared by K-Means and KMA.
///
/// Initial centers are `k` seeded random nodes. Each sweep visits the nodes in
/// ascending id; a node that is currently a center stays put, every other node
/// is taken out of its cluster and placed by [`choose_cluster`], after which
/// the centers of the touched clusters are recomputed. Sweeps stop once one
/// moves nothing, or after `max_iters`. Returns the objective after each sweep.
fn sweep_cluster(
    nodes: &[NodeId],
    k: usize,
    d: &DelayMatrix,
    seed: u64,
    max_iters: usize,
    gate: Option<&AccuracyGate>,
) -> Result<(ClusterSet, Vec<u64>), ClusterError> {
    let mut nodes = nodes.to_vec();
    check_nodes(&mut nodes, d)?;
    if k == 0 || k > nodes.len() {
        return Err(ClusterError::InfeasibleK { k, nodes: nodes.len() });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centers: Vec<NodeId> = index::sample(&mut rng, nodes.len(), k).into_iter().map(|i| nodes[i]).collect();
    centers.sort_unstable();
    let mut clusters: Vec<Vec<NodeId>> = centers.iter().map(|&c| vec![c]).collect();
    let mut home: BTreeMap<NodeId, usize> = centers.iter().enumerate().map(|(i, &c)| (c, i)).collect();

    let mut history = Vec::new();
    let mut iterations = 0;
    let mut converged = false;
    while iterations < max_iters.max(1) {
        iterations += 1;
        let mut moved = false;
        for &node in &nodes {
            if centers.contains(&node) {
                continue;
            }
            let old = home.get(&node).copied();
            if let Some(o) = old {
                clusters[o].retain(|&m| m != node);
            }
            let new = choose_cluster(node, &clusters, &centers, d, gate);
            let pos = clusters[new].binary_search(&node).unwrap_err();
            clusters[new].insert(pos, node);
            home.insert(node, new);
            if old != Some(new) {
                moved = true;
                for c in old.into_iter().chain([new]) {
                    centers[c] = center_node(&clusters[c], d)?;
                }
            }
        }
        history.push(objective(&clusters, &centers, d));
        if !moved {
            converged = true;
            break;
        }
    }
    Ok((ClusterSet { clusters, centers, iterations, converged }, history))
}

/// Delay-only medoid clustering.
pub fn kmeans_cluster(nodes: &[NodeId], k: usize, d: &DelayMatrix, seed: u64) -> Result<ClusterSet, ClusterError> {
    Ok(sweep_cluster(nodes, k, d, seed, DEFAULT_MAX_ITERS, None)?.0)
}

/// [`kmeans_cluster`] plus the within-cluster delay objective after each sweep.
pub fn kmeans_cluster_traced(
    nodes: &[NodeId],
    k: usize,
    d: &DelayMatrix,
    seed: u64,
    max_iters: usize,
) -> Result<(ClusterSet, Vec<u64>), ClusterError> {
    sweep_cluster(nodes, k, d, seed, max_iters, None)
}

/// Medoid clustering where a node joins the first of its ⌈K/2⌉ nearest
/// clusters whose mean pre-trained accuracy (with the node added) stays
/// within `delta` of the global mean, and otherwise its nearest cluster.
pub fn kma_cluster(
    nodes: &[NodeId],
    k: usize,
    d: &DelayMatrix,
    profile: &AccuracyProfile,
    cfg: &KmaConfig,
) -> Result<ClusterSet, ClusterError> {
    cfg.validate()?;
    profile.covers(nodes)?;
    let gate = AccuracyGate { profile, delta: cfg.delta };
    Ok(sweep_cluster(nodes, k, d, cfg.seed, cfg.max_iters, Some(&gate))?.0)
}

/// Where [`kma_cluster`]'s placement rule would put `node` if it were taken
/// out of `set` and re-placed; used to check that a result is a fixed point.
pub fn kma_preferred_cluster(
    set: &ClusterSet,
    node: NodeId,
    d: &DelayMatrix,
    profile: &AccuracyProfile,
    delta: f64,
) -> usize {
    let mut clusters = set.clusters.clone();
    for c in &mut clusters {
        c.retain(|&m| m != node);
    }
    let gate = AccuracyGate { profile, delta };
    choose_cluster(node, &clusters, &set.centers, d, Some(&gate))
}

/// Sorts nodes by pre-trained accuracy (ties by id) and cuts the order into
/// `k` contiguous blocks; the first `n mod k` blocks get one extra node.
pub fn ununiform_kma_cluster(
    nodes: &[NodeId],
    k: usize,
    d: &DelayMatrix,
    profile: &AccuracyProfile,
) -> Result<ClusterSet, ClusterError> {
    let mut nodes = nodes.to_vec();
    check_nodes(&mut nodes, d)?;
    profile.covers(&nodes)?;
    if k == 0 || k > nodes.len() {
        return Err(ClusterError::InfeasibleK { k, nodes: nodes.len() });
    }
    nodes.sort_by(|&a, &b| profile.acc(a).total_cmp(&profile.acc(b)).then(a.cmp(&b)));
    let base = nodes.len() / k;
    let extra = nodes.len() % k;
    let mut clusters = Vec::with_capacity(k);
    let mut start = 0;
    for i in 0..k {
        let take = base + usize::from(i < extra);
        clusters.push(nodes[start..start + take].to_vec());
        start += take;
    }
    ClusterSet::from_clusters(clusters, d)
}
