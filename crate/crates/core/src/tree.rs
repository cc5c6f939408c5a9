//! Layered aggregation trees built bottom-up from delay clustering, plus
//! public-node overlap between the first-level groups.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clustering::{
    center_node, kma_cluster, kmeans_cluster, ununiform_kma_cluster, AccuracyProfile, ClusterError, ClusterSet,
    KmaConfig,
};
use crate::topology::{DelayMatrix, NodeId};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TreeError {
    #[error("empty layer_ks")]
    NoLayers,
    #[error("layer {layer}: K = {k} must be between 1 and {available}")]
    InfeasibleK { layer: usize, k: usize, available: usize },
    #[error("{expected} aggregation frequencies needed (one per intermediate layer), got {got}")]
    FrequencyCount { expected: usize, got: usize },
    #[error("aggregation frequency must be >= 1")]
    ZeroFrequency,
    #[error("gamma must lie in (0, 1), got {0}")]
    InvalidGamma(f64),
    #[error("delta must be > 0, got {0}")]
    InvalidDelta(f64),
    #[error("node {0} is not a leaf of the tree")]
    UnknownLeaf(NodeId),
    #[error(transparent)]
    Cluster(#[from] ClusterError),
}

/// How the leaf layer is grouped; upper layers always use delay-only K-Means.
#[derive(Clone, Copy, Debug)]
pub enum LeafClustering<'a> {
    KMeans,
    Kma { profile: &'a AccuracyProfile, cfg: KmaConfig },
    UnuniformKma { profile: &'a AccuracyProfile },
}

/// Candidate share and accuracy threshold for public-node selection.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PublicNodeConfig {
    pub gamma: f64,
    pub delta: f64,
}

impl PublicNodeConfig {
    pub fn validate(&self) -> Result<(), TreeError> {
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(TreeError::InvalidGamma(self.gamma));
        }
        if !(self.delta > 0.0) {
            return Err(TreeError::InvalidDelta(self.delta));
        }
        Ok(())
    }
}

/// Aggregation tree over device ids.
///
/// `layers[0]` holds every device (the leaves) and the last layer holds only
/// the root. An aggregator at layer `l` performs `frequency(l)` aggregations
/// of its children per update sent to its parent.
#[derive(Clone, Debug, PartialEq)]
pub struct ETree {
    layers: Vec<Vec<NodeId>>,
    /// `parents[l][n]`: parents at layer `l + 1` of node `n` at layer `l`.
    parents: Vec<BTreeMap<NodeId, Vec<NodeId>>>,
    frequencies: Vec<u32>,
    leaf_clusters: ClusterSet,
    public_nodes: BTreeSet<NodeId>,
}

/// Builds the tree bottom-up: the leaves are clustered into `layer_ks[0]`
/// groups whose centers form the next layer, which is clustered into
/// `layer_ks[1]` groups, and so on. If the last layer still has several
/// nodes, their summed-delay medoid becomes the root.
///
/// `frequencies` gives `a_l` for each layer strictly between leaves and root.
pub fn build_etree(
    d: &DelayMatrix,
    layer_ks: &[usize],
    leaf_clustering: LeafClustering,
    frequencies: &[u32],
    seed: u64,
) -> Result<ETree, TreeError> {
    let Some(&k1) = layer_ks.first() else {
        return Err(TreeError::NoLayers);
    };
    let leaves: Vec<NodeId> = (0..d.len()).collect();
    check_shape(leaves.len(), layer_ks, frequencies)?;
    let leaf_clusters = match leaf_clustering {
        LeafClustering::KMeans => kmeans_cluster(&leaves, k1, d, seed)?,
        LeafClustering::Kma { profile, cfg } => kma_cluster(&leaves, k1, d, profile, &cfg)?,
        LeafClustering::UnuniformKma { profile } => ununiform_kma_cluster(&leaves, k1, d, profile)?,
    };
    assemble(d, leaf_clusters, &layer_ks[1..], frequencies, seed)
}

/// Builds a tree on top of a given leaf grouping, which must cover every
/// node of `d`. `upper_ks` clusters the layers above it as in [`build_etree`].
pub fn build_etree_from_clusters(
    d: &DelayMatrix,
    leaf_clusters: ClusterSet,
    upper_ks: &[usize],
    frequencies: &[u32],
    seed: u64,
) -> Result<ETree, TreeError> {
    let covered = leaf_clusters.nodes();
    if let Some(missing) = (0..d.len()).find(|n| covered.binary_search(n).is_err()) {
        return Err(TreeError::UnknownLeaf(missing));
    }
    let layer_ks: Vec<usize> = std::iter::once(leaf_clusters.k()).chain(upper_ks.iter().copied()).collect();
    check_shape(d.len(), &layer_ks, frequencies)?;
    assemble(d, leaf_clusters, upper_ks, frequencies, seed)
}

fn check_shape(nodes: usize, layer_ks: &[usize], frequencies: &[u32]) -> Result<(), TreeError> {
    let mut available = nodes;
    for (layer, &k) in layer_ks.iter().enumerate() {
        if k == 0 || k > available {
            return Err(TreeError::InfeasibleK { layer: layer + 1, k, available });
        }
        available = k;
    }
    let intermediate = layer_ks.len() - usize::from(available == 1);
    if frequencies.len() != intermediate {
        return Err(TreeError::FrequencyCount { expected: intermediate, got: frequencies.len() });
    }
    if frequencies.contains(&0) {
        return Err(TreeError::ZeroFrequency);
    }
    Ok(())
}

fn assemble(
    d: &DelayMatrix,
    leaf_clusters: ClusterSet,
    upper_ks: &[usize],
    frequencies: &[u32],
    seed: u64,
) -> Result<ETree, TreeError> {
    let mut layers = vec![leaf_clusters.nodes()];
    let mut parents = vec![parent_map(&leaf_clusters)];
    let mut next = leaf_clusters.centers().to_vec();
    next.sort_unstable();
    layers.push(next);
    for (i, &k) in upper_ks.iter().enumerate() {
        let upper = layers.last().expect("layer present");
        let clusters = kmeans_cluster(upper, k, d, seed.wrapping_add(i as u64 + 1))?;
        parents.push(parent_map(&clusters));
        let mut next = clusters.centers().to_vec();
        next.sort_unstable();
        layers.push(next);
    }
    let top = layers.last().expect("layer present").clone();
    if top.len() > 1 {
        let root = center_node(&top, d)?;
        parents.push(top.iter().map(|&n| (n, vec![root])).collect());
        layers.push(vec![root]);
    }
    Ok(ETree {
        layers,
        parents,
        frequencies: frequencies.to_vec(),
        leaf_clusters,
        public_nodes: BTreeSet::new(),
    })
}

fn parent_map(clusters: &ClusterSet) -> BTreeMap<NodeId, Vec<NodeId>> {
    clusters
        .clusters()
        .iter()
        .zip(clusters.centers())
        .flat_map(|(members, &c)| members.iter().map(move |&n| (n, vec![c])))
        .collect()
}

impl ETree {
    /// Number of layers including leaves and root.
    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn layers(&self) -> &[Vec<NodeId>] {
        &self.layers
    }

    pub fn layer(&self, l: usize) -> &[NodeId] {
        &self.layers[l]
    }

    pub fn root(&self) -> NodeId {
        self.layers.last().expect("tree has a root")[0]
    }

    pub fn root_layer(&self) -> usize {
        self.layers.len() - 1
    }

    /// Parents of `node` at layer `l` (empty for the root).
    pub fn parents(&self, l: usize, node: NodeId) -> &[NodeId] {
        self.parents.get(l).and_then(|m| m.get(&node)).map_or(&[], Vec::as_slice)
    }

    /// Children at layer `l - 1` of aggregator `node` at layer `l`, ascending.
    pub fn children(&self, l: usize, node: NodeId) -> Vec<NodeId> {
        if l == 0 {
            return Vec::new();
        }
        self.parents[l - 1]
            .iter()
            .filter(|(_, ps)| ps.contains(&node))
            .map(|(&c, _)| c)
            .collect()
    }

    /// Aggregations per upward send for an aggregator at layer `l`; 1 for the
    /// root and for leaves.
    pub fn frequency(&self, l: usize) -> u32 {
        if l == 0 || l >= self.root_layer() {
            1
        } else {
            self.frequencies[l - 1]
        }
    }

    pub fn frequencies(&self) -> &[u32] {
        &self.frequencies
    }

    /// Clustering that produced the first aggregation layer.
    pub fn leaf_clusters(&self) -> &ClusterSet {
        &self.leaf_clusters
    }

    pub fn public_nodes(&self) -> &BTreeSet<NodeId> {
        &self.public_nodes
    }

    /// Indented text view from the root down. Public leaves appear under
    /// every parent and are tagged.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        self.write_node(&mut out, self.root_layer(), self.root(), 0);
        out
    }

    fn write_node(&self, out: &mut String, l: usize, node: NodeId, indent: usize) {
        let pad = "  ".repeat(indent);
        let _ = write!(out, "{pad}L{l} {node}");
        if l > 0 {
            let _ = write!(out, " a={}", self.frequency(l));
        } else if self.public_nodes.contains(&node) {
            out.push_str(" public");
        }
        out.push('\n');
        for c in self.children(l, node) {
            self.write_node(out, l - 1, c, indent + 1);
        }
    }
}

/// Chooses public nodes: candidates are the `⌈γN⌉` nodes with the smallest
/// mean delay to the cluster centers (ties by id). A candidate is accepted if,
/// after adding it to every cluster it is missing from, every cluster's mean
/// pre-trained accuracy is within `delta` of the global mean; accepted nodes
/// stay in those clusters for later candidates.
pub fn select_public_nodes(
    clusters: &ClusterSet,
    profile: &AccuracyProfile,
    d: &DelayMatrix,
    cfg: &PublicNodeConfig,
) -> Result<BTreeSet<NodeId>, TreeError> {
    cfg.validate()?;
    let nodes = clusters.nodes();
    if let Some(&n) = nodes.iter().find(|&&n| n >= profile.len()) {
        return Err(ClusterError::MissingProfile(n).into());
    }
    let mut ranked: Vec<(u64, NodeId)> = nodes
        .iter()
        .map(|&n| (clusters.centers().iter().map(|&c| d.get(n, c).as_micros()).sum(), n))
        .collect();
    ranked.sort_unstable();
    let take = ((cfg.gamma * nodes.len() as f64) - 1e-9).ceil().max(1.0) as usize;

    let mut members: Vec<Vec<NodeId>> = clusters.clusters().to_vec();
    let mut public = BTreeSet::new();
    for &(_, n) in ranked.iter().take(take) {
        let trial: Vec<Vec<NodeId>> = members
            .iter()
            .map(|m| {
                let mut m = m.clone();
                if !m.contains(&n) {
                    m.push(n);
                }
                m
            })
            .collect();
        if trial.iter().all(|m| (profile.mean_over(m) - profile.acc_avg()).abs() < cfg.delta) {
            members = trial;
            public.insert(n);
        }
    }
    Ok(public)
}

/// Gives each public leaf every first-level aggregator as a parent.
pub fn attach_public_nodes(tree: &ETree, publics: &BTreeSet<NodeId>) -> Result<ETree, TreeError> {
    let mut out = tree.clone();
    let all: Vec<NodeId> = tree.layers[1].clone();
    for &p in publics {
        let entry = out.parents[0].get_mut(&p).ok_or(TreeError::UnknownLeaf(p))?;
        for &a in &all {
            if !entry.contains(&a) {
                entry.push(a);
            }
        }
        entry.sort_unstable();
        out.public_nodes.insert(p);
    }
    Ok(out)
}
