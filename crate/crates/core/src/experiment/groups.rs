//! Hand-built leaf groups on a fully connected network, for measuring how the
//! number of classes inside a group affects the tree protocol.

use std::collections::{BTreeMap, BTreeSet};

use super::{DataSplits, ExperimentError};
use crate::clustering::ClusterSet;
use crate::dataset::NodePartition;
use crate::sim::{run_etree, MetricsLog, SimConfig, SimInputs};
use crate::topology::{complete_topology, NodeId, Routes};
use crate::tree::build_etree_from_clusters;

/// Cuts `order` into `k` contiguous blocks, the first `len mod k` one longer.
pub fn contiguous_groups(order: &[NodeId], k: usize) -> Vec<Vec<NodeId>> {
    let (base, extra) = (order.len() / k, order.len() % k);
    let mut out = Vec::with_capacity(k);
    let mut start = 0;
    for g in 0..k {
        let len = base + usize::from(g < extra);
        out.push(order[start..start + len].to_vec());
        start += len;
    }
    out
}

/// Deals `order` out to `k` groups in turn.
pub fn round_robin_groups(order: &[NodeId], k: usize) -> Vec<Vec<NodeId>> {
    let mut out = vec![Vec::new(); k];
    for (i, &n) in order.iter().enumerate() {
        out[i % k].push(n);
    }
    out
}

/// Groups devices by their lowest label, then merges the smallest adjacent
/// pair or halves the largest group until there are `k` groups. With sorted
/// shards this keeps each group to one or two classes.
pub fn class_aligned_groups(labels: &[BTreeSet<usize>], k: usize) -> Vec<Vec<NodeId>> {
    let mut buckets: BTreeMap<usize, Vec<NodeId>> = BTreeMap::new();
    for (n, set) in labels.iter().enumerate() {
        buckets.entry(set.first().copied().unwrap_or(0)).or_default().push(n);
    }
    let mut groups: Vec<Vec<NodeId>> = buckets.into_values().collect();
    while groups.len() > k {
        let i = (0..groups.len() - 1).min_by_key(|&i| groups[i].len() + groups[i + 1].len()).expect("two groups");
        let next = groups.remove(i + 1);
        groups[i].extend(next);
    }
    while groups.len() < k {
        let i = (0..groups.len()).max_by_key(|&i| (groups[i].len(), std::cmp::Reverse(i))).expect("one group");
        if groups[i].len() < 2 {
            break;
        }
        let half = groups[i].len() / 2;
        let tail = groups[i].split_off(half);
        groups.insert(i + 1, tail);
    }
    groups
}

#[derive(Clone, Debug)]
pub struct GroupRun {
    pub groups: Vec<Vec<NodeId>>,
    /// Distinct labels held by the members of each group.
    pub classes_per_group: Vec<usize>,
    pub log: MetricsLog,
}

impl GroupRun {
    pub fn mean_classes(&self) -> f64 {
        self.classes_per_group.iter().sum::<usize>() as f64 / self.classes_per_group.len() as f64
    }

    pub fn max_classes(&self) -> usize {
        self.classes_per_group.iter().copied().max().unwrap_or(0)
    }

    pub fn min_classes(&self) -> usize {
        self.classes_per_group.iter().copied().min().unwrap_or(0)
    }
}

/// Runs the tree protocol with `groups` as the leaf clusters on a complete
/// network where every link has `delay_ms`.
pub fn class_group_run(
    data: &DataSplits,
    partition: &NodePartition,
    groups: Vec<Vec<NodeId>>,
    delay_ms: f64,
    frequency: u32,
    sim: &SimConfig,
) -> Result<GroupRun, ExperimentError> {
    let n = partition.node_count();
    let graph = complete_topology(n, delay_ms)?;
    let routes = Routes::compute(&graph)?;
    let labels = partition.label_sets(&data.train);
    let classes_per_group = groups
        .iter()
        .map(|g| g.iter().flat_map(|&m| labels[m].iter().copied()).collect::<BTreeSet<_>>().len())
        .collect();
    let set = ClusterSet::from_clusters(groups.clone(), routes.delays())?;
    let tree = build_etree_from_clusters(routes.delays(), set, &[], &[frequency], sim.seed)?;
    let inputs = SimInputs {
        graph: &graph,
        routes: &routes,
        train: &data.train,
        test: &data.test,
        partition,
        tree: Some(&tree),
    };
    let log = run_etree(&inputs, sim).map_err(|source| ExperimentError::Sim {
        variant: "class-groups".into(),
        seed: sim.seed,
        source,
    })?;
    Ok(GroupRun { groups, classes_per_group, log })
}
