use std::collections::BTreeSet;

use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{DatasetError, LabeledDataset};

/// Per-device training shards: `shards[i]` holds indices into the dataset.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NodePartition {
    shards: Vec<Vec<usize>>,
}

impl NodePartition {
    /// Wraps shards after checking they are non-empty, disjoint and cover
    /// every sample of `ds`.
    pub fn new(shards: Vec<Vec<usize>>, ds: &LabeledDataset) -> Result<Self, DatasetError> {
        let p = NodePartition { shards };
        p.validate(ds)?;
        Ok(p)
    }

    pub fn validate(&self, ds: &LabeledDataset) -> Result<(), DatasetError> {
        let mut seen = vec![false; ds.len()];
        let mut covered = 0;
        for (node, shard) in self.shards.iter().enumerate() {
            if shard.is_empty() {
                return Err(DatasetError::EmptyShard(node));
            }
            for &i in shard {
                if i >= ds.len() {
                    return Err(DatasetError::IndexOutOfRange { index: i, samples: ds.len() });
                }
                if std::mem::replace(&mut seen[i], true) {
                    return Err(DatasetError::Overlap(i));
                }
                covered += 1;
            }
        }
        if covered != ds.len() {
            return Err(DatasetError::Incomplete { covered, samples: ds.len() });
        }
        Ok(())
    }

    pub fn node_count(&self) -> usize {
        self.shards.len()
    }

    pub fn shard(&self, node: usize) -> &[usize] {
        &self.shards[node]
    }

    pub fn shards(&self) -> &[Vec<usize>] {
        &self.shards
    }

    /// Distinct labels held by each node.
    pub fn label_sets(&self, ds: &LabeledDataset) -> Vec<BTreeSet<usize>> {
        self.shards.iter().map(|s| ds.label_set(s)).collect()
    }
}

fn check_nodes(ds: &LabeledDataset, nodes: usize) -> Result<(), DatasetError> {
    if nodes == 0 || nodes > ds.len() {
        return Err(DatasetError::TooManyNodes { nodes, samples: ds.len() });
    }
    Ok(())
}

fn class_members(ds: &LabeledDataset) -> Vec<Vec<usize>> {
    let mut members = vec![Vec::new(); ds.class_count()];
    for (i, &l) in ds.labels().iter().enumerate() {
        members[l].push(i);
    }
    members
}

/// Shuffles each class and deals its samples round-robin over the nodes.
///
/// The dealing position carries over from one class to the next, so shard
/// sizes differ by at most one.
pub fn partition_iid(ds: &LabeledDataset, nodes: usize, seed: u64) -> Result<NodePartition, DatasetError> {
    check_nodes(ds, nodes)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut shards = vec![Vec::new(); nodes];
    let mut next = 0;
    for mut members in class_members(ds) {
        members.shuffle(&mut rng);
        for i in members {
            shards[next].push(i);
            next = (next + 1) % nodes;
        }
    }
    NodePartition::new(shards, ds)
}

/// Gives every node `classes_per_node` random distinct classes and splits
/// each class evenly among the nodes holding it.
///
/// Assignments are redrawn until every class has at least one holder.
pub fn partition_noniid_classes_per_node(
    ds: &LabeledDataset,
    nodes: usize,
    classes_per_node: usize,
    seed: u64,
) -> Result<NodePartition, DatasetError> {
    const MAX_DRAWS: usize = 10_000;
    let classes = ds.class_count();
    if classes_per_node == 0 || classes_per_node > classes {
        return Err(DatasetError::ClassesPerNode { got: classes_per_node, classes });
    }
    check_nodes(ds, nodes)?;
    if nodes * classes_per_node < classes {
        return Err(DatasetError::Coverage { nodes, per_node: classes_per_node });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let holders = (0..MAX_DRAWS)
        .find_map(|_| {
            let mut holders: Vec<Vec<usize>> = vec![Vec::new(); classes];
            for node in 0..nodes {
                for c in index::sample(&mut rng, classes, classes_per_node) {
                    holders[c].push(node);
                }
            }
            holders.iter().all(|h| !h.is_empty()).then_some(holders)
        })
        .ok_or(DatasetError::Coverage { nodes, per_node: classes_per_node })?;

    let mut shards = vec![Vec::new(); nodes];
    for (mut members, owners) in class_members(ds).into_iter().zip(holders) {
        members.shuffle(&mut rng);
        let base = members.len() / owners.len();
        let extra = members.len() % owners.len();
        let mut start = 0;
        for (k, &node) in owners.iter().enumerate() {
            let take = base + usize::from(k < extra);
            shards[node].extend_from_slice(&members[start..start + take]);
            start += take;
        }
    }
    for shard in &mut shards {
        shard.sort_unstable();
    }
    NodePartition::new(shards, ds)
}

/// Sorts samples by `(label, index)` and cuts the sequence into contiguous
/// blocks; the first `S mod n` nodes get one extra sample.
pub fn partition_noniid_sorted(ds: &LabeledDataset, nodes: usize) -> Result<NodePartition, DatasetError> {
    check_nodes(ds, nodes)?;
    let mut order: Vec<usize> = (0..ds.len()).collect();
    order.sort_by_key(|&i| (ds.label(i), i));
    let base = ds.len() / nodes;
    let extra = ds.len() % nodes;
    let mut shards = Vec::with_capacity(nodes);
    let mut start = 0;
    for node in 0..nodes {
        let take = base + usize::from(node < extra);
        shards.push(order[start..start + take].to_vec());
        start += take;
    }
    NodePartition::new(shards, ds)
}
