use std::collections::{BTreeMap, BTreeSet};

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Delay, NodeId, TopologyError, TopologyGraph};

/// Link delays drawn uniformly with the given mean and standard deviation.
///
/// The support is `mean ± std·√3`; draws below 1 ms are clamped to 1 ms.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DelayDistribution {
    pub mean_ms: f64,
    pub std_ms: f64,
}

impl DelayDistribution {
    pub const MIN_MS: f64 = 1.0;

    pub fn new(mean_ms: f64, std_ms: f64) -> Result<Self, TopologyError> {
        let d = DelayDistribution { mean_ms, std_ms };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<(), TopologyError> {
        if !self.mean_ms.is_finite() || !self.std_ms.is_finite() || self.mean_ms < 0.0 || self.std_ms < 0.0 {
            return Err(TopologyError::InvalidDistribution { mean: self.mean_ms, std: self.std_ms });
        }
        Ok(())
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Delay {
        let half_width = self.std_ms * 3f64.sqrt();
        let ms = if half_width > 0.0 {
            rng.gen_range(self.mean_ms - half_width..self.mean_ms + half_width)
        } else {
            self.mean_ms
        };
        Delay::from_ms(ms.max(Self::MIN_MS)).expect("clamped delay is finite and positive")
    }
}

/// Random connected graph with exactly `links` undirected links.
///
/// A random spanning tree is laid first, then the remaining links are drawn
/// uniformly without replacement from the absent pairs.
pub fn generate_random_topology(
    nodes: usize,
    links: usize,
    delays: DelayDistribution,
    seed: u64,
) -> Result<TopologyGraph, TopologyError> {
    delays.validate()?;
    if nodes < 2 {
        return Err(TopologyError::TooFewNodes(nodes));
    }
    let min = nodes - 1;
    let max = nodes * (nodes - 1) / 2;
    if links < min {
        return Err(TopologyError::TooFewLinks { nodes, links, min });
    }
    if links > max {
        return Err(TopologyError::TooManyLinks { nodes, links, max });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let order = index::sample(&mut rng, nodes, nodes).into_vec();
    let mut pairs: Vec<(NodeId, NodeId)> = Vec::with_capacity(links);
    let mut present = BTreeSet::new();
    for i in 1..nodes {
        let parent = order[rng.gen_range(0..i)];
        let child = order[i];
        let key = (parent.min(child), parent.max(child));
        present.insert(key);
        pairs.push(key);
    }

    let extra = links - min;
    if extra > 0 {
        let absent: Vec<(NodeId, NodeId)> = (0..nodes)
            .flat_map(|a| (a + 1..nodes).map(move |b| (a, b)))
            .filter(|p| !present.contains(p))
            .collect();
        for i in index::sample(&mut rng, absent.len(), extra) {
            pairs.push(absent[i]);
        }
    }

    let with_delays: Vec<_> = pairs
        .into_iter()
        .map(|(a, b)| (a, b, delays.sample(&mut rng)))
        .collect();
    TopologyGraph::from_delays(nodes, with_delays)
}

/// Graph where, for every class, one randomly chosen owner is linked to all
/// other owners of that class.
///
/// `node_classes[i]` lists the class labels held by node `i`. Links produced
/// by several classes are merged keeping the smaller delay.
pub fn generate_class_centered_topology(
    node_classes: &[BTreeSet<usize>],
    delays: DelayDistribution,
    seed: u64,
) -> Result<TopologyGraph, TopologyError> {
    delays.validate()?;
    let nodes = node_classes.len();
    if nodes < 2 {
        return Err(TopologyError::TooFewNodes(nodes));
    }
    let mut owners: BTreeMap<usize, Vec<NodeId>> = BTreeMap::new();
    for (node, classes) in node_classes.iter().enumerate() {
        for &c in classes {
            owners.entry(c).or_default().push(node);
        }
    }
    if let Some(max_class) = owners.keys().next_back() {
        if let Some(orphan) = (0..*max_class).find(|c| !owners.contains_key(c)) {
            return Err(TopologyError::OrphanClass(orphan));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut links: BTreeMap<(NodeId, NodeId), Delay> = BTreeMap::new();
    for members in owners.values() {
        let hub = members[rng.gen_range(0..members.len())];
        for &other in members.iter().filter(|&&m| m != hub) {
            let delay = delays.sample(&mut rng);
            let key = (hub.min(other), hub.max(other));
            links
                .entry(key)
                .and_modify(|d| *d = (*d).min(delay))
                .or_insert(delay);
        }
    }
    let graph = TopologyGraph::from_delays(nodes, links.into_iter().map(|((a, b), d)| (a, b, d)))?;
    match graph.first_unreachable() {
        Some(to) => Err(TopologyError::Unreachable { from: 0, to }),
        None => Ok(graph),
    }
}

/// Fully connected graph with one delay on every link.
pub fn complete_topology(nodes: usize, delay_ms: f64) -> Result<TopologyGraph, TopologyError> {
    if nodes < 2 {
        return Err(TopologyError::TooFewNodes(nodes));
    }
    let delay = Delay::from_ms(delay_ms)?;
    TopologyGraph::from_delays(
        nodes,
        (0..nodes).flat_map(|a| (a + 1..nodes).map(move |b| (a, b, delay))),
    )
}
