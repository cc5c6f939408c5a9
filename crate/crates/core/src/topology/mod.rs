//! Physical edge network: devices, links and transmission delays.
//!
//! Link delays are stored as whole microseconds ([`Delay`]) so that path
//! sums are exact and associative. Minimum-delay comparisons, medoid ties and
//! event ordering in the simulator therefore never depend on floating point
//! rounding.

mod generate;
mod io;
mod paths;

use std::collections::BTreeSet;
use std::fmt;
use std::ops::{Add, AddAssign};

use thiserror::Error;

pub use generate::{
    complete_topology, generate_class_centered_topology, generate_random_topology,
    DelayDistribution,
};
pub use io::{parse_edge_list, read_edge_list, write_edge_list};
pub use paths::{all_pairs_min_delay, shortest_path, DelayMatrix, Route, Routes};

/// Device identifier, `0..N`.
pub type NodeId = usize;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TopologyError {
    #[error("a topology needs at least 2 nodes, got {0}")]
    TooFewNodes(usize),
    #[error("{links} links cannot connect {nodes} nodes (need at least {min})")]
    TooFewLinks { nodes: usize, links: usize, min: usize },
    #[error("{links} links exceed the {max} possible between {nodes} nodes")]
    TooManyLinks { nodes: usize, links: usize, max: usize },
    #[error("node {node} out of range for a graph of {nodes} nodes")]
    NodeOutOfRange { node: NodeId, nodes: usize },
    #[error("self-loop on node {0}")]
    SelfLoop(NodeId),
    #[error("duplicate link {0}-{1}")]
    DuplicateLink(NodeId, NodeId),
    #[error("invalid delay {0} ms (must be finite and non-negative)")]
    InvalidDelay(f64),
    #[error("invalid delay distribution: mean {mean} ms, std {std} ms")]
    InvalidDistribution { mean: f64, std: f64 },
    #[error("graph is disconnected: node {to} is unreachable from node {from}")]
    Unreachable { from: NodeId, to: NodeId },
    #[error("class {0} has no owning node")]
    OrphanClass(usize),
    #[error("delay matrix is malformed: {0}")]
    BadMatrix(String),
    #[error("edge list parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for TopologyError {
    fn from(e: std::io::Error) -> Self {
        TopologyError::Io(e.to_string())
    }
}

/// Transmission delay in whole microseconds.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Delay(u64);

impl Delay {
    pub const ZERO: Delay = Delay(0);

    pub const fn from_micros(us: u64) -> Self {
        Delay(us)
    }

    /// Rounds to the nearest microsecond.
    pub fn from_ms(ms: f64) -> Result<Self, TopologyError> {
        if !ms.is_finite() || ms < 0.0 {
            return Err(TopologyError::InvalidDelay(ms));
        }
        Ok(Delay((ms * 1000.0).round() as u64))
    }

    pub const fn as_micros(self) -> u64 {
        self.0
    }

    pub fn as_ms(self) -> f64 {
        self.0 as f64 / 1000.0
    }
}

impl Add for Delay {
    type Output = Delay;
    fn add(self, rhs: Delay) -> Delay {
        Delay(self.0 + rhs.0)
    }
}

impl AddAssign for Delay {
    fn add_assign(&mut self, rhs: Delay) {
        self.0 += rhs.0;
    }
}

impl fmt::Display for Delay {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{:03}", self.0 / 1000, self.0 % 1000)
    }
}

/// Undirected link, stored with `a < b`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Edge {
    pub a: NodeId,
    pub b: NodeId,
    pub delay: Delay,
}

/// Undirected weighted graph of edge devices.
///
/// Self-loops and duplicate links are rejected at construction. Connectivity
/// is not enforced here (the generators guarantee it); use
/// [`TopologyGraph::is_connected`] or [`all_pairs_min_delay`] to check.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TopologyGraph {
    node_count: usize,
    edges: Vec<Edge>,
    adjacency: Vec<Vec<(NodeId, Delay)>>,
}

impl TopologyGraph {
    /// Builds a graph from `(u, v, delay_ms)` triples.
    pub fn new(node_count: usize, links: &[(NodeId, NodeId, f64)]) -> Result<Self, TopologyError> {
        let edges = links
            .iter()
            .map(|&(u, v, ms)| Ok((u, v, Delay::from_ms(ms)?)))
            .collect::<Result<Vec<_>, TopologyError>>()?;
        Self::from_delays(node_count, edges)
    }

    pub fn from_delays(
        node_count: usize,
        links: impl IntoIterator<Item = (NodeId, NodeId, Delay)>,
    ) -> Result<Self, TopologyError> {
        let mut seen = BTreeSet::new();
        let mut edges = Vec::new();
        for (u, v, delay) in links {
            for node in [u, v] {
                if node >= node_count {
                    return Err(TopologyError::NodeOutOfRange { node, nodes: node_count });
                }
            }
            if u == v {
                return Err(TopologyError::SelfLoop(u));
            }
            let (a, b) = (u.min(v), u.max(v));
            if !seen.insert((a, b)) {
                return Err(TopologyError::DuplicateLink(a, b));
            }
            edges.push(Edge { a, b, delay });
        }
        edges.sort_by_key(|e| (e.a, e.b));
        let mut adjacency = vec![Vec::new(); node_count];
        for e in &edges {
            adjacency[e.a].push((e.b, e.delay));
            adjacency[e.b].push((e.a, e.delay));
        }
        for list in &mut adjacency {
            list.sort_unstable();
        }
        Ok(TopologyGraph { node_count, edges, adjacency })
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Links sorted by `(a, b)`.
    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    /// Neighbors of `node` with the link delay, sorted by neighbor id.
    pub fn neighbors(&self, node: NodeId) -> &[(NodeId, Delay)] {
        &self.adjacency[node]
    }

    pub fn link_delay(&self, u: NodeId, v: NodeId) -> Option<Delay> {
        self.adjacency
            .get(u)?
            .binary_search_by_key(&v, |&(n, _)| n)
            .ok()
            .map(|i| self.adjacency[u][i].1)
    }

    pub fn is_connected(&self) -> bool {
        self.first_unreachable().is_none()
    }

    /// First node (by id) not reachable from node 0.
    pub(crate) fn first_unreachable(&self) -> Option<NodeId> {
        if self.node_count == 0 {
            return None;
        }
        let mut seen = vec![false; self.node_count];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(u) = stack.pop() {
            for &(v, _) in &self.adjacency[u] {
                if !seen[v] {
                    seen[v] = true;
                    stack.push(v);
                }
            }
        }
        seen.iter().position(|&s| !s)
    }
}
