use std::cmp::Reverse;
use std::collections::BinaryHeap;

use super::{Delay, NodeId, TopologyError, TopologyGraph};

/// Symmetric N×N matrix of minimum path delays.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DelayMatrix {
    n: usize,
    d: Vec<Delay>,
}

impl DelayMatrix {
    /// Builds a matrix from millisecond rows, checking that it is square,
    /// symmetric, zero on the diagonal and satisfies the triangle inequality.
    pub fn from_ms_rows(rows: &[Vec<f64>]) -> Result<Self, TopologyError> {
        let n = rows.len();
        let mut d = Vec::with_capacity(n * n);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(TopologyError::BadMatrix(format!("row {i} has {} entries, expected {n}", row.len())));
            }
            for &ms in row {
                d.push(Delay::from_ms(ms)?);
            }
        }
        let m = DelayMatrix { n, d };
        for i in 0..n {
            if m.get(i, i) != Delay::ZERO {
                return Err(TopologyError::BadMatrix(format!("d[{i}][{i}] is not zero")));
            }
            for j in 0..n {
                if m.get(i, j) != m.get(j, i) {
                    return Err(TopologyError::BadMatrix(format!("d[{i}][{j}] != d[{j}][{i}]")));
                }
                for k in 0..n {
                    if m.get(i, j) > m.get(i, k) + m.get(k, j) {
                        return Err(TopologyError::BadMatrix(format!(
                            "triangle inequality fails for ({i}, {j}) via {k}"
                        )));
                    }
                }
            }
        }
        Ok(m)
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn get(&self, i: NodeId, j: NodeId) -> Delay {
        self.d[i * self.n + j]
    }

    pub fn ms(&self, i: NodeId, j: NodeId) -> f64 {
        self.get(i, j).as_ms()
    }

    pub fn row(&self, i: NodeId) -> &[Delay] {
        &self.d[i * self.n..(i + 1) * self.n]
    }
}

/// A minimum-delay route between two devices.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Route {
    pub nodes: Vec<NodeId>,
    pub delay: Delay,
}

impl Route {
    pub fn hops(&self) -> usize {
        self.nodes.len() - 1
    }
}

/// Single-source search ordered by `(delay, hops)`.
struct Search {
    delay: Vec<Option<Delay>>,
    hops: Vec<u32>,
}

fn search(g: &TopologyGraph, src: NodeId) -> Search {
    let n = g.node_count();
    let mut delay: Vec<Option<Delay>> = vec![None; n];
    let mut hops = vec![u32::MAX; n];
    let mut done = vec![false; n];
    let mut heap = BinaryHeap::new();
    delay[src] = Some(Delay::ZERO);
    hops[src] = 0;
    heap.push(Reverse((Delay::ZERO, 0u32, src)));
    while let Some(Reverse((du, hu, u))) = heap.pop() {
        if done[u] {
            continue;
        }
        done[u] = true;
        for &(v, w) in g.neighbors(u) {
            let cand = (du + w, hu + 1);
            let better = match delay[v] {
                None => true,
                Some(dv) => cand < (dv, hops[v]),
            };
            if better && !done[v] {
                delay[v] = Some(cand.0);
                hops[v] = cand.1;
                heap.push(Reverse((cand.0, cand.1, v)));
            }
        }
    }
    Search { delay, hops }
}

/// Minimum delays between all pairs, one Dijkstra run per source.
pub fn all_pairs_min_delay(g: &TopologyGraph) -> Result<DelayMatrix, TopologyError> {
    Ok(Routes::compute(g)?.delays)
}

/// All-pairs minimum delays together with the hop count of the chosen
/// route (fewest hops among the minimum-delay routes).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Routes {
    delays: DelayMatrix,
    hops: Vec<u32>,
}

impl Routes {
    pub fn compute(g: &TopologyGraph) -> Result<Self, TopologyError> {
        let n = g.node_count();
        let mut d = Vec::with_capacity(n * n);
        let mut hops = Vec::with_capacity(n * n);
        for src in 0..n {
            let s = search(g, src);
            for (dst, delay) in s.delay.iter().enumerate() {
                match delay {
                    Some(delay) => d.push(*delay),
                    None => return Err(TopologyError::Unreachable { from: src, to: dst }),
                }
            }
            hops.extend_from_slice(&s.hops);
        }
        Ok(Routes { delays: DelayMatrix { n, d }, hops })
    }

    pub fn delays(&self) -> &DelayMatrix {
        &self.delays
    }

    pub fn delay(&self, i: NodeId, j: NodeId) -> Delay {
        self.delays.get(i, j)
    }

    pub fn hops(&self, i: NodeId, j: NodeId) -> u32 {
        self.hops[i * self.delays.n + j]
    }
}

/// Minimum-delay route from `src` to `dst`.
///
/// Among equal-delay routes the one with fewest hops wins, then the
/// lexicographically smallest node sequence.
pub fn shortest_path(g: &TopologyGraph, src: NodeId, dst: NodeId) -> Result<Route, TopologyError> {
    let n = g.node_count();
    for node in [src, dst] {
        if node >= n {
            return Err(TopologyError::NodeOutOfRange { node, nodes: n });
        }
    }
    let s = search(g, src);
    let Some(total) = s.delay[dst] else {
        return Err(TopologyError::Unreachable { from: src, to: dst });
    };
    let tight = |u: NodeId, v: NodeId, w: Delay| match (s.delay[u], s.delay[v]) {
        (Some(du), Some(dv)) => du + w == dv && s.hops[u] + 1 == s.hops[v],
        _ => false,
    };

    // nodes from which dst is reachable along tight links
    let mut reaches = vec![false; n];
    reaches[dst] = true;
    let mut stack = vec![dst];
    while let Some(v) = stack.pop() {
        for &(u, w) in g.neighbors(v) {
            if !reaches[u] && tight(u, v, w) {
                reaches[u] = true;
                stack.push(u);
            }
        }
    }

    let mut nodes = vec![src];
    let mut u = src;
    while u != dst {
        u = g
            .neighbors(u)
            .iter()
            .find(|&&(v, w)| reaches[v] && tight(u, v, w))
            .map(|&(v, _)| v)
            .expect("tight successor exists on a reachable node");
        nodes.push(u);
    }
    Ok(Route { nodes, delay: total })
}
