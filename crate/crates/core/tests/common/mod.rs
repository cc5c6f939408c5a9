//! Independent reference computations shared by the integration tests.
#![allow(dead_code)]

use std::collections::BTreeSet;

use etree::clustering::{AccuracyProfile, ClusterSet};
use etree::dataset::LabeledDataset;
use etree::model::ModelParams;
use etree::topology::{DelayMatrix, TopologyGraph};

/// All-pairs minimum delay in microseconds by Floyd-Warshall.
pub fn floyd_warshall(g: &TopologyGraph) -> Vec<Vec<u64>> {
    let n = g.node_count();
    let mut d = vec![vec![u64::MAX; n]; n];
    for (i, row) in d.iter_mut().enumerate() {
        row[i] = 0;
    }
    for e in g.edges() {
        let w = e.delay.as_micros();
        d[e.a][e.b] = d[e.a][e.b].min(w);
        d[e.b][e.a] = d[e.b][e.a].min(w);
    }
    for k in 0..n {
        for i in 0..n {
            if d[i][k] == u64::MAX {
                continue;
            }
            for j in 0..n {
                if d[k][j] != u64::MAX && d[i][k] + d[k][j] < d[i][j] {
                    d[i][j] = d[i][k] + d[k][j];
                }
            }
        }
    }
    d
}

/// Member with the least summed delay to the others, lowest id on ties.
pub fn medoid(members: &[usize], d: &DelayMatrix) -> usize {
    let mut sorted = members.to_vec();
    sorted.sort_unstable();
    let cost = |c: usize| sorted.iter().map(|&m| d.get(c, m).as_micros()).sum::<u64>();
    let best = sorted.iter().map(|&c| cost(c)).min().expect("non-empty");
    sorted.iter().copied().find(|&c| cost(c) == best).expect("non-empty")
}

/// Mean cross-entropy written out directly from the definition.
pub fn mean_loss(m: &ModelParams, ds: &LabeledDataset, batch: &[usize]) -> f64 {
    let (c, f) = m.shape();
    let mut total = 0.0;
    for &i in batch {
        let x = ds.features(i);
        let z: Vec<f64> = (0..c)
            .map(|k| m.bias()[k] + (0..f).map(|j| m.weights()[k * f + j] * x[j]).sum::<f64>())
            .collect();
        let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + z.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        total += lse - z[ds.label(i)];
    }
    total / batch.len() as f64
}

/// Checks coverage of `nodes`, non-empty clusters and medoid centers.
pub fn check_cluster_set(set: &ClusterSet, nodes: &[usize], d: &DelayMatrix) -> Result<(), String> {
    let mut seen = BTreeSet::new();
    for (k, members) in set.clusters().iter().enumerate() {
        if members.is_empty() {
            return Err(format!("cluster {k} is empty"));
        }
        for &m in members {
            if !seen.insert(m) {
                return Err(format!("node {m} is in two clusters"));
            }
        }
        let c = set.center(k);
        if !members.contains(&c) {
            return Err(format!("center {c} is not in cluster {k}"));
        }
        let want = medoid(members, d);
        if c != want {
            return Err(format!("cluster {k}: center {c}, medoid {want}"));
        }
    }
    let expected: BTreeSet<usize> = nodes.iter().copied().collect();
    if seen != expected {
        return Err(format!("clusters cover {seen:?}, expected {expected:?}"));
    }
    Ok(())
}

/// Replays the placement rule for every non-center node of a converged KMA
/// result: with the node taken out, it goes to the first of its ⌈K/2⌉ nearest
/// centers (by delay, then center id) whose mean accuracy with it stays
/// strictly within `delta` of the global mean, otherwise to the nearest.
pub fn kma_replay(set: &ClusterSet, profile: &AccuracyProfile, d: &DelayMatrix, delta: f64) -> Result<(), String> {
    let k = set.k();
    let avg = profile.accuracies().iter().sum::<f64>() / profile.len() as f64;
    for (home, members) in set.clusters().iter().enumerate() {
        for &node in members {
            if set.centers().contains(&node) {
                continue;
            }
            let mut order: Vec<usize> = (0..k).collect();
            order.sort_by_key(|&c| (d.get(node, set.center(c)), set.center(c)));
            let accepted = order[..k.div_ceil(2)].iter().copied().find(|&c| {
                let others: Vec<usize> = set.members(c).iter().copied().filter(|&m| m != node).collect();
                let sum: f64 = others.iter().map(|&m| profile.acc(m)).sum::<f64>() + profile.acc(node);
                (sum / (others.len() + 1) as f64 - avg).abs() < delta
            });
            let want = accepted.unwrap_or(order[0]);
            if want != home {
                return Err(format!("node {node} sits in cluster {home}, rule places it in {want}"));
            }
        }
    }
    Ok(())
}

/// Public-node selection written out step by step: rank nodes by mean delay
/// to the cluster centers, probe the first ⌈γN⌉, keep a candidate when every
/// cluster, extended by it, stays strictly within `delta` of the global mean.
pub fn public_replay(
    set: &ClusterSet,
    profile: &AccuracyProfile,
    d: &DelayMatrix,
    gamma: f64,
    delta: f64,
) -> BTreeSet<usize> {
    let nodes = set.nodes();
    let avg = profile.accuracies().iter().sum::<f64>() / profile.len() as f64;
    let mut ranked: Vec<(u64, usize)> = nodes
        .iter()
        .map(|&n| (set.centers().iter().map(|&c| d.get(n, c).as_micros()).sum::<u64>(), n))
        .collect();
    ranked.sort_unstable();
    let take = ((gamma * nodes.len() as f64) - 1e-9).ceil() as usize;
    let mut clusters: Vec<Vec<usize>> = set.clusters().to_vec();
    let mut accepted = BTreeSet::new();
    for &(_, n) in ranked.iter().take(take) {
        let trial: Vec<Vec<usize>> = clusters
            .iter()
            .map(|c| {
                let mut c = c.clone();
                if !c.contains(&n) {
                    c.push(n);
                }
                c
            })
            .collect();
        let ok = trial.iter().all(|c| {
            let mean = c.iter().map(|&m| profile.acc(m)).sum::<f64>() / c.len() as f64;
            (mean - avg).abs() < delta
        });
        if ok {
            accepted.insert(n);
            clusters = trial;
        }
    }
    accepted
}
