//! A three-layer aggregation tree, then the same tree with public nodes.

use etree::clustering::{pretrain_profile, AccuracyProfile};
use etree::dataset::{partition_noniid_sorted, synthetic_blobs};
use etree::model::TrainConfig;
use etree::topology::{generate_random_topology, DelayDistribution, Routes};
use etree::tree::{attach_public_nodes, build_etree, select_public_nodes, LeafClustering, PublicNodeConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let graph = generate_random_topology(24, 50, DelayDistribution::new(50.0, 50.0)?, 4)?;
    let routes = Routes::compute(&graph)?;
    let d = routes.delays();

    let tree = build_etree(d, &[4], LeafClustering::KMeans, &[5], 4)?;
    println!("depth {} root {}\n{}", tree.depth(), tree.root(), tree.to_text());

    let train = synthetic_blobs(&[40; 4], 5, 1.0, 4)?;
    let part = partition_noniid_sorted(&train, 24)?;
    let profile: AccuracyProfile = pretrain_profile(&part, &train, &train, 3, &TrainConfig::default())?;
    let publics = select_public_nodes(tree.leaf_clusters(), &profile, d, &PublicNodeConfig { gamma: 0.2, delta: 0.1 })?;
    let with = attach_public_nodes(&tree, &publics)?;
    println!("public nodes {:?}", with.public_nodes());
    for &p in with.public_nodes() {
        println!("  node {p} reports to {:?}", with.parents(0, p));
    }
    Ok(())
}
