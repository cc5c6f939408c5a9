//! The five learning protocols on one simulated edge network.

use etree::dataset::{partition_noniid_classes_per_node, synthetic_blobs};
use etree::sim::{run_protocol, Protocol, SimConfig, SimInputs};
use etree::topology::{generate_random_topology, DelayDistribution, Routes};
use etree::tree::{build_etree, LeafClustering};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let train = synthetic_blobs(&[150; 6], 10, 1.0, 5)?;
    let test = synthetic_blobs(&[50; 6], 10, 1.0, 5)?;
    let partition = partition_noniid_classes_per_node(&train, 30, 2, 5)?;
    let graph = generate_random_topology(30, 90, DelayDistribution::new(50.0, 50.0)?, 5)?;
    let routes = Routes::compute(&graph)?;
    let tree = build_etree(routes.delays(), &[6], LeafClustering::KMeans, &[5], 5)?;

    let cfg = SimConfig { budget_ms: 10_000.0, ..SimConfig::default() };
    println!("{:<12} {:>8} {:>8} {:>10}", "protocol", "rows", "accuracy", "hops");
    for p in Protocol::ALL {
        let inputs = SimInputs {
            graph: &graph,
            routes: &routes,
            train: &train,
            test: &test,
            partition: &partition,
            tree: p.needs_tree().then_some(&tree),
        };
        let log = run_protocol(p, &inputs, &cfg)?;
        println!("{:<12} {:>8} {:>8.4} {:>10}", p, log.rows.len(), log.final_accuracy(), log.total_hops);
    }
    Ok(())
}
