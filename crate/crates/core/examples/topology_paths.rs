//! Random edge network, all-pairs minimum delays and one routed path.

use etree::topology::{generate_random_topology, shortest_path, DelayDistribution, Routes};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let delays = DelayDistribution::new(50.0, 50.0)?;
    let graph = generate_random_topology(100, 300, delays, 1)?;
    println!("nodes={} links={} connected={}", graph.node_count(), graph.edge_count(), graph.is_connected());

    let routes = Routes::compute(&graph)?;
    let path = shortest_path(&graph, 0, 99)?;
    println!("0 -> 99: {:.3} ms over {} hops via {:?}", routes.delays().ms(0, 99), routes.hops(0, 99), path.nodes);

    let far = (0..100).max_by_key(|&j| routes.delay(0, j)).unwrap();
    println!("farthest from 0: node {far} at {:.3} ms", routes.delays().ms(0, far));
    Ok(())
}
