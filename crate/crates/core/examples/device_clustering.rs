//! Grouping devices by delay alone, by delay with an accuracy constraint,
//! and by accuracy alone.

use etree::clustering::{kma_cluster, kmeans_cluster, pretrain_profile, ununiform_kma_cluster, KmaConfig};
use etree::dataset::{default_class_weights, partition_noniid_sorted, sample_skewed_test_set, synthetic_blobs};
use etree::model::TrainConfig;
use etree::topology::{generate_random_topology, DelayDistribution, Routes};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let train = synthetic_blobs(&[100; 6], 6, 1.5, 2)?;
    let test = synthetic_blobs(&[50; 6], 6, 1.5, 2)?;
    let part = partition_noniid_sorted(&train, 30)?;
    let graph = generate_random_topology(30, 70, DelayDistribution::new(50.0, 50.0)?, 2)?;
    let routes = Routes::compute(&graph)?;
    let d = routes.delays();

    let probe = sample_skewed_test_set(&test, 150, &default_class_weights(6), 2)?;
    let profile = pretrain_profile(&part, &train, &probe, 5, &TrainConfig::default())?;
    println!("mean pre-trained accuracy {:.3}", profile.acc_avg());

    let nodes: Vec<usize> = (0..30).collect();
    let show = |name: &str, set: &etree::clustering::ClusterSet| {
        let spread: Vec<String> = (0..set.k()).map(|c| format!("{:.2}", profile.mean_over(set.members(c)))).collect();
        println!("{name:<14} objective {:>8} us, cluster accuracies [{}]", set.objective(d), spread.join(" "));
    };
    show("k-means", &kmeans_cluster(&nodes, 5, d, 1)?);
    show("kma d=0.05", &kma_cluster(&nodes, 5, d, &profile, &KmaConfig { delta: 0.05, seed: 1, ..KmaConfig::default() })?);
    show("ununiform-kma", &ununiform_kma_cluster(&nodes, 5, d, &profile)?);
    Ok(())
}
