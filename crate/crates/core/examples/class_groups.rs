//! Leaf groups holding few classes against groups holding many, on a fully
//! connected network with sorted (1-2 classes per device) data.

use etree::experiment::{class_group_run, contiguous_groups, partition, round_robin_groups, DataSplits, Distribution};
use etree::dataset::synthetic_blobs;
use etree::sim::SimConfig;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let data = DataSplits { train: synthetic_blobs(&[200; 6], 10, 1.5, 9)?, test: synthetic_blobs(&[60; 6], 10, 1.5, 9)? };
    let part = partition(&data.train, 40, Distribution::NoniidSorted, 9)?;
    let order: Vec<usize> = (0..40).collect();
    let sim = SimConfig { budget_ms: 8000.0, ..SimConfig::default() };
    for k in [5, 8] {
        let few = class_group_run(&data, &part, contiguous_groups(&order, k), 50.0, 5, &sim)?;
        let many = class_group_run(&data, &part, round_robin_groups(&order, k), 50.0, 5, &sim)?;
        println!(
            "K={k}: {:.1} classes/group -> {:.4}, {:.1} classes/group -> {:.4}",
            few.mean_classes(),
            few.log.final_accuracy(),
            many.mean_classes(),
            many.log.final_accuracy()
        );
    }
    Ok(())
}
