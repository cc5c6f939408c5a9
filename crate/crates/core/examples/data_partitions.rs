//! Splitting a labelled dataset across devices, and the class-skewed probe set.

use etree::dataset::{
    default_class_weights, partition_iid, partition_noniid_classes_per_node, partition_noniid_sorted,
    sample_skewed_test_set, synthetic_blobs,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let train = synthetic_blobs(&[120; 6], 8, 1.0, 7)?;
    let test = synthetic_blobs(&[60; 6], 8, 1.0, 7)?;

    let schemes = [
        ("iid", partition_iid(&train, 20, 1)?),
        ("noniid-4", partition_noniid_classes_per_node(&train, 20, 4, 1)?),
        ("noniid-sorted", partition_noniid_sorted(&train, 20)?),
    ];
    for (name, part) in &schemes {
        let sets = part.label_sets(&train);
        let mean = sets.iter().map(|s| s.len()).sum::<usize>() as f64 / sets.len() as f64;
        println!("{name:<14} shard sizes {:?}.. mean classes/node {mean:.2}", &part.shards().iter().map(Vec::len).collect::<Vec<_>>()[..5]);
    }

    let probe = sample_skewed_test_set(&test, 200, &default_class_weights(6), 3)?;
    println!("probe class counts {:?}", probe.class_counts());
    Ok(())
}
