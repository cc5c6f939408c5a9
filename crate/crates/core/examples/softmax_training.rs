//! Local SGD on a softmax regression model, delta algebra and checkpoints.

use etree::dataset::synthetic_blobs;
use etree::model::{apply_averaged_deltas, delta, evaluate, init_model, sgd_train, ModelParams, TrainConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let train = synthetic_blobs(&[50, 50, 50], 4, 1.0, 11)?;
    let test = synthetic_blobs(&[20, 20, 20], 4, 1.0, 11)?;
    let all: Vec<usize> = (0..train.len()).collect();

    let start = init_model(4, 3, 0);
    let cfg = TrainConfig { local_epochs: 5, ..TrainConfig::default() };
    let trained = sgd_train(&start, &train, &all, &cfg)?;
    let before = evaluate(&start, &test)?;
    let after = evaluate(&trained, &test)?;
    println!("accuracy {:.3} -> {:.3}, loss {:.4} -> {:.4}", before.accuracy, after.accuracy, before.loss, after.loss);

    // two devices on halves of the data, merged by averaging their deltas
    let (a, b) = all.split_at(all.len() / 2);
    let da = delta(&sgd_train(&start, &train, a, &cfg)?, &start)?;
    let db = delta(&sgd_train(&start, &train, b, &cfg.with_seed(1))?, &start)?;
    let merged = apply_averaged_deltas(&start, [&da, &db])?;
    println!("merged accuracy {:.3}", evaluate(&merged, &test)?.accuracy);

    let restored = ModelParams::from_checkpoint(&merged.to_checkpoint())?;
    assert_eq!(restored, merged);
    println!("checkpoint round trip ok ({} values)", merged.as_slice().len());
    Ok(())
}
