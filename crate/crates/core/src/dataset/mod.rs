//! Labeled datasets, per-device partitions and the skewed clustering probe set.

mod load;
mod partition;

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

pub use load::{load_csv_dataset, load_uci_har_split, parse_csv_dataset, CsvSchema};
pub use partition::{
    partition_iid, partition_noniid_classes_per_node, partition_noniid_sorted, NodePartition,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DatasetError {
    #[error("dataset is empty")]
    Empty,
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("label {label} at sample {index} is outside 0..{classes}")]
    LabelOutOfRange { index: usize, label: usize, classes: usize },
    #[error("feature matrix has {values} values, not a multiple of {features} features for {samples} samples")]
    Shape { values: usize, features: usize, samples: usize },
    #[error("class {0} has no samples")]
    MissingClass(usize),
    #[error("label value {0} is not part of the label set")]
    UnknownLabel(i64),
    #[error("cannot split {samples} samples across {nodes} nodes")]
    TooManyNodes { nodes: usize, samples: usize },
    #[error("classes per node must be in 1..={classes}, got {got}")]
    ClassesPerNode { got: usize, classes: usize },
    #[error("could not give every class an owner with {nodes} nodes x {per_node} classes")]
    Coverage { nodes: usize, per_node: usize },
    #[error("node {0} received no samples")]
    EmptyShard(usize),
    #[error("shard index {index} out of range for {samples} samples")]
    IndexOutOfRange { index: usize, samples: usize },
    #[error("sample {0} is assigned to more than one node")]
    Overlap(usize),
    #[error("partition covers {covered} of {samples} samples")]
    Incomplete { covered: usize, samples: usize },
    #[error("invalid class weights: {0}")]
    Weights(String),
    #[error("class {class} needs {requested} samples but only {available} exist")]
    Unavailable { class: usize, requested: usize, available: usize },
    #[error("requested {requested} samples from a set of {available}")]
    Size { requested: usize, available: usize },
    #[error("i/o error on {path}: {msg}")]
    Io { path: String, msg: String },
}

/// Feature vectors with dense class labels `0..C`.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledDataset {
    features: Vec<f64>,
    labels: Vec<usize>,
    feature_count: usize,
    class_count: usize,
    /// Original label value for each dense class id.
    label_values: Vec<i64>,
}

impl LabeledDataset {
    /// Builds a dataset with labels already in `0..class_count`.
    pub fn new(
        features: Vec<f64>,
        labels: Vec<usize>,
        feature_count: usize,
        class_count: usize,
    ) -> Result<Self, DatasetError> {
        let label_values = (0..class_count as i64).collect();
        Self::with_label_values(features, labels, feature_count, label_values)
    }

    pub(crate) fn with_label_values(
        features: Vec<f64>,
        labels: Vec<usize>,
        feature_count: usize,
        label_values: Vec<i64>,
    ) -> Result<Self, DatasetError> {
        let class_count = label_values.len();
        if labels.is_empty() {
            return Err(DatasetError::Empty);
        }
        if feature_count == 0 || features.len() != labels.len() * feature_count {
            return Err(DatasetError::Shape {
                values: features.len(),
                features: feature_count,
                samples: labels.len(),
            });
        }
        if let Some((index, &label)) = labels.iter().enumerate().find(|(_, &l)| l >= class_count) {
            return Err(DatasetError::LabelOutOfRange { index, label, classes: class_count });
        }
        Ok(LabeledDataset { features, labels, feature_count, class_count, label_values })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn feature_count(&self) -> usize {
        self.feature_count
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn features(&self, i: usize) -> &[f64] {
        &self.features[i * self.feature_count..(i + 1) * self.feature_count]
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn label_values(&self) -> &[i64] {
        &self.label_values
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.class_count];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    /// Distinct labels among the given samples.
    pub fn label_set(&self, indices: &[usize]) -> BTreeSet<usize> {
        indices.iter().map(|&i| self.labels[i]).collect()
    }

    /// Copy of the selected samples, keeping the class universe.
    pub fn subset(&self, indices: &[usize]) -> Result<LabeledDataset, DatasetError> {
        let mut features = Vec::with_capacity(indices.len() * self.feature_count);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            if i >= self.len() {
                return Err(DatasetError::IndexOutOfRange { index: i, samples: self.len() });
            }
            features.extend_from_slice(self.features(i));
            labels.push(self.labels[i]);
        }
        Self::with_label_values(features, labels, self.feature_count, self.label_values.clone())
    }

    /// Re-expresses this dataset's labels in another dataset's class universe,
    /// so a test split shares dense ids with its training split.
    pub fn aligned_to(&self, reference: &LabeledDataset) -> Result<LabeledDataset, DatasetError> {
        let labels = self
            .labels
            .iter()
            .map(|&l| {
                let value = self.label_values[l];
                reference
                    .label_values
                    .iter()
                    .position(|&v| v == value)
                    .ok_or(DatasetError::UnknownLabel(value))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Self::with_label_values(
            self.features.clone(),
            labels,
            self.feature_count,
            reference.label_values.clone(),
        )
    }
}

/// Class weights for the skewed probe set: `(.30, .25, .18, .12, .09, .06)`
/// for six classes, otherwise a geometric sequence with ratio 0.7, normalized.
pub fn default_class_weights(classes: usize) -> Vec<f64> {
    if classes == 6 {
        return vec![0.30, 0.25, 0.18, 0.12, 0.09, 0.06];
    }
    let raw: Vec<f64> = (0..classes).map(|i| 0.7f64.powi(i as i32)).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|w| w / total).collect()
}

/// Splits `size` into per-class counts proportional to `weights` by largest
/// remainder (ties go to the lower class id).
pub fn largest_remainder_counts(size: usize, weights: &[f64]) -> Vec<usize> {
    let exact: Vec<f64> = weights.iter().map(|w| w * size as f64).collect();
    let mut counts: Vec<usize> = exact.iter().map(|x| x.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        let fa = exact[a] - exact[a].floor();
        let fb = exact[b] - exact[b].floor();
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    for &c in order.iter().take(size.saturating_sub(assigned)) {
        counts[c] += 1;
    }
    counts
}

/// Draws a class-skewed probe set without replacement.
pub fn sample_skewed_test_set(
    test: &LabeledDataset,
    size: usize,
    class_weights: &[f64],
    seed: u64,
) -> Result<LabeledDataset, DatasetError> {
    if size == 0 {
        return Err(DatasetError::Empty);
    }
    if size > test.len() {
        return Err(DatasetError::Size { requested: size, available: test.len() });
    }
    if class_weights.len() != test.class_count() {
        return Err(DatasetError::Weights(format!(
            "expected {} weights, got {}",
            test.class_count(),
            class_weights.len()
        )));
    }
    if class_weights.iter().any(|&w| !(w > 0.0 && w.is_finite())) {
        return Err(DatasetError::Weights("weights must be positive".into()));
    }
    let total: f64 = class_weights.iter().sum();
    if (total - 1.0).abs() > 1e-6 {
        return Err(DatasetError::Weights(format!("weights sum to {total}, not 1")));
    }

    let counts = largest_remainder_counts(size, class_weights);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chosen = Vec::with_capacity(size);
    for (class, &want) in counts.iter().enumerate() {
        let mut pool: Vec<usize> = (0..test.len()).filter(|&i| test.label(i) == class).collect();
        if want > pool.len() {
            return Err(DatasetError::Unavailable { class, requested: want, available: pool.len() });
        }
        pool.shuffle(&mut rng);
        chosen.extend_from_slice(&pool[..want]);
    }
    chosen.sort_unstable();
    test.subset(&chosen)
}

/// Gaussian class clusters around random unit-scale centroids; a stand-in
/// for real sensor data in examples and tests.
pub fn synthetic_blobs(
    per_class: &[usize],
    feature_count: usize,
    noise_std: f64,
    seed: u64,
) -> Result<LabeledDataset, DatasetError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let unit = Normal::new(0.0, 1.0).expect("unit normal");
    let noise = Normal::new(0.0, noise_std.max(0.0)).map_err(|e| DatasetError::Weights(e.to_string()))?;
    let centroids: Vec<Vec<f64>> = per_class
        .iter()
        .map(|_| (0..feature_count).map(|_| unit.sample(&mut rng)).collect())
        .collect();
    let mut features = Vec::new();
    let mut labels = Vec::new();
    for (class, &n) in per_class.iter().enumerate() {
        for _ in 0..n {
            features.extend(centroids[class].iter().map(|c| c + noise.sample(&mut rng)));
            labels.push(class);
        }
    }
    // interleave classes the way a recorded dataset would be
    let mut order: Vec<usize> = (0..labels.len()).collect();
    order.shuffle(&mut rng);
    let ds = LabeledDataset::new(features, labels, feature_count, per_class.len())?;
    ds.subset(&order)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy(labels: &[usize], classes: usize) -> LabeledDataset {
        let features = labels.iter().map(|&l| l as f64).collect();
        LabeledDataset::new(features, labels.to_vec(), 1, classes).unwrap()
    }

    #[test]
    fn construction_checks() {
        assert_eq!(LabeledDataset::new(vec![], vec![], 1, 1), Err(DatasetError::Empty));
        assert!(matches!(
            LabeledDataset::new(vec![1.0, 2.0], vec![0], 1, 1),
            Err(DatasetError::Shape { .. })
        ));
        assert!(matches!(
            LabeledDataset::new(vec![1.0], vec![3], 1, 2),
            Err(DatasetError::LabelOutOfRange { label: 3, .. })
        ));
    }

    #[test]
    fn skewed_counts_follow_largest_remainder() {
        let w = default_class_weights(6);
        assert_eq!(largest_remainder_counts(1000, &w), vec![300, 250, 180, 120, 90, 60]);
        assert_eq!(largest_remainder_counts(7, &[0.5, 0.5]), vec![4, 3]);
        assert_eq!(largest_remainder_counts(10, &[1.0 / 3.0; 3]), vec![4, 3, 3]);
        let g = default_class_weights(10);
        assert!((g.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(g.windows(2).all(|p| p[0] > p[1]));
    }

    #[test]
    fn skewed_sample_counts() {
        let labels: Vec<usize> = (0..600).map(|i| i % 6).collect();
        let ds = toy(&labels, 6);
        let probe = sample_skewed_test_set(&ds, 300, &[0.30, 0.25, 0.18, 0.12, 0.09, 0.06], 5).unwrap();
        assert_eq!(probe.class_counts(), vec![90, 75, 54, 36, 27, 18]);
        let uniform = sample_skewed_test_set(&ds, 6, &[1.0 / 6.0; 6], 5).unwrap();
        assert_eq!(uniform.class_counts(), vec![1; 6]);
    }

    #[test]
    fn skewed_sample_errors() {
        let ds = toy(&[0, 0, 1, 1], 2);
        assert_eq!(sample_skewed_test_set(&ds, 0, &[0.5, 0.5], 0), Err(DatasetError::Empty));
        assert!(matches!(
            sample_skewed_test_set(&ds, 4, &[0.9, 0.1], 0),
            Err(DatasetError::Unavailable { class: 0, requested: 4, available: 2 })
        ));
        assert!(matches!(sample_skewed_test_set(&ds, 2, &[0.4, 0.4], 0), Err(DatasetError::Weights(_))));
        assert!(matches!(sample_skewed_test_set(&ds, 2, &[1.0], 0), Err(DatasetError::Weights(_))));
    }

    #[test]
    fn alignment_uses_reference_ids() {
        let train = LabeledDataset::with_label_values(vec![0.0, 1.0], vec![0, 1], 1, vec![3, 7]).unwrap();
        let test = LabeledDataset::with_label_values(vec![5.0], vec![0], 1, vec![7]).unwrap();
        let aligned = test.aligned_to(&train).unwrap();
        assert_eq!(aligned.labels(), &[1]);
        assert_eq!(aligned.class_count(), 2);
        let stray = LabeledDataset::with_label_values(vec![5.0], vec![0], 1, vec![9]).unwrap();
        assert_eq!(stray.aligned_to(&train), Err(DatasetError::UnknownLabel(9)));
    }

    #[test]
    fn blobs_have_requested_shape() {
        let ds = synthetic_blobs(&[5, 7, 3], 4, 0.1, 1).unwrap();
        assert_eq!(ds.len(), 15);
        assert_eq!(ds.class_counts(), vec![5, 7, 3]);
        assert_eq!(ds.feature_count(), 4);
    }
}
