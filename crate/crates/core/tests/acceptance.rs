//! One PASS/FAIL line per acceptance criterion. Criteria 1-5 need UCI HAR
//! under `$ETREE_DATA_DIR`; without it they report FAIL.

mod common;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use etree::clustering::{kma_cluster, kmeans_cluster, ununiform_kma_cluster, AccuracyProfile, KmaConfig};
use etree::dataset::{partition_noniid_classes_per_node, partition_noniid_sorted, synthetic_blobs, LabeledDataset};
use etree::experiment::{
    class_aligned_groups, class_group_run, cluster_variants, load_har, partition, round_robin_groups, run_experiment,
    run_variants_on, table3_config, ClusteringKind, DataSplits, DatasetSpec, Distribution, ExperimentConfig, TopologySpec,
    TreeSpec, Variant, DATA_DIR_ENV,
};
use etree::model::{apply_averaged_deltas, average_models, delta, gradient, ModelParams};
use etree::sim::{run_etree, run_federated, run_grouped, run_individual, MetricsLog, Protocol, SimConfig, SimInputs};
use etree::topology::{generate_random_topology, shortest_path, DelayDistribution, Routes};
use etree::tree::{build_etree, LeafClustering};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SEEDS: [u64; 3] = [1, 2, 3];

type Outcome = Result<String, String>;

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn har() -> Result<(PathBuf, DataSplits), String> {
    let dir = std::env::var_os(DATA_DIR_ENV).map(PathBuf::from).ok_or(format!("HAR not available: {DATA_DIR_ENV} is not set"))?;
    let data = load_har(&dir).map_err(|e| format!("HAR not available: {e}"))?;
    Ok((dir, data))
}

/// Mean final accuracy per protocol and per-seed values.
struct Table {
    rows: Vec<(Protocol, Vec<f64>, Vec<u64>)>,
}

impl Table {
    fn acc(&self, p: Protocol) -> Vec<f64> {
        self.rows.iter().find(|r| r.0 == p).map(|r| r.1.clone()).unwrap_or_default()
    }
    fn hops(&self, p: Protocol) -> Vec<u64> {
        self.rows.iter().find(|r| r.0 == p).map(|r| r.2.clone()).unwrap_or_default()
    }
}

fn table(dir: &Path, data: &DataSplits, dist: Distribution) -> Result<Table, String> {
    let cfg = table3_config(dir, dist, &SEEDS, std::env::temp_dir());
    let variants: Vec<Variant> = Protocol::ALL.iter().map(|&p| Variant::protocol(&cfg, p)).collect();
    let runs = run_variants_on(&cfg, data, &variants).map_err(|e| e.to_string())?;
    let rows = Protocol::ALL
        .iter()
        .map(|&p| {
            let mine: Vec<&(Variant, u64, MetricsLog)> = runs.iter().filter(|r| r.0.protocol == p).collect();
            (p, mine.iter().map(|r| r.2.final_accuracy()).collect(), mine.iter().map(|r| r.2.total_hops).collect())
        })
        .collect();
    Ok(Table { rows })
}

fn within(name: &str, xs: &[f64], lo: f64, hi: f64, fails: &mut Vec<String>) -> String {
    let m = mean(xs);
    if !(lo..=hi).contains(&m) {
        fails.push(format!("{name} {m:.4} outside [{lo}, {hi}]"));
    }
    format!("{name}={m:.4}")
}

fn criterion_1(noniid: &Table) -> Outcome {
    let mut fails = Vec::new();
    let mut parts = Vec::new();
    for (p, lo, hi) in [
        (Protocol::Etree, 0.91, 0.97),
        (Protocol::Federated, 0.88, 0.94),
        (Protocol::Gossip, 0.72, 0.86),
        (Protocol::Individual, 0.38, 0.53),
        (Protocol::Grouped, 0.65, 0.80),
    ] {
        parts.push(within(p.name(), &noniid.acc(p), lo, hi, &mut fails));
    }
    let order = [Protocol::Etree, Protocol::Federated, Protocol::Gossip, Protocol::Individual];
    for (i, seed) in SEEDS.iter().enumerate() {
        let accs: Vec<f64> = order.iter().map(|&p| noniid.acc(p)[i]).collect();
        if !accs.windows(2).all(|w| w[0] > w[1]) {
            fails.push(format!("seed {seed} ordering broken: {accs:.4?}"));
        }
    }
    let detail = parts.join(" ");
    if fails.is_empty() {
        Ok(detail)
    } else {
        Err(format!("{detail}; {}", fails.join("; ")))
    }
}

fn criterion_2(iid: &Table) -> Outcome {
    let mut fails = Vec::new();
    let mut parts = Vec::new();
    for (p, lo, hi) in [(Protocol::Etree, 0.92, 0.97), (Protocol::Federated, 0.92, 0.97), (Protocol::Gossip, 0.87, 0.95)] {
        parts.push(within(p.name(), &iid.acc(p), lo, hi, &mut fails));
    }
    let gap = mean(&iid.acc(Protocol::Etree)) - mean(&iid.acc(Protocol::Federated));
    if gap.abs() > 0.02 {
        fails.push(format!("etree-federated gap {gap:.4} exceeds 0.02"));
    }
    let detail = format!("{} gap={gap:.4}", parts.join(" "));
    if fails.is_empty() {
        Ok(detail)
    } else {
        Err(format!("{detail}; {}", fails.join("; ")))
    }
}

fn criterion_3(iid: &Table) -> Outcome {
    let et: Vec<f64> = iid.hops(Protocol::Etree).iter().map(|&h| h as f64).collect();
    let fl: Vec<f64> = iid.hops(Protocol::Federated).iter().map(|&h| h as f64).collect();
    let ratio = mean(&et) / mean(&fl);
    check(ratio <= 0.70, format!("etree hops {:.0} / federated hops {:.0} = {ratio:.3} (limit 0.70)", mean(&et), mean(&fl)))
}

fn criterion_4(data: &DataSplits) -> Outcome {
    let sim = SimConfig { seed: 0, ..table3_config(Path::new("."), Distribution::Iid, &SEEDS, PathBuf::new()).sim };
    let mut parts = Vec::new();
    let mut ok = true;
    for k in [5, 8] {
        let (mut few, mut many, mut few_classes, mut many_classes) = (vec![], vec![], 0, usize::MAX);
        for seed in SEEDS {
            let part = partition(&data.train, 100, Distribution::NoniidSorted, seed).map_err(|e| e.to_string())?;
            let labels = part.label_sets(&data.train);
            let order: Vec<usize> = (0..100).collect();
            let sim = SimConfig { seed, ..sim.clone() };
            let a = class_group_run(data, &part, class_aligned_groups(&labels, k), 50.0, 5, &sim).map_err(|e| e.to_string())?;
            let b = class_group_run(data, &part, round_robin_groups(&order, k), 50.0, 5, &sim).map_err(|e| e.to_string())?;
            few_classes = few_classes.max(a.max_classes());
            many_classes = many_classes.min(b.min_classes());
            few.push(a.log.final_accuracy());
            many.push(b.log.final_accuracy());
        }
        let gap = mean(&many) - mean(&few);
        ok &= gap >= 0.05 && few_classes <= 2 && many_classes >= 3;
        parts.push(format!(
            "K={k}: <={few_classes} classes {:.4} vs >={many_classes} classes {:.4} (gap {gap:.4})",
            mean(&few),
            mean(&many)
        ));
    }
    check(ok, parts.join("; "))
}

fn clustering_accuracies(cfg: &ExperimentConfig, data: &DataSplits) -> Result<(f64, f64, f64, String), String> {
    let variants = cluster_variants(&cfg.tree);
    let runs = run_variants_on(cfg, data, &variants).map_err(|e| e.to_string())?;
    let acc = |label: &str| mean(&runs.iter().filter(|r| r.0.label == label).map(|r| r.2.final_accuracy()).collect::<Vec<_>>());
    let (best_label, best) = variants
        .iter()
        .filter(|v| v.clustering == ClusteringKind::Kma)
        .map(|v| (v.label.clone(), acc(&v.label)))
        .fold((String::new(), f64::NEG_INFINITY), |a, b| if b.1 > a.1 { b } else { a });
    Ok((best, acc("kmeans"), acc("ununiform-kma"), best_label))
}

fn clustering_config(dir: &Path, topology: TopologySpec, k: usize) -> ExperimentConfig {
    let base = table3_config(dir, Distribution::NoniidSorted, &SEEDS, std::env::temp_dir());
    ExperimentConfig {
        protocols: vec![Protocol::Etree],
        topology,
        tree: TreeSpec { layer_ks: vec![k], frequencies: vec![5], clustering: ClusteringKind::Kma, ..TreeSpec::default() },
        dataset: DatasetSpec::Har { dir: Some(dir.to_path_buf()) },
        ..base
    }
}

fn criterion_5(dir: &Path, data: &DataSplits) -> Outcome {
    let delay = DelayDistribution::new(50.0, 50.0).unwrap();
    let g1 = clustering_config(dir, TopologySpec::Random { nodes: 100, links: 300, delay }, 8);
    let centered = DelayDistribution::new(50.0, 10f64.sqrt()).unwrap();
    let mut ok = true;
    let mut parts = Vec::new();

    let (best, km, un, label) = clustering_accuracies(&g1, data)?;
    ok &= best >= un + 0.02 && (best - km).abs() <= 0.02;
    parts.push(format!("G1: {label}={best:.4} kmeans={km:.4} ununiform={un:.4}"));
    for k in [5, 8] {
        let g3 = clustering_config(dir, TopologySpec::ClassCentered { nodes: 100, delay: centered }, k);
        let (best, km, un, label) = clustering_accuracies(&g3, data)?;
        ok &= best >= un + 0.02 && best > km + 0.02;
        parts.push(format!("G3 K={k}: {label}={best:.4} kmeans={km:.4} ununiform={un:.4}"));
    }
    check(ok, parts.join("; "))
}

fn criterion_6() -> Outcome {
    let train = synthetic_blobs(&[120; 6], 8, 1.5, 6).unwrap();
    let probe = synthetic_blobs(&[40; 6], 8, 1.5, 6).unwrap();
    let mut checked = 0;
    for seed in 1..=10u64 {
        let g = generate_random_topology(100, 300, DelayDistribution::new(50.0, 50.0).unwrap(), seed).unwrap();
        let routes = Routes::compute(&g).unwrap();
        let d = routes.delays();
        let part = partition_noniid_sorted(&train, 100).unwrap();
        let profile = etree::clustering::pretrain_profile(&part, &train, &probe, 5, &Default::default()).unwrap();
        let nodes: Vec<usize> = (0..100).collect();
        for k in [5, 8, 20] {
            let km = kmeans_cluster(&nodes, k, d, seed).unwrap();
            let kma = kma_cluster(&nodes, k, d, &profile, &KmaConfig { delta: 1.0, seed, ..KmaConfig::default() }).unwrap();
            if km.assignment() != kma.assignment() || km.centers() != kma.centers() {
                return Err(format!("seed {seed}, K={k}: assignments differ"));
            }
            checked += 1;
        }
    }
    Ok(format!("{checked} 100-node instances, identical assignments and centers"))
}

fn random_model(rng: &mut ChaCha8Rng, c: usize, f: usize, scale: f64) -> ModelParams {
    let weights = (0..c).map(|_| (0..f).map(|_| rng.gen_range(-scale..scale)).collect()).collect();
    let bias = (0..c).map(|_| rng.gen_range(-scale..scale)).collect();
    ModelParams::from_parts(weights, bias).unwrap()
}

fn criterion_7() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let (c, f, s) = (rng.gen_range(2..6), rng.gen_range(1..7), rng.gen_range(1..9));
        let x: Vec<f64> = (0..s * f).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let y: Vec<usize> = (0..s).map(|_| rng.gen_range(0..c)).collect();
        let ds = LabeledDataset::new(x, y, f, c).unwrap();
        let batch: Vec<usize> = (0..s).collect();
        let m = random_model(&mut rng, c, f, 1.0);
        let g = gradient(&m, &ds, &batch).unwrap();
        for i in 0..m.as_slice().len() {
            let (mut up, mut down) = (m.clone(), m.clone());
            up.as_mut_slice()[i] += h;
            down.as_mut_slice()[i] -= h;
            let numeric = (common::mean_loss(&up, &ds, &batch) - common::mean_loss(&down, &ds, &batch)) / (2.0 * h);
            let analytic = g.as_slice()[i];
            let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6);
            worst = worst.max(rel);
        }
    }
    check(worst < 1e-4, format!("max relative error {worst:.3e} over 100 models (limit 1e-4)"))
}

fn criterion_8() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut worst: f64 = 0.0;
    let diff = |a: &ModelParams, b: &ModelParams| {
        a.as_slice().iter().zip(b.as_slice()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
    };
    for _ in 0..200 {
        let (c, f, k) = (rng.gen_range(1..6), rng.gen_range(1..8), rng.gen_range(1..8));
        let m = random_model(&mut rng, c, f, 5.0);
        let n = random_model(&mut rng, c, f, 5.0);
        let d = delta(&n, &m).unwrap();
        worst = worst.max(diff(&m.apply(&d).unwrap(), &n));
        worst = worst.max(diff(&apply_averaged_deltas(&m, &vec![d.clone(); k]).unwrap(), &n));
        worst = worst.max(diff(&average_models(vec![&m; k]).unwrap(), &m));
        let others: Vec<ModelParams> = (0..k).map(|_| random_model(&mut rng, c, f, 5.0)).collect();
        let deltas: Vec<_> = others.iter().map(|o| delta(o, &m).unwrap()).collect();
        worst = worst.max(diff(&apply_averaged_deltas(&m, &deltas).unwrap(), &average_models(&others).unwrap()));
    }
    check(worst <= 1e-12, format!("max deviation {worst:.3e} over 200 instances (limit 1e-12)"))
}

fn criterion_9() -> Outcome {
    let train = synthetic_blobs(&[30; 4], 5, 1.0, 9).unwrap();
    let test = synthetic_blobs(&[10; 4], 5, 1.0, 9).unwrap();
    let mut rounds = 0;
    for seed in 1..=5u64 {
        let g = generate_random_topology(10, 15, DelayDistribution::new(50.0, 50.0).unwrap(), seed).unwrap();
        let routes = Routes::compute(&g).unwrap();
        let partition = partition_noniid_classes_per_node(&train, 10, 2, seed).unwrap();
        let one = build_etree(routes.delays(), &[1], LeafClustering::KMeans, &[], seed).unwrap();
        let singles = build_etree(routes.delays(), &[10], LeafClustering::KMeans, &[1], seed).unwrap();
        let inputs = |tree| SimInputs { graph: &g, routes: &routes, train: &train, test: &test, partition: &partition, tree };
        let cfg = SimConfig { budget_ms: 5000.0, record_models: true, seed, ..SimConfig::default() };

        let et = run_etree(&inputs(Some(&one)), &cfg).map_err(|e| e.to_string())?;
        let fl = run_federated(&inputs(None), &cfg).map_err(|e| e.to_string())?;
        if et.models != fl.models || et.to_csv() != fl.to_csv() {
            return Err(format!("seed {seed}: one-group tree differs from federated averaging"));
        }
        let gr = run_grouped(&inputs(Some(&singles)), &cfg).map_err(|e| e.to_string())?;
        let alone = run_individual(&inputs(None), &cfg).map_err(|e| e.to_string())?;
        if gr.models != alone.models || gr.to_csv() != alone.to_csv() {
            return Err(format!("seed {seed}: singleton groups differ from individual training"));
        }
        rounds += et.rounds();
    }
    Ok(format!("5 ten-node instances, {rounds} tree rounds, identical model traces"))
}

fn criterion_10() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let (mut replayed, mut unconverged) = (0, 0);
    for i in 0..200u64 {
        let n = rng.gen_range(2..=12);
        let links = rng.gen_range(n - 1..=n * (n - 1) / 2);
        let g = generate_random_topology(n, links, DelayDistribution::new(50.0, 50.0).unwrap(), i).unwrap();
        let routes = Routes::compute(&g).unwrap();
        let d = routes.delays();
        let nodes: Vec<usize> = (0..n).collect();
        let k = rng.gen_range(1..=n);
        let profile = AccuracyProfile::new((0..n).map(|_| rng.gen_range(0.0..1.0)).collect(), 5).unwrap();
        let delta = [0.01, 0.05, 0.1, 0.3][rng.gen_range(0..4)];
        let tag = |e: String| format!("instance {i} (n={n}, K={k}, delta={delta}): {e}");

        let km = kmeans_cluster(&nodes, k, d, i).map_err(|e| tag(e.to_string()))?;
        common::check_cluster_set(&km, &nodes, d).map_err(tag)?;
        let un = ununiform_kma_cluster(&nodes, k, d, &profile).map_err(|e| tag(e.to_string()))?;
        common::check_cluster_set(&un, &nodes, d).map_err(tag)?;
        let kma = kma_cluster(&nodes, k, d, &profile, &KmaConfig { delta, seed: i, ..KmaConfig::default() })
            .map_err(|e| tag(e.to_string()))?;
        common::check_cluster_set(&kma, &nodes, d).map_err(tag)?;
        if kma.converged() {
            common::kma_replay(&kma, &profile, d, delta).map_err(tag)?;
            replayed += 1;
        } else {
            unconverged += 1;
        }
    }
    check(
        unconverged == 0,
        format!("200 instances: coverage, non-empty, medoid centers hold; {replayed} KMA results replayed, {unconverged} hit the sweep cap"),
    )
}

fn criterion_11() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let text = r#"
output_dir = "a"
seeds = [1, 2]
protocols = ["etree", "federated", "gossip", "individual", "grouped"]
[dataset]
kind = "synthetic"
classes = 4
train_per_class = 40
test_per_class = 15
features = 6
noise_std = 1.0
[distribution]
kind = "noniid-k"
classes_per_node = 2
[topology]
kind = "random"
nodes = 16
links = 30
delay = { mean_ms = 50.0, std_ms = 50.0 }
[tree]
layer_ks = [4]
frequencies = [3]
clustering = "kma"
probe_size = 30
gamma = 0.2
[sim]
budget_ms = 4000.0
"#;
    let mut files = 0;
    let mut outputs = Vec::new();
    for sub in ["a", "b"] {
        let mut cfg = ExperimentConfig::from_toml(text).map_err(|e| e.to_string())?;
        cfg.output_dir = dir.path().join(sub);
        run_experiment(&cfg).map_err(|e| e.to_string())?;
        let mut names: Vec<PathBuf> = std::fs::read_dir(&cfg.output_dir).unwrap().map(|e| e.unwrap().path()).collect();
        names.sort();
        let contents: Vec<(String, Vec<u8>)> = names
            .iter()
            .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(p).unwrap()))
            .collect();
        files = contents.len();
        outputs.push(contents);
    }
    check(outputs[0] == outputs[1], format!("{files} files byte-identical across two runs"))
}

fn criterion_12() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut pairs = 0;
    for i in 0..60u64 {
        let n = rng.gen_range(2..=50);
        let links = rng.gen_range(n - 1..=(n * (n - 1) / 2).min(4 * n));
        let g = generate_random_topology(n, links, DelayDistribution::new(50.0, 50.0).unwrap(), i).unwrap();
        let routes = Routes::compute(&g).unwrap();
        let oracle = common::floyd_warshall(&g);
        for a in 0..n {
            for b in 0..n {
                let m = routes.delay(a, b).as_micros();
                let p = shortest_path(&g, a, b).unwrap().delay.as_micros();
                if m != oracle[a][b] || p != oracle[a][b] {
                    return Err(format!("graph {i}: pair ({a},{b}) matrix {m} path {p} oracle {}", oracle[a][b]));
                }
                pairs += 1;
            }
        }
    }
    Ok(format!("60 graphs, {pairs} pairs equal to the Floyd-Warshall oracle"))
}

fn main() -> ExitCode {
    let mut results: Vec<(u32, &str, Outcome)> = Vec::new();
    match har() {
        Ok((dir, data)) => {
            let noniid = table(&dir, &data, Distribution::NoniidK { classes_per_node: 4 });
            let iid = table(&dir, &data, Distribution::Iid);
            results.push((1, "noniid accuracies and ordering", noniid.as_ref().map_err(Clone::clone).and_then(criterion_1)));
            results.push((2, "iid accuracies", iid.as_ref().map_err(Clone::clone).and_then(criterion_2)));
            results.push((3, "communication cost vs federated", iid.as_ref().map_err(Clone::clone).and_then(criterion_3)));
            results.push((4, "classes per group", criterion_4(&data)));
            results.push((5, "clustering comparison", criterion_5(&dir, &data)));
        }
        Err(why) => {
            for (n, name) in [
                (1, "noniid accuracies and ordering"),
                (2, "iid accuracies"),
                (3, "communication cost vs federated"),
                (4, "classes per group"),
                (5, "clustering comparison"),
            ] {
                results.push((n, name, Err(why.clone())));
            }
        }
    }
    results.push((6, "loose threshold equals k-means", criterion_6()));
    results.push((7, "gradient check", criterion_7()));
    results.push((8, "update algebra", criterion_8()));
    results.push((9, "collapse equivalences", criterion_9()));
    results.push((10, "clustering invariants", criterion_10()));
    results.push((11, "determinism", criterion_11()));
    results.push((12, "shortest paths vs oracle", criterion_12()));

    let mut failed = 0;
    for (n, name, outcome) in &results {
        match outcome {
            Ok(detail) => println!("criterion {n:>2} PASS  {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("criterion {n:>2} FAIL  {name}: {detail}");
            }
        }
    }
    println!("{} passed, {failed} failed", results.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
