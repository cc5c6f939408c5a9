//! Five-protocol accuracy comparison on HAR under IID and 4-classes-per-node
//! data, with the default 100-device environment.

use std::path::{Path, PathBuf};

use super::{
    load_har, run_variants_on, write_report, DatasetSpec, Distribution, ExperimentConfig, ExperimentError, ExperimentReport, TopologySpec, TreeSpec,
    Variant,
};
use crate::model::TrainConfig;
use crate::sim::{Protocol, SimConfig};
use crate::topology::DelayDistribution;

/// Reference accuracies (IID, NonIID) for each protocol.
pub const REFERENCE_ACCURACY: [(Protocol, f64, f64); 5] = [
    (Protocol::Gossip, 0.917, 0.794),
    (Protocol::Federated, 0.947, 0.917),
    (Protocol::Etree, 0.950, 0.941),
    (Protocol::Individual, 0.819, 0.457),
    (Protocol::Grouped, 0.901, 0.726),
];

/// 100 devices, 300 links with 50±50 ms delays, learning rate 0.02, all
/// clients per round, 30 s of simulated time, and a 3-layer tree of 20
/// groups whose aggregators run 5 rounds per root round.
pub fn table3_config(data_dir: &Path, distribution: Distribution, seeds: &[u64], output_dir: PathBuf) -> ExperimentConfig {
    ExperimentConfig {
        name: format!("table3-{distribution}"),
        output_dir,
        seeds: seeds.to_vec(),
        protocols: Protocol::ALL.to_vec(),
        dataset: DatasetSpec::Har { dir: Some(data_dir.to_path_buf()) },
        distribution,
        topology: TopologySpec::Random {
            nodes: 100,
            links: 300,
            delay: DelayDistribution::new(50.0, 50.0).expect("valid delay distribution"),
        },
        tree: TreeSpec { layer_ks: vec![20], frequencies: vec![5], ..TreeSpec::default() },
        sim: SimConfig {
            train: TrainConfig { learning_rate: 0.02, ..TrainConfig::default() },
            client_fraction: 1.0,
            budget_ms: 30_000.0,
            ..SimConfig::default()
        },
    }
}

#[derive(Clone, Debug)]
pub struct Table3Report {
    pub iid: ExperimentReport,
    pub noniid: ExperimentReport,
}

impl Table3Report {
    pub fn accuracy(&self, protocol: Protocol, noniid: bool) -> f64 {
        let r = if noniid { &self.noniid } else { &self.iid };
        r.row(protocol.name()).map_or(f64::NAN, |row| row.accuracy_mean())
    }

    pub fn per_seed(&self, protocol: Protocol, noniid: bool) -> Vec<f64> {
        let r = if noniid { &self.noniid } else { &self.iid };
        r.row(protocol.name()).map(|row| row.final_accuracies.clone()).unwrap_or_default()
    }

    pub fn hops(&self, protocol: Protocol, noniid: bool) -> f64 {
        let r = if noniid { &self.noniid } else { &self.iid };
        r.row(protocol.name()).map_or(f64::NAN, |row| row.hops_mean())
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("{:<12} {:>8} {:>8} {:>10} {:>10}\n", "method", "IID", "NonIID", "ref IID", "ref NonIID");
        for (p, ref_iid, ref_non) in REFERENCE_ACCURACY {
            out.push_str(&format!(
                "{:<12} {:>7.1}% {:>7.1}% {:>9.1}% {:>9.1}%\n",
                p.name(),
                100.0 * self.accuracy(p, false),
                100.0 * self.accuracy(p, true),
                100.0 * ref_iid,
                100.0 * ref_non
            ));
        }
        out
    }
}

/// Runs both distributions; CSVs land in `output_dir/iid` and
/// `output_dir/noniid-4`.
pub fn replicate_table3(data_dir: &Path, seeds: &[u64], output_dir: &Path) -> Result<Table3Report, ExperimentError> {
    // the directory given here wins over the environment variable
    let data = load_har(data_dir)?;
    let mut done = Vec::new();
    for dist in [Distribution::Iid, Distribution::NoniidK { classes_per_node: 4 }] {
        let cfg = table3_config(data_dir, dist, seeds, output_dir.join(dist.to_string()));
        cfg.validate()?;
        let variants: Vec<Variant> = cfg.protocols.iter().map(|&p| Variant::protocol(&cfg, p)).collect();
        let results = run_variants_on(&cfg, &data, &variants)?;
        done.push((cfg, results));
    }
    // nothing is written until both halves have run
    let mut reports = done.into_iter().map(|(cfg, results)| write_report(&cfg, results));
    let iid = reports.next().expect("two distributions")?;
    let noniid = reports.next().expect("two distributions")?;
    Ok(Table3Report { iid, noniid })
}
