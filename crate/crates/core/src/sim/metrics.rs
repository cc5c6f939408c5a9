use std::fmt::Write as _;
use std::path::Path;

use super::{Micros, Protocol};
use crate::model::ModelParams;

pub const CSV_HEADER: &str = "round,sim_time_ms,accuracy,loss,cum_hops";

/// One logged point: a completed round for tree and federated runs, a
/// sampling tick for the others.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricsRow {
    pub round: usize,
    pub time_us: Micros,
    pub accuracy: f64,
    pub loss: f64,
    pub cum_hops: u64,
}

impl MetricsRow {
    pub fn sim_time_ms(&self) -> f64 {
        self.time_us as f64 / 1000.0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricsLog {
    pub protocol: Protocol,
    pub rows: Vec<MetricsRow>,
    /// Hops delivered up to the end of the run, including messages of a
    /// round the budget cut short.
    pub total_hops: u64,
    /// Models behind each row when recording was requested: the global model
    /// for tree and federated runs, one model per device otherwise.
    pub models: Vec<Vec<ModelParams>>,
}

impl MetricsLog {
    pub(crate) fn new(protocol: Protocol) -> Self {
        MetricsLog { protocol, rows: Vec::new(), total_hops: 0, models: Vec::new() }
    }

    pub fn final_row(&self) -> Option<&MetricsRow> {
        self.rows.last()
    }

    pub fn final_accuracy(&self) -> f64 {
        self.rows.last().map_or(0.0, |r| r.accuracy)
    }

    /// Completed rounds (rows after the initial one).
    pub fn rounds(&self) -> usize {
        self.rows.len().saturating_sub(1)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{}.{:03},{},{},{}",
                r.round,
                r.time_us / 1000,
                r.time_us % 1000,
                r.accuracy,
                r.loss,
                r.cum_hops
            );
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> std::io::Result<()> {
        std::fs::write(path, self.to_csv())
    }
}

/// Total hops crossed by all messages of a run.
pub fn communication_cost(log: &MetricsLog) -> u64 {
    log.total_hops
}
