//! Protocols without a global model: devices training alone, and gossip
//! between physical neighbours. Both report the mean accuracy over devices
//! at fixed sampling ticks.

use std::sync::Arc;

use rayon::prelude::*;

use super::{
    evaluate_all, local_update, Clock, EventQueue, Micros, MetricsLog, MetricsRow, Protocol, SimConfig, SimError,
    SimInputs,
};
use crate::model::{apply_averaged_deltas, average_models, init_model, ModelParams};

const SAMPLE: u8 = 0;
const NORMAL: u8 = 1;

fn sample_times(clock: &Clock) -> Vec<Micros> {
    (0..).map(|k| k * clock.sample).take_while(|&t| t <= clock.budget).collect()
}

fn cycle(clock: &Clock) -> Result<Micros, SimError> {
    let c = clock.compute.max(clock.min_cycle);
    if c == 0 {
        return Err(SimError::Stall { at_ms: 0.0 });
    }
    Ok(c)
}

fn push_sample(
    log: &mut MetricsLog,
    cfg: &SimConfig,
    inputs: &SimInputs,
    index: usize,
    t: Micros,
    models: &[ModelParams],
    hops: u64,
) -> Result<(), SimError> {
    let refs: Vec<&ModelParams> = models.iter().collect();
    let evals = evaluate_all(&refs, inputs.test)?;
    let (accuracy, loss) = super::weighted_mean(&evals, &vec![1.0; evals.len()]);
    if cfg.record_models {
        log.models.push(models.to_vec());
    }
    log.rows.push(MetricsRow { round: index, time_us: t, accuracy, loss, cum_hops: hops });
    Ok(())
}

/// Each device repeats local updates on its own shard, one per cycle; an
/// update started at `t` lands at `t + compute`.
pub(crate) fn run_individual(inputs: &SimInputs, cfg: &SimConfig) -> Result<MetricsLog, SimError> {
    let clock = cfg.clock()?;
    let cycle = cycle(&clock)?;
    let samples = sample_times(&clock);
    let n = inputs.graph.node_count();
    let zero = init_model(inputs.train.feature_count(), inputs.train.class_count(), cfg.seed);

    // per device, its model at every sampling tick
    let trajectories = (0..n)
        .into_par_iter()
        .map(|node| {
            let mut model = zero.clone();
            let mut count = 0u64;
            let mut at_ticks = Vec::with_capacity(samples.len());
            for &s in &samples {
                // a sample sees updates that landed strictly before it
                while count * cycle + clock.compute < s {
                    let d = local_update(inputs, cfg, node, count, &model)?;
                    model = apply_averaged_deltas(&model, [&d])?;
                    count += 1;
                }
                at_ticks.push(model.clone());
            }
            Ok(at_ticks)
        })
        .collect::<Result<Vec<Vec<ModelParams>>, SimError>>()?;

    let mut log = MetricsLog::new(Protocol::Individual);
    for (index, &t) in samples.iter().enumerate() {
        let models: Vec<ModelParams> = trajectories.iter().map(|tr| tr[index].clone()).collect();
        push_sample(&mut log, cfg, inputs, index, t, &models, 0)?;
    }
    Ok(log)
}

enum Ev {
    Sample { index: usize },
    Cycle { node: usize },
    Trained { node: usize, base: Arc<ModelParams> },
    Arrive { to: usize, model: Arc<ModelParams> },
}

/// Every device trains once per cycle, then sends its model to each
/// physical neighbour; a received model is averaged with the local one.
pub(crate) fn run_gossip(inputs: &SimInputs, cfg: &SimConfig) -> Result<MetricsLog, SimError> {
    let clock = cfg.clock()?;
    let cycle = cycle(&clock)?;
    let g = inputs.graph;
    let n = g.node_count();
    let zero = init_model(inputs.train.feature_count(), inputs.train.class_count(), cfg.seed);
    let mut models = vec![zero; n];
    let mut counts = vec![0u64; n];
    let mut hops = 0u64;
    let mut log = MetricsLog::new(Protocol::Gossip);

    let mut queue = EventQueue::new();
    for (index, t) in sample_times(&clock).into_iter().enumerate() {
        queue.schedule(t, SAMPLE, Ev::Sample { index });
    }
    for node in 0..n {
        queue.schedule(0, NORMAL, Ev::Cycle { node });
    }

    while let Some((t, ev)) = queue.pop() {
        if t > clock.budget {
            break;
        }
        match ev {
            Ev::Sample { index } => push_sample(&mut log, cfg, inputs, index, t, &models, hops)?,
            Ev::Cycle { node } => {
                let base = Arc::new(models[node].clone());
                queue.schedule(t + clock.compute, NORMAL, Ev::Trained { node, base });
                if t + cycle <= clock.budget {
                    queue.schedule(t + cycle, NORMAL, Ev::Cycle { node });
                }
            }
            Ev::Trained { node, base } => {
                let d = local_update(inputs, cfg, node, counts[node], &base)?;
                counts[node] += 1;
                models[node] = apply_averaged_deltas(&models[node], [&d])?;
                let out = Arc::new(models[node].clone());
                for &(to, delay) in g.neighbors(node) {
                    queue.schedule(t + delay.as_micros(), NORMAL, Ev::Arrive { to, model: Arc::clone(&out) });
                }
            }
            Ev::Arrive { to, model } => {
                hops += 1;
                models[to] = average_models([&models[to], &*model])?;
            }
        }
    }
    log.total_hops = hops;
    Ok(log)
}
