//! Star-shaped federated averaging around the delay medoid of the network.
//!
//! Rounds are synchronous, so the timeline is computed directly: a round
//! lasts as long as its slowest client's download, training and upload.

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{local_update, update_seed, Micros, MetricsLog, MetricsRow, Protocol, SimConfig, SimError, SimInputs};
use crate::clustering::center_node;
use crate::model::{apply_averaged_deltas, evaluate, init_model, ModelParams};

pub(crate) fn run(inputs: &SimInputs, cfg: &SimConfig) -> Result<MetricsLog, SimError> {
    let clock = cfg.clock()?;
    let routes = inputs.routes;
    let n = inputs.graph.node_count();
    let nodes: Vec<usize> = (0..n).collect();
    let master = center_node(&nodes, routes.delays())?;
    let mut model = init_model(inputs.train.feature_count(), inputs.train.class_count(), cfg.seed);
    let mut counts = vec![0u64; n];
    let mut rng = ChaCha8Rng::seed_from_u64(update_seed(cfg.seed, usize::MAX, 0));
    let per_round = ((cfg.client_fraction * n as f64).round() as usize).clamp(1, n);

    let mut log = MetricsLog::new(Protocol::Federated);
    let mut hops = 0u64;
    let push_row = |log: &mut MetricsLog, round: usize, t: Micros, m: &ModelParams, hops: u64| {
        let e = evaluate(m, inputs.test)?;
        log.rows.push(MetricsRow { round, time_us: t, accuracy: e.accuracy, loss: e.loss, cum_hops: hops });
        if cfg.record_models {
            log.models.push(vec![m.clone()]);
        }
        Ok::<_, SimError>(())
    };
    push_row(&mut log, 0, 0, &model, 0)?;

    let mut start: Micros = 0;
    let mut round = 0;
    while cfg.max_rounds.map_or(true, |max| round < max) {
        let clients: Vec<usize> = if per_round == n {
            nodes.clone()
        } else {
            let mut c: Vec<usize> = index::sample(&mut rng, n, per_round).into_vec();
            c.sort_unstable();
            c
        };
        let timing: Vec<(Micros, Micros)> = clients
            .iter()
            .map(|&c| {
                let one_way = routes.delay(master, c).as_micros();
                let down = start + one_way;
                (down, down + clock.compute + one_way)
            })
            .collect();
        let end = timing.iter().map(|&(_, up)| up).max().unwrap_or(start);
        if end > clock.budget {
            // the round never completes; count what arrived in time
            for (&c, &(down, up)) in clients.iter().zip(&timing) {
                let h = u64::from(routes.hops(master, c));
                hops += h * (u64::from(down <= clock.budget) + u64::from(up <= clock.budget));
            }
            break;
        }
        let mut deltas = Vec::with_capacity(clients.len());
        for &c in &clients {
            deltas.push(local_update(inputs, cfg, c, counts[c], &model)?);
            counts[c] += 1;
            hops += 2 * u64::from(routes.hops(master, c));
        }
        model = apply_averaged_deltas(&model, &deltas)?;
        round += 1;
        push_row(&mut log, round, end, &model, hops)?;

        let next = end.max(start + clock.min_cycle);
        if next == start && cfg.max_rounds.is_none() {
            return Err(SimError::Stall { at_ms: start as f64 / 1000.0 });
        }
        start = next;
        if start > clock.budget {
            break;
        }
    }
    log.total_hops = hops;
    Ok(log)
}
