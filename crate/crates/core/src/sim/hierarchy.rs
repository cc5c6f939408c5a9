//! Event-driven aggregation over an [`ETree`]: full tree rounds, or the
//! first-level groups running on their own.
//!
//! An aggregator that receives a model from its parent keeps it as its
//! reference and pushes it to its children. Once every child has answered
//! with a delta it applies their mean; it repeats this `a_l` times and then
//! sends `local − reference` upward. The top aggregator completes a round on
//! each aggregation.

use std::collections::BTreeMap;
use std::sync::Arc;

use super::{
    evaluate_all, local_update, weighted_mean, EventQueue, Micros, MetricsLog, MetricsRow, Protocol, SimConfig,
    SimError, SimInputs,
};
use crate::model::{apply_averaged_deltas, delta, init_model, ModelDelta, ModelParams};
use crate::topology::NodeId;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Mode {
    /// Rounds complete at the root; one row per round.
    Tree,
    /// Every first-level aggregator cycles independently; sampled rows.
    Groups,
}

const SAMPLE: u8 = 0;
const NORMAL: u8 = 1;

enum Ev {
    Start { node: NodeId },
    Model { layer: usize, to: NodeId, from: NodeId, model: Arc<ModelParams> },
    Trained { node: NodeId, parent: NodeId, base: Arc<ModelParams> },
    Delta { layer: usize, to: NodeId, from: NodeId, delta: ModelDelta },
    Sample { index: usize },
}

struct Agg {
    children: Vec<NodeId>,
    frequency: u32,
    parent: Option<NodeId>,
    reference: Arc<ModelParams>,
    local: ModelParams,
    count: u32,
    pending: BTreeMap<NodeId, ModelDelta>,
    round_start: Micros,
    rounds: usize,
}

struct Run<'a> {
    inputs: &'a SimInputs<'a>,
    cfg: &'a SimConfig,
    mode: Mode,
    top: usize,
    aggs: BTreeMap<(usize, NodeId), Agg>,
    queue: EventQueue<Ev>,
    counts: Vec<u64>,
    hops: u64,
    log: MetricsLog,
}

pub(crate) fn run(inputs: &SimInputs, cfg: &SimConfig, mode: Mode) -> Result<MetricsLog, SimError> {
    let clock = cfg.clock()?;
    let protocol = match mode {
        Mode::Tree => Protocol::Etree,
        Mode::Groups => Protocol::Grouped,
    };
    let tree = inputs.tree.ok_or(SimError::MissingTree(protocol))?;
    let top = match mode {
        Mode::Tree => tree.root_layer(),
        Mode::Groups => 1,
    };
    let zero = init_model(inputs.train.feature_count(), inputs.train.class_count(), cfg.seed);
    let shared = Arc::new(zero.clone());
    let mut aggs = BTreeMap::new();
    for l in 1..=top {
        for &node in tree.layer(l) {
            let frequency = if l == top { 1 } else { tree.frequency(l) };
            aggs.insert(
                (l, node),
                Agg {
                    children: tree.children(l, node),
                    frequency,
                    parent: None,
                    reference: Arc::clone(&shared),
                    local: zero.clone(),
                    count: 0,
                    pending: BTreeMap::new(),
                    round_start: 0,
                    rounds: 0,
                },
            );
        }
    }

    let mut run = Run {
        inputs,
        cfg,
        mode,
        top,
        aggs,
        queue: EventQueue::new(),
        counts: vec![0; inputs.graph.node_count()],
        hops: 0,
        log: MetricsLog::new(protocol),
    };
    match mode {
        Mode::Tree => run.log_root(0, 0, tree.root())?,
        Mode::Groups => {
            let mut t = 0;
            let mut index = 0;
            while t <= clock.budget {
                run.queue.schedule(t, SAMPLE, Ev::Sample { index });
                index += 1;
                t += clock.sample;
            }
        }
    }
    for &node in tree.layer(top) {
        run.queue.schedule(0, NORMAL, Ev::Start { node });
    }

    while let Some((t, ev)) = run.queue.pop() {
        if t > clock.budget {
            break;
        }
        run.handle(t, ev)?;
    }
    run.log.total_hops = run.hops;
    Ok(run.log)
}

impl Run<'_> {
    fn delay(&self, a: NodeId, b: NodeId) -> Micros {
        self.inputs.routes.delay(a, b).as_micros()
    }

    fn agg(&mut self, layer: usize, node: NodeId) -> &mut Agg {
        self.aggs.get_mut(&(layer, node)).expect("aggregator exists")
    }

    fn handle(&mut self, t: Micros, ev: Ev) -> Result<(), SimError> {
        match ev {
            Ev::Start { node } => {
                let top = self.top;
                self.agg(top, node).round_start = t;
                self.push(t, top, node);
            }
            Ev::Model { layer, to, from, model } => {
                self.hops += u64::from(self.inputs.routes.hops(from, to));
                if layer == 0 {
                    let at = t + self.cfg.clock()?.compute;
                    self.queue.schedule(at, NORMAL, Ev::Trained { node: to, parent: from, base: model });
                } else {
                    let agg = self.agg(layer, to);
                    agg.parent = Some(from);
                    agg.local = (*model).clone();
                    agg.reference = model;
                    agg.count = 0;
                    self.push(t, layer, to);
                }
            }
            Ev::Trained { node, parent, base } => {
                let d = local_update(self.inputs, self.cfg, node, self.counts[node], &base)?;
                self.counts[node] += 1;
                let at = t + self.delay(node, parent);
                self.queue.schedule(at, NORMAL, Ev::Delta { layer: 1, to: parent, from: node, delta: d });
            }
            Ev::Delta { layer, to, from, delta: d } => {
                self.hops += u64::from(self.inputs.routes.hops(from, to));
                let top = self.top;
                let agg = self.agg(layer, to);
                agg.pending.insert(from, d);
                if agg.pending.len() < agg.children.len() {
                    return Ok(());
                }
                agg.local = apply_averaged_deltas(&agg.local, agg.pending.values())?;
                agg.pending.clear();
                agg.count += 1;
                if layer == top {
                    self.round_done(t, to)?;
                } else if agg.count < agg.frequency {
                    self.push(t, layer, to);
                } else {
                    let parent = agg.parent.expect("non-top aggregator has a parent");
                    let up = delta(&agg.local, &agg.reference)?;
                    let at = t + self.delay(to, parent);
                    self.queue.schedule(at, NORMAL, Ev::Delta { layer: layer + 1, to: parent, from: to, delta: up });
                }
            }
            Ev::Sample { index } => self.sample(t, index)?,
        }
        Ok(())
    }

    /// Sends the aggregator's current model to each of its children.
    fn push(&mut self, t: Micros, layer: usize, node: NodeId) {
        let agg = &self.aggs[&(layer, node)];
        let model = Arc::new(agg.local.clone());
        let children = agg.children.clone();
        for c in children {
            let at = t + self.delay(node, c);
            let ev = Ev::Model { layer: layer - 1, to: c, from: node, model: Arc::clone(&model) };
            self.queue.schedule(at, NORMAL, ev);
        }
    }

    fn round_done(&mut self, t: Micros, node: NodeId) -> Result<(), SimError> {
        let clock = self.cfg.clock()?;
        let top = self.top;
        let agg = self.agg(top, node);
        agg.rounds += 1;
        let (rounds, started) = (agg.rounds, agg.round_start);
        if self.mode == Mode::Tree {
            self.log_root(rounds, t, node)?;
        }
        if self.cfg.max_rounds.is_some_and(|max| rounds >= max) {
            return Ok(());
        }
        let next = t.max(started + clock.min_cycle);
        if next == started && self.cfg.max_rounds.is_none() {
            return Err(SimError::Stall { at_ms: started as f64 / 1000.0 });
        }
        if next <= clock.budget {
            self.queue.schedule(next, NORMAL, Ev::Start { node });
        }
        Ok(())
    }

    fn log_root(&mut self, round: usize, t: Micros, root: NodeId) -> Result<(), SimError> {
        let model = &self.aggs[&(self.top, root)].local;
        let (accuracy, loss) = evaluate_all(&[model], self.inputs.test)?[0];
        if self.cfg.record_models {
            self.log.models.push(vec![model.clone()]);
        }
        self.log.rows.push(MetricsRow { round, time_us: t, accuracy, loss, cum_hops: self.hops });
        Ok(())
    }

    /// Device-weighted mean accuracy of the group models.
    fn sample(&mut self, t: Micros, index: usize) -> Result<(), SimError> {
        let groups: Vec<&Agg> = self.aggs.values().collect();
        let models: Vec<&ModelParams> = groups.iter().map(|a| &a.local).collect();
        let weights: Vec<f64> = groups.iter().map(|a| a.children.len() as f64).collect();
        let evals = evaluate_all(&models, self.inputs.test)?;
        let (accuracy, loss) = weighted_mean(&evals, &weights);
        if self.cfg.record_models {
            let tree = self.inputs.tree.expect("checked before the run");
            let per_device = tree
                .layer(0)
                .iter()
                .map(|&n| self.aggs[&(1, tree.parents(0, n)[0])].local.clone())
                .collect();
            self.log.models.push(per_device);
        }
        self.log.rows.push(MetricsRow { round: index, time_us: t, accuracy, loss, cum_hops: self.hops });
        Ok(())
    }
}
