//! Round-based simulation of one coding group crossing a lossy DAG.
//!
//! Every node transmission is a broadcast: each successor link drops the
//! packet independently with its own loss probability. Time advances in
//! rounds. Within a round nodes transmit in topological order; whatever a
//! relay receives is buffered and only goes out in the next round. The run
//! stops the moment every sink holds `n` independent packets, or when the
//! round limit is reached.
//!
//! Three strategies are compared:
//!
//! * `no_coding_retransmit`: originals are forwarded verbatim along a routing
//!   tree (each node's first designated upstream is its parent). A node keeps
//!   resending a packet until every child has acknowledged it. Each copy a
//!   child receives triggers an acknowledgement that crosses the reverse link
//!   with the same loss; acknowledgements are not counted as transmissions.
//! * `fixed_rate`: the source emits ⌈r·b⌉ coded packets for each batch of `b`
//!   originals, and each relay recodes its per-round buffer of fresh packets
//!   into ⌈r·n_τ⌉ packets, with one predetermined `r` everywhere. Open loop:
//!   if a sink ends up short, it stays short.
//! * `adaptive`: the same data plane, but after every reporting epoch the
//!   controller recomputes each node's rate from that epoch's send/receive
//!   counters. When the network drains with a sink still short, the
//!   controller asks each coding node for ⌈r·D⌉ more packets, where `D` is
//!   the number of degrees of freedom it holds that a downstream node on the
//!   way to a short sink is missing (capped by that sink's deficit).
//!
//! Controller reports are lossless and not counted. Transmission efficiency is
//! `n` over the number of data packets sent by the source and relays.
//!
//! All randomness is drawn from per-node ChaCha streams derived from the run
//! seed, so a (config, seed) pair always produces the same result.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::controller::{Controller, ControllerError, NodeId, NodeReport, RateBounds, SuccessorAggregate};
use crate::gf::{Field, GfError};
use crate::rlnc::{recode_count, CodeRate, CodedPacket, CodingGroup, DecoderState, RlncError, SourceEncoder};

const LOSS_STREAM: u64 = u64::MAX;
const DATA_STREAM: u64 = u64::MAX - 1;

#[derive(Debug, Error)]
pub enum NetsimError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("efficiency undefined: no sink decoded")]
    Undefined,
    #[error("sink {sink} decoded data that differs from the source")]
    CorruptDecode { sink: String },
    #[error(transparent)]
    Coding(#[from] RlncError),
    #[error(transparent)]
    Controller(#[from] ControllerError),
    #[error(transparent)]
    Field(#[from] GfError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Source,
    Relay,
    Sink,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeSpec {
    pub id: String,
    pub role: Role,
    /// Nodes this one takes packets from; all predecessors when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub upstream: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkSpec {
    pub from: String,
    pub to: String,
    /// Drop probability. Drawn from the run's `loss_range` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub loss: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    NoCodingRetransmit,
    FixedRate,
    Adaptive,
}

impl Strategy {
    pub const ALL: [Strategy; 3] = [Strategy::NoCodingRetransmit, Strategy::FixedRate, Strategy::Adaptive];

    pub fn name(&self) -> &'static str {
        match self {
            Strategy::NoCodingRetransmit => "no_coding_retransmit",
            Strategy::FixedRate => "fixed_rate",
            Strategy::Adaptive => "adaptive",
        }
    }

    fn is_coding(&self) -> bool {
        !matches!(self, Strategy::NoCodingRetransmit)
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Strategy {
    type Err = NetsimError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Strategy::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| NetsimError::Config(format!("unknown strategy {s:?}")))
    }
}

fn default_m() -> u32 {
    8
}
fn default_payload_len() -> usize {
    4
}
fn default_epoch() -> usize {
    1
}
fn default_fixed_rate() -> CodeRate {
    CodeRate::new(5, 4).unwrap()
}
fn default_initial_rate() -> CodeRate {
    CodeRate::new(6, 5).unwrap()
}
fn default_loss_range() -> [f64; 2] {
    [0.05, 0.35]
}
fn default_source_batch() -> usize {
    16
}

/// Topology and run parameters in one document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub nodes: Vec<NodeSpec>,
    pub links: Vec<LinkSpec>,
    pub strategy: Strategy,
    /// Rate used everywhere by the `fixed_rate` strategy.
    #[serde(default = "default_fixed_rate")]
    pub fixed_rate: CodeRate,
    /// Coding-group size.
    pub n: usize,
    #[serde(default = "default_m")]
    pub m: u32,
    /// Payload symbols per packet.
    #[serde(rename = "L", default = "default_payload_len")]
    pub payload_len: usize,
    pub seed: u64,
    /// Round limit.
    pub rounds: usize,
    #[serde(default)]
    pub bounds: RateBounds,
    /// Rounds per controller reporting period.
    #[serde(default = "default_epoch")]
    pub epoch: usize,
    /// Adaptive rate before the first report arrives.
    #[serde(default = "default_initial_rate")]
    pub initial_rate: CodeRate,
    #[serde(default)]
    pub successor_aggregate: SuccessorAggregate,
    #[serde(default = "default_loss_range")]
    pub loss_range: [f64; 2],
    /// Originals the source releases per round.
    #[serde(default = "default_source_batch")]
    pub source_batch: usize,
    /// Byte length of user data before padding, when the group was built
    /// from a file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data_len: Option<usize>,
}

impl SimConfig {
    pub fn from_json(text: &str) -> Result<SimConfig, NetsimError> {
        let cfg: SimConfig =
            serde_json::from_str(text).map_err(|e| NetsimError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), NetsimError> {
        let bad = |msg: &str| Err(NetsimError::Config(msg.to_string()));
        if self.n == 0 {
            return bad("`n` must be at least 1");
        }
        if self.payload_len == 0 {
            return bad("`L` must be at least 1");
        }
        if self.rounds == 0 {
            return bad("`rounds` must be at least 1");
        }
        if self.epoch == 0 {
            return bad("`epoch` must be at least 1");
        }
        if self.source_batch == 0 {
            return bad("`source_batch` must be at least 1");
        }
        if self.bounds.min > self.bounds.max {
            return bad("`bounds.min` exceeds `bounds.max`");
        }
        let [lo, hi] = self.loss_range;
        if !(0.0..=1.0).contains(&lo) || !(0.0..=1.0).contains(&hi) || lo > hi {
            return bad("`loss_range` must be an interval inside [0, 1]");
        }
        Field::new(self.m)?;
        Network::build(self)?;
        Ok(())
    }
}

/// Validated topology with resolved loss probabilities.
#[derive(Debug, Clone)]
pub struct Network {
    ids: Vec<String>,
    roles: Vec<Role>,
    // effective links: (to, loss) for senders the receiver designates
    succ: Vec<Vec<(usize, f64)>>,
    order: Vec<usize>,
    source: usize,
    sinks: Vec<usize>,
    // sinks reachable from each node
    reach: Vec<Vec<usize>>,
    // routing-tree children for the retransmission baseline
    children: Vec<Vec<usize>>,
}

impl Network {
    pub fn build(cfg: &SimConfig) -> Result<Network, NetsimError> {
        let err = |m: String| NetsimError::Config(m);
        let mut index = BTreeMap::new();
        for (i, node) in cfg.nodes.iter().enumerate() {
            if index.insert(node.id.clone(), i).is_some() {
                return Err(err(format!("duplicate node id {:?}", node.id)));
            }
        }
        let ids: Vec<String> = cfg.nodes.iter().map(|n| n.id.clone()).collect();
        let roles: Vec<Role> = cfg.nodes.iter().map(|n| n.role).collect();
        let sources: Vec<usize> = (0..ids.len()).filter(|&i| roles[i] == Role::Source).collect();
        let [source] = sources[..] else {
            return Err(err(format!("expected exactly one source, found {}", sources.len())));
        };
        let sinks: Vec<usize> = (0..ids.len()).filter(|&i| roles[i] == Role::Sink).collect();
        if sinks.is_empty() {
            return Err(err("no sink nodes".into()));
        }

        let lookup = |id: &str, what: &str| {
            index
                .get(id)
                .copied()
                .ok_or_else(|| err(format!("{what} refers to unknown node {id:?}")))
        };
        let mut loss_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        loss_rng.set_stream(LOSS_STREAM);
        let [lo, hi] = cfg.loss_range;
        let mut preds: Vec<Vec<usize>> = vec![Vec::new(); ids.len()];
        let mut raw: Vec<(usize, usize, f64)> = Vec::new();
        let mut seen = BTreeSet::new();
        for link in &cfg.links {
            let from = lookup(&link.from, "link")?;
            let to = lookup(&link.to, "link")?;
            if from == to {
                return Err(err(format!("self-link on {:?}", link.from)));
            }
            if !seen.insert((from, to)) {
                return Err(err(format!("duplicate link {} -> {}", link.from, link.to)));
            }
            if roles[from] == Role::Sink {
                return Err(err(format!("sink {:?} cannot transmit", link.from)));
            }
            if roles[to] == Role::Source {
                return Err(err(format!("source {:?} cannot receive", link.to)));
            }
            let loss = match link.loss {
                Some(p) if (0.0..=1.0).contains(&p) => p,
                Some(p) => return Err(err(format!("loss {p} on {} -> {} outside [0, 1]", link.from, link.to))),
                None => lo + (hi - lo) * loss_rng.random::<f64>(),
            };
            preds[to].push(from);
            raw.push((from, to, loss));
        }

        let mut designated: Vec<Vec<usize>> = preds.clone();
        for (j, node) in cfg.nodes.iter().enumerate() {
            if let Some(up) = &node.upstream {
                let mut list = Vec::new();
                for id in up {
                    let i = lookup(id, "upstream list")?;
                    if !preds[j].contains(&i) {
                        return Err(err(format!("{:?} designates {id:?} without a link", node.id)));
                    }
                    list.push(i);
                }
                designated[j] = list;
            }
        }
        let mut succ: Vec<Vec<(usize, f64)>> = vec![Vec::new(); ids.len()];
        for &(from, to, loss) in &raw {
            if designated[to].contains(&from) {
                succ[from].push((to, loss));
            }
        }

        // Kahn's algorithm; stable in node order
        let mut indeg: Vec<usize> = vec![0; ids.len()];
        for s in &succ {
            for &(to, _) in s {
                indeg[to] += 1;
            }
        }
        let mut ready: VecDeque<usize> = (0..ids.len()).filter(|&i| indeg[i] == 0).collect();
        let mut order = Vec::with_capacity(ids.len());
        while let Some(i) = ready.pop_front() {
            order.push(i);
            for &(to, _) in &succ[i] {
                indeg[to] -= 1;
                if indeg[to] == 0 {
                    ready.push_back(to);
                }
            }
        }
        if order.len() != ids.len() {
            return Err(err("topology contains a cycle".into()));
        }

        let mut reach: Vec<Vec<usize>> = vec![Vec::new(); ids.len()];
        for &i in order.iter().rev() {
            let mut r: BTreeSet<usize> = BTreeSet::new();
            if roles[i] == Role::Sink {
                r.insert(i);
            }
            for &(to, _) in &succ[i] {
                r.extend(reach[to].iter().copied());
            }
            reach[i] = r.into_iter().collect();
        }
        for &s in &sinks {
            if !reach[source].contains(&s) {
                return Err(err(format!("sink {:?} is unreachable from the source", ids[s])));
            }
        }

        let mut children: Vec<Vec<usize>> = vec![Vec::new(); ids.len()];
        for j in 0..ids.len() {
            if let Some(&parent) = designated[j].first() {
                children[parent].push(j);
            }
        }

        Ok(Network {
            ids,
            roles,
            succ,
            order,
            source,
            sinks,
            reach,
            children,
        })
    }

    pub fn node_ids(&self) -> &[String] {
        &self.ids
    }

    /// Loss probability of every effective link, in (from, to) order.
    pub fn link_losses(&self) -> Vec<(String, String, f64)> {
        let mut out = Vec::new();
        for (from, s) in self.succ.iter().enumerate() {
            for &(to, loss) in s {
                out.push((self.ids[from].clone(), self.ids[to].clone(), loss));
            }
        }
        out
    }

    fn loss(&self, from: usize, to: usize) -> f64 {
        self.succ[from]
            .iter()
            .find(|&&(j, _)| j == to)
            .map(|&(_, p)| p)
            .expect("link exists")
    }

    fn is_coding_node(&self, i: usize) -> bool {
        self.roles[i] != Role::Sink && !self.succ[i].is_empty()
    }
}

/// Counters of one node over one round.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceRow {
    pub round: usize,
    pub node: String,
    pub sent: u64,
    pub received: u64,
    pub fresh: u64,
    pub rate: f64,
}

pub const TRACE_CSV_HEADER: &str = "round,node,sent,received,fresh,rate";

impl TraceRow {
    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            self.round, self.node, self.sent, self.received, self.fresh, self.rate
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunResult {
    pub n: usize,
    pub strategy: Strategy,
    pub seed: u64,
    pub total_sent: u64,
    /// Rounds simulated.
    pub rounds: usize,
    pub sinks: usize,
    pub decoded_sinks: usize,
    /// Round in which each sink reached full rank, in node order.
    pub decode_rounds: Vec<Option<usize>>,
    pub dnf: bool,
    pub trace: Vec<TraceRow>,
    /// Packets delivered to each node, in node order.
    pub delivered: Vec<u64>,
    /// Fresh packets accepted by each node, in node order.
    pub accepted_fresh: Vec<u64>,
}

pub const RESULT_CSV_HEADER: &str =
    "n,strategy,seed,total_sent,rounds,decoded_sinks,efficiency,normalized_efficiency";

/// Minimum packets needed (n) over data packets sent by source and relays.
/// For runs where only some sinks decoded, `n` is scaled by the decoded
/// fraction of sinks.
pub fn transmission_efficiency(result: &RunResult) -> Result<f64, NetsimError> {
    if result.decoded_sinks == 0 || result.total_sent == 0 {
        return Err(NetsimError::Undefined);
    }
    let useful = result.n as f64 * result.decoded_sinks as f64 / result.sinks as f64;
    Ok(useful / result.total_sent as f64)
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(|v| format!("{v:.6}")).unwrap_or_default()
}

impl RunResult {
    pub fn efficiency(&self) -> Option<f64> {
        transmission_efficiency(self).ok()
    }

    pub fn csv_line(&self, normalized: Option<f64>) -> String {
        format!(
            "{},{},{},{},{},{},{},{}",
            self.n,
            self.strategy,
            self.seed,
            self.total_sent,
            self.rounds,
            self.decoded_sinks,
            fmt_opt(self.efficiency()),
            fmt_opt(normalized)
        )
    }
}

struct NodeState {
    decoder: DecoderState,
    rng: ChaCha8Rng,
    outbox: VecDeque<CodedPacket>,
    buffer: Vec<CodedPacket>,
    rate: CodeRate,
    // retransmission baseline: round in which original x arrived
    held_since: Vec<Option<usize>>,
    // retransmission baseline: acked[x][c] once child c's ACK for x arrived
    acked: Vec<Vec<bool>>,
    epoch_sent: u64,
    epoch_received_from: BTreeMap<usize, u64>,
    round_sent: u64,
    round_received: u64,
    round_fresh: u64,
    delivered: u64,
    accepted_fresh: u64,
}

/// Runs one simulation with a random coding group drawn from the seed.
pub fn run(cfg: &SimConfig) -> Result<RunResult, NetsimError> {
    cfg.validate()?;
    let field = Field::new(cfg.m)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(DATA_STREAM);
    let group = CodingGroup::random(field, cfg.n, cfg.payload_len, &mut rng)?;
    run_group(cfg, group)
}

/// Runs one simulation carrying `group`. The group's shape overrides `n`
/// and `L` in the config.
pub fn run_group(cfg: &SimConfig, group: CodingGroup) -> Result<RunResult, NetsimError> {
    let mut cfg = cfg.clone();
    cfg.n = group.n();
    cfg.payload_len = group.payload_len();
    cfg.validate()?;
    Simulation::new(&cfg, group)?.run()
}

struct Simulation<'a> {
    cfg: &'a SimConfig,
    net: Network,
    field: Field,
    encoder: SourceEncoder,
    controller: Option<Controller>,
    nodes: Vec<NodeState>,
    released: usize,
    sink_done: Vec<Option<usize>>,
    total_sent: u64,
    trace: Vec<TraceRow>,
}

impl<'a> Simulation<'a> {
    fn new(cfg: &'a SimConfig, group: CodingGroup) -> Result<Self, NetsimError> {
        let net = Network::build(cfg)?;
        let field = group.field();
        let n = group.n();
        let initial = match cfg.strategy {
            Strategy::NoCodingRetransmit => CodeRate::ONE,
            Strategy::FixedRate => cfg.fixed_rate,
            Strategy::Adaptive => cfg.initial_rate,
        };
        let nodes = (0..net.ids.len())
            .map(|i| {
                let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
                rng.set_stream(i as u64);
                NodeState {
                    decoder: DecoderState::new(field, n, group.payload_len()),
                    rng,
                    outbox: VecDeque::new(),
                    buffer: Vec::new(),
                    rate: initial,
                    held_since: vec![None; n],
                    acked: vec![vec![false; net.children[i].len()]; n],
                    epoch_sent: 0,
                    epoch_received_from: BTreeMap::new(),
                    round_sent: 0,
                    round_received: 0,
                    round_fresh: 0,
                    delivered: 0,
                    accepted_fresh: 0,
                }
            })
            .collect();
        let controller = if cfg.strategy == Strategy::Adaptive {
            let successors = (0..net.ids.len())
                .filter(|&i| net.is_coding_node(i))
                .map(|i| (NodeId(i), net.succ[i].iter().map(|&(j, _)| NodeId(j)).collect()))
                .collect();
            Some(Controller::new(successors, cfg.bounds, cfg.successor_aggregate)?)
        } else {
            None
        };
        let sink_done = vec![None; net.ids.len()];
        Ok(Simulation {
            cfg,
            net,
            field,
            encoder: SourceEncoder::new(group),
            controller,
            nodes,
            released: 0,
            sink_done,
            total_sent: 0,
            trace: Vec::new(),
        })
    }

    fn n(&self) -> usize {
        self.encoder.group().n()
    }

    fn all_done(&self) -> bool {
        self.net.sinks.iter().all(|&s| self.sink_done[s].is_some())
    }

    fn downstream_done(&self, i: usize) -> bool {
        self.net.reach[i].iter().all(|&s| self.sink_done[s].is_some())
    }

    /// Whether nothing `i` sends can still help: every successor either has
    /// full rank or only leads to sinks that are done.
    fn successors_satisfied(&self, i: usize) -> bool {
        self.net.succ[i]
            .iter()
            .all(|&(j, _)| self.nodes[j].decoder.is_complete() || self.downstream_done(j))
    }

    fn run(mut self) -> Result<RunResult, NetsimError> {
        let strategy = self.cfg.strategy;
        let mut rounds = 0;
        let mut halted = false;
        for round in 1..=self.cfg.rounds {
            rounds = round;
            for node in &mut self.nodes {
                node.round_sent = 0;
                node.round_received = 0;
                node.round_fresh = 0;
            }
            self.release_source_batch()?;
            halted = if strategy.is_coding() {
                self.transmit_coded(round)?
            } else {
                self.transmit_uncoded(round)
            };
            self.record_trace(round);
            if halted {
                break;
            }
            if strategy.is_coding() {
                self.recode_buffers()?;
            }
            if strategy == Strategy::Adaptive && round % self.cfg.epoch == 0 {
                self.controller_epoch()?;
            }
            if self.drained() {
                let resumed = strategy == Strategy::Adaptive && self.refill()? > 0;
                if !resumed && (strategy != Strategy::NoCodingRetransmit || self.released == self.n()) {
                    // nothing left that could change any sink
                    break;
                }
            }
        }
        self.verify_sinks()?;
        let decode_rounds: Vec<Option<usize>> = self.net.sinks.iter().map(|&s| self.sink_done[s]).collect();
        let decoded_sinks = decode_rounds.iter().filter(|d| d.is_some()).count();
        Ok(RunResult {
            n: self.n(),
            strategy,
            seed: self.cfg.seed,
            total_sent: self.total_sent,
            rounds,
            sinks: self.net.sinks.len(),
            decoded_sinks,
            decode_rounds,
            dnf: !halted && decoded_sinks < self.net.sinks.len(),
            trace: self.trace,
            delivered: self.nodes.iter().map(|s| s.delivered).collect(),
            accepted_fresh: self.nodes.iter().map(|s| s.accepted_fresh).collect(),
        })
    }

    fn release_source_batch(&mut self) -> Result<(), NetsimError> {
        let n = self.n();
        if self.released >= n {
            return Ok(());
        }
        let batch = self.cfg.source_batch.min(n - self.released);
        let src = self.net.source;
        match self.cfg.strategy {
            Strategy::NoCodingRetransmit => {
                for x in self.released..self.released + batch {
                    let h = self.encoder.group().originals()[x].clone();
                    self.nodes[src].decoder.accept(&CodedPacket::uncoded(n, x, h))?;
                    self.nodes[src].held_since[x] = Some(0);
                }
            }
            _ => {
                let count = self.nodes[src].rate.emit_count(batch);
                let node = &mut self.nodes[src];
                let packets = self.encoder.next_packets(count, &mut node.rng)?;
                node.outbox.extend(packets);
            }
        }
        self.released += batch;
        Ok(())
    }

    /// Sends every queued coded packet. Returns true once all sinks decoded.
    fn transmit_coded(&mut self, round: usize) -> Result<bool, NetsimError> {
        for idx in 0..self.net.order.len() {
            let i = self.net.order[idx];
            let mut outbox = std::mem::take(&mut self.nodes[i].outbox);
            while let Some(packet) = outbox.pop_front() {
                if self.successors_satisfied(i) {
                    break;
                }
                let delivered = self.broadcast(i);
                for j in delivered {
                    self.deliver_coded(i, j, &packet, round)?;
                }
                if self.all_done() {
                    return Ok(true);
                }
            }
        }
        Ok(false)
    }

    /// One broadcast from `i`: counts the send and returns the successors
    /// that received it.
    fn broadcast(&mut self, i: usize) -> Vec<usize> {
        self.total_sent += 1;
        let node = &mut self.nodes[i];
        node.round_sent += 1;
        node.epoch_sent += 1;
        self.net.succ[i]
            .iter()
            .filter(|&&(_, loss)| node.rng.random::<f64>() >= loss)
            .map(|&(j, _)| j)
            .collect()
    }

    fn deliver_coded(&mut self, from: usize, to: usize, packet: &CodedPacket, round: usize) -> Result<(), NetsimError> {
        let role = self.net.roles[to];
        let node = &mut self.nodes[to];
        node.round_received += 1;
        node.delivered += 1;
        *node.epoch_received_from.entry(from).or_default() += 1;
        let fresh = !node.decoder.is_complete() && node.decoder.accept(packet)?;
        if fresh {
            node.round_fresh += 1;
            node.accepted_fresh += 1;
            match role {
                Role::Relay => node.buffer.push(packet.clone()),
                Role::Sink if node.decoder.is_complete() => self.sink_done[to] = Some(round),
                _ => {}
            }
        }
        Ok(())
    }

    fn transmit_uncoded(&mut self, round: usize) -> bool {
        let n = self.n();
        for idx in 0..self.net.order.len() {
            let i = self.net.order[idx];
            if self.net.children[i].is_empty() {
                continue;
            }
            for x in 0..n {
                if self.downstream_done(i) {
                    break;
                }
                let eligible = matches!(self.nodes[i].held_since[x], Some(r) if r < round);
                if !eligible || self.nodes[i].acked[x].iter().all(|&a| a) {
                    continue;
                }
                for j in self.broadcast(i) {
                    let node = &mut self.nodes[j];
                    node.round_received += 1;
                    node.delivered += 1;
                    *node.epoch_received_from.entry(i).or_default() += 1;
                    if node.held_since[x].is_none() {
                        node.held_since[x] = Some(round);
                        node.round_fresh += 1;
                        node.accepted_fresh += 1;
                        let h = self.encoder.group().originals()[x].clone();
                        node.decoder
                            .accept(&CodedPacket::uncoded(n, x, h))
                            .expect("shape matches group");
                        if self.net.roles[j] == Role::Sink && node.decoder.is_complete() {
                            self.sink_done[j] = Some(round);
                        }
                    }
                    // a child acknowledges every copy; the ACK crosses the
                    // same lossy link in reverse
                    if let Some(c) = self.net.children[i].iter().position(|&c| c == j) {
                        let loss = self.net.loss(i, j);
                        if self.nodes[j].rng.random::<f64>() >= loss {
                            self.nodes[i].acked[x][c] = true;
                        }
                    }
                }
                if self.all_done() {
                    return true;
                }
            }
        }
        false
    }

    fn recode_buffers(&mut self) -> Result<(), NetsimError> {
        for i in 0..self.nodes.len() {
            if self.net.roles[i] != Role::Relay || self.nodes[i].buffer.is_empty() {
                continue;
            }
            let node = &mut self.nodes[i];
            let buffer = std::mem::take(&mut node.buffer);
            if self.net.succ[i].is_empty() {
                continue;
            }
            let count = node.rate.emit_count(buffer.len());
            let out = recode_count(self.field, &buffer, count, &mut node.rng)?;
            node.outbox.extend(out);
        }
        Ok(())
    }

    fn controller_epoch(&mut self) -> Result<(), NetsimError> {
        let Some(controller) = &self.controller else {
            return Ok(());
        };
        let reports: Vec<NodeReport> = controller
            .coding_nodes()
            .map(|NodeId(i)| NodeReport {
                node_id: NodeId(i),
                sent: self.nodes[i].epoch_sent,
                received: self.net.succ[i]
                    .iter()
                    .map(|&(j, _)| {
                        (NodeId(j), self.nodes[j].epoch_received_from.get(&i).copied().unwrap_or(0))
                    })
                    .collect(),
            })
            .collect();
        let current = controller
            .coding_nodes()
            .map(|NodeId(i)| (NodeId(i), self.nodes[i].rate))
            .collect();
        for d in controller.update_epoch(&reports, &current)? {
            self.nodes[d.node_id.0].rate = d.rate;
        }
        for node in &mut self.nodes {
            node.epoch_sent = 0;
            node.epoch_received_from.clear();
        }
        Ok(())
    }

    fn drained(&self) -> bool {
        self.released == self.n()
            && self
                .nodes
                .iter()
                .all(|s| s.outbox.is_empty() && s.buffer.is_empty())
            && (self.cfg.strategy.is_coding() || !self.uncoded_pending())
    }

    fn uncoded_pending(&self) -> bool {
        (0..self.nodes.len()).any(|i| {
            !self.downstream_done(i)
                && (0..self.n()).any(|x| {
                    self.nodes[i].held_since[x].is_some() && self.nodes[i].acked[x].iter().any(|&a| !a)
                })
        })
    }

    /// Adaptive top-up after the network drained with a sink still short.
    /// Returns the number of packets scheduled.
    fn refill(&mut self) -> Result<usize, NetsimError> {
        let n = self.n();
        let deficit: BTreeMap<usize, usize> = self
            .net
            .sinks
            .iter()
            .filter(|&&s| self.sink_done[s].is_none())
            .map(|&s| (s, n - self.nodes[s].decoder.rank()))
            .collect();
        let cap: Vec<usize> = (0..self.nodes.len())
            .map(|j| {
                self.net.reach[j]
                    .iter()
                    .filter_map(|s| deficit.get(s).copied())
                    .max()
                    .unwrap_or(0)
            })
            .collect();
        let mut plan = Vec::new();
        for i in 0..self.nodes.len() {
            if !self.net.is_coding_node(i) {
                continue;
            }
            let want = self.net.succ[i]
                .iter()
                .filter(|&&(j, _)| cap[j] > 0)
                .map(|&(j, _)| {
                    let missing = if i == self.net.source {
                        n - self.nodes[j].decoder.rank()
                    } else {
                        self.nodes[j].decoder.missing_from(&self.nodes[i].decoder)
                    };
                    missing.min(cap[j])
                })
                .max()
                .unwrap_or(0);
            if want > 0 {
                plan.push((i, self.nodes[i].rate.emit_count(want)));
            }
        }
        let mut scheduled = 0;
        for (i, count) in plan {
            let node = &mut self.nodes[i];
            let packets = if i == self.net.source {
                self.encoder.next_packets(count, &mut node.rng)?
            } else {
                recode_count(self.field, &node.decoder.basis(), count, &mut node.rng)?
            };
            scheduled += packets.len();
            node.outbox.extend(packets);
        }
        Ok(scheduled)
    }

    fn record_trace(&mut self, round: usize) {
        for (i, node) in self.nodes.iter().enumerate() {
            self.trace.push(TraceRow {
                round,
                node: self.net.ids[i].clone(),
                sent: node.round_sent,
                received: node.round_received,
                fresh: node.round_fresh,
                rate: node.rate.as_f64(),
            });
        }
    }

    fn verify_sinks(&self) -> Result<(), NetsimError> {
        let originals = self.encoder.group().originals();
        for &s in &self.net.sinks {
            if self.sink_done[s].is_some() && self.nodes[s].decoder.decode()? != originals {
                return Err(NetsimError::CorruptDecode {
                    sink: self.net.ids[s].clone(),
                });
            }
        }
        Ok(())
    }
}

/// Per-run seed for seed slot `index` of a sweep.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    // splitmix64
    let mut z = master.wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug)]
pub struct SweepRow {
    pub n: usize,
    pub strategy: Strategy,
    pub seed: u64,
    pub outcome: Result<RunResult, NetsimError>,
    /// Efficiency divided by the retransmission baseline's at the same n and
    /// seed.
    pub normalized: Option<f64>,
}

impl SweepRow {
    pub fn csv_line(&self) -> String {
        match &self.outcome {
            Ok(r) => r.csv_line(self.normalized),
            Err(_) => format!("{},{},{},,,,,", self.n, self.strategy, self.seed),
        }
    }
}

/// Runs every (n, seed, strategy) cell. Seeds are derived from the config's
/// seed and the seed slot only, so all strategies and group sizes at one
/// slot see the same channel draws. Rows come back in (n, seed, strategy)
/// order regardless of how many threads ran them.
pub fn sweep(
    base: &SimConfig,
    n_values: &[usize],
    seeds: usize,
    strategies: &[Strategy],
) -> Result<Vec<SweepRow>, NetsimError> {
    if n_values.is_empty() {
        return Err(NetsimError::Config("no group sizes to sweep".into()));
    }
    if seeds == 0 || strategies.is_empty() {
        return Err(NetsimError::Config("sweep needs at least one seed and one strategy".into()));
    }
    let mut cells = Vec::new();
    for &n in n_values {
        for slot in 0..seeds {
            let seed = derive_seed(base.seed, slot as u64);
            for &strategy in strategies {
                cells.push((n, seed, strategy));
            }
        }
    }
    let mut rows: Vec<SweepRow> = cells
        .into_par_iter()
        .map(|(n, seed, strategy)| {
            let mut cfg = base.clone();
            cfg.n = n;
            cfg.seed = seed;
            cfg.strategy = strategy;
            cfg.data_len = None;
            SweepRow {
                n,
                strategy,
                seed,
                outcome: run(&cfg),
                normalized: None,
            }
        })
        .collect();

    let baseline: BTreeMap<(usize, u64), f64> = rows
        .iter()
        .filter(|r| r.strategy == Strategy::NoCodingRetransmit)
        .filter_map(|r| {
            let eff = r.outcome.as_ref().ok()?.efficiency()?;
            Some(((r.n, r.seed), eff))
        })
        .collect();
    for row in &mut rows {
        let eff = row.outcome.as_ref().ok().and_then(RunResult::efficiency);
        row.normalized = match (eff, baseline.get(&(row.n, row.seed))) {
            (Some(e), Some(b)) if *b > 0.0 => Some(e / b),
            _ => None,
        };
    }
    Ok(rows)
}

/// Seed-averaged normalized efficiency per (n, strategy). Cells without a
/// defined efficiency count as zero.
pub fn mean_normalized(rows: &[SweepRow]) -> BTreeMap<(usize, Strategy), f64> {
    let mut acc: BTreeMap<(usize, Strategy), (f64, usize)> = BTreeMap::new();
    for r in rows {
        let e = acc.entry((r.n, r.strategy)).or_default();
        e.0 += r.normalized.unwrap_or(0.0);
        e.1 += 1;
    }
    acc.into_iter().map(|(k, (s, c))| (k, s / c as f64)).collect()
}

/// Source, two first-stage relays, two second-stage relays, two sinks.
/// Each stage broadcasts to both nodes of the next; link losses are drawn
/// per seed from `loss_range`.
pub fn reference_config() -> SimConfig {
    let node = |id: &str, role| NodeSpec {
        id: id.into(),
        role,
        upstream: None,
    };
    let link = |from: &str, to: &str| LinkSpec {
        from: from.into(),
        to: to.into(),
        loss: None,
    };
    SimConfig {
        nodes: vec![
            node("s", Role::Source),
            node("a1", Role::Relay),
            node("a2", Role::Relay),
            node("b1", Role::Relay),
            node("b2", Role::Relay),
            node("t1", Role::Sink),
            node("t2", Role::Sink),
        ],
        links: vec![
            link("s", "a1"),
            link("s", "a2"),
            link("a1", "b1"),
            link("a1", "b2"),
            link("a2", "b1"),
            link("a2", "b2"),
            link("b1", "t1"),
            link("b1", "t2"),
            link("b2", "t1"),
            link("b2", "t2"),
        ],
        strategy: Strategy::Adaptive,
        fixed_rate: default_fixed_rate(),
        n: 32,
        m: default_m(),
        payload_len: default_payload_len(),
        seed: 7,
        rounds: 2000,
        bounds: RateBounds::default(),
        epoch: default_epoch(),
        initial_rate: default_initial_rate(),
        successor_aggregate: SuccessorAggregate::Max,
        loss_range: default_loss_range(),
        source_batch: default_source_batch(),
        data_len: None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single_link(loss: f64, strategy: Strategy, n: usize) -> SimConfig {
        SimConfig {
            nodes: vec![
                NodeSpec { id: "s".into(), role: Role::Source, upstream: None },
                NodeSpec { id: "t".into(), role: Role::Sink, upstream: None },
            ],
            links: vec![LinkSpec { from: "s".into(), to: "t".into(), loss: Some(loss) }],
            strategy,
            n,
            rounds: 500,
            ..reference_config()
        }
    }

    #[test]
    fn lossless_single_link() {
        for strategy in Strategy::ALL {
            let r = run(&single_link(0.0, strategy, 10)).unwrap();
            assert_eq!(r.total_sent, 10, "{strategy}");
            assert_eq!(r.decoded_sinks, 1);
            assert_eq!(transmission_efficiency(&r).unwrap(), 1.0);
        }
    }

    #[test]
    fn efficiency_arithmetic() {
        let mut r = run(&single_link(0.0, Strategy::Adaptive, 10)).unwrap();
        r.total_sent = 25;
        assert!((transmission_efficiency(&r).unwrap() - 0.4).abs() < 1e-15);
        r.decoded_sinks = 0;
        assert!(matches!(transmission_efficiency(&r), Err(NetsimError::Undefined)));
    }

    #[test]
    fn config_errors() {
        let mut cfg = single_link(0.1, Strategy::Adaptive, 4);
        cfg.nodes.push(NodeSpec { id: "island".into(), role: Role::Sink, upstream: None });
        let e = run(&cfg).unwrap_err().to_string();
        assert!(e.contains("unreachable"), "{e}");

        let mut cfg = single_link(0.1, Strategy::Adaptive, 4);
        cfg.links.push(LinkSpec { from: "t".into(), to: "s".into(), loss: None });
        assert!(run(&cfg).is_err());

        let mut cfg = single_link(1.5, Strategy::Adaptive, 4);
        assert!(run(&cfg).is_err());
        cfg.links[0].loss = Some(0.1);
        cfg.rounds = 0;
        assert!(run(&cfg).is_err());

        let text = r#"{"nodes": [], "links": [], "strategy": "adaptive", "n": 4, "seed": 1, "rounds": 5, "bogus": 1}"#;
        let e = SimConfig::from_json(text).unwrap_err().to_string();
        assert!(e.contains("bogus"), "{e}");
    }

    #[test]
    fn cycle_rejected() {
        let mut cfg = reference_config();
        cfg.links.push(LinkSpec { from: "b1".into(), to: "a1".into(), loss: Some(0.1) });
        let e = Network::build(&cfg).unwrap_err().to_string();
        assert!(e.contains("cycle"), "{e}");
    }

    #[test]
    fn drawn_losses_follow_seed() {
        let a = Network::build(&reference_config()).unwrap().link_losses();
        let b = Network::build(&reference_config()).unwrap().link_losses();
        assert_eq!(a, b);
        assert!(a.iter().all(|(_, _, l)| (0.05..=0.35).contains(l)));
        let mut other = reference_config();
        other.seed = 8;
        assert_ne!(Network::build(&other).unwrap().link_losses(), a);
    }

    #[test]
    fn strategy_names_roundtrip() {
        for s in Strategy::ALL {
            assert_eq!(s.name().parse::<Strategy>().unwrap(), s);
        }
        assert!("retransmit".parse::<Strategy>().is_err());
    }

    #[test]
    fn derived_seeds_differ() {
        let seeds: BTreeSet<u64> = (0..1000).map(|i| derive_seed(7, i)).collect();
        assert_eq!(seeds.len(), 1000);
    }
}
