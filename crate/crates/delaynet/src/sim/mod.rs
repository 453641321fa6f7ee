//! Packet-level discrete-event simulator.
//!
//! Produces ground-truth per-path mean delays for a scenario and a
//! traffic matrix. One run is strictly single-threaded; events are
//! processed in non-decreasing time with FIFO tie-breaking by insertion
//! order, so a run is fully determined by its seed.

mod port;

pub use port::{EnqueueOutcome, Packet, PortSim};

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use thiserror::Error;

use crate::netgraph::{resolve_paths, validate, Path, PathError, Scenario, TosAssignment, Violation};
use crate::seeds;
use crate::traffic::{next_interarrival, next_packet_size, FlowSpec, SizeDist, TrafficMatrix};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("scenario failed validation:{}", .0.iter().map(|v| format!("\n  - {v}")).collect::<String>())]
    InvalidScenario(Vec<Violation>),
    #[error("path resolution failed: {0}")]
    Paths(#[from] PathError),
    #[error("warmup {warmup} must be smaller than duration {duration}")]
    BadWarmup { warmup: f64, duration: f64 },
    #[error("traffic matrix is for {tm} nodes, scenario has {scenario}")]
    NodeCountMismatch { tm: usize, scenario: usize },
}

/// Simulation run parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub duration: f64,
    /// Packets born before this time are excluded from every statistic.
    pub warmup: f64,
    pub seed: u64,
    pub size_dist: SizeDist,
}

impl SimConfig {
    pub fn new(duration: f64, seed: u64) -> Self {
        SimConfig {
            duration,
            warmup: duration * 0.1,
            seed,
            size_dist: crate::traffic::DEFAULT_SIZE_DIST,
        }
    }
}

/// Post-warmup counters for one path.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PathStats {
    pub sent: u64,
    pub delivered: u64,
    pub dropped: u64,
    pub delay_sum: f64,
}

impl PathStats {
    /// Mean end-to-end delay over delivered packets; `None` when the
    /// path delivered nothing after warmup.
    pub fn mean_delay(&self) -> Option<f64> {
        (self.delivered > 0).then(|| self.delay_sum / self.delivered as f64)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimResult {
    /// Indexed like the resolved path list (ordered (src, dst) pairs).
    pub paths: Vec<PathStats>,
    /// Dropped / sent over all post-warmup packets.
    pub loss: f64,
    /// False if a link was ever left idle with a non-empty queue.
    pub work_conserving: bool,
}

struct EventEntry {
    time: f64,
    seq: u64,
    event: Event,
}

enum Event {
    /// Next packet of flow `flow` is born.
    NextPacket { flow: usize },
    /// The port's in-flight packet finished transmission.
    TxDone { port: usize },
}

impl PartialEq for EventEntry {
    fn eq(&self, other: &Self) -> bool {
        self.seq == other.seq
    }
}
impl Eq for EventEntry {}
impl PartialOrd for EventEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for EventEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        // BinaryHeap is a max-heap; reverse for earliest-first, with
        // insertion order breaking time ties.
        other
            .time
            .total_cmp(&self.time)
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

struct Engine<'a> {
    paths: &'a [Path],
    capacities: Vec<f64>,
    ports: Vec<PortSim>,
    in_flight: Vec<Option<Packet>>,
    heap: BinaryHeap<EventEntry>,
    seq: u64,
    flows: Vec<Option<(FlowSpec, ChaCha12Rng)>>,
    stats: Vec<PathStats>,
    warmup: f64,
    duration: f64,
    work_conserving: bool,
}

impl<'a> Engine<'a> {
    fn push(&mut self, time: f64, event: Event) {
        self.heap.push(EventEntry { time, seq: self.seq, event });
        self.seq += 1;
    }

    fn start_tx(&mut self, port: usize, now: f64) {
        if self.in_flight[port].is_some() {
            return;
        }
        match self.ports[port].select_next() {
            Some(queue) => {
                let packet = self.ports[port].pop(queue);
                let tx_time = packet.size / self.capacities[port];
                self.in_flight[port] = Some(packet);
                self.push(now + tx_time, Event::TxDone { port });
            }
            None => {
                if !self.ports[port].all_empty() {
                    self.work_conserving = false;
                }
            }
        }
    }

    /// Hands a packet to hop `hop` of its path at time `now`.
    fn arrive(&mut self, mut packet: Packet, hop: usize, now: f64) {
        let path = &self.paths[packet.path];
        if hop == path.elements.len() {
            if packet.birth >= self.warmup {
                let s = &mut self.stats[packet.path];
                s.delivered += 1;
                s.delay_sum += now - packet.birth;
            }
            return;
        }
        let (queue_ref, _) = path.elements[hop];
        packet.hop = hop;
        let port = queue_ref.port;
        match self.ports[port].enqueue(queue_ref.queue, packet) {
            EnqueueOutcome::Accepted => self.start_tx(port, now),
            EnqueueOutcome::Dropped(p) => {
                if p.birth >= self.warmup {
                    self.stats[p.path].dropped += 1;
                }
            }
        }
    }

    fn handle(&mut self, entry: EventEntry) {
        let now = entry.time;
        match entry.event {
            Event::NextPacket { flow } => {
                let (spec, rng) = self.flows[flow].as_mut().expect("flow scheduled");
                let size = next_packet_size(spec, rng);
                let dt = next_interarrival(spec, rng);
                let packet = Packet { path: flow, size, birth: now, hop: 0 };
                if now >= self.warmup {
                    self.stats[flow].sent += 1;
                }
                if now + dt <= self.duration {
                    self.push(now + dt, Event::NextPacket { flow });
                }
                self.arrive(packet, 0, now);
            }
            Event::TxDone { port } => {
                let packet = self.in_flight[port].take().expect("tx done without packet");
                let next_hop = packet.hop + 1;
                self.arrive(packet, next_hop, now);
                self.start_tx(port, now);
            }
        }
    }
}

/// Runs the simulation and gathers post-warmup per-path statistics.
pub fn run(
    scenario: &Scenario,
    tos: &TosAssignment,
    tm: &TrafficMatrix,
    cfg: &SimConfig,
) -> Result<SimResult, SimError> {
    let violations = validate(&scenario.topology);
    if !violations.is_empty() {
        return Err(SimError::InvalidScenario(violations));
    }
    if cfg.warmup >= cfg.duration {
        return Err(SimError::BadWarmup { warmup: cfg.warmup, duration: cfg.duration });
    }
    if tm.node_count() != scenario.topology.node_count {
        return Err(SimError::NodeCountMismatch {
            tm: tm.node_count(),
            scenario: scenario.topology.node_count,
        });
    }
    let paths = resolve_paths(&scenario.topology, &scenario.routing, tos)?;
    run_on_paths(scenario, &paths, tm, cfg)
}

/// Same as [`run`] but over pre-resolved paths, so callers that already
/// expanded the routing avoid doing it twice.
pub fn run_on_paths(
    scenario: &Scenario,
    paths: &[Path],
    tm: &TrafficMatrix,
    cfg: &SimConfig,
) -> Result<SimResult, SimError> {
    let topology = &scenario.topology;
    let ports: Vec<PortSim> = topology.ports.iter().map(PortSim::new).collect();
    let capacities: Vec<f64> = topology
        .ports
        .iter()
        .map(|p| topology.links[p.link].capacity)
        .collect();

    let mut engine = Engine {
        paths,
        capacities,
        in_flight: vec![None; ports.len()],
        ports,
        heap: BinaryHeap::new(),
        seq: 0,
        flows: Vec::with_capacity(paths.len()),
        stats: vec![PathStats::default(); paths.len()],
        warmup: cfg.warmup,
        duration: cfg.duration,
        work_conserving: true,
    };

    for path in paths {
        let rate = tm.get(path.src, path.dst);
        if rate > 0.0 {
            let spec = FlowSpec { rate_bits: rate, tos: path.tos, sizes: cfg.size_dist };
            let rng = ChaCha12Rng::seed_from_u64(seeds::derive2(
                cfg.seed,
                path.src as u64,
                path.dst as u64,
            ));
            engine.flows.push(Some((spec, rng)));
        } else {
            engine.flows.push(None);
        }
    }
    for flow in 0..engine.flows.len() {
        if let Some((spec, rng)) = engine.flows[flow].as_mut() {
            let t0 = next_interarrival(spec, rng);
            if t0 <= cfg.duration {
                engine.push(t0, Event::NextPacket { flow });
            }
        }
    }

    while let Some(entry) = engine.heap.pop() {
        engine.handle(entry);
    }

    let sent: u64 = engine.stats.iter().map(|s| s.sent).sum();
    let dropped: u64 = engine.stats.iter().map(|s| s.dropped).sum();
    let loss = if sent > 0 { dropped as f64 / sent as f64 } else { 0.0 };
    Ok(SimResult {
        paths: engine.stats,
        loss,
        work_conserving: engine.work_conserving,
    })
}
