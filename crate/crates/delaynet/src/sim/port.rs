//! Per-port queueing and scheduling state.
//!
//! A `PortSim` owns the bounded packet buffers of one output port and
//! implements queue selection for the four scheduling policies. The
//! packet currently in transmission is held by the engine, not by any
//! buffer, so a queue of capacity `k` holds at most `k` waiting packets.

use std::collections::VecDeque;

use crate::netgraph::{Policy, Port};

/// DRR quantum for a weight-1 queue, in bits (1500 byte equivalent).
const DRR_QUANTUM_BITS: f64 = 12000.0;
/// Floor keeping near-zero weights from stalling the DRR round scan.
const DRR_QUANTUM_MIN: f64 = 120.0;

#[derive(Debug, Clone, PartialEq)]
pub struct Packet {
    /// Index into the resolved path list; doubles as the flow id.
    pub path: usize,
    /// Size in bits.
    pub size: f64,
    /// Creation time at the source.
    pub birth: f64,
    /// Hop index the packet currently sits at.
    pub hop: usize,
}

#[derive(Debug)]
pub enum EnqueueOutcome {
    Accepted,
    /// Buffer was full; the packet is handed back for drop accounting.
    Dropped(Packet),
}

struct QueueRt {
    cap: usize,
    buf: VecDeque<Packet>,
}

enum SchedState {
    Fifo,
    /// Queue indices ordered by priority rank, best first.
    Sp { order: Vec<usize> },
    /// Per-queue virtual finish tags plus the port virtual time.
    Wfq { finish: Vec<f64>, weights: Vec<f64>, vtime: f64 },
    /// Deficit round robin over the stored queue order.
    Drr { deficit: Vec<f64>, quantum: Vec<f64>, cursor: usize, fresh: bool },
}

pub struct PortSim {
    queues: Vec<QueueRt>,
    sched: SchedState,
}

impl PortSim {
    pub fn new(port: &Port) -> Self {
        let queues = port
            .queues
            .iter()
            .map(|q| QueueRt { cap: q.size_packets as usize, buf: VecDeque::new() })
            .collect::<Vec<_>>();
        let sched = match port.policy {
            Policy::Fifo => SchedState::Fifo,
            Policy::Sp => {
                let mut order: Vec<usize> = (0..port.queues.len()).collect();
                order.sort_by_key(|&i| port.queues[i].priority);
                SchedState::Sp { order }
            }
            Policy::Wfq => SchedState::Wfq {
                finish: vec![0.0; port.queues.len()],
                weights: port.queues.iter().map(|q| q.weight).collect(),
                vtime: 0.0,
            },
            Policy::Drr => SchedState::Drr {
                deficit: vec![0.0; port.queues.len()],
                quantum: port
                    .queues
                    .iter()
                    .map(|q| (DRR_QUANTUM_BITS * q.weight).max(DRR_QUANTUM_MIN))
                    .collect(),
                cursor: 0,
                fresh: true,
            },
        };
        PortSim { queues, sched }
    }

    /// Number of packets waiting in the given queue.
    pub fn queue_len(&self, queue: usize) -> usize {
        self.queues[queue].buf.len()
    }

    pub fn all_empty(&self) -> bool {
        self.queues.iter().all(|q| q.buf.is_empty())
    }

    /// Drops iff the buffer is full.
    pub fn enqueue(&mut self, queue: usize, packet: Packet) -> EnqueueOutcome {
        let q = &mut self.queues[queue];
        if q.buf.len() >= q.cap {
            return EnqueueOutcome::Dropped(packet);
        }
        if q.buf.is_empty() {
            // A queue going busy joins the schedule at the current
            // virtual time; it earns no credit for its idle period.
            if let SchedState::Wfq { finish, vtime, .. } = &mut self.sched {
                finish[queue] = finish[queue].max(*vtime);
            }
        }
        q.buf.push_back(packet);
        EnqueueOutcome::Accepted
    }

    /// Removes and returns the head packet of a queue selected by
    /// [`select_next`].
    pub fn pop(&mut self, queue: usize) -> Packet {
        self.queues[queue].buf.pop_front().expect("pop from empty queue")
    }

    /// Picks the queue to serve next, or `None` when every queue is
    /// empty. Must be followed by [`pop`] on the returned index: WFQ
    /// finish tags and the DRR deficit are updated here.
    pub fn select_next(&mut self) -> Option<usize> {
        if self.all_empty() {
            if let SchedState::Drr { deficit, fresh, .. } = &mut self.sched {
                // An idle port restarts DRR with clean credit.
                deficit.iter_mut().for_each(|d| *d = 0.0);
                *fresh = true;
            }
            return None;
        }
        match &mut self.sched {
            SchedState::Fifo => Some(0),
            SchedState::Sp { order } => order
                .iter()
                .copied()
                .find(|&i| !self.queues[i].buf.is_empty()),
            SchedState::Wfq { finish, weights, vtime } => {
                let mut best: Option<(usize, f64)> = None;
                for (i, q) in self.queues.iter().enumerate() {
                    let Some(head) = q.buf.front() else { continue };
                    let cand = finish[i] + head.size / weights[i];
                    if best.map_or(true, |(_, b)| cand < b) {
                        best = Some((i, cand));
                    }
                }
                let (i, cand) = best.expect("non-empty port");
                finish[i] = cand;
                *vtime = cand;
                Some(i)
            }
            SchedState::Drr { deficit, quantum, cursor, fresh } => {
                loop {
                    let q = *cursor;
                    if self.queues[q].buf.is_empty() {
                        deficit[q] = 0.0;
                        *cursor = (q + 1) % self.queues.len();
                        *fresh = true;
                        continue;
                    }
                    if *fresh {
                        deficit[q] += quantum[q];
                        *fresh = false;
                    }
                    let head = self.queues[q].buf.front().unwrap().size;
                    if head <= deficit[q] + 1e-9 {
                        deficit[q] -= head;
                        return Some(q);
                    }
                    *cursor = (q + 1) % self.queues.len();
                    *fresh = true;
                }
            }
        }
    }
}
