//! Topology data model: nodes, output ports with their queues, links,
//! routing tables and per-flow ToS assignments.
//!
//! Every directed link is fed by exactly one output port on its source
//! node. A port owns an ordered list of queues and a scheduling policy;
//! the port's ToS map decides which queue a flow's packets join.

mod fileio;
mod random;

pub use fileio::{read_topology_file, write_topology_file, TopologyFileError};
pub use random::{random_scenario, ScenarioError};

use thiserror::Error;

/// Number of Type-of-Service classes flows can be labelled with.
pub const TOS_CLASSES: usize = 10;

/// Admissible queue capacities, in packets.
pub const QUEUE_SIZES: [u32; 3] = [16, 32, 64];

pub type NodeId = usize;
pub type LinkId = usize;
pub type PortId = usize;

/// Queue scheduling policy of an output port.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Policy {
    Fifo,
    Sp,
    Wfq,
    Drr,
}

impl Policy {
    pub const ALL: [Policy; 4] = [Policy::Fifo, Policy::Sp, Policy::Wfq, Policy::Drr];

    /// Index used for one-hot feature encoding and binary serialization.
    pub fn index(self) -> usize {
        match self {
            Policy::Fifo => 0,
            Policy::Sp => 1,
            Policy::Wfq => 2,
            Policy::Drr => 3,
        }
    }

    pub fn from_index(i: usize) -> Option<Policy> {
        Policy::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Policy::Fifo => "FIFO",
            Policy::Sp => "SP",
            Policy::Wfq => "WFQ",
            Policy::Drr => "DRR",
        }
    }

    pub fn parse(s: &str) -> Option<Policy> {
        match s.to_ascii_uppercase().as_str() {
            "FIFO" => Some(Policy::Fifo),
            "SP" => Some(Policy::Sp),
            "WFQ" => Some(Policy::Wfq),
            "DRR" => Some(Policy::Drr),
            _ => None,
        }
    }

    /// Whether queue weights take part in scheduling under this policy.
    pub fn uses_weights(self) -> bool {
        matches!(self, Policy::Wfq | Policy::Drr)
    }
}

/// Configuration of a single queue on an output port.
#[derive(Debug, Clone, PartialEq)]
pub struct QueueConfig {
    /// Buffer capacity in packets; one of [`QUEUE_SIZES`].
    pub size_packets: u32,
    /// Priority rank, 0 = highest. Ranks within a port form 0..k-1.
    pub priority: u32,
    /// Scheduling weight in [0, 1]. Within a WFQ/DRR port weights sum to 1.
    pub weight: f64,
}

/// An output port: the queues feeding one directed link.
#[derive(Debug, Clone, PartialEq)]
pub struct Port {
    /// Node that owns the port; must equal the fed link's source node.
    pub node: NodeId,
    /// The directed link this port injects traffic into.
    pub link: LinkId,
    pub policy: Policy,
    pub queues: Vec<QueueConfig>,
    /// ToS class -> queue index (into `queues`).
    pub tos_map: [usize; TOS_CLASSES],
}

/// A directed link between two nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct Link {
    pub src: NodeId,
    pub dst: NodeId,
    /// Bits per time unit.
    pub capacity: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Topology {
    pub node_count: usize,
    pub links: Vec<Link>,
    pub ports: Vec<Port>,
}

/// Next-hop routing: `next_hop(node, dst)` for every node/destination pair.
#[derive(Debug, Clone, PartialEq)]
pub struct RoutingTable {
    n: usize,
    next: Vec<Option<NodeId>>,
}

impl RoutingTable {
    pub fn new(node_count: usize) -> Self {
        RoutingTable {
            n: node_count,
            next: vec![None; node_count * node_count],
        }
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn set(&mut self, node: NodeId, dst: NodeId, next_hop: NodeId) {
        self.next[node * self.n + dst] = Some(next_hop);
    }

    pub fn next_hop(&self, node: NodeId, dst: NodeId) -> Option<NodeId> {
        self.next[node * self.n + dst]
    }
}

/// ToS class assigned to each (src, dst) flow.
#[derive(Debug, Clone, PartialEq)]
pub struct TosAssignment {
    n: usize,
    tos: Vec<u8>,
}

impl TosAssignment {
    pub fn new(node_count: usize) -> Self {
        TosAssignment {
            n: node_count,
            tos: vec![0; node_count * node_count],
        }
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn set(&mut self, src: NodeId, dst: NodeId, tos: u8) {
        debug_assert!((tos as usize) < TOS_CLASSES);
        self.tos[src * self.n + dst] = tos;
    }

    pub fn get(&self, src: NodeId, dst: NodeId) -> u8 {
        self.tos[src * self.n + dst]
    }
}

/// Reference to one queue: port index plus queue index within the port.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct QueueRef {
    pub port: PortId,
    pub queue: usize,
}

/// A routed flow, expanded into the (queue, link) pairs it traverses.
#[derive(Debug, Clone, PartialEq)]
pub struct Path {
    pub src: NodeId,
    pub dst: NodeId,
    pub tos: u8,
    pub elements: Vec<(QueueRef, LinkId)>,
}

/// Topology plus the routing that operates on it.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub topology: Topology,
    pub routing: RoutingTable,
}

/// One invariant violation found by [`validate`], with a locator.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Violation {
    #[error("topology has no nodes")]
    EmptyTopology,
    #[error("link {link}: capacity {capacity} is not positive")]
    NonPositiveCapacity { link: LinkId, capacity: f64 },
    #[error("link {link}: endpoint out of range (src {src}, dst {dst}, {nodes} nodes)")]
    LinkEndpointOutOfRange {
        link: LinkId,
        src: NodeId,
        dst: NodeId,
        nodes: usize,
    },
    #[error("link {link}: self-loop at node {node}")]
    SelfLoop { link: LinkId, node: NodeId },
    #[error("port {port}: references unknown link {link}")]
    PortUnknownLink { port: PortId, link: LinkId },
    #[error("port {port}: owned by node {node} but feeds a link leaving node {link_src}")]
    PortNodeMismatch {
        port: PortId,
        node: NodeId,
        link_src: NodeId,
    },
    #[error("link {link}: fed by no port")]
    LinkWithoutPort { link: LinkId },
    #[error("link {link}: fed by multiple ports ({first} and {second})")]
    LinkMultiplePorts {
        link: LinkId,
        first: PortId,
        second: PortId,
    },
    #[error("port {port}: FIFO requires exactly 1 queue, found {count}")]
    FifoQueueCount { port: PortId, count: usize },
    #[error("port {port}: {policy} requires 2-5 queues, found {count}")]
    QueueCountRange {
        port: PortId,
        policy: &'static str,
        count: usize,
    },
    #[error("port {port} queue {queue}: size {size} not one of 16/32/64 packets")]
    BadQueueSize {
        port: PortId,
        queue: usize,
        size: u32,
    },
    #[error("port {port}: queue priorities are not a permutation of 0..{count}")]
    BadPriorities { port: PortId, count: usize },
    #[error("port {port} queue {queue}: weight {weight} outside [0, 1]")]
    WeightOutOfRange {
        port: PortId,
        queue: usize,
        weight: f64,
    },
    #[error("port {port}: queue weights sum to {sum}, expected 1")]
    WeightSum { port: PortId, sum: f64 },
    #[error("port {port}: ToS {tos} maps to queue {index}, but the port has {count} queues")]
    TosMapOutOfRange {
        port: PortId,
        tos: usize,
        index: usize,
        count: usize,
    },
}

/// Errors raised while expanding routing into paths.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum PathError {
    #[error("no next hop from node {node} towards {dst}")]
    MissingNextHop { node: NodeId, dst: NodeId },
    #[error("routing loop detected on flow {src}->{dst} (hop count exceeded {limit})")]
    RoutingLoop {
        src: NodeId,
        dst: NodeId,
        limit: usize,
    },
    #[error("no link from node {from} to node {to} (flow {src}->{dst})")]
    MissingLink {
        from: NodeId,
        to: NodeId,
        src: NodeId,
        dst: NodeId,
    },
    #[error("unknown link id {link}")]
    UnknownLink { link: LinkId },
}

const WEIGHT_SUM_TOL: f64 = 1e-9;

/// Checks every structural invariant; an empty result means the topology
/// is valid.
pub fn validate(topology: &Topology) -> Vec<Violation> {
    let mut out = Vec::new();
    if topology.node_count == 0 {
        out.push(Violation::EmptyTopology);
        return out;
    }
    let n = topology.node_count;
    for (id, link) in topology.links.iter().enumerate() {
        if link.src >= n || link.dst >= n {
            out.push(Violation::LinkEndpointOutOfRange {
                link: id,
                src: link.src,
                dst: link.dst,
                nodes: n,
            });
        } else if link.src == link.dst {
            out.push(Violation::SelfLoop {
                link: id,
                node: link.src,
            });
        }
        if !(link.capacity > 0.0) {
            out.push(Violation::NonPositiveCapacity {
                link: id,
                capacity: link.capacity,
            });
        }
    }
    // Port <-> link bijection.
    let mut feeder: Vec<Option<PortId>> = vec![None; topology.links.len()];
    for (pid, port) in topology.ports.iter().enumerate() {
        match topology.links.get(port.link) {
            None => out.push(Violation::PortUnknownLink {
                port: pid,
                link: port.link,
            }),
            Some(link) => {
                if port.node != link.src {
                    out.push(Violation::PortNodeMismatch {
                        port: pid,
                        node: port.node,
                        link_src: link.src,
                    });
                }
                match feeder[port.link] {
                    None => feeder[port.link] = Some(pid),
                    Some(first) => out.push(Violation::LinkMultiplePorts {
                        link: port.link,
                        first,
                        second: pid,
                    }),
                }
            }
        }
    }
    for (lid, f) in feeder.iter().enumerate() {
        if f.is_none() {
            out.push(Violation::LinkWithoutPort { link: lid });
        }
    }
    for (pid, port) in topology.ports.iter().enumerate() {
        let count = port.queues.len();
        match port.policy {
            Policy::Fifo if count != 1 => {
                out.push(Violation::FifoQueueCount { port: pid, count })
            }
            Policy::Sp | Policy::Wfq | Policy::Drr if !(2..=5).contains(&count) => {
                out.push(Violation::QueueCountRange {
                    port: pid,
                    policy: port.policy.name(),
                    count,
                })
            }
            _ => {}
        }
        let mut seen = vec![false; count];
        let mut priorities_ok = true;
        for (qi, q) in port.queues.iter().enumerate() {
            if !QUEUE_SIZES.contains(&q.size_packets) {
                out.push(Violation::BadQueueSize {
                    port: pid,
                    queue: qi,
                    size: q.size_packets,
                });
            }
            if !(0.0..=1.0).contains(&q.weight) {
                out.push(Violation::WeightOutOfRange {
                    port: pid,
                    queue: qi,
                    weight: q.weight,
                });
            }
            match seen.get_mut(q.priority as usize) {
                Some(slot) if !*slot => *slot = true,
                _ => priorities_ok = false,
            }
        }
        if !priorities_ok {
            out.push(Violation::BadPriorities { port: pid, count });
        }
        if port.policy.uses_weights() {
            let sum: f64 = port.queues.iter().map(|q| q.weight).sum();
            if (sum - 1.0).abs() > WEIGHT_SUM_TOL {
                out.push(Violation::WeightSum { port: pid, sum });
            }
        }
        for (tos, &idx) in port.tos_map.iter().enumerate() {
            if idx >= count {
                out.push(Violation::TosMapOutOfRange {
                    port: pid,
                    tos,
                    index: idx,
                    count,
                });
            }
        }
    }
    out
}

impl Topology {
    /// Port feeding the given link, if any.
    pub fn port_of_link(&self, link: LinkId) -> Option<PortId> {
        self.ports.iter().position(|p| p.link == link)
    }

    /// Link from `src` to `dst`, if any.
    pub fn link_between(&self, src: NodeId, dst: NodeId) -> Option<LinkId> {
        self.links
            .iter()
            .position(|l| l.src == src && l.dst == dst)
    }
}

/// Queues feeding a link, highest priority (rank 0) first.
pub fn queues_of_link(topology: &Topology, link: LinkId) -> Result<Vec<QueueRef>, PathError> {
    if link >= topology.links.len() {
        return Err(PathError::UnknownLink { link });
    }
    let port = topology
        .port_of_link(link)
        .ok_or(PathError::UnknownLink { link })?;
    let mut refs: Vec<QueueRef> = (0..topology.ports[port].queues.len())
        .map(|queue| QueueRef { port, queue })
        .collect();
    refs.sort_by_key(|r| topology.ports[port].queues[r.queue].priority);
    Ok(refs)
}

/// Expands the routing table into one [`Path`] per ordered (src, dst)
/// pair, selecting the queue at each hop through the port's ToS map.
pub fn resolve_paths(
    topology: &Topology,
    routing: &RoutingTable,
    tos: &TosAssignment,
) -> Result<Vec<Path>, PathError> {
    let n = topology.node_count;
    let mut paths = Vec::with_capacity(n.saturating_mul(n.saturating_sub(1)));
    for src in 0..n {
        for dst in 0..n {
            if src == dst {
                continue;
            }
            let flow_tos = tos.get(src, dst);
            let mut elements = Vec::new();
            let mut cur = src;
            while cur != dst {
                if elements.len() >= n {
                    return Err(PathError::RoutingLoop {
                        src,
                        dst,
                        limit: n,
                    });
                }
                let next = routing
                    .next_hop(cur, dst)
                    .ok_or(PathError::MissingNextHop { node: cur, dst })?;
                let link = topology.link_between(cur, next).ok_or(PathError::MissingLink {
                    from: cur,
                    to: next,
                    src,
                    dst,
                })?;
                let port = topology
                    .port_of_link(link)
                    .ok_or(PathError::UnknownLink { link })?;
                let queue = topology.ports[port].tos_map[flow_tos as usize];
                elements.push((QueueRef { port, queue }, link));
                cur = next;
            }
            paths.push(Path {
                src,
                dst,
                tos: flow_tos,
                elements,
            });
        }
    }
    Ok(paths)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Two nodes joined by a pair of directed links with FIFO ports.
    pub(crate) fn two_node_topology() -> Topology {
        let mut t = Topology {
            node_count: 2,
            links: vec![
                Link { src: 0, dst: 1, capacity: 1000.0 },
                Link { src: 1, dst: 0, capacity: 1000.0 },
            ],
            ports: Vec::new(),
        };
        for (i, link) in t.links.iter().enumerate() {
            t.ports.push(Port {
                node: link.src,
                link: i,
                policy: Policy::Fifo,
                queues: vec![QueueConfig { size_packets: 32, priority: 0, weight: 1.0 }],
                tos_map: [0; TOS_CLASSES],
            });
        }
        t
    }

    #[test]
    fn empty_topology_is_flagged() {
        let violations = validate(&Topology::default());
        assert_eq!(violations, vec![Violation::EmptyTopology]);
    }

    #[test]
    fn two_node_topology_is_valid() {
        assert!(validate(&two_node_topology()).is_empty());
    }

    #[test]
    fn fifo_with_three_queues_is_flagged() {
        let mut t = two_node_topology();
        let q = t.ports[0].queues[0].clone();
        t.ports[0].queues = vec![
            QueueConfig { priority: 0, ..q.clone() },
            QueueConfig { priority: 1, ..q.clone() },
            QueueConfig { priority: 2, ..q },
        ];
        let violations = validate(&t);
        assert!(violations.contains(&Violation::FifoQueueCount { port: 0, count: 3 }));
    }

    #[test]
    fn wfq_weight_sum_is_checked() {
        let mut t = two_node_topology();
        t.ports[0].policy = Policy::Wfq;
        t.ports[0].queues = vec![
            QueueConfig { size_packets: 16, priority: 0, weight: 0.5 },
            QueueConfig { size_packets: 16, priority: 1, weight: 0.6 },
        ];
        let violations = validate(&t);
        assert!(violations
            .iter()
            .any(|v| matches!(v, Violation::WeightSum { port: 0, sum } if (sum - 1.1).abs() < 1e-12)));
    }

    #[test]
    fn duplicate_priorities_are_flagged() {
        let mut t = two_node_topology();
        t.ports[0].policy = Policy::Sp;
        t.ports[0].queues = vec![
            QueueConfig { size_packets: 16, priority: 1, weight: 0.5 },
            QueueConfig { size_packets: 16, priority: 1, weight: 0.5 },
        ];
        assert!(validate(&t).contains(&Violation::BadPriorities { port: 0, count: 2 }));
    }

    #[test]
    fn link_without_port_is_flagged() {
        let mut t = two_node_topology();
        t.ports.pop();
        assert!(validate(&t).contains(&Violation::LinkWithoutPort { link: 1 }));
    }

    #[test]
    fn single_hop_path_resolves() {
        let t = two_node_topology();
        let mut routing = RoutingTable::new(2);
        routing.set(0, 1, 1);
        routing.set(1, 0, 0);
        let mut tos = TosAssignment::new(2);
        tos.set(0, 1, 3);
        let paths = resolve_paths(&t, &routing, &tos).unwrap();
        assert_eq!(paths.len(), 2);
        assert_eq!(paths[0].elements, vec![(QueueRef { port: 0, queue: 0 }, 0)]);
        assert_eq!(paths[0].tos, 3);
    }

    #[test]
    fn triangle_path_has_adjacent_links() {
        // Triangle 0-1-2; route 0->2 via 1.
        let mut t = Topology {
            node_count: 3,
            links: Vec::new(),
            ports: Vec::new(),
        };
        for &(src, dst) in &[(0, 1), (1, 0), (1, 2), (2, 1), (0, 2), (2, 0)] {
            t.links.push(Link { src, dst, capacity: 500.0 });
        }
        for (i, link) in t.links.iter().enumerate() {
            t.ports.push(Port {
                node: link.src,
                link: i,
                policy: Policy::Fifo,
                queues: vec![QueueConfig { size_packets: 16, priority: 0, weight: 1.0 }],
                tos_map: [0; TOS_CLASSES],
            });
        }
        let mut routing = RoutingTable::new(3);
        for src in 0..3 {
            for dst in 0..3 {
                if src != dst {
                    routing.set(src, dst, dst);
                }
            }
        }
        routing.set(0, 2, 1); // force the detour
        let tos = TosAssignment::new(3);
        let paths = resolve_paths(&t, &routing, &tos).unwrap();
        let p02 = paths.iter().find(|p| p.src == 0 && p.dst == 2).unwrap();
        assert_eq!(p02.elements.len(), 2);
        let (_, l0) = p02.elements[0];
        let (_, l1) = p02.elements[1];
        assert_eq!(t.links[l0].dst, t.links[l1].src);
    }

    #[test]
    fn routing_loop_is_detected() {
        // Triangle where traffic for node 2 bounces between 0 and 1.
        let mut t = Topology {
            node_count: 3,
            links: Vec::new(),
            ports: Vec::new(),
        };
        for &(src, dst) in &[(0, 1), (1, 0), (1, 2), (2, 1), (0, 2), (2, 0)] {
            t.links.push(Link { src, dst, capacity: 500.0 });
        }
        for (i, link) in t.links.iter().enumerate() {
            t.ports.push(Port {
                node: link.src,
                link: i,
                policy: Policy::Fifo,
                queues: vec![QueueConfig { size_packets: 16, priority: 0, weight: 1.0 }],
                tos_map: [0; TOS_CLASSES],
            });
        }
        let mut routing = RoutingTable::new(3);
        for src in 0..3 {
            for dst in 0..3 {
                if src != dst {
                    routing.set(src, dst, dst);
                }
            }
        }
        routing.set(0, 2, 1);
        routing.set(1, 2, 0);
        let err = resolve_paths(&t, &routing, &TosAssignment::new(3)).unwrap_err();
        assert!(matches!(err, PathError::RoutingLoop { src: 0, dst: 2, .. }));
    }

    #[test]
    fn missing_next_hop_is_an_error() {
        let t = two_node_topology();
        let routing = RoutingTable::new(2);
        let err = resolve_paths(&t, &routing, &TosAssignment::new(2)).unwrap_err();
        assert_eq!(err, PathError::MissingNextHop { node: 0, dst: 1 });
    }

    #[test]
    fn queues_of_link_sorted_by_priority() {
        let mut t = two_node_topology();
        t.ports[0].policy = Policy::Sp;
        t.ports[0].queues = vec![
            QueueConfig { size_packets: 16, priority: 2, weight: 0.0 },
            QueueConfig { size_packets: 16, priority: 0, weight: 0.0 },
            QueueConfig { size_packets: 16, priority: 1, weight: 0.0 },
        ];
        let refs = queues_of_link(&t, 0).unwrap();
        let order: Vec<usize> = refs.iter().map(|r| r.queue).collect();
        assert_eq!(order, vec![1, 2, 0]);
        assert_eq!(queues_of_link(&t, 0).unwrap(), refs);
    }

    #[test]
    fn unknown_link_is_an_error() {
        let t = two_node_topology();
        assert_eq!(
            queues_of_link(&t, 99).unwrap_err(),
            PathError::UnknownLink { link: 99 }
        );
    }
}
