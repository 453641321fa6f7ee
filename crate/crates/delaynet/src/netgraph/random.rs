//! Seeded random scenario generation: connected topology, per-port queue
//! configuration, shortest-path routing and ToS assignment.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use thiserror::Error;

use super::{
    resolve_paths, Link, NodeId, Policy, Port, QueueConfig, RoutingTable, Scenario, Topology,
    TosAssignment, QUEUE_SIZES, TOS_CLASSES,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScenarioError {
    #[error("node count {0} too small, need at least 2")]
    TooFewNodes(usize),
}

/// Traffic intensity used as the reference point when sizing link
/// capacities: the most congested setting the traffic model produces.
const CAPACITY_REF_TI: f64 = 2000.0;

/// Mean of the U(0.1, 1) per-entry factor in the traffic matrix model.
const MEAN_TM_FACTOR: f64 = 0.62;

/// Capacity headroom factor range. Values below 1 leave some links
/// slightly under-provisioned at the reference intensity, which is what
/// produces the few percent of packet loss expected at full load.
const HEADROOM: (f64, f64) = (0.9, 1.4);

/// Generates a connected random scenario, fully determined by the seed.
///
/// Per port: policy uniform over FIFO/SP/WFQ/DRR, queue count uniform in
/// 2..=5 (1 for FIFO), sizes uniform over {16, 32, 64}, WFQ/DRR weights
/// drawn positive and normalized to sum 1, and a random ToS map.
/// Routing is deterministic shortest-path (hop count, lowest-node-id
/// tie-break). Link capacities are sized from the expected traffic each
/// link carries at the reference intensity, times a random headroom
/// factor.
pub fn random_scenario(
    node_count: usize,
    rng_seed: u64,
) -> Result<(Scenario, TosAssignment), ScenarioError> {
    if node_count < 2 {
        return Err(ScenarioError::TooFewNodes(node_count));
    }
    let mut rng = ChaCha12Rng::seed_from_u64(rng_seed);
    let n = node_count;

    // Random spanning tree plus a few extra edges keeps the graph
    // connected with some path diversity.
    let mut edges: Vec<(NodeId, NodeId)> = Vec::new();
    for v in 1..n {
        let u = rng.gen_range(0..v);
        edges.push((u, v));
    }
    let extra = n / 2;
    for _ in 0..extra {
        let a = rng.gen_range(0..n);
        let b = rng.gen_range(0..n);
        let (a, b) = (a.min(b), a.max(b));
        if a == b || edges.contains(&(a, b)) {
            continue;
        }
        edges.push((a, b));
    }
    edges.sort_unstable();

    let mut topology = Topology {
        node_count: n,
        links: Vec::with_capacity(edges.len() * 2),
        ports: Vec::new(),
    };
    for &(a, b) in &edges {
        topology.links.push(Link { src: a, dst: b, capacity: 1.0 });
        topology.links.push(Link { src: b, dst: a, capacity: 1.0 });
    }

    for (lid, link) in topology.links.iter().enumerate() {
        let policy = Policy::ALL[rng.gen_range(0..Policy::ALL.len())];
        let queue_count = match policy {
            Policy::Fifo => 1,
            _ => rng.gen_range(2..=5),
        };
        let mut priorities: Vec<u32> = (0..queue_count as u32).collect();
        // Fisher-Yates driven by the scenario rng.
        for i in (1..priorities.len()).rev() {
            let j = rng.gen_range(0..=i);
            priorities.swap(i, j);
        }
        let weights: Vec<f64> = if policy.uses_weights() {
            let raw: Vec<f64> = (0..queue_count).map(|_| rng.gen_range(0.05..1.0)).collect();
            let sum: f64 = raw.iter().sum();
            raw.iter().map(|w| w / sum).collect()
        } else {
            vec![1.0 / queue_count as f64; queue_count]
        };
        let queues: Vec<QueueConfig> = (0..queue_count)
            .map(|qi| QueueConfig {
                size_packets: QUEUE_SIZES[rng.gen_range(0..QUEUE_SIZES.len())],
                priority: priorities[qi],
                weight: weights[qi],
            })
            .collect();
        let mut tos_map = [0usize; TOS_CLASSES];
        for slot in tos_map.iter_mut() {
            *slot = rng.gen_range(0..queue_count);
        }
        topology.ports.push(Port {
            node: link.src,
            link: lid,
            policy,
            queues,
            tos_map,
        });
    }

    let routing = shortest_path_routing(&topology);

    let mut tos = TosAssignment::new(n);
    for src in 0..n {
        for dst in 0..n {
            if src != dst {
                tos.set(src, dst, rng.gen_range(0..TOS_CLASSES as u8));
            }
        }
    }

    // Size capacities from the traffic each link is expected to carry at
    // the reference intensity. The queue selection does not influence
    // which links a path crosses, so the all-zero ToS assignment works
    // for counting.
    let paths = resolve_paths(&topology, &routing, &TosAssignment::new(n))
        .expect("constructed routing must resolve");
    let mut crossing = vec![0usize; topology.links.len()];
    for path in &paths {
        for &(_, link) in &path.elements {
            crossing[link] += 1;
        }
    }
    let per_flow = MEAN_TM_FACTOR * CAPACITY_REF_TI / (n as f64 - 1.0);
    for (lid, count) in crossing.iter().enumerate() {
        let load = per_flow * (*count).max(1) as f64;
        let headroom = rng.gen_range(HEADROOM.0..HEADROOM.1);
        topology.links[lid].capacity = load * headroom;
    }

    Ok((Scenario { topology, routing }, tos))
}

/// Deterministic shortest-path routing: minimum hop count, ties broken
/// by the lowest next-hop node id.
pub fn shortest_path_routing(topology: &Topology) -> RoutingTable {
    let n = topology.node_count;
    let mut neighbours: Vec<Vec<NodeId>> = vec![Vec::new(); n];
    for link in &topology.links {
        neighbours[link.src].push(link.dst);
    }
    for list in &mut neighbours {
        list.sort_unstable();
        list.dedup();
    }
    let mut routing = RoutingTable::new(n);
    for dst in 0..n {
        // BFS from the destination over reversed edges; with symmetric
        // link pairs this equals forward distance.
        let mut dist = vec![usize::MAX; n];
        dist[dst] = 0;
        let mut frontier = std::collections::VecDeque::from([dst]);
        while let Some(u) = frontier.pop_front() {
            for &v in &neighbours[u] {
                if dist[v] == usize::MAX {
                    dist[v] = dist[u] + 1;
                    frontier.push_back(v);
                }
            }
        }
        for node in 0..n {
            if node == dst || dist[node] == usize::MAX {
                continue;
            }
            let best = neighbours[node]
                .iter()
                .copied()
                .filter(|&nb| dist[nb] != usize::MAX && dist[nb] + 1 == dist[node])
                .min();
            if let Some(next) = best {
                routing.set(node, dst, next);
            }
        }
    }
    routing
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netgraph::validate;

    #[test]
    fn too_few_nodes_is_an_error() {
        assert_eq!(random_scenario(1, 0), Err(ScenarioError::TooFewNodes(1)));
    }

    #[test]
    fn same_seed_gives_identical_scenarios() {
        let a = random_scenario(6, 42).unwrap();
        let b = random_scenario(6, 42).unwrap();
        assert_eq!(a, b);
        let c = random_scenario(6, 43).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn generated_scenarios_validate_and_route() {
        for seed in 0..40 {
            let (scenario, tos) = random_scenario(2 + (seed as usize % 7), seed).unwrap();
            let violations = validate(&scenario.topology);
            assert!(violations.is_empty(), "seed {seed}: {violations:?}");
            let paths =
                resolve_paths(&scenario.topology, &scenario.routing, &tos).unwrap();
            let n = scenario.topology.node_count;
            assert_eq!(paths.len(), n * (n - 1));
            for path in &paths {
                assert!(!path.elements.is_empty());
                for window in path.elements.windows(2) {
                    let (_, l0) = window[0];
                    let (_, l1) = window[1];
                    assert_eq!(
                        scenario.topology.links[l0].dst,
                        scenario.topology.links[l1].src
                    );
                }
            }
        }
    }

    #[test]
    fn policy_frequencies_are_uniform() {
        let mut counts = [0usize; 4];
        let mut total = 0usize;
        let mut seed = 0;
        while total < 10_000 {
            let (scenario, _) = random_scenario(8, seed).unwrap();
            for port in &scenario.topology.ports {
                counts[port.policy.index()] += 1;
                total += 1;
            }
            seed += 1;
        }
        // Binomial 3-sigma band around 25%.
        let p = 0.25;
        let sigma = (total as f64 * p * (1.0 - p)).sqrt();
        for (i, &c) in counts.iter().enumerate() {
            let expected = total as f64 * p;
            assert!(
                (c as f64 - expected).abs() < 3.0 * sigma,
                "policy {i}: {c} of {total}"
            );
        }
    }
}
