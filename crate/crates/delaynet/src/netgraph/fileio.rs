//! Plain-text topology files.
//!
//! Line-oriented format; `#` starts a comment, blank lines are ignored.
//!
//! ```text
//! nodes <count>
//! link <src> <dst> <capacity>
//! port <node> <link> <policy> <size:priority:weight>... tos <t0> ... <t9>
//! route <src> <dst> <next_hop>
//! ```
//!
//! Link ids are assigned by order of appearance. Unknown keywords are
//! rejected.

use std::fmt::Write as _;
use std::path::Path as FsPath;

use thiserror::Error;

use super::{Link, Policy, Port, QueueConfig, RoutingTable, Scenario, Topology, TOS_CLASSES};

#[derive(Debug, Error)]
pub enum TopologyFileError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: unknown keyword `{keyword}`")]
    UnknownKeyword { line: usize, keyword: String },
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("missing `nodes` declaration")]
    MissingNodes,
}

fn malformed(line: usize, message: impl Into<String>) -> TopologyFileError {
    TopologyFileError::Malformed {
        line,
        message: message.into(),
    }
}

/// Serializes a scenario into the text format above.
pub fn write_topology_file(scenario: &Scenario) -> String {
    let mut out = String::new();
    let t = &scenario.topology;
    let _ = writeln!(out, "nodes {}", t.node_count);
    for link in &t.links {
        let _ = writeln!(out, "link {} {} {}", link.src, link.dst, link.capacity);
    }
    for port in &t.ports {
        let _ = write!(out, "port {} {} {}", port.node, port.link, port.policy.name());
        for q in &port.queues {
            let _ = write!(out, " {}:{}:{}", q.size_packets, q.priority, q.weight);
        }
        let _ = write!(out, " tos");
        for &x in &port.tos_map {
            let _ = write!(out, " {x}");
        }
        let _ = writeln!(out);
    }
    for src in 0..t.node_count {
        for dst in 0..t.node_count {
            if let Some(next) = scenario.routing.next_hop(src, dst) {
                let _ = writeln!(out, "route {src} {dst} {next}");
            }
        }
    }
    out
}

/// Parses the text format above.
pub fn parse_topology(text: &str) -> Result<Scenario, TopologyFileError> {
    let mut node_count: Option<usize> = None;
    let mut links: Vec<Link> = Vec::new();
    let mut ports: Vec<Port> = Vec::new();
    let mut routes: Vec<(usize, usize, usize)> = Vec::new();

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut tokens = line.split_whitespace();
        let keyword = tokens.next().unwrap();
        let rest: Vec<&str> = tokens.collect();
        match keyword {
            "nodes" => {
                let [count] = rest[..] else {
                    return Err(malformed(line_no, "expected `nodes <count>`"));
                };
                node_count = Some(parse_num(count, line_no, "node count")?);
            }
            "link" => {
                let [src, dst, capacity] = rest[..] else {
                    return Err(malformed(line_no, "expected `link <src> <dst> <capacity>`"));
                };
                links.push(Link {
                    src: parse_num(src, line_no, "link src")?,
                    dst: parse_num(dst, line_no, "link dst")?,
                    capacity: parse_float(capacity, line_no, "link capacity")?,
                });
            }
            "port" => {
                if rest.len() < 3 {
                    return Err(malformed(
                        line_no,
                        "expected `port <node> <link> <policy> <queues>... tos <10 classes>`",
                    ));
                }
                let node = parse_num(rest[0], line_no, "port node")?;
                let link = parse_num(rest[1], line_no, "port link")?;
                let policy = Policy::parse(rest[2])
                    .ok_or_else(|| malformed(line_no, format!("unknown policy `{}`", rest[2])))?;
                let mut queues = Vec::new();
                let mut i = 3;
                while i < rest.len() && rest[i] != "tos" {
                    let parts: Vec<&str> = rest[i].split(':').collect();
                    let [size, priority, weight] = parts[..] else {
                        return Err(malformed(
                            line_no,
                            format!("queue spec `{}` is not size:priority:weight", rest[i]),
                        ));
                    };
                    queues.push(QueueConfig {
                        size_packets: parse_num(size, line_no, "queue size")?,
                        priority: parse_num(priority, line_no, "queue priority")?,
                        weight: parse_float(weight, line_no, "queue weight")?,
                    });
                    i += 1;
                }
                if rest.get(i) != Some(&"tos") {
                    return Err(malformed(line_no, "port line is missing a `tos` section"));
                }
                let tos_tokens = &rest[i + 1..];
                if tos_tokens.len() != TOS_CLASSES {
                    return Err(malformed(
                        line_no,
                        format!("tos map needs {TOS_CLASSES} entries, found {}", tos_tokens.len()),
                    ));
                }
                let mut tos_map = [0usize; TOS_CLASSES];
                for (slot, tok) in tos_map.iter_mut().zip(tos_tokens) {
                    *slot = parse_num(tok, line_no, "tos map entry")?;
                }
                ports.push(Port { node, link, policy, queues, tos_map });
            }
            "route" => {
                let [src, dst, next] = rest[..] else {
                    return Err(malformed(line_no, "expected `route <src> <dst> <next_hop>`"));
                };
                routes.push((
                    parse_num(src, line_no, "route src")?,
                    parse_num(dst, line_no, "route dst")?,
                    parse_num(next, line_no, "route next hop")?,
                ));
            }
            other => {
                return Err(TopologyFileError::UnknownKeyword {
                    line: line_no,
                    keyword: other.to_string(),
                })
            }
        }
    }

    let node_count = node_count.ok_or(TopologyFileError::MissingNodes)?;
    let mut routing = RoutingTable::new(node_count);
    for (src, dst, next) in routes {
        if src >= node_count || dst >= node_count || next >= node_count {
            return Err(malformed(0, format!("route {src}->{dst} via {next} out of range")));
        }
        routing.set(src, dst, next);
    }
    Ok(Scenario {
        topology: Topology { node_count, links, ports },
        routing,
    })
}

/// Reads and parses a topology file from disk.
pub fn read_topology_file(path: &FsPath) -> Result<Scenario, TopologyFileError> {
    let text = std::fs::read_to_string(path)?;
    parse_topology(&text)
}

fn parse_num<T: std::str::FromStr>(
    tok: &str,
    line: usize,
    what: &str,
) -> Result<T, TopologyFileError> {
    tok.parse()
        .map_err(|_| malformed(line, format!("invalid {what} `{tok}`")))
}

fn parse_float(tok: &str, line: usize, what: &str) -> Result<f64, TopologyFileError> {
    let v: f64 = parse_num(tok, line, what)?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(malformed(line, format!("non-finite {what} `{tok}`")))
    }
}
