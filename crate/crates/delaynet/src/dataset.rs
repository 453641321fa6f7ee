//! Sample schema, binary dataset files, generation driver, and splits.
//!
//! A sample bundles everything the model needs about one simulated
//! scenario: the topology and routing, the ToS assignment, the traffic
//! matrix, and the measured per-path mean delays as labels. Datasets
//! are stored as a versioned length-prefixed binary file next to a
//! human-readable JSON manifest sidecar.

use std::path::{Path as FsPath, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::{ByteReader, ByteWriter, DecodeError};
use crate::gnn::Normalization;
use crate::netgraph::{
    Link, PathError, Policy, Port, QueueConfig, RoutingTable, Scenario, Topology,
    TosAssignment, random_scenario, ScenarioError, TOS_CLASSES,
};
use crate::seeds;
use crate::sim::{self, SimConfig, SimError};
use crate::traffic::{
    DEFAULT_SIZE_DIST, TI_MAX, TI_MIN, TrafficError, TrafficMatrix, generate_tm,
    random_tos_assignment,
};

const MAGIC: [u8; 4] = *b"DNDS";
const VERSION: u32 = 1;

/// Aim for at least this many delivered packets on the slowest path so
/// the mean-delay labels are not dominated by sampling noise.
const TARGET_PACKETS_PER_PATH: f64 = 400.0;

/// Give up on a sample after this many regeneration attempts.
const MAX_ATTEMPTS: u64 = 32;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("sample count must be at least 1")]
    BadCount,
    #[error("traffic intensity range [{lo}, {hi}] is not within [{TI_MIN}, {TI_MAX}]")]
    BadTiRange { lo: f64, hi: f64 },
    #[error("node count range [{lo}, {hi}] is invalid (need 2 <= lo <= hi)")]
    BadNodeRange { lo: usize, hi: usize },
    #[error("split fraction {0} is not strictly between 0 and 1")]
    BadFraction(f64),
    #[error("sample {index}: no deliverable scenario after {MAX_ATTEMPTS} attempts")]
    GaveUp { index: usize },
    #[error("sample {index}: {source}")]
    Scenario {
        index: usize,
        source: ScenarioError,
    },
    #[error("sample {index}: {source}")]
    Traffic {
        index: usize,
        source: TrafficError,
    },
    #[error("sample {index}: {source}")]
    Sim { index: usize, source: SimError },
    #[error("sample {index}: {source}")]
    Paths { index: usize, source: PathError },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Decode {
        path: PathBuf,
        source: DecodeError,
    },
    #[error("{path}: {source}")]
    Manifest {
        path: PathBuf,
        source: serde_json::Error,
    },
    #[error("file holds {found} samples but the manifest declares {declared}")]
    CountMismatch { found: usize, declared: usize },
}

/// One simulated scenario with its ground-truth labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub scenario: Scenario,
    pub tos: TosAssignment,
    pub tm: TrafficMatrix,
    /// Mean per-packet delay per path, in path order as produced by
    /// [`resolve_paths`].
    pub labels: Vec<f64>,
}

/// Provenance and scaling metadata stored beside the binary file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub generator_version: String,
    pub count: usize,
    pub master_seed: u64,
    pub ti_min: f64,
    pub ti_max: f64,
    pub topology_source: String,
    /// Number of extra simulation attempts spent replacing samples that
    /// left some path without a single delivered packet.
    pub regenerated: u64,
    pub normalization: Normalization,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub samples: Vec<Sample>,
    pub manifest: Manifest,
}

/// Where generated scenarios come from.
#[derive(Debug, Clone)]
pub enum TopologySource {
    /// A fresh random scenario per sample, node count drawn uniformly.
    Random { min_nodes: usize, max_nodes: usize },
    /// A fixed scenario (typically loaded from a topology file); only
    /// the traffic matrix and ToS assignment vary across samples.
    Fixed { scenario: Scenario, name: String },
}

impl TopologySource {
    fn describe(&self) -> String {
        match self {
            TopologySource::Random { min_nodes, max_nodes } => {
                format!("random:{min_nodes}-{max_nodes}")
            }
            TopologySource::Fixed { name, .. } => format!("file:{name}"),
        }
    }
}

/// Generation parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct GenConfig {
    pub count: usize,
    pub ti_min: f64,
    pub ti_max: f64,
    pub master_seed: u64,
}

/// Simulation length long enough for the slowest flow to deliver about
/// [`TARGET_PACKETS_PER_PATH`] packets after warmup.
fn duration_for(node_count: usize, ti: f64) -> f64 {
    let min_rate_bits = 0.1 * ti / (node_count as f64 - 1.0);
    let min_packet_rate = min_rate_bits / DEFAULT_SIZE_DIST.mean();
    (TARGET_PACKETS_PER_PATH / min_packet_rate) / 0.9
}

fn generate_one(
    source: &TopologySource,
    cfg: &GenConfig,
    index: usize,
) -> Result<(Sample, u64), DatasetError> {
    for attempt in 0..MAX_ATTEMPTS {
        let seed = seeds::derive2(cfg.master_seed, index as u64, attempt);
        let mut rng = ChaCha12Rng::seed_from_u64(seeds::derive(seed, 0));
        let ti = if cfg.ti_min == cfg.ti_max {
            cfg.ti_min
        } else {
            rng.gen_range(cfg.ti_min..=cfg.ti_max)
        };
        let (scenario, tos) = match source {
            TopologySource::Random { min_nodes, max_nodes } => {
                let nodes = rng.gen_range(*min_nodes..=*max_nodes);
                random_scenario(nodes, seeds::derive(seed, 1))
                    .map_err(|source| DatasetError::Scenario { index, source })?
            }
            TopologySource::Fixed { scenario, .. } => {
                let mut tos_rng = ChaCha12Rng::seed_from_u64(seeds::derive(seed, 1));
                let tos = random_tos_assignment(scenario.topology.node_count, &mut tos_rng);
                (scenario.clone(), tos)
            }
        };
        let n = scenario.topology.node_count;
        let mut tm_rng = ChaCha12Rng::seed_from_u64(seeds::derive(seed, 2));
        let tm = generate_tm(n, ti, &mut tm_rng)
            .map_err(|source| DatasetError::Traffic { index, source })?;
        let sim_cfg = SimConfig::new(duration_for(n, ti), seeds::derive(seed, 3));
        let result = sim::run(&scenario, &tos, &tm, &sim_cfg)
            .map_err(|source| DatasetError::Sim { index, source })?;
        let labels: Option<Vec<f64>> =
            result.paths.iter().map(|p| p.mean_delay()).collect();
        if let Some(labels) = labels {
            return Ok((Sample { scenario, tos, tm, labels }, attempt));
        }
    }
    Err(DatasetError::GaveUp { index })
}

/// Simulates `cfg.count` independent samples (in parallel) and fits the
/// normalization constants over the result.
pub fn generate(
    source: &TopologySource,
    cfg: &GenConfig,
) -> Result<Dataset, DatasetError> {
    if cfg.count == 0 {
        return Err(DatasetError::BadCount);
    }
    if !(TI_MIN..=TI_MAX).contains(&cfg.ti_min)
        || !(TI_MIN..=TI_MAX).contains(&cfg.ti_max)
        || cfg.ti_min > cfg.ti_max
    {
        return Err(DatasetError::BadTiRange { lo: cfg.ti_min, hi: cfg.ti_max });
    }
    if let TopologySource::Random { min_nodes, max_nodes } = source {
        if *min_nodes < 2 || min_nodes > max_nodes {
            return Err(DatasetError::BadNodeRange {
                lo: *min_nodes,
                hi: *max_nodes,
            });
        }
    }

    let generated: Result<Vec<(Sample, u64)>, DatasetError> = (0..cfg.count)
        .into_par_iter()
        .map(|i| generate_one(source, cfg, i))
        .collect();
    let generated = generated?;
    let regenerated = generated.iter().map(|(_, a)| a).sum();
    let samples: Vec<Sample> = generated.into_iter().map(|(s, _)| s).collect();

    let manifest = Manifest {
        generator_version: env!("CARGO_PKG_VERSION").to_string(),
        count: samples.len(),
        master_seed: cfg.master_seed,
        ti_min: cfg.ti_min,
        ti_max: cfg.ti_max,
        topology_source: source.describe(),
        regenerated,
        normalization: fit_normalization(&samples),
    };
    Ok(Dataset { samples, manifest })
}

/// Min-max/moment constants over a sample set; identity scaling for an
/// empty set.
pub fn fit_normalization(samples: &[Sample]) -> Normalization {
    if samples.is_empty() {
        return Normalization::default();
    }
    let caps = samples
        .iter()
        .flat_map(|s| s.scenario.topology.links.iter().map(|l| l.capacity));
    let bws = samples.iter().flat_map(|s| {
        let n = s.tm.node_count();
        let tm = &s.tm;
        (0..n).flat_map(move |src| {
            (0..n)
                .filter(move |&dst| dst != src)
                .map(move |dst| tm.get(src, dst))
        })
    });
    let labels = samples.iter().flat_map(|s| s.labels.iter().copied());
    Normalization::fit(caps, bws, labels)
}

/// Seed-deterministic disjoint partition into (train, eval).
pub fn split(
    dataset: &Dataset,
    fraction: f64,
    seed: u64,
) -> Result<(Dataset, Dataset), DatasetError> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(DatasetError::BadFraction(fraction));
    }
    let n = dataset.samples.len();
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    // Fisher-Yates shuffle.
    for i in (1..n).rev() {
        order.swap(i, rng.gen_range(0..=i));
    }
    let take = ((n as f64) * fraction).floor() as usize;
    let pick = |idxs: &[usize]| {
        let mut idxs = idxs.to_vec();
        idxs.sort_unstable();
        let samples: Vec<Sample> = idxs
            .iter()
            .map(|&i| dataset.samples[i].clone())
            .collect();
        let manifest = Manifest {
            count: samples.len(),
            ..dataset.manifest.clone()
        };
        Dataset { samples, manifest }
    };
    Ok((pick(&order[..take]), pick(&order[take..])))
}

fn encode_topology(w: &mut ByteWriter, t: &Topology) {
    w.u64(t.node_count as u64);
    w.u64(t.links.len() as u64);
    for l in &t.links {
        w.u64(l.src as u64);
        w.u64(l.dst as u64);
        w.f64(l.capacity);
    }
    w.u64(t.ports.len() as u64);
    for p in &t.ports {
        w.u64(p.node as u64);
        w.u64(p.link as u64);
        w.u8(p.policy.index() as u8);
        w.u64(p.queues.len() as u64);
        for q in &p.queues {
            w.u32(q.size_packets);
            w.u32(q.priority);
            w.f64(q.weight);
        }
        for &t in &p.tos_map {
            w.u8(t as u8);
        }
    }
}

fn decode_topology(r: &mut ByteReader) -> Result<Topology, DecodeError> {
    let node_count = r.usize()?;
    let link_count = r.usize()?;
    let mut links = Vec::with_capacity(link_count);
    for _ in 0..link_count {
        links.push(Link {
            src: r.usize()?,
            dst: r.usize()?,
            capacity: r.f64()?,
        });
    }
    let port_count = r.usize()?;
    let mut ports = Vec::with_capacity(port_count);
    for _ in 0..port_count {
        let node = r.usize()?;
        let link = r.usize()?;
        let offset = r.offset();
        let policy_idx = r.u8()? as usize;
        let policy = Policy::from_index(policy_idx).ok_or_else(|| DecodeError::Invalid {
            offset,
            message: format!("unknown policy index {policy_idx}"),
        })?;
        let queue_count = r.usize()?;
        let mut queues = Vec::with_capacity(queue_count);
        for _ in 0..queue_count {
            queues.push(QueueConfig {
                size_packets: r.u32()?,
                priority: r.u32()?,
                weight: r.f64()?,
            });
        }
        let mut tos_map = [0usize; TOS_CLASSES];
        for slot in &mut tos_map {
            *slot = r.u8()? as usize;
        }
        ports.push(Port { node, link, policy, queues, tos_map });
    }
    Ok(Topology { node_count, links, ports })
}

fn encode_sample(s: &Sample) -> ByteWriter {
    let mut w = ByteWriter::new();
    let topo = &s.scenario.topology;
    encode_topology(&mut w, topo);
    let n = topo.node_count;
    for node in 0..n {
        for dst in 0..n {
            match s.scenario.routing.next_hop(node, dst) {
                Some(next) => w.u64(next as u64),
                None => w.u64(u64::MAX),
            }
        }
    }
    for src in 0..n {
        for dst in 0..n {
            w.u8(s.tos.get(src, dst));
        }
    }
    w.f64(s.tm.ti);
    for src in 0..n {
        for dst in 0..n {
            w.f64(if src == dst { 0.0 } else { s.tm.get(src, dst) });
        }
    }
    w.f64_slice(&s.labels);
    w
}

fn decode_sample(r: &mut ByteReader) -> Result<Sample, DecodeError> {
    let topology = decode_topology(r)?;
    let n = topology.node_count;
    let mut routing = RoutingTable::new(n);
    for node in 0..n {
        for dst in 0..n {
            let v = r.u64()?;
            if v != u64::MAX {
                routing.set(node, dst, v as usize);
            }
        }
    }
    let mut tos = TosAssignment::new(n);
    for src in 0..n {
        for dst in 0..n {
            let offset = r.offset();
            let t = r.u8()?;
            if t as usize >= TOS_CLASSES {
                return Err(DecodeError::Invalid {
                    offset,
                    message: format!("ToS class {t} out of range"),
                });
            }
            if src != dst {
                tos.set(src, dst, t);
            }
        }
    }
    let ti = r.f64()?;
    let mut tm = TrafficMatrix::new(n, ti);
    for src in 0..n {
        for dst in 0..n {
            let bw = r.f64()?;
            if src != dst {
                tm.set(src, dst, bw);
            }
        }
    }
    let labels = r.f64_vec()?;
    r.finish()?;
    Ok(Sample {
        scenario: Scenario { topology, routing },
        tos,
        tm,
        labels,
    })
}

/// Encodes the binary body (without the manifest sidecar).
pub fn encode(dataset: &Dataset) -> Vec<u8> {
    let mut w = ByteWriter::new();
    w.magic(MAGIC);
    w.u32(VERSION);
    w.u64(dataset.samples.len() as u64);
    for s in &dataset.samples {
        w.record(&encode_sample(s));
    }
    w.into_bytes()
}

/// Decodes a binary body; the manifest must be supplied separately.
pub fn decode(bytes: &[u8], manifest: Manifest) -> Result<Dataset, DecodeError> {
    let mut r = ByteReader::new(bytes);
    r.magic(MAGIC)?;
    r.version(VERSION)?;
    let count = r.usize()?;
    let mut samples = Vec::with_capacity(count.min(1 << 20));
    for _ in 0..count {
        let mut rec = r.record()?;
        samples.push(decode_sample(&mut rec)?);
    }
    r.finish()?;
    Ok(Dataset { samples, manifest })
}

/// Path of the JSON manifest stored beside a dataset file.
pub fn manifest_path(path: &FsPath) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}

pub fn write(dataset: &Dataset, path: &FsPath) -> Result<(), DatasetError> {
    let io_err = |source| DatasetError::Io { path: path.to_owned(), source };
    std::fs::write(path, encode(dataset)).map_err(io_err)?;
    let mpath = manifest_path(path);
    let json = serde_json::to_string_pretty(&dataset.manifest).map_err(|source| {
        DatasetError::Manifest { path: mpath.clone(), source }
    })?;
    std::fs::write(&mpath, json)
        .map_err(|source| DatasetError::Io { path: mpath, source })
}

pub fn read(path: &FsPath) -> Result<Dataset, DatasetError> {
    let bytes = std::fs::read(path)
        .map_err(|source| DatasetError::Io { path: path.to_owned(), source })?;
    let mpath = manifest_path(path);
    let mtext = std::fs::read_to_string(&mpath)
        .map_err(|source| DatasetError::Io { path: mpath.clone(), source })?;
    let manifest: Manifest = serde_json::from_str(&mtext)
        .map_err(|source| DatasetError::Manifest { path: mpath, source })?;
    let dataset = decode(&bytes, manifest)
        .map_err(|source| DatasetError::Decode { path: path.to_owned(), source })?;
    if dataset.samples.len() != dataset.manifest.count {
        return Err(DatasetError::CountMismatch {
            found: dataset.samples.len(),
            declared: dataset.manifest.count,
        });
    }
    Ok(dataset)
}
