//! Message-passing delay model.
//!
//! The model maintains a hidden state per path, per queue, and per link
//! and refines all three in lock-step for a fixed number of iterations:
//!
//! 1. *Path stage* — a recurrent cell walks each path, reading the
//!    (queue, link) state pair at every hop; the intermediate states are
//!    recorded as messages addressed to the queue at that hop.
//! 2. *Queue stage* — each queue sums the messages it received and feeds
//!    the result to its own update cell.
//! 3. *Link stage* — a second recurrent cell folds the fresh queue
//!    states over each link, visiting queues from highest priority to
//!    lowest so the scheduler's ordering is visible to the model.
//!
//! A small feed-forward readout maps the final path state to a scalar
//! prediction of the path's mean per-packet delay. The readout operates
//! on standardized log-delays; [`Normalization`] holds the constants.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::netgraph::{Path, PathError, Policy, Scenario, queues_of_link};
use crate::tensor::{Dense, Graph, GruCell, ParamStore, TensorError, TensorId};
use crate::traffic::TrafficMatrix;

/// Per-queue input features: normalized buffer size, priority rank,
/// scheduling weight.
pub const QUEUE_FEATURES: usize = 3;
/// Per-link input features: normalized capacity plus a policy one-hot.
pub const LINK_FEATURES: usize = 1 + Policy::ALL.len();
/// Per-path input features: normalized offered bandwidth.
pub const PATH_FEATURES: usize = 1;

#[derive(Debug, Error)]
pub enum GnnError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Paths(#[from] PathError),
    #[error("hidden width {hidden} is smaller than the {needed} input features it must hold")]
    HiddenTooSmall { needed: usize, hidden: usize },
}

/// Model hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Hidden state width shared by paths, queues, and links.
    pub hidden: usize,
    /// Number of message-passing iterations.
    pub iterations: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig { hidden: 16, iterations: 8 }
    }
}

/// Input/output scaling constants, fitted on the training set and
/// carried alongside the parameters so evaluation uses the same scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub cap_min: f64,
    pub cap_max: f64,
    pub bw_min: f64,
    pub bw_max: f64,
    /// Mean of ln(delay) over the training labels.
    pub label_mean: f64,
    /// Standard deviation of ln(delay) over the training labels.
    pub label_std: f64,
}

impl Default for Normalization {
    fn default() -> Self {
        Normalization {
            cap_min: 0.0,
            cap_max: 1.0,
            bw_min: 0.0,
            bw_max: 1.0,
            label_mean: 0.0,
            label_std: 1.0,
        }
    }
}

fn minmax(v: f64, lo: f64, hi: f64) -> f64 {
    let span = hi - lo;
    if span.abs() < 1e-12 {
        0.5
    } else {
        (v - lo) / span
    }
}

impl Normalization {
    /// Fits capacity/bandwidth ranges and log-label moments.
    pub fn fit(
        caps: impl IntoIterator<Item = f64>,
        bws: impl IntoIterator<Item = f64>,
        labels: impl IntoIterator<Item = f64>,
    ) -> Normalization {
        let range = |it: &mut dyn Iterator<Item = f64>| {
            it.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
                (lo.min(v), hi.max(v))
            })
        };
        let (cap_min, cap_max) = range(&mut caps.into_iter());
        let (bw_min, bw_max) = range(&mut bws.into_iter());
        let logs: Vec<f64> = labels.into_iter().map(f64::ln).collect();
        let n = logs.len().max(1) as f64;
        let mean = logs.iter().sum::<f64>() / n;
        let var = logs.iter().map(|l| (l - mean) * (l - mean)).sum::<f64>() / n;
        Normalization {
            cap_min,
            cap_max,
            bw_min,
            bw_max,
            label_mean: mean,
            label_std: var.sqrt().max(1e-9),
        }
    }

    pub fn norm_capacity(&self, c: f64) -> f64 {
        minmax(c, self.cap_min, self.cap_max)
    }

    pub fn norm_bandwidth(&self, bw: f64) -> f64 {
        minmax(bw, self.bw_min, self.bw_max)
    }

    /// Model-space target for a raw delay label.
    pub fn normalize_label(&self, delay: f64) -> f64 {
        (delay.ln() - self.label_mean) / self.label_std
    }

    /// Raw delay for a model-space output.
    pub fn denormalize(&self, z: f64) -> f64 {
        (z * self.label_std + self.label_mean).exp()
    }
}

/// Static queue attributes used as input features.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QueueInfo {
    pub size_packets: u32,
    pub priority: u32,
    pub weight: f64,
}

/// Static link attributes used as input features.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkInfo {
    pub capacity: f64,
    pub policy: Policy,
}

/// One routed flow as the model sees it.
#[derive(Debug, Clone, PartialEq)]
pub struct PathInfo {
    /// Offered bandwidth from the traffic matrix.
    pub bandwidth: f64,
    /// (global queue index, link index) per hop, in order.
    pub elements: Vec<(usize, usize)>,
}

/// A scenario flattened into the indices the model iterates over:
/// queues get a single global numbering across all ports.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphInstance {
    pub queues: Vec<QueueInfo>,
    pub links: Vec<LinkInfo>,
    /// Global queue indices feeding each link, highest priority first.
    pub link_queues: Vec<Vec<usize>>,
    pub paths: Vec<PathInfo>,
}

impl GraphInstance {
    pub fn new(
        scenario: &Scenario,
        paths: &[Path],
        tm: &TrafficMatrix,
    ) -> Result<GraphInstance, PathError> {
        let topo = &scenario.topology;
        let mut port_offset = Vec::with_capacity(topo.ports.len());
        let mut queues = Vec::new();
        for port in &topo.ports {
            port_offset.push(queues.len());
            for q in &port.queues {
                queues.push(QueueInfo {
                    size_packets: q.size_packets,
                    priority: q.priority,
                    weight: q.weight,
                });
            }
        }
        // Policy is filled in below from the port feeding each link.
        let mut links: Vec<LinkInfo> = topo
            .links
            .iter()
            .map(|l| LinkInfo { capacity: l.capacity, policy: Policy::Fifo })
            .collect();
        let mut link_queues = Vec::with_capacity(topo.links.len());
        for li in 0..topo.links.len() {
            let refs = queues_of_link(topo, li)?;
            let port = refs[0].port;
            links[li].policy = topo.ports[port].policy;
            link_queues.push(
                refs.iter()
                    .map(|r| port_offset[r.port] + r.queue)
                    .collect(),
            );
        }
        let paths = paths
            .iter()
            .map(|p| PathInfo {
                bandwidth: tm.get(p.src, p.dst),
                elements: p
                    .elements
                    .iter()
                    .map(|&(q, l)| (port_offset[q.port] + q.queue, l))
                    .collect(),
            })
            .collect();
        Ok(GraphInstance { queues, links, link_queues, paths })
    }
}

/// Handles to every trainable piece of the model.
#[derive(Debug, Clone, PartialEq)]
pub struct GnnModel {
    pub cfg: ModelConfig,
    rnn_path: GruCell,
    update_queue: GruCell,
    rnn_link: GruCell,
    readout1: Dense,
    readout2: Dense,
    readout_out: Dense,
}

/// Tensors produced by one forward pass.
pub struct Forward {
    /// One standardized log-delay prediction per path, shape (1, 1).
    pub outputs: Vec<TensorId>,
    /// Final hidden state per path, shape (1, hidden).
    pub path_states: Vec<TensorId>,
}

impl GnnModel {
    /// Creates a model with freshly initialized parameters.
    pub fn init(cfg: ModelConfig, seed: u64) -> (GnnModel, ParamStore) {
        let mut store = ParamStore::new();
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let h = cfg.hidden;
        let model = GnnModel {
            cfg,
            rnn_path: GruCell::new(&mut store, "rnn_path", 2 * h, h, &mut rng),
            update_queue: GruCell::new(&mut store, "update_queue", h, h, &mut rng),
            rnn_link: GruCell::new(&mut store, "rnn_link", h, h, &mut rng),
            readout1: Dense::new(&mut store, "readout1", h, h, &mut rng),
            readout2: Dense::new(&mut store, "readout2", h, h, &mut rng),
            readout_out: Dense::new(&mut store, "readout_out", h, 1, &mut rng),
        };
        (model, store)
    }

    /// Rebinds model handles to a restored parameter store.
    pub fn from_store(cfg: ModelConfig, store: &ParamStore) -> Option<GnnModel> {
        Some(GnnModel {
            cfg,
            rnn_path: GruCell::from_store(store, "rnn_path")?,
            update_queue: GruCell::from_store(store, "update_queue")?,
            rnn_link: GruCell::from_store(store, "rnn_link")?,
            readout1: Dense::from_store(store, "readout1")?,
            readout2: Dense::from_store(store, "readout2")?,
            readout_out: Dense::from_store(store, "readout_out")?,
        })
    }

    /// Feature vector zero-padded to the hidden width, as a (1, H) leaf.
    fn init_state(
        &self,
        g: &mut Graph,
        features: &[f64],
    ) -> Result<TensorId, GnnError> {
        let h = self.cfg.hidden;
        if features.len() > h {
            return Err(GnnError::HiddenTooSmall {
                needed: features.len(),
                hidden: h,
            });
        }
        let mut v = features.to_vec();
        v.resize(h, 0.0);
        Ok(g.constant((1, h), v)?)
    }

    fn queue_features(q: &QueueInfo) -> [f64; QUEUE_FEATURES] {
        let size = (q.size_packets as f64 - 16.0) / 48.0;
        [size, q.priority as f64 / 4.0, q.weight]
    }

    fn link_features(l: &LinkInfo, norm: &Normalization) -> [f64; LINK_FEATURES] {
        let mut f = [0.0; LINK_FEATURES];
        f[0] = norm.norm_capacity(l.capacity);
        f[1 + l.policy.index()] = 1.0;
        f
    }

    /// Runs the full message-passing stack and readout on one instance.
    pub fn forward(
        &self,
        g: &mut Graph,
        inst: &GraphInstance,
        norm: &Normalization,
    ) -> Result<Forward, GnnError> {
        let h = self.cfg.hidden;
        let mut h_q = Vec::with_capacity(inst.queues.len());
        for q in &inst.queues {
            h_q.push(self.init_state(g, &Self::queue_features(q))?);
        }
        let mut h_l = Vec::with_capacity(inst.links.len());
        for l in &inst.links {
            h_l.push(self.init_state(g, &Self::link_features(l, norm))?);
        }
        let mut h_p = Vec::with_capacity(inst.paths.len());
        for p in &inst.paths {
            h_p.push(self.init_state(g, &[norm.norm_bandwidth(p.bandwidth)])?);
        }

        for _ in 0..self.cfg.iterations {
            // Path stage: walk each path, collecting per-hop messages.
            let mut messages: Vec<Vec<TensorId>> = vec![Vec::new(); inst.queues.len()];
            let mut next_p = Vec::with_capacity(h_p.len());
            for (pi, path) in inst.paths.iter().enumerate() {
                let mut state = h_p[pi];
                for &(q, l) in &path.elements {
                    let input = g.concat_cols(h_q[q], h_l[l])?;
                    state = self.rnn_path.step(g, state, input)?;
                    messages[q].push(state);
                }
                next_p.push(state);
            }
            // Queue stage: aggregate messages, update every queue.
            let mut next_q = Vec::with_capacity(h_q.len());
            for (qi, msgs) in messages.iter().enumerate() {
                let agg = if msgs.is_empty() {
                    g.zeros((1, h))?
                } else {
                    g.sum_list(msgs)?
                };
                next_q.push(self.update_queue.step(g, h_q[qi], agg)?);
            }
            // Link stage: fold the fresh queue states in priority order.
            let mut next_l = Vec::with_capacity(h_l.len());
            for (li, qs) in inst.link_queues.iter().enumerate() {
                let mut state = h_l[li];
                for &q in qs {
                    state = self.rnn_link.step(g, state, next_q[q])?;
                }
                next_l.push(state);
            }
            h_p = next_p;
            h_q = next_q;
            h_l = next_l;
        }

        let mut outputs = Vec::with_capacity(h_p.len());
        for &state in &h_p {
            let a = self.readout1.apply(g, state)?;
            let a = g.selu(a)?;
            let b = self.readout2.apply(g, a)?;
            let b = g.selu(b)?;
            outputs.push(self.readout_out.apply(g, b)?);
        }
        Ok(Forward { outputs, path_states: h_p })
    }

    /// Per-path delay predictions in raw (de-standardized) units.
    pub fn predict(
        &self,
        store: &ParamStore,
        inst: &GraphInstance,
        norm: &Normalization,
    ) -> Result<Vec<f64>, GnnError> {
        let mut g = Graph::new(store);
        let fwd = self.forward(&mut g, inst, norm)?;
        fwd.outputs
            .iter()
            .map(|&t| Ok(norm.denormalize(g.scalar_value(t)?)))
            .collect()
    }
}
