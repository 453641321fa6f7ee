//! Training loop, metrics, checkpoints, and the loss-curve plot.

use std::path::{Path as FsPath, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use thiserror::Error;

use crate::codec::{ByteReader, ByteWriter, DecodeError};
use crate::dataset::{Dataset, Sample};
use crate::gnn::{GnnModel, GnnError, GraphInstance, ModelConfig, Normalization};
use crate::netgraph::{PathError, resolve_paths};
use crate::tensor::{AdamConfig, Gradients, Graph, ParamStore, TensorError};

const CHECKPOINT_MAGIC: [u8; 4] = *b"DNCK";
const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("training set is empty")]
    EmptyDataset,
    #[error("batch size and step count must be positive")]
    BadConfig,
    #[error("visit order length {got} does not cover {need} batch slots")]
    BadOrder { got: usize, need: usize },
    #[error("non-finite loss at step {step} on sample {sample}")]
    NonFiniteLoss { step: u64, sample: usize },
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Gnn(#[from] GnnError),
    #[error(transparent)]
    Paths(#[from] PathError),
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
}

/// Training-loop parameters; optimizer settings live in [`AdamConfig`].
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub steps: usize,
    /// Whole samples (graphs) per gradient step.
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub seed: u64,
}

/// Pooled evaluation metrics.
#[derive(Debug, Clone, PartialEq)]
pub struct Metrics {
    /// Mean of |prediction - label| / label over all included paths.
    pub mre: f64,
    /// 1 - SS_res / SS_tot over all included paths.
    pub r2: f64,
    /// Paths skipped because their label was not positive.
    pub excluded: usize,
}

pub struct TrainOutput {
    pub model: GnnModel,
    pub store: ParamStore,
    /// (step, loss) per optimizer step; loss includes the L2 penalty.
    pub trace: Vec<(u64, f64)>,
}

/// A sample lowered to model inputs plus standardized targets.
struct Prepared {
    instance: GraphInstance,
    targets: Vec<f64>,
}

fn prepare(samples: &[Sample], norm: &Normalization) -> Result<Vec<Prepared>, TrainError> {
    samples
        .iter()
        .map(|s| {
            let paths = resolve_paths(&s.scenario.topology, &s.scenario.routing, &s.tos)?;
            let instance = GraphInstance::new(&s.scenario, &paths, &s.tm)?;
            let targets = s.labels.iter().map(|&y| norm.normalize_label(y)).collect();
            Ok(Prepared { instance, targets })
        })
        .collect()
}

/// Sample visit order drawn as reshuffled epochs, flattened to one
/// index per batch slot.
fn default_order(sample_count: usize, slots: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut order = Vec::with_capacity(slots);
    let mut epoch: Vec<usize> = (0..sample_count).collect();
    while order.len() < slots {
        for i in (1..epoch.len()).rev() {
            epoch.swap(i, rng.gen_range(0..=i));
        }
        order.extend(epoch.iter().copied().take(slots - order.len()));
    }
    order
}

/// Trains a fresh model; batches are drawn per the seeded default order.
pub fn train(
    dataset: &Dataset,
    model_cfg: ModelConfig,
    cfg: &TrainConfig,
) -> Result<TrainOutput, TrainError> {
    let order = default_order(
        dataset.samples.len().max(1),
        cfg.steps * cfg.batch_size,
        crate::seeds::derive(cfg.seed, 1),
    );
    train_with_order(dataset, model_cfg, cfg, &order)
}

/// Continues training an existing model/parameter pair; the optimizer
/// step counter (and thus the learning-rate schedule) picks up where
/// the checkpoint left off. `norm` must be the scale the model was
/// originally trained under.
pub fn resume(
    dataset: &Dataset,
    cfg: &TrainConfig,
    model: GnnModel,
    store: ParamStore,
    norm: &Normalization,
) -> Result<TrainOutput, TrainError> {
    let order = default_order(
        dataset.samples.len().max(1),
        cfg.steps * cfg.batch_size,
        crate::seeds::derive(cfg.seed, 1),
    );
    run_loop(dataset, norm, cfg, model, store, &order)
}

/// Training core with an explicit per-slot sample visit order
/// (`order[step * batch_size + k]` = sample index). Exposed so callers
/// can prove batching determinism independent of storage order.
pub fn train_with_order(
    dataset: &Dataset,
    model_cfg: ModelConfig,
    cfg: &TrainConfig,
    order: &[usize],
) -> Result<TrainOutput, TrainError> {
    let (model, store) = GnnModel::init(model_cfg, crate::seeds::derive(cfg.seed, 0));
    run_loop(dataset, &dataset.manifest.normalization, cfg, model, store, order)
}

fn run_loop(
    dataset: &Dataset,
    norm: &Normalization,
    cfg: &TrainConfig,
    model: GnnModel,
    mut store: ParamStore,
    order: &[usize],
) -> Result<TrainOutput, TrainError> {
    if dataset.samples.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    if cfg.steps == 0 || cfg.batch_size == 0 {
        return Err(TrainError::BadConfig);
    }
    let slots = cfg.steps * cfg.batch_size;
    if order.len() < slots {
        return Err(TrainError::BadOrder { got: order.len(), need: slots });
    }
    let prepared = prepare(&dataset.samples, norm)?;

    let mut trace = Vec::with_capacity(cfg.steps);
    for step in 0..cfg.steps {
        let batch = &order[step * cfg.batch_size..(step + 1) * cfg.batch_size];
        let total_paths: usize = batch.iter().map(|&i| prepared[i].targets.len()).sum();
        let mut grads = Gradients::zeros(store.len());
        let mut sq_err_sum = 0.0;
        for &si in batch {
            let p = &prepared[si];
            let mut g = Graph::new(&store);
            let fwd = model.forward(&mut g, &p.instance, norm)?;
            let pred = g.stack_rows(&fwd.outputs)?;
            let target = g.constant((p.targets.len(), 1), p.targets.clone())?;
            let loss = g.mse(pred, target)?;
            let value = g.scalar_value(loss)?;
            if !value.is_finite() {
                return Err(TrainError::NonFiniteLoss { step: step as u64, sample: si });
            }
            sq_err_sum += value * p.targets.len() as f64;
            let sample_grads = g.backward(loss)?;
            grads.add_scaled(&sample_grads, p.targets.len() as f64 / total_paths as f64);
        }
        store.adam_step(&grads, &cfg.adam)?;
        let loss = sq_err_sum / total_paths as f64 + store.l2_penalty(cfg.adam.l2_lambda);
        trace.push((store.step, loss));
    }
    Ok(TrainOutput { model, store, trace })
}

/// Metrics over pooled (prediction, label) pairs; non-positive labels
/// are excluded and counted.
pub fn metrics_from_pairs(pairs: &[(f64, f64)]) -> Metrics {
    let included: Vec<(f64, f64)> =
        pairs.iter().copied().filter(|&(_, y)| y > 0.0).collect();
    let excluded = pairs.len() - included.len();
    if included.is_empty() {
        return Metrics { mre: f64::NAN, r2: f64::NAN, excluded };
    }
    let n = included.len() as f64;
    let mre = included
        .iter()
        .map(|&(p, y)| (p - y).abs() / y)
        .sum::<f64>()
        / n;
    let mean_y = included.iter().map(|&(_, y)| y).sum::<f64>() / n;
    let ss_res: f64 = included.iter().map(|&(p, y)| (p - y) * (p - y)).sum();
    let ss_tot: f64 = included.iter().map(|&(_, y)| (y - mean_y) * (y - mean_y)).sum();
    let r2 = if ss_tot == 0.0 {
        if ss_res == 0.0 { 1.0 } else { f64::NEG_INFINITY }
    } else {
        1.0 - ss_res / ss_tot
    };
    Metrics { mre, r2, excluded }
}

/// Runs the model over every sample and pools per-path metrics.
pub fn evaluate(
    model: &GnnModel,
    store: &ParamStore,
    dataset: &Dataset,
    norm: &Normalization,
) -> Result<Metrics, TrainError> {
    let mut pairs = Vec::new();
    for s in &dataset.samples {
        let paths = resolve_paths(&s.scenario.topology, &s.scenario.routing, &s.tos)?;
        let instance = GraphInstance::new(&s.scenario, &paths, &s.tm)?;
        let preds = model.predict(store, &instance, norm)?;
        pairs.extend(preds.into_iter().zip(s.labels.iter().copied()));
    }
    Ok(metrics_from_pairs(&pairs))
}

/// Loss trace as `step loss` lines.
pub fn format_loss_trace(trace: &[(u64, f64)]) -> String {
    let mut out = String::new();
    for (step, loss) in trace {
        out.push_str(&format!("{step} {loss:.12e}\n"));
    }
    out
}

/// Largest number of points kept when rendering the loss curve.
const PLOT_MAX_POINTS: usize = 2000;

/// Renders the loss trace as an SVG line plot with a log-scale y axis,
/// downsampling long traces.
pub fn export_loss_curve(trace: &[(u64, f64)], path: &FsPath) -> Result<(), TrainError> {
    let stride = trace.len().div_ceil(PLOT_MAX_POINTS).max(1);
    let points: Vec<(u64, f64)> = trace
        .iter()
        .step_by(stride)
        .chain(trace.last().filter(|_| stride > 1))
        .copied()
        .collect();
    let (w, h, margin) = (720.0, 420.0, 50.0);
    let xs: Vec<f64> = points.iter().map(|&(s, _)| s as f64).collect();
    let ys: Vec<f64> = points
        .iter()
        .map(|&(_, l)| l.max(1e-300).log10())
        .collect();
    let (x0, x1) = (
        xs.iter().copied().fold(f64::INFINITY, f64::min),
        xs.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    );
    let (y0, y1) = (
        ys.iter().copied().fold(f64::INFINITY, f64::min),
        ys.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    );
    let sx = |x: f64| {
        let span = (x1 - x0).max(1e-12);
        margin + (x - x0) / span * (w - 2.0 * margin)
    };
    let sy = |y: f64| {
        let span = (y1 - y0).max(1e-12);
        h - margin - (y - y0) / span * (h - 2.0 * margin)
    };
    let mut poly = String::new();
    for (&x, &y) in xs.iter().zip(&ys) {
        poly.push_str(&format!("{:.2},{:.2} ", sx(x), sy(y)));
    }
    let svg = format!(
        concat!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" ",
            "viewBox=\"0 0 {w} {h}\">\n",
            "<rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>\n",
            "<text x=\"{tx}\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">",
            "training loss (log scale)</text>\n",
            "<text x=\"{tx}\" y=\"{bx}\" text-anchor=\"middle\" font-size=\"12\">step</text>\n",
            "<polyline fill=\"none\" stroke=\"#1f77b4\" stroke-width=\"1.5\" points=\"{poly}\"/>\n",
            "</svg>\n"
        ),
        w = w,
        h = h,
        tx = w / 2.0,
        bx = h - 10.0,
        poly = poly.trim_end(),
    );
    std::fs::write(path, svg)
        .map_err(|source| TrainError::Io { path: path.to_owned(), source })
}

/// Writes hyperparameters, normalization constants, and all parameters
/// (with optimizer state) to one binary checkpoint file.
pub fn save_checkpoint(
    path: &FsPath,
    cfg: ModelConfig,
    norm: &Normalization,
    store: &ParamStore,
) -> Result<(), TrainError> {
    let mut w = ByteWriter::new();
    w.magic(CHECKPOINT_MAGIC);
    w.u32(CHECKPOINT_VERSION);
    w.u64(cfg.hidden as u64);
    w.u64(cfg.iterations as u64);
    for v in [
        norm.cap_min,
        norm.cap_max,
        norm.bw_min,
        norm.bw_max,
        norm.label_mean,
        norm.label_std,
    ] {
        w.f64(v);
    }
    store.encode(&mut w);
    std::fs::write(path, w.into_bytes())
        .map_err(|source| TrainError::Io { path: path.to_owned(), source })
}

pub fn load_checkpoint(
    path: &FsPath,
) -> Result<(ModelConfig, Normalization, ParamStore), TrainError> {
    let bytes = std::fs::read(path)
        .map_err(|source| TrainError::Io { path: path.to_owned(), source })?;
    let decode = |bytes: &[u8]| -> Result<_, DecodeError> {
        let mut r = ByteReader::new(bytes);
        r.magic(CHECKPOINT_MAGIC)?;
        r.version(CHECKPOINT_VERSION)?;
        let cfg = ModelConfig {
            hidden: r.usize()?,
            iterations: r.usize()?,
        };
        let norm = Normalization {
            cap_min: r.f64()?,
            cap_max: r.f64()?,
            bw_min: r.f64()?,
            bw_max: r.f64()?,
            label_mean: r.f64()?,
            label_std: r.f64()?,
        };
        let store = ParamStore::decode(&mut r)?;
        r.finish()?;
        Ok((cfg, norm, store))
    };
    decode(&bytes).map_err(|source| TrainError::Decode { path: path.to_owned(), source })
}
