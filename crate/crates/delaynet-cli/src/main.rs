//! `delaynet` command line: dataset generation, training, evaluation,
//! and one-off simulations, each emitting a run manifest that pins the
//! exact configuration and file digests for reproducibility.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use sha2::{Digest, Sha256};

use delaynet::dataset::{self, GenConfig, TopologySource};
use delaynet::gnn::{GnnModel, ModelConfig};
use delaynet::netgraph::{read_topology_file, resolve_paths};
use delaynet::sim::{self, SimConfig};
use delaynet::tensor::AdamConfig;
use delaynet::traffic::parse_tm_file;
use delaynet::train::{
    self, TrainConfig, evaluate, export_loss_curve, format_loss_trace, load_checkpoint,
    save_checkpoint,
};

#[derive(Parser)]
#[command(name = "delaynet", version, about = "Per-path delay prediction toolkit")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Simulate scenarios and write a labelled dataset.
    Datagen(DatagenArgs),
    /// Train a model on a dataset.
    Train(TrainArgs),
    /// Evaluate a checkpoint on one or more datasets.
    Eval(EvalArgs),
    /// Run one simulation and print per-path delays.
    Simulate(SimulateArgs),
}

#[derive(Args, Serialize)]
struct DatagenArgs {
    /// Topology source: a topology file path, `random:N`, or `random:A-B`.
    #[arg(long)]
    topology: String,
    #[arg(long)]
    count: usize,
    #[arg(long, default_value_t = 400.0)]
    ti_min: f64,
    #[arg(long, default_value_t = 2000.0)]
    ti_max: f64,
    #[arg(long)]
    seed: u64,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Worker threads for parallel generation.
    #[arg(long, env = "DELAYNET_WORKERS")]
    workers: Option<usize>,
}

#[derive(Args, Serialize)]
struct TrainArgs {
    /// Training dataset file.
    #[arg(long)]
    data: PathBuf,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 2000)]
    steps: usize,
    #[arg(long, default_value_t = 8)]
    batch: usize,
    #[arg(long, default_value_t = 16)]
    hidden: usize,
    #[arg(long, default_value_t = 8)]
    iterations: usize,
    #[arg(long, default_value_t = 0.001)]
    lr: f64,
    #[arg(long, default_value_t = 0.6)]
    decay: f64,
    /// Steps between learning-rate decays; defaults to the total step
    /// count scaled by the reference schedule's interval fraction.
    #[arg(long)]
    decay_interval: Option<u64>,
    #[arg(long, default_value_t = 0.1)]
    l2: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Continue from an existing checkpoint instead of a fresh model.
    #[arg(long)]
    resume: Option<PathBuf>,
}

#[derive(Args, Serialize)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Dataset file; repeat for a per-dataset breakdown.
    #[arg(long, required = true)]
    data: Vec<PathBuf>,
    /// Optional output directory for the metrics report.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Serialize)]
struct SimulateArgs {
    /// Topology file.
    #[arg(long)]
    topology: PathBuf,
    /// Traffic matrix file.
    #[arg(long)]
    tm: PathBuf,
    #[arg(long, default_value_t = 20_000.0)]
    duration: f64,
    /// Simulation seed; defaults to the seed recorded in the TM file.
    #[arg(long)]
    seed: Option<u64>,
}

enum CliError {
    Usage(String),
    Runtime(String),
}

impl<E: std::error::Error> From<E> for CliError {
    fn from(e: E) -> Self {
        CliError::Runtime(e.to_string())
    }
}

type CliResult = Result<(), CliError>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.cmd {
        Cmd::Datagen(args) => cmd_datagen(&args),
        Cmd::Train(args) => cmd_train(&args),
        Cmd::Eval(args) => cmd_eval(&args),
        Cmd::Simulate(args) => cmd_simulate(&args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

/// Run metadata pinned next to every command's outputs.
#[derive(Serialize)]
struct RunManifest {
    command: String,
    version: String,
    config: serde_json::Value,
    /// SHA-256 digest per input file.
    inputs: BTreeMap<String, String>,
    /// SHA-256 digest per output file.
    outputs: BTreeMap<String, String>,
}

fn sha256_file(path: &Path) -> Result<String, CliError> {
    let bytes = std::fs::read(path)
        .map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
    let mut h = Sha256::new();
    h.update(&bytes);
    Ok(format!("{:x}", h.finalize()))
}

fn digests(paths: &[&Path]) -> Result<BTreeMap<String, String>, CliError> {
    paths
        .iter()
        .map(|p| Ok((p.display().to_string(), sha256_file(p)?)))
        .collect()
}

fn write_run_manifest(
    out_dir: &Path,
    command: &str,
    config: serde_json::Value,
    inputs: &[&Path],
    outputs: &[&Path],
) -> CliResult {
    let manifest = RunManifest {
        command: command.to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        config,
        inputs: digests(inputs)?,
        outputs: digests(outputs)?,
    };
    let path = out_dir.join("run_manifest.json");
    let json = serde_json::to_string_pretty(&manifest)
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    std::fs::write(&path, json)
        .map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
    Ok(())
}

fn ensure_out_dir(dir: &Path) -> CliResult {
    std::fs::create_dir_all(dir)
        .map_err(|e| CliError::Runtime(format!("{}: {e}", dir.display())))
}

fn parse_topology_source(spec: &str) -> Result<TopologySource, CliError> {
    if let Some(rest) = spec.strip_prefix("random:") {
        let parse_nodes = |s: &str| {
            s.parse::<usize>().ok().filter(|&n| n >= 2).ok_or_else(|| {
                CliError::Usage(format!(
                    "invalid node count `{s}` in `--topology {spec}` (need an integer >= 2)"
                ))
            })
        };
        let (lo, hi) = match rest.split_once('-') {
            Some((a, b)) => (parse_nodes(a)?, parse_nodes(b)?),
            None => {
                let n = parse_nodes(rest)?;
                (n, n)
            }
        };
        if lo > hi {
            return Err(CliError::Usage(format!(
                "empty node range in `--topology {spec}`"
            )));
        }
        return Ok(TopologySource::Random { min_nodes: lo, max_nodes: hi });
    }
    let path = Path::new(spec);
    let scenario = read_topology_file(path)?;
    Ok(TopologySource::Fixed {
        scenario,
        name: spec.to_string(),
    })
}

fn cmd_datagen(args: &DatagenArgs) -> CliResult {
    if let Some(workers) = args.workers {
        // Ignore failure: the global pool may already exist (tests).
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build_global();
    }
    let source = parse_topology_source(&args.topology)?;
    let cfg = GenConfig {
        count: args.count,
        ti_min: args.ti_min,
        ti_max: args.ti_max,
        master_seed: args.seed,
    };
    let ds = dataset::generate(&source, &cfg)?;
    ensure_out_dir(&args.out)?;
    let data_path = args.out.join("dataset.bin");
    dataset::write(&ds, &data_path)?;
    let manifest_path = dataset::manifest_path(&data_path);
    println!(
        "wrote {} samples to {} ({} regenerated)",
        ds.samples.len(),
        data_path.display(),
        ds.manifest.regenerated
    );
    let inputs: Vec<&Path> = match &source {
        TopologySource::Fixed { name, .. } => vec![Path::new(name.as_str())],
        TopologySource::Random { .. } => vec![],
    };
    write_run_manifest(
        &args.out,
        "datagen",
        serde_json::to_value(args).map_err(|e| CliError::Runtime(e.to_string()))?,
        &inputs,
        &[&data_path, &manifest_path],
    )
}

/// Reference schedule: the learning rate decays every 80,000 of
/// 450,000 steps; desk-scale runs keep that proportion.
fn default_decay_interval(steps: usize) -> u64 {
    ((steps as f64 * 80_000.0 / 450_000.0).round() as u64).max(1)
}

fn cmd_train(args: &TrainArgs) -> CliResult {
    let ds = dataset::read(&args.data)?;
    let adam = AdamConfig {
        lr0: args.lr,
        decay: args.decay,
        decay_interval: args.decay_interval.unwrap_or(default_decay_interval(args.steps)),
        l2_lambda: args.l2,
        ..AdamConfig::default()
    };
    let cfg = TrainConfig {
        steps: args.steps,
        batch_size: args.batch,
        adam,
        seed: args.seed,
    };

    let (model_cfg, norm, output) = match &args.resume {
        Some(ckpt) => {
            let (model_cfg, norm, store) = load_checkpoint(ckpt)?;
            let model = GnnModel::from_store(model_cfg, &store).ok_or_else(|| {
                CliError::Runtime(format!(
                    "{}: checkpoint is missing model parameters",
                    ckpt.display()
                ))
            })?;
            let out = train::resume(&ds, &cfg, model, store, &norm)?;
            (model_cfg, norm, out)
        }
        None => {
            let model_cfg = ModelConfig {
                hidden: args.hidden,
                iterations: args.iterations,
            };
            let norm = ds.manifest.normalization.clone();
            let out = train::train(&ds, model_cfg, &cfg)?;
            (model_cfg, norm, out)
        }
    };

    ensure_out_dir(&args.out)?;
    let ckpt_path = args.out.join("model.ckpt");
    save_checkpoint(&ckpt_path, model_cfg, &norm, &output.store)?;
    let trace_path = args.out.join("loss_trace.txt");
    std::fs::write(&trace_path, format_loss_trace(&output.trace))
        .map_err(|e| CliError::Runtime(format!("{}: {e}", trace_path.display())))?;
    let curve_path = args.out.join("loss_curve.svg");
    export_loss_curve(&output.trace, &curve_path)?;
    let final_loss = output.trace.last().map(|&(_, l)| l).unwrap_or(f64::NAN);
    println!(
        "trained {} steps, final loss {final_loss:.6e}, checkpoint {}",
        output.trace.len(),
        ckpt_path.display()
    );
    write_run_manifest(
        &args.out,
        "train",
        serde_json::to_value(args).map_err(|e| CliError::Runtime(e.to_string()))?,
        &[&args.data],
        &[&ckpt_path, &trace_path, &curve_path],
    )
}

fn cmd_eval(args: &EvalArgs) -> CliResult {
    let (model_cfg, norm, store) = load_checkpoint(&args.checkpoint)?;
    let model = GnnModel::from_store(model_cfg, &store).ok_or_else(|| {
        CliError::Runtime(format!(
            "{}: checkpoint is missing model parameters",
            args.checkpoint.display()
        ))
    })?;
    let mut report = String::new();
    for path in &args.data {
        let ds = dataset::read(path)?;
        if ds.samples.is_empty() {
            return Err(CliError::Runtime(format!(
                "{}: dataset has no samples to evaluate",
                path.display()
            )));
        }
        let metrics = evaluate(&model, &store, &ds, &norm)?;
        let line = format!(
            "dataset {} ({}): mre {:.4} r2 {:.4} excluded {}",
            path.display(),
            ds.manifest.topology_source,
            metrics.mre,
            metrics.r2,
            metrics.excluded
        );
        println!("{line}");
        report.push_str(&line);
        report.push('\n');
    }
    if let Some(out) = &args.out {
        ensure_out_dir(out)?;
        let report_path = out.join("metrics.txt");
        std::fs::write(&report_path, &report)
            .map_err(|e| CliError::Runtime(format!("{}: {e}", report_path.display())))?;
        let mut inputs: Vec<&Path> = vec![args.checkpoint.as_path()];
        inputs.extend(args.data.iter().map(|p| p.as_path()));
        write_run_manifest(
            out,
            "eval",
            serde_json::to_value(args).map_err(|e| CliError::Runtime(e.to_string()))?,
            &inputs,
            &[&report_path],
        )?;
    }
    Ok(())
}

fn cmd_simulate(args: &SimulateArgs) -> CliResult {
    let scenario = read_topology_file(&args.topology)?;
    let text = std::fs::read_to_string(&args.tm)
        .map_err(|e| CliError::Runtime(format!("{}: {e}", args.tm.display())))?;
    let (tm, tos, file_seed) = parse_tm_file(&text)?;
    let seed = args.seed.unwrap_or(file_seed);
    let cfg = SimConfig::new(args.duration, seed);
    let result = sim::run(&scenario, &tos, &tm, &cfg)?;
    let paths = resolve_paths(&scenario.topology, &scenario.routing, &tos)?;
    for (path, stats) in paths.iter().zip(&result.paths) {
        match stats.mean_delay() {
            Some(d) => println!(
                "path {} {} delay {:.6} delivered {}",
                path.src, path.dst, d, stats.delivered
            ),
            None => println!("path {} {} delay - delivered 0", path.src, path.dst),
        }
    }
    println!("loss {:.6}", result.loss);
    println!("seed {seed}");
    Ok(())
}
