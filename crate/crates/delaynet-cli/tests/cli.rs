//! End-to-end tests driving the compiled `delaynet` binary.

use std::path::Path;
use std::process::{Command, Output};

use delaynet::netgraph::{
    Link, Policy, Port, QueueConfig, RoutingTable, Scenario, Topology, TosAssignment,
    write_topology_file, TOS_CLASSES,
};
use delaynet::traffic::{TrafficMatrix, write_tm_file};
use delaynet::train::load_checkpoint;
use tempfile::tempdir;

fn delaynet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_delaynet"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn two_node_scenario() -> Scenario {
    let links = vec![
        Link { src: 0, dst: 1, capacity: 1000.0 },
        Link { src: 1, dst: 0, capacity: 1000.0 },
    ];
    let ports = links
        .iter()
        .enumerate()
        .map(|(i, l)| Port {
            node: l.src,
            link: i,
            policy: Policy::Fifo,
            queues: vec![QueueConfig { size_packets: 32, priority: 0, weight: 1.0 }],
            tos_map: [0; TOS_CLASSES],
        })
        .collect();
    let mut routing = RoutingTable::new(2);
    routing.set(0, 1, 1);
    routing.set(1, 0, 0);
    Scenario {
        topology: Topology { node_count: 2, links, ports },
        routing,
    }
}

#[test]
fn datagen_is_deterministic_across_runs() {
    let dir = tempdir().unwrap();
    let run = |name: &str| {
        let out_dir = dir.path().join(name);
        let out = delaynet(&[
            "datagen",
            "--topology",
            "random:4",
            "--count",
            "2",
            "--seed",
            "7",
            "--ti-min",
            "500",
            "--ti-max",
            "500",
            "--out",
            out_dir.to_str().unwrap(),
        ]);
        assert!(out.status.success(), "{}", stderr(&out));
        out_dir
    };
    let a = run("a");
    let b = run("b");
    let bytes_a = std::fs::read(a.join("dataset.bin")).unwrap();
    let bytes_b = std::fs::read(b.join("dataset.bin")).unwrap();
    assert_eq!(bytes_a, bytes_b);
    assert!(a.join("dataset.bin.manifest.json").exists());
    assert!(a.join("run_manifest.json").exists());
}

#[test]
fn missing_out_flag_is_a_usage_error() {
    let out = delaynet(&[
        "datagen",
        "--topology",
        "random:4",
        "--count",
        "1",
        "--seed",
        "1",
    ]);
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
}

#[test]
fn malformed_topology_spec_is_a_usage_error() {
    let dir = tempdir().unwrap();
    let out = delaynet(&[
        "datagen",
        "--topology",
        "random:zero",
        "--count",
        "1",
        "--seed",
        "1",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
    assert!(stderr(&out).contains("random:zero"));
}

#[test]
fn datagen_train_eval_resume_pipeline() {
    let dir = tempdir().unwrap();
    let data_dir = dir.path().join("data");
    let out = delaynet(&[
        "datagen",
        "--topology",
        "random:3-4",
        "--count",
        "3",
        "--seed",
        "9",
        "--ti-min",
        "600",
        "--ti-max",
        "900",
        "--out",
        data_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let data = data_dir.join("dataset.bin");

    let train_dir = dir.path().join("train");
    let out = delaynet(&[
        "train",
        "--data",
        data.to_str().unwrap(),
        "--out",
        train_dir.to_str().unwrap(),
        "--steps",
        "4",
        "--batch",
        "1",
        "--hidden",
        "6",
        "--iterations",
        "2",
        "--seed",
        "5",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let ckpt = train_dir.join("model.ckpt");
    let trace = std::fs::read_to_string(train_dir.join("loss_trace.txt")).unwrap();
    assert_eq!(trace.lines().count(), 4);
    assert!(train_dir.join("loss_curve.svg").exists());
    assert!(train_dir.join("run_manifest.json").exists());

    let out = delaynet(&[
        "eval",
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--data",
        data.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("mre") && text.contains("r2"), "{text}");

    let resume_dir = dir.path().join("resume");
    let out = delaynet(&[
        "train",
        "--data",
        data.to_str().unwrap(),
        "--out",
        resume_dir.to_str().unwrap(),
        "--steps",
        "2",
        "--batch",
        "1",
        "--seed",
        "5",
        "--resume",
        ckpt.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let (_, _, store) = load_checkpoint(&resume_dir.join("model.ckpt")).unwrap();
    assert_eq!(store.step, 6);
}

#[test]
fn eval_with_missing_checkpoint_fails_cleanly() {
    let dir = tempdir().unwrap();
    let out = delaynet(&[
        "eval",
        "--checkpoint",
        dir.path().join("nope.ckpt").to_str().unwrap(),
        "--data",
        dir.path().join("nope.bin").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1), "{}", stderr(&out));
}

fn write_sim_inputs(dir: &Path) -> (std::path::PathBuf, std::path::PathBuf) {
    let scenario = two_node_scenario();
    let topo_path = dir.join("topo.txt");
    std::fs::write(&topo_path, write_topology_file(&scenario)).unwrap();
    let mut tm = TrafficMatrix::new(2, 400.0);
    tm.set(0, 1, 10.0);
    tm.set(1, 0, 10.0);
    let tos = TosAssignment::new(2);
    let tm_path = dir.join("tm.txt");
    std::fs::write(&tm_path, write_tm_file(&tm, &tos, 77)).unwrap();
    (topo_path, tm_path)
}

#[test]
fn simulate_reports_paths_and_repeats_under_a_seed() {
    let dir = tempdir().unwrap();
    let (topo, tm) = write_sim_inputs(dir.path());
    let run = || {
        let out = delaynet(&[
            "simulate",
            "--topology",
            topo.to_str().unwrap(),
            "--tm",
            tm.to_str().unwrap(),
            "--duration",
            "100000",
        ]);
        assert!(out.status.success(), "{}", stderr(&out));
        stdout(&out)
    };
    let text = run();
    assert!(text.contains("path 0 1 delay"), "{text}");
    assert!(text.contains("loss 0.000000"), "{text}");
    assert_eq!(text, run());

    // At 10 bits per time unit the port is essentially idle, so the
    // measured delay is close to a mean transmission time (2720 bits at
    // capacity 1000).
    let delay: f64 = text
        .lines()
        .find(|l| l.starts_with("path 0 1"))
        .unwrap()
        .split_whitespace()
        .nth(4)
        .unwrap()
        .parse()
        .unwrap();
    assert!((delay - 2.72).abs() < 1.0, "delay {delay}");
}

#[test]
fn simulate_rejects_invalid_scenarios() {
    let dir = tempdir().unwrap();
    let (topo, tm) = write_sim_inputs(dir.path());
    // Corrupt the capacity of the first link.
    let text = std::fs::read_to_string(&topo).unwrap();
    let broken = text.replace("link 0 1 1000", "link 0 1 -5");
    std::fs::write(&topo, broken).unwrap();
    let out = delaynet(&[
        "simulate",
        "--topology",
        topo.to_str().unwrap(),
        "--tm",
        tm.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1), "{}", stderr(&out));
    assert!(stderr(&out).contains("capacity"), "{}", stderr(&out));
}
