//! Traffic model: random traffic matrices, per-flow Poisson arrival
//! processes and packet size distributions.
//!
//! Every (src, dst) entry of the traffic matrix is an independent draw
//! of `U(0.1, 1) * TI / (N - 1)` bits per time unit, where `TI` is the
//! overall traffic intensity. Packet interarrival times are exponential
//! with the rate derived from the entry and the mean packet size.

use rand::Rng;
use thiserror::Error;

use crate::netgraph::{NodeId, TosAssignment, TOS_CLASSES};

/// Lowest admissible traffic intensity (uncongested network).
pub const TI_MIN: f64 = 400.0;
/// Highest admissible traffic intensity (a few percent of packet loss).
pub const TI_MAX: f64 = 2000.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TrafficError {
    #[error("traffic intensity {0} outside [{TI_MIN}, {TI_MAX}]")]
    IntensityOutOfRange(f64),
    #[error("node count {0} too small, need at least 2")]
    TooFewNodes(usize),
}

/// Average offered bandwidth per ordered (src, dst) pair.
#[derive(Debug, Clone, PartialEq)]
pub struct TrafficMatrix {
    n: usize,
    /// Overall traffic intensity the matrix was drawn at.
    pub ti: f64,
    entries: Vec<f64>,
}

impl TrafficMatrix {
    pub fn new(node_count: usize, ti: f64) -> Self {
        TrafficMatrix {
            n: node_count,
            ti,
            entries: vec![0.0; node_count * node_count],
        }
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn set(&mut self, src: NodeId, dst: NodeId, bandwidth: f64) {
        assert_ne!(src, dst, "traffic matrix has no diagonal entries");
        self.entries[src * self.n + dst] = bandwidth;
    }

    /// Average bandwidth in bits per time unit for the flow src -> dst.
    pub fn get(&self, src: NodeId, dst: NodeId) -> f64 {
        self.entries[src * self.n + dst]
    }
}

/// Draws a full traffic matrix at intensity `ti`.
pub fn generate_tm(
    node_count: usize,
    ti: f64,
    rng: &mut impl Rng,
) -> Result<TrafficMatrix, TrafficError> {
    if node_count < 2 {
        return Err(TrafficError::TooFewNodes(node_count));
    }
    if !(TI_MIN..=TI_MAX).contains(&ti) {
        return Err(TrafficError::IntensityOutOfRange(ti));
    }
    let mut tm = TrafficMatrix::new(node_count, ti);
    let scale = ti / (node_count as f64 - 1.0);
    for src in 0..node_count {
        for dst in 0..node_count {
            if src != dst {
                tm.set(src, dst, rng.gen_range(0.1..=1.0) * scale);
            }
        }
    }
    Ok(tm)
}

/// Draws a random ToS class for every (src, dst) flow.
pub fn random_tos_assignment(node_count: usize, rng: &mut impl Rng) -> TosAssignment {
    let mut tos = TosAssignment::new(node_count);
    for src in 0..node_count {
        for dst in 0..node_count {
            if src != dst {
                tos.set(src, dst, rng.gen_range(0..TOS_CLASSES as u8));
            }
        }
    }
    tos
}

/// Packet size distribution of a flow, in bits.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SizeDist {
    /// Two packet sizes; `p_small` is the probability of the small one.
    Bimodal { small: f64, large: f64, p_small: f64 },
    /// Exponential sizes, used to reproduce M/M/1 service conditions in
    /// validation runs.
    Exponential { mean: f64 },
}

/// Default bimodal mix: short control packets and full-size data
/// packets. The exact split is configuration, not ground truth.
pub const DEFAULT_SIZE_DIST: SizeDist = SizeDist::Bimodal {
    small: 400.0,
    large: 12000.0,
    p_small: 0.8,
};

impl SizeDist {
    pub fn mean(&self) -> f64 {
        match *self {
            SizeDist::Bimodal { small, large, p_small } => {
                p_small * small + (1.0 - p_small) * large
            }
            SizeDist::Exponential { mean } => mean,
        }
    }

    pub fn sample(&self, rng: &mut impl Rng) -> f64 {
        match *self {
            SizeDist::Bimodal { small, large, p_small } => {
                if rng.gen::<f64>() < p_small {
                    small
                } else {
                    large
                }
            }
            SizeDist::Exponential { mean } => exponential(mean, rng),
        }
    }
}

/// One source-destination traffic flow.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowSpec {
    /// Average offered bandwidth, from the traffic matrix.
    pub rate_bits: f64,
    pub tos: u8,
    pub sizes: SizeDist,
}

impl FlowSpec {
    /// Packets per time unit: offered bits divided by the mean size, so
    /// the average offered load in bits matches the matrix entry.
    pub fn packet_rate(&self) -> f64 {
        self.rate_bits / self.sizes.mean()
    }
}

/// Time until the flow's next packet (exponential, Poisson arrivals).
pub fn next_interarrival(flow: &FlowSpec, rng: &mut impl Rng) -> f64 {
    exponential(1.0 / flow.packet_rate(), rng)
}

/// Size of the flow's next packet in bits.
pub fn next_packet_size(flow: &FlowSpec, rng: &mut impl Rng) -> f64 {
    flow.sizes.sample(rng)
}

/// Inverse-transform exponential sampling. `gen::<f64>()` lies in
/// [0, 1), so `1 - u` is strictly positive and the result finite.
fn exponential(mean: f64, rng: &mut impl Rng) -> f64 {
    let u: f64 = rng.gen();
    -(1.0 - u).ln() * mean
}

/// Serializes a traffic matrix plus its flow ToS labels.
///
/// One `flow <src> <dst> <bandwidth> <tos>` line per pair, after a
/// header of `tm ti=<ti> n=<n> seed=<seed>`.
pub fn write_tm_file(tm: &TrafficMatrix, tos: &TosAssignment, seed: u64) -> String {
    use std::fmt::Write as _;
    let mut out = String::new();
    let _ = writeln!(out, "tm ti={} n={} seed={}", tm.ti, tm.n, seed);
    for src in 0..tm.n {
        for dst in 0..tm.n {
            if src != dst {
                let _ = writeln!(out, "flow {src} {dst} {} {}", tm.get(src, dst), tos.get(src, dst));
            }
        }
    }
    out
}

#[derive(Debug, Error)]
pub enum TmFileError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("missing `tm` header line")]
    MissingHeader,
}

/// Parses the format written by [`write_tm_file`]. Returns the matrix,
/// the ToS assignment and the recorded seed.
pub fn parse_tm_file(text: &str) -> Result<(TrafficMatrix, TosAssignment, u64), TmFileError> {
    let mut tm: Option<TrafficMatrix> = None;
    let mut tos: Option<TosAssignment> = None;
    let mut seed = 0u64;
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let tokens: Vec<&str> = line.split_whitespace().collect();
        match tokens[0] {
            "tm" => {
                let mut ti = None;
                let mut n = None;
                for tok in &tokens[1..] {
                    match tok.split_once('=') {
                        Some(("ti", v)) => ti = v.parse::<f64>().ok(),
                        Some(("n", v)) => n = v.parse::<usize>().ok(),
                        Some(("seed", v)) => {
                            seed = v.parse().map_err(|_| TmFileError::Malformed {
                                line: line_no,
                                message: format!("bad seed `{v}`"),
                            })?
                        }
                        _ => {
                            return Err(TmFileError::Malformed {
                                line: line_no,
                                message: format!("unknown header field `{tok}`"),
                            })
                        }
                    }
                }
                let (Some(ti), Some(n)) = (ti, n) else {
                    return Err(TmFileError::Malformed {
                        line: line_no,
                        message: "header needs ti= and n=".into(),
                    });
                };
                tm = Some(TrafficMatrix::new(n, ti));
                tos = Some(TosAssignment::new(n));
            }
            "flow" => {
                let (Some(tm), Some(tos)) = (tm.as_mut(), tos.as_mut()) else {
                    return Err(TmFileError::MissingHeader);
                };
                let [_, src, dst, bw, t] = tokens[..] else {
                    return Err(TmFileError::Malformed {
                        line: line_no,
                        message: "expected `flow <src> <dst> <bandwidth> <tos>`".into(),
                    });
                };
                let parse = |tok: &str, what: &str| -> Result<usize, TmFileError> {
                    tok.parse().map_err(|_| TmFileError::Malformed {
                        line: line_no,
                        message: format!("invalid {what} `{tok}`"),
                    })
                };
                let src = parse(src, "src")?;
                let dst = parse(dst, "dst")?;
                let bw: f64 = bw.parse().map_err(|_| TmFileError::Malformed {
                    line: line_no,
                    message: format!("invalid bandwidth `{bw}`"),
                })?;
                tm.set(src, dst, bw);
                tos.set(src, dst, parse(t, "tos")? as u8);
            }
            other => {
                return Err(TmFileError::Malformed {
                    line: line_no,
                    message: format!("unknown keyword `{other}`"),
                })
            }
        }
    }
    match (tm, tos) {
        (Some(tm), Some(tos)) => Ok((tm, tos, seed)),
        _ => Err(TmFileError::MissingHeader),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    #[test]
    fn single_pair_matrix_is_forced() {
        // With N=2 the scale factor is TI itself; a full draw hits TI.
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        let tm = generate_tm(2, 400.0, &mut rng).unwrap();
        let scale = 400.0;
        assert!(tm.get(0, 1) >= 0.1 * scale && tm.get(0, 1) <= scale);
    }

    #[test]
    fn entries_respect_bounds() {
        let mut rng = ChaCha12Rng::seed_from_u64(2);
        let tm = generate_tm(14, 2000.0, &mut rng).unwrap();
        let lo = 0.1 * 2000.0 / 13.0;
        let hi = 2000.0 / 13.0;
        for src in 0..14 {
            for dst in 0..14 {
                if src != dst {
                    let v = tm.get(src, dst);
                    assert!(v >= lo && v <= hi, "{v} outside [{lo}, {hi}]");
                }
            }
        }
    }

    #[test]
    fn entry_mean_matches_uniform_expectation() {
        // E[U(0.1, 1)] = 0.55, so an entry averages 0.55 * TI / (N-1).
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        let mut sum = 0.0;
        let reps = 10_000;
        for _ in 0..reps {
            let tm = generate_tm(5, 1000.0, &mut rng).unwrap();
            sum += tm.get(0, 1);
        }
        let mean = sum / reps as f64;
        let expected = 0.55 * 1000.0 / 4.0;
        // Per-draw std is 0.9/sqrt(12) * 250; 3 sigma of the mean.
        let sigma = 0.9 / 12f64.sqrt() * 250.0 / (reps as f64).sqrt();
        assert!((mean - expected).abs() < 3.0 * sigma, "mean {mean}");
    }

    #[test]
    fn entries_are_independent_across_seeds() {
        // Empirical correlation of two fixed entries over many seeds.
        let reps = 4000;
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for seed in 0..reps {
            let mut rng = ChaCha12Rng::seed_from_u64(seed);
            let tm = generate_tm(5, 1000.0, &mut rng).unwrap();
            xs.push(tm.get(0, 1));
            ys.push(tm.get(3, 2));
        }
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        let (mx, my) = (mean(&xs), mean(&ys));
        let mut cov = 0.0;
        let mut vx = 0.0;
        let mut vy = 0.0;
        for i in 0..xs.len() {
            cov += (xs[i] - mx) * (ys[i] - my);
            vx += (xs[i] - mx).powi(2);
            vy += (ys[i] - my).powi(2);
        }
        let corr = cov / (vx.sqrt() * vy.sqrt());
        // Null correlation has std about 1/sqrt(reps).
        assert!(corr.abs() < 3.0 / (reps as f64).sqrt(), "corr {corr}");
    }

    #[test]
    fn ti_out_of_range_is_an_error() {
        let mut rng = ChaCha12Rng::seed_from_u64(0);
        assert!(matches!(
            generate_tm(5, 399.9, &mut rng),
            Err(TrafficError::IntensityOutOfRange(_))
        ));
        assert!(matches!(
            generate_tm(5, 2000.1, &mut rng),
            Err(TrafficError::IntensityOutOfRange(_))
        ));
    }

    #[test]
    fn interarrival_mean_matches_rate() {
        let flow = FlowSpec {
            rate_bits: 2.0 * DEFAULT_SIZE_DIST.mean(),
            tos: 0,
            sizes: DEFAULT_SIZE_DIST,
        };
        assert!((flow.packet_rate() - 2.0).abs() < 1e-12);
        let mut rng = ChaCha12Rng::seed_from_u64(4);
        let n = 1_000_000;
        let mut sum = 0.0;
        for _ in 0..n {
            let dt = next_interarrival(&flow, &mut rng);
            assert!(dt.is_finite() && dt >= 0.0);
            sum += dt;
        }
        let mean = sum / n as f64;
        assert!((mean - 0.5).abs() / 0.5 < 0.01, "mean {mean}");
    }

    #[test]
    fn interarrival_is_deterministic_under_seed() {
        let flow = FlowSpec { rate_bits: 1000.0, tos: 0, sizes: DEFAULT_SIZE_DIST };
        let draw = |seed| {
            let mut rng = ChaCha12Rng::seed_from_u64(seed);
            (0..100).map(|_| next_interarrival(&flow, &mut rng)).collect::<Vec<_>>()
        };
        assert_eq!(draw(9), draw(9));
        assert_ne!(draw(9), draw(10));
    }

    #[test]
    fn degenerate_bimodal_always_small() {
        let flow = FlowSpec {
            rate_bits: 100.0,
            tos: 0,
            sizes: SizeDist::Bimodal { small: 400.0, large: 12000.0, p_small: 1.0 },
        };
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        for _ in 0..1000 {
            assert_eq!(next_packet_size(&flow, &mut rng), 400.0);
        }
    }

    #[test]
    fn bimodal_mean_and_symmetry() {
        let mut rng = ChaCha12Rng::seed_from_u64(6);
        let dist = SizeDist::Bimodal { small: 400.0, large: 12000.0, p_small: 0.8 };
        let n = 100_000;
        let mean: f64 = (0..n).map(|_| dist.sample(&mut rng)).sum::<f64>() / n as f64;
        assert!((mean - 2720.0).abs() / 2720.0 < 0.02, "mean {mean}");

        let half = SizeDist::Bimodal { small: 1.0, large: 2.0, p_small: 0.5 };
        let smalls = (0..n).filter(|_| half.sample(&mut rng) == 1.0).count();
        let freq = smalls as f64 / n as f64;
        let sigma = 0.5 / (n as f64).sqrt();
        assert!((freq - 0.5).abs() < 3.0 * sigma, "freq {freq}");
    }

    #[test]
    fn tm_file_round_trips() {
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        let tm = generate_tm(4, 800.0, &mut rng).unwrap();
        let tos = random_tos_assignment(4, &mut rng);
        let text = write_tm_file(&tm, &tos, 7);
        let (tm2, tos2, seed) = parse_tm_file(&text).unwrap();
        assert_eq!(tm2, tm);
        assert_eq!(tos2, tos);
        assert_eq!(seed, 7);
    }

    #[test]
    fn tm_file_rejects_garbage() {
        assert!(parse_tm_file("flow 0 1 5 0\n").is_err());
        assert!(parse_tm_file("tm ti=400 n=2\nwhatever\n").is_err());
    }
}
