//! Timing harness over key length and graph size.
//!
//! Every cell of `{key length} x {vertex count}` runs the chosen suite for a
//! number of iterations and reports mean, standard deviation and median of
//! wall time.
//! The issuing suite reports three rows: the recipient's commitment to `m_0`
//! (`issue_commit`), the signer's partial signature (`issue_signer`, which
//! includes checking the commitment proof and encoding the graph) and the
//! recipient's completion (`issue_recipient`).
//!
//! Cells of one iteration share a seed (common random numbers): within an
//! iteration every vertex count sees the same `m_0`, blinding, `v''` and prime
//! search for `e`, so differences between cells come from the graph size.
//! Cells are interleaved per iteration so slow drift in machine load spreads
//! over all of them, and the order rotates between iterations so no vertex
//! count always runs first.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use num_bigint::BigUint;
use rand::rngs::OsRng;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::clsig::{self, Credential, OracleInput};
use crate::gencoding::{self, EncodingScheme, Graph};
use crate::keys::{self, ExtendedKeyPair, GraphParams, KeyError, KeyGenParams};
use crate::orchestration::{self, OrchestrationError};
use crate::zkp::{self, Predicate, ProofStore, ZkpError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Suite {
    Keygen,
    Extend,
    Issue,
    Prove,
    Verify,
}

impl Suite {
    pub const ALL: [Suite; 5] = [Suite::Keygen, Suite::Extend, Suite::Issue, Suite::Prove, Suite::Verify];
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Suite::Keygen => "keygen",
            Suite::Extend => "extend",
            Suite::Issue => "issue",
            Suite::Prove => "prove",
            Suite::Verify => "verify",
        })
    }
}

impl FromStr for Suite {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Suite::ALL.into_iter().find(|suite| suite.to_string() == s).ok_or_else(|| format!("unknown suite {s:?}"))
    }
}

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error(transparent)]
    Key(#[from] KeyError),
    #[error(transparent)]
    Clsig(#[from] clsig::ClsigError),
    #[error(transparent)]
    Zkp(#[from] ZkpError),
    #[error(transparent)]
    Protocol(#[from] OrchestrationError),
    #[error(transparent)]
    Encoding(#[from] gencoding::EncodingError),
    #[error("honest proof rejected during benchmark")]
    Rejected,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BenchConfig {
    pub suites: Vec<Suite>,
    pub key_bits: Vec<u32>,
    pub vertices: Vec<usize>,
    pub iterations: usize,
    /// Fixes the per-iteration seeds; `None` draws them from the OS.
    pub seed: Option<u64>,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self { suites: Suite::ALL.to_vec(), key_bits: vec![512], vertices: vec![1, 3, 5, 8], iterations: 10, seed: None }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub suite: String,
    pub key_bits: u32,
    pub vertices: usize,
    pub edges: usize,
    pub iterations: usize,
    pub mean_ms: f64,
    pub stddev_ms: f64,
    pub median_ms: f64,
    /// Per-iteration times in milliseconds, in iteration order. Rows of one
    /// run line up: sample `i` of every cell used the same seed.
    pub samples_ms: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Report {
    pub rows: Vec<Row>,
}

pub const CSV_HEADER: &str = "suite,key_bits,vertices,edges,iterations,mean_ms,stddev_ms,median_ms";

impl Report {
    pub fn find(&self, suite: &str, key_bits: u32, vertices: usize) -> Option<&Row> {
        self.rows.iter().find(|r| r.suite == suite && r.key_bits == key_bits && r.vertices == vertices)
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("{CSV_HEADER}\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{:.3},{:.3},{:.3}\n",
                r.suite, r.key_bits, r.vertices, r.edges, r.iterations, r.mean_ms, r.stddev_ms, r.median_ms
            ));
        }
        out
    }

    pub fn to_table(&self) -> String {
        let mut out = format!(
            "{:<18} {:>8} {:>8} {:>6} {:>6} {:>12} {:>12} {:>12}\n",
            "suite", "key_bits", "vertices", "edges", "iter", "mean_ms", "stddev_ms", "median_ms"
        );
        for r in &self.rows {
            out.push_str(&format!(
                "{:<18} {:>8} {:>8} {:>6} {:>6} {:>12.3} {:>12.3} {:>12.3}\n",
                r.suite, r.key_bits, r.vertices, r.edges, r.iterations, r.mean_ms, r.stddev_ms, r.median_ms
            ));
        }
        out
    }
}

/// Mean and sample standard deviation in milliseconds.
pub fn summarize(samples: &[Duration]) -> (f64, f64) {
    if samples.is_empty() {
        return (0.0, 0.0);
    }
    let ms: Vec<f64> = samples.iter().map(|d| d.as_secs_f64() * 1e3).collect();
    let n = ms.len() as f64;
    let mean = ms.iter().sum::<f64>() / n;
    if ms.len() < 2 {
        return (mean, 0.0);
    }
    let var = ms.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Median in milliseconds; the mean of the two middle samples for even counts.
pub fn median(samples: &[Duration]) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    let mut ms: Vec<f64> = samples.iter().map(|d| d.as_secs_f64() * 1e3).collect();
    ms.sort_by(f64::total_cmp);
    let mid = ms.len() / 2;
    if ms.len() % 2 == 0 {
        (ms[mid - 1] + ms[mid]) / 2.0
    } else {
        ms[mid]
    }
}

/// Cycle over `n` vertices labelled round-robin with country codes; a path
/// for `n < 3`.
pub fn ring_graph(n: usize) -> Graph {
    let mut g = Graph::new();
    let labels = ["DE", "FR", "IT", "ES", "NL", "BE", "AT", "PL"];
    for i in 0..n {
        g.add_vertex(&format!("v{i}"), [labels[i % labels.len()]]).expect("fresh vertex id");
    }
    for i in 1..n {
        g.add_edge(&format!("v{}", i - 1), &format!("v{i}"), Vec::<String>::new()).expect("fresh edge");
    }
    if n >= 3 {
        g.add_edge(&format!("v{}", n - 1), "v0", Vec::<String>::new()).expect("fresh edge");
    }
    g
}

pub fn ring_edges(n: usize) -> usize {
    match n {
        0 | 1 => 0,
        2 => 1,
        n => n,
    }
}

/// Scheme used by the bench: country codes above `2^8`, leaving headroom
/// below `l_m` even at the test profile.
pub fn bench_scheme() -> EncodingScheme {
    EncodingScheme::by_id("geolocation/8").expect("built-in scheme")
}

pub fn params_for(bits: u32) -> KeyGenParams {
    if bits == KeyGenParams::test_profile().l_n {
        KeyGenParams::test_profile()
    } else {
        KeyGenParams::with_modulus_bits(bits)
    }
}

/// Independent generator for `(iteration seed, stream)`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

struct Cells {
    samples: BTreeMap<(String, u32, usize), Vec<Duration>>,
}

impl Cells {
    fn new() -> Self {
        Self { samples: BTreeMap::new() }
    }

    fn push(&mut self, suite: impl Into<String>, bits: u32, vertices: usize, d: Duration) {
        self.samples.entry((suite.into(), bits, vertices)).or_default().push(d);
    }

    fn into_rows(self, order: &[String]) -> Vec<Row> {
        let mut rows: Vec<Row> = self
            .samples
            .into_iter()
            .map(|((suite, key_bits, vertices), s)| {
                let (mean_ms, stddev_ms) = summarize(&s);
                let median_ms = median(&s);
                let edges = if suite == "keygen" { 0 } else { ring_edges(vertices) };
                let samples_ms = s.iter().map(|d| d.as_secs_f64() * 1e3).collect();
                Row { suite, key_bits, vertices, edges, iterations: s.len(), mean_ms, stddev_ms, median_ms, samples_ms }
            })
            .collect();
        rows.sort_by_key(|r| (order.iter().position(|s| *s == r.suite), r.key_bits, r.vertices));
        rows
    }
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, Duration) {
    let start = Instant::now();
    let out = f();
    (out, start.elapsed())
}

/// Extended key large enough for the biggest ring in the matrix.
pub fn bench_key(bits: u32, max_vertices: usize, seed: u64) -> Result<ExtendedKeyPair, BenchError> {
    let mut rng = stream_rng(seed, 0);
    let kp = keys::keygen(params_for(bits), &mut rng)?;
    let graph_params = GraphParams {
        max_vertices: max_vertices.max(1) as u32,
        max_edges: ring_edges(max_vertices).max(1) as u32,
    };
    Ok(keys::extend(&kp, graph_params, bench_scheme().id(), &mut rng)?)
}

fn issue_once(ekp: &ExtendedKeyPair, graph: &Graph, seed: u64, cells: &mut Cells, bits: u32, n: usize) -> Result<Credential, BenchError> {
    let pk = &ekp.public;
    let scheme = bench_scheme();
    let mut recipient_rng = stream_rng(seed, 1);
    let mut sign_rng = stream_rng(seed, 2);
    let mut encode_rng = stream_rng(seed, 3 + n as u64);
    let nonce = zkp::fresh_nonce(pk.base().params(), &mut stream_rng(seed, 4));
    let m_0 = clsig::random_message(pk, &mut recipient_rng);

    let (committed, commit_time) = timed(|| orchestration::recipient_commit(pk, &m_0, &nonce, &mut recipient_rng));
    let (u, proof) = committed?;
    let (pre, signer_time) = timed(|| -> Result<_, BenchError> {
        let (_, bases) = gencoding::encode(graph, &scheme, pk, &mut encode_rng)?;
        let pre = orchestration::signer_respond(ekp, u.value(), &proof, &nonce, &bases, &mut sign_rng)?;
        Ok((pre, bases))
    });
    let (pre, bases) = pre?;
    let (credential, completion_time) = timed(|| orchestration::recipient_complete(pk, &u, &pre, bases, &m_0));
    cells.push("issue_commit", bits, n, commit_time);
    cells.push("issue_signer", bits, n, signer_time);
    cells.push("issue_recipient", bits, n, completion_time);
    Ok(credential?)
}

/// Runs the configured matrix.
pub fn run(config: &BenchConfig) -> Result<Report, BenchError> {
    let mut cells = Cells::new();
    let mut order: Vec<String> = Vec::new();
    for suite in &config.suites {
        match suite {
            Suite::Issue => order.extend(["issue_commit".into(), "issue_signer".into(), "issue_recipient".into()]),
            Suite::Prove => order.extend(["prove_possession".into(), "prove_pairwise".into()]),
            Suite::Verify => order.extend(["verify_possession".into(), "verify_pairwise".into()]),
            other => order.push(other.to_string()),
        }
    }
    if config.key_bits.is_empty() || config.iterations == 0 {
        return Ok(Report::default());
    }
    let seeds: Vec<u64> = match config.seed {
        Some(s) => {
            let mut r = ChaCha20Rng::seed_from_u64(s);
            (0..config.iterations).map(|_| r.next_u64()).collect()
        }
        None => (0..config.iterations).map(|_| OsRng.next_u64()).collect(),
    };
    let needs_key = config.suites.iter().any(|s| *s != Suite::Keygen) && !config.vertices.is_empty();
    let max_vertices = config.vertices.iter().copied().max().unwrap_or(1);

    for &bits in &config.key_bits {
        if config.suites.contains(&Suite::Keygen) {
            for &seed in &seeds {
                let (kp, d) = timed(|| keys::keygen(params_for(bits), &mut stream_rng(seed, 0)));
                kp?;
                cells.push("keygen", bits, 0, d);
            }
        }
        if !needs_key {
            continue;
        }
        let ekp = bench_key(bits, max_vertices, seeds[0] ^ u64::from(bits))?;
        let pk = &ekp.public;
        let graphs: Vec<(usize, Graph)> = config.vertices.iter().map(|&n| (n, ring_graph(n))).collect();

        for (i, &seed) in seeds.iter().enumerate() {
            for k in 0..graphs.len() {
                let (n, graph) = &graphs[(i + k) % graphs.len()];
                let n = *n;
                if config.suites.contains(&Suite::Extend) {
                    let gp = GraphParams { max_vertices: n.max(1) as u32, max_edges: ring_edges(n).max(1) as u32 };
                    let signer = ekp.signer_key_pair();
                    let (out, d) = timed(|| keys::extend(&signer, gp, bench_scheme().id(), &mut stream_rng(seed, 5)));
                    out?;
                    cells.push("extend", bits, n, d);
                }
                let wants_proofs = config.suites.iter().any(|s| matches!(s, Suite::Prove | Suite::Verify));
                let credential = if config.suites.contains(&Suite::Issue) {
                    Some(issue_once(&ekp, graph, seed, &mut cells, bits, n)?)
                } else if wants_proofs {
                    let rep = gencoding::encode_graph(graph, &bench_scheme())?;
                    Some(clsig::signing_oracle(&ekp, OracleInput::Graph(&rep), &mut stream_rng(seed, 6))?)
                } else {
                    None
                };
                let Some(credential) = credential.filter(|_| wants_proofs) else { continue };
                for (predicate, name) in [(Predicate::Possession, "possession"), (Predicate::PossessionPairwise, "pairwise")] {
                    let nonce = BigUint::from(seed);
                    let mut store = ProofStore::new();
                    let (proof, d) =
                        timed(|| zkp::prove(pk, &credential, predicate, &nonce, &mut store, &mut stream_rng(seed, 7)));
                    let proof = proof?;
                    if config.suites.contains(&Suite::Prove) {
                        cells.push(format!("prove_{name}"), bits, n, d);
                    }
                    if config.suites.contains(&Suite::Verify) {
                        let (ok, d) = timed(|| zkp::verify(pk, predicate, &proof, &nonce));
                        if !ok {
                            return Err(BenchError::Rejected);
                        }
                        cells.push(format!("verify_{name}"), bits, n, d);
                    }
                }
            }
        }
    }
    Ok(Report { rows: cells.into_rows(&order) })
}
