use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use graphsig::bench::{self, BenchConfig, Suite};
use graphsig::clsig::{self, Credential};
use graphsig::gencoding::{self, EncodingScheme, GraphElement};
use graphsig::hex;
use graphsig::keys::{self, ExtendedKeyPair, ExtendedPublicKey, GraphParams, KeyCorrectnessProof, SignerKeyPair};
use graphsig::orchestration::{self, OrchestrationError, SocketChannel, SocketListener};
use graphsig::zkp::{self, Predicate, ProofSignature, ProofStore};
use graphsig::PublicKey;
use num_bigint::BigUint;
use rand::rngs::OsRng;

use crate::config::Config;
use crate::{CliError, Outcome};

const SIGNER_PUBLIC: &str = "signer-public.json";
const SIGNER_PRIVATE: &str = "signer-private.json";
const SIGNER_PROOF: &str = "signer-proof.json";
const EXTENDED_PUBLIC: &str = "extended-public.json";
const EXTENDED_PRIVATE: &str = "extended-private.json";
const EXTENDED_PROOF: &str = "extended-proof.json";

#[derive(Debug, Parser)]
#[command(name = "graphsig", version, about = "Sign graphs and prove statements about them")]
pub struct Cli {
    /// JSON configuration file; built-in defaults otherwise.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Modulus length. The bench accepts a comma-separated list.
    #[arg(long, global = true, value_delimiter = ',')]
    bits: Vec<u32>,
    /// Encoding scheme id, e.g. `geolocation` or `geolocation/8`.
    #[arg(long, global = true)]
    encoding: Option<String>,
    /// Output file, or output directory for key material.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Role {
    Signer,
    Recipient,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Print the effective configuration, or save it with --out.
    Config,
    /// Generate a signer key pair and its key-correctness proof.
    Keygen,
    /// Add graph bases to the signer key.
    Extend {
        #[arg(long)]
        vertices: Option<u32>,
        #[arg(long)]
        edges: Option<u32>,
    },
    /// Print the prime representation of a GraphML file.
    Encode {
        #[arg(long)]
        graph: PathBuf,
        /// Also assign bases on the extended public key and print them.
        #[arg(long)]
        reveal: bool,
    },
    /// Run one side of the issuing protocol.
    Issue {
        #[arg(long, value_enum)]
        role: Role,
        #[arg(long)]
        listen: Option<String>,
        #[arg(long)]
        connect: Option<String>,
        /// Graph to sign (signer only).
        #[arg(long)]
        graph: Option<PathBuf>,
        /// Do not check the signer's key-correctness proof (recipient only).
        #[arg(long)]
        skip_key_proof: bool,
    },
    /// Prove a predicate over the stored credential, to a verifier or to a file.
    Prove {
        #[arg(long)]
        connect: Option<String>,
        /// Produce a proof offline for this hex nonce instead of connecting.
        #[arg(long)]
        nonce: Option<String>,
        #[arg(long, default_value = "pairwise")]
        predicate: Predicate,
    },
    /// Verify a proof, from a prover or from a file.
    Verify {
        #[arg(long)]
        listen: Option<String>,
        #[arg(long)]
        proof: Option<PathBuf>,
        #[arg(long)]
        nonce: Option<String>,
        #[arg(long, default_value = "pairwise")]
        predicate: Predicate,
    },
    /// Time the scheme over key lengths and graph sizes.
    Bench {
        /// Comma-separated suites; all of them by default.
        #[arg(long, value_delimiter = ',')]
        suite: Vec<Suite>,
        #[arg(long, value_delimiter = ',', default_values_t = [1usize, 3, 5, 8])]
        vertices: Vec<usize>,
        #[arg(long, default_value_t = 10)]
        iterations: usize,
        #[arg(long)]
        seed: Option<u64>,
    },
}

pub fn run(cli: Cli) -> Result<Outcome, CliError> {
    if let Command::Bench { suite, vertices, iterations, seed } = &cli.command {
        return bench(&cli, suite, vertices, *iterations, *seed);
    }
    let config = load_config(&cli)?;
    match &cli.command {
        Command::Config => {
            match &cli.out {
                Some(path) => config.save(path)?,
                None => println!("{}", config.to_json()),
            }
            Ok(Outcome::Done)
        }
        Command::Keygen => keygen(&cli, &config),
        Command::Extend { vertices, edges } => extend(&cli, &config, *vertices, *edges),
        Command::Encode { graph, reveal } => encode(&cli, &config, graph, *reveal),
        Command::Issue { role: Role::Signer, listen, graph, .. } => {
            let graph = graph.as_deref().ok_or_else(|| CliError::Config("the signer needs --graph".into()))?;
            issue_signer(&config, listen.as_deref(), graph)
        }
        Command::Issue { role: Role::Recipient, connect, skip_key_proof, .. } => {
            issue_recipient(&cli, &config, connect.as_deref(), *skip_key_proof)
        }
        Command::Prove { connect, nonce, predicate } => prove(&cli, &config, connect.as_deref(), nonce.as_deref(), *predicate),
        Command::Verify { listen, proof, nonce, predicate } => {
            verify(&config, listen.as_deref(), proof.as_deref(), nonce.as_deref(), *predicate)
        }
        Command::Bench { .. } => unreachable!("handled above"),
    }
}

fn load_config(cli: &Cli) -> Result<Config, CliError> {
    let mut config = match &cli.config {
        Some(path) => Config::load(path)?,
        None => Config::default(),
    };
    match cli.bits.as_slice() {
        [] => {}
        [bits] => config.params = bench::params_for(*bits),
        _ => return Err(CliError::Config("only the bench takes several --bits".into())),
    }
    if let Some(id) = &cli.encoding {
        config.encoding = id.clone();
    }
    config.validate()?;
    Ok(config)
}

fn read(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

fn write(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

fn key_error(path: &Path, e: keys::KeyError) -> CliError {
    match e {
        keys::KeyError::Io(io) => CliError::io(path, io),
        other => CliError::Parse(format!("{}: {other}", path.display())),
    }
}

fn protocol(e: OrchestrationError) -> CliError {
    CliError::Protocol(e.to_string())
}

fn out_dir(cli: &Cli, config: &Config) -> Result<PathBuf, CliError> {
    let dir = cli.out.clone().unwrap_or_else(|| config.paths.keys.clone());
    std::fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
    Ok(dir)
}

fn keygen(cli: &Cli, config: &Config) -> Result<Outcome, CliError> {
    let dir = out_dir(cli, config)?;
    let start = Instant::now();
    let kp = keys::keygen(config.params, &mut OsRng).map_err(|e| CliError::Config(e.to_string()))?;
    let elapsed = start.elapsed();
    let proof = keys::prove_key_correctness(&kp, &mut OsRng).map_err(|e| CliError::Config(e.to_string()))?;
    write(&dir.join(SIGNER_PUBLIC), &kp.public.to_json())?;
    let private = dir.join(SIGNER_PRIVATE);
    kp.export_private_key(&private).map_err(|e| key_error(&private, e))?;
    write(&dir.join(SIGNER_PROOF), &proof.to_json())?;
    println!("keygen: {}-bit modulus in {:.1} ms, keys in {}", config.params.l_n, elapsed.as_secs_f64() * 1e3, dir.display());
    Ok(Outcome::Done)
}

fn extend(cli: &Cli, config: &Config, vertices: Option<u32>, edges: Option<u32>) -> Result<Outcome, CliError> {
    let path = config.key_file(SIGNER_PRIVATE);
    let kp = SignerKeyPair::import_private_key(&path).map_err(|e| key_error(&path, e))?;
    let graph_params = GraphParams {
        max_vertices: vertices.unwrap_or(config.graph.max_vertices),
        max_edges: edges.unwrap_or(config.graph.max_edges),
    };
    let start = Instant::now();
    let ekp = keys::extend(&kp, graph_params, &config.encoding, &mut OsRng).map_err(|e| CliError::Config(e.to_string()))?;
    let elapsed = start.elapsed();
    let proof = keys::prove_key_correctness(&ekp, &mut OsRng).map_err(|e| CliError::Config(e.to_string()))?;
    let dir = out_dir(cli, config)?;
    write(&dir.join(EXTENDED_PUBLIC), &ekp.public.to_json())?;
    let private = dir.join(EXTENDED_PRIVATE);
    ekp.export_private_key(&private).map_err(|e| key_error(&private, e))?;
    write(&dir.join(EXTENDED_PROOF), &proof.to_json())?;
    println!(
        "extend: {} vertex and {} edge bases for {} in {:.1} ms",
        graph_params.max_vertices,
        graph_params.max_edges,
        config.encoding,
        elapsed.as_secs_f64() * 1e3
    );
    Ok(Outcome::Done)
}

fn load_graph(path: &Path) -> Result<gencoding::Graph, CliError> {
    gencoding::parse_graphml(&read(path)?).map_err(|e| CliError::Parse(format!("{}: {e}", path.display())))
}

fn load_public(config: &Config) -> Result<ExtendedPublicKey, CliError> {
    let path = config.key_file(EXTENDED_PUBLIC);
    ExtendedPublicKey::from_json(&read(&path)?).map_err(|e| key_error(&path, e))
}

fn encode(cli: &Cli, config: &Config, graph: &Path, reveal: bool) -> Result<Outcome, CliError> {
    let graph = load_graph(graph)?;
    let scheme = EncodingScheme::by_id(&config.encoding).map_err(|e| CliError::Config(e.to_string()))?;
    let rep = gencoding::encode_graph(&graph, &scheme).map_err(|e| CliError::Parse(e.to_string()))?;
    let assignment = if reveal {
        let epk = load_public(config)?;
        let (_, bases) = gencoding::encode(&graph, &scheme, &epk, &mut OsRng).map_err(|e| CliError::Config(e.to_string()))?;
        Some(bases.assignment().clone())
    } else {
        None
    };
    let base_of = |element: GraphElement| match &assignment {
        Some(a) => format!(" base {}", a[&element]),
        None => String::new(),
    };
    let mut text = format!("encoding {} ({} vertices, {} edges)\n", rep.encoding_id, rep.vertex_reps.len(), rep.edge_reps.len());
    for (id, v) in &rep.vertex_reps {
        let labels: Vec<String> = v.label_primes.iter().map(ToString::to_string).collect();
        let base = base_of(GraphElement::Vertex(id.clone()));
        let _ = writeln!(text, "vertex {id}: prime {} labels [{}] exponent {}{base}", v.prime, labels.join(", "), v.exponent());
    }
    for e in &rep.edge_reps {
        let base = base_of(GraphElement::Edge(e.source.clone(), e.target.clone()));
        let _ = writeln!(text, "edge {}-{}: exponent {}{base}", e.source, e.target, e.exponent());
    }
    match &cli.out {
        Some(path) => write(path, &text)?,
        None => print!("{text}"),
    }
    Ok(Outcome::Done)
}

fn issue_signer(config: &Config, listen: Option<&str>, graph: &Path) -> Result<Outcome, CliError> {
    let path = config.key_file(EXTENDED_PRIVATE);
    let ekp = ExtendedKeyPair::import_private_key(&path).map_err(|e| key_error(&path, e))?;
    let graph = load_graph(graph)?;
    let scheme = EncodingScheme::by_id(ekp.public.encoding_id()).map_err(|e| CliError::Config(e.to_string()))?;
    let listener = SocketListener::bind(listen.unwrap_or(&config.endpoint)).map_err(|e| protocol(e.into()))?;
    let addr = listener.local_addr().map_err(|e| protocol(e.into()))?;
    eprintln!("listening on {addr}");
    let mut channel = listener.accept().map_err(|e| protocol(e.into()))?;
    let record = orchestration::run_issuing_signer(&mut channel, &ekp, &graph, &scheme, &mut OsRng).map_err(protocol)?;
    println!("issued: signature on {} bases", record.bases.len());
    Ok(Outcome::Done)
}

fn issue_recipient(cli: &Cli, config: &Config, connect: Option<&str>, skip_key_proof: bool) -> Result<Outcome, CliError> {
    let pk = load_public(config)?;
    let key_proof = if skip_key_proof {
        None
    } else {
        let path = config.key_file(EXTENDED_PROOF);
        Some(KeyCorrectnessProof::from_json(&read(&path)?).map_err(|e| key_error(&path, e))?)
    };
    let mut channel = SocketChannel::connect(connect.unwrap_or(&config.endpoint)).map_err(|e| protocol(e.into()))?;
    let m_0 = clsig::random_message(&pk, &mut OsRng);
    let credential = orchestration::run_issuing_recipient(&mut channel, &pk, &m_0, key_proof.as_ref(), &mut OsRng)
        .map_err(protocol)?;
    let path = cli.out.clone().unwrap_or_else(|| config.paths.credential.clone());
    write(&path, &credential.to_json())?;
    println!("credential on {} bases written to {}", credential.bases.len(), path.display());
    Ok(Outcome::Done)
}

fn parse_nonce(text: &str) -> Result<BigUint, CliError> {
    hex::uint_from_hex(text).ok_or_else(|| CliError::Parse(format!("nonce {text:?} is not lowercase hex")))
}

fn prove(cli: &Cli, config: &Config, connect: Option<&str>, nonce: Option<&str>, predicate: Predicate) -> Result<Outcome, CliError> {
    let pk = load_public(config)?;
    let path = &config.paths.credential;
    let credential = Credential::from_json(&read(path)?, &pk).map_err(|e| CliError::Parse(format!("{}: {e}", path.display())))?;
    if let Some(nonce) = nonce {
        let nonce = parse_nonce(nonce)?;
        let proof = zkp::prove(&pk, &credential, predicate, &nonce, &mut ProofStore::new(), &mut OsRng)
            .map_err(|e| CliError::Config(e.to_string()))?;
        match &cli.out {
            Some(path) => write(path, &proof.to_json())?,
            None => println!("{}", proof.to_json()),
        }
        return Ok(Outcome::Done);
    }
    let mut channel = SocketChannel::connect(connect.unwrap_or(&config.endpoint)).map_err(|e| protocol(e.into()))?;
    let transcript = orchestration::run_prover(&mut channel, &pk, &credential, &mut OsRng).map_err(protocol)?;
    Ok(if transcript.accepted { Outcome::Accepted } else { Outcome::Rejected })
}

fn verify(
    config: &Config,
    listen: Option<&str>,
    proof: Option<&Path>,
    nonce: Option<&str>,
    predicate: Predicate,
) -> Result<Outcome, CliError> {
    let pk = load_public(config)?;
    let accepted = if let Some(path) = proof {
        let nonce = parse_nonce(nonce.ok_or_else(|| CliError::Config("--proof needs --nonce".into()))?)?;
        let proof = ProofSignature::from_json(&read(path)?, pk.group())
            .map_err(|e| CliError::Parse(format!("{}: {e}", path.display())))?;
        zkp::verify(&pk, predicate, &proof, &nonce)
    } else {
        let listener = SocketListener::bind(listen.unwrap_or(&config.endpoint)).map_err(|e| protocol(e.into()))?;
        let addr = listener.local_addr().map_err(|e| protocol(e.into()))?;
        eprintln!("listening on {addr}");
        let mut channel = listener.accept().map_err(|e| protocol(e.into()))?;
        orchestration::run_verifier(&mut channel, &pk, predicate, &mut OsRng).map_err(protocol)?
    };
    Ok(if accepted { Outcome::Accepted } else { Outcome::Rejected })
}

fn bench(cli: &Cli, suites: &[Suite], vertices: &[usize], iterations: usize, seed: Option<u64>) -> Result<Outcome, CliError> {
    let config = BenchConfig {
        suites: if suites.is_empty() { Suite::ALL.to_vec() } else { suites.to_vec() },
        key_bits: if cli.bits.is_empty() { vec![512] } else { cli.bits.clone() },
        vertices: vertices.to_vec(),
        iterations,
        seed,
    };
    for &bits in &config.key_bits {
        bench::params_for(bits).validate().map_err(|e| CliError::Config(e.to_string()))?;
    }
    let report = bench::run(&config).map_err(|e| CliError::Protocol(e.to_string()))?;
    print!("{}", report.to_table());
    match &cli.out {
        Some(path) => write(path, &report.to_csv())?,
        None => print!("\n{}", report.to_csv()),
    }
    Ok(Outcome::Done)
}
