//! Acceptance run. Prints one PASS or FAIL line per criterion and exits
//! nonzero if any criterion fails. Pass criterion numbers as arguments to run
//! a subset, e.g. `cargo test --test acceptance -- 4 5`.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{Read, Write};
use std::net::TcpStream;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::sync::OnceLock;
use std::thread;
use std::time::{Duration, Instant};

use graphsig::bench::{self, BenchConfig, Suite};
use graphsig::clsig::{self, Credential, GraphSignature, OracleInput};
use graphsig::gencoding::{self, BaseCollection, BaseKind, Graph, ISO_3166_ALPHA2};
use graphsig::groups::QrGroupPq;
use graphsig::hex::{int_from_hex, int_to_hex, uint_to_hex};
use graphsig::keys::{self, ExtendedKeyPair, ExtendedPublicKey, GraphParams, KeyGenParams, PublicKey, SigningKey};
use graphsig::ntheory::{self, SpecialRsaModulus};
use graphsig::orchestration::{
    self, decode_frame, local_channel_pair, run_issuing_recipient, run_issuing_signer, run_prover, run_verifier,
    Channel, ChannelError, Direction, MessageType, OrchestrationError, RecordingChannel, SocketChannel,
    SocketListener, MAX_FRAME_BYTES,
};
use graphsig::zkp::{self, Predicate, ProofSignature, ProofStore, StoredValue};
use num_bigint::{BigInt, BigUint};
use num_integer::Integer;
use num_traits::{One, Signed, ToPrimitive, Zero};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

type Transcript = Vec<(Direction, Vec<u8>)>;
type Outcome = Result<String, String>;

fn rng(seed: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed)
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn key() -> &'static ExtendedKeyPair {
    static KEY: OnceLock<ExtendedKeyPair> = OnceLock::new();
    KEY.get_or_init(|| {
        let mut r = rng(0x5eed);
        let kp = keys::keygen(KeyGenParams::test_profile(), &mut r).expect("keygen");
        keys::extend(&kp, GraphParams { max_vertices: 8, max_edges: 28 }, "geolocation/8", &mut r).expect("extend")
    })
}

fn choose2(n: usize) -> usize {
    n * n.saturating_sub(1) / 2
}

/// Every vertex carries the same two labels; edges form a star around `v0`.
fn shared_label_graph(n: usize) -> Graph {
    let mut g = Graph::new();
    for i in 0..n {
        g.add_vertex(&format!("v{i}"), ["DE", "FR"]).unwrap();
    }
    for i in 1..n {
        g.add_edge("v0", &format!("v{i}"), ["FR"]).unwrap();
    }
    g
}

fn graph_for(n: usize, run: usize) -> Graph {
    if run % 2 == 0 {
        bench::ring_graph(n)
    } else {
        shared_label_graph(n)
    }
}

// ---------------------------------------------------------------------------
// Independent oracles

fn mul_mod(a: u128, b: u128, m: u128) -> u128 {
    // Operands stay below 2^64, so the product fits.
    a * b % m
}

fn pow_mod(mut base: u128, mut exp: u128, m: u128) -> u128 {
    let mut acc = 1 % m;
    base %= m;
    while exp > 0 {
        if exp & 1 == 1 {
            acc = mul_mod(acc, base, m);
        }
        base = mul_mod(base, base, m);
        exp >>= 1;
    }
    acc
}

/// Deterministic Miller-Rabin; the first twelve prime bases are exact below 3.3e24.
fn is_prime_u128(n: u128) -> bool {
    const BASES: [u128; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];
    if n < 2 {
        return false;
    }
    for p in BASES {
        if n % p == 0 {
            return n == p;
        }
    }
    let (mut d, mut s) = (n - 1, 0);
    while d % 2 == 0 {
        d /= 2;
        s += 1;
    }
    'witness: for a in BASES {
        let mut x = pow_mod(a, d, n);
        if x == 1 || x == n - 1 {
            continue;
        }
        for _ in 1..s {
            x = mul_mod(x, x, n);
            if x == n - 1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

/// Miller-Rabin on big integers with fixed prime bases.
fn is_prime_big(n: &BigUint) -> bool {
    let small = [2u32, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71];
    if n < &BigUint::from(2u32) {
        return false;
    }
    for p in small {
        if (n % p).is_zero() {
            return *n == BigUint::from(p);
        }
    }
    let n1 = n - 1u32;
    let s = n1.trailing_zeros().unwrap_or(0);
    let d = &n1 >> s;
    'witness: for a in small {
        let mut x = BigUint::from(a).modpow(&d, n);
        if x.is_one() || x == n1 {
            continue;
        }
        for _ in 1..s {
            x = &x * &x % n;
            if x == n1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

/// `Z == A^e S^v R_0^{m_0} prod R_i^{m_i} (mod N)`, `e` prime in its interval
/// and every message within `l_m` bits, recomputed with plain `modpow`.
fn equation_holds(pk: &ExtendedPublicKey, sig: &GraphSignature, m_0: &BigUint, bases: &BaseCollection) -> bool {
    let spk = pk.base();
    let params = spk.params();
    let n = spk.n();
    let mut acc = sig.a.value().modpow(&sig.e, n) * spk.s().value().modpow(&sig.v, n) % n;
    acc = acc * spk.r_0().value().modpow(m_0, n) % n;
    for (id, entry) in bases.entries() {
        let Some(base) = pk.certified_base(*id) else { return false };
        if base != &entry.base || entry.exponent.bits() > u64::from(params.l_m) {
            return false;
        }
        acc = acc * base.value().modpow(&entry.exponent, n) % n;
    }
    let lo = BigUint::one() << (params.l_e - 1);
    let hi = &lo + (BigUint::one() << (params.l_e_prime - 1));
    acc == *spk.z().value()
        && m_0.bits() <= u64::from(params.l_m)
        && sig.e >= lo
        && sig.e <= hi
        && is_prime_big(&sig.e)
}

// ---------------------------------------------------------------------------
// Protocol helpers

struct Issued {
    credential: Credential,
    /// Every frame, as seen by the signer.
    transcript: Transcript,
}

fn issue(ekp: &ExtendedKeyPair, graph: &Graph, seed: u64) -> Result<Issued, String> {
    let scheme = bench::bench_scheme();
    let m_0 = clsig::random_message(&ekp.public, &mut rng(seed));
    let (a, mut b) = local_channel_pair();
    thread::scope(|s| {
        let scheme = &scheme;
        let signer = s.spawn(move || {
            let mut ch = RecordingChannel::new(a);
            let out = run_issuing_signer(&mut ch, ekp, graph, scheme, &mut rng(seed ^ 0x51));
            (out, ch.into_transcript())
        });
        let credential = run_issuing_recipient(&mut b, &ekp.public, &m_0, None, &mut rng(seed ^ 0x52));
        let (record, transcript) = signer.join().map_err(|_| "signer panicked".to_string())?;
        record.map_err(|e| format!("signer: {e}"))?;
        let credential = credential.map_err(|e| format!("recipient: {e}"))?;
        Ok(Issued { credential, transcript })
    })
}

struct Proved {
    accepted_by_verifier: bool,
    transcript: orchestration::ProverTranscript,
    frames: Transcript,
}

fn prove_over_channel(ekp: &ExtendedKeyPair, credential: &Credential, predicate: Predicate, seed: u64) -> Result<Proved, String> {
    let (v, mut p) = local_channel_pair();
    thread::scope(|s| {
        let verifier = s.spawn(move || {
            let mut ch = RecordingChannel::new(v);
            let out = run_verifier(&mut ch, &ekp.public, predicate, &mut rng(seed ^ 0x71));
            (out, ch.into_transcript())
        });
        let transcript = run_prover(&mut p, &ekp.public, credential, &mut rng(seed ^ 0x72));
        let (verdict, frames) = verifier.join().map_err(|_| "verifier panicked".to_string())?;
        let accepted_by_verifier = verdict.map_err(|e| format!("verifier: {e}"))?;
        let transcript = transcript.map_err(|e| format!("prover: {e}"))?;
        Ok(Proved { accepted_by_verifier, transcript, frames })
    })
}

fn prover_seed(seed: u64) -> u64 {
    seed ^ 0x72
}

// ---------------------------------------------------------------------------
// Criteria

fn criterion_1() -> Outcome {
    const LIMIT: usize = 1000;
    let start = Instant::now();

    // Squares modulo every odd prime below the limit.
    let mut is_prime = vec![true; LIMIT];
    is_prime[0] = false;
    is_prime[1] = false;
    for i in 2..LIMIT {
        if is_prime[i] {
            for j in (i * i..LIMIT).step_by(i) {
                is_prime[j] = false;
            }
        }
    }
    let mut squares: BTreeMap<usize, Vec<bool>> = BTreeMap::new();
    for p in (3..LIMIT).filter(|&p| is_prime[p]) {
        let mut table = vec![false; p];
        for x in 1..p {
            table[x * x % p] = true;
        }
        squares.insert(p, table);
    }
    let legendre = |a: i64, p: usize| -> i8 {
        let r = a.rem_euclid(p as i64) as usize;
        match r {
            0 => 0,
            r if squares[&p][r] => 1,
            _ => -1,
        }
    };
    let mut checked = 0u64;
    for n in (3..LIMIT).step_by(2) {
        let mut factors = Vec::new();
        let mut rest = n;
        let mut d = 3;
        while rest > 1 {
            while rest % d == 0 {
                factors.push(d);
                rest /= d;
            }
            d += 2;
        }
        let nb = BigUint::from(n);
        for a in -(LIMIT as i64) + 1..LIMIT as i64 {
            let expected: i8 = factors.iter().map(|&p| legendre(a, p)).product();
            let got = ntheory::jacobi(&BigInt::from(a), &nb).map_err(|e| format!("jacobi({a}, {n}): {e}"))?;
            ensure(got == expected, || format!("jacobi({a}, {n}) = {got}, oracle {expected}"))?;
            checked += 1;
        }
    }
    ensure(ntheory::jacobi(&BigInt::from(3), &BigUint::from(10u32)).is_err(), || "even modulus accepted".into())?;

    // gcd table by marking common multiples of every d in ascending order.
    let mut gcd = vec![0u16; LIMIT * LIMIT];
    for d in 1..LIMIT {
        for a in (0..LIMIT).step_by(d) {
            for b in (0..LIMIT).step_by(d) {
                gcd[a * LIMIT + b] = d as u16;
            }
        }
    }
    for a in 0..LIMIT {
        for b in 0..LIMIT {
            let (ai, bi) = (BigInt::from(a), BigInt::from(b));
            let out = ntheory::eea(&ai, &bi);
            if a == 0 && b == 0 {
                ensure(out.is_err(), || "eea(0, 0) accepted".into())?;
                continue;
            }
            let out = out.map_err(|e| format!("eea({a}, {b}): {e}"))?;
            let expected = BigInt::from(gcd[a * LIMIT + b]);
            ensure(out.gcd == expected, || format!("eea({a}, {b}).gcd = {}, oracle {expected}", out.gcd))?;
            ensure(&out.bezout_s * &ai + &out.bezout_t * &bi == expected, || format!("Bezout fails for ({a}, {b})"))?;
            checked += 1;
        }
    }

    // CRT: every coprime pair with m1 * m2 < LIMIT, every residue pair,
    // against the unique x found by scanning [0, m1 * m2).
    for m1 in 2..LIMIT {
        for m2 in 2..LIMIT / m1 + 1 {
            if m1 * m2 >= LIMIT {
                continue;
            }
            let (b1, b2) = (BigUint::from(m1), BigUint::from(m2));
            if gcd[m1 * LIMIT + m2] != 1 {
                let out = ntheory::crt_combine(&BigUint::zero(), &BigUint::zero(), &b1, &b2);
                ensure(out.is_err(), || format!("crt accepted non-coprime {m1}, {m2}"))?;
                continue;
            }
            let mut table = vec![usize::MAX; m1 * m2];
            for x in 0..m1 * m2 {
                table[(x % m1) * m2 + x % m2] = x;
            }
            for r1 in 0..m1 {
                for r2 in 0..m2 {
                    let got = ntheory::crt_combine(&BigUint::from(r1), &BigUint::from(r2), &b1, &b2)
                        .map_err(|e| format!("crt({r1} mod {m1}, {r2} mod {m2}): {e}"))?;
                    let expected = table[r1 * m2 + r2];
                    ensure(got == BigUint::from(expected), || {
                        format!("crt({r1} mod {m1}, {r2} mod {m2}) = {got}, oracle {expected}")
                    })?;
                    checked += 1;
                }
            }
        }
    }
    let elapsed = start.elapsed();
    ensure(elapsed < Duration::from_secs(10), || format!("took {elapsed:.2?}, limit 10 s"))?;
    Ok(format!("{checked} cases, 0 mismatches, {elapsed:.2?}"))
}

fn criterion_2() -> Outcome {
    let start = Instant::now();
    let mut r = rng(2);
    for i in 0..100 {
        let sp = ntheory::generate_safe_prime(64, &mut r).map_err(|e| e.to_string())?;
        let p = sp.value().to_u128().ok_or("does not fit in 128 bits")?;
        ensure(128 - p.leading_zeros() == 64, || format!("sample {i}: {p} has {} bits", 128 - p.leading_zeros()))?;
        ensure(is_prime_u128(p), || format!("sample {i}: {p} is composite"))?;
        ensure(is_prime_u128((p - 1) / 2), || format!("sample {i}: ({p} - 1) / 2 is composite"))?;
        ensure(sp.sophie_germain() == &BigUint::from((p - 1) / 2), || format!("sample {i}: wrong Sophie Germain part"))?;
    }
    let elapsed = start.elapsed();
    ensure(elapsed < Duration::from_secs(60), || format!("took {elapsed:.2?}, limit 60 s"))?;
    Ok(format!("100/100 safe primes of 64 bits re-verified, {elapsed:.2?}"))
}

fn criterion_3() -> Outcome {
    let mut r = rng(3);
    let p = ntheory::generate_safe_prime(32, &mut r).map_err(|e| e.to_string())?;
    let q = loop {
        let q = ntheory::generate_safe_prime(32, &mut r).map_err(|e| e.to_string())?;
        if q.value() != p.value() {
            break q;
        }
    };
    let modulus = SpecialRsaModulus::from_safe_primes(p, q).map_err(|e| e.to_string())?;
    let n = modulus.n().to_u128().ok_or("modulus too large")?;
    ensure(modulus.n().bits() == 64, || format!("modulus has {} bits", modulus.n().bits()))?;
    let group = QrGroupPq::new(modulus).map_err(|e| e.to_string())?;
    let mut negative = 0;
    for i in 0..1000 {
        let x = loop {
            let x = r.gen_range(2..n);
            if x.gcd(&n) == 1 {
                break x;
            }
        };
        let base = mul_mod(x, x, n);
        let element = group.element(BigUint::from(base)).map_err(|e| e.to_string())?;
        let e: u128 = r.gen::<u64>() as u128 * r.gen::<u64>() as u128;
        let (exponent, expected) = if i % 4 == 3 {
            // b^{-e} = (b^{-1})^e with the inverse from a plain extended Euclid.
            negative += 1;
            let inv = inverse_u128(base, n).ok_or("base not invertible")?;
            (-BigInt::from(e), pow_mod(inv, e, n))
        } else {
            (BigInt::from(e), pow_mod(base, e, n))
        };
        let got = group.pow(&element, &exponent).map_err(|err| err.to_string())?;
        ensure(got.value() == &BigUint::from(expected), || format!("{base}^{exponent} mod {n}: {} vs {expected}", got.value()))?;
    }
    Ok(format!("1000/1000 agree at N = {n} ({negative} negative exponents)"))
}

fn inverse_u128(a: u128, m: u128) -> Option<u128> {
    let (mut r0, mut r1) = (m as i128, a as i128);
    let (mut t0, mut t1) = (0i128, 1i128);
    while r1 != 0 {
        let q = r0 / r1;
        (r0, r1) = (r1, r0 - q * r1);
        (t0, t1) = (t1, t0 - q * t1);
    }
    (r0 == 1).then(|| t0.rem_euclid(m as i128) as u128)
}

const SIZES: [usize; 4] = [1, 3, 5, 8];
const RUNS: usize = 20;

fn criterion_4() -> Outcome {
    let start = Instant::now();
    let ekp = key();
    let mut ok = 0;
    for n in SIZES {
        for run in 0..RUNS {
            let graph = graph_for(n, run);
            let issued = issue(ekp, &graph, (n * 1000 + run) as u64)?;
            let c = &issued.credential;
            ensure(c.bases.len() == graph.vertex_count() + graph.edge_count(), || format!("n={n} run={run}: base count"))?;
            ensure(equation_holds(&ekp.public, &c.signature, &c.m_0, &c.bases), || {
                format!("n={n} run={run}: verification equation fails")
            })?;
            ok += 1;
        }
    }
    let elapsed = start.elapsed();
    ensure(elapsed < Duration::from_secs(300), || format!("took {elapsed:.2?}, limit 5 min"))?;
    Ok(format!("{ok}/{} signatures satisfy the equation, {elapsed:.2?}", SIZES.len() * RUNS))
}

fn criterion_5() -> Outcome {
    let ekp = key();
    let mut accepted = 0;
    for n in SIZES {
        for run in 0..RUNS {
            let seed = (50_000 + n * 1000 + run) as u64;
            let issued = issue(ekp, &graph_for(n, run), seed)?;
            for predicate in [Predicate::Possession, Predicate::PossessionPairwise] {
                let proved = prove_over_channel(ekp, &issued.credential, predicate, seed)?;
                ensure(proved.accepted_by_verifier && proved.transcript.accepted, || {
                    format!("n={n} run={run} {predicate}: rejected")
                })?;
                let expected = if predicate.includes_pairwise() { choose2(n) } else { 0 };
                let count = zkp::pairwise_count(&proved.transcript.proof);
                ensure(count == expected, || format!("n={n} run={run} {predicate}: {count} pair-wise proofs, expected {expected}"))?;
                accepted += 1;
            }
        }
    }
    Ok(format!("{accepted}/{} honest proofs accepted, pair-wise counts C(n,2)", SIZES.len() * RUNS * 2))
}

/// JSON paths of every serialized component of a proof.
fn components(doc: &serde_json::Value) -> Vec<(String, Option<String>)> {
    let mut out = vec![("a_prime".to_string(), None), ("challenge".to_string(), None)];
    for section in ["commitments", "representatives", "responses"] {
        for key in doc[section].as_object().expect("object").keys() {
            out.push((section.to_string(), Some(key.clone())));
        }
    }
    out
}

fn flip_bit(text: &str, r: &mut ChaCha20Rng) -> String {
    let value = int_from_hex(text).expect("canonical hex");
    let magnitude = value.magnitude().clone();
    let bit = r.gen_range(0..magnitude.bits().max(1));
    let flipped = magnitude ^ (BigUint::one() << bit);
    let signed = if value.is_negative() { -BigInt::from(flipped) } else { BigInt::from(flipped) };
    int_to_hex(&signed)
}

fn criterion_6() -> Outcome {
    let ekp = key();
    let pk = &ekp.public;
    let mut r = rng(6);
    let mut flips = 0;
    for run in 0..50 {
        let graph = graph_for(3, run);
        let rep = gencoding::encode_graph(&graph, &bench::bench_scheme()).map_err(|e| e.to_string())?;
        let credential = clsig::signing_oracle(ekp, OracleInput::Graph(&rep), &mut r).map_err(|e| e.to_string())?;
        let nonce = zkp::fresh_nonce(pk.params(), &mut r);
        let proof = zkp::prove(pk, &credential, Predicate::PossessionPairwise, &nonce, &mut ProofStore::new(), &mut r)
            .map_err(|e| e.to_string())?;
        let json = proof.to_json();
        let parsed = ProofSignature::from_json(&json, pk.group()).map_err(|e| e.to_string())?;
        ensure(zkp::verify(pk, Predicate::PossessionPairwise, &parsed, &nonce), || format!("run {run}: honest proof rejected"))?;
        ensure(!proof.commitments.is_empty() && !proof.representatives.is_empty(), || "no commitments".into())?;

        let doc: serde_json::Value = serde_json::from_str(&json).map_err(|e| e.to_string())?;
        for (section, key) in components(&doc) {
            let mut tampered = doc.clone();
            let slot = match &key {
                None => &mut tampered[&section],
                Some(k) => &mut tampered[&section][k],
            };
            let text = slot.as_str().expect("hex string").to_string();
            *slot = serde_json::Value::String(flip_bit(&text, &mut r));
            let accepted = match ProofSignature::from_json(&tampered.to_string(), pk.group()) {
                Ok(p) => zkp::verify(pk, Predicate::PossessionPairwise, &p, &nonce),
                Err(_) => false,
            };
            ensure(!accepted, || format!("run {run}: flipped {section}/{key:?} accepted"))?;
            flips += 1;
        }
        let fresh = zkp::fresh_nonce(pk.params(), &mut r);
        ensure(!zkp::verify(pk, Predicate::PossessionPairwise, &parsed, &fresh), || format!("run {run}: replay accepted"))?;
    }
    Ok(format!("{flips}/{flips} single-component flips rejected, 50/50 replays rejected"))
}

fn criterion_7() -> Outcome {
    let keygen = bench::run(&BenchConfig {
        suites: vec![Suite::Keygen],
        key_bits: vec![512, 1024, 2048],
        vertices: vec![],
        iterations: 10,
        seed: Some(7),
    })
    .map_err(|e| e.to_string())?;
    let means: Vec<f64> = [512, 1024, 2048]
        .iter()
        .map(|&b| keygen.find("keygen", b, 0).map(|row| row.mean_ms).ok_or(format!("no keygen row for {b}")))
        .collect::<Result<_, _>>()?;
    let a = means.windows(2).all(|w| w[0] < w[1]);

    let issue = bench::run(&BenchConfig {
        suites: vec![Suite::Issue],
        key_bits: vec![512],
        vertices: SIZES.to_vec(),
        iterations: 200,
        seed: Some(77),
    })
    .map_err(|e| e.to_string())?;
    let mut b = true;
    let mut totals: Vec<Vec<f64>> = Vec::new();
    let mut cells = Vec::new();
    for n in SIZES {
        let signer = issue.find("issue_signer", 512, n).ok_or("missing signer row")?;
        let recipient = issue.find("issue_recipient", 512, n).ok_or("missing recipient row")?;
        b &= signer.median_ms >= recipient.median_ms;
        totals.push(signer.samples_ms.iter().zip(&recipient.samples_ms).map(|(s, r)| s + r).collect());
        cells.push(format!("n={n}: {:.2}/{:.2}", signer.median_ms, recipient.median_ms));
    }
    // Iteration i of every cell shares its seed, so compare cells pairwise.
    let steps: Vec<f64> = totals
        .windows(2)
        .map(|w| {
            let mut d: Vec<f64> = w[1].iter().zip(&w[0]).map(|(hi, lo)| hi - lo).collect();
            d.sort_by(f64::total_cmp);
            d[d.len() / 2]
        })
        .collect();
    let c = steps.iter().all(|&d| d >= 0.0);
    let detail = format!(
        "(a) keygen ms {:.0} < {:.0} < {:.0}: {}; (b) signer/recipient median ms {}: {}; (c) median paired issuing increments ms over n {:?} {:?}: {}",
        means[0],
        means[1],
        means[2],
        a,
        cells.join(", "),
        b,
        SIZES,
        steps.iter().map(|t| format!("{t:+.3}")).collect::<Vec<_>>(),
        c
    );
    if a && b && c {
        Ok(detail)
    } else {
        Err(detail)
    }
}

struct Secret {
    name: String,
    hex: String,
}

fn secret(name: impl Into<String>, value: &BigUint) -> Secret {
    Secret { name: name.into(), hex: uint_to_hex(value) }
}

fn criterion_8() -> Outcome {
    let ekp = key();
    let pk = &ekp.public;
    let private = ekp.private.base();
    let modulus = private.modulus();
    let mut secrets = vec![
        secret("p", modulus.p().value()),
        secret("q", modulus.q().value()),
        secret("p'", modulus.p().sophie_germain()),
        secret("q'", modulus.q().sophie_germain()),
        secret("x_Z", private.x_z()),
        secret("x_0", private.x_0()),
    ];
    for id in pk.base_ids() {
        let dlog = ekp.base_dlog(id).ok_or(format!("no dlog for {id}"))?;
        secrets.push(secret(format!("log {id}"), dlog));
    }

    let key_proof = keys::prove_key_correctness(ekp, &mut rng(8)).map_err(|e| e.to_string())?;
    let mut public: Vec<(String, String)> = vec![
        ("extended public key".into(), pk.to_json()),
        ("key-correctness proof".into(), key_proof.to_json()),
        ("public key debug".into(), format!("{pk:?}")),
    ];
    let frame_text = |frames: &Transcript| -> String {
        frames.iter().map(|(_, f)| String::from_utf8_lossy(f).into_owned()).collect::<Vec<_>>().join("\n")
    };
    let mut stored = 0;
    for (k, n) in SIZES.iter().enumerate() {
        let seed = 80_000 + k as u64;
        let issued = issue(ekp, &graph_for(*n, k), seed)?;
        let cred = &issued.credential;
        let pre = issued
            .transcript
            .iter()
            .map(|(_, f)| decode_frame(f).expect("recorded frame decodes"))
            .find(|m| m.kind == MessageType::PreSignature)
            .ok_or("no pre-signature frame")?;
        let v_pp = pre.get_uint("v_pp").map_err(|e| e.to_string())?;
        let v_prime = &cred.signature.v - &v_pp;
        secrets.push(secret(format!("m_0 (session {k})"), &cred.m_0));
        secrets.push(secret(format!("v' (session {k})"), &v_prime));
        public.push((format!("issuing frames (session {k})"), frame_text(&issued.transcript)));

        for predicate in [Predicate::Possession, Predicate::PossessionPairwise] {
            let proved = prove_over_channel(ekp, cred, predicate, seed)?;
            ensure(proved.accepted_by_verifier, || format!("session {k} {predicate}: rejected"))?;
            public.push((format!("proving frames (session {k}, {predicate})"), frame_text(&proved.frames)));
            public.push((format!("proof JSON (session {k}, {predicate})"), proved.transcript.proof.to_json()));

            // The prover's randomness, regenerated from its seed.
            let mut store = ProofStore::new();
            let again = zkp::prove(pk, cred, predicate, &proved.transcript.nonce, &mut store, &mut rng(prover_seed(seed)))
                .map_err(|e| e.to_string())?;
            ensure(again == proved.transcript.proof, || "prover replay diverged".into())?;
            let mut names = BTreeSet::new();
            for urn in store.urns() {
                if urn.element().ends_with("_hat") {
                    continue;
                }
                if let Ok(StoredValue::Integer(v)) = store.get(urn) {
                    if v.magnitude().bits() >= 64 {
                        names.insert(urn.element().to_string());
                        secrets.push(secret(format!("{urn} (session {k})"), v.magnitude()));
                        stored += 1;
                    }
                }
            }
            let mut required = vec!["r_a", "v", "v_tilde"];
            if predicate.includes_pairwise() && *n > 1 {
                required.extend(["r", "s", "sigma", "rho"]);
            }
            for name in required {
                ensure(names.contains(name), || format!("prover store lacks {name}"))?;
            }
        }
    }
    for (what, text) in &public {
        for s in &secrets {
            ensure(!text.contains(&s.hex), || format!("{what} contains {}", s.name))?;
        }
    }
    Ok(format!(
        "{} secrets ({stored} prover randomness values) absent from {} public serializations; \
         no order accessor on QrGroupN (compile_fail doctest)",
        secrets.len(),
        public.len()
    ))
}

fn random_graph(r: &mut ChaCha20Rng) -> Graph {
    let mut g = Graph::new();
    let n = r.gen_range(1..=8);
    let pick = |r: &mut ChaCha20Rng, max: usize| -> Vec<&str> {
        let count = r.gen_range(0..=max);
        (0..count).map(|_| ISO_3166_ALPHA2[r.gen_range(0..ISO_3166_ALPHA2.len())]).collect()
    };
    for i in 0..n {
        let labels = pick(r, 2);
        g.add_vertex(&format!("v{i}"), labels).unwrap();
    }
    for i in 0..n {
        for j in i + 1..n {
            if r.gen_bool(0.3) {
                let labels = pick(r, 1);
                g.add_edge(&format!("v{i}"), &format!("v{j}"), labels).unwrap();
            }
        }
    }
    g
}

/// Prime factors below `bound`, with multiplicity, by trial division.
fn small_factors(mut x: BigUint, bound: u64) -> (Vec<u64>, BigUint) {
    let mut out = Vec::new();
    for d in 2..bound {
        while (&x % d).is_zero() {
            out.push(d);
            x /= d;
        }
    }
    (out, x)
}

fn criterion_9() -> Outcome {
    let ekp = key();
    let pk = &ekp.public;
    let scheme = bench::bench_scheme();
    let bound = scheme.vertex_prime_bound().to_u64().ok_or("bound too large")?;
    let label_primes: Vec<&BigUint> = scheme.label_primes().values().collect();
    let distinct: BTreeSet<&BigUint> = label_primes.iter().copied().collect();
    ensure(distinct.len() == label_primes.len(), || "label primes repeat".into())?;
    ensure(label_primes.iter().all(|p| p.to_u64().is_some_and(|p| p > bound) && is_prime_big(p)), || {
        "a label prime is not a prime above the vertex bound".into()
    })?;
    let mut r = rng(9);
    let mut vertices = 0;
    for g_index in 0..100 {
        let graph = random_graph(&mut r);
        let (rep, bases) = gencoding::encode(&graph, &scheme, pk, &mut r).map_err(|e| format!("graph {g_index}: {e}"))?;
        let primes: Vec<u64> = rep.vertex_reps.values().map(|v| v.prime.to_u64().unwrap()).collect();
        let unique: BTreeSet<u64> = primes.iter().copied().collect();
        ensure(unique.len() == primes.len(), || format!("graph {g_index}: vertex primes repeat"))?;
        ensure(primes.iter().all(|&p| p < bound && is_prime_u128(p as u128)), || {
            format!("graph {g_index}: vertex prime outside [2, bound)")
        })?;

        let assigned: Vec<_> = bases.assignment().values().copied().collect();
        let targets: BTreeSet<_> = assigned.iter().copied().collect();
        ensure(assigned.len() == graph.vertex_count() + graph.edge_count(), || format!("graph {g_index}: assignment size"))?;
        ensure(targets.len() == assigned.len(), || format!("graph {g_index}: assignment not injective"))?;
        for (element, id) in bases.assignment() {
            let entry = bases.get(*id).ok_or(format!("graph {g_index}: {id} unassigned"))?;
            ensure(pk.certified_base(*id) == Some(&entry.base), || format!("graph {g_index}: {id} is not the certified base"))?;
            let kind_matches = matches!(
                (element, id.kind),
                (gencoding::GraphElement::Vertex(_), BaseKind::Vertex) | (gencoding::GraphElement::Edge(..), BaseKind::Edge)
            );
            ensure(kind_matches, || format!("graph {g_index}: {element:?} on a base of the other kind"))?;
        }

        for (vertex, v) in &rep.vertex_reps {
            let id = bases.assignment()[&gencoding::GraphElement::Vertex(vertex.clone())];
            let exponent = bases.get(id).unwrap().exponent.clone();
            let (found, rest) = small_factors(exponent.clone(), bound);
            ensure(found == [v.prime.to_u64().unwrap()], || format!("graph {g_index}: decode of {vertex} gives {found:?}"))?;
            let labels: BTreeSet<BigUint> = graph.vertices()[vertex]
                .iter()
                .map(|l| scheme.label_prime(l).unwrap().clone())
                .collect();
            let product = labels.iter().fold(BigUint::one(), |acc, p| acc * p);
            ensure(rest == product, || format!("graph {g_index}: {vertex} label part differs"))?;
            vertices += 1;
        }
        for e in &rep.edge_reps {
            let id = bases.assignment()[&gencoding::GraphElement::Edge(e.source.clone(), e.target.clone())];
            let (mut found, _) = small_factors(bases.get(id).unwrap().exponent.clone(), bound);
            found.sort_unstable();
            let mut ends = vec![e.source_prime.to_u64().unwrap(), e.target_prime.to_u64().unwrap()];
            ends.sort_unstable();
            ensure(found == ends, || format!("graph {g_index}: edge decode gives {found:?}, expected {ends:?}"))?;
        }
    }
    Ok(format!("100 graphs, {vertices} vertex exponents decoded; primes distinct, ranges disjoint, assignment injective"))
}

/// Issuing then proving between two pairs of channels; returns the signer's and
/// the verifier's transcripts.
fn seeded_session<C: Channel>(issuing: (C, C), proving: (C, C)) -> Result<(Transcript, Transcript), String> {
    let ekp = key();
    let scheme = bench::bench_scheme();
    let graph = bench::ring_graph(4);
    let m_0 = BigUint::from(0xdead_beefu32);
    let (a, mut b) = issuing;
    let (v, mut p) = proving;
    thread::scope(|s| {
        let (scheme, graph) = (&scheme, &graph);
        let signer = s.spawn(move || {
            let mut ch = RecordingChannel::new(a);
            let out = run_issuing_signer(&mut ch, ekp, graph, scheme, &mut rng(1001));
            ch.close();
            (out.is_ok(), ch.into_transcript())
        });
        let credential = run_issuing_recipient(&mut b, &ekp.public, &m_0, None, &mut rng(1002));
        let (ok, issuing) = signer.join().map_err(|_| "signer panicked")?;
        let credential = credential.map_err(|e| e.to_string())?;
        ensure(ok, || "signer failed".into())?;

        let verifier = s.spawn(move || {
            let mut ch = RecordingChannel::new(v);
            let out = run_verifier(&mut ch, &ekp.public, Predicate::PossessionPairwise, &mut rng(1003));
            ch.close();
            (out, ch.into_transcript())
        });
        run_prover(&mut p, &ekp.public, &credential, &mut rng(1004)).map_err(|e| e.to_string())?;
        let (verdict, proving) = verifier.join().map_err(|_| "verifier panicked")?;
        ensure(verdict == Ok(true), || "verifier rejected".into())?;
        Ok((issuing, proving))
    })
}

fn socket_pair() -> Result<(SocketChannel, SocketChannel), String> {
    let listener = SocketListener::bind("127.0.0.1:0").map_err(|e| e.to_string())?;
    let addr = listener.local_addr().map_err(|e| e.to_string())?;
    let client = SocketChannel::connect(addr).map_err(|e| e.to_string())?;
    let server = listener.accept().map_err(|e| e.to_string())?;
    Ok((server, client))
}

/// Sends `bytes` raw to a recipient waiting for the nonce, then half-closes.
/// Returns the recipient's error and the kind of its last frame, if any.
fn recipient_against_raw(bytes: Vec<u8>) -> Result<(OrchestrationError, Option<MessageType>), String> {
    let ekp = key();
    let listener = SocketListener::bind("127.0.0.1:0").map_err(|e| e.to_string())?;
    let addr = listener.local_addr().map_err(|e| e.to_string())?;
    let mut raw = TcpStream::connect(addr).map_err(|e| e.to_string())?;
    let mut server = listener.accept().map_err(|e| e.to_string())?;
    raw.write_all(&bytes).map_err(|e| e.to_string())?;
    raw.shutdown(std::net::Shutdown::Write).map_err(|e| e.to_string())?;
    let outcome = catch_unwind(AssertUnwindSafe(|| {
        run_issuing_recipient(&mut server, &ekp.public, &BigUint::from(5u32), None, &mut rng(10))
    }))
    .map_err(|_| "recipient panicked".to_string())?;
    server.close();
    let mut reply = Vec::new();
    let _ = raw.read_to_end(&mut reply);
    let kind = (reply.len() > 4).then(|| MessageType::from_code(reply[4])).flatten();
    match outcome {
        Ok(_) => Err("recipient accepted a malformed frame".into()),
        Err(e) => Ok((e, kind)),
    }
}

fn criterion_10() -> Outcome {
    let local = seeded_session(local_channel_pair(), local_channel_pair())?;
    let socket = seeded_session(socket_pair()?, socket_pair()?)?;
    let frames = local.0.len() + local.1.len();
    let bytes: usize = local.0.iter().chain(&local.1).map(|(_, f)| f.len()).sum();
    ensure(local == socket, || "local and socket transcripts differ".into())?;

    let mut oversize = ((MAX_FRAME_BYTES + 1) as u32).to_be_bytes().to_vec();
    oversize.push(MessageType::Nonce.code());
    let mut truncated = 100u32.to_be_bytes().to_vec();
    truncated.push(MessageType::Nonce.code());
    truncated.extend_from_slice(br#"{"nonce":"#);
    let mut unknown = 2u32.to_be_bytes().to_vec();
    unknown.push(42);
    unknown.extend_from_slice(b"{}");
    let cases: [(&str, Vec<u8>, fn(&ChannelError) -> bool); 3] = [
        ("oversize", oversize, |e| matches!(e, ChannelError::FrameTooLarge(n) if *n == MAX_FRAME_BYTES + 1)),
        ("truncated", truncated, |e| *e == ChannelError::Truncated),
        ("unknown type", unknown, |e| *e == ChannelError::UnknownMessageType(42)),
    ];
    for (name, bytes, expected) in cases {
        let (err, reply) = recipient_against_raw(bytes)?;
        match &err {
            OrchestrationError::Channel(c) if expected(c) => {}
            other => return Err(format!("{name}: unexpected error {other:?}")),
        }
        ensure(reply.is_none() || reply == Some(MessageType::Error), || format!("{name}: peer got {reply:?}"))?;
    }

    // Random and mutated frames through the decoder.
    let mut r = rng(1010);
    let good = orchestration::encode_frame(&orchestration::Message::new(MessageType::Nonce).with("nonce", "2a"))
        .map_err(|e| e.to_string())?;
    for i in 0..20_000 {
        let frame: Vec<u8> = if i % 2 == 0 {
            let len = r.gen_range(0..64);
            (0..len).map(|_| r.gen()).collect()
        } else {
            let mut f = good.clone();
            let at = r.gen_range(0..f.len());
            f[at] ^= 1 << r.gen_range(0..8);
            f
        };
        catch_unwind(|| {
            let _ = decode_frame(&frame);
            let _ = orchestration::read_frame(&mut &frame[..]);
        })
        .map_err(|_| format!("decoder panicked on {frame:?}"))?;
    }
    Ok(format!(
        "{frames} frames ({bytes} bytes) identical over local and socket channels; \
         oversize, truncated and unknown-type frames abort with their errors; 20000 fuzzed frames, no panic"
    ))
}

fn criterion_11() -> Outcome {
    let ekp = key();
    let pk = &ekp.public;
    let mut r = rng(11);
    let graph = bench::ring_graph(5);
    let rep = gencoding::encode_graph(&graph, &bench::bench_scheme()).map_err(|e| e.to_string())?;
    let mut exponents = BTreeMap::new();
    for id in pk.base_ids().into_iter().step_by(3) {
        exponents.insert(id, BigUint::from(r.next_u32()));
    }
    let collection = BaseCollection::from_exponents(pk, &exponents).map_err(|e| e.to_string())?;
    let m_0 = clsig::random_message(pk, &mut r);
    let modes = [
        ("graph", OracleInput::Graph(&rep)),
        ("message", OracleInput::Message(m_0.clone())),
        ("bases", OracleInput::Bases(collection.clone())),
    ];
    let mut passed = Vec::new();
    for (name, input) in modes {
        for _ in 0..5 {
            let c = clsig::signing_oracle(ekp, input.clone(), &mut r).map_err(|e| format!("{name}: {e}"))?;
            ensure(clsig::verify_signature(pk, &c.signature, &c.m_0, &c.bases), || format!("{name}: verify_signature rejects"))?;
            ensure(equation_holds(pk, &c.signature, &c.m_0, &c.bases), || format!("{name}: independent equation fails"))?;
            match name {
                "graph" => ensure(c.bases.len() == graph.vertex_count() + graph.edge_count(), || "graph: base count".into())?,
                "message" => ensure(c.bases.is_empty() && c.m_0 == m_0, || "message: unexpected bases".into())?,
                _ => ensure(c.bases.exponents() == exponents, || "bases: exponents changed".into())?,
            }
        }
        passed.push(name);
    }
    Ok(format!("modes {} each 5/5 verified, no recipient party", passed.join(", ")))
}

fn main() -> ExitCode {
    let criteria: [fn() -> Outcome; 11] = [
        criterion_1,
        criterion_2,
        criterion_3,
        criterion_4,
        criterion_5,
        criterion_6,
        criterion_7,
        criterion_8,
        criterion_9,
        criterion_10,
        criterion_11,
    ];
    let selected: BTreeSet<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (i, criterion) in criteria.iter().enumerate() {
        let number = i + 1;
        if !selected.is_empty() && !selected.contains(&number) {
            continue;
        }
        let start = Instant::now();
        let outcome = catch_unwind(criterion).unwrap_or_else(|_| Err("panicked".into()));
        match outcome {
            Ok(detail) => println!("PASS criterion {number}: {detail} [{:.1?}]", start.elapsed()),
            Err(detail) => {
                failed += 1;
                println!("FAIL criterion {number}: {detail} [{:.1?}]", start.elapsed());
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
