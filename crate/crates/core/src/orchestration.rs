//! Channels, wire framing and the four party state machines.
//!
//! Issuing:
//!
//! ```text
//! signer                       recipient
//!   NONCE            ------->
//!                    <-------  COMMIT_U, PROOF_U
//!   PRE_SIGNATURE    ------->
//!                    <-------  SIGNATURE_ACK
//! ```
//!
//! Proving:
//!
//! ```text
//! verifier                     prover
//!   PROOF_REQUEST    ------->
//!                    <-------  PROOF_SIGNATURE
//!   VERDICT          ------->
//! ```
//!
//! Any party that hits a failure sends one `ERROR` message and stops.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{self, Read, Write};
use std::net::{Shutdown, SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::mpsc;

use num_bigint::{BigInt, BigUint};
use rand::{CryptoRng, RngCore};
use thiserror::Error;

use crate::clsig::{self, ClsigError, Credential, PreSignature};
use crate::commitments::IntegerCommitment;
use crate::gencoding::{self, BaseCollection, EncodingError, EncodingScheme, Graph};
use crate::groups::{GroupElement, GroupError};
use crate::hex::{self, canonical_json};
use crate::keys::{self, BaseId, ExtendedKeyPair, KeyCorrectnessProof, PublicKey};
use crate::zkp::{self, JointProof, Predicate, ProofSignature, ProofStore, Urn, ZkpError};

/// Largest accepted payload.
pub const MAX_FRAME_BYTES: usize = 16 * 1024 * 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[repr(u8)]
pub enum MessageType {
    Nonce = 1,
    CommitU = 2,
    ProofU = 3,
    PreSignature = 4,
    SignatureAck = 5,
    ProofRequest = 6,
    ProofSignature = 7,
    Verdict = 8,
    Error = 9,
}

impl MessageType {
    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Option<Self> {
        use MessageType::*;
        Some(match code {
            1 => Nonce,
            2 => CommitU,
            3 => ProofU,
            4 => PreSignature,
            5 => SignatureAck,
            6 => ProofRequest,
            7 => ProofSignature,
            8 => Verdict,
            9 => Error,
            _ => return None,
        })
    }
}

impl fmt::Display for MessageType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use MessageType::*;
        f.write_str(match self {
            Nonce => "NONCE",
            CommitU => "COMMIT_U",
            ProofU => "PROOF_U",
            PreSignature => "PRE_SIGNATURE",
            SignatureAck => "SIGNATURE_ACK",
            ProofRequest => "PROOF_REQUEST",
            ProofSignature => "PROOF_SIGNATURE",
            Verdict => "VERDICT",
            Error => "ERROR",
        })
    }
}

/// Typed message with a flat string payload: URN keys or reserved names
/// mapped to hex integers or plain strings.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Message {
    pub kind: MessageType,
    pub payload: BTreeMap<String, String>,
}

impl Message {
    pub fn new(kind: MessageType) -> Self {
        Self { kind, payload: BTreeMap::new() }
    }

    pub fn with(mut self, key: impl Into<String>, value: impl Into<String>) -> Self {
        self.payload.insert(key.into(), value.into());
        self
    }

    pub fn error(reason: impl Into<String>) -> Self {
        Self::new(MessageType::Error).with("reason", reason)
    }

    pub fn get(&self, key: &str) -> ChannelResult<&str> {
        self.payload
            .get(key)
            .map(String::as_str)
            .ok_or_else(|| ChannelError::MalformedPayload(format!("{} without {key:?}", self.kind)))
    }

    pub fn get_uint(&self, key: &str) -> ChannelResult<BigUint> {
        let s = self.get(key)?;
        hex::uint_from_hex(s).ok_or_else(|| ChannelError::MalformedPayload(format!("{key:?} is not a hex integer")))
    }

    fn get_element(&self, pk: &dyn PublicKey, key: &str) -> Result<GroupElement> {
        Ok(pk.group().element(self.get_uint(key)?)?)
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ChannelError {
    #[error("frame of {0} bytes exceeds the limit")]
    FrameTooLarge(usize),
    #[error("frame truncated")]
    Truncated,
    #[error("unknown message type {0}")]
    UnknownMessageType(u8),
    #[error("malformed payload: {0}")]
    MalformedPayload(String),
    #[error("channel closed")]
    ChannelClosed,
    #[error("cannot bind: {0}")]
    BindFailure(String),
    #[error("cannot connect: {0}")]
    ConnectFailure(String),
    #[error("i/o error: {0}")]
    Io(String),
}

pub type ChannelResult<T> = std::result::Result<T, ChannelError>;

/// `len (u32 BE) || type (u8) || canonical JSON payload`.
pub fn encode_frame(message: &Message) -> ChannelResult<Vec<u8>> {
    let body = canonical_json(&message.payload).into_bytes();
    if body.len() > MAX_FRAME_BYTES {
        return Err(ChannelError::FrameTooLarge(body.len()));
    }
    let mut frame = Vec::with_capacity(5 + body.len());
    frame.extend_from_slice(&(body.len() as u32).to_be_bytes());
    frame.push(message.kind.code());
    frame.extend_from_slice(&body);
    Ok(frame)
}

fn parse_header(header: &[u8; 5]) -> ChannelResult<(usize, MessageType)> {
    let len = u32::from_be_bytes([header[0], header[1], header[2], header[3]]) as usize;
    if len > MAX_FRAME_BYTES {
        return Err(ChannelError::FrameTooLarge(len));
    }
    let kind = MessageType::from_code(header[4]).ok_or(ChannelError::UnknownMessageType(header[4]))?;
    Ok((len, kind))
}

fn parse_body(kind: MessageType, body: &[u8]) -> ChannelResult<Message> {
    let text = std::str::from_utf8(body).map_err(|e| ChannelError::MalformedPayload(e.to_string()))?;
    let payload: BTreeMap<String, String> =
        serde_json::from_str(text).map_err(|e| ChannelError::MalformedPayload(e.to_string()))?;
    Ok(Message { kind, payload })
}

/// Decodes exactly one frame; trailing bytes are an error.
pub fn decode_frame(frame: &[u8]) -> ChannelResult<Message> {
    let header: &[u8; 5] = frame.get(..5).and_then(|h| h.try_into().ok()).ok_or(ChannelError::Truncated)?;
    let (len, kind) = parse_header(header)?;
    match frame.len() - 5 {
        n if n < len => Err(ChannelError::Truncated),
        n if n > len => Err(ChannelError::MalformedPayload("trailing bytes after frame".into())),
        _ => parse_body(kind, &frame[5..]),
    }
}

fn io_error(e: io::Error) -> ChannelError {
    ChannelError::Io(e.to_string())
}

/// Reads one frame. End of stream before the first byte is `ChannelClosed`,
/// anywhere later `Truncated`.
pub fn read_frame<R: Read>(reader: &mut R) -> ChannelResult<(Message, Vec<u8>)> {
    let mut header = [0u8; 5];
    let mut filled = 0;
    while filled < header.len() {
        match reader.read(&mut header[filled..]) {
            Ok(0) if filled == 0 => return Err(ChannelError::ChannelClosed),
            Ok(0) => return Err(ChannelError::Truncated),
            Ok(n) => filled += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(io_error(e)),
        }
    }
    let (len, kind) = parse_header(&header)?;
    let mut body = vec![0u8; len];
    reader.read_exact(&mut body).map_err(|e| match e.kind() {
        io::ErrorKind::UnexpectedEof => ChannelError::Truncated,
        _ => io_error(e),
    })?;
    let message = parse_body(kind, &body)?;
    let mut frame = header.to_vec();
    frame.extend_from_slice(&body);
    Ok((message, frame))
}

/// In-order, reliable, blocking message transport for one session.
pub trait Channel: Send {
    fn send(&mut self, message: &Message) -> ChannelResult<()>;
    fn receive(&mut self) -> ChannelResult<Message>;
    fn close(&mut self);
}

/// One end of an in-process channel. Frames travel encoded, so the bytes
/// match the socket channel.
pub struct LocalChannel {
    tx: Option<mpsc::Sender<Vec<u8>>>,
    rx: mpsc::Receiver<Vec<u8>>,
}

pub fn local_channel_pair() -> (LocalChannel, LocalChannel) {
    let (a_tx, b_rx) = mpsc::channel();
    let (b_tx, a_rx) = mpsc::channel();
    (LocalChannel { tx: Some(a_tx), rx: a_rx }, LocalChannel { tx: Some(b_tx), rx: b_rx })
}

impl Channel for LocalChannel {
    fn send(&mut self, message: &Message) -> ChannelResult<()> {
        let frame = encode_frame(message)?;
        let tx = self.tx.as_ref().ok_or(ChannelError::ChannelClosed)?;
        tx.send(frame).map_err(|_| ChannelError::ChannelClosed)
    }

    fn receive(&mut self) -> ChannelResult<Message> {
        let frame = self.rx.recv().map_err(|_| ChannelError::ChannelClosed)?;
        decode_frame(&frame)
    }

    fn close(&mut self) {
        self.tx = None;
    }
}

/// TCP transport with the same framing.
pub struct SocketChannel {
    stream: TcpStream,
}

impl SocketChannel {
    pub fn connect(endpoint: impl ToSocketAddrs) -> ChannelResult<Self> {
        let stream = TcpStream::connect(endpoint).map_err(|e| ChannelError::ConnectFailure(e.to_string()))?;
        stream.set_nodelay(true).map_err(io_error)?;
        Ok(Self { stream })
    }

    pub fn from_stream(stream: TcpStream) -> Self {
        Self { stream }
    }

    pub fn peer_addr(&self) -> Option<SocketAddr> {
        self.stream.peer_addr().ok()
    }
}

impl Channel for SocketChannel {
    fn send(&mut self, message: &Message) -> ChannelResult<()> {
        let frame = encode_frame(message)?;
        self.stream.write_all(&frame).map_err(|e| match e.kind() {
            io::ErrorKind::BrokenPipe | io::ErrorKind::ConnectionReset | io::ErrorKind::NotConnected => {
                ChannelError::ChannelClosed
            }
            _ => io_error(e),
        })
    }

    fn receive(&mut self) -> ChannelResult<Message> {
        read_frame(&mut self.stream).map(|(m, _)| m)
    }

    fn close(&mut self) {
        let _ = self.stream.shutdown(Shutdown::Write);
    }
}

pub struct SocketListener {
    listener: TcpListener,
}

impl SocketListener {
    pub fn bind(endpoint: impl ToSocketAddrs) -> ChannelResult<Self> {
        let listener = TcpListener::bind(endpoint).map_err(|e| ChannelError::BindFailure(e.to_string()))?;
        Ok(Self { listener })
    }

    pub fn local_addr(&self) -> ChannelResult<SocketAddr> {
        self.listener.local_addr().map_err(io_error)
    }

    /// Blocks for one peer.
    pub fn accept(&self) -> ChannelResult<SocketChannel> {
        let (stream, _) = self.listener.accept().map_err(io_error)?;
        stream.set_nodelay(true).map_err(io_error)?;
        Ok(SocketChannel { stream })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Sent,
    Received,
}

/// Wraps a channel and keeps the encoded frame of every message through it.
pub struct RecordingChannel<C> {
    inner: C,
    transcript: Vec<(Direction, Vec<u8>)>,
}

impl<C: Channel> RecordingChannel<C> {
    pub fn new(inner: C) -> Self {
        Self { inner, transcript: Vec::new() }
    }

    pub fn transcript(&self) -> &[(Direction, Vec<u8>)] {
        &self.transcript
    }

    pub fn into_transcript(self) -> Vec<(Direction, Vec<u8>)> {
        self.transcript
    }
}

impl<C: Channel> Channel for RecordingChannel<C> {
    fn send(&mut self, message: &Message) -> ChannelResult<()> {
        self.inner.send(message)?;
        self.transcript.push((Direction::Sent, encode_frame(message)?));
        Ok(())
    }

    fn receive(&mut self) -> ChannelResult<Message> {
        let message = self.inner.receive()?;
        self.transcript.push((Direction::Received, encode_frame(&message)?));
        Ok(message)
    }

    fn close(&mut self) {
        self.inner.close();
    }
}

impl<C: Channel + ?Sized> Channel for &mut C {
    fn send(&mut self, message: &Message) -> ChannelResult<()> {
        (**self).send(message)
    }

    fn receive(&mut self) -> ChannelResult<Message> {
        (**self).receive()
    }

    fn close(&mut self) {
        (**self).close()
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum OrchestrationError {
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error("peer proof rejected")]
    ProofRejected,
    #[error("expected {expected}, received {found}")]
    ProtocolOrderViolation { expected: MessageType, found: MessageType },
    #[error("invalid pre-signature: {0}")]
    InvalidPreSignature(String),
    #[error("unsupported predicate {0:?}")]
    UnsupportedPredicate(String),
    #[error("key-correctness proof rejected")]
    KeyProofRejected,
    #[error("peer aborted: {0}")]
    PeerAborted(String),
    #[error(transparent)]
    Group(#[from] GroupError),
    #[error(transparent)]
    Clsig(#[from] ClsigError),
    #[error(transparent)]
    Zkp(#[from] ZkpError),
    #[error(transparent)]
    Encoding(#[from] EncodingError),
}

pub type Result<T> = std::result::Result<T, OrchestrationError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Signer,
    Recipient,
    Prover,
    Verifier,
}

/// Protocol phases in the order a session passes through them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Phase {
    Start,
    NonceExchanged,
    CommitmentSent,
    CommitmentVerified,
    PreSignatureSent,
    PreSignatureReceived,
    ProofRequested,
    ProofSent,
    Finished,
    Aborted,
}

/// Per-session state of one party.
#[derive(Debug)]
pub struct SessionState {
    pub role: Role,
    phase: Phase,
    pub store: ProofStore,
    pub peer_nonce: Option<BigUint>,
}

impl SessionState {
    pub fn new(role: Role) -> Self {
        Self { role, phase: Phase::Start, store: ProofStore::new(), peer_nonce: None }
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    /// Moves forward; phases never repeat or go back.
    pub fn advance(&mut self, to: Phase) {
        assert!(to > self.phase, "{:?} cannot move from {:?} to {:?}", self.role, self.phase, to);
        self.phase = to;
    }

    fn abort(&mut self) {
        self.phase = Phase::Aborted;
    }
}

struct Session<'a, C: Channel> {
    channel: &'a mut C,
    state: SessionState,
}

impl<'a, C: Channel> Session<'a, C> {
    fn new(channel: &'a mut C, role: Role) -> Self {
        Self { channel, state: SessionState::new(role) }
    }

    fn send(&mut self, message: &Message) -> Result<()> {
        Ok(self.channel.send(message)?)
    }

    /// Receives the next message and checks its type. A peer `ERROR` ends the
    /// session without reply; any other mismatch is answered with `ERROR`.
    fn expect(&mut self, kind: MessageType) -> Result<Message> {
        let message = match self.channel.receive() {
            Ok(m) => m,
            Err(e) => return Err(self.fail(e.into())),
        };
        if message.kind == kind {
            return Ok(message);
        }
        if message.kind == MessageType::Error {
            self.state.abort();
            let reason = message.payload.get("reason").cloned().unwrap_or_default();
            return Err(OrchestrationError::PeerAborted(reason));
        }
        Err(self.fail(OrchestrationError::ProtocolOrderViolation { expected: kind, found: message.kind }))
    }

    /// Sends one `ERROR` and marks the session aborted.
    fn fail(&mut self, error: OrchestrationError) -> OrchestrationError {
        if self.state.phase != Phase::Aborted {
            if !matches!(error, OrchestrationError::Channel(ChannelError::ChannelClosed)) {
                let _ = self.channel.send(&Message::error(error.to_string()));
            }
            self.state.abort();
        }
        error
    }

    fn check<T>(&mut self, result: Result<T>) -> Result<T> {
        result.map_err(|e| self.fail(e))
    }
}

const NONCE: &str = "nonce";

fn exponent_key(id: BaseId) -> String {
    format!("exponent:{id}")
}

fn commitment_key(id: BaseId) -> String {
    format!("commitment:{id}")
}

fn representative_key(id: BaseId) -> String {
    format!("representative:{id}")
}

fn urn_payload(message: Message, responses: &BTreeMap<Urn, BigInt>) -> Message {
    responses.iter().fold(message, |m, (urn, v)| m.with(urn.to_string(), hex::int_to_hex(v)))
}

fn urn_responses(message: &Message) -> Result<BTreeMap<Urn, BigInt>> {
    let mut out = BTreeMap::new();
    for (k, v) in message.payload.iter().filter(|(k, _)| k.starts_with("urn:")) {
        let value = hex::int_from_hex(v)
            .ok_or_else(|| ChannelError::MalformedPayload(format!("{k} is not a hex integer")))?;
        out.insert(k.parse::<Urn>()?, value);
    }
    Ok(out)
}

fn bases_payload(message: Message, bases: &BaseCollection) -> Message {
    bases.exponents().iter().fold(message, |m, (id, e)| m.with(exponent_key(*id), hex::uint_to_hex(e)))
}

fn bases_from_payload(pk: &dyn PublicKey, message: &Message) -> Result<BaseCollection> {
    let mut exponents = BTreeMap::new();
    for (k, v) in &message.payload {
        if let Some(id) = k.strip_prefix("exponent:") {
            let id: BaseId = id.parse().map_err(|_| ChannelError::MalformedPayload(format!("bad base id {id:?}")))?;
            let exponent =
                hex::uint_from_hex(v).ok_or_else(|| ChannelError::MalformedPayload(format!("{k} is not hex")))?;
            exponents.insert(id, exponent);
        }
    }
    Ok(BaseCollection::from_exponents(pk, &exponents)?)
}

/// Recipient's opening move: `U = R_0^{m_0} S^{v'}` and a proof of its representation.
pub fn recipient_commit<P: PublicKey + ?Sized, R: RngCore + CryptoRng + ?Sized>(
    pk: &P,
    m_0: &BigUint,
    nonce: &BigUint,
    rng: &mut R,
) -> Result<(IntegerCommitment, JointProof)> {
    let u = clsig::commit_message(pk, m_0, rng)?;
    let statement = clsig::issuing_statement(pk, u.value());
    let witnesses = BTreeMap::from([
        (clsig::issuing_m0_urn(), BigInt::from(m_0.clone())),
        (clsig::issuing_v_urn(), BigInt::from(u.randomness().clone())),
    ]);
    let proof = zkp::prove_representation(&statement, &witnesses, &pk.challenge_context(), nonce, pk.params(), rng)?;
    Ok((u, proof))
}

/// Signer's answer: checks the proof for `U`, then signs the bases.
pub fn signer_respond<R: RngCore + CryptoRng + ?Sized>(
    ekp: &ExtendedKeyPair,
    u: &GroupElement,
    proof: &JointProof,
    nonce: &BigUint,
    bases: &BaseCollection,
    rng: &mut R,
) -> Result<PreSignature> {
    let pk = &ekp.public;
    let statement = clsig::issuing_statement(pk, u);
    if !zkp::verify_representation(&statement, proof, &pk.challenge_context(), nonce, pk.params()) {
        return Err(OrchestrationError::ProofRejected);
    }
    Ok(clsig::sign_partial(ekp, u, bases, rng)?)
}

/// Recipient's closing move: checks and completes the pre-signature.
pub fn recipient_complete<P: PublicKey + ?Sized>(
    pk: &P,
    u: &IntegerCommitment,
    pre: &PreSignature,
    bases: BaseCollection,
    m_0: &BigUint,
) -> Result<Credential> {
    if !clsig::check_pre_signature(pk, pre, u.value(), &bases) {
        return Err(OrchestrationError::InvalidPreSignature("equation or e check failed".into()));
    }
    // U was built here from m_0 and v', so the checked equation already is
    // the verification equation of the completed signature.
    let signature = clsig::complete_signature(pre, u.randomness());
    Ok(Credential { signature, m_0: m_0.clone(), bases })
}

/// What the signer keeps from a session. Carries nothing the recipient hid.
#[derive(Debug, Clone)]
pub struct IssuedRecord {
    pub u: GroupElement,
    pub a: GroupElement,
    pub e: BigUint,
    pub bases: BaseCollection,
}

pub fn run_issuing_signer<C: Channel, R: RngCore + CryptoRng + ?Sized>(
    channel: &mut C,
    ekp: &ExtendedKeyPair,
    graph: &Graph,
    scheme: &EncodingScheme,
    rng: &mut R,
) -> Result<IssuedRecord> {
    let pk = &ekp.public;
    let mut session = Session::new(channel, Role::Signer);
    let nonce = zkp::fresh_nonce(pk.base().params(), rng);
    session.send(&Message::new(MessageType::Nonce).with(NONCE, hex::uint_to_hex(&nonce)))?;
    session.state.advance(Phase::NonceExchanged);

    let commit = session.expect(MessageType::CommitU)?;
    let u = session.check(commit.get_element(pk, "u"))?;
    let proof_msg = session.expect(MessageType::ProofU)?;
    let proof = session.check((|| {
        Ok(JointProof { challenge: proof_msg.get_uint("challenge")?, responses: urn_responses(&proof_msg)? })
    })())?;
    session.state.advance(Phase::CommitmentVerified);

    let (_, bases) = session.check(gencoding::encode(graph, scheme, pk, rng).map_err(Into::into))?;
    let pre = session.check(signer_respond(ekp, &u, &proof, &nonce, &bases, rng))?;
    let message = Message::new(MessageType::PreSignature)
        .with("a", hex::uint_to_hex(pre.a.value()))
        .with("e", hex::uint_to_hex(&pre.e))
        .with("v_pp", hex::uint_to_hex(&pre.v_pp));
    session.send(&bases_payload(message, &bases))?;
    session.state.advance(Phase::PreSignatureSent);

    session.expect(MessageType::SignatureAck)?;
    session.state.advance(Phase::Finished);
    Ok(IssuedRecord { u, a: pre.a, e: pre.e, bases })
}

/// Recipient side of issuing. With `key_proof`, the signer's key is checked
/// before anything is sent.
pub fn run_issuing_recipient<C: Channel, P: PublicKey, R: RngCore + CryptoRng + ?Sized>(
    channel: &mut C,
    pk: &P,
    m_0: &BigUint,
    key_proof: Option<&KeyCorrectnessProof>,
    rng: &mut R,
) -> Result<Credential> {
    let mut session = Session::new(channel, Role::Recipient);
    let nonce_msg = session.expect(MessageType::Nonce)?;
    let nonce = session.check(nonce_msg.get_uint(NONCE).map_err(Into::into))?;
    session.state.peer_nonce = Some(nonce.clone());
    session.state.advance(Phase::NonceExchanged);
    if let Some(proof) = key_proof {
        if !keys::verify_key_correctness(pk, proof) {
            return Err(session.fail(OrchestrationError::KeyProofRejected));
        }
    }
    if m_0.bits() > u64::from(pk.params().l_m) {
        return Err(session.fail(ClsigError::ExponentTooLarge("m_0".into()).into()));
    }

    let (u, proof) = session.check(recipient_commit(pk, m_0, &nonce, rng))?;
    session.send(&Message::new(MessageType::CommitU).with("u", hex::uint_to_hex(u.value().value())))?;
    let proof_msg = Message::new(MessageType::ProofU).with("challenge", hex::uint_to_hex(&proof.challenge));
    session.send(&urn_payload(proof_msg, &proof.responses))?;
    session.state.advance(Phase::CommitmentSent);

    let pre_msg = session.expect(MessageType::PreSignature)?;
    let parsed = (|| -> Result<(PreSignature, BaseCollection)> {
        let pre = PreSignature {
            a: pre_msg.get_element(pk, "a")?,
            e: pre_msg.get_uint("e")?,
            v_pp: pre_msg.get_uint("v_pp")?,
        };
        Ok((pre, bases_from_payload(pk, &pre_msg)?))
    })()
    .map_err(|e| OrchestrationError::InvalidPreSignature(e.to_string()));
    let (pre, bases) = session.check(parsed)?;
    session.state.advance(Phase::PreSignatureReceived);
    let credential = session.check(recipient_complete(pk, &u, &pre, bases, m_0))?;

    session.send(&Message::new(MessageType::SignatureAck).with("status", "ok"))?;
    session.state.advance(Phase::Finished);
    Ok(credential)
}

fn proof_payload(proof: &ProofSignature) -> Message {
    let mut message = Message::new(MessageType::ProofSignature)
        .with("a_prime", hex::uint_to_hex(proof.a_prime.value()))
        .with("challenge", hex::uint_to_hex(&proof.challenge));
    for (id, c) in &proof.commitments {
        message = message.with(commitment_key(*id), hex::uint_to_hex(c.value()));
    }
    for (id, d) in &proof.representatives {
        message = message.with(representative_key(*id), hex::uint_to_hex(d.value()));
    }
    urn_payload(message, &proof.responses)
}

fn proof_from_payload(pk: &dyn PublicKey, message: &Message) -> Result<ProofSignature> {
    let mut commitments = BTreeMap::new();
    let mut representatives = BTreeMap::new();
    for key in message.payload.keys() {
        let (map, id) = if let Some(id) = key.strip_prefix("commitment:") {
            (&mut commitments, id)
        } else if let Some(id) = key.strip_prefix("representative:") {
            (&mut representatives, id)
        } else if key.starts_with("urn:") || key == "a_prime" || key == "challenge" {
            continue;
        } else {
            return Err(ChannelError::MalformedPayload(format!("unexpected key {key:?}")).into());
        };
        let id: BaseId = id.parse().map_err(|_| ChannelError::MalformedPayload(format!("bad base id {id:?}")))?;
        map.insert(id, message.get_element(pk, key)?);
    }
    Ok(ProofSignature {
        a_prime: message.get_element(pk, "a_prime")?,
        challenge: message.get_uint("challenge")?,
        responses: urn_responses(message)?,
        commitments,
        representatives,
    })
}

/// What the prover sent and what the verifier decided.
#[derive(Debug, Clone)]
pub struct ProverTranscript {
    pub predicate: Predicate,
    pub nonce: BigUint,
    pub proof: ProofSignature,
    pub accepted: bool,
}

pub fn run_prover<C: Channel, P: PublicKey, R: RngCore + CryptoRng + ?Sized>(
    channel: &mut C,
    pk: &P,
    credential: &Credential,
    rng: &mut R,
) -> Result<ProverTranscript> {
    let mut session = Session::new(channel, Role::Prover);
    let request = session.expect(MessageType::ProofRequest)?;
    let predicate_name = session.check(request.get("predicate").map(str::to_string).map_err(Into::into))?;
    let predicate = session
        .check(predicate_name.parse::<Predicate>().map_err(|_| OrchestrationError::UnsupportedPredicate(predicate_name)))?;
    let nonce = session.check(request.get_uint(NONCE).map_err(Into::into))?;
    session.state.peer_nonce = Some(nonce.clone());
    session.state.advance(Phase::ProofRequested);

    let proof = zkp::prove(pk, credential, predicate, &nonce, &mut session.state.store, rng);
    let proof = session.check(proof.map_err(Into::into))?;
    session.send(&proof_payload(&proof))?;
    session.state.advance(Phase::ProofSent);

    let verdict = session.expect(MessageType::Verdict)?;
    let accepted = verdict.payload.get("accept").map(String::as_str) == Some("true");
    session.state.advance(Phase::Finished);
    Ok(ProverTranscript { predicate, nonce, proof, accepted })
}

/// Sends a fresh nonce with the request and returns whether the proof was accepted.
pub fn run_verifier<C: Channel, P: PublicKey, R: RngCore + CryptoRng + ?Sized>(
    channel: &mut C,
    pk: &P,
    predicate: Predicate,
    rng: &mut R,
) -> Result<bool> {
    run_verifier_with_request(channel, pk, &predicate.to_string(), rng)
}

/// Same as [`run_verifier`] with the predicate spelled by the caller, so a
/// prover's handling of unknown names can be exercised.
pub fn run_verifier_with_request<C: Channel, P: PublicKey, R: RngCore + CryptoRng + ?Sized>(
    channel: &mut C,
    pk: &P,
    predicate: &str,
    rng: &mut R,
) -> Result<bool> {
    let mut session = Session::new(channel, Role::Verifier);
    let nonce = zkp::fresh_nonce(pk.params(), rng);
    let request = Message::new(MessageType::ProofRequest).with("predicate", predicate).with(NONCE, hex::uint_to_hex(&nonce));
    session.send(&request)?;
    session.state.advance(Phase::ProofRequested);

    let message = session.expect(MessageType::ProofSignature)?;
    let accepted = match (predicate.parse::<Predicate>(), proof_from_payload(pk, &message)) {
        (Ok(predicate), Ok(proof)) => zkp::verify(pk, predicate, &proof, &nonce),
        _ => false,
    };
    session.send(&Message::new(MessageType::Verdict).with("accept", accepted.to_string()))?;
    session.state.advance(Phase::Finished);
    Ok(accepted)
}

/// `PROOF_SIGNATURE` message carrying `proof`.
pub fn proof_message(proof: &ProofSignature) -> Message {
    proof_payload(proof)
}

pub fn proof_from_message<P: PublicKey>(pk: &P, message: &Message) -> Result<ProofSignature> {
    proof_from_payload(pk, message)
}
