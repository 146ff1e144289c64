//! Signer keys, extended keys with certified vertex and edge bases, the
//! key-correctness proof and the canonical JSON form of public keys.

use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use num_bigint::{BigInt, BigUint};
use num_traits::One;
use rand::{CryptoRng, RngCore};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::groups::{GroupElement, GroupError, QrGroupN, QrGroupPq};
use crate::hex::{self, canonical_json, serde_uint, serde_uint_vec};
use crate::ntheory::{self, NumberTheoryError, SafePrime, SpecialRsaModulus};
use crate::zkp::{self, JointProof, Statement, Term, Urn};

#[derive(Debug, Error)]
pub enum KeyError {
    #[error("invalid key generation parameters: {0}")]
    InvalidParams(String),
    #[error("invalid graph parameters: {0}")]
    InvalidGraphParams(String),
    #[error("malformed key document: {0}")]
    Malformed(String),
    #[error("inconsistent key material: {0}")]
    Inconsistent(&'static str),
    #[error(transparent)]
    Group(#[from] GroupError),
    #[error(transparent)]
    NumberTheory(#[from] NumberTheoryError),
    #[error(transparent)]
    Zkp(#[from] zkp::ZkpError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, KeyError>;

/// Bit lengths of the scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct KeyGenParams {
    pub l_n: u32,
    pub l_m: u32,
    pub l_e: u32,
    pub l_e_prime: u32,
    pub l_v: u32,
    pub l_statzk: u32,
    pub l_h: u32,
}

impl KeyGenParams {
    pub const fn production() -> Self {
        Self { l_n: 2048, l_m: 256, l_e: 597, l_e_prime: 120, l_v: 2724, l_statzk: 80, l_h: 256 }
    }

    /// Fast profile for tests and local experiments.
    pub const fn test_profile() -> Self {
        Self { l_n: 512, l_m: 32, l_e: 373, l_e_prime: 13, l_v: 848, l_statzk: 80, l_h: 256 }
    }

    /// Production lengths with another modulus size; `l_v` keeps its margin over `l_n`.
    pub fn with_modulus_bits(bits: u32) -> Self {
        let base = Self::production();
        Self { l_n: bits, l_v: base.l_v - base.l_n + bits, ..base }
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [self.l_n, self.l_m, self.l_e, self.l_e_prime, self.l_v, self.l_statzk, self.l_h];
        if fields.contains(&0) {
            return Err(KeyError::InvalidParams("all lengths must be positive".into()));
        }
        if self.l_n % 2 != 0 || self.l_n < 32 {
            return Err(KeyError::InvalidParams(format!("l_n = {} must be even and at least 32", self.l_n)));
        }
        let e_min = self.l_statzk + self.l_h + (self.l_m + 4).max(self.l_e_prime + 2);
        if self.l_e <= e_min {
            return Err(KeyError::InvalidParams(format!("l_e = {} must exceed {e_min}", self.l_e)));
        }
        let v_min = self.l_n + self.l_statzk + self.l_h;
        if self.l_v < v_min {
            return Err(KeyError::InvalidParams(format!("l_v = {} must be at least {v_min}", self.l_v)));
        }
        Ok(())
    }

    /// Bits of commitment blinding randomness.
    pub fn commitment_randomness_bits(&self) -> u32 {
        self.l_n + self.l_statzk
    }

    /// Bound on the randomized blinding `v - e * r_A` of a possession proof.
    pub fn v_prime_bits(&self) -> u32 {
        self.l_v.max(self.l_e + self.l_n + self.l_statzk) + 1
    }

    pub fn tilde_bits(&self, witness_bits: u32) -> u32 {
        witness_bits + self.l_statzk + self.l_h
    }

    /// Largest admissible bit length of a response for a witness of `witness_bits`.
    pub fn response_bound_bits(&self, witness_bits: u32) -> u32 {
        self.tilde_bits(witness_bits) + 1
    }

    /// Interval `[2^(l_e-1), 2^(l_e-1) + 2^(l_e'-1)]` for the signature exponent.
    pub fn e_interval(&self) -> (BigUint, BigUint) {
        let lo = BigUint::one() << (self.l_e - 1);
        let hi = &lo + (BigUint::one() << (self.l_e_prime - 1));
        (lo, hi)
    }

    fn context(&self) -> Vec<BigUint> {
        [self.l_n, self.l_m, self.l_e, self.l_e_prime, self.l_v, self.l_statzk, self.l_h]
            .into_iter()
            .map(BigUint::from)
            .collect()
    }
}

impl Default for KeyGenParams {
    fn default() -> Self {
        Self::production()
    }
}

/// Capacity of an extended key: `l_V` vertex bases and `l_E` edge bases.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphParams {
    pub max_vertices: u32,
    pub max_edges: u32,
}

impl GraphParams {
    pub fn validate(&self) -> Result<()> {
        if self.max_vertices == 0 {
            return Err(KeyError::InvalidGraphParams("at least one vertex base is required".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BaseKind {
    Vertex,
    Edge,
}

/// Index of a certified base, 1-based within its kind. Renders as `v3` or `e1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct BaseId {
    pub kind: BaseKind,
    pub index: u32,
}

impl BaseId {
    pub const fn vertex(index: u32) -> Self {
        Self { kind: BaseKind::Vertex, index }
    }

    pub const fn edge(index: u32) -> Self {
        Self { kind: BaseKind::Edge, index }
    }
}

impl fmt::Display for BaseId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let prefix = match self.kind {
            BaseKind::Vertex => 'v',
            BaseKind::Edge => 'e',
        };
        write!(f, "{prefix}{}", self.index)
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("invalid base id {0:?}")]
pub struct ParseBaseIdError(pub String);

impl FromStr for BaseId {
    type Err = ParseBaseIdError;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let err = || ParseBaseIdError(s.to_string());
        let kind = match s.as_bytes().first() {
            Some(b'v') => BaseKind::Vertex,
            Some(b'e') => BaseKind::Edge,
            _ => return Err(err()),
        };
        let digits = &s[1..];
        if digits.is_empty() || digits.starts_with('0') || !digits.bytes().all(|b| b.is_ascii_digit()) {
            return Err(err());
        }
        let index = digits.parse().map_err(|_| err())?;
        Ok(Self { kind, index })
    }
}

impl Serialize for BaseId {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for BaseId {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Public half of a signer key: `N, S, Z, R_0`.
#[derive(Clone, PartialEq, Eq)]
pub struct SignerPublicKey {
    params: KeyGenParams,
    group: Arc<QrGroupN>,
    s: GroupElement,
    z: GroupElement,
    r_0: GroupElement,
}

impl fmt::Debug for SignerPublicKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SignerPublicKey").field("params", &self.params).field("n_bits", &self.group.modulus().bits()).finish()
    }
}

impl SignerPublicKey {
    pub fn params(&self) -> &KeyGenParams {
        &self.params
    }

    pub fn group(&self) -> &Arc<QrGroupN> {
        &self.group
    }

    pub fn n(&self) -> &BigUint {
        self.group.modulus()
    }

    pub fn s(&self) -> &GroupElement {
        &self.s
    }

    pub fn z(&self) -> &GroupElement {
        &self.z
    }

    pub fn r_0(&self) -> &GroupElement {
        &self.r_0
    }

    pub fn to_json(&self) -> String {
        canonical_json(&self.doc())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: SignerPublicDoc = serde_json::from_str(text).map_err(|e| KeyError::Malformed(e.to_string()))?;
        Self::from_doc(doc)
    }

    fn doc(&self) -> SignerPublicDoc {
        SignerPublicDoc {
            params: self.params,
            n: self.n().clone(),
            s: self.s.value().clone(),
            z: self.z.value().clone(),
            r_0: self.r_0.value().clone(),
        }
    }

    fn from_doc(doc: SignerPublicDoc) -> Result<Self> {
        doc.params.validate()?;
        if doc.n.bits() != u64::from(doc.params.l_n) {
            return Err(KeyError::Inconsistent("modulus length differs from l_n"));
        }
        let group = QrGroupN::new(doc.n)?;
        let s = public_base(&group, doc.s)?;
        let z = public_base(&group, doc.z)?;
        let r_0 = public_base(&group, doc.r_0)?;
        Ok(Self { params: doc.params, group, s, z, r_0 })
    }
}

fn public_base(group: &Arc<QrGroupN>, value: BigUint) -> Result<GroupElement> {
    if !group.passes_jacobi_test(&value) {
        return Err(KeyError::Inconsistent("public base fails the Jacobi test"));
    }
    let element = group.element(value)?;
    if element.is_identity() {
        return Err(KeyError::Inconsistent("public base is the identity"));
    }
    Ok(element)
}

/// The trapdoor together with `log_S Z` and `log_S R_0`.
#[derive(Clone)]
pub struct SignerPrivateKey {
    group_pq: QrGroupPq,
    x_z: BigUint,
    x_0: BigUint,
}

impl fmt::Debug for SignerPrivateKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("SignerPrivateKey(redacted)")
    }
}

impl SignerPrivateKey {
    pub fn group_pq(&self) -> &QrGroupPq {
        &self.group_pq
    }

    pub fn modulus(&self) -> &SpecialRsaModulus {
        self.group_pq.modulus()
    }

    pub fn x_z(&self) -> &BigUint {
        &self.x_z
    }

    pub fn x_0(&self) -> &BigUint {
        &self.x_0
    }
}

#[derive(Debug, Clone)]
pub struct SignerKeyPair {
    pub public: SignerPublicKey,
    pub private: SignerPrivateKey,
}

/// Extended public key: the signer key plus certified bases `R_1..R_lV`
/// and `R'_1..R'_lE`.
#[derive(Clone, PartialEq, Eq)]
pub struct ExtendedPublicKey {
    base: SignerPublicKey,
    vertex_bases: Vec<GroupElement>,
    edge_bases: Vec<GroupElement>,
    encoding_id: String,
    graph_params: GraphParams,
}

impl fmt::Debug for ExtendedPublicKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ExtendedPublicKey")
            .field("base", &self.base)
            .field("graph_params", &self.graph_params)
            .field("encoding_id", &self.encoding_id)
            .finish()
    }
}

impl ExtendedPublicKey {
    pub fn base(&self) -> &SignerPublicKey {
        &self.base
    }

    pub fn vertex_bases(&self) -> &[GroupElement] {
        &self.vertex_bases
    }

    pub fn edge_bases(&self) -> &[GroupElement] {
        &self.edge_bases
    }

    pub fn encoding_id(&self) -> &str {
        &self.encoding_id
    }

    pub fn graph_params(&self) -> &GraphParams {
        &self.graph_params
    }

    pub fn to_json(&self) -> String {
        canonical_json(&self.doc())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: ExtendedPublicDoc = serde_json::from_str(text).map_err(|e| KeyError::Malformed(e.to_string()))?;
        Self::from_doc(doc)
    }

    fn doc(&self) -> ExtendedPublicDoc {
        ExtendedPublicDoc {
            base: self.base.doc(),
            vertex_bases: self.vertex_bases.iter().map(|b| b.value().clone()).collect(),
            edge_bases: self.edge_bases.iter().map(|b| b.value().clone()).collect(),
            encoding_id: self.encoding_id.clone(),
            graph_params: self.graph_params,
        }
    }

    fn from_doc(doc: ExtendedPublicDoc) -> Result<Self> {
        let base = SignerPublicKey::from_doc(doc.base)?;
        doc.graph_params.validate()?;
        if doc.vertex_bases.len() != doc.graph_params.max_vertices as usize
            || doc.edge_bases.len() != doc.graph_params.max_edges as usize
        {
            return Err(KeyError::Inconsistent("base count differs from graph parameters"));
        }
        let convert = |values: Vec<BigUint>| -> Result<Vec<GroupElement>> {
            values.into_iter().map(|v| public_base(&base.group, v)).collect()
        };
        Ok(Self {
            vertex_bases: convert(doc.vertex_bases)?,
            edge_bases: convert(doc.edge_bases)?,
            base,
            encoding_id: doc.encoding_id,
            graph_params: doc.graph_params,
        })
    }
}

#[derive(Clone)]
pub struct ExtendedPrivateKey {
    base: SignerPrivateKey,
    vertex_dlogs: Vec<BigUint>,
    edge_dlogs: Vec<BigUint>,
}

impl fmt::Debug for ExtendedPrivateKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("ExtendedPrivateKey(redacted)")
    }
}

impl ExtendedPrivateKey {
    pub fn base(&self) -> &SignerPrivateKey {
        &self.base
    }
}

#[derive(Debug, Clone)]
pub struct ExtendedKeyPair {
    pub public: ExtendedPublicKey,
    pub private: ExtendedPrivateKey,
}

/// Read access shared by plain and extended public keys.
pub trait PublicKey: Send + Sync {
    fn signer_key(&self) -> &SignerPublicKey;

    /// `R_i` or `R'_i` for the id, if the key certifies it.
    fn certified_base(&self, id: BaseId) -> Option<&GroupElement>;

    /// All certified base ids in ascending order.
    fn base_ids(&self) -> Vec<BaseId>;

    /// Ordered integers bound into every Fiat-Shamir challenge under this key.
    fn challenge_context(&self) -> Vec<BigUint>;

    fn extended(&self) -> Option<&ExtendedPublicKey>;

    fn params(&self) -> &KeyGenParams {
        self.signer_key().params()
    }

    fn group(&self) -> &Arc<QrGroupN> {
        self.signer_key().group()
    }
}

impl PublicKey for SignerPublicKey {
    fn signer_key(&self) -> &SignerPublicKey {
        self
    }

    fn certified_base(&self, _id: BaseId) -> Option<&GroupElement> {
        None
    }

    fn base_ids(&self) -> Vec<BaseId> {
        Vec::new()
    }

    fn challenge_context(&self) -> Vec<BigUint> {
        let mut ctx = self.params.context();
        ctx.extend([self.n(), self.s.value(), self.z.value(), self.r_0.value()].into_iter().cloned());
        ctx
    }

    fn extended(&self) -> Option<&ExtendedPublicKey> {
        None
    }
}

impl PublicKey for ExtendedPublicKey {
    fn signer_key(&self) -> &SignerPublicKey {
        &self.base
    }

    fn certified_base(&self, id: BaseId) -> Option<&GroupElement> {
        let list = match id.kind {
            BaseKind::Vertex => &self.vertex_bases,
            BaseKind::Edge => &self.edge_bases,
        };
        (id.index as usize).checked_sub(1).and_then(|i| list.get(i))
    }

    fn base_ids(&self) -> Vec<BaseId> {
        let vertices = (1..=self.vertex_bases.len() as u32).map(BaseId::vertex);
        let edges = (1..=self.edge_bases.len() as u32).map(BaseId::edge);
        vertices.chain(edges).collect()
    }

    fn challenge_context(&self) -> Vec<BigUint> {
        let mut ctx = self.base.challenge_context();
        ctx.push(BigUint::from(self.graph_params.max_vertices));
        ctx.push(BigUint::from(self.graph_params.max_edges));
        ctx.extend(self.vertex_bases.iter().map(|b| b.value().clone()));
        ctx.extend(self.edge_bases.iter().map(|b| b.value().clone()));
        ctx.push(BigUint::from_bytes_be(&Sha256::digest(self.encoding_id.as_bytes())));
        ctx
    }

    fn extended(&self) -> Option<&ExtendedPublicKey> {
        Some(self)
    }
}

/// Access to the signer trapdoor and the discrete logs of certified bases.
pub trait SigningKey: Send + Sync {
    type Public: PublicKey;

    fn public_key(&self) -> &Self::Public;

    fn signer_private(&self) -> &SignerPrivateKey;

    /// `log_S` of the certified base with this id.
    fn base_dlog(&self, id: BaseId) -> Option<&BigUint>;
}

impl SigningKey for SignerKeyPair {
    type Public = SignerPublicKey;

    fn public_key(&self) -> &SignerPublicKey {
        &self.public
    }

    fn signer_private(&self) -> &SignerPrivateKey {
        &self.private
    }

    fn base_dlog(&self, _id: BaseId) -> Option<&BigUint> {
        None
    }
}

impl SigningKey for ExtendedKeyPair {
    type Public = ExtendedPublicKey;

    fn public_key(&self) -> &ExtendedPublicKey {
        &self.public
    }

    fn signer_private(&self) -> &SignerPrivateKey {
        &self.private.base
    }

    fn base_dlog(&self, id: BaseId) -> Option<&BigUint> {
        let list = match id.kind {
            BaseKind::Vertex => &self.private.vertex_dlogs,
            BaseKind::Edge => &self.private.edge_dlogs,
        };
        (id.index as usize).checked_sub(1).and_then(|i| list.get(i))
    }
}

fn s_power(group_pq: &QrGroupPq, s: &GroupElement, x: &BigUint) -> Result<GroupElement> {
    Ok(group_pq.pow(s, &BigInt::from(x.clone()))?)
}

pub fn keygen<R: RngCore + CryptoRng + ?Sized>(params: KeyGenParams, rng: &mut R) -> Result<SignerKeyPair> {
    params.validate()?;
    let modulus = ntheory::generate_special_rsa_modulus(u64::from(params.l_n), rng)?;
    let group_pq = QrGroupPq::new(modulus)?;
    let s = group_pq.qr_generator(rng);
    let x_z = group_pq.random_exponent(rng);
    let x_0 = group_pq.random_exponent(rng);
    let z = s_power(&group_pq, &s, &x_z)?;
    let r_0 = s_power(&group_pq, &s, &x_0)?;
    let public = SignerPublicKey { params, group: Arc::clone(group_pq.public_group()), s, z, r_0 };
    Ok(SignerKeyPair { public, private: SignerPrivateKey { group_pq, x_z, x_0 } })
}

/// Adds `l_V` vertex and `l_E` edge bases, each `S^x` for a fresh `x`.
pub fn extend<R: RngCore + CryptoRng + ?Sized>(
    kp: &SignerKeyPair,
    graph_params: GraphParams,
    encoding_id: &str,
    rng: &mut R,
) -> Result<ExtendedKeyPair> {
    graph_params.validate()?;
    let group_pq = &kp.private.group_pq;
    let mut draw = |count: u32| -> Result<(Vec<GroupElement>, Vec<BigUint>)> {
        let dlogs: Vec<BigUint> = (0..count).map(|_| group_pq.random_exponent(rng)).collect();
        let bases = dlogs.iter().map(|x| s_power(group_pq, &kp.public.s, x)).collect::<Result<_>>()?;
        Ok((bases, dlogs))
    };
    let (vertex_bases, vertex_dlogs) = draw(graph_params.max_vertices)?;
    let (edge_bases, edge_dlogs) = draw(graph_params.max_edges)?;
    Ok(ExtendedKeyPair {
        public: ExtendedPublicKey {
            base: kp.public.clone(),
            vertex_bases,
            edge_bases,
            encoding_id: encoding_id.to_string(),
            graph_params,
        },
        private: ExtendedPrivateKey { base: kp.private.clone(), vertex_dlogs, edge_dlogs },
    })
}

/// Non-interactive proof of knowledge of `log_S` for `Z`, `R_0` and every certified base.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KeyCorrectnessProof {
    pub challenge: BigUint,
    pub responses: std::collections::BTreeMap<Urn, BigInt>,
}

impl KeyCorrectnessProof {
    pub fn to_json(&self) -> String {
        let responses: std::collections::BTreeMap<String, String> =
            self.responses.iter().map(|(k, v)| (k.to_string(), hex::int_to_hex(v))).collect();
        canonical_json(&serde_json::json!({
            "challenge": hex::uint_to_hex(&self.challenge),
            "responses": responses,
        }))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct Doc {
            #[serde(with = "serde_uint")]
            challenge: BigUint,
            responses: std::collections::BTreeMap<String, String>,
        }
        let doc: Doc = serde_json::from_str(text).map_err(|e| KeyError::Malformed(e.to_string()))?;
        let mut responses = std::collections::BTreeMap::new();
        for (k, v) in doc.responses {
            let urn: Urn = k.parse().map_err(|e: zkp::ZkpError| KeyError::Malformed(e.to_string()))?;
            let value = hex::int_from_hex(&v).ok_or_else(|| KeyError::Malformed(format!("bad integer {v:?}")))?;
            responses.insert(urn, value);
        }
        Ok(Self { challenge: doc.challenge, responses })
    }
}

const KEY_PROOF_NONCE: u32 = 0;

fn key_proof_statements<P: PublicKey>(pk: &P) -> Result<Vec<(Statement, Urn)>> {
    let signer = pk.signer_key();
    let bits = signer.params.l_n;
    let entry = |index: String, target: &GroupElement| -> Result<(Statement, Urn)> {
        let witness = Urn::new("signer", "keyproof", "x", Some(&index))?;
        let statement = Statement::new(target.clone(), vec![Term::new(signer.s.clone(), witness.clone(), bits)]);
        Ok((statement, witness))
    };
    let mut out = vec![entry("z".into(), &signer.z)?, entry("r0".into(), &signer.r_0)?];
    for id in pk.base_ids() {
        let base = pk.certified_base(id).expect("listed id is certified");
        out.push(entry(id.to_string(), base)?);
    }
    Ok(out)
}

pub fn prove_key_correctness<K: SigningKey, R: RngCore + CryptoRng + ?Sized>(
    key: &K,
    rng: &mut R,
) -> Result<KeyCorrectnessProof> {
    let pk = key.public_key();
    let private = key.signer_private();
    let statements = key_proof_statements(pk)?;
    let mut witnesses = std::collections::BTreeMap::new();
    for (i, (_, urn)) in statements.iter().enumerate() {
        let x = match i {
            0 => private.x_z.clone(),
            1 => private.x_0.clone(),
            _ => key.base_dlog(pk.base_ids()[i - 2]).expect("dlog for certified base").clone(),
        };
        witnesses.insert(urn.clone(), BigInt::from(x));
    }
    let statements: Vec<Statement> = statements.into_iter().map(|(s, _)| s).collect();
    let mut store = zkp::ProofStore::new();
    let proof = zkp::prove_joint(
        &statements,
        &witnesses,
        &pk.challenge_context(),
        &BigUint::from(KEY_PROOF_NONCE),
        pk.params(),
        &mut store,
        rng,
    )?;
    Ok(KeyCorrectnessProof { challenge: proof.challenge, responses: proof.responses })
}

/// Malformed or mismatched proofs are rejected, never reported as errors.
pub fn verify_key_correctness<P: PublicKey>(pk: &P, proof: &KeyCorrectnessProof) -> bool {
    let Ok(statements) = key_proof_statements(pk) else {
        return false;
    };
    let statements: Vec<Statement> = statements.into_iter().map(|(s, _)| s).collect();
    let joint = JointProof { challenge: proof.challenge.clone(), responses: proof.responses.clone() };
    zkp::verify_joint(&statements, &joint, &pk.challenge_context(), &BigUint::from(KEY_PROOF_NONCE), pk.params())
}

#[derive(Serialize, Deserialize)]
struct SignerPublicDoc {
    params: KeyGenParams,
    #[serde(with = "serde_uint")]
    n: BigUint,
    #[serde(with = "serde_uint")]
    s: BigUint,
    #[serde(with = "serde_uint")]
    z: BigUint,
    #[serde(with = "serde_uint")]
    r_0: BigUint,
}

#[derive(Serialize, Deserialize)]
struct ExtendedPublicDoc {
    base: SignerPublicDoc,
    #[serde(with = "serde_uint_vec")]
    vertex_bases: Vec<BigUint>,
    #[serde(with = "serde_uint_vec")]
    edge_bases: Vec<BigUint>,
    encoding_id: String,
    graph_params: GraphParams,
}

#[derive(Serialize, Deserialize)]
struct PrivateDoc {
    #[serde(with = "serde_uint")]
    p: BigUint,
    #[serde(with = "serde_uint")]
    q: BigUint,
    #[serde(with = "serde_uint")]
    x_z: BigUint,
    #[serde(with = "serde_uint")]
    x_0: BigUint,
    #[serde(with = "serde_uint_vec", default)]
    vertex_dlogs: Vec<BigUint>,
    #[serde(with = "serde_uint_vec", default)]
    edge_dlogs: Vec<BigUint>,
}

#[derive(Serialize, Deserialize)]
struct SignerKeyPairDoc {
    public: SignerPublicDoc,
    private: PrivateDoc,
}

#[derive(Serialize, Deserialize)]
struct ExtendedKeyPairDoc {
    public: ExtendedPublicDoc,
    private: PrivateDoc,
}

fn write_private_file(path: &Path, contents: &str) -> Result<()> {
    use std::io::Write;
    let mut options = std::fs::OpenOptions::new();
    options.write(true).create(true).truncate(true);
    #[cfg(unix)]
    {
        use std::os::unix::fs::OpenOptionsExt;
        options.mode(0o600);
    }
    let mut file = options.open(path)?;
    #[cfg(unix)]
    {
        use std::os::unix::fs::PermissionsExt;
        file.set_permissions(std::fs::Permissions::from_mode(0o600))?;
    }
    file.write_all(contents.as_bytes())?;
    Ok(())
}

fn private_doc(private: &SignerPrivateKey, vertex_dlogs: &[BigUint], edge_dlogs: &[BigUint]) -> PrivateDoc {
    let modulus = private.group_pq.modulus();
    PrivateDoc {
        p: modulus.p().value().clone(),
        q: modulus.q().value().clone(),
        x_z: private.x_z.clone(),
        x_0: private.x_0.clone(),
        vertex_dlogs: vertex_dlogs.to_vec(),
        edge_dlogs: edge_dlogs.to_vec(),
    }
}

/// Rebuilds the private key from a document and checks it against `public`.
fn private_from_doc(public: &SignerPublicKey, doc: &PrivateDoc) -> Result<SignerPrivateKey> {
    let modulus = SpecialRsaModulus::from_safe_primes(SafePrime::new(doc.p.clone())?, SafePrime::new(doc.q.clone())?)?;
    if modulus.n() != public.n() {
        return Err(KeyError::Inconsistent("factors do not match the public modulus"));
    }
    let group_pq = QrGroupPq::new(modulus)?;
    if s_power(&group_pq, &public.s, &doc.x_z)? != public.z || s_power(&group_pq, &public.s, &doc.x_0)? != public.r_0 {
        return Err(KeyError::Inconsistent("discrete logs do not match Z and R_0"));
    }
    Ok(SignerPrivateKey { group_pq, x_z: doc.x_z.clone(), x_0: doc.x_0.clone() })
}

fn check_dlogs(group_pq: &QrGroupPq, s: &GroupElement, bases: &[GroupElement], dlogs: &[BigUint]) -> Result<()> {
    if bases.len() != dlogs.len() {
        return Err(KeyError::Inconsistent("discrete log count differs from base count"));
    }
    for (base, x) in bases.iter().zip(dlogs) {
        if s_power(group_pq, s, x)? != *base {
            return Err(KeyError::Inconsistent("base discrete log mismatch"));
        }
    }
    Ok(())
}

impl SignerKeyPair {
    /// Writes public and private parts to one file readable only by its owner.
    pub fn export_private_key(&self, path: &Path) -> Result<()> {
        let doc = SignerKeyPairDoc { public: self.public.doc(), private: private_doc(&self.private, &[], &[]) };
        write_private_file(path, &canonical_json(&doc))
    }

    pub fn import_private_key(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let doc: SignerKeyPairDoc = serde_json::from_str(&text).map_err(|e| KeyError::Malformed(e.to_string()))?;
        let public = SignerPublicKey::from_doc(doc.public)?;
        let private = private_from_doc(&public, &doc.private)?;
        Ok(Self { public, private })
    }
}

impl ExtendedKeyPair {
    pub fn export_private_key(&self, path: &Path) -> Result<()> {
        let doc = ExtendedKeyPairDoc {
            public: self.public.doc(),
            private: private_doc(&self.private.base, &self.private.vertex_dlogs, &self.private.edge_dlogs),
        };
        write_private_file(path, &canonical_json(&doc))
    }

    pub fn import_private_key(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let doc: ExtendedKeyPairDoc = serde_json::from_str(&text).map_err(|e| KeyError::Malformed(e.to_string()))?;
        let public = ExtendedPublicKey::from_doc(doc.public)?;
        let base = private_from_doc(&public.base, &doc.private)?;
        check_dlogs(&base.group_pq, &public.base.s, &public.vertex_bases, &doc.private.vertex_dlogs)?;
        check_dlogs(&base.group_pq, &public.base.s, &public.edge_bases, &doc.private.edge_dlogs)?;
        let private = ExtendedPrivateKey {
            base,
            vertex_dlogs: doc.private.vertex_dlogs,
            edge_dlogs: doc.private.edge_dlogs,
        };
        Ok(Self { public, private })
    }

    /// Forgets the certified bases.
    pub fn signer_key_pair(&self) -> SignerKeyPair {
        SignerKeyPair { public: self.public.base.clone(), private: self.private.base.clone() }
    }
}
