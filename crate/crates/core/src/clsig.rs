//! CL signatures on committed graphs.
//!
//! The recipient commits to its hidden message as `U = R_0^{m_0} S^{v'}`
//! ([`commit_message`]). The signer answers with a pre-signature `(A, e, v'')`
//! where `A^e = Z (U S^{v''} prod R_i^{m_i})^{-1}` ([`sign_partial`]), and the
//! recipient completes it to `(A, e, v' + v'')` ([`complete_signature`]).
//! The signer never sees `m_0`.

use std::collections::BTreeMap;
use std::sync::Arc;

use num_bigint::{BigInt, BigUint};
use num_integer::Integer;
use num_traits::One;
use rand::{CryptoRng, RngCore};
use thiserror::Error;

use crate::commitments::IntegerCommitment;
use crate::gencoding::{self, BaseCollection, EncodingError, GraphRepresentation};
use crate::groups::{self, GroupElement, GroupError, QrGroupN};
use crate::hex::{self, canonical_json};
use crate::keys::{BaseId, PublicKey, SigningKey};
use crate::ntheory::{self, NumberTheoryError, PRIMALITY_ROUNDS};
use crate::parallel::Strategy;
use crate::zkp::{Statement, Term, Urn};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ClsigError {
    #[error("commitment U is not in QR_N")]
    InvalidCommitment,
    #[error("base {0} does not match the certified base")]
    BaseMismatch(BaseId),
    #[error("exponent for {0} exceeds l_m bits")]
    ExponentTooLarge(String),
    #[error("graph input needs an extended key")]
    NotExtended,
    #[error("malformed signature: {0}")]
    Malformed(String),
    #[error(transparent)]
    Group(#[from] GroupError),
    #[error(transparent)]
    NumberTheory(#[from] NumberTheoryError),
    #[error(transparent)]
    Encoding(#[from] EncodingError),
}

pub type Result<T> = std::result::Result<T, ClsigError>;

/// Signer's answer before the recipient adds its blinding `v'`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PreSignature {
    pub a: GroupElement,
    pub e: BigUint,
    pub v_pp: BigUint,
}

/// `(A, e, v)` with `Z = A^e R_0^{m_0} prod R_i^{m_i} S^v`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GraphSignature {
    pub a: GroupElement,
    pub e: BigUint,
    pub v: BigUint,
}

impl GraphSignature {
    pub fn to_json(&self) -> String {
        canonical_json(&signature_doc(self))
    }

    pub fn from_json(text: &str, group: &Arc<QrGroupN>) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text).map_err(|e| ClsigError::Malformed(e.to_string()))?;
        signature_from_doc(&value, group)
    }
}

fn signature_doc(sig: &GraphSignature) -> serde_json::Value {
    serde_json::json!({
        "a": hex::uint_to_hex(sig.a.value()),
        "e": hex::uint_to_hex(&sig.e),
        "v": hex::uint_to_hex(&sig.v),
    })
}

fn hex_field(value: &serde_json::Value, name: &str) -> Result<BigUint> {
    value
        .get(name)
        .and_then(|v| v.as_str())
        .and_then(hex::uint_from_hex)
        .ok_or_else(|| ClsigError::Malformed(format!("missing or invalid field {name:?}")))
}

fn signature_from_doc(value: &serde_json::Value, group: &Arc<QrGroupN>) -> Result<GraphSignature> {
    Ok(GraphSignature {
        a: group.element(hex_field(value, "a")?)?,
        e: hex_field(value, "e")?,
        v: hex_field(value, "v")?,
    })
}

/// Everything the holder keeps: the signature, `m_0` and the signed bases.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Credential {
    pub signature: GraphSignature,
    pub m_0: BigUint,
    pub bases: BaseCollection,
}

impl Credential {
    /// Holder-side file format. Contains `m_0`; never sent over a channel.
    pub fn to_json(&self) -> String {
        let bases: BTreeMap<String, String> =
            self.bases.exponents().iter().map(|(id, e)| (id.to_string(), hex::uint_to_hex(e))).collect();
        canonical_json(&serde_json::json!({
            "signature": signature_doc(&self.signature),
            "m_0": hex::uint_to_hex(&self.m_0),
            "bases": bases,
        }))
    }

    pub fn from_json<P: PublicKey + ?Sized>(text: &str, pk: &P) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text).map_err(|e| ClsigError::Malformed(e.to_string()))?;
        let signature = signature_from_doc(
            value.get("signature").ok_or_else(|| ClsigError::Malformed("missing signature".into()))?,
            pk.group(),
        )?;
        let m_0 = hex_field(&value, "m_0")?;
        let mut exponents = BTreeMap::new();
        let entries = value
            .get("bases")
            .and_then(|b| b.as_object())
            .ok_or_else(|| ClsigError::Malformed("missing bases".into()))?;
        for (k, v) in entries {
            let id: BaseId = k.parse().map_err(|_| ClsigError::Malformed(format!("bad base id {k:?}")))?;
            let e = v
                .as_str()
                .and_then(hex::uint_from_hex)
                .ok_or_else(|| ClsigError::Malformed(format!("bad exponent for {k}")))?;
            exponents.insert(id, e);
        }
        let bases = BaseCollection::from_exponents(pk, &exponents)?;
        Ok(Self { signature, m_0, bases })
    }
}

fn check_bases<P: PublicKey + ?Sized>(pk: &P, bases: &BaseCollection) -> Result<()> {
    let l_m = u64::from(pk.params().l_m);
    for (&id, entry) in bases.entries() {
        if pk.certified_base(id) != Some(&entry.base) {
            return Err(ClsigError::BaseMismatch(id));
        }
        if entry.exponent.bits() > l_m {
            return Err(ClsigError::ExponentTooLarge(id.to_string()));
        }
    }
    Ok(())
}

fn group_terms(bases: &BaseCollection) -> Vec<(GroupElement, BigInt)> {
    bases.entries().values().map(|e| (e.base.clone(), BigInt::from(e.exponent.clone()))).collect()
}

fn product(group: &Arc<QrGroupN>, terms: &[(GroupElement, BigInt)]) -> Result<GroupElement> {
    let refs: Vec<(&GroupElement, &BigInt)> = terms.iter().map(|(b, e)| (b, e)).collect();
    Ok(groups::multi_pow(group, &refs, Strategy::Sequential)?)
}

/// `Q = Z (U S^{v''} prod R_i^{m_i})^{-1}`, by plain multi-exponentiation.
fn q_slow<K: SigningKey>(key: &K, u: &GroupElement, v_pp: &BigUint, bases: &BaseCollection) -> Result<GroupElement> {
    let signer = key.public_key().signer_key();
    let mut terms = group_terms(bases);
    terms.push((signer.s().clone(), BigInt::from(v_pp.clone())));
    terms.push((u.clone(), BigInt::one()));
    let denominator = product(signer.group(), &terms)?;
    Ok(signer.z().mul(&denominator.inverse()?)?)
}

/// Same value through the discrete logs: `Q = U^{-1} S^{x_Z - v'' - sum x_i m_i mod p'q'}`.
fn q_fast<K: SigningKey>(key: &K, u: &GroupElement, v_pp: &BigUint, bases: &BaseCollection) -> Option<Result<GroupElement>> {
    let private = key.signer_private();
    let order = BigInt::from(private.group_pq().order().clone());
    let mut exponent = BigInt::from(private.x_z().clone()) - BigInt::from(v_pp.clone());
    for (&id, entry) in bases.entries() {
        exponent -= BigInt::from(key.base_dlog(id)?.clone()) * BigInt::from(entry.exponent.clone());
    }
    let exponent = exponent.mod_floor(&order);
    let signer = key.public_key().signer_key();
    Some((|| {
        let s_part = private.group_pq().pow(signer.s(), &exponent)?;
        Ok(u.inverse()?.mul(&s_part)?)
    })())
}

/// Signer step of issuing. `u` must already be vouched for by the
/// recipient's proof of representation.
pub fn sign_partial<K: SigningKey, R: RngCore + CryptoRng + ?Sized>(
    key: &K,
    u: &GroupElement,
    bases: &BaseCollection,
    rng: &mut R,
) -> Result<PreSignature> {
    let pk = key.public_key();
    let params = pk.params();
    let private = key.signer_private();
    if u.group().modulus() != pk.group().modulus() || !private.group_pq().is_element(u.value()) {
        return Err(ClsigError::InvalidCommitment);
    }
    check_bases(pk, bases)?;

    let v_pp = ntheory::random_bits(u64::from(params.l_v - 1), rng) | (BigUint::one() << (params.l_v - 1));
    let q = match q_fast(key, u, &v_pp, bases) {
        Some(q) => q?,
        None => q_slow(key, u, &v_pp, bases)?,
    };
    let (lo, hi) = params.e_interval();
    let order = private.group_pq().order();
    loop {
        let e = ntheory::random_prime_in_range(&lo, &hi, rng)?;
        let Some(e_inv) = ntheory::mod_inverse(&e, order) else {
            continue;
        };
        let a = private.group_pq().pow(&q, &BigInt::from(e_inv))?;
        return Ok(PreSignature { a, e, v_pp });
    }
}

/// `v = v' + v''`.
pub fn complete_signature(pre: &PreSignature, v_prime: &BigUint) -> GraphSignature {
    GraphSignature { a: pre.a.clone(), e: pre.e.clone(), v: &pre.v_pp + v_prime }
}

fn e_is_valid<P: PublicKey + ?Sized>(pk: &P, e: &BigUint) -> bool {
    let (lo, hi) = pk.params().e_interval();
    (&lo..=&hi).contains(&e) && ntheory::is_probable_prime(e, PRIMALITY_ROUNDS)
}

/// Recipient check of a pre-signature: `e` prime in range and
/// `A^e U S^{v''} prod R_i^{m_i} = Z`.
pub fn check_pre_signature<P: PublicKey + ?Sized>(
    pk: &P,
    pre: &PreSignature,
    u: &GroupElement,
    bases: &BaseCollection,
) -> bool {
    if !e_is_valid(pk, &pre.e) || check_bases(pk, bases).is_err() {
        return false;
    }
    let signer = pk.signer_key();
    let mut terms = group_terms(bases);
    terms.push((pre.a.clone(), BigInt::from(pre.e.clone())));
    terms.push((signer.s().clone(), BigInt::from(pre.v_pp.clone())));
    terms.push((u.clone(), BigInt::one()));
    product(signer.group(), &terms).is_ok_and(|lhs| &lhs == signer.z())
}

/// `Z = A^e R_0^{m_0} prod R_i^{m_i} S^v` with `e` a prime in the interval
/// and every base equal to the certified base of the same id.
pub fn verify_signature<P: PublicKey + ?Sized>(pk: &P, sig: &GraphSignature, m_0: &BigUint, bases: &BaseCollection) -> bool {
    if !e_is_valid(pk, &sig.e) || check_bases(pk, bases).is_err() || m_0.bits() > u64::from(pk.params().l_m) {
        return false;
    }
    if sig.a.group().modulus() != pk.group().modulus() {
        return false;
    }
    let signer = pk.signer_key();
    let mut terms = group_terms(bases);
    terms.push((sig.a.clone(), BigInt::from(sig.e.clone())));
    terms.push((signer.r_0().clone(), BigInt::from(m_0.clone())));
    terms.push((signer.s().clone(), BigInt::from(sig.v.clone())));
    product(signer.group(), &terms).is_ok_and(|lhs| &lhs == signer.z())
}

pub fn verify_credential<P: PublicKey + ?Sized>(pk: &P, credential: &Credential) -> bool {
    verify_signature(pk, &credential.signature, &credential.m_0, &credential.bases)
}

/// Recipient commitment `U = R_0^{m_0} S^{v'}` with `v'` of `l_n + l_statzk` bits.
pub fn commit_message<P: PublicKey + ?Sized, R: RngCore + CryptoRng + ?Sized>(
    pk: &P,
    m_0: &BigUint,
    rng: &mut R,
) -> Result<IntegerCommitment> {
    let signer = pk.signer_key();
    Ok(IntegerCommitment::commit(
        std::slice::from_ref(signer.r_0()),
        std::slice::from_ref(m_0),
        signer.s(),
        pk.params().commitment_randomness_bits(),
        rng,
    )?)
}

pub fn issuing_m0_urn() -> Urn {
    Urn::new("recipient", "issuing", "m", Some("r0")).expect("static URN")
}

pub fn issuing_v_urn() -> Urn {
    Urn::new("recipient", "issuing", "v", None).expect("static URN")
}

/// Statement proven by the recipient about `U`.
pub fn issuing_statement<P: PublicKey + ?Sized>(pk: &P, u: &GroupElement) -> Statement {
    let signer = pk.signer_key();
    let params = pk.params();
    Statement::new(
        u.clone(),
        vec![
            Term::new(signer.r_0().clone(), issuing_m0_urn(), params.l_m),
            Term::new(signer.s().clone(), issuing_v_urn(), params.commitment_randomness_bits()),
        ],
    )
}

pub fn random_message<P: PublicKey + ?Sized, R: RngCore + ?Sized>(pk: &P, rng: &mut R) -> BigUint {
    ntheory::random_bits(u64::from(pk.params().l_m), rng)
}

/// What the signing oracle signs.
#[derive(Debug, Clone)]
pub enum OracleInput<'a> {
    /// Encoded graph; bases are assigned at random on the extended key.
    Graph(&'a GraphRepresentation),
    /// `m_0` alone, without any graph encoding.
    Message(BigUint),
    /// A ready base collection, signed verbatim.
    Bases(BaseCollection),
}

/// Plays both issuing parties locally and returns the credential, including
/// the openings.
pub fn signing_oracle<K: SigningKey, R: RngCore + CryptoRng + ?Sized>(
    key: &K,
    input: OracleInput<'_>,
    rng: &mut R,
) -> Result<Credential> {
    let pk = key.public_key();
    let (m_0, bases) = match input {
        OracleInput::Graph(rep) => {
            let epk = pk.extended().ok_or(ClsigError::NotExtended)?;
            let bases = gencoding::encode_bases(rep, epk, rng)?;
            (random_message(pk, rng), bases)
        }
        OracleInput::Message(m_0) => (m_0, BaseCollection::new()),
        OracleInput::Bases(bases) => (random_message(pk, rng), bases),
    };
    if m_0.bits() > u64::from(pk.params().l_m) {
        return Err(ClsigError::ExponentTooLarge("m_0".into()));
    }
    let u = commit_message(pk, &m_0, rng)?;
    let pre = sign_partial(key, u.value(), &bases, rng)?;
    let signature = complete_signature(&pre, u.randomness());
    Ok(Credential { signature, m_0, bases })
}
