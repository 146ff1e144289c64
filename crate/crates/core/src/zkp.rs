//! Sigma-protocol machinery: URNs, the session proof store, the Fiat-Shamir
//! challenge, AND-composed representation proofs, and on top of them the
//! possession, commitment and pair-wise difference components.
//!
//! Every component is phrased as a [`Statement`] `target = prod base_j^{w_j}`
//! whose witnesses are named by URN. Statements sharing a witness URN share
//! its tilde value and its response, which is how the vertex commitments are
//! bound to the exponents inside the signature. A proving session hashes all
//! statements and all t-values into one challenge.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use num_bigint::{BigInt, BigUint};
use num_traits::One;
use rand::{CryptoRng, RngCore};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::clsig::{self, Credential};
use crate::commitments::IntegerCommitment;
use crate::gencoding;
use crate::groups::{self, GroupElement, GroupError, QrGroupN};
use crate::hex::{self, canonical_json};
use crate::keys::{BaseId, BaseKind, KeyGenParams, PublicKey};
use crate::ntheory;
use crate::parallel::{self, Strategy};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ZkpError {
    #[error("invalid URN {0:?}")]
    InvalidUrn(String),
    #[error("URN already stored: {0}")]
    DuplicateUrn(Urn),
    #[error("URN not in store: {0}")]
    MissingUrn(Urn),
    #[error("stored value under {0} has the wrong kind")]
    WrongValueKind(Urn),
    #[error("no witness supplied for {0}")]
    MissingWitness(Urn),
    #[error("witness {0} is used with different length bounds")]
    InconsistentWitnessBits(Urn),
    #[error("witness {0} exceeds its length bound")]
    WitnessOutOfRange(Urn),
    #[error("signature does not verify; refusing to prove possession")]
    UnverifiableSignature,
    #[error("committed values of {0} and {1} are not coprime")]
    EqualRepresentatives(BaseId, BaseId),
    #[error("base {0} is not certified by the key")]
    UnknownBase(BaseId),
    #[error("exponent of {0} has no vertex representative")]
    NoRepresentative(BaseId),
    #[error("unsupported predicate {0:?}")]
    UnsupportedPredicate(String),
    #[error("malformed proof: {0}")]
    Malformed(String),
    #[error(transparent)]
    Group(#[from] GroupError),
}

pub type Result<T> = std::result::Result<T, ZkpError>;

/// `urn:gs:{party}:{proof}:{element}[:{index}]`, components in `[a-z0-9_.-]+`.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Urn {
    party: String,
    proof: String,
    element: String,
    index: Option<String>,
}

fn valid_component(s: &str) -> bool {
    !s.is_empty() && s.bytes().all(|b| b.is_ascii_lowercase() || b.is_ascii_digit() || b"_.-".contains(&b))
}

impl Urn {
    pub fn new(party: &str, proof: &str, element: &str, index: Option<&str>) -> Result<Self> {
        let ok = [party, proof, element].into_iter().chain(index).all(valid_component);
        if !ok {
            let index = index.map(|i| format!(":{i}")).unwrap_or_default();
            return Err(ZkpError::InvalidUrn(format!("urn:gs:{party}:{proof}:{element}{index}")));
        }
        Ok(Self {
            party: party.to_string(),
            proof: proof.to_string(),
            element: element.to_string(),
            index: index.map(str::to_string),
        })
    }

    pub fn party(&self) -> &str {
        &self.party
    }

    pub fn proof(&self) -> &str {
        &self.proof
    }

    pub fn element(&self) -> &str {
        &self.element
    }

    pub fn index(&self) -> Option<&str> {
        self.index.as_deref()
    }

    fn with_suffix(&self, suffix: &str) -> Urn {
        Urn { element: format!("{}_{suffix}", self.element), ..self.clone() }
    }

    /// Key of the response for this witness.
    pub fn hat(&self) -> Urn {
        self.with_suffix("hat")
    }

    /// Key of the prover's randomness for this witness.
    pub fn tilde(&self) -> Urn {
        self.with_suffix("tilde")
    }
}

impl fmt::Display for Urn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "urn:gs:{}:{}:{}", self.party, self.proof, self.element)?;
        if let Some(index) = &self.index {
            write!(f, ":{index}")?;
        }
        Ok(())
    }
}

impl fmt::Debug for Urn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

impl FromStr for Urn {
    type Err = ZkpError;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        match parts.as_slice() {
            ["urn", "gs", party, proof, element] => Urn::new(party, proof, element, None),
            ["urn", "gs", party, proof, element, index] => Urn::new(party, proof, element, Some(index)),
            _ => Err(ZkpError::InvalidUrn(s.to_string())),
        }
    }
}

#[derive(Clone, PartialEq, Eq)]
pub enum StoredValue {
    Integer(BigInt),
    Element(GroupElement),
}

/// Session-scoped map from URN to proof values. Entries are write-once.
#[derive(Default)]
pub struct ProofStore {
    entries: BTreeMap<Urn, StoredValue>,
}

impl fmt::Debug for ProofStore {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.entries.keys()).finish()
    }
}

impl ProofStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn put(&mut self, urn: Urn, value: StoredValue) -> Result<()> {
        if self.entries.contains_key(&urn) {
            return Err(ZkpError::DuplicateUrn(urn));
        }
        self.entries.insert(urn, value);
        Ok(())
    }

    pub fn get(&self, urn: &Urn) -> Result<&StoredValue> {
        self.entries.get(urn).ok_or_else(|| ZkpError::MissingUrn(urn.clone()))
    }

    pub fn get_integer(&self, urn: &Urn) -> Result<&BigInt> {
        match self.get(urn)? {
            StoredValue::Integer(v) => Ok(v),
            StoredValue::Element(_) => Err(ZkpError::WrongValueKind(urn.clone())),
        }
    }

    pub fn get_element(&self, urn: &Urn) -> Result<&GroupElement> {
        match self.get(urn)? {
            StoredValue::Element(v) => Ok(v),
            StoredValue::Integer(_) => Err(ZkpError::WrongValueKind(urn.clone())),
        }
    }

    pub fn contains(&self, urn: &Urn) -> bool {
        self.entries.contains_key(urn)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn urns(&self) -> impl Iterator<Item = &Urn> {
        self.entries.keys()
    }
}

fn encode_integer(out: &mut Vec<u8>, n: &BigUint) {
    let bytes = n.to_bytes_be();
    out.extend_from_slice(&(bytes.len() as u32).to_be_bytes());
    out.extend_from_slice(&bytes);
}

fn encode_list<'a>(out: &mut Vec<u8>, items: impl ExactSizeIterator<Item = &'a BigUint>) {
    out.extend_from_slice(&(items.len() as u32).to_be_bytes());
    for n in items {
        encode_integer(out, n);
    }
}

/// `H(context || t_values || nonce)` truncated to the leading `l_h` bits.
/// Each integer is length-prefixed and each list carries its count. Outputs
/// longer than one digest are produced by `SHA-256(i || data)` for `i = 0, 1, ...`.
pub fn fiat_shamir_challenge(context: &[BigUint], t_values: &[GroupElement], nonce: &BigUint, l_h: u32) -> BigUint {
    let mut data = Vec::new();
    encode_list(&mut data, context.iter());
    encode_list(&mut data, t_values.iter().map(GroupElement::value));
    encode_integer(&mut data, nonce);

    let blocks = (l_h as usize).div_ceil(256).max(1);
    let mut digest = Vec::with_capacity(blocks * 32);
    for i in 0..blocks as u32 {
        let mut h = Sha256::new();
        h.update(i.to_be_bytes());
        h.update(&data);
        digest.extend_from_slice(&h.finalize());
    }
    BigUint::from_bytes_be(&digest) >> (digest.len() * 8 - l_h as usize)
}

/// One factor `base^w` of a statement; `witness_bits` bounds `|w|`.
#[derive(Debug, Clone)]
pub struct Term {
    pub base: GroupElement,
    pub witness: Urn,
    pub witness_bits: u32,
}

impl Term {
    pub fn new(base: GroupElement, witness: Urn, witness_bits: u32) -> Self {
        Self { base, witness, witness_bits }
    }
}

/// `target = prod term.base^{term.witness}`.
#[derive(Debug, Clone)]
pub struct Statement {
    pub target: GroupElement,
    pub terms: Vec<Term>,
}

impl Statement {
    pub fn new(target: GroupElement, terms: Vec<Term>) -> Self {
        Self { target, terms }
    }

    fn public_values(&self, out: &mut Vec<BigUint>) {
        out.push(self.target.value().clone());
        out.push(BigUint::from(self.terms.len()));
        out.extend(self.terms.iter().map(|t| t.base.value().clone()));
    }
}

/// Challenge and responses of an AND-composed proof, responses keyed by the
/// `_hat` URN of each witness.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JointProof {
    pub challenge: BigUint,
    pub responses: BTreeMap<Urn, BigInt>,
}

fn witness_bounds(statements: &[Statement]) -> Result<BTreeMap<Urn, u32>> {
    let mut bounds = BTreeMap::new();
    for term in statements.iter().flat_map(|s| &s.terms) {
        match bounds.insert(term.witness.clone(), term.witness_bits) {
            Some(previous) if previous != term.witness_bits => {
                return Err(ZkpError::InconsistentWitnessBits(term.witness.clone()))
            }
            _ => {}
        }
    }
    Ok(bounds)
}

fn full_context(context: &[BigUint], statements: &[Statement]) -> Vec<BigUint> {
    let mut out = context.to_vec();
    for statement in statements {
        statement.public_values(&mut out);
    }
    out
}

fn multi_pow_terms(group: &Arc<QrGroupN>, terms: &[(GroupElement, BigInt)]) -> Result<GroupElement> {
    let refs: Vec<(&GroupElement, &BigInt)> = terms.iter().map(|(b, e)| (b, e)).collect();
    Ok(groups::multi_pow(group, &refs, Strategy::Sequential)?)
}

/// Proves every statement at once with one Fiat-Shamir challenge. Tilde
/// values already in `store` (under `witness.tilde()`) are reused; missing
/// ones are sampled and stored. Responses are stored under their hat URNs.
pub fn prove_joint<R: RngCore + CryptoRng + ?Sized>(
    statements: &[Statement],
    witnesses: &BTreeMap<Urn, BigInt>,
    context: &[BigUint],
    nonce: &BigUint,
    params: &KeyGenParams,
    store: &mut ProofStore,
    rng: &mut R,
) -> Result<JointProof> {
    let bounds = witness_bounds(statements)?;
    let mut tildes = BTreeMap::new();
    for (urn, &bits) in &bounds {
        let w = witnesses.get(urn).ok_or_else(|| ZkpError::MissingWitness(urn.clone()))?;
        if w.magnitude().bits() > u64::from(bits) {
            return Err(ZkpError::WitnessOutOfRange(urn.clone()));
        }
        let tilde_urn = urn.tilde();
        let tilde = if store.contains(&tilde_urn) {
            store.get_integer(&tilde_urn)?.clone()
        } else {
            let t = BigInt::from(ntheory::random_bits(u64::from(params.tilde_bits(bits)), rng));
            store.put(tilde_urn, StoredValue::Integer(t.clone()))?;
            t
        };
        tildes.insert(urn.clone(), tilde);
    }

    let t_values = statements
        .iter()
        .map(|s| {
            let terms: Vec<_> = s.terms.iter().map(|t| (t.base.clone(), tildes[&t.witness].clone())).collect();
            multi_pow_terms(s.target.group(), &terms)
        })
        .collect::<Result<Vec<_>>>()?;
    let challenge = fiat_shamir_challenge(&full_context(context, statements), &t_values, nonce, params.l_h);

    let c = BigInt::from(challenge.clone());
    let mut responses = BTreeMap::new();
    for (urn, tilde) in tildes {
        let hat = tilde + &c * &witnesses[&urn];
        store.put(urn.hat(), StoredValue::Integer(hat.clone()))?;
        responses.insert(urn.hat(), hat);
    }
    Ok(JointProof { challenge, responses })
}

/// Accepts iff the response keys are exactly the hat URNs of the statements'
/// witnesses, every response is within its length bound, and the recomputed
/// challenge matches.
pub fn verify_joint(
    statements: &[Statement],
    proof: &JointProof,
    context: &[BigUint],
    nonce: &BigUint,
    params: &KeyGenParams,
) -> bool {
    verify_joint_with(statements, proof, context, nonce, params, Strategy::default())
}

pub fn verify_joint_with(
    statements: &[Statement],
    proof: &JointProof,
    context: &[BigUint],
    nonce: &BigUint,
    params: &KeyGenParams,
    strategy: Strategy,
) -> bool {
    let Ok(bounds) = witness_bounds(statements) else {
        return false;
    };
    if proof.challenge.bits() > u64::from(params.l_h) || proof.responses.len() != bounds.len() {
        return false;
    }
    for (urn, &bits) in &bounds {
        match proof.responses.get(&urn.hat()) {
            Some(hat) if hat.magnitude().bits() <= u64::from(params.response_bound_bits(bits)) => {}
            _ => return false,
        }
    }
    let minus_c = -BigInt::from(proof.challenge.clone());
    let t_hats = parallel::map(strategy, statements, |s| {
        let mut terms = vec![(s.target.clone(), minus_c.clone())];
        terms.extend(s.terms.iter().map(|t| (t.base.clone(), proof.responses[&t.witness.hat()].clone())));
        multi_pow_terms(s.target.group(), &terms)
    });
    let Ok(t_hats) = t_hats.into_iter().collect::<Result<Vec<_>>>() else {
        return false;
    };
    fiat_shamir_challenge(&full_context(context, statements), &t_hats, nonce, params.l_h) == proof.challenge
}

/// Single-statement proof of `target = prod bases^{x_i}`.
pub fn prove_representation<R: RngCore + CryptoRng + ?Sized>(
    statement: &Statement,
    witnesses: &BTreeMap<Urn, BigInt>,
    context: &[BigUint],
    nonce: &BigUint,
    params: &KeyGenParams,
    rng: &mut R,
) -> Result<JointProof> {
    let mut store = ProofStore::new();
    prove_joint(std::slice::from_ref(statement), witnesses, context, nonce, params, &mut store, rng)
}

pub fn verify_representation(
    statement: &Statement,
    proof: &JointProof,
    context: &[BigUint],
    nonce: &BigUint,
    params: &KeyGenParams,
) -> bool {
    verify_joint(std::slice::from_ref(statement), proof, context, nonce, params)
}

fn prover_urn(proof: &str, element: &str, index: Option<&str>) -> Urn {
    Urn::new("prover", proof, element, index).expect("static URN components")
}

/// Witness URN of the exponent of `R_0` (index `r0`) or of a certified base.
pub fn message_urn(id: Option<BaseId>) -> Urn {
    match id {
        Some(id) => prover_urn("possession", "m", Some(&id.to_string())),
        None => prover_urn("possession", "m", Some("r0")),
    }
}

fn pair_index(i: BaseId, j: BaseId) -> String {
    format!("{i}-{j}")
}

/// `Z * A'^{-2^(l_e-1)} = A'^{e - 2^(l_e-1)} * S^{v'} * R_0^{m_0} * prod R_i^{m_i}`.
pub fn possession_statement<P: PublicKey + ?Sized>(pk: &P, a_prime: &GroupElement, ids: &[BaseId]) -> Result<Statement> {
    let signer = pk.signer_key();
    let params = pk.params();
    let offset = BigInt::one() << (params.l_e - 1);
    let target = signer.z().mul(&a_prime.pow(&-offset)?)?;
    let mut terms = vec![
        Term::new(a_prime.clone(), prover_urn("possession", "e", None), params.l_e_prime),
        Term::new(signer.s().clone(), prover_urn("possession", "v", None), params.v_prime_bits()),
        Term::new(signer.r_0().clone(), message_urn(None), params.l_m),
    ];
    for &id in ids {
        let base = pk.certified_base(id).ok_or(ZkpError::UnknownBase(id))?;
        terms.push(Term::new(base.clone(), message_urn(Some(id)), params.l_m));
    }
    Ok(Statement::new(target, terms))
}

/// `C_i = R_0^{m_i} * S^{r_i}`, sharing the witness `m_i` with the possession statement.
pub fn commitment_statement<P: PublicKey + ?Sized>(pk: &P, id: BaseId, commitment: &GroupElement) -> Statement {
    let signer = pk.signer_key();
    let params = pk.params();
    Statement::new(
        commitment.clone(),
        vec![
            Term::new(signer.r_0().clone(), message_urn(Some(id)), params.l_m),
            Term::new(
                signer.s().clone(),
                prover_urn("commitment", "r", Some(&id.to_string())),
                params.commitment_randomness_bits(),
            ),
        ],
    )
}

fn representative_urn(element: &str, id: BaseId) -> Urn {
    prover_urn("representative", element, Some(&id.to_string()))
}

/// `D_i = R_0^{e_i} * S^{s_i}` for the vertex representative `e_i`.
pub fn representative_statement<P: PublicKey + ?Sized>(pk: &P, id: BaseId, d: &GroupElement) -> Statement {
    let signer = pk.signer_key();
    let params = pk.params();
    Statement::new(
        d.clone(),
        vec![
            Term::new(signer.r_0().clone(), representative_urn("e", id), params.l_m),
            Term::new(signer.s().clone(), representative_urn("s", id), params.commitment_randomness_bits()),
        ],
    )
}

/// `C_i = D_i^{l_i} * S^{sigma_i}`: the committed exponent is a multiple of
/// the committed representative, `m_i = e_i * l_i`.
pub fn multiple_statement<P: PublicKey + ?Sized>(pk: &P, id: BaseId, c: &GroupElement, d: &GroupElement) -> Statement {
    let params = pk.params();
    Statement::new(
        c.clone(),
        vec![
            Term::new(d.clone(), representative_urn("l", id), params.l_m),
            Term::new(
                pk.signer_key().s().clone(),
                representative_urn("sigma", id),
                params.l_m + params.commitment_randomness_bits() + 1,
            ),
        ],
    )
}

/// `R_0 = C_i^a * C_j^b * S^rho`, provable only when the committed values are coprime.
pub fn pairwise_statement<P: PublicKey + ?Sized>(
    pk: &P,
    (i, c_i): (BaseId, &GroupElement),
    (j, c_j): (BaseId, &GroupElement),
) -> Statement {
    let signer = pk.signer_key();
    let params = pk.params();
    let index = pair_index(i, j);
    Statement::new(
        signer.r_0().clone(),
        vec![
            Term::new(c_i.clone(), prover_urn("pairwise", "a", Some(&index)), params.l_m),
            Term::new(c_j.clone(), prover_urn("pairwise", "b", Some(&index)), params.l_m),
            Term::new(
                signer.s().clone(),
                prover_urn("pairwise", "rho", Some(&index)),
                params.l_m + params.commitment_randomness_bits() + 1,
            ),
        ],
    )
}

/// Bezout coefficients and combined randomness for a pair of committed exponents.
fn pairwise_witnesses(
    (i, c_i): (BaseId, &IntegerCommitment),
    (j, c_j): (BaseId, &IntegerCommitment),
) -> Result<[(Urn, BigInt); 3]> {
    let m_i = BigInt::from(c_i.exponents()[0].clone());
    let m_j = BigInt::from(c_j.exponents()[0].clone());
    let g = ntheory::eea(&m_i, &m_j).map_err(|_| ZkpError::EqualRepresentatives(i, j))?;
    if !g.gcd.is_one() {
        return Err(ZkpError::EqualRepresentatives(i, j));
    }
    let rho = -(&g.bezout_s * BigInt::from(c_i.randomness().clone()) + &g.bezout_t * BigInt::from(c_j.randomness().clone()));
    let index = pair_index(i, j);
    Ok([
        (prover_urn("pairwise", "a", Some(&index)), g.bezout_s),
        (prover_urn("pairwise", "b", Some(&index)), g.bezout_t),
        (prover_urn("pairwise", "rho", Some(&index)), rho),
    ])
}

/// Standalone transcript for one pair `(C_i, C_j)`.
pub type PairwiseDifferenceProof = JointProof;

pub fn prove_pairwise_difference<P: PublicKey + ?Sized, R: RngCore + CryptoRng + ?Sized>(
    pk: &P,
    c_i: (BaseId, &IntegerCommitment),
    c_j: (BaseId, &IntegerCommitment),
    nonce: &BigUint,
    rng: &mut R,
) -> Result<PairwiseDifferenceProof> {
    let witnesses: BTreeMap<Urn, BigInt> = pairwise_witnesses(c_i, c_j)?.into_iter().collect();
    let statement = pairwise_statement(pk, (c_i.0, c_i.1.value()), (c_j.0, c_j.1.value()));
    prove_representation(&statement, &witnesses, &pk.challenge_context(), nonce, pk.params(), rng)
}

pub fn verify_pairwise_difference<P: PublicKey + ?Sized>(
    pk: &P,
    c_i: (BaseId, &GroupElement),
    c_j: (BaseId, &GroupElement),
    proof: &PairwiseDifferenceProof,
    nonce: &BigUint,
) -> bool {
    let statement = pairwise_statement(pk, c_i, c_j);
    verify_representation(&statement, proof, &pk.challenge_context(), nonce, pk.params())
}

/// Policy statement requested by a verifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Predicate {
    Possession,
    /// Possession plus distinctness of all signed vertex representatives.
    PossessionPairwise,
}

impl Predicate {
    pub fn includes_pairwise(self) -> bool {
        matches!(self, Predicate::PossessionPairwise)
    }
}

impl fmt::Display for Predicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Predicate::Possession => "possession",
            Predicate::PossessionPairwise => "possession+pairwise",
        })
    }
}

impl FromStr for Predicate {
    type Err = ZkpError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "possession" => Ok(Predicate::Possession),
            "pairwise" | "possession+pairwise" => Ok(Predicate::PossessionPairwise),
            other => Err(ZkpError::UnsupportedPredicate(other.to_string())),
        }
    }
}

/// Non-interactive proof for a predicate: randomized `A'`, the joint
/// challenge and every response by URN. Under the pair-wise predicate it also
/// carries, per signed vertex, the exponent commitment `C_i` and the
/// representative commitment `D_i`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProofSignature {
    pub a_prime: GroupElement,
    pub challenge: BigUint,
    pub responses: BTreeMap<Urn, BigInt>,
    pub commitments: BTreeMap<BaseId, GroupElement>,
    pub representatives: BTreeMap<BaseId, GroupElement>,
}

fn element_map(map: &BTreeMap<BaseId, GroupElement>) -> BTreeMap<String, String> {
    map.iter().map(|(k, v)| (k.to_string(), hex::uint_to_hex(v.value()))).collect()
}

impl ProofSignature {
    pub fn to_json(&self) -> String {
        let responses: BTreeMap<String, String> =
            self.responses.iter().map(|(k, v)| (k.to_string(), hex::int_to_hex(v))).collect();
        canonical_json(&serde_json::json!({
            "a_prime": hex::uint_to_hex(self.a_prime.value()),
            "challenge": hex::uint_to_hex(&self.challenge),
            "commitments": element_map(&self.commitments),
            "representatives": element_map(&self.representatives),
            "responses": responses,
        }))
    }

    pub fn from_json(text: &str, group: &Arc<QrGroupN>) -> Result<Self> {
        #[derive(serde::Deserialize)]
        #[serde(deny_unknown_fields)]
        struct Doc {
            a_prime: String,
            challenge: String,
            commitments: BTreeMap<String, String>,
            representatives: BTreeMap<String, String>,
            responses: BTreeMap<String, String>,
        }
        let malformed = |m: String| ZkpError::Malformed(m);
        let doc: Doc = serde_json::from_str(text).map_err(|e| malformed(e.to_string()))?;
        let uint = |s: &str| hex::uint_from_hex(s).ok_or_else(|| malformed(format!("bad integer {s:?}")));
        let element = |s: &str| -> Result<GroupElement> { Ok(group.element(uint(s)?)?) };
        let elements = |m: &BTreeMap<String, String>| -> Result<BTreeMap<BaseId, GroupElement>> {
            m.iter()
                .map(|(k, v)| {
                    let id: BaseId = k.parse().map_err(|_| malformed(format!("bad base id {k:?}")))?;
                    Ok((id, element(v)?))
                })
                .collect()
        };
        let mut responses = BTreeMap::new();
        for (k, v) in &doc.responses {
            let value = hex::int_from_hex(v).ok_or_else(|| malformed(format!("bad integer {v:?}")))?;
            responses.insert(k.parse()?, value);
        }
        Ok(Self {
            a_prime: element(&doc.a_prime)?,
            challenge: uint(&doc.challenge)?,
            responses,
            commitments: elements(&doc.commitments)?,
            representatives: elements(&doc.representatives)?,
        })
    }
}

/// Possession first, then per vertex the commitment, representative and
/// multiple statements, then one pair-wise statement per pair of `D_i`.
fn predicate_statements<P: PublicKey + ?Sized>(
    pk: &P,
    a_prime: &GroupElement,
    ids: &[BaseId],
    commitments: &BTreeMap<BaseId, GroupElement>,
    representatives: &BTreeMap<BaseId, GroupElement>,
) -> Result<Vec<Statement>> {
    let mut statements = vec![possession_statement(pk, a_prime, ids)?];
    for (&id, c) in commitments {
        let d = representatives.get(&id).ok_or_else(|| ZkpError::Malformed(format!("no representative for {id}")))?;
        statements.push(commitment_statement(pk, id, c));
        statements.push(representative_statement(pk, id, d));
        statements.push(multiple_statement(pk, id, c, d));
    }
    let reps: Vec<_> = representatives.iter().collect();
    for (k, &(&i, d_i)) in reps.iter().enumerate() {
        for &(&j, d_j) in &reps[k + 1..] {
            statements.push(pairwise_statement(pk, (i, d_i), (j, d_j)));
        }
    }
    Ok(statements)
}

/// Proves `predicate` over a credential, leaving witnesses, tildes and
/// responses in `store`. The signature is re-randomized as
/// `A' = A * S^{r_A}`. For the pair-wise predicate every vertex exponent
/// `m_i = e_i * l_i` is committed twice, as `C_i` to `m_i` and as `D_i` to
/// its representative `e_i`, and every pair `D_i, D_j` gets a coprimality proof.
pub fn prove<P: PublicKey + ?Sized, R: RngCore + CryptoRng + ?Sized>(
    pk: &P,
    credential: &Credential,
    predicate: Predicate,
    nonce: &BigUint,
    store: &mut ProofStore,
    rng: &mut R,
) -> Result<ProofSignature> {
    if !clsig::verify_credential(pk, credential) {
        return Err(ZkpError::UnverifiableSignature);
    }
    let params = pk.params();
    let signer = pk.signer_key();
    let sig = &credential.signature;
    let r_bits = params.commitment_randomness_bits();

    let r_a = ntheory::random_bits(u64::from(r_bits), rng);
    let a_prime = sig.a.mul(&signer.s().pow_uint(&r_a))?;
    let offset = BigInt::one() << (params.l_e - 1);
    let v_prime = BigInt::from(sig.v.clone()) - BigInt::from(sig.e.clone()) * BigInt::from(r_a.clone());
    store.put(prover_urn("possession", "a_prime", None), StoredValue::Element(a_prime.clone()))?;
    store.put(prover_urn("possession", "r_a", None), StoredValue::Integer(BigInt::from(r_a.clone())))?;

    let mut witnesses = BTreeMap::new();
    witnesses.insert(prover_urn("possession", "e", None), BigInt::from(sig.e.clone()) - offset);
    witnesses.insert(prover_urn("possession", "v", None), v_prime);
    witnesses.insert(message_urn(None), BigInt::from(credential.m_0.clone()));
    let ids: Vec<BaseId> = credential.bases.ids().collect();
    for (&id, entry) in credential.bases.entries() {
        witnesses.insert(message_urn(Some(id)), BigInt::from(entry.exponent.clone()));
    }

    let mut commitments = BTreeMap::new();
    let mut openings = BTreeMap::new();
    if predicate.includes_pairwise() {
        let commit = |value: &BigUint, rng: &mut R| {
            IntegerCommitment::commit(
                std::slice::from_ref(signer.r_0()),
                std::slice::from_ref(value),
                signer.s(),
                r_bits,
                rng,
            )
        };
        for (id, entry) in credential.bases.vertex_entries() {
            let e = gencoding::vertex_representative(&entry.exponent).ok_or(ZkpError::NoRepresentative(id))?;
            let l = &entry.exponent / &e;
            let c = commit(&entry.exponent, rng)?;
            let d = commit(&e, rng)?;
            let sigma = BigInt::from(c.randomness().clone()) - BigInt::from(l.clone()) * BigInt::from(d.randomness().clone());
            witnesses.insert(prover_urn("commitment", "r", Some(&id.to_string())), BigInt::from(c.randomness().clone()));
            witnesses.insert(representative_urn("e", id), BigInt::from(e));
            witnesses.insert(representative_urn("s", id), BigInt::from(d.randomness().clone()));
            witnesses.insert(representative_urn("l", id), BigInt::from(l));
            witnesses.insert(representative_urn("sigma", id), sigma);
            store.put(prover_urn("commitment", "c", Some(&id.to_string())), StoredValue::Element(c.value().clone()))?;
            store.put(representative_urn("d", id), StoredValue::Element(d.value().clone()))?;
            commitments.insert(id, c.value().clone());
            openings.insert(id, d);
        }
        let opened: Vec<_> = openings.iter().collect();
        for (k, &(&i, d_i)) in opened.iter().enumerate() {
            for &(&j, d_j) in &opened[k + 1..] {
                witnesses.extend(pairwise_witnesses((i, d_i), (j, d_j))?);
            }
        }
    }
    let representatives: BTreeMap<BaseId, GroupElement> =
        openings.iter().map(|(&id, d)| (id, d.value().clone())).collect();

    let statements = predicate_statements(pk, &a_prime, &ids, &commitments, &representatives)?;
    let joint = prove_joint(&statements, &witnesses, &pk.challenge_context(), nonce, params, store, rng)?;
    for (urn, w) in witnesses {
        store.put(urn, StoredValue::Integer(w))?;
    }
    Ok(ProofSignature { a_prime, challenge: joint.challenge, responses: joint.responses, commitments, representatives })
}

/// Base ids whose exponents the proof claims to know, read off the response keys.
fn claimed_base_ids(proof: &ProofSignature) -> Option<Vec<BaseId>> {
    let template = message_urn(None).hat();
    let mut ids = BTreeSet::new();
    for urn in proof.responses.keys() {
        if urn.party() == template.party() && urn.proof() == template.proof() && urn.element() == template.element() {
            match urn.index() {
                Some("r0") => {}
                Some(index) => {
                    ids.insert(index.parse::<BaseId>().ok()?);
                }
                None => return None,
            }
        }
    }
    Some(ids.into_iter().collect())
}

pub fn verify<P: PublicKey + ?Sized>(pk: &P, predicate: Predicate, proof: &ProofSignature, nonce: &BigUint) -> bool {
    verify_with(pk, predicate, proof, nonce, Strategy::default())
}

/// [`verify`] with an explicit strategy for recomputing the t-values.
pub fn verify_with<P: PublicKey + ?Sized>(
    pk: &P,
    predicate: Predicate,
    proof: &ProofSignature,
    nonce: &BigUint,
    strategy: Strategy,
) -> bool {
    let Some(ids) = claimed_base_ids(proof) else {
        return false;
    };
    if ids.iter().any(|&id| pk.certified_base(id).is_none()) {
        return false;
    }
    let vertex_ids: Vec<BaseId> = ids.iter().copied().filter(|id| id.kind == BaseKind::Vertex).collect();
    let expected: Vec<BaseId> = if predicate.includes_pairwise() { vertex_ids } else { Vec::new() };
    if !proof.commitments.keys().copied().eq(expected.iter().copied())
        || !proof.representatives.keys().copied().eq(expected.iter().copied())
    {
        return false;
    }
    let modulus = pk.group().modulus();
    if proof.a_prime.group().modulus() != modulus
        || proof.commitments.values().chain(proof.representatives.values()).any(|c| c.group().modulus() != modulus)
    {
        return false;
    }
    let Ok(statements) =
        predicate_statements(pk, &proof.a_prime, &ids, &proof.commitments, &proof.representatives)
    else {
        return false;
    };
    let joint = JointProof { challenge: proof.challenge.clone(), responses: proof.responses.clone() };
    verify_joint_with(&statements, &joint, &pk.challenge_context(), nonce, pk.params(), strategy)
}

/// Possession alone.
pub fn prove_possession<P: PublicKey + ?Sized, R: RngCore + CryptoRng + ?Sized>(
    pk: &P,
    credential: &Credential,
    nonce: &BigUint,
    store: &mut ProofStore,
    rng: &mut R,
) -> Result<ProofSignature> {
    prove(pk, credential, Predicate::Possession, nonce, store, rng)
}

pub fn verify_possession<P: PublicKey + ?Sized>(pk: &P, proof: &ProofSignature, nonce: &BigUint) -> bool {
    verify(pk, Predicate::Possession, proof, nonce)
}

/// Fresh verifier nonce of `l_statzk` bits.
pub fn fresh_nonce<R: RngCore + CryptoRng + ?Sized>(params: &KeyGenParams, rng: &mut R) -> BigUint {
    ntheory::random_bits(u64::from(params.l_statzk), rng)
}

/// Number of pair-wise sub-proofs in a proof.
pub fn pairwise_count(proof: &ProofSignature) -> usize {
    proof.responses.keys().filter(|u| u.proof() == "pairwise" && u.element() == "rho_hat").count()
}
