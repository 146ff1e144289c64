//! Graph input and the two-stage graph encoding.
//!
//! Stage one ([`encode_graph`]) maps vertices to small primes by sorted id
//! and labels to the primes of an [`EncodingScheme`]. Stage two
//! ([`encode_bases`]) assigns every vertex and edge to a uniformly random,
//! distinct certified base of the extended public key and computes its
//! exponent: `e_i * prod(labels)` for a vertex and `e_i * e_j * prod(labels)`
//! for an edge.

use std::collections::{BTreeMap, BTreeSet};

use num_bigint::BigUint;
use num_traits::{One, Zero};
use rand::seq::SliceRandom;
use rand::{CryptoRng, RngCore};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::groups::GroupElement;
use crate::hex::{canonical_json, serde_uint};
use crate::keys::{ExtendedPublicKey, PublicKey};
use crate::ntheory::{self, PRIMALITY_ROUNDS};

pub use crate::keys::{BaseId, BaseKind};

pub const DEFAULT_LABEL_KEY: &str = "country";

/// `2^16` for the geolocation scheme.
pub const GEOLOCATION_BOUND_BITS: u32 = 16;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EncodingError {
    #[error("malformed GraphML: {0}")]
    MalformedXml(String),
    #[error("duplicate vertex id {0:?}")]
    DuplicateVertexId(String),
    #[error("edge endpoint {0:?} is not a declared vertex")]
    DanglingEdge(String),
    #[error("duplicate edge between {0:?} and {1:?}")]
    DuplicateEdge(String, String),
    #[error("label {0:?} is not in the encoding scheme")]
    UnknownLabel(String),
    #[error("{0} vertices do not fit below the vertex prime bound")]
    TooManyVertices(usize),
    #[error("graph has {vertices} vertices and {edges} edges; key supports {max_vertices} and {max_edges}")]
    GraphTooLarge { vertices: usize, edges: usize, max_vertices: u32, max_edges: u32 },
    #[error("exponent for {0} does not fit in l_m bits")]
    ExponentOverflow(String),
    #[error("key expects encoding {expected:?}, scheme is {found:?}")]
    EncodingMismatch { expected: String, found: String },
    #[error("invalid encoding scheme: {0}")]
    InvalidScheme(String),
    #[error("unknown encoding id {0:?}")]
    UnknownScheme(String),
    #[error("base {0} is not certified by the key")]
    UnknownBase(BaseId),
    #[error("base {0} appears twice")]
    DuplicateBase(BaseId),
}

pub type Result<T> = std::result::Result<T, EncodingError>;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Edge {
    pub source: String,
    pub target: String,
    pub labels: BTreeSet<String>,
}

/// Labelled graph. Edge direction is kept as parsed; encoding treats edges
/// as undirected.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Graph {
    vertices: BTreeMap<String, BTreeSet<String>>,
    edges: Vec<Edge>,
    directed: bool,
}

fn unordered(a: &str, b: &str) -> (String, String) {
    if a <= b {
        (a.to_string(), b.to_string())
    } else {
        (b.to_string(), a.to_string())
    }
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_vertex<I, S>(&mut self, id: &str, labels: I) -> Result<()>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        if self.vertices.contains_key(id) {
            return Err(EncodingError::DuplicateVertexId(id.to_string()));
        }
        self.vertices.insert(id.to_string(), labels.into_iter().map(Into::into).collect());
        Ok(())
    }

    pub fn add_edge<I, S>(&mut self, source: &str, target: &str, labels: I) -> Result<()>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        for end in [source, target] {
            if !self.vertices.contains_key(end) {
                return Err(EncodingError::DanglingEdge(end.to_string()));
            }
        }
        let key = unordered(source, target);
        if self.edges.iter().any(|e| unordered(&e.source, &e.target) == key) {
            return Err(EncodingError::DuplicateEdge(source.to_string(), target.to_string()));
        }
        self.edges.push(Edge {
            source: source.to_string(),
            target: target.to_string(),
            labels: labels.into_iter().map(Into::into).collect(),
        });
        Ok(())
    }

    pub fn vertices(&self) -> &BTreeMap<String, BTreeSet<String>> {
        &self.vertices
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn is_directed(&self) -> bool {
        self.directed
    }
}

pub fn parse_graphml(text: &str) -> Result<Graph> {
    parse_graphml_with_key(text, DEFAULT_LABEL_KEY)
}

/// Parses the GraphML subset `graph/node[@id]`, `graph/edge[@source,@target]`
/// and `data[@key]`. A `data` element is a label when its key is `label_key`
/// or refers to a `<key>` declaration whose `attr.name` is `label_key`.
pub fn parse_graphml_with_key(text: &str, label_key: &str) -> Result<Graph> {
    let doc = roxmltree::Document::parse(text).map_err(|e| EncodingError::MalformedXml(e.to_string()))?;
    let root = doc.root_element();
    if root.tag_name().name() != "graphml" {
        return Err(EncodingError::MalformedXml("root element is not <graphml>".into()));
    }
    let mut label_ids: BTreeSet<&str> = BTreeSet::from([label_key]);
    for key in root.children().filter(|n| n.tag_name().name() == "key") {
        if key.attribute("attr.name") == Some(label_key) {
            if let Some(id) = key.attribute("id") {
                label_ids.insert(id);
            }
        }
    }
    let graph_node = root
        .children()
        .find(|n| n.tag_name().name() == "graph")
        .ok_or_else(|| EncodingError::MalformedXml("missing <graph>".into()))?;

    let labels_of = |node: roxmltree::Node| -> BTreeSet<String> {
        node.children()
            .filter(|d| d.tag_name().name() == "data")
            .filter(|d| d.attribute("key").is_some_and(|k| label_ids.contains(k)))
            .filter_map(|d| d.text().map(str::trim).filter(|t| !t.is_empty()).map(str::to_string))
            .collect()
    };

    let mut graph = Graph { directed: graph_node.attribute("edgedefault") == Some("directed"), ..Graph::default() };
    for node in graph_node.children().filter(|n| n.tag_name().name() == "node") {
        let id = node.attribute("id").ok_or_else(|| EncodingError::MalformedXml("node without id".into()))?;
        graph.add_vertex(id, labels_of(node))?;
    }
    for edge in graph_node.children().filter(|n| n.tag_name().name() == "edge") {
        let source = edge.attribute("source").ok_or_else(|| EncodingError::MalformedXml("edge without source".into()))?;
        let target = edge.attribute("target").ok_or_else(|| EncodingError::MalformedXml("edge without target".into()))?;
        graph.add_edge(source, target, labels_of(edge))?;
    }
    Ok(graph)
}

/// Label-to-prime mapping. Every label prime exceeds `vertex_prime_bound`,
/// and every vertex prime stays below it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodingScheme {
    id: String,
    label_primes: BTreeMap<String, BigUint>,
    vertex_prime_bound: BigUint,
}

#[derive(Serialize, Deserialize)]
struct SchemeDoc {
    id: String,
    #[serde(with = "serde_uint")]
    vertex_prime_bound: BigUint,
    labels: BTreeMap<String, String>,
}

impl EncodingScheme {
    pub fn new(id: &str, label_primes: BTreeMap<String, BigUint>, vertex_prime_bound: BigUint) -> Result<Self> {
        let invalid = |m: String| EncodingError::InvalidScheme(m);
        if vertex_prime_bound <= BigUint::from(2u32) {
            return Err(invalid("vertex prime bound must exceed 2".into()));
        }
        let mut seen = BTreeSet::new();
        for (label, prime) in &label_primes {
            if prime <= &vertex_prime_bound {
                return Err(invalid(format!("prime for {label:?} is not above the vertex prime bound")));
            }
            if !ntheory::is_probable_prime(prime, PRIMALITY_ROUNDS) {
                return Err(invalid(format!("value for {label:?} is not prime")));
            }
            if !seen.insert(prime.clone()) {
                return Err(invalid(format!("prime for {label:?} is used twice")));
            }
        }
        Ok(Self { id: id.to_string(), label_primes, vertex_prime_bound })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn label_primes(&self) -> &BTreeMap<String, BigUint> {
        &self.label_primes
    }

    pub fn vertex_prime_bound(&self) -> &BigUint {
        &self.vertex_prime_bound
    }

    pub fn label_prime(&self, label: &str) -> Result<&BigUint> {
        self.label_primes.get(label).ok_or_else(|| EncodingError::UnknownLabel(label.to_string()))
    }

    /// `{id, vertex_prime_bound, labels: {label: hex-prime}}`.
    pub fn from_json(text: &str) -> Result<Self> {
        let doc: SchemeDoc = serde_json::from_str(text).map_err(|e| EncodingError::InvalidScheme(e.to_string()))?;
        let mut labels = BTreeMap::new();
        for (label, hex) in doc.labels {
            let prime = crate::hex::uint_from_hex(&hex)
                .ok_or_else(|| EncodingError::InvalidScheme(format!("bad prime {hex:?} for {label:?}")))?;
            labels.insert(label, prime);
        }
        Self::new(&doc.id, labels, doc.vertex_prime_bound)
    }

    pub fn to_json(&self) -> String {
        canonical_json(&SchemeDoc {
            id: self.id.clone(),
            vertex_prime_bound: self.vertex_prime_bound.clone(),
            labels: self.label_primes.iter().map(|(l, p)| (l.clone(), crate::hex::uint_to_hex(p))).collect(),
        })
    }

    /// Built-in schemes: `geolocation` and `geolocation/{bits}` for another bound.
    pub fn by_id(id: &str) -> Result<Self> {
        match id.split_once('/') {
            None if id == "geolocation" => Ok(setup_geolocation_encoding()),
            Some(("geolocation", bits)) => {
                let bits: u32 = bits.parse().map_err(|_| EncodingError::UnknownScheme(id.to_string()))?;
                if !(2..=64).contains(&bits) {
                    return Err(EncodingError::UnknownScheme(id.to_string()));
                }
                Ok(geolocation_scheme(bits))
            }
            _ => Err(EncodingError::UnknownScheme(id.to_string())),
        }
    }
}

/// ISO 3166-1 alpha-2 codes, sorted.
pub const ISO_3166_ALPHA2: [&str; 249] = [
    "AD", "AE", "AF", "AG", "AI", "AL", "AM", "AO", "AQ", "AR", "AS", "AT", "AU", "AW", "AX", "AZ", "BA", "BB", "BD",
    "BE", "BF", "BG", "BH", "BI", "BJ", "BL", "BM", "BN", "BO", "BQ", "BR", "BS", "BT", "BV", "BW", "BY", "BZ", "CA",
    "CC", "CD", "CF", "CG", "CH", "CI", "CK", "CL", "CM", "CN", "CO", "CR", "CU", "CV", "CW", "CX", "CY", "CZ", "DE",
    "DJ", "DK", "DM", "DO", "DZ", "EC", "EE", "EG", "EH", "ER", "ES", "ET", "FI", "FJ", "FK", "FM", "FO", "FR", "GA",
    "GB", "GD", "GE", "GF", "GG", "GH", "GI", "GL", "GM", "GN", "GP", "GQ", "GR", "GS", "GT", "GU", "GW", "GY", "HK",
    "HM", "HN", "HR", "HT", "HU", "ID", "IE", "IL", "IM", "IN", "IO", "IQ", "IR", "IS", "IT", "JE", "JM", "JO", "JP",
    "KE", "KG", "KH", "KI", "KM", "KN", "KP", "KR", "KW", "KY", "KZ", "LA", "LB", "LC", "LI", "LK", "LR", "LS", "LT",
    "LU", "LV", "LY", "MA", "MC", "MD", "ME", "MF", "MG", "MH", "MK", "ML", "MM", "MN", "MO", "MP", "MQ", "MR", "MS",
    "MT", "MU", "MV", "MW", "MX", "MY", "MZ", "NA", "NC", "NE", "NF", "NG", "NI", "NL", "NO", "NP", "NR", "NU", "NZ",
    "OM", "PA", "PE", "PF", "PG", "PH", "PK", "PL", "PM", "PN", "PR", "PS", "PT", "PW", "PY", "QA", "RE", "RO", "RS",
    "RU", "RW", "SA", "SB", "SC", "SD", "SE", "SG", "SH", "SI", "SJ", "SK", "SL", "SM", "SN", "SO", "SR", "SS", "ST",
    "SV", "SX", "SY", "SZ", "TC", "TD", "TF", "TG", "TH", "TJ", "TK", "TL", "TM", "TN", "TO", "TR", "TT", "TV", "TW",
    "TZ", "UA", "UG", "UM", "US", "UY", "UZ", "VA", "VC", "VE", "VG", "VI", "VN", "VU", "WF", "WS", "YE", "YT", "ZA",
    "ZM", "ZW",
];

fn geolocation_scheme(bound_bits: u32) -> EncodingScheme {
    let bound = BigUint::one() << bound_bits;
    let mut prime = bound.clone();
    let mut labels = BTreeMap::new();
    for code in ISO_3166_ALPHA2 {
        prime = ntheory::next_prime(&prime);
        labels.insert(code.to_string(), prime.clone());
    }
    let id = if bound_bits == GEOLOCATION_BOUND_BITS { "geolocation".to_string() } else { format!("geolocation/{bound_bits}") };
    EncodingScheme { id, label_primes: labels, vertex_prime_bound: bound }
}

/// Country codes mapped in order to the consecutive primes above `2^16`.
pub fn setup_geolocation_encoding() -> EncodingScheme {
    geolocation_scheme(GEOLOCATION_BOUND_BITS)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VertexRep {
    pub prime: BigUint,
    pub label_primes: Vec<BigUint>,
}

impl VertexRep {
    pub fn exponent(&self) -> BigUint {
        self.label_primes.iter().fold(self.prime.clone(), |acc, p| acc * p)
    }
}

/// Search limit of [`vertex_representative`].
pub const VERTEX_PRIME_SEARCH_LIMIT: u64 = 1 << 20;

/// Smallest prime factor of a vertex exponent. Vertex primes lie below every
/// label prime, so this is the vertex representative of an honest encoding.
pub fn vertex_representative(exponent: &BigUint) -> Option<BigUint> {
    if exponent <= &BigUint::one() {
        return None;
    }
    let mut d = 2u64;
    while d < VERTEX_PRIME_SEARCH_LIMIT {
        if (exponent % d).is_zero() {
            return Some(BigUint::from(d));
        }
        if BigUint::from(d * d) > *exponent {
            return Some(exponent.clone());
        }
        d += if d == 2 { 1 } else { 2 };
    }
    None
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EdgeRep {
    pub source: String,
    pub target: String,
    pub source_prime: BigUint,
    pub target_prime: BigUint,
    pub label_primes: Vec<BigUint>,
}

impl EdgeRep {
    pub fn exponent(&self) -> BigUint {
        let ends = &self.source_prime * &self.target_prime;
        self.label_primes.iter().fold(ends, |acc, p| acc * p)
    }
}

/// Output of stage one: prime representatives for every vertex and edge.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GraphRepresentation {
    pub encoding_id: String,
    pub vertex_prime_bound: BigUint,
    pub vertex_reps: BTreeMap<String, VertexRep>,
    pub edge_reps: Vec<EdgeRep>,
}

pub fn encode_graph(graph: &Graph, scheme: &EncodingScheme) -> Result<GraphRepresentation> {
    let mut vertex_reps = BTreeMap::new();
    let mut prime = BigUint::one();
    for (id, labels) in &graph.vertices {
        prime = ntheory::next_prime(&prime);
        if prime >= scheme.vertex_prime_bound {
            return Err(EncodingError::TooManyVertices(graph.vertex_count()));
        }
        let label_primes = labels.iter().map(|l| scheme.label_prime(l).cloned()).collect::<Result<_>>()?;
        vertex_reps.insert(id.clone(), VertexRep { prime: prime.clone(), label_primes });
    }
    let edge_reps = graph
        .edges
        .iter()
        .map(|e| {
            Ok(EdgeRep {
                source: e.source.clone(),
                target: e.target.clone(),
                source_prime: vertex_reps[&e.source].prime.clone(),
                target_prime: vertex_reps[&e.target].prime.clone(),
                label_primes: e.labels.iter().map(|l| scheme.label_prime(l).cloned()).collect::<Result<_>>()?,
            })
        })
        .collect::<Result<_>>()?;
    Ok(GraphRepresentation {
        encoding_id: scheme.id.clone(),
        vertex_prime_bound: scheme.vertex_prime_bound.clone(),
        vertex_reps,
        edge_reps,
    })
}

/// Vertex or edge of the encoded graph, used as the key of a base assignment.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum GraphElement {
    Vertex(String),
    Edge(String, String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BaseEntry {
    pub base: GroupElement,
    pub exponent: BigUint,
}

/// Bases in use by a signature with their exponents, in ascending base id
/// order, plus (signer and oracle side) which graph element sits on which base.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BaseCollection {
    entries: BTreeMap<BaseId, BaseEntry>,
    assignment: BTreeMap<GraphElement, BaseId>,
}

impl BaseCollection {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, id: BaseId, base: GroupElement, exponent: BigUint) -> Result<()> {
        if self.entries.contains_key(&id) {
            return Err(EncodingError::DuplicateBase(id));
        }
        self.entries.insert(id, BaseEntry { base, exponent });
        Ok(())
    }

    /// Rebuilds a collection from exponents keyed by certified base id.
    pub fn from_exponents<P: PublicKey + ?Sized>(pk: &P, exponents: &BTreeMap<BaseId, BigUint>) -> Result<Self> {
        let mut out = Self::new();
        for (&id, exp) in exponents {
            let base = pk.certified_base(id).ok_or(EncodingError::UnknownBase(id))?;
            out.insert(id, base.clone(), exp.clone())?;
        }
        Ok(out)
    }

    pub fn entries(&self) -> &BTreeMap<BaseId, BaseEntry> {
        &self.entries
    }

    pub fn get(&self, id: BaseId) -> Option<&BaseEntry> {
        self.entries.get(&id)
    }

    pub fn ids(&self) -> impl Iterator<Item = BaseId> + '_ {
        self.entries.keys().copied()
    }

    pub fn vertex_entries(&self) -> impl Iterator<Item = (BaseId, &BaseEntry)> {
        self.entries.iter().filter(|(id, _)| id.kind == BaseKind::Vertex).map(|(id, e)| (*id, e))
    }

    pub fn edge_entries(&self) -> impl Iterator<Item = (BaseId, &BaseEntry)> {
        self.entries.iter().filter(|(id, _)| id.kind == BaseKind::Edge).map(|(id, e)| (*id, e))
    }

    pub fn exponents(&self) -> BTreeMap<BaseId, BigUint> {
        self.entries.iter().map(|(id, e)| (*id, e.exponent.clone())).collect()
    }

    pub fn assignment(&self) -> &BTreeMap<GraphElement, BaseId> {
        &self.assignment
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

fn random_indices<R: RngCore + ?Sized>(available: usize, needed: usize, rng: &mut R) -> Vec<u32> {
    let mut indices: Vec<u32> = (1..=available as u32).collect();
    indices.shuffle(rng);
    indices.truncate(needed);
    indices
}

/// Stage two: random injective assignment onto certified bases.
pub fn encode_bases<R: RngCore + CryptoRng + ?Sized>(
    rep: &GraphRepresentation,
    epk: &ExtendedPublicKey,
    rng: &mut R,
) -> Result<BaseCollection> {
    let gp = epk.graph_params();
    let (vertices, edges) = (rep.vertex_reps.len(), rep.edge_reps.len());
    if vertices > gp.max_vertices as usize || edges > gp.max_edges as usize {
        return Err(EncodingError::GraphTooLarge {
            vertices,
            edges,
            max_vertices: gp.max_vertices,
            max_edges: gp.max_edges,
        });
    }
    let bound = u64::from(epk.params().l_m);
    let mut out = BaseCollection::new();
    let vertex_slots = random_indices(gp.max_vertices as usize, vertices, rng);
    for ((id, v), index) in rep.vertex_reps.iter().zip(vertex_slots) {
        let exponent = v.exponent();
        if exponent.bits() > bound {
            return Err(EncodingError::ExponentOverflow(format!("vertex {id:?}")));
        }
        let base_id = BaseId::vertex(index);
        out.insert(base_id, epk.certified_base(base_id).expect("index within l_V").clone(), exponent)?;
        out.assignment.insert(GraphElement::Vertex(id.clone()), base_id);
    }
    let edge_slots = random_indices(gp.max_edges as usize, edges, rng);
    for (e, index) in rep.edge_reps.iter().zip(edge_slots) {
        let exponent = e.exponent();
        if exponent.bits() > bound {
            return Err(EncodingError::ExponentOverflow(format!("edge {:?}-{:?}", e.source, e.target)));
        }
        let base_id = BaseId::edge(index);
        out.insert(base_id, epk.certified_base(base_id).expect("index within l_E").clone(), exponent)?;
        out.assignment.insert(GraphElement::Edge(e.source.clone(), e.target.clone()), base_id);
    }
    Ok(out)
}

/// Both stages, checking that the scheme is the one the key was extended for.
pub fn encode<R: RngCore + CryptoRng + ?Sized>(
    graph: &Graph,
    scheme: &EncodingScheme,
    epk: &ExtendedPublicKey,
    rng: &mut R,
) -> Result<(GraphRepresentation, BaseCollection)> {
    if epk.encoding_id() != scheme.id() {
        return Err(EncodingError::EncodingMismatch {
            expected: epk.encoding_id().to_string(),
            found: scheme.id().to_string(),
        });
    }
    let rep = encode_graph(graph, scheme)?;
    let bases = encode_bases(&rep, epk, rng)?;
    Ok((rep, bases))
}
