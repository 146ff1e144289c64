#![forbid(unsafe_code)]

//! Graph signatures over the strong-RSA setting.
//!
//! A signer certifies a graph topology by encoding every vertex and edge as a
//! product of prime representatives placed in the exponent of a randomly
//! chosen certified base, and signing the result with a Camenisch-Lysyanskaya
//! signature. The holder can later prove in zero-knowledge that it possesses
//! such a signature, optionally together with the statement that all signed
//! vertices are pair-wise different, without disclosing the topology.
//!
//! The crate is layered bottom-up:
//!
//! - [`ntheory`]: safe primes, special RSA moduli, CRT, EEA, Jacobi symbol.
//! - [`groups`]: quadratic residues modulo `N` with and without the trapdoor,
//!   and a prime-order commitment group.
//! - [`keys`]: signer and extended key pairs, key-correctness proofs.
//! - [`gencoding`]: GraphML input, encoding schemes, the two-stage encoder.
//! - [`commitments`]: integer commitments in `QR_N`.
//! - [`clsig`]: partial signing, completion, verification, signing oracle.
//! - [`zkp`]: URNs, the proof store, Fiat-Shamir, sigma proof components.
//! - [`orchestration`]: channels, wire framing and the four party state machines.
//! - [`bench`]: timing harness over key length and graph size.
//!
//! Big-integer arithmetic is not constant-time.

pub mod bench;
pub mod clsig;
pub mod commitments;
pub mod gencoding;
pub mod groups;
pub mod hex;
pub mod keys;
pub mod ntheory;
pub mod orchestration;
pub mod parallel;
pub mod zkp;

pub use clsig::{Credential, GraphSignature, PreSignature};
pub use gencoding::{BaseCollection, BaseId, BaseKind, EncodingScheme, Graph, GraphRepresentation};
pub use groups::{GroupElement, QrGroupN, QrGroupPq};
pub use keys::{
    ExtendedKeyPair, ExtendedPublicKey, GraphParams, KeyGenParams, PublicKey, SignerKeyPair,
    SignerPublicKey, SigningKey,
};
pub use zkp::{Predicate, ProofSignature, ProofStore, Urn};
