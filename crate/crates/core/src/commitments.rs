//! Integer commitments `C = prod base_i^{m_i} * S^r` in `QR_N`.
//!
//! Commitments are built only from [`GroupElement`]s of the public group, so
//! the committer never needs the factorization of `N`.

use std::fmt;

use num_bigint::{BigInt, BigUint};
use rand::{CryptoRng, RngCore};

use crate::groups::{self, GroupElement, GroupError};
use crate::hex::{self, canonical_json};
use crate::ntheory;
use crate::parallel::Strategy;

/// A commitment together with its opening. Only [`IntegerCommitment::value`]
/// is public; see [`IntegerCommitment::public_json`].
#[derive(Clone)]
pub struct IntegerCommitment {
    value: GroupElement,
    bases: Vec<GroupElement>,
    s: GroupElement,
    exponents: Vec<BigUint>,
    randomness: BigUint,
}

impl fmt::Debug for IntegerCommitment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "IntegerCommitment({:?}, opening redacted)", self.value)
    }
}

fn evaluate(
    bases: &[GroupElement],
    exponents: &[BigUint],
    s: &GroupElement,
    randomness: &BigUint,
) -> Result<GroupElement, GroupError> {
    if bases.len() != exponents.len() {
        return Err(GroupError::GroupMismatch);
    }
    let exps: Vec<BigInt> = exponents.iter().chain([randomness]).map(|e| BigInt::from(e.clone())).collect();
    let terms: Vec<(&GroupElement, &BigInt)> = bases.iter().chain([s]).zip(&exps).collect();
    groups::multi_pow(s.group(), &terms, Strategy::Sequential)
}

impl IntegerCommitment {
    /// Commits with fresh randomness `r < 2^randomness_bits`.
    pub fn commit<R: RngCore + CryptoRng + ?Sized>(
        bases: &[GroupElement],
        exponents: &[BigUint],
        s: &GroupElement,
        randomness_bits: u32,
        rng: &mut R,
    ) -> Result<Self, GroupError> {
        let r = ntheory::random_bits(u64::from(randomness_bits), rng);
        Self::with_randomness(bases, exponents, s, r)
    }

    pub fn with_randomness(
        bases: &[GroupElement],
        exponents: &[BigUint],
        s: &GroupElement,
        randomness: BigUint,
    ) -> Result<Self, GroupError> {
        let value = evaluate(bases, exponents, s, &randomness)?;
        Ok(Self { value, bases: bases.to_vec(), s: s.clone(), exponents: exponents.to_vec(), randomness })
    }

    pub fn value(&self) -> &GroupElement {
        &self.value
    }

    pub fn bases(&self) -> &[GroupElement] {
        &self.bases
    }

    pub fn exponents(&self) -> &[BigUint] {
        &self.exponents
    }

    pub fn randomness(&self) -> &BigUint {
        &self.randomness
    }

    /// True iff the claimed opening recomputes to `C`.
    pub fn open(&self, exponents: &[BigUint], randomness: &BigUint) -> bool {
        evaluate(&self.bases, exponents, &self.s, randomness).is_ok_and(|c| c == self.value)
    }

    /// `{"c": hex}`; the opening never leaves this type through serialization.
    pub fn public_json(&self) -> String {
        canonical_json(&serde_json::json!({ "c": hex::uint_to_hex(self.value.value()) }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::groups::QrGroupN;
    use num_traits::One;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn desk_commitment_recomputes() {
        let group = QrGroupN::new(BigUint::from(77u32)).unwrap();
        let four = group.element(BigUint::from(4u32)).unwrap();
        let c = IntegerCommitment::with_randomness(
            std::slice::from_ref(&four),
            &[BigUint::from(3u32)],
            &four,
            BigUint::from(5u32),
        )
        .unwrap();
        // 4^3 * 4^5 = 4^8 mod 77, computed independently.
        let expected = (1..=8).fold(1u64, |acc, _| acc * 4 % 77);
        assert_eq!(c.value().value(), &BigUint::from(expected));
        assert!(c.open(&[BigUint::from(3u32)], &BigUint::from(5u32)));
        assert!(!c.open(&[BigUint::from(4u32)], &BigUint::from(5u32)));
        // 4 has order 15, so shifting r by 15 gives a second opening; a
        // different r not congruent mod 15 must fail.
        assert!(!c.open(&[BigUint::from(3u32)], &BigUint::from(6u32)));
    }

    #[test]
    fn blinding_only_and_fresh_randomness() {
        let group = QrGroupN::new(BigUint::from(77u32)).unwrap();
        let s = group.element(BigUint::from(4u32)).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let c = IntegerCommitment::commit(&[], &[], &s, 16, &mut rng).unwrap();
        assert_eq!(c.value(), &s.pow_uint(c.randomness()));
        assert!(
            IntegerCommitment::commit(std::slice::from_ref(&s), &[BigUint::one()], &s, 16, &mut rng).is_ok()
        );
        assert!(IntegerCommitment::commit(std::slice::from_ref(&s), &[], &s, 16, &mut rng).is_err());
    }

    #[test]
    fn binding_at_desk_scale() {
        // N = 1019 * 1187 from safe primes; 4 generates QR_N of order 509 * 593.
        let group = QrGroupN::new(BigUint::from(1019u32 * 1187)).unwrap();
        let g = group.element(BigUint::from(4u32)).unwrap();
        let h = g.pow_uint(&BigUint::from(12_345u32));
        let c = IntegerCommitment::with_randomness(
            std::slice::from_ref(&g),
            &[BigUint::from(9u32)],
            &h,
            BigUint::from(200u32),
        )
        .unwrap();
        let mut openings = Vec::new();
        for m in 0u32..256 {
            for r in 0u32..256 {
                if c.open(&[BigUint::from(m)], &BigUint::from(r)) {
                    openings.push((m, r));
                }
            }
        }
        assert_eq!(openings, vec![(9, 200)]);
    }

    #[test]
    fn public_form_is_only_c() {
        let group = QrGroupN::new(BigUint::from(77u32)).unwrap();
        let s = group.element(BigUint::from(4u32)).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        let c = IntegerCommitment::commit(std::slice::from_ref(&s), &[BigUint::from(3u32)], &s, 64, &mut rng).unwrap();
        let json: serde_json::Value = serde_json::from_str(&c.public_json()).unwrap();
        assert_eq!(json.as_object().unwrap().len(), 1);
        assert!(!c.public_json().contains(&hex::uint_to_hex(c.randomness())));
    }
}
