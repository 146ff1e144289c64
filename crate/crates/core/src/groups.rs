//! Groups used by the scheme.
//!
//! [`QrGroupN`] is the public view of `QR_N`: it knows the modulus and nothing
//! else. [`QrGroupPq`] wraps the same modulus together with its factorization
//! and is only ever held by the signer; exponentiations there are split per
//! prime factor and recombined with the CRT. Elements are always
//! [`GroupElement`]s of the public group, so no element can be turned back
//! into something that exposes the trapdoor.
//!
//! [`CommitmentGroup`] is a prime-order subgroup of `Z_Gamma^*`.

use std::fmt;
use std::sync::Arc;

use num_bigint::{BigInt, BigUint, Sign};
use num_integer::Integer;
use num_traits::{One, Zero};
use rand::{CryptoRng, RngCore};
use thiserror::Error;

use crate::ntheory::{self, NumberTheoryError, SpecialRsaModulus};
use crate::parallel::{self, Strategy};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GroupError {
    #[error("modulus must be odd and greater than 3")]
    InvalidModulus,
    #[error("value is not a unit in [1, N)")]
    NotAnElement,
    #[error("elements belong to different groups")]
    GroupMismatch,
    #[error("element is not invertible")]
    NonInvertible,
    #[error("invalid commitment group: {0}")]
    InvalidCommitmentGroup(&'static str),
    #[error(transparent)]
    NumberTheory(#[from] NumberTheoryError),
}

pub type Result<T> = std::result::Result<T, GroupError>;

/// `QR_N` without the factorization of `N`.
///
/// There is no way to ask this group for its order:
///
/// ```compile_fail
/// use graphsig::groups::QrGroupN;
/// use num_bigint::BigUint;
/// let g = QrGroupN::new(BigUint::from(77u32)).unwrap();
/// let _ = g.order();
/// ```
#[derive(PartialEq, Eq)]
pub struct QrGroupN {
    modulus: BigUint,
}

impl QrGroupN {
    pub fn new(modulus: BigUint) -> Result<Arc<Self>> {
        if modulus.is_even() || modulus <= BigUint::from(3u32) {
            return Err(GroupError::InvalidModulus);
        }
        Ok(Arc::new(Self { modulus }))
    }

    pub fn modulus(&self) -> &BigUint {
        &self.modulus
    }

    /// Wraps `value` as an element; it must lie in `[1, N)` and be coprime to `N`.
    pub fn element(self: &Arc<Self>, value: BigUint) -> Result<GroupElement> {
        if value.is_zero() || value >= self.modulus || !value.gcd(&self.modulus).is_one() {
            return Err(GroupError::NotAnElement);
        }
        Ok(GroupElement { value, group: Arc::clone(self) })
    }

    pub fn identity(self: &Arc<Self>) -> GroupElement {
        GroupElement { value: BigUint::one(), group: Arc::clone(self) }
    }

    /// Necessary condition for membership in `QR_N`: Jacobi symbol 1. Without
    /// the factorization this is the strongest check available, and it also
    /// accepts non-residues modulo both factors.
    pub fn passes_jacobi_test(&self, x: &BigUint) -> bool {
        ntheory::jacobi(&BigInt::from(x.clone()), &self.modulus) == Ok(1)
    }
}

impl fmt::Debug for QrGroupN {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "QrGroupN({} bits)", self.modulus.bits())
    }
}

/// Element of `Z_N^*` reached through the public group.
#[derive(Clone)]
pub struct GroupElement {
    value: BigUint,
    group: Arc<QrGroupN>,
}

impl PartialEq for GroupElement {
    fn eq(&self, other: &Self) -> bool {
        self.value == other.value && self.group.modulus == other.group.modulus
    }
}

impl Eq for GroupElement {}

impl fmt::Debug for GroupElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "GroupElement({:x})", self.value)
    }
}

impl GroupElement {
    pub fn value(&self) -> &BigUint {
        &self.value
    }

    pub fn group(&self) -> &Arc<QrGroupN> {
        &self.group
    }

    pub fn is_identity(&self) -> bool {
        self.value.is_one()
    }

    fn same_group(&self, other: &GroupElement) -> Result<()> {
        if Arc::ptr_eq(&self.group, &other.group) || self.group.modulus == other.group.modulus {
            Ok(())
        } else {
            Err(GroupError::GroupMismatch)
        }
    }

    fn with_value(&self, value: BigUint) -> GroupElement {
        GroupElement { value, group: Arc::clone(&self.group) }
    }

    pub fn pow_uint(&self, exponent: &BigUint) -> GroupElement {
        self.with_value(self.value.modpow(exponent, &self.group.modulus))
    }

    /// `self^exponent`; negative exponents go through the modular inverse.
    pub fn pow(&self, exponent: &BigInt) -> Result<GroupElement> {
        match exponent.sign() {
            Sign::Minus => Ok(self.inverse()?.pow_uint(exponent.magnitude())),
            _ => Ok(self.pow_uint(exponent.magnitude())),
        }
    }

    pub fn mul(&self, other: &GroupElement) -> Result<GroupElement> {
        self.same_group(other)?;
        Ok(self.with_value((&self.value * &other.value) % &self.group.modulus))
    }

    pub fn inverse(&self) -> Result<GroupElement> {
        ntheory::mod_inverse(&self.value, &self.group.modulus)
            .map(|v| self.with_value(v))
            .ok_or(GroupError::NonInvertible)
    }
}

/// `prod base_i^exp_i` over one group, with the exponentiations spread over
/// the chosen strategy.
pub fn multi_pow(
    group: &Arc<QrGroupN>,
    terms: &[(&GroupElement, &BigInt)],
    strategy: Strategy,
) -> Result<GroupElement> {
    let powers = parallel::map(strategy, terms, |(base, exp)| base.pow(exp));
    let mut acc = group.identity();
    for (power, (base, _)) in powers.into_iter().zip(terms) {
        base.same_group(&acc)?;
        acc = acc.mul(&power?)?;
    }
    Ok(acc)
}

/// `QR_N` with known factorization. Signer side only.
#[derive(Clone)]
pub struct QrGroupPq {
    public: Arc<QrGroupN>,
    modulus: SpecialRsaModulus,
}

impl fmt::Debug for QrGroupPq {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "QrGroupPq({} bits, factors redacted)", self.modulus.n().bits())
    }
}

impl QrGroupPq {
    pub fn new(modulus: SpecialRsaModulus) -> Result<Self> {
        let public = QrGroupN::new(modulus.n().clone())?;
        Ok(Self { public, modulus })
    }

    pub fn public_group(&self) -> &Arc<QrGroupN> {
        &self.public
    }

    pub fn modulus(&self) -> &SpecialRsaModulus {
        &self.modulus
    }

    pub fn order(&self) -> &BigUint {
        self.modulus.group_order()
    }

    pub fn element(&self, value: BigUint) -> Result<GroupElement> {
        self.public.element(value)
    }

    /// CRT exponentiation. The exponent is reduced modulo `p - 1` and `q - 1`
    /// per factor, which agrees with reduction modulo `p'q'` on `QR_N` and stays
    /// correct for every other value in `[0, N)`.
    pub fn pow(&self, base: &GroupElement, exponent: &BigInt) -> Result<GroupElement> {
        if base.group.modulus != *self.modulus.n() {
            return Err(GroupError::GroupMismatch);
        }
        let per_factor = |prime: &BigUint| -> Result<BigUint> {
            let residue = base.value() % prime;
            if residue.is_zero() {
                return match exponent.sign() {
                    Sign::NoSign => Ok(BigUint::one()),
                    Sign::Plus => Ok(BigUint::zero()),
                    Sign::Minus => Err(GroupError::NonInvertible),
                };
            }
            let phi = BigInt::from(prime - 1u32);
            let reduced = exponent.mod_floor(&phi).to_biguint().expect("non-negative");
            Ok(residue.modpow(&reduced, prime))
        };
        let p = self.modulus.p().value();
        let q = self.modulus.q().value();
        let value = ntheory::crt_combine(&per_factor(p)?, &per_factor(q)?, p, q)?;
        Ok(GroupElement { value, group: Arc::clone(&self.public) })
    }

    /// Full membership test for `QR_N`: a residue modulo both factors.
    pub fn is_element(&self, x: &BigUint) -> bool {
        if x.is_zero() || x >= self.modulus.n() {
            return false;
        }
        let x = BigInt::from(x.clone());
        ntheory::jacobi(&x, self.modulus.p().value()) == Ok(1)
            && ntheory::jacobi(&x, self.modulus.q().value()) == Ok(1)
    }

    /// `a^2 mod N` if `a` is an admissible seed, i.e. `a - 1`, `a` and `a + 1`
    /// are all coprime to `N`; such a square has order exactly `p'q'`.
    pub fn generator_from_seed(&self, a: &BigUint) -> Option<GroupElement> {
        let n = self.modulus.n();
        if a <= &BigUint::one() || a >= &(n - 1u32) {
            return None;
        }
        let admissible = [a - 1u32, a.clone(), a + 1u32].iter().all(|x| x.gcd(n).is_one());
        if !admissible {
            return None;
        }
        let g = (a * a) % n;
        if g.is_one() {
            return None;
        }
        Some(GroupElement { value: g, group: Arc::clone(&self.public) })
    }

    /// Random generator of `QR_N`.
    pub fn qr_generator<R: RngCore + CryptoRng + ?Sized>(&self, rng: &mut R) -> GroupElement {
        let lo = BigUint::from(2u32);
        let hi = self.modulus.n() - 2u32;
        loop {
            let a = ntheory::random_in_range(&lo, &hi, rng).expect("N > 4");
            if let Some(g) = self.generator_from_seed(&a) {
                return g;
            }
        }
    }

    /// Uniform exponent in `[2, p'q' - 1]`.
    pub fn random_exponent<R: RngCore + CryptoRng + ?Sized>(&self, rng: &mut R) -> BigUint {
        let hi = self.order() - 1u32;
        ntheory::random_in_range(&BigUint::from(2u32), &hi, rng).expect("order > 2")
    }
}

/// Element of `QR_N` for which the signer knows `log_S`. The discrete log lets
/// products of such elements be computed by exponent arithmetic modulo `p'q'`
/// followed by one exponentiation of `S`. Only the element is ever serialized.
#[derive(Clone)]
pub struct DlogElement {
    pub element: GroupElement,
    pub dlog: BigUint,
}

impl fmt::Debug for DlogElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "DlogElement({:?}, dlog redacted)", self.element)
    }
}

/// Order-`rho` subgroup of `Z_Gamma^*` with two generators of unknown relative
/// discrete log.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CommitmentGroup {
    gamma: BigUint,
    rho: BigUint,
    g: BigUint,
    h: BigUint,
}

impl CommitmentGroup {
    pub fn from_parts(gamma: BigUint, rho: BigUint, g: BigUint, h: BigUint) -> Result<Self> {
        let rounds = ntheory::PRIMALITY_ROUNDS;
        if !ntheory::is_probable_prime(&gamma, rounds) || !ntheory::is_probable_prime(&rho, rounds) {
            return Err(GroupError::InvalidCommitmentGroup("gamma and rho must be prime"));
        }
        if !((&gamma - 1u32) % &rho).is_zero() {
            return Err(GroupError::InvalidCommitmentGroup("rho must divide gamma - 1"));
        }
        let group = Self { gamma, rho, g, h };
        for x in [&group.g, &group.h] {
            if x.is_one() || x.is_zero() || x >= &group.gamma || !group.is_member(x) {
                return Err(GroupError::InvalidCommitmentGroup("generators must have order rho"));
            }
        }
        Ok(group)
    }

    /// Maps `h0` into the order-`rho` subgroup; `None` if it lands on 1.
    pub fn derive_generator(gamma: &BigUint, rho: &BigUint, h0: &BigUint) -> Option<BigUint> {
        let cofactor = (gamma - 1u32) / rho;
        let g = h0.modpow(&cofactor, gamma);
        (!g.is_one() && !g.is_zero()).then_some(g)
    }

    pub fn gamma(&self) -> &BigUint {
        &self.gamma
    }

    pub fn rho(&self) -> &BigUint {
        &self.rho
    }

    pub fn g(&self) -> &BigUint {
        &self.g
    }

    pub fn h(&self) -> &BigUint {
        &self.h
    }

    pub fn is_member(&self, x: &BigUint) -> bool {
        !x.is_zero() && x < &self.gamma && x.modpow(&self.rho, &self.gamma).is_one()
    }

    /// Pedersen commitment `g^m h^r mod Gamma`.
    pub fn commit(&self, m: &BigUint, r: &BigUint) -> BigUint {
        (self.g.modpow(m, &self.gamma) * self.h.modpow(r, &self.gamma)) % &self.gamma
    }
}

/// Prime `rho` of `l_rho` bits, prime `Gamma = b*rho + 1` of `l_gamma` bits and
/// two independently derived generators.
pub fn setup_commitment_group<R: RngCore + CryptoRng + ?Sized>(
    l_gamma: u64,
    l_rho: u64,
    rng: &mut R,
) -> Result<CommitmentGroup> {
    if l_gamma <= l_rho || l_rho < 2 {
        return Err(GroupError::InvalidCommitmentGroup("need l_gamma > l_rho >= 2"));
    }
    let rho = ntheory::random_prime_in_range(
        &(BigUint::one() << (l_rho - 1)),
        &((BigUint::one() << l_rho) - 1u32),
        rng,
    )?;
    let gamma_lo = BigUint::one() << (l_gamma - 1);
    let gamma_hi = (BigUint::one() << l_gamma) - 1u32;
    let b_lo = (&gamma_lo - 1u32).div_ceil(&rho);
    let b_hi = (&gamma_hi - 1u32) / &rho;
    let gamma = loop {
        let mut b = ntheory::random_in_range(&b_lo, &b_hi, rng)?;
        if b.is_odd() {
            b += 1u32;
        }
        let gamma = &b * &rho + 1u32;
        if gamma.bits() == l_gamma && ntheory::is_probable_prime(&gamma, ntheory::PRIMALITY_ROUNDS) {
            break gamma;
        }
    };
    let mut draw = || loop {
        let h0 = ntheory::random_in_range(&BigUint::from(2u32), &(&gamma - 2u32), rng).expect("gamma > 4");
        if let Some(x) = CommitmentGroup::derive_generator(&gamma, &rho, &h0) {
            return x;
        }
    };
    let g = draw();
    let h = loop {
        let h = draw();
        if h != g {
            break h;
        }
    };
    CommitmentGroup::from_parts(gamma, rho, g, h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ntheory::SafePrime;
    use num_traits::ToPrimitive;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn desk_group() -> QrGroupPq {
        let p = SafePrime::new(BigUint::from(7u32)).unwrap();
        let q = SafePrime::new(BigUint::from(11u32)).unwrap();
        QrGroupPq::new(SpecialRsaModulus::from_safe_primes(p, q).unwrap()).unwrap()
    }

    fn brute_force_order(x: u64, n: u64) -> u64 {
        let mut acc = x % n;
        let mut k = 1;
        while acc != 1 {
            acc = acc * x % n;
            k += 1;
        }
        k
    }

    #[test]
    fn desk_generator_has_full_order() {
        let g = desk_group();
        let gen = g.generator_from_seed(&BigUint::from(2u32)).unwrap();
        assert_eq!(gen.value(), &BigUint::from(4u32));
        assert_eq!(brute_force_order(4, 77), 15);
        assert!(gen.pow_uint(&BigUint::from(15u32)).is_identity());
        assert!(gen.pow(&BigInt::zero()).unwrap().is_identity());
    }

    #[test]
    fn random_generators_have_order_p_prime_q_prime() {
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let modulus = ntheory::generate_special_rsa_modulus(32, &mut rng).unwrap();
        let n = modulus.n().to_u64().unwrap();
        let order = modulus.group_order().to_u64().unwrap();
        let group = QrGroupPq::new(modulus).unwrap();
        for _ in 0..5 {
            let gen = group.qr_generator(&mut rng);
            assert!(!gen.is_identity());
            assert!(group.public_group().passes_jacobi_test(gen.value()));
            let pow_order = |k: u64| gen.pow_uint(&BigUint::from(k)).is_identity();
            assert!(pow_order(order));
            // order < 10^6 is not guaranteed at 32 bits, so check that no proper divisor kills it
            let (sg_p, sg_q) = (
                group.modulus().p().sophie_germain().to_u64().unwrap(),
                group.modulus().q().sophie_germain().to_u64().unwrap(),
            );
            assert!(!pow_order(sg_p) && !pow_order(sg_q));
            let _ = n;
        }
    }

    #[test]
    fn desk_generators_brute_force_order() {
        let g = desk_group();
        for a in 2u64..75 {
            if let Some(gen) = g.generator_from_seed(&BigUint::from(a)) {
                assert_eq!(brute_force_order(gen.value().to_u64().unwrap(), 77), 15, "seed {a}");
            }
        }
    }

    #[test]
    fn mul_and_inverse() {
        let g = desk_group();
        let four = g.element(BigUint::from(4u32)).unwrap();
        let twenty = g.element(BigUint::from(20u32)).unwrap();
        assert_eq!(four.mul(&twenty).unwrap().value(), &BigUint::from(3u32));
        assert!(four.mul(&four.inverse().unwrap()).unwrap().is_identity());
        assert_eq!(four.mul(&twenty).unwrap(), twenty.mul(&four).unwrap());
        let other = QrGroupN::new(BigUint::from(91u32)).unwrap().element(BigUint::from(4u32)).unwrap();
        assert_eq!(four.mul(&other), Err(GroupError::GroupMismatch));
        assert_eq!(g.element(BigUint::from(7u32)), Err(GroupError::NotAnElement));
        assert_eq!(g.element(BigUint::from(77u32)), Err(GroupError::NotAnElement));
    }

    #[test]
    fn membership() {
        let g = desk_group();
        let squares: Vec<u64> = (1..77u64).filter(|x| x % 7 != 0 && x % 11 != 0).map(|x| x * x % 77).collect();
        for x in 1..77u64 {
            assert_eq!(g.is_element(&BigUint::from(x)), squares.contains(&x), "x = {x}");
        }
        assert!(g.is_element(&BigUint::from(4u32)));
        assert!(!g.is_element(&BigUint::from(3u32)));
        assert!(g.is_element(&BigUint::one()));
    }

    #[test]
    fn crt_pow_matches_plain_pow() {
        let mut rng = ChaCha20Rng::seed_from_u64(11);
        let g = QrGroupPq::new(ntheory::generate_special_rsa_modulus(64, &mut rng).unwrap()).unwrap();
        let n = g.public_group().modulus().clone();
        for _ in 0..200 {
            let v = ntheory::random_in_range(&BigUint::one(), &(&n - 1u32), &mut rng).unwrap();
            let Ok(base) = g.element(v) else { continue };
            let e = BigInt::from(ntheory::random_bits(160, &mut rng)) - (BigInt::one() << 159u32);
            assert_eq!(g.pow(&base, &e).unwrap(), base.pow(&e).unwrap());
        }
    }

    #[test]
    fn multi_pow_strategies_agree() {
        let g = desk_group();
        let a = g.element(BigUint::from(4u32)).unwrap();
        let b = g.element(BigUint::from(9u32)).unwrap();
        let (ea, eb) = (BigInt::from(5), BigInt::from(-3));
        let terms = [(&a, &ea), (&b, &eb)];
        let expect = a.pow(&ea).unwrap().mul(&b.pow(&eb).unwrap()).unwrap();
        assert_eq!(multi_pow(g.public_group(), &terms, Strategy::Sequential).unwrap(), expect);
        assert_eq!(multi_pow(g.public_group(), &terms, Strategy::default()).unwrap(), expect);
        assert!(multi_pow(g.public_group(), &[], Strategy::default()).unwrap().is_identity());
    }

    #[test]
    fn desk_commitment_group() {
        let (gamma, rho) = (BigUint::from(11u32), BigUint::from(5u32));
        let g = CommitmentGroup::derive_generator(&gamma, &rho, &BigUint::from(2u32)).unwrap();
        assert_eq!(g, BigUint::from(4u32));
        assert_eq!(brute_force_order(4, 11), 5);
        let h = CommitmentGroup::derive_generator(&gamma, &rho, &BigUint::from(3u32)).unwrap();
        let cg = CommitmentGroup::from_parts(gamma, rho, g, h).unwrap();
        assert!(cg.is_member(&cg.commit(&BigUint::from(3u32), &BigUint::from(2u32))));
        assert!(CommitmentGroup::from_parts(11u32.into(), 5u32.into(), 2u32.into(), 4u32.into()).is_err());
    }

    #[test]
    fn commitment_group_setup() {
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let cg = setup_commitment_group(32, 16, &mut rng).unwrap();
        assert_eq!(cg.gamma().bits(), 32);
        assert_eq!(cg.rho().bits(), 16);
        assert!(cg.g().modpow(cg.rho(), cg.gamma()).is_one());
        assert!(cg.h().modpow(cg.rho(), cg.gamma()).is_one());
        assert_ne!(cg.g(), cg.h());
    }
}
