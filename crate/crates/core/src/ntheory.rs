//! Number-theoretic primitives: primality, safe primes, the special RSA
//! modulus, CRT recombination, the extended Euclidean algorithm, the Jacobi
//! symbol and unbiased sampling of big integers.

use std::fmt;
use std::sync::OnceLock;

use num_bigint::{BigInt, BigUint};
use num_integer::Integer;
use num_traits::{One, Signed, ToPrimitive, Zero};
use rand::{CryptoRng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::parallel::{self, Strategy};

/// Miller-Rabin rounds for every primality decision in the crate (error <= 4^-50).
pub const PRIMALITY_ROUNDS: u32 = 50;

/// Draws made by [`random_prime_in_range`] before giving up.
pub const PRIME_SEARCH_BUDGET: usize = 10_000;

const SIEVE_BOUND: u32 = 1 << 14;
const SAFE_PRIME_BATCH: usize = 64;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum NumberTheoryError {
    #[error("requested bit length {0} is below the minimum of {1}")]
    BitsTooSmall(u64, u64),
    #[error("modulus length {0} must be even")]
    OddModulusLength(u64),
    #[error("moduli are not coprime")]
    NonCoprimeModuli,
    #[error("gcd(0, 0) is undefined")]
    BothZero,
    #[error("Jacobi symbol needs an odd positive modulus")]
    EvenModulus,
    #[error("empty range")]
    EmptyRange,
    #[error("no prime found in range after {0} draws")]
    NoPrimeFound(usize),
    #[error("{0} is not a safe prime")]
    NotSafePrime(String),
    #[error("the two factors of a special RSA modulus must differ")]
    EqualFactors,
}

pub type Result<T> = std::result::Result<T, NumberTheoryError>;

/// A prime `p` such that `(p - 1) / 2` is prime as well.
#[derive(Clone, PartialEq, Eq)]
pub struct SafePrime {
    value: BigUint,
    sophie_germain: BigUint,
}

impl SafePrime {
    pub fn new(value: BigUint) -> Result<Self> {
        let sophie_germain: BigUint = (&value - 1u32) >> 1;
        if value.is_even()
            || !is_probable_prime(&value, PRIMALITY_ROUNDS)
            || !is_probable_prime(&sophie_germain, PRIMALITY_ROUNDS)
        {
            return Err(NumberTheoryError::NotSafePrime(value.to_string()));
        }
        Ok(Self { value, sophie_germain })
    }

    pub fn value(&self) -> &BigUint {
        &self.value
    }

    pub fn sophie_germain(&self) -> &BigUint {
        &self.sophie_germain
    }

    pub fn bits(&self) -> u64 {
        self.value.bits()
    }
}

impl fmt::Debug for SafePrime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SafePrime({} bits)", self.value.bits())
    }
}

/// `N = p * q` for distinct safe primes. Holding this value means holding the trapdoor.
#[derive(Clone, PartialEq, Eq)]
pub struct SpecialRsaModulus {
    n: BigUint,
    p: SafePrime,
    q: SafePrime,
    group_order: BigUint,
}

impl SpecialRsaModulus {
    pub fn from_safe_primes(p: SafePrime, q: SafePrime) -> Result<Self> {
        if p == q {
            return Err(NumberTheoryError::EqualFactors);
        }
        let n = p.value() * q.value();
        let group_order = p.sophie_germain() * q.sophie_germain();
        Ok(Self { n, p, q, group_order })
    }

    pub fn n(&self) -> &BigUint {
        &self.n
    }

    pub fn p(&self) -> &SafePrime {
        &self.p
    }

    pub fn q(&self) -> &SafePrime {
        &self.q
    }

    /// Order of `QR_N`, that is `p' * q'`.
    pub fn group_order(&self) -> &BigUint {
        &self.group_order
    }
}

impl fmt::Debug for SpecialRsaModulus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SpecialRsaModulus({} bits, factors redacted)", self.n.bits())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExtendedGcd {
    pub gcd: BigInt,
    pub bezout_s: BigInt,
    pub bezout_t: BigInt,
}

fn small_primes() -> &'static [u32] {
    static PRIMES: OnceLock<Vec<u32>> = OnceLock::new();
    PRIMES.get_or_init(|| {
        let bound = SIEVE_BOUND as usize;
        let mut composite = vec![false; bound];
        let mut primes = Vec::new();
        for i in 2..bound {
            if !composite[i] {
                primes.push(i as u32);
                let mut j = i * i;
                while j < bound {
                    composite[j] = true;
                    j += i;
                }
            }
        }
        primes
    })
}

/// Odd small primes grouped so that each group's product fits in a u64; one
/// big-integer remainder per group instead of one per prime.
fn prime_groups() -> &'static [(u64, Vec<u32>)] {
    static GROUPS: OnceLock<Vec<(u64, Vec<u32>)>> = OnceLock::new();
    GROUPS.get_or_init(|| {
        let mut groups = Vec::new();
        let mut product: u64 = 1;
        let mut members = Vec::new();
        for &p in &small_primes()[1..] {
            match product.checked_mul(p as u64) {
                Some(next) => {
                    product = next;
                    members.push(p);
                }
                None => {
                    groups.push((product, std::mem::take(&mut members)));
                    product = p as u64;
                    members.push(p);
                }
            }
        }
        if !members.is_empty() {
            groups.push((product, members));
        }
        groups
    })
}

/// Calls `f(prime, n mod prime)` for every odd sieve prime until it returns false.
fn for_each_small_residue(n: &BigUint, mut f: impl FnMut(u32, u32) -> bool) -> bool {
    for (product, members) in prime_groups() {
        let r = (n % *product).to_u64().expect("remainder fits u64");
        for &p in members {
            if !f(p, (r % p as u64) as u32) {
                return false;
            }
        }
    }
    true
}

fn miller_rabin_round(n: &BigUint, n_minus_one: &BigUint, d: &BigUint, s: u64, base: &BigUint) -> bool {
    let mut x = base.modpow(d, n);
    if x.is_one() || &x == n_minus_one {
        return true;
    }
    for _ in 1..s {
        x = (&x * &x) % n;
        if &x == n_minus_one {
            return true;
        }
        if x.is_one() {
            return false;
        }
    }
    false
}

/// Miller-Rabin without trial division. The first base is 2, the remaining
/// bases are derived from SHA-256 of `n`, so the test is deterministic per input
/// yet the bases cannot be chosen by whoever supplies `n`.
fn miller_rabin(n: &BigUint, rounds: u32) -> bool {
    let n_minus_one = n - 1u32;
    let s = n_minus_one.trailing_zeros().unwrap_or(0);
    let d = &n_minus_one >> s;
    let two = BigUint::from(2u32);
    if !miller_rabin_round(n, &n_minus_one, &d, s, &two) {
        return false;
    }
    if rounds <= 1 {
        return true;
    }
    let seed: [u8; 32] = Sha256::digest(n.to_bytes_be()).into();
    let mut rng = ChaCha20Rng::from_seed(seed);
    let upper = n - 2u32;
    for _ in 1..rounds {
        let base = random_in_range(&two, &upper, &mut rng).expect("n > 4 here");
        if !miller_rabin_round(n, &n_minus_one, &d, s, &base) {
            return false;
        }
    }
    true
}

/// Probabilistic primality: trial division by primes below 2^14, then
/// `rounds` Miller-Rabin rounds.
pub fn is_probable_prime(n: &BigUint, rounds: u32) -> bool {
    if let Some(small) = n.to_u64() {
        if small < 2 {
            return false;
        }
        if small < (SIEVE_BOUND as u64) * (SIEVE_BOUND as u64) {
            return small_primes()
                .iter()
                .take_while(|&&p| (p as u64) * (p as u64) <= small)
                .all(|&p| small % p as u64 != 0);
        }
    }
    if n.is_even() {
        return false;
    }
    if !for_each_small_residue(n, |_, r| r != 0) {
        return false;
    }
    miller_rabin(n, rounds.max(1))
}

/// Smallest prime strictly greater than `n`.
pub fn next_prime(n: &BigUint) -> BigUint {
    let mut candidate = n + 1u32;
    while !is_probable_prime(&candidate, PRIMALITY_ROUNDS) {
        candidate += 1u32;
    }
    candidate
}

/// Uniform integer in `[0, 2^bits)`.
pub fn random_bits<R: RngCore + ?Sized>(bits: u64, rng: &mut R) -> BigUint {
    if bits == 0 {
        return BigUint::zero();
    }
    let mut bytes = vec![0u8; bits.div_ceil(8) as usize];
    rng.fill_bytes(&mut bytes);
    let excess = bytes.len() as u64 * 8 - bits;
    bytes[0] &= 0xffu8 >> excess;
    BigUint::from_bytes_be(&bytes)
}

/// Uniform integer in `[lo, hi]` by rejection sampling.
pub fn random_in_range<R: RngCore + ?Sized>(lo: &BigUint, hi: &BigUint, rng: &mut R) -> Result<BigUint> {
    if lo > hi {
        return Err(NumberTheoryError::EmptyRange);
    }
    let width = hi - lo + 1u32;
    let bits = width.bits();
    loop {
        let r = random_bits(bits, rng);
        if r < width {
            return Ok(lo + r);
        }
    }
}

/// Uniform probable prime in `[lo, hi]`.
pub fn random_prime_in_range<R: RngCore + CryptoRng + ?Sized>(
    lo: &BigUint,
    hi: &BigUint,
    rng: &mut R,
) -> Result<BigUint> {
    random_prime_in_range_with_budget(lo, hi, PRIME_SEARCH_BUDGET, rng)
}

pub fn random_prime_in_range_with_budget<R: RngCore + CryptoRng + ?Sized>(
    lo: &BigUint,
    hi: &BigUint,
    budget: usize,
    rng: &mut R,
) -> Result<BigUint> {
    for _ in 0..budget {
        let candidate = random_in_range(lo, hi, rng)?;
        if is_probable_prime(&candidate, PRIMALITY_ROUNDS) {
            return Ok(candidate);
        }
    }
    Err(NumberTheoryError::NoPrimeFound(budget))
}

fn passes_safe_prime_sieve(sophie_germain: &BigUint) -> bool {
    // Rejects p' divisible by a small prime, and p' with 2p'+1 divisible by one.
    for_each_small_residue(sophie_germain, |prime, r| {
        let below = BigUint::from(prime) >= *sophie_germain;
        below || (r != 0 && (2 * r + 1) % prime != 0)
    })
}

fn is_safe_prime_candidate(sophie_germain: &BigUint) -> bool {
    let p = (sophie_germain << 1u32) + 1u32;
    miller_rabin(sophie_germain, 1)
        && miller_rabin(&p, 1)
        && miller_rabin(sophie_germain, PRIMALITY_ROUNDS)
        && miller_rabin(&p, PRIMALITY_ROUNDS)
}

/// Random safe prime of exactly `bits` bits.
///
/// Candidates `p'` of `bits - 1` bits have their two top bits set, so the
/// product of two such primes always has exactly `2 * bits` bits.
pub fn generate_safe_prime<R: RngCore + CryptoRng + ?Sized>(bits: u64, rng: &mut R) -> Result<SafePrime> {
    generate_safe_prime_with(bits, Strategy::default(), rng)
}

pub fn generate_safe_prime_with<R: RngCore + CryptoRng + ?Sized>(
    bits: u64,
    strategy: Strategy,
    rng: &mut R,
) -> Result<SafePrime> {
    if bits < 16 {
        return Err(NumberTheoryError::BitsTooSmall(bits, 16));
    }
    let sg_bits = bits - 1;
    let high = (BigUint::one() << (sg_bits - 1)) | (BigUint::one() << (sg_bits - 2));
    loop {
        let batch: Vec<BigUint> = (0..SAFE_PRIME_BATCH)
            .map(|_| random_bits(sg_bits, rng) | &high | BigUint::one())
            .filter(passes_safe_prime_sieve)
            .collect();
        if let Some(i) = parallel::find_first(strategy, &batch, is_safe_prime_candidate) {
            let sophie_germain = batch[i].clone();
            let value = (&sophie_germain << 1u32) + 1u32;
            return Ok(SafePrime { value, sophie_germain });
        }
    }
}

/// Special RSA modulus of exactly `l_n` bits from two distinct safe primes.
pub fn generate_special_rsa_modulus<R: RngCore + CryptoRng + ?Sized>(
    l_n: u64,
    rng: &mut R,
) -> Result<SpecialRsaModulus> {
    if l_n % 2 != 0 {
        return Err(NumberTheoryError::OddModulusLength(l_n));
    }
    if l_n < 32 {
        return Err(NumberTheoryError::BitsTooSmall(l_n, 32));
    }
    let p = generate_safe_prime(l_n / 2, rng)?;
    loop {
        let q = generate_safe_prime(l_n / 2, rng)?;
        if q != p {
            let modulus = SpecialRsaModulus::from_safe_primes(p, q)?;
            debug_assert_eq!(modulus.n().bits(), l_n);
            return Ok(modulus);
        }
    }
}

/// Extended Euclidean algorithm with `gcd >= 0` and `s*a + t*b = gcd`.
pub fn eea(a: &BigInt, b: &BigInt) -> Result<ExtendedGcd> {
    if a.is_zero() && b.is_zero() {
        return Err(NumberTheoryError::BothZero);
    }
    let (mut old_r, mut r) = (a.clone(), b.clone());
    let (mut old_s, mut s) = (BigInt::one(), BigInt::zero());
    let (mut old_t, mut t) = (BigInt::zero(), BigInt::one());
    while !r.is_zero() {
        let quotient = &old_r / &r;
        let next_r = &old_r - &quotient * &r;
        old_r = std::mem::replace(&mut r, next_r);
        let next_s = &old_s - &quotient * &s;
        old_s = std::mem::replace(&mut s, next_s);
        let next_t = &old_t - &quotient * &t;
        old_t = std::mem::replace(&mut t, next_t);
    }
    if old_r.is_negative() {
        old_r = -old_r;
        old_s = -old_s;
        old_t = -old_t;
    }
    Ok(ExtendedGcd { gcd: old_r, bezout_s: old_s, bezout_t: old_t })
}

/// Inverse of `a` modulo `m`, if it exists.
pub fn mod_inverse(a: &BigUint, m: &BigUint) -> Option<BigUint> {
    if m.is_zero() {
        return None;
    }
    let m_int = BigInt::from(m.clone());
    let g = eea(&BigInt::from(a.clone()), &m_int).ok()?;
    if !g.gcd.is_one() {
        return None;
    }
    g.bezout_s.mod_floor(&m_int).to_biguint()
}

/// The unique `x` in `[0, p*q)` with `x = x_p (mod p)` and `x = x_q (mod q)`.
pub fn crt_combine(x_p: &BigUint, x_q: &BigUint, p: &BigUint, q: &BigUint) -> Result<BigUint> {
    let inv = mod_inverse(&(p % q), q).ok_or(NumberTheoryError::NonCoprimeModuli)?;
    let x = x_p % p;
    let diff = BigInt::from(x_q % q) - BigInt::from(x.clone());
    let diff = diff.mod_floor(&BigInt::from(q.clone())).to_biguint().expect("non-negative");
    let h = (diff * inv) % q;
    Ok(x + p * h)
}

/// Jacobi symbol `(a / n)` for odd positive `n`.
pub fn jacobi(a: &BigInt, n: &BigUint) -> Result<i8> {
    if n.is_even() {
        return Err(NumberTheoryError::EvenModulus);
    }
    let mut n = n.clone();
    let mut a = a.mod_floor(&BigInt::from(n.clone())).to_biguint().expect("non-negative");
    let mut result = 1i8;
    while !a.is_zero() {
        let twos = a.trailing_zeros().unwrap_or(0);
        if twos % 2 == 1 {
            let n_mod_8 = (&n % 8u32).to_u32().expect("small");
            if n_mod_8 == 3 || n_mod_8 == 5 {
                result = -result;
            }
        }
        a >>= twos;
        std::mem::swap(&mut a, &mut n);
        if (&a % 4u32).to_u32() == Some(3) && (&n % 4u32).to_u32() == Some(3) {
            result = -result;
        }
        a %= &n;
    }
    Ok(if n.is_one() { result } else { 0 })
}
