//! Lowercase big-endian hex for integers, the one integer encoding used by
//! every serialized artifact (keys, signatures, proofs, wire payloads).

use num_bigint::{BigInt, BigUint, Sign};
use num_traits::Num;
use serde::Serialize;

pub fn uint_to_hex(n: &BigUint) -> String {
    n.to_str_radix(16)
}

pub fn int_to_hex(n: &BigInt) -> String {
    match n.sign() {
        Sign::Minus => format!("-{}", n.magnitude().to_str_radix(16)),
        _ => n.magnitude().to_str_radix(16),
    }
}

fn is_canonical_digits(s: &str) -> bool {
    !s.is_empty()
        && s.bytes().all(|b| b.is_ascii_digit() || (b'a'..=b'f').contains(&b))
        && (s == "0" || !s.starts_with('0'))
}

/// Parses a canonical lowercase hex string (no prefix, no leading zeros).
pub fn uint_from_hex(s: &str) -> Option<BigUint> {
    if !is_canonical_digits(s) {
        return None;
    }
    BigUint::from_str_radix(s, 16).ok()
}

pub fn int_from_hex(s: &str) -> Option<BigInt> {
    match s.strip_prefix('-') {
        Some(rest) if rest != "0" => uint_from_hex(rest).map(|m| BigInt::from_biguint(Sign::Minus, m)),
        Some(_) => None,
        None => uint_from_hex(s).map(BigInt::from),
    }
}

/// Serializes through `serde_json::Value`, whose maps are ordered, so object
/// keys come out sorted regardless of struct field order.
pub fn canonical_json<T: Serialize>(value: &T) -> String {
    let value = serde_json::to_value(value).expect("serializable value");
    serde_json::to_string(&value).expect("json value serializes")
}

pub mod serde_uint {
    use num_bigint::BigUint;
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(n: &BigUint, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&super::uint_to_hex(n))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BigUint, D::Error> {
        let s = String::deserialize(d)?;
        super::uint_from_hex(&s).ok_or_else(|| D::Error::custom(format!("invalid hex integer {s:?}")))
    }
}

pub mod serde_int {
    use num_bigint::BigInt;
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(n: &BigInt, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&super::int_to_hex(n))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BigInt, D::Error> {
        let s = String::deserialize(d)?;
        super::int_from_hex(&s).ok_or_else(|| D::Error::custom(format!("invalid hex integer {s:?}")))
    }
}

pub mod serde_uint_vec {
    use num_bigint::BigUint;
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &[BigUint], s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(v.iter().map(super::uint_to_hex))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<BigUint>, D::Error> {
        let v = Vec::<String>::deserialize(d)?;
        v.iter()
            .map(|s| super::uint_from_hex(s).ok_or_else(|| D::Error::custom(format!("invalid hex integer {s:?}"))))
            .collect()
    }
}
