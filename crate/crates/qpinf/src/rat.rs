//! Rational helpers: construction shorthands and the `"num/den"` text form.

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use std::str::FromStr;

pub type Rational = BigRational;

pub fn rat(n: i64, d: i64) -> Rational {
    BigRational::new(BigInt::from(n), BigInt::from(d))
}

pub fn int(n: i64) -> Rational {
    BigRational::from_integer(BigInt::from(n))
}

/// `2^-k` as an exact rational.
pub fn pow2_neg(k: usize) -> Rational {
    BigRational::new(BigInt::one(), BigInt::one() << k)
}

/// Always `num/den`, including integers (`3/1`), so the format is uniform.
pub fn fmt(q: &Rational) -> String {
    format!("{}/{}", q.numer(), q.denom())
}

pub fn parse(s: &str) -> Result<Rational, String> {
    let s = s.trim();
    let (n, d) = match s.split_once('/') {
        Some((n, d)) => (n, d),
        None => (s, "1"),
    };
    let n = BigInt::from_str(n.trim()).map_err(|e| format!("bad numerator in {s:?}: {e}"))?;
    let d = BigInt::from_str(d.trim()).map_err(|e| format!("bad denominator in {s:?}: {e}"))?;
    if d.is_zero() {
        return Err(format!("zero denominator in {s:?}"));
    }
    Ok(BigRational::new(n, d))
}

/// Largest of `|numerator|` and `denominator`; used to bound enumerations.
pub fn height(q: &Rational) -> BigInt {
    let n = q.numer().abs();
    let d = q.denom().clone();
    n.max(d)
}

pub fn floor(q: &Rational) -> BigInt {
    q.numer().div_floor(q.denom())
}

/// Every reduced rational with `|num| <= h` and `1 <= den <= h`, sorted.
pub fn small_rationals(h: u64) -> Vec<Rational> {
    let mut out = vec![Rational::zero()];
    for d in 1..=h {
        for n in 1..=h {
            if n.gcd(&d) == 1 {
                let q = BigRational::new(BigInt::from(n), BigInt::from(d));
                out.push(-q.clone());
                out.push(q);
            }
        }
    }
    out.sort();
    out
}

pub mod serde_rat {
    use super::*;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(q: &Rational, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&fmt(q))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Rational, D::Error> {
        let s = String::deserialize(d)?;
        parse(&s).map_err(serde::de::Error::custom)
    }
}

pub mod serde_rat_vec {
    use super::*;
    use serde::ser::SerializeSeq;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &[Rational], s: S) -> Result<S::Ok, S::Error> {
        let mut seq = s.serialize_seq(Some(v.len()))?;
        for q in v {
            seq.serialize_element(&fmt(q))?;
        }
        seq.end()
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Rational>, D::Error> {
        let v = Vec::<String>::deserialize(d)?;
        v.iter().map(|s| parse(s).map_err(serde::de::Error::custom)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_roundtrip() {
        for q in [rat(-3, 2), rat(0, 5), rat(7, 1), rat(22, -7)] {
            assert_eq!(parse(&fmt(&q)).unwrap(), q);
        }
        assert_eq!(fmt(&rat(4, -6)), "-2/3");
        assert_eq!(parse("5").unwrap(), int(5));
        assert!(parse("1/0").is_err());
    }

    #[test]
    fn small_rationals_counts() {
        // 0, +-1 / 0, +-1, +-2, +-1/2
        assert_eq!(small_rationals(1).len(), 3);
        assert_eq!(small_rationals(2).len(), 7);
        assert!(small_rationals(3).windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn floor_negative() {
        assert_eq!(floor(&rat(-1, 2)), BigInt::from(-1));
        assert_eq!(floor(&rat(7, 2)), BigInt::from(3));
    }
}

/// Integer-keyed maps whose keys may arrive as strings, as they do inside
/// internally tagged enums.
pub mod index_keys {
    use serde::de::Error;
    use serde::{Deserialize, Deserializer};
    use std::collections::BTreeMap;

    pub fn deserialize<'de, D: Deserializer<'de>, V: Deserialize<'de>>(d: D) -> Result<BTreeMap<usize, V>, D::Error> {
        BTreeMap::<String, V>::deserialize(d)?
            .into_iter()
            .map(|(k, v)| k.parse().map(|k| (k, v)).map_err(D::Error::custom))
            .collect()
    }
}
