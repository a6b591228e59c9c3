//! Numbers `r + s*sqrt(2)` with rational `r`, `s`: the field Q(sqrt 2).
//!
//! Interval endpoints with a nonzero `s` part are irrational, so an interval
//! bounded by them is closed and open at once inside Q.

use crate::rat::{self, Rational};
use num_bigint::BigInt;
use num_integer::Roots;
use num_traits::{One, Signed, Zero};
use std::cmp::Ordering;
use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};

#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub struct Quad {
    pub r: Rational,
    pub s: Rational,
}

impl Quad {
    pub fn new(r: Rational, s: Rational) -> Self {
        Quad { r, s }
    }

    pub fn zero() -> Self {
        Quad::new(Rational::zero(), Rational::zero())
    }

    pub fn sqrt2() -> Self {
        Quad::new(Rational::zero(), Rational::one())
    }

    pub fn is_rational(&self) -> bool {
        self.s.is_zero()
    }

    pub fn as_rational(&self) -> Option<&Rational> {
        self.is_rational().then_some(&self.r)
    }

    pub fn is_zero(&self) -> bool {
        self.r.is_zero() && self.s.is_zero()
    }

    /// Exact sign; decided by comparing `r^2` with `2 s^2` when the parts disagree.
    pub fn signum(&self) -> Ordering {
        let rs = self.r.cmp(&Rational::zero());
        let ss = self.s.cmp(&Rational::zero());
        match (rs, ss) {
            (Ordering::Equal, x) | (x, Ordering::Equal) => x,
            (a, b) if a == b => a,
            (a, _) => {
                let r2 = &self.r * &self.r;
                let s2 = &self.s * &self.s * Rational::from_integer(BigInt::from(2));
                if r2 > s2 {
                    a
                } else {
                    a.reverse()
                }
            }
        }
    }

    pub fn is_positive(&self) -> bool {
        self.signum() == Ordering::Greater
    }

    pub fn is_negative(&self) -> bool {
        self.signum() == Ordering::Less
    }

    pub fn abs(&self) -> Quad {
        if self.is_negative() {
            -self
        } else {
            self.clone()
        }
    }

    pub fn conj(&self) -> Quad {
        Quad::new(self.r.clone(), -self.s.clone())
    }

    /// `r^2 - 2 s^2`, nonzero for every nonzero element.
    pub fn norm(&self) -> Rational {
        &self.r * &self.r - &self.s * &self.s * Rational::from_integer(BigInt::from(2))
    }

    pub fn recip(&self) -> Quad {
        assert!(!self.is_zero(), "reciprocal of zero");
        let n = self.norm();
        Quad::new(&self.r / &n, -&self.s / &n)
    }

    /// Exact floor.
    pub fn floor(&self) -> BigInt {
        // floor(s*sqrt2) from the integer square root of floor(2 s^2);
        // sqrt(2 s^2) is irrational whenever s != 0.
        let two_s2 = &self.s * &self.s * Rational::from_integer(BigInt::from(2));
        let root: BigInt = Roots::sqrt(&rat::floor(&two_s2));
        let fs = if self.s.is_zero() {
            BigInt::zero()
        } else if self.s.is_positive() {
            root
        } else {
            -(root + BigInt::one())
        };
        let mut n = rat::floor(&self.r) + fs;
        while Quad::from(Rational::from_integer(n.clone() + 1)) <= *self {
            n += 1;
        }
        while Quad::from(Rational::from_integer(n.clone())) > *self {
            n -= 1;
        }
        n
    }

    pub fn parse(s: &str) -> Result<Quad, String> {
        let t = s.trim();
        match t.strip_suffix("*sqrt2") {
            None => Ok(Quad::from(rat::parse(t)?)),
            Some(body) => {
                // body = "<r>+<s>" or "<r>-<s>"; the split sits after the first character
                // so a leading minus on r is kept.
                let idx = body[1..]
                    .find(['+', '-'])
                    .map(|i| i + 1)
                    .ok_or_else(|| format!("bad quadratic number {s:?}"))?;
                let r = rat::parse(&body[..idx])?;
                let sv = rat::parse(body[idx..].trim_start_matches('+'))?;
                Ok(Quad::new(r, sv))
            }
        }
    }
}

impl From<Rational> for Quad {
    fn from(r: Rational) -> Self {
        Quad::new(r, Rational::zero())
    }
}

impl From<&Rational> for Quad {
    fn from(r: &Rational) -> Self {
        Quad::new(r.clone(), Rational::zero())
    }
}

impl fmt::Display for Quad {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.s.is_zero() {
            write!(f, "{}", rat::fmt(&self.r))
        } else if self.s.is_negative() {
            write!(f, "{}-{}*sqrt2", rat::fmt(&self.r), rat::fmt(&-self.s.clone()))
        } else {
            write!(f, "{}+{}*sqrt2", rat::fmt(&self.r), rat::fmt(&self.s))
        }
    }
}

impl PartialOrd for Quad {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Quad {
    fn cmp(&self, other: &Self) -> Ordering {
        (self - other).signum()
    }
}

impl PartialEq<Rational> for Quad {
    fn eq(&self, other: &Rational) -> bool {
        self.s.is_zero() && &self.r == other
    }
}

impl PartialOrd<Rational> for Quad {
    fn partial_cmp(&self, other: &Rational) -> Option<Ordering> {
        Some(Quad::new(&self.r - other, self.s.clone()).signum())
    }
}

impl<'a> Add<&'a Quad> for &'a Quad {
    type Output = Quad;
    fn add(self, o: &Quad) -> Quad {
        Quad::new(&self.r + &o.r, &self.s + &o.s)
    }
}

impl<'a> Sub<&'a Quad> for &'a Quad {
    type Output = Quad;
    fn sub(self, o: &Quad) -> Quad {
        Quad::new(&self.r - &o.r, &self.s - &o.s)
    }
}

impl<'a> Mul<&'a Quad> for &'a Quad {
    type Output = Quad;
    fn mul(self, o: &Quad) -> Quad {
        let two = Rational::from_integer(BigInt::from(2));
        Quad::new(
            &self.r * &o.r + &self.s * &o.s * two,
            &self.r * &o.s + &self.s * &o.r,
        )
    }
}

impl<'a> Div<&'a Quad> for &'a Quad {
    type Output = Quad;
    fn div(self, o: &Quad) -> Quad {
        self * &o.recip()
    }
}

impl<'a> Mul<&'a Rational> for &'a Quad {
    type Output = Quad;
    fn mul(self, o: &Rational) -> Quad {
        Quad::new(&self.r * o, &self.s * o)
    }
}

impl<'a> Add<&'a Rational> for &'a Quad {
    type Output = Quad;
    fn add(self, o: &Rational) -> Quad {
        Quad::new(&self.r + o, self.s.clone())
    }
}

impl<'a> Sub<&'a Rational> for &'a Quad {
    type Output = Quad;
    fn sub(self, o: &Rational) -> Quad {
        Quad::new(&self.r - o, self.s.clone())
    }
}

impl Neg for &Quad {
    type Output = Quad;
    fn neg(self) -> Quad {
        Quad::new(-self.r.clone(), -self.s.clone())
    }
}

impl Neg for Quad {
    type Output = Quad;
    fn neg(self) -> Quad {
        Quad::new(-self.r, -self.s)
    }
}

macro_rules! owned_binop {
    ($tr:ident, $m:ident) => {
        impl $tr<Quad> for Quad {
            type Output = Quad;
            fn $m(self, o: Quad) -> Quad {
                (&self).$m(&o)
            }
        }
    };
}
owned_binop!(Add, add);
owned_binop!(Sub, sub);
owned_binop!(Mul, mul);
owned_binop!(Div, div);

/// Extended endpoint for open intervals that may be unbounded.
#[derive(Clone, PartialEq, Eq, Debug)]
pub enum Ext {
    NegInf,
    Fin(Quad),
    PosInf,
}

impl Ext {
    pub fn fin(q: Quad) -> Ext {
        Ext::Fin(q)
    }
}

impl PartialOrd for Ext {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Ext {
    fn cmp(&self, other: &Self) -> Ordering {
        use Ext::*;
        match (self, other) {
            (NegInf, NegInf) | (PosInf, PosInf) => Ordering::Equal,
            (NegInf, _) | (_, PosInf) => Ordering::Less,
            (_, NegInf) | (PosInf, _) => Ordering::Greater,
            (Fin(a), Fin(b)) => a.cmp(b),
        }
    }
}

/// Open interval `(lo, hi)` with extended endpoints; empty when `lo >= hi`.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct ExtIv {
    pub lo: Ext,
    pub hi: Ext,
}

impl ExtIv {
    pub fn all() -> ExtIv {
        ExtIv { lo: Ext::NegInf, hi: Ext::PosInf }
    }

    pub fn positive() -> ExtIv {
        ExtIv { lo: Ext::Fin(Quad::zero()), hi: Ext::PosInf }
    }

    pub fn negative() -> ExtIv {
        ExtIv { lo: Ext::NegInf, hi: Ext::Fin(Quad::zero()) }
    }

    pub fn empty() -> ExtIv {
        ExtIv { lo: Ext::PosInf, hi: Ext::NegInf }
    }

    pub fn is_empty(&self) -> bool {
        self.lo >= self.hi
    }

    pub fn meet(&self, o: &ExtIv) -> ExtIv {
        ExtIv {
            lo: self.lo.clone().max(o.lo.clone()),
            hi: self.hi.clone().min(o.hi.clone()),
        }
    }

    pub fn contains(&self, q: &Quad) -> bool {
        let e = Ext::Fin(q.clone());
        self.lo < e && e < self.hi
    }

    /// The rational with the smallest denominator (then numerator) inside.
    pub fn simplest(&self) -> Option<Rational> {
        if self.is_empty() {
            None
        } else {
            Some(simplest_between(&self.lo, &self.hi))
        }
    }
}

fn neg_ext(e: &Ext) -> Ext {
    match e {
        Ext::NegInf => Ext::PosInf,
        Ext::PosInf => Ext::NegInf,
        Ext::Fin(q) => Ext::Fin(-q),
    }
}

/// Simplest rational strictly between `lo < hi`, by continued-fraction descent.
pub fn simplest_between(lo: &Ext, hi: &Ext) -> Rational {
    debug_assert!(lo < hi);
    let zero = Ext::Fin(Quad::zero());
    if *lo < zero && zero < *hi {
        return Rational::zero();
    }
    if *hi <= zero {
        return -simplest_between(&neg_ext(hi), &neg_ext(lo));
    }
    // 0 <= lo < hi
    let lo_q = match lo {
        Ext::Fin(q) => q.clone(),
        _ => unreachable!("lower end is finite and nonnegative here"),
    };
    let fl = lo_q.floor();
    let next = Rational::from_integer(fl.clone() + 1);
    if Ext::Fin(Quad::from(&next)) < *hi {
        return next;
    }
    let base = Quad::from(Rational::from_integer(fl.clone()));
    let lo_frac = &lo_q - &base;
    let hi_frac = match hi {
        Ext::Fin(q) => q - &base,
        _ => unreachable!(),
    };
    let new_lo = Ext::Fin(hi_frac.recip());
    let new_hi = if lo_frac.is_zero() {
        Ext::PosInf
    } else {
        Ext::Fin(lo_frac.recip())
    };
    let inner = simplest_between(&new_lo, &new_hi);
    Rational::from_integer(fl) + inner.recip()
}

/// `{x in half : c*x < d}` for a half-line `half` not containing 0.
pub fn lin_lt(c: &Quad, d: &Quad, half: &ExtIv) -> ExtIv {
    let sol = match c.signum() {
        Ordering::Equal => {
            if Quad::zero() < *d {
                ExtIv::all()
            } else {
                ExtIv::empty()
            }
        }
        Ordering::Greater => ExtIv { lo: Ext::NegInf, hi: Ext::Fin(d / c) },
        Ordering::Less => ExtIv { lo: Ext::Fin(d / c), hi: Ext::PosInf },
    };
    sol.meet(half)
}

/// `{x in half : c*x > d}`.
pub fn lin_gt(c: &Quad, d: &Quad, half: &ExtIv) -> ExtIv {
    lin_lt(&-c, &-d, half)
}

/// Bounded open interval `(lo, hi)` with endpoints in Q(sqrt 2), read inside Q.
#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub struct Interval {
    pub lo: Quad,
    pub hi: Quad,
}

impl Interval {
    pub fn new(lo: Quad, hi: Quad) -> Interval {
        debug_assert!(lo < hi, "empty interval {lo} .. {hi}");
        Interval { lo, hi }
    }

    pub fn rational(lo: Rational, hi: Rational) -> Interval {
        Interval::new(Quad::from(lo), Quad::from(hi))
    }

    /// `(c - rho, c + rho)`.
    pub fn around(c: &Rational, rho: &Quad) -> Interval {
        let cq = Quad::from(c);
        Interval::new(&cq - rho, &cq + rho)
    }

    pub fn contains(&self, x: &Rational) -> bool {
        self.lo < *x && self.hi > *x
    }

    pub fn contains_quad(&self, x: &Quad) -> bool {
        self.lo < *x && *x < self.hi
    }

    /// Containment of the rational points; endpoints may coincide.
    pub fn subset_of(&self, o: &Interval) -> bool {
        o.lo <= self.lo && self.hi <= o.hi
    }

    pub fn meet(&self, o: &Interval) -> Option<Interval> {
        let lo = self.lo.clone().max(o.lo.clone());
        let hi = self.hi.clone().min(o.hi.clone());
        (lo < hi).then(|| Interval { lo, hi })
    }

    pub fn ext(&self) -> ExtIv {
        ExtIv { lo: Ext::Fin(self.lo.clone()), hi: Ext::Fin(self.hi.clone()) }
    }

    pub fn simplest(&self) -> Rational {
        simplest_between(&Ext::Fin(self.lo.clone()), &Ext::Fin(self.hi.clone()))
    }

    /// Both endpoints irrational: the trace on Q is closed as well as open.
    pub fn is_clopen(&self) -> bool {
        !self.lo.is_rational() && !self.hi.is_rational()
    }

    /// The closed hull misses 0, so reciprocals stay bounded.
    pub fn bounded_away_from_zero(&self) -> bool {
        self.lo.is_positive() || self.hi.is_negative()
    }

    pub fn scale(&self, q: &Quad) -> Interval {
        let a = &self.lo * q;
        let b = &self.hi * q;
        if q.is_negative() {
            Interval::new(b, a)
        } else {
            Interval::new(a, b)
        }
    }

    /// Open hull of `{u / v : u in self, v in den}`; `den` must be bounded away from 0.
    pub fn quotient_hull(&self, den: &Interval) -> Interval {
        let mut c = [
            &self.lo / &den.lo,
            &self.lo / &den.hi,
            &self.hi / &den.lo,
            &self.hi / &den.hi,
        ];
        c.sort();
        let [lo, _, _, hi] = c;
        Interval::new(lo, hi)
    }

    pub fn fmt_pair(&self) -> (String, String) {
        (self.lo.to_string(), self.hi.to_string())
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.lo, self.hi)
    }
}

impl serde::Serialize for Interval {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        (self.lo.to_string(), self.hi.to_string()).serialize(s)
    }
}

impl<'de> serde::Deserialize<'de> for Interval {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let (a, b) = <(String, String)>::deserialize(d)?;
        let lo = Quad::parse(&a).map_err(serde::de::Error::custom)?;
        let hi = Quad::parse(&b).map_err(serde::de::Error::custom)?;
        if lo >= hi {
            return Err(serde::de::Error::custom("empty interval"));
        }
        Ok(Interval { lo, hi })
    }
}

impl serde::Serialize for Quad {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> serde::Deserialize<'de> for Quad {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Quad::parse(&s).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rat::{int, rat};

    #[test]
    fn interval_quotient_hull() {
        let u = Interval::rational(int(1), int(2));
        let v = Interval::rational(int(2), int(4));
        let h = u.quotient_hull(&v);
        assert_eq!(h, Interval::rational(rat(1, 4), int(1)));
        let v = Interval::rational(int(-4), int(-2));
        assert_eq!(u.quotient_hull(&v), Interval::rational(int(-1), rat(-1, 4)));
    }

    #[test]
    fn clopen_flags() {
        let iv = Interval::around(&int(0), &Quad::sqrt2());
        assert!(iv.is_clopen());
        assert!(!Interval::rational(int(0), int(1)).is_clopen());
        assert!(!iv.bounded_away_from_zero());
    }

    fn q(r: Rational, s: Rational) -> Quad {
        Quad::new(r, s)
    }

    #[test]
    fn sign_mixed_parts() {
        // 3 - 2 sqrt2 ~ 0.17 > 0 ; 1 - sqrt2 < 0 ; -3 + 2 sqrt2 < 0
        assert!(q(int(3), int(-2)).is_positive());
        assert!(q(int(1), int(-1)).is_negative());
        assert!(q(int(-3), int(2)).is_negative());
        assert!(q(int(-1), int(1)).is_positive());
    }

    #[test]
    fn field_ops() {
        let a = q(int(1), int(1));
        let b = a.recip();
        assert_eq!(&a * &b, Quad::from(int(1)));
        // (1+sqrt2)^-1 = -1 + sqrt2
        assert_eq!(b, q(int(-1), int(1)));
    }

    #[test]
    fn floors() {
        assert_eq!(Quad::sqrt2().floor(), BigInt::from(1));
        assert_eq!((-Quad::sqrt2()).floor(), BigInt::from(-2));
        assert_eq!(q(rat(1, 2), int(3)).floor(), BigInt::from(4)); // 0.5+4.24
        assert_eq!(q(int(10), int(-7)).floor(), BigInt::from(0)); // 10-9.899
        assert_eq!(Quad::from(int(-3)).floor(), BigInt::from(-3));
    }

    #[test]
    fn simplest_examples() {
        let iv = ExtIv { lo: Ext::Fin(Quad::from(rat(1, 3))), hi: Ext::Fin(Quad::from(rat(1, 2))) };
        assert_eq!(iv.simplest().unwrap(), rat(2, 5));
        let iv = ExtIv { lo: Ext::Fin(Quad::sqrt2()), hi: Ext::Fin(Quad::from(rat(3, 2))) };
        let s = iv.simplest().unwrap();
        assert!(iv.contains(&Quad::from(&s)));
        assert_eq!(s, rat(10, 7));
        assert_eq!(ExtIv::positive().simplest().unwrap(), int(1));
        assert_eq!(ExtIv::negative().simplest().unwrap(), int(-1));
    }

    #[test]
    fn parse_display_roundtrip() {
        for x in [q(rat(1, 2), rat(-3, 4)), q(int(-2), int(5)), Quad::from(rat(-7, 3))] {
            assert_eq!(Quad::parse(&x.to_string()).unwrap(), x);
        }
    }

    #[test]
    fn linear_half_lines() {
        let pos = ExtIv::positive();
        // 2x < 1 on x>0 -> (0, 1/2)
        let s = lin_lt(&Quad::from(int(2)), &Quad::from(int(1)), &pos);
        assert_eq!(s.hi, Ext::Fin(Quad::from(rat(1, 2))));
        // -x > 1 on x>0 -> empty
        assert!(lin_gt(&Quad::from(int(-1)), &Quad::from(int(1)), &pos).is_empty());
    }
}
