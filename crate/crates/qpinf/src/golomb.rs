//! Golomb and Kirch spaces: the positive integers with arithmetic
//! progressions `a + bN` (`gcd(a, b) = 1`) as a base; Kirch keeps only
//! squarefree moduli.

use crate::presentation::{Closure, SpacePresentation, SpaceId};
use crate::Rng;
use num_integer::Integer;
use rand::Rng as _;
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use std::fmt;

/// `{n >= 1 : n ≡ a (mod b)}`, stored with `1 <= a <= b`.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Debug, Serialize, Deserialize)]
pub struct Progression {
    pub a: u64,
    pub b: u64,
}

impl Progression {
    pub fn new(a: u64, b: u64) -> Progression {
        assert!(b >= 1);
        let r = a % b;
        Progression { a: if r == 0 { b } else { r }, b }
    }

    pub fn contains(&self, n: u64) -> bool {
        n >= 1 && n % self.b == self.a % self.b
    }

    pub fn coprime(&self) -> bool {
        self.a.gcd(&self.b) == 1
    }
}

impl fmt::Display for Progression {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}+{}N", self.a, self.b)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Flavor {
    Golomb,
    Kirch,
}

#[derive(Clone, Copy, Debug)]
pub struct Arithmetic {
    pub flavor: Flavor,
}

pub fn golomb_presentation() -> Arithmetic {
    Arithmetic { flavor: Flavor::Golomb }
}

pub fn kirch_presentation() -> Arithmetic {
    Arithmetic { flavor: Flavor::Kirch }
}

pub fn is_squarefree(mut n: u64) -> bool {
    let mut p = 2;
    while p * p <= n {
        if n % (p * p) == 0 {
            return false;
        }
        if n % p == 0 {
            n /= p;
        }
        p += 1;
    }
    true
}

pub fn prime_divisors(mut n: u64) -> Vec<u64> {
    let mut out = Vec::new();
    let mut p = 2;
    while p * p <= n {
        if n % p == 0 {
            out.push(p);
            while n % p == 0 {
                n /= p;
            }
        }
        p += 1;
    }
    if n > 1 {
        out.push(n);
    }
    out
}

/// Product of the distinct primes dividing `n`.
pub fn radical(n: u64) -> u64 {
    prime_divisors(n).into_iter().product()
}

/// Least `x >= 1` with `x ≡ a (mod m)` and `x ≡ b (mod n)`, if any.
pub fn crt(a: u64, m: u64, b: u64, n: u64) -> Option<u64> {
    let (a, m, b, n) = (a as i128, m as i128, b as i128, n as i128);
    let e = m.extended_gcd(&n);
    let g = e.gcd;
    if (b - a).rem_euclid(g) != 0 {
        return None;
    }
    let l = m / g * n;
    let t = ((b - a) / g % (n / g) * (e.x % (n / g))).rem_euclid(n / g);
    let x = (a + m * t).rem_euclid(l);
    let x = if x == 0 { l } else { x };
    u64::try_from(x).ok()
}

/// Largest neighbourhood index; `lcm(1..=41)` still fits in 64 bits.
pub const NBHD_CAP: usize = 40;

impl Arithmetic {
    fn modulus_ok(&self, b: u64) -> bool {
        self.flavor == Flavor::Golomb || is_squarefree(b)
    }

    /// Largest divisor of `b` coprime to `n`; a base neighbourhood of `n`
    /// meets `a + bN` exactly when it does modulo this divisor.
    pub fn coprime_part(b: u64, n: u64) -> u64 {
        let mut d = b;
        let mut g = d.gcd(&n);
        while g > 1 {
            d /= g;
            g = d.gcd(&n);
        }
        d
    }

    /// The modulus deciding closure at `n`: the part of `b` coprime to `n`,
    /// reduced to its radical for Kirch.
    pub fn separating_modulus(&self, b: u64, n: u64) -> u64 {
        let d = Self::coprime_part(b, n);
        match self.flavor {
            Flavor::Golomb => d,
            Flavor::Kirch => radical(d),
        }
    }

    /// Exact: `n ∈ cl(a + bN)` iff `n ≡ a` modulo the separating modulus.
    pub fn closure_contains(&self, n: u64, u: &Progression) -> bool {
        let d = self.separating_modulus(u.b, n);
        n % d == u.a % d
    }
}

impl SpacePresentation for Arithmetic {
    type Point = u64;
    type Open = Progression;

    fn id(&self) -> SpaceId {
        match self.flavor {
            Flavor::Golomb => SpaceId::Golomb,
            Flavor::Kirch => SpaceId::Kirch,
        }
    }

    fn points(&self) -> Box<dyn Iterator<Item = u64> + '_> {
        Box::new(1u64..)
    }

    fn point_cmp(&self, a: &u64, b: &u64) -> Ordering {
        a.cmp(b)
    }

    /// Base progressions listed by modulus, then residue.
    fn base(&self, i: usize) -> Progression {
        let mut seen = 0usize;
        for b in 1u64.. {
            if !self.modulus_ok(b) {
                continue;
            }
            for a in 1..=b {
                if a.gcd(&b) == 1 {
                    if seen == i {
                        return Progression::new(a, b);
                    }
                    seen += 1;
                }
            }
        }
        unreachable!()
    }

    fn member(&self, p: &u64, o: &Progression) -> bool {
        o.contains(*p)
    }

    fn level(&self, _: &u64) -> usize {
        0
    }

    fn top_level(&self) -> Option<usize> {
        Some(0)
    }

    /// `n + dN` with `d` the part of `lcm(1..=k+1)` coprime to `n` (its radical
    /// for Kirch). Every modulus coprime to `n` divides `d` once `k` is large;
    /// `k` is capped so that `d` fits.
    fn nbhd(&self, p: &u64, k: usize) -> Progression {
        let l = (1..=(k.min(NBHD_CAP) as u64 + 1)).fold(1u64, |acc, i| acc.lcm(&i));
        Progression::new(*p, self.separating_modulus(l, *p))
    }

    fn meets(&self, a: &Progression, b: &Progression) -> Option<u64> {
        crt(a.a % a.b, a.b, b.a % b.b, b.b)
    }

    fn tail_level(&self, _: &Progression) -> Option<usize> {
        None
    }

    fn density_witness(&self, _: &Progression, _: &u64, _: &Progression) -> Option<u64> {
        None
    }

    fn sample_point(&self, rng: &mut Rng, min_level: usize) -> Option<u64> {
        (min_level == 0).then(|| rng.gen_range(1..=1000))
    }

    fn sample_open(&self, rng: &mut Rng) -> Progression {
        loop {
            let b = rng.gen_range(1..=30);
            let a = rng.gen_range(1..=b);
            if a.gcd(&b) == 1 && self.modulus_ok(b) {
                return Progression::new(a, b);
            }
        }
    }

    /// Multiples of the radical of the modulus: all lie in the closure.
    fn closure_probes(&self, o: &Progression, _: &mut Rng) -> Vec<u64> {
        let r = radical(o.b);
        (1..=8).map(|j| r * j).collect()
    }

    /// Decided by the coprime-part criterion; certificates come from CRT.
    fn in_closure(&self, p: &u64, o: &Progression, depth: usize) -> Closure<u64, Progression> {
        if self.member(p, o) {
            return Closure::Member;
        }
        if self.closure_contains(*p, o) {
            let nb = self.nbhd(p, depth);
            return match self.meets(&nb, o) {
                Some(w) => Closure::Near { depth, witness: w },
                None => Closure::Unknown,
            };
        }
        let d = self.separating_modulus(o.b, *p);
        Closure::Separated { nbhd: Progression::new(*p, d) }
    }
}

/// Outcome of a closure campaign for one progression and one multiple `t`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GolombCertificate {
    pub progression: Progression,
    pub t: u64,
    pub horizon: u64,
    /// Number of neighbourhoods `t + dN` (`gcd(t, d) = 1`, `d <= horizon`) checked.
    pub checked: u64,
    /// Witness for the largest modulus checked.
    pub last_witness: Option<(u64, u64)>,
    /// First modulus whose neighbourhood misses the progression.
    pub refutation: Option<u64>,
}

impl GolombCertificate {
    pub fn holds(&self) -> bool {
        self.refutation.is_none()
    }
}

/// Checks that every base neighbourhood of `t` with modulus up to `horizon`
/// meets `u`; when `t` is a multiple of the radical of `u.b` this always holds,
/// since then `gcd(d, u.b) = 1`.
pub fn golomb_closure_contains(u: &Progression, t: u64, horizon: u64) -> GolombCertificate {
    let mut cert = GolombCertificate {
        progression: *u,
        t,
        horizon,
        checked: 0,
        last_witness: None,
        refutation: None,
    };
    for d in 1..=horizon {
        if t.gcd(&d) != 1 {
            continue;
        }
        cert.checked += 1;
        match crt(u.a % u.b, u.b, t % d, d) {
            Some(w) => cert.last_witness = Some((d, w)),
            None => {
                cert.refutation = Some(d);
                break;
            }
        }
    }
    cert
}

/// Re-check one neighbourhood of a certificate.
pub fn check_witness(u: &Progression, t: u64, d: u64, w: u64) -> bool {
    u.contains(w) && Progression::new(t, d).contains(w) && t.gcd(&d) == 1
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn crt_examples() {
        assert_eq!(crt(1, 2, 2, 3), Some(5));
        assert_eq!(crt(1, 4, 3, 4), None);
        assert_eq!(crt(0, 1, 0, 1), Some(1));
        assert_eq!(crt(3, 6, 1, 4), Some(9));
    }

    #[test]
    fn golomb_examples() {
        let g = golomb_presentation();
        assert!(g.member(&7, &Progression::new(1, 2)));
        assert_eq!(g.meets(&Progression::new(1, 2), &Progression::new(2, 3)), Some(5));
        assert_eq!(g.meets(&Progression::new(1, 4), &Progression::new(3, 4)), None);
    }

    /// Brute-force oracle: scan all neighbourhoods `p + dN` up to a modulus bound.
    fn closure_by_scan(p: u64, u: &Progression, dmax: u64) -> bool {
        (1..=dmax).filter(|d| d.gcd(&p) == 1).all(|d| crt(u.a, u.b, p % d, d).is_some())
    }

    #[test]
    fn closure_criterion_matches_scan() {
        let g = golomb_presentation();
        for b in 1..=12u64 {
            for a in 1..=b {
                if a.gcd(&b) != 1 {
                    continue;
                }
                let u = Progression::new(a, b);
                for p in 1..=40 {
                    assert_eq!(g.closure_contains(p, &u), closure_by_scan(p, &u, 60), "{p} {u}");
                }
            }
        }
    }

    #[test]
    fn closure_certificates_check() {
        let g = golomb_presentation();
        let k = kirch_presentation();
        for (p, u) in [(2, Progression::new(1, 2)), (3, Progression::new(1, 2)), (6, Progression::new(1, 4)), (5, Progression::new(2, 9))] {
            for s in [&g, &k] {
                let c = s.in_closure(&p, &u, 3);
                assert!(!matches!(c, Closure::Unknown));
                s.check_closure(&p, &u, &c).unwrap();
            }
        }
    }

    #[test]
    fn closure_campaign_examples() {
        assert!(golomb_closure_contains(&Progression::new(1, 2), 2, 500).holds());
        assert!(golomb_closure_contains(&Progression::new(3, 4), 2, 500).holds());
        // 3 is not a multiple of 2, and 3 + 4N misses 1 + 4N
        let c = golomb_closure_contains(&Progression::new(1, 4), 3, 500);
        assert_eq!(c.refutation, Some(4));
    }

    #[test]
    fn kirch_base_is_squarefree() {
        let k = kirch_presentation();
        for i in 0..200 {
            let u = k.base(i);
            assert!(is_squarefree(u.b) && u.coprime());
        }
        for n in [1u64, 6, 35] {
            for j in 0..4 {
                assert!(is_squarefree(k.nbhd(&n, j).b));
            }
        }
    }
}
