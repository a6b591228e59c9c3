//! Singular G-spaces and their infinite projective spaces.
//!
//! A model is a countable space `X` with an action of a group `G` and one
//! fixed point `s`. Its projective space is the set of finitely supported
//! sequences (entries other than `s` finitely many, not all `s`) modulo the
//! coordinatewise action, skeleton `Y_n` = classes whose first `n` entries are `s`.
//! Points are stored as the representative whose first non-`s` entry is a
//! chosen orbit base.

use crate::presentation::{unpair, Constructive, SpaceId, SpacePresentation, Verdict, NEARBY_SCAN};
use crate::projective::{self as pm, BasicOpen, ProjPoint, MAX_HALVINGS};
use crate::qline::QPoint;
use crate::quad::{lin_gt, lin_lt, ExtIv, Interval, Quad};
use crate::rat::{self, pow2_neg, Rational};
use crate::Rng;
use num_traits::{One, Signed, Zero};
use rand::Rng as _;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt::{self, Debug, Display};
use std::hash::Hash;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SingularError {
    #[error("axiom ({axiom}) fails: {detail}")]
    AxiomFailure { axiom: String, detail: String },
    #[error("unsupported model {0}; builtins are Q-mult, Q-pos, Zbar-add")]
    UnsupportedModel(String),
}

/// A space with a group action, checked against the singular axioms.
pub trait SingularModel {
    type Elem: Clone + Eq + Ord + Hash + Debug + Display + Serialize + DeserializeOwned;
    type Grp: Clone + Eq + Debug + Display;
    type Set: Clone + Eq + Hash + Debug + Display + Serialize + DeserializeOwned;

    fn name(&self) -> &'static str;
    /// The declared fixed point `s`.
    fn fixed(&self) -> Self::Elem;
    fn identity(&self) -> Self::Grp;
    fn compose(&self, a: &Self::Grp, b: &Self::Grp) -> Self::Grp;
    fn inverse(&self, g: &Self::Grp) -> Self::Grp;
    fn act(&self, g: &Self::Grp, x: &Self::Elem) -> Self::Elem;
    /// The `g` with `g x = y`, if any.
    fn solve(&self, x: &Self::Elem, y: &Self::Elem) -> Option<Self::Grp>;
    /// `g` lies in the `k`-th basic neighbourhood of the identity.
    fn near_identity(&self, g: &Self::Grp, k: usize) -> bool;
    fn set_member(&self, x: &Self::Elem, s: &Self::Set) -> bool;
    /// Decreasing base at `x`.
    fn nbhd(&self, x: &Self::Elem, k: usize) -> Self::Set;
    /// `cl(inner) ⊆ outer`.
    fn closure_within(&self, inner: &Self::Set, outer: &Self::Set) -> bool;
    /// Finite, increasing in `h`, exhausting `X`.
    fn elements(&self, h: u64) -> Vec<Self::Elem>;
    fn set_samples(&self, s: &Self::Set, rng: &mut Rng, n: usize) -> Vec<Self::Elem>;
    fn random_elem(&self, rng: &mut Rng) -> Self::Elem;
    fn random_group(&self, rng: &mut Rng) -> Self::Grp;
    /// `g_j x -> s` for every `x`.
    fn approach_fixed(&self, j: usize) -> Self::Grp;
}

/// What the projective construction needs beyond the axioms: orbit bases,
/// clopen-ish cells, and regions of group elements with decidable emptiness.
pub trait Carrier: SingularModel + Clone + Debug {
    type Region: Clone + Debug;

    /// One base point per orbit of `X \ {s}`.
    fn bases(&self) -> Vec<Self::Elem>;
    /// `(b, g)` with `x = g b`, or `None` for `s`.
    fn to_base(&self, x: &Self::Elem) -> Option<(Self::Elem, Self::Grp)>;
    /// Neighbourhood of radius about `2^-r` whose closure adds no points.
    fn cell_set(&self, x: &Self::Elem, r: usize) -> Self::Set;
    fn set_is_clopen(&self, s: &Self::Set) -> bool;
    fn set_meet(&self, a: &Self::Set, b: &Self::Set) -> Option<Self::Set>;
    fn set_subset(&self, inner: &Self::Set, outer: &Self::Set) -> bool;
    fn set_act(&self, g: &Self::Grp, s: &Self::Set) -> Self::Set;
    fn set_pick(&self, s: &Self::Set) -> Self::Elem;
    fn random_set(&self, rng: &mut Rng) -> Self::Set;
    fn whole(&self) -> Self::Region;
    /// `{g : g b ∈ s}`.
    fn g_sending_into(&self, b: &Self::Elem, s: &Self::Set) -> Self::Region;
    /// `{g : g^-1 b ∈ s}`.
    fn g_pulling_into(&self, b: &Self::Elem, s: &Self::Set) -> Self::Region;
    /// `{g : a ∩ g b ≠ ∅}`.
    fn g_meeting(&self, a: &Self::Set, b: &Self::Set) -> Self::Region;
    fn region_meet(&self, a: &Self::Region, b: &Self::Region) -> Self::Region;
    fn region_pick(&self, r: &Self::Region) -> Option<Self::Grp>;
    /// A set holding `g^-1 u` for all `u ∈ num` and all `g` with `g b ∈ den`;
    /// `None` unless `den` lies in the orbit of `b`.
    fn rebase_set(&self, den: &Self::Set, b: &Self::Elem, num: &Self::Set) -> Option<Self::Set>;
    /// As `rebase_set` for the single point `x`.
    fn rebase_point(&self, den: &Self::Set, b: &Self::Elem, x: &Self::Elem) -> Option<Self::Set>;
    fn elem_height(&self, x: &Self::Elem) -> u64;
}

// ---------------------------------------------------------------------------
// Rational models

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RationalModel {
    /// Act by positive rationals only; orbits of `Q \ {0}` are the two signs.
    pub positive_only: bool,
}

pub fn q_mult() -> RationalModel {
    RationalModel { positive_only: false }
}

pub fn q_pos() -> RationalModel {
    RationalModel { positive_only: true }
}

fn q(x: Rational) -> QPoint {
    QPoint(x)
}

fn sample_interval(s: &Interval, rng: &mut Rng, n: usize) -> Vec<QPoint> {
    let mid = s.simplest();
    let mut out = vec![q(mid.clone())];
    let m = Quad::from(&mid);
    for half in [Interval::new(s.lo.clone(), m.clone()), Interval::new(m, s.hi.clone())] {
        out.push(q(half.simplest()));
    }
    let mut tries = 0;
    while out.len() < n && tries < 50 * n {
        tries += 1;
        let u = rat::rat(rng.gen_range(-64..=64), 64);
        let x = &mid + u * pow2_neg(rng.gen_range(0..12));
        if s.contains(&x) {
            out.push(q(x));
        }
    }
    out
}

impl SingularModel for RationalModel {
    type Elem = QPoint;
    type Grp = QPoint;
    type Set = Interval;

    fn name(&self) -> &'static str {
        if self.positive_only {
            "Q-pos"
        } else {
            "Q-mult"
        }
    }

    fn fixed(&self) -> QPoint {
        q(Rational::zero())
    }

    fn identity(&self) -> QPoint {
        q(Rational::one())
    }

    fn compose(&self, a: &QPoint, b: &QPoint) -> QPoint {
        q(&a.0 * &b.0)
    }

    fn inverse(&self, g: &QPoint) -> QPoint {
        q(g.0.recip())
    }

    fn act(&self, g: &QPoint, x: &QPoint) -> QPoint {
        q(&g.0 * &x.0)
    }

    fn solve(&self, x: &QPoint, y: &QPoint) -> Option<QPoint> {
        if x.0.is_zero() || y.0.is_zero() {
            return None;
        }
        let g = &y.0 / &x.0;
        (!self.positive_only || g.is_positive()).then(|| q(g))
    }

    fn near_identity(&self, g: &QPoint, k: usize) -> bool {
        (&g.0 - Rational::one()).abs() < pow2_neg(k)
    }

    fn set_member(&self, x: &QPoint, s: &Interval) -> bool {
        s.contains(&x.0)
    }

    fn nbhd(&self, x: &QPoint, k: usize) -> Interval {
        let r = pow2_neg(k);
        Interval::rational(&x.0 - &r, &x.0 + &r)
    }

    fn closure_within(&self, inner: &Interval, outer: &Interval) -> bool {
        outer.lo < inner.lo && inner.hi < outer.hi
    }

    fn elements(&self, h: u64) -> Vec<QPoint> {
        rat::small_rationals(h).into_iter().map(q).collect()
    }

    fn set_samples(&self, s: &Interval, rng: &mut Rng, n: usize) -> Vec<QPoint> {
        sample_interval(s, rng, n)
    }

    fn random_elem(&self, rng: &mut Rng) -> QPoint {
        q(pm::random_rational(rng, 9))
    }

    fn random_group(&self, rng: &mut Rng) -> QPoint {
        loop {
            let g = pm::random_rational(rng, 9);
            if !g.is_zero() {
                return q(if self.positive_only { g.abs() } else { g });
            }
        }
    }

    fn approach_fixed(&self, j: usize) -> QPoint {
        q(pow2_neg(j))
    }
}

impl RationalModel {
    fn halves(&self) -> Vec<ExtIv> {
        if self.positive_only {
            vec![ExtIv::positive()]
        } else {
            vec![ExtIv::positive(), ExtIv::negative()]
        }
    }

    fn per_half(&self, f: impl Fn(&ExtIv, bool) -> ExtIv) -> Vec<ExtIv> {
        self.halves()
            .iter()
            .map(|h| f(h, *h == ExtIv::negative()))
            .filter(|iv| !iv.is_empty())
            .collect()
    }

    /// `den` read as values of the scalar `g` (via `g b ∈ den`), when it stays
    /// away from 0 and inside the allowed sign.
    fn scalar_range(&self, den: &Interval, b: &QPoint) -> Option<Interval> {
        let d = den.scale(&Quad::from(&b.0));
        let ok = d.bounded_away_from_zero() && (!self.positive_only || d.lo.is_positive());
        ok.then_some(d)
    }
}

impl Carrier for RationalModel {
    type Region = Vec<ExtIv>;

    fn bases(&self) -> Vec<QPoint> {
        if self.positive_only {
            vec![q(Rational::one()), q(-Rational::one())]
        } else {
            vec![q(Rational::one())]
        }
    }

    fn to_base(&self, x: &QPoint) -> Option<(QPoint, QPoint)> {
        if x.0.is_zero() {
            None
        } else if self.positive_only {
            let b = if x.0.is_positive() { Rational::one() } else { -Rational::one() };
            Some((q(b), q(x.0.abs())))
        } else {
            Some((q(Rational::one()), x.clone()))
        }
    }

    fn cell_set(&self, x: &QPoint, r: usize) -> Interval {
        Interval::around(&x.0, &pm::cell_radius(r))
    }

    fn set_is_clopen(&self, s: &Interval) -> bool {
        s.is_clopen()
    }

    fn set_meet(&self, a: &Interval, b: &Interval) -> Option<Interval> {
        a.meet(b)
    }

    fn set_subset(&self, inner: &Interval, outer: &Interval) -> bool {
        inner.subset_of(outer)
    }

    fn set_act(&self, g: &QPoint, s: &Interval) -> Interval {
        s.scale(&Quad::from(&g.0))
    }

    fn set_pick(&self, s: &Interval) -> QPoint {
        q(s.simplest())
    }

    fn random_set(&self, rng: &mut Rng) -> Interval {
        let a = pm::random_rational(rng, 6);
        let w = rat::rat(rng.gen_range(1..=12), rng.gen_range(1..=6));
        Interval::rational(a.clone(), a + w)
    }

    fn whole(&self) -> Vec<ExtIv> {
        self.halves()
    }

    fn g_sending_into(&self, b: &QPoint, s: &Interval) -> Vec<ExtIv> {
        let t = s.scale(&Quad::from(&b.0)).ext();
        self.per_half(|h, _| h.meet(&t))
    }

    fn g_pulling_into(&self, b: &QPoint, s: &Interval) -> Vec<ExtIv> {
        let bq = Quad::from(&b.0);
        self.per_half(|h, neg| {
            if neg {
                lin_gt(&s.lo, &bq, h).meet(&lin_lt(&s.hi, &bq, h))
            } else {
                lin_lt(&s.lo, &bq, h).meet(&lin_gt(&s.hi, &bq, h))
            }
        })
    }

    fn g_meeting(&self, a: &Interval, b: &Interval) -> Vec<ExtIv> {
        self.per_half(|h, neg| {
            let (low_end, high_end) = if neg { (&b.hi, &b.lo) } else { (&b.lo, &b.hi) };
            lin_lt(low_end, &a.hi, h).meet(&lin_gt(high_end, &a.lo, h))
        })
    }

    fn region_meet(&self, a: &Vec<ExtIv>, b: &Vec<ExtIv>) -> Vec<ExtIv> {
        let mut out = Vec::new();
        for x in a {
            for y in b {
                let m = x.meet(y);
                if !m.is_empty() {
                    out.push(m);
                }
            }
        }
        out
    }

    fn region_pick(&self, r: &Vec<ExtIv>) -> Option<QPoint> {
        r.iter().find_map(|iv| iv.simplest()).map(q)
    }

    fn rebase_set(&self, den: &Interval, b: &QPoint, num: &Interval) -> Option<Interval> {
        let d = self.scalar_range(den, b)?;
        Some(num.quotient_hull(&d))
    }

    fn rebase_point(&self, den: &Interval, b: &QPoint, x: &QPoint) -> Option<Interval> {
        let d = self.scalar_range(den, b)?;
        let (u, v) = (d.hi.recip(), d.lo.recip());
        let recips = Interval::new(u.clone().min(v.clone()), u.max(v));
        Some(recips.scale(&Quad::from(&x.0)))
    }

    fn elem_height(&self, x: &QPoint) -> u64 {
        rat::height(&x.0).try_into().unwrap_or(u64::MAX)
    }
}

/// The rationals with the trivial group: not singular, every point is fixed.
#[derive(Clone, Copy, Debug)]
pub struct TrivialModel;

impl SingularModel for TrivialModel {
    type Elem = QPoint;
    type Grp = QPoint;
    type Set = Interval;

    fn name(&self) -> &'static str {
        "Q-trivial"
    }

    fn fixed(&self) -> QPoint {
        q(Rational::zero())
    }

    fn identity(&self) -> QPoint {
        q(Rational::one())
    }

    fn compose(&self, _: &QPoint, _: &QPoint) -> QPoint {
        self.identity()
    }

    fn inverse(&self, _: &QPoint) -> QPoint {
        self.identity()
    }

    fn act(&self, _: &QPoint, x: &QPoint) -> QPoint {
        x.clone()
    }

    fn solve(&self, x: &QPoint, y: &QPoint) -> Option<QPoint> {
        (x == y).then(|| self.identity())
    }

    fn near_identity(&self, _: &QPoint, _: usize) -> bool {
        true
    }

    fn set_member(&self, x: &QPoint, s: &Interval) -> bool {
        q_mult().set_member(x, s)
    }

    fn nbhd(&self, x: &QPoint, k: usize) -> Interval {
        q_mult().nbhd(x, k)
    }

    fn closure_within(&self, inner: &Interval, outer: &Interval) -> bool {
        q_mult().closure_within(inner, outer)
    }

    fn elements(&self, h: u64) -> Vec<QPoint> {
        q_mult().elements(h)
    }

    fn set_samples(&self, s: &Interval, rng: &mut Rng, n: usize) -> Vec<QPoint> {
        sample_interval(s, rng, n)
    }

    fn random_elem(&self, rng: &mut Rng) -> QPoint {
        q_mult().random_elem(rng)
    }

    fn random_group(&self, _: &mut Rng) -> QPoint {
        self.identity()
    }

    fn approach_fixed(&self, _: usize) -> QPoint {
        self.identity()
    }
}

// ---------------------------------------------------------------------------
// Z ∪ {+inf} under translation

/// A point of `Z ∪ {+inf}`.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Debug)]
pub enum Zb {
    Int(i64),
    Inf,
}

impl Display for Zb {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Zb::Int(a) => write!(f, "{a}"),
            Zb::Inf => write!(f, "inf"),
        }
    }
}

impl Serialize for Zb {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Zb {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Zb, D::Error> {
        let s = String::deserialize(d)?;
        if s == "inf" {
            return Ok(Zb::Inf);
        }
        s.parse().map(Zb::Int).map_err(serde::de::Error::custom)
    }
}

/// Basic open sets of `Z ∪ {+inf}`: a singleton, or `[n, +inf]`.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ZSet {
    Single(i64),
    Tail(i64),
}

impl Display for ZSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ZSet::Single(a) => write!(f, "{{{a}}}"),
            ZSet::Tail(n) => write!(f, "[{n}, inf]"),
        }
    }
}

/// Inclusive integer range, either end open-ended.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ZRange {
    pub lo: Option<i64>,
    pub hi: Option<i64>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ZbarModel;

pub fn zbar() -> ZbarModel {
    ZbarModel
}

impl SingularModel for ZbarModel {
    type Elem = Zb;
    type Grp = i64;
    type Set = ZSet;

    fn name(&self) -> &'static str {
        "Zbar-add"
    }

    fn fixed(&self) -> Zb {
        Zb::Inf
    }

    fn identity(&self) -> i64 {
        0
    }

    fn compose(&self, a: &i64, b: &i64) -> i64 {
        a + b
    }

    fn inverse(&self, g: &i64) -> i64 {
        -g
    }

    fn act(&self, g: &i64, x: &Zb) -> Zb {
        match x {
            Zb::Int(a) => Zb::Int(a + g),
            Zb::Inf => Zb::Inf,
        }
    }

    fn solve(&self, x: &Zb, y: &Zb) -> Option<i64> {
        match (x, y) {
            (Zb::Int(a), Zb::Int(b)) => Some(b - a),
            _ => None,
        }
    }

    fn near_identity(&self, g: &i64, _: usize) -> bool {
        *g == 0
    }

    fn set_member(&self, x: &Zb, s: &ZSet) -> bool {
        match (s, x) {
            (ZSet::Single(a), Zb::Int(b)) => a == b,
            (ZSet::Single(_), Zb::Inf) => false,
            (ZSet::Tail(n), Zb::Int(b)) => b >= n,
            (ZSet::Tail(_), Zb::Inf) => true,
        }
    }

    fn nbhd(&self, x: &Zb, k: usize) -> ZSet {
        match x {
            Zb::Int(a) => ZSet::Single(*a),
            Zb::Inf => ZSet::Tail(k as i64),
        }
    }

    fn closure_within(&self, inner: &ZSet, outer: &ZSet) -> bool {
        self.set_subset(inner, outer)
    }

    fn elements(&self, h: u64) -> Vec<Zb> {
        let h = h as i64;
        (1 - h..h).map(Zb::Int).chain([Zb::Inf]).collect()
    }

    fn set_samples(&self, s: &ZSet, rng: &mut Rng, n: usize) -> Vec<Zb> {
        match s {
            ZSet::Single(a) => vec![Zb::Int(*a)],
            ZSet::Tail(m) => {
                let mut v = vec![Zb::Inf, Zb::Int(*m)];
                while v.len() < n {
                    v.push(Zb::Int(m + rng.gen_range(0..1000)));
                }
                v
            }
        }
    }

    fn random_elem(&self, rng: &mut Rng) -> Zb {
        if rng.gen_ratio(1, 5) {
            Zb::Inf
        } else {
            Zb::Int(rng.gen_range(-9..=9))
        }
    }

    fn random_group(&self, rng: &mut Rng) -> i64 {
        rng.gen_range(-9..=9)
    }

    fn approach_fixed(&self, j: usize) -> i64 {
        j as i64
    }
}

impl Carrier for ZbarModel {
    type Region = ZRange;

    fn bases(&self) -> Vec<Zb> {
        vec![Zb::Int(0)]
    }

    fn to_base(&self, x: &Zb) -> Option<(Zb, i64)> {
        match x {
            Zb::Int(a) => Some((Zb::Int(0), *a)),
            Zb::Inf => None,
        }
    }

    fn cell_set(&self, x: &Zb, r: usize) -> ZSet {
        self.nbhd(x, r)
    }

    fn set_is_clopen(&self, _: &ZSet) -> bool {
        true
    }

    fn set_meet(&self, a: &ZSet, b: &ZSet) -> Option<ZSet> {
        use ZSet::*;
        match (*a, *b) {
            (Single(x), Single(y)) => (x == y).then_some(Single(x)),
            (Single(x), Tail(n)) | (Tail(n), Single(x)) => (x >= n).then_some(Single(x)),
            (Tail(m), Tail(n)) => Some(Tail(m.max(n))),
        }
    }

    fn set_subset(&self, inner: &ZSet, outer: &ZSet) -> bool {
        use ZSet::*;
        match (*inner, *outer) {
            (Single(x), Single(y)) => x == y,
            (Single(x), Tail(n)) => x >= n,
            (Tail(_), Single(_)) => false,
            (Tail(m), Tail(n)) => m >= n,
        }
    }

    fn set_act(&self, g: &i64, s: &ZSet) -> ZSet {
        match s {
            ZSet::Single(a) => ZSet::Single(a + g),
            ZSet::Tail(n) => ZSet::Tail(n + g),
        }
    }

    fn set_pick(&self, s: &ZSet) -> Zb {
        match s {
            ZSet::Single(a) | ZSet::Tail(a) => Zb::Int(*a),
        }
    }

    fn random_set(&self, rng: &mut Rng) -> ZSet {
        let a = rng.gen_range(-6..=6);
        if rng.gen_bool(0.5) {
            ZSet::Single(a)
        } else {
            ZSet::Tail(a)
        }
    }

    fn whole(&self) -> ZRange {
        ZRange { lo: None, hi: None }
    }

    fn g_sending_into(&self, b: &Zb, s: &ZSet) -> ZRange {
        let Zb::Int(b) = b else { return ZRange { lo: Some(1), hi: Some(0) } };
        match s {
            ZSet::Single(a) => ZRange { lo: Some(a - b), hi: Some(a - b) },
            ZSet::Tail(n) => ZRange { lo: Some(n - b), hi: None },
        }
    }

    fn g_pulling_into(&self, b: &Zb, s: &ZSet) -> ZRange {
        let Zb::Int(b) = b else { return ZRange { lo: Some(1), hi: Some(0) } };
        match s {
            ZSet::Single(a) => ZRange { lo: Some(b - a), hi: Some(b - a) },
            ZSet::Tail(n) => ZRange { lo: None, hi: Some(b - n) },
        }
    }

    fn g_meeting(&self, a: &ZSet, b: &ZSet) -> ZRange {
        use ZSet::*;
        match (*a, *b) {
            (Single(x), Single(y)) => ZRange { lo: Some(x - y), hi: Some(x - y) },
            (Single(x), Tail(n)) => ZRange { lo: None, hi: Some(x - n) },
            (Tail(n), Single(y)) => ZRange { lo: Some(n - y), hi: None },
            (Tail(_), Tail(_)) => self.whole(),
        }
    }

    fn region_meet(&self, a: &ZRange, b: &ZRange) -> ZRange {
        let lo = match (a.lo, b.lo) {
            (Some(x), Some(y)) => Some(x.max(y)),
            (x, y) => x.or(y),
        };
        let hi = match (a.hi, b.hi) {
            (Some(x), Some(y)) => Some(x.min(y)),
            (x, y) => x.or(y),
        };
        ZRange { lo, hi }
    }

    fn region_pick(&self, r: &ZRange) -> Option<i64> {
        if let (Some(l), Some(h)) = (r.lo, r.hi) {
            if l > h {
                return None;
            }
        }
        Some(match (r.lo, r.hi) {
            (Some(l), _) if l > 0 => l,
            (_, Some(h)) if h < 0 => h,
            _ => 0,
        })
    }

    fn rebase_set(&self, den: &ZSet, b: &Zb, num: &ZSet) -> Option<ZSet> {
        match (den, b) {
            (ZSet::Single(d), Zb::Int(b)) => Some(self.set_act(&-(d - b), num)),
            _ => None,
        }
    }

    fn rebase_point(&self, den: &ZSet, b: &Zb, x: &Zb) -> Option<ZSet> {
        match (den, b, x) {
            (ZSet::Single(d), Zb::Int(b), Zb::Int(x)) => Some(ZSet::Single(x - (d - b))),
            _ => None,
        }
    }

    fn elem_height(&self, x: &Zb) -> u64 {
        match x {
            Zb::Int(a) => a.unsigned_abs() + 1,
            Zb::Inf => 0,
        }
    }
}

// ---------------------------------------------------------------------------
// The projective space of a carrier

/// Orbit representative: first non-`s` entry is a base, trailing `s` trimmed.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Debug, Serialize, Deserialize)]
#[serde(bound = "E: Serialize + DeserializeOwned")]
pub struct GPoint<E> {
    pub coords: Vec<E>,
    pub level: usize,
}

impl<E: Display> Display for GPoint<E> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, x) in self.coords.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{x}")?;
        }
        write!(f, ")")
    }
}

/// Image of a slice cylinder: classes whose representative, rebased so the
/// `chart` entry is `base`, has entry `i` in `constraints[i]`.
#[derive(Clone, PartialEq, Eq, Hash, Debug, Serialize, Deserialize)]
#[serde(bound = "E: Serialize + DeserializeOwned, S: Serialize + DeserializeOwned")]
pub struct GOpen<E, S> {
    pub chart: usize,
    pub base: E,
    #[serde(deserialize_with = "rat::index_keys::deserialize")]
    pub constraints: BTreeMap<usize, S>,
}

impl<E: Display, S: Display> Display for GOpen<E, S> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{chart {} = {}", self.chart, self.base)?;
        for (i, s) in &self.constraints {
            write!(f, ", {i} in {s}")?;
        }
        write!(f, "}}")
    }
}

impl<E, S> GOpen<E, S> {
    pub fn support_max(&self) -> usize {
        self.constraints.keys().copied().chain([self.chart]).max().unwrap()
    }
}

pub type PointOf<M> = GPoint<<M as SingularModel>::Elem>;
pub type OpenOf<M> = GOpen<<M as SingularModel>::Elem, <M as SingularModel>::Set>;

#[derive(Clone, Debug)]
pub struct Projective<M: Carrier> {
    pub model: M,
}

impl<M: Carrier> Projective<M> {
    pub fn new(model: M) -> Self {
        Projective { model }
    }

    fn coord(&self, p: &PointOf<M>, i: usize) -> M::Elem {
        p.coords.get(i).cloned().unwrap_or_else(|| self.model.fixed())
    }

    /// Normal form of a finitely supported sequence; `None` if every entry is `s`.
    pub fn normalize(&self, raw: &[M::Elem]) -> Option<PointOf<M>> {
        let s = self.model.fixed();
        let level = raw.iter().position(|x| *x != s)?;
        let (_, g) = self.model.to_base(&raw[level])?;
        let gi = self.model.inverse(&g);
        let mut coords: Vec<M::Elem> = raw.iter().map(|x| self.model.act(&gi, x)).collect();
        while coords.last() == Some(&s) {
            coords.pop();
        }
        Some(GPoint { coords, level })
    }

    /// The representative of `p` rebased so its entry at `chart` is `base`.
    fn rebased(&self, p: &PointOf<M>, chart: usize, base: &M::Elem) -> Option<Vec<M::Elem>> {
        let (b, g) = self.model.to_base(&self.coord(p, chart))?;
        if b != *base {
            return None;
        }
        let gi = self.model.inverse(&g);
        Some(p.coords.iter().map(|x| self.model.act(&gi, x)).collect())
    }

    pub fn member(&self, p: &PointOf<M>, o: &OpenOf<M>) -> bool {
        let Some(v) = self.rebased(p, o.chart, &o.base) else {
            return false;
        };
        let s = self.model.fixed();
        o.constraints
            .iter()
            .all(|(i, set)| self.model.set_member(v.get(*i).unwrap_or(&s), set))
    }

    pub fn sample_member(&self, o: &OpenOf<M>) -> PointOf<M> {
        let n = o.support_max() + 1;
        let mut v = vec![self.model.fixed(); n];
        v[o.chart] = o.base.clone();
        let s = self.model.fixed();
        for (i, set) in &o.constraints {
            // keep `s` where allowed so the sample sits at level `chart`
            v[*i] = if self.model.set_member(&s, set) { s.clone() } else { self.model.set_pick(set) };
        }
        self.normalize(&v).expect("chart entry is a base")
    }

    pub fn meets(&self, a: &OpenOf<M>, b: &OpenOf<M>) -> Option<PointOf<M>> {
        let m = &self.model;
        let n = a.support_max().max(b.support_max()) + 1;
        let mut v = vec![m.fixed(); n];
        if a.chart == b.chart {
            if a.base != b.base {
                return None;
            }
            v[a.chart] = a.base.clone();
            for i in 0..n {
                let set = match (a.constraints.get(&i), b.constraints.get(&i)) {
                    (Some(x), Some(y)) => m.set_meet(x, y)?,
                    (Some(x), None) | (None, Some(x)) => x.clone(),
                    (None, None) => continue,
                };
                v[i] = m.set_pick(&set);
            }
            return self.normalize(&v);
        }
        let mut region = m.whole();
        if let Some(s) = a.constraints.get(&b.chart) {
            region = m.region_meet(&region, &m.g_sending_into(&b.base, s));
        }
        if let Some(s) = b.constraints.get(&a.chart) {
            region = m.region_meet(&region, &m.g_pulling_into(&a.base, s));
        }
        for (i, x) in &a.constraints {
            if let Some(y) = b.constraints.get(i) {
                region = m.region_meet(&region, &m.g_meeting(x, y));
            }
        }
        let g = m.region_pick(&region)?;
        v[a.chart] = a.base.clone();
        v[b.chart] = m.act(&g, &b.base);
        for i in 0..n {
            if i == a.chart || i == b.chart {
                continue;
            }
            let set = match (a.constraints.get(&i), b.constraints.get(&i)) {
                (Some(x), Some(y)) => m.set_meet(x, &m.set_act(&g, y)).expect("feasible group element"),
                (Some(x), None) => x.clone(),
                (None, Some(y)) => m.set_act(&g, y),
                (None, None) => continue,
            };
            v[i] = m.set_pick(&set);
        }
        let w = self.normalize(&v)?;
        debug_assert!(self.member(&w, a) && self.member(&w, b));
        Some(w)
    }

    pub fn nbhd_base(&self, p: &PointOf<M>, k: usize) -> OpenOf<M> {
        let top = k.max(p.coords.len());
        let mut o = GOpen { chart: p.level, base: self.coord(p, p.level), constraints: BTreeMap::new() };
        for i in 0..=top {
            if i != p.level {
                o.constraints.insert(i, self.model.nbhd(&self.coord(p, i), k));
            }
        }
        o
    }

    pub fn tail_level(&self, o: &OpenOf<M>) -> usize {
        o.support_max() + 1
    }

    /// `target` with its entries below the tail level replaced by those of
    /// `sample` pushed toward `s` by `approach_fixed(j)`, for the least `j`
    /// landing in every open of `w`.
    fn graft(&self, sample: &PointOf<M>, tail: usize, target: &PointOf<M>, w: &[&OpenOf<M>]) -> Option<PointOf<M>> {
        let n = tail.max(target.coords.len());
        for j in 0..=MAX_HALVINGS {
            let g = self.model.approach_fixed(j);
            let v: Vec<M::Elem> = (0..n)
                .map(|i| if i < tail { self.model.act(&g, &self.coord(sample, i)) } else { self.coord(target, i) })
                .collect();
            let x = self.normalize(&v)?;
            if w.iter().all(|o| self.member(&x, o)) {
                return Some(x);
            }
        }
        None
    }

    pub fn density_witness(&self, o: &OpenOf<M>, target: &PointOf<M>, w: &OpenOf<M>) -> Option<PointOf<M>> {
        let tail = self.tail_level(o);
        if target.level < tail || !self.member(target, w) {
            return None;
        }
        self.graft(&self.sample_member(o), tail, target, &[o, w])
    }

    pub fn contains_open(&self, outer: &OpenOf<M>, inner: &OpenOf<M>) -> bool {
        let m = &self.model;
        if inner.chart == outer.chart {
            return inner.base == outer.base
                && outer
                    .constraints
                    .iter()
                    .all(|(i, s)| inner.constraints.get(i).is_some_and(|t| m.set_subset(t, s)));
        }
        let Some(den) = inner.constraints.get(&outer.chart) else {
            return false;
        };
        outer.constraints.iter().all(|(i, s)| {
            let range = if *i == inner.chart {
                m.rebase_point(den, &outer.base, &inner.base)
            } else {
                inner.constraints.get(i).and_then(|t| m.rebase_set(den, &outer.base, t))
            };
            range.is_some_and(|r| m.set_subset(&r, s))
        }) && m.rebase_point(den, &outer.base, &inner.base).is_some()
    }

    pub fn cell(&self, p: &PointOf<M>, r: usize, l: usize) -> Option<OpenOf<M>> {
        if l <= p.level {
            return None;
        }
        let mut o = GOpen { chart: p.level, base: self.coord(p, p.level), constraints: BTreeMap::new() };
        for i in 0..l {
            if i != p.level {
                o.constraints.insert(i, self.model.cell_set(&self.coord(p, i), r));
            }
        }
        Some(o)
    }

    pub fn cell_level(&self, o: &OpenOf<M>) -> Option<usize> {
        let l = o.support_max() + 1;
        let full = o.constraints.len() + 1 == l;
        let clopen = o.constraints.values().all(|s| self.model.set_is_clopen(s));
        (full && clopen).then_some(l)
    }

    pub fn points_of_height(&self, h: u64) -> Vec<PointOf<M>> {
        let m = &self.model;
        let vals = m.elements(h);
        let s = m.fixed();
        let bases = m.bases();
        let mut out = Vec::new();
        for n in 1..=h as usize {
            let mut digits = vec![0usize; n];
            loop {
                let v: Vec<M::Elem> = digits.iter().map(|&d| vals[d].clone()).collect();
                let first = v.iter().position(|x| *x != s);
                let ok = first.is_some_and(|f| bases.contains(&v[f]))
                    && v.last() != Some(&s)
                    && v.iter().map(|x| m.elem_height(x)).max().unwrap_or(0).max(n as u64) == h;
                if ok {
                    out.push(GPoint { level: first.unwrap(), coords: v });
                }
                let Some(pos) = digits.iter().position(|&d| d + 1 < vals.len()) else {
                    break;
                };
                digits[pos] += 1;
                for d in &mut digits[..pos] {
                    *d = 0;
                }
            }
        }
        out.sort();
        out
    }

    fn height(&self, p: &PointOf<M>) -> u64 {
        let h = p.coords.iter().map(|x| self.model.elem_height(x)).max().unwrap_or(0);
        h.max(p.coords.len() as u64)
    }
}

impl<M: Carrier> SpacePresentation for Projective<M> {
    type Point = PointOf<M>;
    type Open = OpenOf<M>;

    fn id(&self) -> SpaceId {
        SpaceId::Model(self.model.name().to_string())
    }

    fn points(&self) -> Box<dyn Iterator<Item = PointOf<M>> + '_> {
        Box::new((1u64..).flat_map(|h| self.points_of_height(h)))
    }

    fn point_cmp(&self, a: &PointOf<M>, b: &PointOf<M>) -> Ordering {
        self.height(a).cmp(&self.height(b)).then_with(|| a.cmp(b))
    }

    fn base(&self, i: usize) -> OpenOf<M> {
        let (a, k) = unpair(i);
        self.nbhd_base(&self.points().nth(a).unwrap(), k)
    }

    fn member(&self, p: &PointOf<M>, o: &OpenOf<M>) -> bool {
        Projective::member(self, p, o)
    }

    fn level(&self, p: &PointOf<M>) -> usize {
        p.level
    }

    fn top_level(&self) -> Option<usize> {
        None
    }

    fn nbhd(&self, p: &PointOf<M>, k: usize) -> OpenOf<M> {
        self.nbhd_base(p, k)
    }

    fn meets(&self, a: &OpenOf<M>, b: &OpenOf<M>) -> Option<PointOf<M>> {
        Projective::meets(self, a, b)
    }

    fn tail_level(&self, o: &OpenOf<M>) -> Option<usize> {
        Some(Projective::tail_level(self, o))
    }

    fn density_witness(&self, o: &OpenOf<M>, target: &PointOf<M>, w: &OpenOf<M>) -> Option<PointOf<M>> {
        Projective::density_witness(self, o, target, w)
    }

    fn sample_point(&self, rng: &mut Rng, min_level: usize) -> Option<PointOf<M>> {
        let bases = self.model.bases();
        let mut v = vec![self.model.fixed(); min_level];
        v.push(bases[rng.gen_range(0..bases.len())].clone());
        for _ in 0..rng.gen_range(0..4) {
            v.push(self.model.random_elem(rng));
        }
        self.normalize(&v)
    }

    /// Enumeration hits first, then `p` with one fixed coordinate replaced by
    /// a base point pushed toward `s`; the enumeration alone stays at small
    /// heights.
    fn nearby(&self, p: &PointOf<M>, w: &OpenOf<M>) -> Vec<PointOf<M>> {
        let m = &self.model;
        let s = m.fixed();
        let mut out: Vec<PointOf<M>> =
            self.points().take(NEARBY_SCAN).filter(|q| q != p && self.member(q, w)).take(8).collect();
        let top = p.coords.len().max(w.support_max() + 1);
        for i in (0..=top).filter(|&i| self.coord(p, i) == s) {
            for b in m.bases() {
                let hit = (0..=MAX_HALVINGS).find_map(|j| {
                    let mut v: Vec<M::Elem> = (0..=top).map(|t| self.coord(p, t)).collect();
                    v[i] = m.act(&m.approach_fixed(j), &b);
                    self.normalize(&v).filter(|q| q != p && self.member(q, w))
                });
                out.extend(hit);
            }
        }
        out
    }

    fn sample_open(&self, rng: &mut Rng) -> OpenOf<M> {
        let bases = self.model.bases();
        let chart = rng.gen_range(0..4);
        let mut o = GOpen { chart, base: bases[rng.gen_range(0..bases.len())].clone(), constraints: BTreeMap::new() };
        for _ in 0..rng.gen_range(0..4) {
            let i = rng.gen_range(0..4);
            if i != chart {
                o.constraints.insert(i, self.model.random_set(rng));
            }
        }
        o
    }
}

impl<M: Carrier> Constructive for Projective<M> {
    fn cell(&self, p: &PointOf<M>, r: usize, l: usize) -> Option<OpenOf<M>> {
        Projective::cell(self, p, r, l)
    }

    fn cell_min_level(&self, p: &PointOf<M>, r: usize) -> usize {
        r.max(p.coords.len()) + 1
    }

    fn is_cell(&self, o: &OpenOf<M>, l: usize) -> bool {
        self.cell_level(o) == Some(l)
    }

    fn max_level_in(&self, o: &OpenOf<M>) -> usize {
        o.chart
    }

    fn contains_open(&self, outer: &OpenOf<M>, inner: &OpenOf<M>) -> bool {
        Projective::contains_open(self, outer, inner)
    }

    fn drop_to_level(&self, p: &PointOf<M>, lvl: usize, w: &[OpenOf<M>]) -> Option<PointOf<M>> {
        if p.level == lvl {
            return w.iter().all(|o| self.member(p, o)).then(|| p.clone());
        }
        if p.level < lvl {
            return None;
        }
        let b = self.model.bases()[0].clone();
        for j in 0..=MAX_HALVINGS {
            let mut v = p.coords.clone();
            v[lvl] = self.model.act(&self.model.approach_fixed(j), &b);
            let x = self.normalize(&v)?;
            if w.iter().all(|o| self.member(&x, o)) {
                return Some(x);
            }
        }
        None
    }

    fn attach_point(&self, a: &PointOf<M>, c: &OpenOf<M>, w: &[OpenOf<M>]) -> Option<PointOf<M>> {
        let tail = Projective::tail_level(self, c);
        let s = self.sample_member(c);
        if a.level < tail || s.level != c.chart {
            return None;
        }
        let mut all: Vec<&OpenOf<M>> = w.iter().collect();
        all.push(c);
        self.graft(&s, tail, a, &all)
    }

    fn crowd(&self, p: &PointOf<M>, w: &[OpenOf<M>], avoid: &[PointOf<M>]) -> Option<PointOf<M>> {
        let b = self.model.bases()[0].clone();
        for t in 0..=MAX_HALVINGS {
            let mut v = p.coords.clone();
            v.push(self.model.act(&self.model.approach_fixed(t), &b));
            let x = self.normalize(&v)?;
            if w.iter().all(|o| self.member(&x, o)) && !avoid.contains(&x) {
                return Some(x);
            }
        }
        None
    }
}

/// Rational model points and opens as plain QP^inf ones (for cross-checks).
pub fn to_qpinf_point(p: &GPoint<QPoint>) -> ProjPoint {
    let v: Vec<Rational> = p.coords.iter().map(|x| x.0.clone()).collect();
    pm::normalize(&v).expect("nonzero")
}

pub fn from_qpinf_open(o: &BasicOpen) -> GOpen<QPoint, Interval> {
    GOpen { chart: o.chart, base: q(Rational::one()), constraints: o.constraints.clone() }
}

pub fn from_qpinf_point(p: &ProjPoint) -> GPoint<QPoint> {
    GPoint { coords: p.coords().iter().cloned().map(q).collect(), level: p.level() }
}

// ---------------------------------------------------------------------------
// Axiom checks

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AxiomBudget {
    pub samples: usize,
    pub depth: usize,
    pub height: u64,
}

impl Default for AxiomBudget {
    fn default() -> Self {
        AxiomBudget { samples: 40, depth: 6, height: 4 }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AxiomRow {
    pub axiom: String,
    pub verdict: Verdict,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AxiomReport {
    pub model: String,
    pub rows: Vec<AxiomRow>,
}

impl AxiomReport {
    pub fn verdict(&self) -> Verdict {
        Verdict::all(self.rows.iter().map(|r| r.verdict))
    }

    pub fn first_failure(&self) -> Option<&AxiomRow> {
        self.rows.iter().find(|r| r.verdict != Verdict::Pass)
    }
}

fn row(axiom: &str, failure: Option<String>, ok: String) -> AxiomRow {
    match failure {
        Some(d) => AxiomRow { axiom: axiom.into(), verdict: Verdict::Fail, detail: d },
        None => AxiomRow { axiom: axiom.into(), verdict: Verdict::Pass, detail: ok },
    }
}

/// Sampled checks of the five singular axioms, plus the action laws.
/// Quantifier order for (v): for each sampled `x`, `y` a neighbourhood `U` of
/// `y` is fixed first, then each sampled `W` gets its own `V`.
pub fn verify_singular_axioms<M: SingularModel>(model: &M, budget: AxiomBudget, rng: &mut Rng) -> AxiomReport {
    let s = model.fixed();
    let n = budget.samples;
    let points: Vec<M::Elem> = model.elements(budget.height).into_iter().filter(|x| *x != s).collect();
    let groups: Vec<M::Grp> = (0..n).map(|_| model.random_group(rng)).collect();
    let mut rows = Vec::new();

    // action laws
    let mut bad = None;
    'laws: for x in points.iter().take(n) {
        if model.act(&model.identity(), x) != *x {
            bad = Some(format!("identity moves {x}"));
            break;
        }
        for w in groups.windows(2) {
            let gh = model.compose(&w[0], &w[1]);
            if model.act(&gh, x) != model.act(&w[0], &model.act(&w[1], x)) {
                bad = Some(format!("({} {}) {x} differs from {} ({} {x})", w[0], w[1], w[0], w[1]));
                break 'laws;
            }
        }
    }
    rows.push(row("action", bad, format!("{} points, {} group elements", points.len().min(n), groups.len())));

    // (i) regular and infinite
    let mut bad = None;
    if model.elements(budget.height + 2).len() <= model.elements(budget.height).len() {
        bad = Some("enumeration stops growing".to_string());
    }
    'reg: for x in model.elements(budget.height).iter().take(n) {
        for k in 0..budget.depth {
            let outer = model.nbhd(x, k);
            if !(k..k + budget.depth).any(|j| model.closure_within(&model.nbhd(x, j), &outer)) {
                bad = Some(format!("no neighbourhood of {x} has closure inside {outer}"));
                break 'reg;
            }
        }
    }
    rows.push(row("i", bad, "closed neighbourhoods shrink inside every sampled neighbourhood".into()));

    // (ii) s is the only fixed point
    let mut bad = groups.iter().find(|g| model.act(g, &s) != s).map(|g| format!("{g} moves {s}"));
    if bad.is_none() {
        bad = points
            .iter()
            .find(|x| groups.iter().all(|g| model.act(g, x) == **x))
            .map(|x| format!("{x} is fixed by every sampled group element"));
    }
    rows.push(row("ii", bad, format!("{s} is fixed; every other sampled point moves")));

    // (iii) orbit maps injective and open
    let mut bad = None;
    'inj: for x in points.iter().take(n) {
        for (i, g) in groups.iter().enumerate() {
            for h in &groups[i + 1..] {
                if g != h && model.act(g, x) == model.act(h, x) {
                    bad = Some(format!("{g} and {h} agree on {x}"));
                    break 'inj;
                }
            }
        }
        for k in 0..budget.depth.min(4) {
            // some neighbourhood of x is the image of group elements near the identity
            let found = (0..4 * budget.depth).any(|j| {
                let nb = model.nbhd(x, j);
                model.set_samples(&nb, rng, 8).iter().all(|y| {
                    model.solve(x, y).is_some_and(|g| model.near_identity(&g, k))
                })
            });
            if !found {
                bad = Some(format!("the orbit map of {x} is not open at level {k}"));
                break 'inj;
            }
        }
    }
    rows.push(row("iii", bad, "orbit maps injective on samples, images of identity neighbourhoods open".into()));

    // (iv) s is in the closure of every orbit
    let mut bad = None;
    'orb: for x in points.iter().take(n) {
        for k in 0..budget.depth {
            let nb = model.nbhd(&s, k);
            if !(0..=MAX_HALVINGS).any(|j| model.set_member(&model.act(&model.approach_fixed(j), x), &nb)) {
                bad = Some(format!("the orbit of {x} misses {nb}"));
                break 'orb;
            }
        }
    }
    rows.push(row("iv", bad, "every sampled orbit enters every sampled neighbourhood of the fixed point".into()));

    // (v) uniformity
    let mut bad = None;
    let ys: Vec<M::Elem> = model.elements(budget.height).into_iter().take(n).collect();
    'unif: for x in points.iter().take(n / 4 + 1) {
        for y in ys.iter().take(n / 4 + 1) {
            let u_set = model.nbhd(y, budget.depth);
            let us = model.set_samples(&u_set, rng, 6);
            for kw in 0..budget.depth {
                let w = model.nbhd(&s, kw);
                let found = (0..8 * budget.depth + 64).any(|kv| {
                    let v = model.nbhd(&s, kv);
                    model.set_samples(&v, rng, 6).iter().all(|vv| match model.solve(x, vv) {
                        Some(g) => us.iter().all(|u| model.set_member(&model.act(&g, u), &w)),
                        // vv is not in the orbit of x: no constraint
                        None => true,
                    })
                });
                if !found {
                    bad = Some(format!("x = {x}, y = {y}: no neighbourhood of the fixed point works for {w}"));
                    break 'unif;
                }
            }
        }
    }
    rows.push(row("v", bad, "for sampled x, y, W a neighbourhood V was found".into()));

    AxiomReport { model: model.name().to_string(), rows }
}

/// The projective space of a model that passes the axiom checks.
pub fn build_projective_presentation<M: Carrier>(
    model: M,
    budget: AxiomBudget,
    rng: &mut Rng,
) -> Result<Projective<M>, SingularError> {
    let rep = verify_singular_axioms(&model, budget, rng);
    if let Some(r) = rep.first_failure() {
        return Err(SingularError::AxiomFailure { axiom: r.axiom.clone(), detail: r.detail.clone() });
    }
    Ok(Projective::new(model))
}

/// Builtins by name.
pub fn builtin_model(name: &str) -> Result<BuiltinModel, SingularError> {
    match name {
        "Q-mult" => Ok(BuiltinModel::QMult),
        "Q-pos" => Ok(BuiltinModel::QPos),
        "Zbar-add" => Ok(BuiltinModel::Zbar),
        other => Err(SingularError::UnsupportedModel(other.to_string())),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BuiltinModel {
    QMult,
    QPos,
    Zbar,
}

/// Sampled evidence for the quotient preconditions: closed orbits, skeleton
/// tails inside closures of opens, and neighbourhoods whose closure stays in
/// `U ∪ Y_n`.
pub fn check_quotient_preconditions<M: Carrier>(pres: &Projective<M>, budget: AxiomBudget, rng: &mut Rng) -> AxiomReport {
    let n = budget.samples;
    let mut rows = Vec::new();

    let mut bad = None;
    for _ in 0..n {
        let (x, y) = (pres.sample_point(rng, 0).unwrap(), pres.sample_point(rng, 0).unwrap());
        if x == y {
            continue;
        }
        if !(0..=budget.depth + 8).any(|k| !pres.member(&x, &pres.nbhd_base(&y, k))) {
            bad = Some(format!("no neighbourhood of {y} misses the orbit {x}"));
            break;
        }
    }
    rows.push(row("closed-orbits", bad, "separating neighbourhoods for sampled distinct classes".into()));

    let mut bad = None;
    for _ in 0..n {
        let o = pres.sample_open(rng);
        let t = pres.sample_point(rng, Projective::tail_level(pres, &o)).unwrap();
        let w = pres.nbhd_base(&t, budget.depth);
        if pres.density_witness(&o, &t, &w).is_none() {
            bad = Some(format!("no witness in {o} near {t}"));
            break;
        }
    }
    rows.push(row("tails", bad, "every sampled open has a certified skeleton tail".into()));

    let mut bad = None;
    'reg: for _ in 0..n {
        let x = pres.sample_point(rng, 0).unwrap();
        let lvl = rng.gen_range(x.level + 1..x.level + 4);
        let k = rng.gen_range(0..4);
        let u = pres.nbhd_base(&x, k);
        let l = lvl.max(Constructive::cell_min_level(pres, &x, k));
        let v = Projective::cell(pres, &x, k, l).unwrap();
        if !pres.contains_open(&u, &v) {
            bad = Some(format!("{v} is not inside {u}"));
            break;
        }
        for _ in 0..8 {
            let z = pres.sample_point(rng, 0).unwrap();
            if z.level >= lvl || pres.member(&z, &u) {
                continue;
            }
            if !pres.in_closure(&z, &v, budget.depth + 16).is_out() {
                bad = Some(format!("{z} outside {u} is not separated from {v}"));
                break 'reg;
            }
        }
    }
    rows.push(row("regular", bad, "closures of shrunken cells stay within U and the skeleton".into()));

    AxiomReport { model: pres.model.name().to_string(), rows }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::projective::QPInf;
    use crate::rat::int;
    use rand::SeedableRng;

    fn rng() -> Rng {
        Rng::seed_from_u64(11)
    }

    #[test]
    fn builtin_models_are_singular() {
        for rep in [
            verify_singular_axioms(&q_mult(), AxiomBudget::default(), &mut rng()),
            verify_singular_axioms(&q_pos(), AxiomBudget::default(), &mut rng()),
            verify_singular_axioms(&zbar(), AxiomBudget::default(), &mut rng()),
        ] {
            assert_eq!(rep.verdict(), Verdict::Pass, "{rep:?}");
        }
    }

    #[test]
    fn trivial_action_is_rejected() {
        let rep = verify_singular_axioms(&TrivialModel, AxiomBudget::default(), &mut rng());
        let failed: Vec<&str> =
            rep.rows.iter().filter(|r| r.verdict == Verdict::Fail).map(|r| r.axiom.as_str()).collect();
        assert!(failed.contains(&"iii") && failed.contains(&"iv"), "{failed:?}");
        assert!(matches!(builtin_model("R-mult"), Err(SingularError::UnsupportedModel(_))));
    }

    #[test]
    fn rational_model_matches_qpinf() {
        let g = Projective::new(q_mult());
        let mut r = rng();
        for _ in 0..200 {
            let p = pm::random_point(&mut r, 5, 5);
            let o = pm::random_open(&mut r, 4, 4);
            let (gp, go) = (from_qpinf_point(&p), from_qpinf_open(&o));
            assert_eq!(g.normalize(&gp.coords), Some(gp.clone()));
            assert_eq!(g.member(&gp, &go), pm::member(&p, &o), "{p} {o}");
            let o2 = pm::random_open(&mut r, 4, 4);
            let go2 = from_qpinf_open(&o2);
            let m = g.meets(&go, &go2);
            assert_eq!(m.is_some(), pm::meets(&o, &o2).is_some(), "{o} {o2}");
            if let Some(w) = m {
                let w = to_qpinf_point(&w);
                assert!(pm::member(&w, &o) && pm::member(&w, &o2));
            }
            let nb = pm::nbhd_base(&p, 2);
            assert_eq!(g.contains_open(&go, &from_qpinf_open(&nb)), pm::contains_open(&o, &nb));
        }
        let _ = QPInf;
    }

    /// Brute-force orbit oracle: the representative is the unique translate
    /// (resp. positive multiple) with the prescribed first entry.
    #[test]
    fn representatives_are_unique() {
        let z = Projective::new(zbar());
        let raw = [Zb::Inf, Zb::Int(5), Zb::Int(-2), Zb::Inf, Zb::Int(7)];
        let p = z.normalize(&raw).unwrap();
        assert_eq!(p.coords, vec![Zb::Inf, Zb::Int(0), Zb::Int(-7), Zb::Inf, Zb::Int(2)]);
        for g in -20..20 {
            let moved: Vec<Zb> = raw.iter().map(|x| zbar().act(&g, x)).collect();
            assert_eq!(z.normalize(&moved).unwrap(), p);
            let reps: Vec<_> = (-60..60)
                .map(|h| moved.iter().map(|x| zbar().act(&h, x)).collect::<Vec<_>>())
                .filter(|v| v[1] == Zb::Int(0))
                .collect();
            assert_eq!(reps, vec![p.coords.clone()]);
        }
        let qp = Projective::new(q_pos());
        let raw = [QPoint(int(0)), QPoint(int(-3)), QPoint(int(6))];
        let p = qp.normalize(&raw).unwrap();
        assert_eq!(p.coords, vec![QPoint(int(0)), QPoint(int(-1)), QPoint(int(2))]);
        let raw2 = [QPoint(int(0)), QPoint(int(3)), QPoint(int(6))];
        assert_ne!(qp.normalize(&raw2).unwrap(), p);
    }

    #[test]
    fn zbar_opens_behave() {
        let z = Projective::new(zbar());
        let p = z.normalize(&[Zb::Int(3), Zb::Int(1), Zb::Inf, Zb::Int(4)]).unwrap();
        let nb = z.nbhd_base(&p, 2);
        assert!(z.member(&p, &nb));
        let c = z.cell(&p, 2, Constructive::cell_min_level(&z, &p, 2)).unwrap();
        assert!(z.contains_open(&nb, &c) && z.is_cell(&c, 5));
        let deep = z.normalize(&[Zb::Inf, Zb::Inf, Zb::Inf, Zb::Inf, Zb::Inf, Zb::Int(9)]).unwrap();
        let w = z.density_witness(&c, &deep, &z.nbhd_base(&deep, 3)).unwrap();
        assert!(z.member(&w, &c) && z.member(&w, &z.nbhd_base(&deep, 3)));
        let a = z.attach_point(&deep, &c, &[]).unwrap();
        assert_eq!(a.level, 0);
        let d = z.drop_to_level(&deep, 2, &[z.nbhd_base(&deep, 3)]).unwrap();
        assert_eq!(d.level, 2);
        let other = GOpen { chart: 1, base: Zb::Int(0), constraints: BTreeMap::from([(0, ZSet::Single(2))]) };
        let m = z.meets(&nb, &other).unwrap();
        assert!(z.member(&m, &nb) && z.member(&m, &other));
        let tails = GOpen { chart: 1, base: Zb::Int(0), constraints: BTreeMap::from([(0, ZSet::Tail(4))]) };
        assert!(z.meets(&nb, &tails).is_none());
    }

    #[test]
    fn zbar_enumeration() {
        let z = Projective::new(zbar());
        let first: Vec<String> = z.points().take(4).map(|p| p.to_string()).collect();
        assert_eq!(first, ["(0)", "(0, -1)", "(0, 0)", "(0, 1)"]);
        let pts: Vec<_> = z.points().take(300).collect();
        assert!(pts.windows(2).all(|w| z.point_cmp(&w[0], &w[1]) == Ordering::Less));
        for p in &pts {
            assert_eq!(z.normalize(&p.coords).as_ref(), Some(p));
        }
    }

    #[test]
    fn quotient_preconditions_hold() {
        for rep in [
            check_quotient_preconditions(&Projective::new(q_mult()), AxiomBudget::default(), &mut rng()),
            check_quotient_preconditions(&Projective::new(zbar()), AxiomBudget::default(), &mut rng()),
            check_quotient_preconditions(&Projective::new(q_pos()), AxiomBudget::default(), &mut rng()),
        ] {
            assert_eq!(rep.verdict(), Verdict::Pass, "{rep:?}");
        }
    }
}
