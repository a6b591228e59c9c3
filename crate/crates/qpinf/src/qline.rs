//! The rational line with the clopen base of intervals whose endpoints are
//! irrational elements of Q(sqrt 2). Skeleton: `X_0 = Q`, every later set empty.

use crate::presentation::{unpair, Closure, Constructive, SpacePresentation, SpaceId};
use crate::projective::{cell_radius, random_rational, MAX_HALVINGS};
use crate::quad::{Interval, Quad};
use crate::rat::{self, pow2_neg, Rational};
use crate::Rng;
use num_traits::Zero;
use rand::Rng as _;
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use std::fmt;

#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Debug, Serialize, Deserialize)]
pub struct QPoint(#[serde(with = "rat::serde_rat")] pub Rational);

impl fmt::Display for QPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl From<Rational> for QPoint {
    fn from(q: Rational) -> Self {
        QPoint(q)
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct QLine;

pub fn qline_presentation() -> QLine {
    QLine
}

fn height(q: &Rational) -> u64 {
    rat::height(q).try_into().unwrap_or(u64::MAX)
}

/// Rationals of height exactly `h`, ascending.
pub fn rationals_of_height(h: u64) -> Vec<Rational> {
    rat::small_rationals(h).into_iter().filter(|q| height(q) == h || (h == 1 && q.is_zero())).collect()
}

impl SpacePresentation for QLine {
    type Point = QPoint;
    type Open = Interval;

    fn id(&self) -> SpaceId {
        SpaceId::Qline
    }

    fn points(&self) -> Box<dyn Iterator<Item = QPoint> + '_> {
        Box::new((1u64..).flat_map(rationals_of_height).map(QPoint))
    }

    fn point_cmp(&self, a: &QPoint, b: &QPoint) -> Ordering {
        let ha = height(&a.0).max(1);
        let hb = height(&b.0).max(1);
        ha.cmp(&hb).then_with(|| a.0.cmp(&b.0))
    }

    fn base(&self, i: usize) -> Interval {
        let (a, k) = unpair(i);
        let c = self.points().nth(a).unwrap();
        self.nbhd(&c, k)
    }

    fn member(&self, p: &QPoint, o: &Interval) -> bool {
        o.contains(&p.0)
    }

    fn level(&self, _: &QPoint) -> usize {
        0
    }

    fn top_level(&self) -> Option<usize> {
        Some(0)
    }

    fn nbhd(&self, p: &QPoint, k: usize) -> Interval {
        Interval::around(&p.0, &cell_radius(k))
    }

    fn meets(&self, a: &Interval, b: &Interval) -> Option<QPoint> {
        a.meet(b).map(|i| QPoint(i.simplest()))
    }

    fn tail_level(&self, _: &Interval) -> Option<usize> {
        None
    }

    fn density_witness(&self, _: &Interval, _: &QPoint, _: &Interval) -> Option<QPoint> {
        None
    }

    fn sample_point(&self, rng: &mut Rng, min_level: usize) -> Option<QPoint> {
        (min_level == 0).then(|| QPoint(random_rational(rng, 9)))
    }

    fn sample_open(&self, rng: &mut Rng) -> Interval {
        let c = random_rational(rng, 9);
        self.nbhd(&QPoint(c), rng.gen_range(0..5))
    }

    /// Exact: the closure of an interval adds its rational endpoints.
    fn in_closure(&self, p: &QPoint, o: &Interval, depth: usize) -> Closure<QPoint, Interval> {
        if self.member(p, o) {
            return Closure::Member;
        }
        let at_end = [&o.lo, &o.hi].iter().any(|e| e.as_rational() == Some(&p.0));
        if at_end {
            return match self.meets(&self.nbhd(p, depth), o) {
                Some(w) => Closure::Near { depth, witness: w },
                None => Closure::Unknown,
            };
        }
        for k in 0..=MAX_HALVINGS {
            let nb = self.nbhd(p, k);
            if self.meets(&nb, o).is_none() {
                return Closure::Separated { nbhd: nb };
            }
        }
        Closure::Unknown
    }
}

impl Constructive for QLine {
    fn cell(&self, p: &QPoint, r: usize, l: usize) -> Option<Interval> {
        (l >= 1).then(|| self.nbhd(p, r))
    }

    fn cell_min_level(&self, _: &QPoint, _: usize) -> usize {
        1
    }

    fn is_cell(&self, o: &Interval, l: usize) -> bool {
        l >= 1 && o.is_clopen()
    }

    fn max_level_in(&self, _: &Interval) -> usize {
        0
    }

    fn contains_open(&self, outer: &Interval, inner: &Interval) -> bool {
        inner.subset_of(outer)
    }

    fn drop_to_level(&self, p: &QPoint, lvl: usize, w: &[Interval]) -> Option<QPoint> {
        (lvl == 0 && w.iter().all(|o| self.member(p, o))).then(|| p.clone())
    }

    fn attach_point(&self, _: &QPoint, _: &Interval, _: &[Interval]) -> Option<QPoint> {
        None
    }

    fn crowd(&self, p: &QPoint, w: &[Interval], avoid: &[QPoint]) -> Option<QPoint> {
        (0..=MAX_HALVINGS)
            .map(|t| QPoint(&p.0 + pow2_neg(t)))
            .find(|q| w.iter().all(|o| self.member(q, o)) && !avoid.contains(q))
    }
}

/// Interval with endpoints `lo + eps*sqrt2`, handy for tests and examples.
pub fn shifted_interval(lo: Rational, lo_s: Rational, hi: Rational, hi_s: Rational) -> Interval {
    Interval::new(Quad::new(lo, lo_s), Quad::new(hi, hi_s))
}
