//! The space QP^inf: finitely supported nonzero rational sequences modulo
//! nonzero scalars, with the quotient of the product topology.
//!
//! Points are stored in normal form (first nonzero entry 1, trailing zeros
//! trimmed). Opens are chart cylinders: a chart index that must be nonzero,
//! and open intervals for the other coordinates after dividing by the chart
//! coordinate.

use crate::presentation::{unpair, Constructive, SpaceId, SpacePresentation};
use crate::quad::{lin_gt, lin_lt, Ext, ExtIv, Interval, Quad};
use crate::rat::{self, pow2_neg, Rational};
use num_traits::{One, Signed, Zero};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ModelError {
    #[error("every entry is zero")]
    AllZero,
    #[error("no witness: {0}")]
    NoWitness(String),
    #[error("level {level} is not below bound {bound}")]
    LevelOutOfRange { level: usize, bound: usize },
    #[error("construction failed: {0}")]
    ConstructionFailure(String),
}

#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Debug)]
pub struct ProjPoint {
    coords: Vec<Rational>,
    level: usize,
}

impl ProjPoint {
    pub fn coords(&self) -> &[Rational] {
        &self.coords
    }

    pub fn level(&self) -> usize {
        self.level
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    /// Coordinate `i` of the normal form, 0 past the end.
    pub fn coord(&self, i: usize) -> Rational {
        self.coords.get(i).cloned().unwrap_or_else(Rational::zero)
    }

    /// The class of the `k`-th unit vector.
    pub fn unit(k: usize) -> ProjPoint {
        let mut v = vec![Rational::zero(); k + 1];
        v[k] = Rational::one();
        ProjPoint { coords: v, level: k }
    }

    pub fn from_ints(v: &[i64]) -> Result<ProjPoint, ModelError> {
        normalize(&v.iter().map(|&x| rat::int(x)).collect::<Vec<_>>())
    }

    /// Largest of the length and the entry heights; finitely many points share a height.
    pub fn height(&self) -> u64 {
        let h = self.coords.iter().map(rat::height).max().unwrap_or_default();
        let h: u64 = h.try_into().unwrap_or(u64::MAX);
        h.max(self.coords.len() as u64)
    }
}

impl fmt::Display for ProjPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, c) in self.coords.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            if c.is_integer() {
                write!(f, "{}", c.numer())?;
            } else {
                write!(f, "{c}")?;
            }
        }
        write!(f, ")")
    }
}

impl Serialize for ProjPoint {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        rat::serde_rat_vec::serialize(&self.coords, s)
    }
}

impl<'de> Deserialize<'de> for ProjPoint {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let v = rat::serde_rat_vec::deserialize(d)?;
        let p = normalize(&v).map_err(serde::de::Error::custom)?;
        if p.coords != v {
            return Err(serde::de::Error::custom("point is not in normal form"));
        }
        Ok(p)
    }
}

pub fn normalize(raw: &[Rational]) -> Result<ProjPoint, ModelError> {
    let level = raw.iter().position(|x| !x.is_zero()).ok_or(ModelError::AllZero)?;
    let last = raw.iter().rposition(|x| !x.is_zero()).unwrap();
    let pivot = raw[level].clone();
    let coords = raw[..=last].iter().map(|x| x / &pivot).collect();
    Ok(ProjPoint { coords, level })
}

pub fn level(p: &ProjPoint) -> usize {
    p.level
}

/// A chart cylinder. Interval endpoints live in Q(sqrt 2); plain rational
/// endpoints are the common case, irrational ones give clopen cells.
#[derive(Clone, PartialEq, Eq, Hash, Debug, Serialize, Deserialize)]
pub struct BasicOpen {
    pub chart: usize,
    #[serde(deserialize_with = "rat::index_keys::deserialize")]
    pub constraints: BTreeMap<usize, Interval>,
}

impl BasicOpen {
    pub fn chart(chart: usize) -> BasicOpen {
        BasicOpen { chart, constraints: BTreeMap::new() }
    }

    pub fn with(mut self, i: usize, iv: Interval) -> BasicOpen {
        assert_ne!(i, self.chart, "the chart index carries no constraint");
        self.constraints.insert(i, iv);
        self
    }

    pub fn with_rat(self, i: usize, lo: Rational, hi: Rational) -> BasicOpen {
        self.with(i, Interval::rational(lo, hi))
    }

    /// Largest index mentioned.
    pub fn support_max(&self) -> usize {
        self.constraints.keys().copied().chain([self.chart]).max().unwrap()
    }

    /// `Some(l)` when this is a cell: every index below `l` other than the chart
    /// is constrained by an interval with irrational endpoints, and nothing else.
    /// Such a set is clopen off `Y_l` and its closure adds exactly `Y_l`.
    pub fn cell_level(&self) -> Option<usize> {
        let l = self.support_max() + 1;
        let full = self.constraints.len() + 1 == l;
        let clopen = self.constraints.values().all(Interval::is_clopen);
        (full && clopen && l > self.chart).then_some(l)
    }

    /// A point of the set supported on indices `<= support_max`.
    pub fn sample_member(&self) -> ProjPoint {
        let n = self.support_max() + 1;
        let mut v = vec![Rational::zero(); n];
        v[self.chart] = Rational::one();
        for (i, iv) in &self.constraints {
            v[*i] = iv.simplest();
        }
        normalize(&v).expect("chart coordinate is 1")
    }
}

impl fmt::Display for BasicOpen {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{chart {}", self.chart)?;
        for (i, iv) in &self.constraints {
            write!(f, ", {} -> ({}, {})", i, iv.lo, iv.hi)?;
        }
        write!(f, "}}")
    }
}

pub fn member(p: &ProjPoint, b: &BasicOpen) -> bool {
    let pivot = p.coord(b.chart);
    if pivot.is_zero() {
        return false;
    }
    b.constraints.iter().all(|(i, iv)| iv.contains(&(p.coord(*i) / &pivot)))
}

/// Witness of `B1 ∩ B2`, or `None` when the intersection is empty.
///
/// In chart coordinates of `b1`, a point of `b2` is governed by the single
/// unknown `lambda = x[b2.chart]`; every condition is a strict linear
/// inequality in `lambda` on each sign half-line.
pub fn meets(b1: &BasicOpen, b2: &BasicOpen) -> Option<ProjPoint> {
    let n = b1.support_max().max(b2.support_max()) + 1;
    let mut v = vec![Rational::zero(); n];
    if b1.chart == b2.chart {
        v[b1.chart] = Rational::one();
        for i in 0..n {
            if i == b1.chart {
                continue;
            }
            v[i] = match (b1.constraints.get(&i), b2.constraints.get(&i)) {
                (Some(a), Some(b)) => a.meet(b)?.simplest(),
                (Some(a), None) | (None, Some(a)) => a.simplest(),
                (None, None) => Rational::zero(),
            };
        }
        return normalize(&v).ok();
    }
    let (c1, c2) = (b1.chart, b2.chart);
    let one = Quad::from(Rational::one());
    let mut best: Option<Rational> = None;
    for half in [ExtIv::positive(), ExtIv::negative()] {
        let neg = half.hi <= Ext::Fin(Quad::zero());
        let mut feas = half.clone();
        if let Some(iv) = b1.constraints.get(&c2) {
            feas = feas.meet(&iv.ext());
        }
        if let Some(j) = b2.constraints.get(&c1) {
            // 1/lambda in (c, d)
            let (c, d) = (&j.lo, &j.hi);
            if neg {
                feas = feas.meet(&lin_gt(c, &one, &half)).meet(&lin_lt(d, &one, &half));
            } else {
                feas = feas.meet(&lin_lt(c, &one, &half)).meet(&lin_gt(d, &one, &half));
            }
        }
        for (i, a) in &b1.constraints {
            if *i == c2 {
                continue;
            }
            if let Some(j) = b2.constraints.get(i) {
                // lambda*(p, q) meets (a.lo, a.hi)
                let (p, q) = (&j.lo, &j.hi);
                let (low_end, high_end) = if neg { (q, p) } else { (p, q) };
                feas = feas
                    .meet(&lin_lt(low_end, &a.hi, &half))
                    .meet(&lin_gt(high_end, &a.lo, &half));
            }
        }
        if let Some(l) = feas.simplest() {
            best = Some(l);
            break;
        }
    }
    let lambda = best?;
    let lq = Quad::from(&lambda);
    v[c1] = Rational::one();
    v[c2] = lambda.clone();
    for i in 0..n {
        if i == c1 || i == c2 {
            continue;
        }
        v[i] = match (b1.constraints.get(&i), b2.constraints.get(&i)) {
            (Some(a), Some(b)) => a.meet(&b.scale(&lq)).expect("feasible lambda").simplest(),
            (Some(a), None) => a.simplest(),
            (None, Some(b)) => &lambda * b.simplest(),
            (None, None) => Rational::zero(),
        };
    }
    let w = normalize(&v).ok()?;
    debug_assert!(member(&w, b1) && member(&w, b2), "meets witness {w} fails");
    Some(w)
}

/// `O_k(p)`: chart at the level of `p`, radius `2^-k` on every index up to
/// `max(k, len)` other than the chart.
pub fn nbhd_base(p: &ProjPoint, k: usize) -> BasicOpen {
    let r = pow2_neg(k);
    let top = k.max(p.len());
    let mut b = BasicOpen::chart(p.level);
    for i in 0..=top {
        if i != p.level {
            let c = p.coord(i);
            b.constraints.insert(i, Interval::rational(&c - &r, &c + &r));
        }
    }
    b
}

/// `1 + max(support)`: every point of `Y_m` lies in the closure of `b`.
pub fn skeleton_tail_level(b: &BasicOpen) -> usize {
    b.support_max() + 1
}

/// A point of `B ∩ W`, built as `target + lambda * s` with `s` a point of `B`
/// supported below the tail level and `lambda = 2^-j` for the least `j` that works.
pub fn density_witness(b: &BasicOpen, target: &ProjPoint, w: &BasicOpen) -> Result<ProjPoint, ModelError> {
    let m = skeleton_tail_level(b);
    if target.level < m {
        return Err(ModelError::NoWitness(format!(
            "target level {} is below the tail level {m}",
            target.level
        )));
    }
    if !member(target, w) {
        return Err(ModelError::NoWitness(format!("target {target} is not in {w}")));
    }
    let s = b.sample_member();
    for j in 0..=MAX_HALVINGS {
        let lam = pow2_neg(j);
        let n = target.len().max(s.len());
        let v: Vec<Rational> = (0..n).map(|i| target.coord(i) + &lam * s.coord(i)).collect();
        let x = normalize(&v)?;
        if member(&x, w) {
            debug_assert!(member(&x, b));
            return Ok(x);
        }
    }
    Err(ModelError::NoWitness("halving budget exhausted".into()))
}

/// Bound on the number of halvings tried by the perturbation searches.
pub const MAX_HALVINGS: usize = 4096;

/// Representative divided by its largest head coordinate (index `< bound`,
/// smallest index on ties).
fn head_scaled(p: &ProjPoint, bound: usize) -> Vec<Rational> {
    let mut best = 0usize;
    for i in 0..bound.min(p.len()) {
        if p.coord(i).abs() > p.coord(best).abs() {
            best = i;
        }
    }
    let piv = p.coord(best);
    p.coords.iter().map(|x| x / &piv).collect()
}

/// Metric on `Y \ Y_bound`.
///
/// Both points are scaled so their largest head coordinate is `±1`. Head
/// coordinates (`< bound`) contribute their plain difference; later ones are
/// capped at 1 and weighted by `2^-(i - bound + 1)`, so the metric induces the
/// product topology. The sign of the scaling is chosen to minimise.
pub fn metric_off_skeleton(p: &ProjPoint, q: &ProjPoint, bound: usize) -> Result<Rational, ModelError> {
    for x in [p, q] {
        if x.level >= bound {
            return Err(ModelError::LevelOutOfRange { level: x.level, bound });
        }
    }
    let a = head_scaled(p, bound);
    let b = head_scaled(q, bound);
    let n = a.len().max(b.len());
    let get = |v: &Vec<Rational>, i: usize| v.get(i).cloned().unwrap_or_else(Rational::zero);
    let one = Rational::one();
    let mut best: Option<Rational> = None;
    for sign in [one.clone(), -one.clone()] {
        let mut d = Rational::zero();
        for i in 0..n {
            let diff = (get(&a, i) - &sign * get(&b, i)).abs();
            let term = if i < bound {
                diff
            } else {
                diff.min(one.clone()) * pow2_neg(i - bound + 1)
            };
            if term > d {
                d = term;
            }
        }
        best = Some(match best {
            Some(x) if x <= d => x,
            _ => d,
        });
    }
    Ok(best.unwrap())
}

/// Lower bound for the distance from `p` to any point of `Y_l \ Y_bound`.
pub fn clearance(p: &ProjPoint, l: usize, bound: usize) -> Rational {
    let a = head_scaled(p, bound);
    a.iter().take(l).map(|x| x.abs()).max().unwrap_or_else(Rational::zero)
}

/// Rank of the three representatives is at most 2.
pub fn collinear(a: &ProjPoint, b: &ProjPoint, c: &ProjPoint) -> bool {
    let n = a.len().max(b.len()).max(c.len());
    let mut rows: Vec<Vec<Rational>> = [a, b, c]
        .iter()
        .map(|p| (0..n).map(|i| p.coord(i)).collect())
        .collect();
    rank(&mut rows) <= 2
}

fn rank(rows: &mut [Vec<Rational>]) -> usize {
    let ncols = rows.first().map_or(0, |r| r.len());
    let mut r = 0;
    for col in 0..ncols {
        let Some(piv) = (r..rows.len()).find(|&i| !rows[i][col].is_zero()) else {
            continue;
        };
        rows.swap(r, piv);
        for i in 0..rows.len() {
            if i != r && !rows[i][col].is_zero() {
                let f = &rows[i][col] / &rows[r][col];
                for j in col..ncols {
                    let t = &f * &rows[r][j];
                    rows[i][j] -= t;
                }
            }
        }
        r += 1;
    }
    r
}

/// `inner ⊆ outer`, decided exactly. `inner` is nonempty by construction.
pub fn contains_open(outer: &BasicOpen, inner: &BasicOpen) -> bool {
    let (c1, c2) = (inner.chart, outer.chart);
    if c1 == c2 {
        return outer
            .constraints
            .iter()
            .all(|(i, j)| inner.constraints.get(i).is_some_and(|iv| iv.subset_of(j)));
    }
    let Some(den) = inner.constraints.get(&c2) else {
        return false;
    };
    if !den.bounded_away_from_zero() {
        return false;
    }
    outer.constraints.iter().all(|(i, j)| {
        let range = if *i == c1 {
            let (a, b) = (den.hi.recip(), den.lo.recip());
            Interval::new(a.clone().min(b.clone()), a.max(b))
        } else {
            match inner.constraints.get(i) {
                Some(num) => num.quotient_hull(den),
                None => return false,
            }
        };
        range.subset_of(j)
    })
}

/// Radius used for cells at refinement `r`: `sqrt2 / 2^(r+1)`, just under `2^-r`.
pub fn cell_radius(r: usize) -> Quad {
    Quad::new(Rational::zero(), pow2_neg(r + 1))
}

/// Smallest head length for which `cell(p, k, l)` sits inside `O_k(p)`.
pub fn cell_min_level(p: &ProjPoint, k: usize) -> usize {
    k.max(p.len()) + 1
}

/// Clopen cell around `p`: chart `level(p)`, every index below `l` boxed by
/// irrational endpoints at radius `sqrt2 / 2^(r+1)`. Needs `l > level(p)`.
pub fn cell(p: &ProjPoint, r: usize, l: usize) -> Option<BasicOpen> {
    if l <= p.level {
        return None;
    }
    let rho = cell_radius(r);
    let mut b = BasicOpen::chart(p.level);
    for i in 0..l {
        if i != p.level {
            b.constraints.insert(i, Interval::around(&p.coord(i), &rho));
        }
    }
    Some(b)
}

/// Exact closure membership for cells: `cl(C) = C ∪ Y_l`.
pub fn cell_closure_member(p: &ProjPoint, c: &BasicOpen) -> Option<bool> {
    let l = c.cell_level()?;
    Some(member(p, c) || p.level >= l)
}

fn all_member(p: &ProjPoint, w: &[BasicOpen]) -> bool {
    w.iter().all(|o| member(p, o))
}

/// A point of exact level `lvl` in `⋂ w`, obtained by switching on coordinate
/// `lvl` of `p` with a vanishing weight. Needs `level(p) >= lvl` and `p ∈ ⋂ w`.
pub fn drop_to_level(p: &ProjPoint, lvl: usize, w: &[BasicOpen]) -> Option<ProjPoint> {
    drop_to_level_by(p, lvl, |q| all_member(q, w))
}

/// `drop_to_level` with membership given by `ok`.
pub fn drop_to_level_by(p: &ProjPoint, lvl: usize, ok: impl Fn(&ProjPoint) -> bool) -> Option<ProjPoint> {
    if p.level == lvl {
        return ok(p).then(|| p.clone());
    }
    if p.level < lvl {
        return None;
    }
    for j in 0..=MAX_HALVINGS {
        let mut v = p.coords.clone();
        v[lvl] = pow2_neg(j);
        let q = normalize(&v).ok()?;
        if ok(&q) {
            return Some(q);
        }
    }
    None
}

/// For `a` with `level(a) >= skeleton_tail_level(c)`, a point of `c ∩ ⋂ w`
/// whose level is the chart of `c`: `a + lambda * s` with `s` a member of `c`
/// supported below the tail level. For a cell, `a` ranges over its boundary.
pub fn attach_point(a: &ProjPoint, c: &BasicOpen, w: &[BasicOpen]) -> Option<ProjPoint> {
    if a.level < skeleton_tail_level(c) {
        return None;
    }
    let s = c.sample_member();
    if s.level != c.chart {
        return None;
    }
    approach_by(a, &s, |q| all_member(q, w) && member(q, c))
}

/// `a + 2^-j * s` for the least `j` accepted by `ok`.
pub fn approach_by(a: &ProjPoint, s: &ProjPoint, ok: impl Fn(&ProjPoint) -> bool) -> Option<ProjPoint> {
    (0..=MAX_HALVINGS).map(|j| combine(a, s, &pow2_neg(j))).find(|q| ok(q))
}

/// `a + lambda * s`, normalized. `a` and `s` have disjoint supports in use.
pub fn combine(a: &ProjPoint, s: &ProjPoint, lambda: &Rational) -> ProjPoint {
    let n = a.len().max(s.len());
    let v: Vec<Rational> = (0..n).map(|i| a.coord(i) + lambda * s.coord(i)).collect();
    normalize(&v).expect("supports are disjoint")
}

/// Another point of the same level as `p` in `⋂ w`, outside `avoid`.
pub fn crowd(p: &ProjPoint, w: &[BasicOpen], avoid: &[ProjPoint]) -> Option<ProjPoint> {
    crowd_by(p, |q| all_member(q, w) && !avoid.contains(q))
}

/// `crowd` with acceptance given by `ok`.
pub fn crowd_by(p: &ProjPoint, ok: impl Fn(&ProjPoint) -> bool) -> Option<ProjPoint> {
    for t in 0..=MAX_HALVINGS {
        let mut v = p.coords.clone();
        v.push(pow2_neg(t));
        let q = normalize(&v).ok()?;
        if ok(&q) {
            return Some(q);
        }
    }
    None
}

/// All points of height exactly `h`, sorted by their coordinate lists.
pub fn points_of_height(h: u64) -> Vec<ProjPoint> {
    let vals = rat::small_rationals(h);
    let nonzero: Vec<Rational> = vals.iter().filter(|x| !x.is_zero()).cloned().collect();
    let mut out = Vec::new();
    for n in 1..=h as usize {
        for c in 0..n {
            // prefix zeros, 1 at c, free entries in c+1..n-1 with the last nonzero
            let free = n - 1 - c;
            let mut idx = vec![0usize; free];
            loop {
                let mut v = vec![Rational::zero(); n];
                v[c] = Rational::one();
                let mut ok = true;
                for (t, &ix) in idx.iter().enumerate() {
                    let last = t + 1 == free;
                    let pool = if last { &nonzero } else { &vals };
                    if ix >= pool.len() {
                        ok = false;
                        break;
                    }
                    v[c + 1 + t] = pool[ix].clone();
                }
                if ok {
                    let p = ProjPoint { coords: v, level: c };
                    if p.height() == h {
                        out.push(p);
                    }
                }
                // odometer over idx, with the last slot ranging over nonzero values
                let mut t = free;
                loop {
                    if t == 0 {
                        break;
                    }
                    t -= 1;
                    let lim = if t + 1 == free { nonzero.len() } else { vals.len() };
                    idx[t] += 1;
                    if idx[t] < lim {
                        break;
                    }
                    idx[t] = 0;
                    if t == 0 {
                        t = usize::MAX;
                        break;
                    }
                }
                if free == 0 || t == usize::MAX {
                    break;
                }
            }
        }
    }
    out.sort();
    out
}

/// The enumeration order: by height, then by coordinate list.
pub fn point_cmp(a: &ProjPoint, b: &ProjPoint) -> Ordering {
    a.height().cmp(&b.height()).then_with(|| a.cmp(b))
}

pub fn all_points() -> impl Iterator<Item = ProjPoint> {
    (1u64..).flat_map(points_of_height)
}

pub fn random_rational<R: Rng>(rng: &mut R, h: i64) -> Rational {
    let n = rng.gen_range(-h..=h);
    let d = rng.gen_range(1..=h);
    rat::rat(n, d)
}

/// Random point with at most `max_len` coordinates and entries of height `<= h`.
pub fn random_point<R: Rng>(rng: &mut R, max_len: usize, h: i64) -> ProjPoint {
    loop {
        let n = rng.gen_range(1..=max_len);
        let lvl = rng.gen_range(0..n);
        let mut v = vec![Rational::zero(); n];
        for x in v.iter_mut().skip(lvl) {
            *x = random_rational(rng, h);
        }
        v[lvl] = Rational::one();
        if let Ok(p) = normalize(&v) {
            return p;
        }
    }
}

/// Random point of level at least `min_level`.
pub fn random_point_from<R: Rng>(rng: &mut R, min_level: usize, max_len: usize, h: i64) -> ProjPoint {
    let p = random_point(rng, max_len, h);
    let mut v = vec![Rational::zero(); min_level];
    v.extend(p.coords.iter().cloned());
    normalize(&v).unwrap()
}

/// Bound on `d(p, w)` (metric off `Y_bound`) over all `w` in `O_k(p)`,
/// available once the neighbourhood constrains every head coordinate.
pub fn nbhd_metric_radius(p: &ProjPoint, k: usize, bound: usize) -> Option<Rational> {
    let top = k.max(p.len());
    if top + 1 < bound || p.level >= bound || k == 0 {
        return None;
    }
    Some(box_metric_radius(p, &pow2_neg(k), top + 1, bound))
}

/// Bound on `d(p, w)` when, in the chart `level(p)`, `w` is within
/// `delta <= 1/2` of `p` on every index below `len >= bound`. With `V` the
/// largest such coordinate of `p`, each scaled coordinate moves by at most
/// `delta (3 + 2V)`; indices past `len` weigh at most `2^-(len - bound + 1)`.
pub fn box_metric_radius(p: &ProjPoint, delta: &Rational, len: usize, bound: usize) -> Rational {
    let vmax = (0..len).map(|i| p.coord(i).abs()).max().unwrap_or_else(Rational::zero);
    let head = delta * (rat::int(3) + vmax * rat::int(2));
    head.max(pow2_neg(len + 1 - bound))
}

/// Random nonempty basic open: chart `< max_idx`, a few rational intervals.
pub fn random_open<R: Rng>(rng: &mut R, max_idx: usize, h: i64) -> BasicOpen {
    let chart = rng.gen_range(0..max_idx);
    let mut b = BasicOpen::chart(chart);
    let k = rng.gen_range(0..max_idx);
    for _ in 0..k {
        let i = rng.gen_range(0..max_idx);
        if i == chart {
            continue;
        }
        let a = random_rational(rng, h);
        let w = rat::rat(rng.gen_range(1..=2 * h), rng.gen_range(1..=h));
        b.constraints.insert(i, Interval::rational(a.clone(), a + w));
    }
    b
}

/// QP^inf as a presentation, skeleton `Y_n` = points of level `>= n`.
#[derive(Clone, Copy, Debug, Default)]
pub struct QPInf;

pub fn qpinf_presentation() -> QPInf {
    QPInf
}

impl SpacePresentation for QPInf {
    type Point = ProjPoint;
    type Open = BasicOpen;

    fn id(&self) -> SpaceId {
        SpaceId::Qpinf
    }

    fn points(&self) -> Box<dyn Iterator<Item = ProjPoint> + '_> {
        Box::new(all_points())
    }

    fn point_cmp(&self, a: &ProjPoint, b: &ProjPoint) -> Ordering {
        point_cmp(a, b)
    }

    fn base(&self, i: usize) -> BasicOpen {
        let (a, k) = unpair(i);
        nbhd_base(&all_points().nth(a).unwrap(), k)
    }

    fn member(&self, p: &ProjPoint, o: &BasicOpen) -> bool {
        member(p, o)
    }

    fn level(&self, p: &ProjPoint) -> usize {
        p.level
    }

    fn top_level(&self) -> Option<usize> {
        None
    }

    fn nbhd(&self, p: &ProjPoint, k: usize) -> BasicOpen {
        nbhd_base(p, k)
    }

    fn meets(&self, a: &BasicOpen, b: &BasicOpen) -> Option<ProjPoint> {
        meets(a, b)
    }

    fn tail_level(&self, o: &BasicOpen) -> Option<usize> {
        Some(skeleton_tail_level(o))
    }

    fn density_witness(&self, o: &BasicOpen, target: &ProjPoint, w: &BasicOpen) -> Option<ProjPoint> {
        density_witness(o, target, w).ok()
    }

    fn sample_point(&self, rng: &mut crate::Rng, min_level: usize) -> Option<ProjPoint> {
        Some(random_point_from(rng, min_level, 5, 6))
    }

    fn sample_open(&self, rng: &mut crate::Rng) -> BasicOpen {
        random_open(rng, 5, 6)
    }

    /// One point at each level up to `level(p)`, plus one more at `level(p)`.
    fn nearby(&self, p: &ProjPoint, w: &BasicOpen) -> Vec<ProjPoint> {
        let w = std::slice::from_ref(w);
        let mut out: Vec<ProjPoint> = (0..p.level).filter_map(|l| drop_to_level(p, l, w)).collect();
        out.extend(crowd(p, w, std::slice::from_ref(p)));
        // nudge each head coordinate both ways
        for i in p.level + 1..p.len() {
            for sign in [1, -1] {
                let nudged = (0..=MAX_HALVINGS).find_map(|t| {
                    let mut v = p.coords.clone();
                    v[i] += rat::int(sign) * pow2_neg(t);
                    normalize(&v).ok().filter(|q| member(q, &w[0]))
                });
                out.extend(nudged);
            }
        }
        out
    }
}

impl Constructive for QPInf {
    fn cell(&self, p: &ProjPoint, r: usize, l: usize) -> Option<BasicOpen> {
        cell(p, r, l)
    }

    fn cell_min_level(&self, p: &ProjPoint, r: usize) -> usize {
        cell_min_level(p, r)
    }

    fn is_cell(&self, o: &BasicOpen, l: usize) -> bool {
        o.cell_level() == Some(l)
    }

    fn max_level_in(&self, o: &BasicOpen) -> usize {
        o.chart
    }

    fn contains_open(&self, outer: &BasicOpen, inner: &BasicOpen) -> bool {
        contains_open(outer, inner)
    }

    fn drop_to_level(&self, p: &ProjPoint, lvl: usize, w: &[BasicOpen]) -> Option<ProjPoint> {
        drop_to_level(p, lvl, w)
    }

    fn attach_point(&self, a: &ProjPoint, c: &BasicOpen, w: &[BasicOpen]) -> Option<ProjPoint> {
        attach_point(a, c, w)
    }

    fn crowd(&self, p: &ProjPoint, w: &[BasicOpen], avoid: &[ProjPoint]) -> Option<ProjPoint> {
        crowd(p, w, avoid)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rat::{int, rat};

    fn pt(v: &[Rational]) -> ProjPoint {
        normalize(v).unwrap()
    }

    #[test]
    fn opens_decode_inside_tagged_certificates() {
        use crate::presentation::Closure;
        let c: Closure<ProjPoint, BasicOpen> = Closure::Separated { nbhd: nbhd_base(&ProjPoint::unit(1), 2) };
        let v = serde_json::to_value(&c).unwrap();
        assert_eq!(serde_json::from_value::<Closure<ProjPoint, BasicOpen>>(v.clone()).unwrap(), c);
        assert_eq!(serde_json::from_str::<Closure<ProjPoint, BasicOpen>>(&v.to_string()).unwrap(), c);
    }

    #[test]
    fn normalize_examples() {
        let p = pt(&[int(0), int(2), int(-3)]);
        assert_eq!(p.coords(), &[int(0), int(1), rat(-3, 2)]);
        assert_eq!(p.level(), 1);
        assert_eq!(pt(&[int(5)]).coords(), &[int(1)]);
        let p = pt(&[int(0), int(4), int(0), int(0)]);
        assert_eq!(p.coords(), &[int(0), int(1)]);
        assert_eq!(p.level(), 1);
        assert_eq!(normalize(&[int(0), int(0)]), Err(ModelError::AllZero));
    }

    #[test]
    fn level_examples() {
        assert_eq!(level(&ProjPoint::from_ints(&[1, 7]).unwrap()), 0);
        assert_eq!(level(&ProjPoint::from_ints(&[0, 0, 1]).unwrap()), 2);
        for k in 0..6 {
            assert_eq!(level(&ProjPoint::unit(k)), k);
        }
    }

    /// Brute-force oracle: try the scalings `q` of the normal form with small
    /// numerators and denominators, looking for one with coordinate `chart` equal
    /// to 1 and all constraints met.
    fn member_by_scaling(p: &ProjPoint, b: &BasicOpen) -> bool {
        for q in rat::small_rationals(12).into_iter().filter(|q| !q.is_zero()) {
            let v: Vec<Rational> = (0..=b.support_max().max(p.len())).map(|i| p.coord(i) * &q).collect();
            let at = |i: usize| v.get(i).cloned().unwrap_or_else(Rational::zero);
            if at(b.chart) == int(1) && b.constraints.iter().all(|(i, iv)| iv.contains(&at(*i))) {
                return true;
            }
        }
        false
    }

    #[test]
    fn member_examples() {
        let p = pt(&[int(0), int(1), rat(-3, 2)]);
        let b = BasicOpen::chart(1).with_rat(2, int(-2), int(-1));
        assert!(member(&p, &b));
        assert!(!member(&ProjPoint::unit(2), &BasicOpen::chart(1)));
        let p = ProjPoint::from_ints(&[1, 4]).unwrap();
        let b = BasicOpen::chart(1).with_rat(0, int(0), rat(1, 2));
        assert!(member(&p, &b));
        assert!(member_by_scaling(&p, &b));
    }

    #[test]
    fn meets_examples() {
        let b1 = BasicOpen::chart(0).with_rat(1, int(0), int(1));
        let b2 = BasicOpen::chart(1).with_rat(0, int(2), int(3));
        let w = meets(&b1, &b2).unwrap();
        assert_eq!(w, pt(&[int(1), rat(2, 5)]));
        assert!(member(&w, &b1) && member(&w, &b2));
        let b3 = BasicOpen::chart(0).with_rat(1, int(2), int(3));
        assert_eq!(meets(&b1, &b3), None);
        let w = meets(&BasicOpen::chart(0), &BasicOpen::chart(5)).unwrap();
        assert!(!w.coord(0).is_zero() && !w.coord(5).is_zero());
    }

    #[test]
    fn nbhd_examples() {
        let o = nbhd_base(&ProjPoint::unit(0), 0);
        assert_eq!(o, BasicOpen::chart(0).with_rat(1, int(-1), int(1)));
        let p = pt(&[int(0), int(1), rat(-3, 2)]);
        assert!(contains_open(&nbhd_base(&p, 2), &nbhd_base(&p, 3)));
        assert!(!contains_open(&nbhd_base(&p, 3), &nbhd_base(&p, 2)));
    }

    #[test]
    fn tail_levels() {
        assert_eq!(skeleton_tail_level(&BasicOpen::chart(0).with_rat(1, int(0), int(1))), 2);
        assert_eq!(skeleton_tail_level(&BasicOpen::chart(3)), 4);
        assert_eq!(skeleton_tail_level(&BasicOpen::chart(0)), 1);
    }

    #[test]
    fn density_examples() {
        let b = BasicOpen::chart(0).with_rat(1, int(0), int(1));
        let e2 = ProjPoint::unit(2);
        let w = nbhd_base(&e2, 2);
        let x = density_witness(&b, &e2, &w).unwrap();
        // pattern (lambda, lambda/2, 1) with lambda = 1/8
        assert_eq!(x, pt(&[rat(1, 8), rat(1, 16), int(1)]));
        assert!(member(&x, &b) && member(&x, &w));
        let b = BasicOpen::chart(0);
        let e1 = ProjPoint::unit(1);
        let x = density_witness(&b, &e1, &nbhd_base(&e1, 0)).unwrap();
        assert_eq!(x, pt(&[rat(1, 2), int(1)]));
        assert!(density_witness(&b, &ProjPoint::unit(0), &nbhd_base(&e1, 0)).is_err());
    }

    #[test]
    fn metric_examples() {
        let p = ProjPoint::unit(0);
        let q = ProjPoint::from_ints(&[1, 1]).unwrap();
        assert_eq!(metric_off_skeleton(&p, &q, 2).unwrap(), int(1));
        assert_eq!(metric_off_skeleton(&q, &q, 2).unwrap(), int(0));
        assert!(metric_off_skeleton(&ProjPoint::unit(3), &q, 2).is_err());
        // sign flips near a tie do not jump
        let a = pt(&[int(1), rat(-99, 100)]);
        let b = pt(&[int(1), rat(-101, 100)]);
        assert!(metric_off_skeleton(&a, &b, 2).unwrap() < rat(1, 10));
    }

    #[test]
    fn collinear_examples() {
        let e0 = ProjPoint::unit(0);
        let e1 = ProjPoint::unit(1);
        let e01 = ProjPoint::from_ints(&[1, 1]).unwrap();
        assert!(collinear(&e0, &e1, &e01));
        assert!(!collinear(&e0, &e1, &ProjPoint::unit(2)));
        let (a, b, c) = (
            ProjPoint::from_ints(&[1, 1]).unwrap(),
            ProjPoint::from_ints(&[1, 2]).unwrap(),
            ProjPoint::from_ints(&[1, 3]).unwrap(),
        );
        assert!(collinear(&a, &b, &c));
    }

    #[test]
    fn cells_are_inside_neighbourhoods() {
        let p = pt(&[int(0), int(1), rat(-3, 2)]);
        for k in 0..4 {
            let l = cell_min_level(&p, k);
            let c = cell(&p, k, l).unwrap();
            assert_eq!(c.cell_level(), Some(l));
            assert!(contains_open(&nbhd_base(&p, k), &c));
            assert!(member(&p, &c));
        }
        assert!(cell(&p, 0, 1).is_none());
    }

    #[test]
    fn perturbations() {
        let p = ProjPoint::unit(3);
        let w = [nbhd_base(&p, 2)];
        let q = drop_to_level(&p, 1, &w).unwrap();
        assert_eq!(q.level(), 1);
        assert!(member(&q, &w[0]));
        let c = cell(&ProjPoint::unit(0), 1, 2).unwrap();
        let a = attach_point(&ProjPoint::unit(4), &c, &[nbhd_base(&ProjPoint::unit(4), 3)]).unwrap();
        assert!(member(&a, &c) && a.level() == 0);
        let z = crowd(&p, &w, &[]).unwrap();
        assert!(z != p && z.level() == 3 && member(&z, &w[0]));
    }

    #[test]
    fn enumeration_prefix() {
        let first: Vec<ProjPoint> = all_points().take(8).collect();
        assert_eq!(first[0], ProjPoint::unit(0));
        assert_eq!(points_of_height(2).len(), 7);
        assert!(first.windows(2).all(|w| point_cmp(&w[0], &w[1]) == Ordering::Less));
    }

    mod props {
        use super::*;
        use crate::Rng as Chacha;
        use proptest::prelude::{prop_assert, prop_assert_eq, proptest};
        use rand::SeedableRng;

        fn rng(seed: u64) -> Chacha {
            Chacha::seed_from_u64(seed)
        }

        /// Points spread around an open: its sample, perturbations of it, and random points.
        fn probes(o: &BasicOpen, r: &mut Chacha) -> Vec<ProjPoint> {
            let s = o.sample_member();
            let mut out = vec![s.clone()];
            for _ in 0..12 {
                let q = random_point(r, 6, 5);
                out.push(q.clone());
                out.push(combine(&s, &q, &pow2_neg(r.gen_range(0..6))));
            }
            out
        }

        proptest! {
            #[test]
            fn scaling_does_not_change_the_point(seed: u64, num in 1i64..9, den in 1i64..9, neg: bool) {
                let mut r = rng(seed);
                let p = random_point(&mut r, 6, 7);
                let c = rat(if neg { -num } else { num }, den);
                let v: Vec<Rational> = p.coords().iter().map(|x| x * &c).collect();
                prop_assert_eq!(normalize(&v).unwrap(), p);
            }

            #[test]
            fn meets_is_sound_and_complete_on_probes(seed: u64) {
                let mut r = rng(seed);
                let (a, b) = (random_open(&mut r, 4, 4), random_open(&mut r, 4, 4));
                match meets(&a, &b) {
                    Some(w) => prop_assert!(member(&w, &a) && member(&w, &b)),
                    None => {
                        for q in probes(&a, &mut r).iter().chain(&probes(&b, &mut r)) {
                            prop_assert!(!(member(q, &a) && member(q, &b)), "{} is in both", q);
                        }
                    }
                }
            }

            #[test]
            fn containment_is_sound(seed: u64, k in 0usize..4) {
                let mut r = rng(seed);
                let outer = random_open(&mut r, 4, 4);
                let inner = nbhd_base(&outer.sample_member(), k + 1);
                if contains_open(&outer, &inner) {
                    for q in probes(&inner, &mut r) {
                        prop_assert!(!member(&q, &inner) || member(&q, &outer));
                    }
                }
                let c = outer.sample_member();
                let l = cell_min_level(&c, k);
                prop_assert!(contains_open(&nbhd_base(&c, k), &cell(&c, k, l).unwrap()));
            }

            #[test]
            fn density_witness_lands_in_both(seed: u64, k in 0usize..6) {
                let mut r = rng(seed);
                let o = random_open(&mut r, 4, 4);
                let t = random_point_from(&mut r, skeleton_tail_level(&o), 3, 4);
                let near = nbhd_base(&t, k);
                let w = density_witness(&o, &t, &near).unwrap();
                prop_assert!(member(&w, &o) && member(&w, &near));
            }

            #[test]
            fn no_isolated_points(seed: u64, k in 0usize..6) {
                let mut r = rng(seed);
                let p = random_point(&mut r, 5, 5);
                let near = nbhd_base(&p, k);
                let q = crowd(&p, &[near.clone()], &[p.clone()]).unwrap();
                prop_assert!(q != p && member(&q, &near) && q.level() == p.level());
            }

            #[test]
            fn skeleton_sets_have_empty_interior(seed: u64, n in 1usize..6) {
                let mut r = rng(seed);
                let o = random_open(&mut r, 4, 4);
                let s = o.sample_member();
                let v: Vec<Rational> = (0..n).map(|i| s.coord(i)).collect();
                // some point of `o` has level below `n`, unless `o`'s chart is past `n`
                if o.chart < n {
                    if let Ok(q) = normalize(&v) {
                        if member(&q, &o) {
                            prop_assert!(q.level() < n);
                        }
                    }
                    let d = drop_to_level(&ProjPoint::unit(n.max(o.support_max() + 1)), o.chart, &[]).unwrap();
                    prop_assert_eq!(d.level(), o.chart);
                }
                let deep = random_point_from(&mut r, n, 3, 3);
                let w = nbhd_base(&deep, 3);
                let q = drop_to_level(&deep, n - 1, &[w.clone()]).unwrap();
                prop_assert!(member(&q, &w) && q.level() == n - 1);
            }

            #[test]
            fn neighbourhoods_decrease(seed: u64, k in 0usize..6) {
                let mut r = rng(seed);
                let p = random_point(&mut r, 5, 5);
                prop_assert!(member(&p, &nbhd_base(&p, k)));
                prop_assert!(contains_open(&nbhd_base(&p, k), &nbhd_base(&p, k + 1)));
            }
        }
    }
}
