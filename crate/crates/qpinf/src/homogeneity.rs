//! Closed discrete subsets of QP^inf: deep/shallow classification, level
//! blocks for a bijection between two deep sets, the rebuilt skeleta that
//! make the bijection level-preserving, and extension to a homeomorphism
//! through the back-and-forth engine.

use crate::engine::{Engine, EngineBudget, EngineError, LedgerRow, Mode};
use crate::presentation::{Budget, Closure, SpaceId, SpacePresentation, Verdict};
use crate::projective::{cell, member, nbhd_base, normalize, BasicOpen, ProjPoint, QPInf};
use crate::quad::Interval;
use crate::rat::{int, Rational};
use crate::reskeleton::{Reskeleton, ReskeletonError};
use crate::skeleton::{run_suite, SkeletonBudget};
use crate::Rng;
use num_traits::{One, Signed, Zero};
use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};
use serde_json::json;
use std::collections::BTreeSet;
use thiserror::Error;

type Cert = Closure<ProjPoint, BasicOpen>;

/// A closed discrete subset of QP^inf, enumerated.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DiscreteSet {
    Finite { points: Vec<ProjPoint> },
    /// `e_n`, one point at each level.
    Units,
    /// `e_n + e_{n+1}`, one point at each level.
    Steps,
    /// `(0, ..., 0, 1, h/k)` with the 1 at `level` and `h/k` running through
    /// the convergents of `sqrt 2`.
    Convergents { level: usize },
}

/// `(h, k)` for the `i`-th convergent `1/1, 3/2, 7/5, ...`.
fn convergent(i: usize) -> (i64, i64) {
    let (mut h, mut k) = (1i64, 1i64);
    for _ in 0..i {
        (h, k) = (h + 2 * k, h + k);
    }
    (h, k)
}

/// Convergents are computed in `i64`; this many fit.
const MAX_CONVERGENTS: usize = 40;

impl DiscreteSet {
    pub fn finite(points: Vec<ProjPoint>) -> Result<Self, HomogeneityError> {
        let distinct: BTreeSet<&ProjPoint> = points.iter().collect();
        if distinct.len() != points.len() {
            return Err(HomogeneityError::BadSet("repeated point".into()));
        }
        Ok(DiscreteSet::Finite { points })
    }

    pub fn nth(&self, i: usize) -> Option<ProjPoint> {
        match self {
            DiscreteSet::Finite { points } => points.get(i).cloned(),
            DiscreteSet::Units => Some(ProjPoint::unit(i)),
            DiscreteSet::Steps => {
                let mut v = vec![Rational::zero(); i + 2];
                v[i] = Rational::one();
                v[i + 1] = Rational::one();
                normalize(&v).ok()
            }
            DiscreteSet::Convergents { level } => {
                if i >= MAX_CONVERGENTS {
                    return None;
                }
                let (h, k) = convergent(i);
                let mut v = vec![Rational::zero(); level + 2];
                v[*level] = Rational::one();
                v[level + 1] = Rational::new(h.into(), k.into());
                normalize(&v).ok()
            }
        }
    }

    pub fn len(&self) -> Option<usize> {
        match self {
            DiscreteSet::Finite { points } => Some(points.len()),
            _ => None,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == Some(0)
    }

    /// Position of `p` in the enumeration.
    pub fn index_of(&self, p: &ProjPoint) -> Option<usize> {
        match self {
            DiscreteSet::Finite { points } => points.iter().position(|q| q == p),
            DiscreteSet::Units | DiscreteSet::Steps => {
                (self.nth(p.level()).as_ref() == Some(p)).then_some(p.level())
            }
            DiscreteSet::Convergents { level } => {
                if p.level() != *level || p.len() != level + 2 {
                    return None;
                }
                (0..MAX_CONVERGENTS).find(|&i| self.nth(i).as_ref() == Some(p))
            }
        }
    }

    pub fn contains(&self, p: &ProjPoint) -> bool {
        self.index_of(p).is_some()
    }

    pub fn prefix(&self, n: usize) -> Vec<ProjPoint> {
        (0..n).map_while(|i| self.nth(i)).collect()
    }

    /// `A \ X_m` when it is finite.
    pub fn below(&self, m: usize) -> Option<Vec<ProjPoint>> {
        match self {
            DiscreteSet::Finite { points } => Some(points.iter().filter(|p| p.level() < m).cloned().collect()),
            DiscreteSet::Units | DiscreteSet::Steps => Some(self.prefix(m)),
            DiscreteSet::Convergents { level } => (m <= *level).then(Vec::new),
        }
    }

    /// Least `m` with `A ∩ X_m = ∅`, when there is one.
    pub fn level_bound(&self) -> Option<usize> {
        match self {
            DiscreteSet::Finite { points } => Some(points.iter().map(|p| p.level() + 1).max().unwrap_or(0)),
            DiscreteSet::Units | DiscreteSet::Steps => None,
            DiscreteSet::Convergents { level } => Some(level + 1),
        }
    }

    /// Bound on `|a_m|` over the points of the set.
    fn coord_bound(&self, m: usize) -> Option<Rational> {
        match self {
            DiscreteSet::Finite { points } => {
                Some(points.iter().map(|p| p.coord(m).abs()).max().unwrap_or_else(Rational::zero))
            }
            DiscreteSet::Convergents { level } => Some(if m == level + 1 { int(2) } else { Rational::zero() }),
            _ => None,
        }
    }
}

/// A bijection between two enumerated sets: index `i` goes to `perm[i]`,
/// and to itself past the end of `perm`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexBijection {
    pub perm: Vec<usize>,
}

impl IndexBijection {
    pub fn new(perm: Vec<usize>) -> Result<Self, HomogeneityError> {
        let mut seen = perm.clone();
        seen.sort_unstable();
        if seen != (0..perm.len()).collect::<Vec<_>>() {
            return Err(HomogeneityError::BadBijection(format!("{perm:?} is not a permutation")));
        }
        Ok(IndexBijection { perm })
    }

    pub fn identity() -> Self {
        IndexBijection { perm: Vec::new() }
    }

    pub fn random(rng: &mut Rng, n: usize) -> Self {
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(rng);
        IndexBijection { perm }
    }

    pub fn apply(&self, i: usize) -> usize {
        self.perm.get(i).copied().unwrap_or(i)
    }

    pub fn invert(&self, j: usize) -> usize {
        self.perm.iter().position(|&x| x == j).unwrap_or(j)
    }
}

/// A bijection `f: A -> B` given through the enumerations.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SetMap {
    pub source: DiscreteSet,
    pub target: DiscreteSet,
    pub bijection: IndexBijection,
}

impl SetMap {
    pub fn new(source: DiscreteSet, target: DiscreteSet, bijection: IndexBijection) -> Result<Self, HomogeneityError> {
        if source.len() != target.len() {
            return Err(HomogeneityError::BadBijection("sizes differ".into()));
        }
        if let Some(n) = source.len() {
            if bijection.perm.len() != n {
                return Err(HomogeneityError::BadBijection(format!("expected a permutation of {n} indices")));
            }
        }
        Ok(SetMap { source, target, bijection })
    }

    pub fn forward(&self, a: &ProjPoint) -> Option<ProjPoint> {
        self.target.nth(self.bijection.apply(self.source.index_of(a)?))
    }

    pub fn backward(&self, b: &ProjPoint) -> Option<ProjPoint> {
        self.source.nth(self.bijection.invert(self.target.index_of(b)?))
    }

    fn inverse(&self) -> SetMap {
        let mut perm = vec![0; self.bijection.perm.len()];
        for (i, &j) in self.bijection.perm.iter().enumerate() {
            perm[j] = i;
        }
        SetMap { source: self.target.clone(), target: self.source.clone(), bijection: IndexBijection { perm } }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum HomogeneityError {
    #[error("bad set: {0}")]
    BadSet(String),
    #[error("bad bijection: {0}")]
    BadBijection(String),
    #[error("depths differ: {from:?} and {to:?}")]
    MixedDepth { from: Depth, to: Depth },
    #[error("depth of {0} is undecided at this horizon")]
    Undecided(&'static str),
    #[error("not deep: {0}")]
    NotDeep(&'static str),
    #[error("index sequence leaves the horizon {0} before a second block closes")]
    HorizonExhausted(usize),
    #[error("invalid index sequence: {0}")]
    InvalidSequence(String),
    #[error("no clopen piece separates the block at index {k}")]
    SeparationFailure { k: usize },
    #[error("the shallow branch needs finite sets")]
    InfiniteAnchors,
    #[error(transparent)]
    Reskeleton(#[from] ReskeletonError),
    #[error(transparent)]
    Engine(#[from] EngineError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Depth {
    Deep,
    Shallow,
    Unknown,
}

/// One open `U` with `X_m ⊆ cl(U)` and `cl(U)` missing every listed point.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShallowWitness {
    pub m: usize,
    #[serde(with = "crate::rat::serde_rat")]
    pub radius: Rational,
    pub family: Vec<BasicOpen>,
    /// Per listed point: the family member it is separated from.
    pub separated: Vec<(ProjPoint, usize, Cert)>,
    /// Sampled points of `X_m` in every closure.
    pub skeleton: Vec<(ProjPoint, Vec<Cert>)>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FamilyTrace {
    pub opens: Vec<BasicOpen>,
    pub tail: usize,
    pub inside: Vec<(ProjPoint, Vec<Cert>)>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeepTrace {
    /// `(m, A \ X_m)` for `m <= horizon`.
    pub below: Vec<(usize, Vec<ProjPoint>)>,
    pub families: Vec<FamilyTrace>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DepthCertificate {
    pub verdict: Depth,
    pub horizon: usize,
    /// Per listed point, a neighbourhood holding no other listed point.
    pub discrete: Vec<(ProjPoint, BasicOpen)>,
    pub shallow: Option<ShallowWitness>,
    pub deep: Option<DeepTrace>,
}

/// Largest refinement tried when isolating points or fitting pieces.
const MAX_REFINE: usize = 256;

fn isolate(p: &ProjPoint, others: &[ProjPoint]) -> Option<BasicOpen> {
    (0..MAX_REFINE).map(|k| nbhd_base(p, k)).find(|nb| others.iter().all(|q| q == p || !member(q, nb)))
}

/// The chart-`m` cylinder with every earlier coordinate in `(-r, r)`.
fn shallow_open(m: usize, r: &Rational) -> BasicOpen {
    let mut u = BasicOpen::chart(m);
    for i in 0..m {
        u = u.with(i, Interval::rational(-r.clone(), r.clone()));
    }
    u
}

/// For each point, a family member whose closure it is certified to miss.
pub fn family_misses(points: &[ProjPoint], family: &[BasicOpen], depth: usize) -> Option<Vec<(ProjPoint, usize, Cert)>> {
    points
        .iter()
        .map(|a| {
            family.iter().enumerate().find_map(|(i, o)| {
                let c = QPInf.in_closure(a, o, depth);
                c.is_out().then(|| (a.clone(), i, c))
            })
        })
        .collect()
}

pub fn classify_depth(set: &DiscreteSet, horizon: usize, budget: Budget, rng: &mut Rng) -> DepthCertificate {
    let prefix = set.prefix(horizon);
    let discrete: Option<Vec<(ProjPoint, BasicOpen)>> =
        prefix.iter().map(|a| isolate(a, &prefix).map(|nb| (a.clone(), nb))).collect();
    let mut cert = DepthCertificate {
        verdict: Depth::Unknown,
        horizon,
        discrete: discrete.unwrap_or_default(),
        shallow: None,
        deep: None,
    };
    if cert.discrete.len() != prefix.len() {
        return cert;
    }
    if let Some(m) = set.level_bound() {
        let bound = set.coord_bound(m).unwrap_or_else(Rational::one).max(Rational::one());
        let radius = Rational::one() / (int(2) * bound);
        let u = shallow_open(m, &radius);
        let family = vec![u];
        let Some(separated) = family_misses(&prefix, &family, budget.depth) else {
            return cert;
        };
        let mut skeleton = Vec::new();
        for _ in 0..budget.points {
            let t = QPInf.sample_point(rng, m).expect("QP^inf has every level");
            let cs: Vec<Cert> = family.iter().map(|o| QPInf.in_closure(&t, o, budget.depth)).collect();
            if !cs.iter().all(Closure::is_in) {
                return cert;
            }
            skeleton.push((t, cs));
        }
        cert.shallow = Some(ShallowWitness { m, radius, family, separated, skeleton });
        cert.verdict = Depth::Shallow;
        return cert;
    }
    let Some(below) = (0..=horizon).map(|m| set.below(m).map(|b| (m, b))).collect::<Option<Vec<_>>>() else {
        return cert;
    };
    let mut families = Vec::new();
    for _ in 0..budget.points {
        let size = rng.gen_range(1..=3);
        let opens: Vec<BasicOpen> = (0..size).map(|_| QPInf.sample_open(rng)).collect();
        let tail = opens.iter().filter_map(|o| QPInf.tail_level(o)).max().unwrap();
        let mut inside = Vec::new();
        for a in prefix.iter().filter(|a| a.level() >= tail) {
            let cs: Vec<Cert> = opens.iter().map(|o| QPInf.in_closure(a, o, budget.depth)).collect();
            if !cs.iter().all(Closure::is_in) {
                return cert;
            }
            inside.push((a.clone(), cs));
        }
        families.push(FamilyTrace { opens, tail, inside });
    }
    cert.deep = Some(DeepTrace { below, families });
    cert.verdict = Depth::Deep;
    cert
}

/// Re-check a depth certificate against the set and the oracles.
pub fn replay_depth(set: &DiscreteSet, cert: &DepthCertificate) -> Result<(), String> {
    let prefix = set.prefix(cert.horizon);
    let listed: Vec<&ProjPoint> = cert.discrete.iter().map(|d| &d.0).collect();
    if cert.verdict != Depth::Unknown && listed != prefix.iter().collect::<Vec<_>>() {
        return Err("discreteness list does not match the enumeration".into());
    }
    for (a, nb) in &cert.discrete {
        if !member(a, nb) || prefix.iter().any(|q| q != a && member(q, nb)) {
            return Err(format!("{nb} does not isolate {a}"));
        }
    }
    let check = |p: &ProjPoint, o: &BasicOpen, c: &Cert, inside: bool| -> Result<(), String> {
        QPInf.check_closure(p, o, c)?;
        if (inside && !c.is_in()) || (!inside && !c.is_out()) {
            return Err(format!("certificate for {p} against {o} has the wrong polarity"));
        }
        Ok(())
    };
    match cert.verdict {
        Depth::Shallow => {
            let w = cert.shallow.as_ref().ok_or("shallow verdict without witness")?;
            if set.level_bound() != Some(w.m) || w.family.first() != Some(&shallow_open(w.m, &w.radius)) {
                return Err("witness open does not match the level bound".into());
            }
            if w.separated.iter().map(|s| &s.0).collect::<Vec<_>>() != prefix.iter().collect::<Vec<_>>() {
                return Err("separation list does not cover the enumeration".into());
            }
            for (a, i, c) in &w.separated {
                check(a, w.family.get(*i).ok_or("family index out of range")?, c, false)?;
            }
            for (t, cs) in &w.skeleton {
                if t.level() < w.m || cs.len() != w.family.len() {
                    return Err(format!("{t} is not a skeleton sample"));
                }
                for (o, c) in w.family.iter().zip(cs) {
                    check(t, o, c, true)?;
                }
            }
        }
        Depth::Deep => {
            let d = cert.deep.as_ref().ok_or("deep verdict without trace")?;
            for (m, list) in &d.below {
                if set.below(*m).as_ref() != Some(list) {
                    return Err(format!("A minus X_{m} differs"));
                }
            }
            for fam in &d.families {
                let tail = fam.opens.iter().filter_map(|o| QPInf.tail_level(o)).max();
                if tail != Some(fam.tail) {
                    return Err("family tail differs".into());
                }
                let want: Vec<&ProjPoint> = prefix.iter().filter(|a| a.level() >= fam.tail).collect();
                if fam.inside.iter().map(|x| &x.0).collect::<Vec<_>>() != want {
                    return Err("family trace does not cover the tail".into());
                }
                for (a, cs) in &fam.inside {
                    for (o, c) in fam.opens.iter().zip(cs) {
                        check(a, o, c, true)?;
                    }
                }
            }
        }
        Depth::Unknown => {}
    }
    Ok(())
}

/// The four blocks of `A_k` and of `B_k`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Blocks {
    pub k: usize,
    pub a: Vec<ProjPoint>,
    pub a_eq: Vec<ProjPoint>,
    pub a_plus: Vec<ProjPoint>,
    pub a_minus: Vec<ProjPoint>,
    pub b: Vec<ProjPoint>,
    pub b_eq: Vec<ProjPoint>,
    pub b_plus: Vec<ProjPoint>,
    pub b_minus: Vec<ProjPoint>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClaimRow {
    pub k: usize,
    pub claim: String,
    pub holds: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LevelPartition {
    pub n_seq: Vec<usize>,
    pub blocks: Vec<Blocks>,
    pub claims: Vec<ClaimRow>,
}

impl LevelPartition {
    pub fn holds(&self) -> bool {
        self.claims.iter().all(|c| c.holds)
    }
}

fn finite_below(set: &DiscreteSet, m: usize, which: &'static str) -> Result<Vec<ProjPoint>, HomogeneityError> {
    set.below(m).ok_or(HomogeneityError::NotDeep(which))
}

/// Least admissible `n_{k+1}` after `n_k`.
fn next_index(f: &SetMap, nk: usize) -> Result<usize, HomogeneityError> {
    let mut next = nk + 1;
    for a in finite_below(&f.source, nk + 1, "source")? {
        next = next.max(f.forward(&a).expect("f is total on A").level() + 1);
    }
    for b in finite_below(&f.target, nk + 1, "target")? {
        next = next.max(f.backward(&b).expect("f is onto B").level() + 1);
    }
    Ok(next)
}

/// Greedy `n_0 = 0 < n_1 < ...`, up to the first entry past `horizon`.
pub fn build_index_sequence(f: &SetMap, horizon: usize) -> Result<Vec<usize>, HomogeneityError> {
    let mut n = vec![0];
    while *n.last().unwrap() <= horizon {
        let next = next_index(f, *n.last().unwrap())?;
        n.push(next);
    }
    if n[1] > horizon {
        return Err(HomogeneityError::HorizonExhausted(horizon));
    }
    Ok(n)
}

fn sorted(mut v: Vec<ProjPoint>) -> Vec<ProjPoint> {
    v.sort();
    v
}

fn image(f: impl Fn(&ProjPoint) -> Option<ProjPoint>, v: &[ProjPoint]) -> Vec<ProjPoint> {
    sorted(v.iter().filter_map(f).collect())
}

pub fn partition_levels(f: &SetMap, n_seq: &[usize]) -> Result<LevelPartition, HomogeneityError> {
    if n_seq.first() != Some(&0) || n_seq.windows(2).any(|w| w[0] >= w[1]) || n_seq.len() < 3 {
        return Err(HomogeneityError::InvalidSequence(format!("{n_seq:?}")));
    }
    for w in n_seq.windows(2) {
        if next_index(f, w[0])? > w[1] {
            return Err(HomogeneityError::InvalidSequence(format!("{} is too small after {}", w[1], w[0])));
        }
    }
    let g = f.inverse();
    let split = |map: &SetMap, lo: usize, hi: usize| -> Result<[Vec<ProjPoint>; 4], HomogeneityError> {
        let all: Vec<ProjPoint> =
            finite_below(&map.source, hi, "source")?.into_iter().filter(|p| p.level() >= lo).collect();
        let (mut eq, mut plus, mut minus) = (Vec::new(), Vec::new(), Vec::new());
        for a in &all {
            let l = map.forward(a).expect("total").level();
            if l >= hi {
                plus.push(a.clone());
            } else if l >= lo {
                eq.push(a.clone());
            } else {
                minus.push(a.clone());
            }
        }
        Ok([sorted(all), sorted(eq), sorted(plus), sorted(minus)])
    };
    let mut blocks = Vec::new();
    for (k, w) in n_seq.windows(2).enumerate() {
        let [a, a_eq, a_plus, a_minus] = split(f, w[0], w[1])?;
        let [b, b_eq, b_plus, b_minus] = split(&g, w[0], w[1])?;
        blocks.push(Blocks { k, a, a_eq, a_plus, a_minus, b, b_eq, b_plus, b_minus });
    }
    let fwd = |v: &[ProjPoint]| image(|p| f.forward(p), v);
    let bwd = |v: &[ProjPoint]| image(|p| f.backward(p), v);
    let mut claims = Vec::new();
    let mut push = |k: usize, claim: &str, holds: bool| claims.push(ClaimRow { k, claim: claim.into(), holds });
    for (k, bl) in blocks.iter().enumerate() {
        push(k, "f(A_k^=) = B_k^=", fwd(&bl.a_eq) == bl.b_eq);
        let (lo, hi) = (n_seq[k], n_seq[k + 1]);
        let strat = |p: &ProjPoint| p.level() > lo && p.level() < hi;
        push(k, "A_k^+ ∪ B_k^+ ⊆ X_{n_k+1} \\ X_{n_{k+1}}", bl.a_plus.iter().chain(&bl.b_plus).all(strat));
        if let Some(nx) = blocks.get(k + 1) {
            push(k, "f(A_k^+) = B_{k+1}^-", fwd(&bl.a_plus) == nx.b_minus);
            push(k, "f^-1(B_k^+) = A_{k+1}^-", bwd(&bl.b_plus) == nx.a_minus);
            push(k, "f(A_{k+1}^-) = B_k^+", fwd(&nx.a_minus) == bl.b_plus);
        }
    }
    Ok(LevelPartition { n_seq: n_seq.to_vec(), blocks, claims })
}

/// The two rebuilt skeleta and their checks.
#[derive(Clone, Debug)]
pub struct Rebuilt {
    pub source: Reskeleton,
    pub target: Reskeleton,
    /// `(point of A, new level, new level of f(point))` over the finite part.
    pub levels: Vec<(ProjPoint, usize, usize)>,
    pub rows: Vec<LedgerRow>,
}

/// First-fit clopen piece around each point of `plus` missing `rest`.
fn pieces_for(k: usize, plus: &[ProjPoint], rest: &[ProjPoint], bound: usize) -> Result<Vec<BasicOpen>, HomogeneityError> {
    plus.iter()
        .map(|a| {
            (0..MAX_REFINE)
                .filter_map(|r| cell(a, r, bound))
                .find(|c| rest.iter().all(|q| !member(q, c)))
                .ok_or(HomogeneityError::SeparationFailure { k })
        })
        .collect()
}

pub fn reskeletonize(
    f: &SetMap,
    part: &LevelPartition,
    budget: SkeletonBudget,
    rng: &mut Rng,
) -> Result<Rebuilt, HomogeneityError> {
    let n = &part.n_seq;
    let mut px = std::collections::BTreeMap::new();
    let mut pz = std::collections::BTreeMap::new();
    for bl in part.blocks.iter().filter(|b| b.k >= 1) {
        let bound = n[bl.k + 1];
        let rest_a: Vec<ProjPoint> = bl.a.iter().filter(|p| !bl.a_plus.contains(p)).cloned().collect();
        let rest_b: Vec<ProjPoint> = bl.b.iter().filter(|p| !bl.b_plus.contains(p)).cloned().collect();
        if !bl.a_plus.is_empty() {
            px.insert(bl.k, pieces_for(bl.k, &bl.a_plus, &rest_a, bound)?);
        }
        if !bl.b_plus.is_empty() {
            pz.insert(bl.k, pieces_for(bl.k, &bl.b_plus, &rest_b, bound)?);
        }
    }
    let source = Reskeleton::new(n.clone(), px)?;
    let target = Reskeleton::new(n.clone(), pz)?;
    let top = *n.last().unwrap();
    let mut levels = Vec::new();
    let mut bad = Vec::new();
    for a in finite_below(&f.source, top, "source")? {
        let b = f.forward(&a).expect("total");
        let (la, lb) = (source.new_level(&a), target.new_level(&b));
        if la != lb {
            bad.push(json!({ "point": a, "image": b }));
        }
        levels.push((a, la, lb));
    }
    for b in finite_below(&f.target, top, "target")? {
        let a = f.backward(&b).expect("onto");
        if source.new_level(&a) != target.new_level(&b) {
            bad.push(json!({ "point": a, "image": b }));
        }
    }
    let mut rows = vec![LedgerRow::new(
        "reskeleton",
        "f(A ∩ Y_k) = B ∩ Z_k",
        bad.is_empty(),
        json!({ "below": top, "mismatched": bad }),
    )];
    for (side, space) in [("source", &source), ("target", &target)] {
        for rep in run_suite(space, budget, rng) {
            rows.push(LedgerRow::new(
                format!("reskeleton-{side}"),
                &rep.kind.to_string(),
                rep.verdict == Verdict::Pass,
                serde_json::to_value(&rep).expect("serializable"),
            ));
            if let Some(r) = rows.last_mut() {
                r.verdict = rep.verdict;
            }
        }
    }
    Ok(Rebuilt { source, target, levels, rows })
}

#[derive(Clone, Debug)]
pub struct ExtendConfig {
    pub stages: usize,
    pub horizon: usize,
    pub classify: Budget,
    pub skeleton: SkeletonBudget,
    pub engine: EngineBudget,
    pub seed: u64,
}

impl Default for ExtendConfig {
    fn default() -> Self {
        ExtendConfig {
            stages: 60,
            horizon: 16,
            classify: Budget { points: 20, depth: 8 },
            skeleton: SkeletonBudget { samples: 20, depth: 6, horizon: 6 },
            engine: EngineBudget::default(),
            seed: 1,
        }
    }
}

/// An engine run extending `f`, with everything it rests on.
#[derive(Clone, Debug)]
pub struct Extension {
    pub branch: Depth,
    pub source_depth: DepthCertificate,
    pub target_depth: DepthCertificate,
    pub partition: Option<LevelPartition>,
    pub cuts: Vec<usize>,
    pub table: Vec<(ProjPoint, ProjPoint)>,
    pub rows: Vec<LedgerRow>,
    pub failure: Option<EngineError>,
}

impl Extension {
    pub fn verdict(&self) -> Verdict {
        let v = Verdict::all(self.rows.iter().map(|r| r.verdict));
        if self.failure.is_some() {
            v.and(Verdict::Fail)
        } else {
            v
        }
    }
}

/// `h(a) = f(a)` for every constructed `a ∈ A`, and `h(x) ∉ B` otherwise.
pub fn restriction_row(f: &SetMap, table: &[(ProjPoint, ProjPoint)]) -> LedgerRow {
    let bad: Vec<_> = table
        .iter()
        .filter(|(x, y)| match f.forward(x) {
            Some(fx) => fx != *y,
            None => f.target.contains(y),
        })
        .map(|(x, y)| json!([x, y]))
        .collect();
    let on_a = table.iter().filter(|(x, _)| f.source.contains(x)).count();
    LedgerRow::new("extension", "h|A = f", bad.is_empty(), json!({ "pairs_on_a": on_a, "bad": bad }))
}

/// What a replay needs to rebuild the engine run.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EngineSetup {
    pub source: SpaceId,
    pub target: SpaceId,
    pub anchors: Vec<(ProjPoint, ProjPoint)>,
    pub budget: EngineBudget,
    pub seed: u64,
}

fn run_engine(
    x: &Reskeleton,
    y: &Reskeleton,
    f: &SetMap,
    anchors: Vec<(ProjPoint, ProjPoint)>,
    cfg: &ExtendConfig,
    ext: &mut Extension,
) -> Result<(), HomogeneityError> {
    let setup = EngineSetup { source: x.id(), target: y.id(), anchors: anchors.clone(), budget: cfg.engine, seed: cfg.seed };
    ext.rows.push(LedgerRow::new("setup", "engine", true, serde_json::to_value(&setup).expect("serializable")));
    let mut e = Engine::new(x, y, anchors, Mode::Homeo, cfg.engine, cfg.seed)?;
    let out = e.run(cfg.stages);
    ext.table = e.state.points.iter().map(|p| (p.x.clone(), p.y.clone())).collect();
    ext.rows.extend(out.rows);
    ext.rows.push(restriction_row(f, &ext.table));
    ext.failure = out.failure;
    Ok(())
}

pub fn extend_bijection(f: &SetMap, cfg: &ExtendConfig) -> Result<Extension, HomogeneityError> {
    let mut rng = <Rng as rand::SeedableRng>::seed_from_u64(cfg.seed);
    let da = classify_depth(&f.source, cfg.horizon, cfg.classify, &mut rng);
    let db = classify_depth(&f.target, cfg.horizon, cfg.classify, &mut rng);
    if da.verdict == Depth::Unknown {
        return Err(HomogeneityError::Undecided("source"));
    }
    if db.verdict == Depth::Unknown {
        return Err(HomogeneityError::Undecided("target"));
    }
    if da.verdict != db.verdict {
        return Err(HomogeneityError::MixedDepth { from: da.verdict, to: db.verdict });
    }
    let mut ext = Extension {
        branch: da.verdict,
        source_depth: da,
        target_depth: db,
        partition: None,
        cuts: Vec::new(),
        table: Vec::new(),
        rows: Vec::new(),
        failure: None,
    };
    match ext.branch {
        Depth::Shallow => {
            let (Some(n), Some(_)) = (f.source.len(), f.target.len()) else {
                return Err(HomogeneityError::InfiniteAnchors);
            };
            let m = f.source.level_bound().max(f.target.level_bound()).unwrap_or(0);
            let space = Reskeleton::shifted(m);
            let anchors: Vec<(ProjPoint, ProjPoint)> = (0..n)
                .map(|i| {
                    let a = f.source.nth(i).expect("in range");
                    let b = f.forward(&a).expect("total");
                    (a, b)
                })
                .collect();
            ext.cuts = space.cuts().to_vec();
            run_engine(&space, &space, f, anchors, cfg, &mut ext)?;
        }
        Depth::Deep => {
            let n_seq = build_index_sequence(f, cfg.horizon)?;
            let part = partition_levels(f, &n_seq)?;
            let claims_ok = part.holds();
            let rebuilt = reskeletonize(f, &part, cfg.skeleton, &mut rng)?;
            ext.rows.push(LedgerRow::new(
                "partition",
                "claims",
                claims_ok,
                serde_json::to_value(&part.claims).expect("serializable"),
            ));
            ext.rows.extend(rebuilt.rows.iter().cloned());
            ext.cuts = n_seq.clone();
            ext.partition = Some(part);
            let top = *n_seq.last().unwrap();
            let anchors: Vec<(ProjPoint, ProjPoint)> = finite_below(&f.source, top, "source")?
                .into_iter()
                .map(|a| {
                    let b = f.forward(&a).expect("total");
                    (a, b)
                })
                .collect();
            run_engine(&rebuilt.source, &rebuilt.target, f, anchors, cfg, &mut ext)?;
        }
        Depth::Unknown => unreachable!("refused above"),
    }
    Ok(ext)
}

/// Random finite set of `n` distinct points with short supports.
pub fn random_finite_set(rng: &mut Rng, n: usize) -> DiscreteSet {
    let mut pts: Vec<ProjPoint> = Vec::new();
    while pts.len() < n {
        let p = crate::projective::random_point(rng, 4, 4);
        if !pts.contains(&p) {
            pts.push(p);
        }
    }
    DiscreteSet::Finite { points: pts }
}


#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn rng(seed: u64) -> Rng {
        Rng::seed_from_u64(seed)
    }

    const B: Budget = Budget { points: 12, depth: 8 };

    #[test]
    fn convergents_are_pell_solutions() {
        for i in 0..10 {
            let (h, k) = convergent(i);
            assert_eq!((h * h - 2 * k * k).abs(), 1);
        }
        let s = DiscreteSet::Convergents { level: 1 };
        let p = s.nth(3).unwrap();
        assert_eq!(s.index_of(&p), Some(3));
        assert!(!s.contains(&ProjPoint::from_ints(&[0, 1, 2]).unwrap()));
    }

    #[test]
    fn example_depths() {
        let mut r = rng(1);
        let units = classify_depth(&DiscreteSet::Units, 12, B, &mut r);
        assert_eq!(units.verdict, Depth::Deep);
        let d = units.deep.as_ref().unwrap();
        assert_eq!(d.below[3].1, vec![ProjPoint::unit(0), ProjPoint::unit(1), ProjPoint::unit(2)]);
        replay_depth(&DiscreteSet::Units, &units).unwrap();
        let shallow = [
            DiscreteSet::finite(vec![ProjPoint::unit(2), ProjPoint::from_ints(&[1, 5]).unwrap()]).unwrap(),
            DiscreteSet::Convergents { level: 0 },
            DiscreteSet::Convergents { level: 2 },
        ];
        for s in &shallow {
            let c = classify_depth(s, 12, B, &mut r);
            assert_eq!(c.verdict, Depth::Shallow, "{s:?}");
            replay_depth(s, &c).unwrap();
        }
        let c = classify_depth(&DiscreteSet::Convergents { level: 0 }, 12, B, &mut r);
        assert_eq!(c.shallow.unwrap().m, 1);
    }

    #[test]
    fn tampered_depth_certificates_fail_replay() {
        let mut r = rng(2);
        let s = DiscreteSet::Convergents { level: 0 };
        let mut c = classify_depth(&s, 10, B, &mut r);
        c.shallow.as_mut().unwrap().radius = int(5);
        assert!(replay_depth(&s, &c).is_err());
        let mut c = classify_depth(&DiscreteSet::Units, 10, B, &mut r);
        c.deep.as_mut().unwrap().below[2].1.pop();
        assert!(replay_depth(&DiscreteSet::Units, &c).is_err());
    }

    #[test]
    fn identity_partition() {
        let f = SetMap::new(DiscreteSet::Units, DiscreteSet::Units, IndexBijection::identity()).unwrap();
        let n = build_index_sequence(&f, 6).unwrap();
        assert_eq!(n, (0..=7).collect::<Vec<_>>());
        let p = partition_levels(&f, &n).unwrap();
        assert!(p.holds());
        for b in &p.blocks {
            assert_eq!(b.a_eq, b.a);
            assert!(b.a_plus.is_empty() && b.a_minus.is_empty());
        }
    }

    #[test]
    fn shifted_partition_has_plus_blocks() {
        // e_4 lands past n_2 = 6
        let perm = vec![2, 1, 0, 5, 9, 3, 6, 7, 8, 4];
        let f = SetMap::new(DiscreteSet::Units, DiscreteSet::Units, IndexBijection::new(perm).unwrap()).unwrap();
        let n = build_index_sequence(&f, 10).unwrap();
        let p = partition_levels(&f, &n).unwrap();
        assert!(p.holds(), "{:?}", p.claims);
        assert!(p.blocks.iter().any(|b| !b.a_plus.is_empty()));
        // a sequence that ignores the displayed conditions is rejected
        assert!(partition_levels(&f, &[0, 1, 2, 3]).is_err());
    }

    #[test]
    fn shallow_target_is_rejected() {
        let f = SetMap::new(DiscreteSet::Units, DiscreteSet::Convergents { level: 0 }, IndexBijection::identity()).unwrap();
        assert!(matches!(build_index_sequence(&f, 6), Err(HomogeneityError::NotDeep(_))));
        let cfg = ExtendConfig { stages: 4, ..ExtendConfig::default() };
        assert!(matches!(extend_bijection(&f, &cfg), Err(HomogeneityError::MixedDepth { .. })));
    }

    #[test]
    fn reskeleton_matches_levels() {
        let mut r = rng(5);
        let perm = vec![2, 1, 0, 5, 9, 3, 6, 7, 8, 4];
        let f = SetMap::new(DiscreteSet::Units, DiscreteSet::Steps, IndexBijection::new(perm).unwrap()).unwrap();
        let n = build_index_sequence(&f, 10).unwrap();
        let p = partition_levels(&f, &n).unwrap();
        assert!(p.holds());
        let budget = SkeletonBudget { samples: 10, depth: 6, horizon: 5 };
        let rb = reskeletonize(&f, &p, budget, &mut r).unwrap();
        assert!(rb.rows.iter().all(|x| x.verdict == Verdict::Pass), "{:?}", rb.rows.iter().map(|x| (&x.stage, &x.clause, x.verdict)).collect::<Vec<_>>());
        assert!(rb.levels.iter().all(|(_, a, b)| a == b));
        assert!(!rb.source.pieces(1).is_empty() && !rb.target.pieces(1).is_empty());
    }

    #[test]
    fn deep_extension_is_clean() {
        let perm = vec![2, 1, 0, 5, 9, 3, 6, 7, 8, 4];
        let f = SetMap::new(DiscreteSet::Units, DiscreteSet::Steps, IndexBijection::new(perm).unwrap()).unwrap();
        let cfg = ExtendConfig { stages: 30, horizon: 12, ..ExtendConfig::default() };
        let ext = extend_bijection(&f, &cfg).unwrap();
        assert_eq!(ext.branch, Depth::Deep);
        let bad: Vec<_> = ext.rows.iter().filter(|r| r.verdict != Verdict::Pass).map(|r| (&r.stage, &r.clause)).collect();
        assert!(bad.is_empty() && ext.failure.is_none(), "{bad:?} {:?}", ext.failure);
    }

    #[test]
    fn two_point_sets_extend() {
        let a = DiscreteSet::finite(vec![ProjPoint::unit(0), ProjPoint::from_ints(&[0, 1, 3]).unwrap()]).unwrap();
        let b = DiscreteSet::finite(vec![ProjPoint::from_ints(&[1, 2]).unwrap(), ProjPoint::unit(2)]).unwrap();
        let f = SetMap::new(a, b, IndexBijection::new(vec![1, 0]).unwrap()).unwrap();
        let cfg = ExtendConfig { stages: 30, ..ExtendConfig::default() };
        let ext = extend_bijection(&f, &cfg).unwrap();
        assert_eq!(ext.branch, Depth::Shallow);
        assert_eq!(ext.verdict(), Verdict::Pass, "{:?}", ext.failure);
        for (x, y) in &ext.table {
            if let Some(fx) = f.forward(x) {
                assert_eq!(&fx, y);
            }
        }
    }
}
