//! Budgeted checkers for the skeleton properties of a presentation: vanishing,
//! (inductively) superconnecting, coregular, nowhere dense steps, crowdedness
//! and semiregularity. Every verdict comes with evidence that `replay` can
//! re-check through the presentation's oracles.

use crate::presentation::{Closure, SpaceId, SpacePresentation, Verdict};
use crate::Rng;
use rand::Rng as _;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use std::fmt;
use thiserror::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SkeletonKind {
    Vanishing,
    Superconnecting,
    InductivelySuperconnecting,
    Coregular,
    Superskeleton,
    Canonical,
    NowhereDense,
    Crowded,
    Semiregular,
}

impl fmt::Display for SkeletonKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = serde_json::to_value(self).unwrap();
        write!(f, "{}", s.as_str().unwrap())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkeletonBudget {
    pub samples: usize,
    /// Depth handed to `in_closure`.
    pub depth: usize,
    /// Largest skeleton index examined.
    pub horizon: usize,
}

impl Default for SkeletonBudget {
    fn default() -> Self {
        SkeletonBudget { samples: 100, depth: 8, horizon: 8 }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SkeletonError {
    #[error("no nowhere dense step found within horizon {0}")]
    HorizonExhausted(usize),
    #[error("not a superskeleton: the {0} check did not pass")]
    NotSuperskeleton(SkeletonKind),
}

type Cert<P, O> = Closure<P, O>;

/// One checked instance of a clause.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "evidence", rename_all = "snake_case")]
#[serde(bound = "P: Serialize + DeserializeOwned, O: Serialize + DeserializeOwned")]
pub enum Evidence<P, O> {
    /// `point ∉ X_level`.
    Escapes { point: P, level: usize },
    MissingFromBase { point: P },
    /// `point ∈ X_{n+1} \ X_n`.
    NotDecreasing { point: P, n: usize },
    NeverEscapes { point: P, horizon: usize },
    /// `X_level` contains `inhabitant`, and each sampled point of it lies in
    /// the closure of `open ∩ X_within`.
    Tail { within: usize, open: O, level: usize, inhabitant: P, inside: Vec<(P, Cert<P, O>)> },
    /// Every candidate level either looked empty or had a point outside the closure.
    NoTail { within: usize, open: O, refuted: Vec<(usize, Option<(P, Cert<P, O>)>)> },
    /// `point ∉ X_n`, `point ∈ inner ⊆ outer`, and sampled points outside
    /// `outer ∪ X_n` are separated from `inner`.
    Regular { point: P, n: usize, outer: O, inner: O, outside: Vec<(P, Cert<P, O>)> },
    /// For each tried `inner`, a point outside `outer ∪ X_n` in its closure.
    NotRegular { point: P, n: usize, outer: O, tried: Vec<(O, P, Cert<P, O>)> },
    Crowded { point: P, level: usize, nbhd: O, other: P },
    Isolated { point: P, level: usize, nbhd: O },
    /// `nbhd` meets `X_m` at `point` and holds `other ∈ X_n \ X_m`.
    Thin { n: usize, m: usize, nbhd: O, point: P, other: P },
    /// No probe of `nbhd ∩ X_n` avoids `X_m`.
    Thick { n: usize, m: usize, nbhd: O, point: P },
    /// `open ∋ point` sits in `outer`; each probed point of `cl(open) \ open`
    /// has a nearby point outside `cl(open)`.
    RegularOpen { point: P, outer: O, open: O, boundary: Vec<BoundaryProbe<P, O>> },
    Unknown { point: P, open: O, note: String },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(bound = "P: Serialize + DeserializeOwned, O: Serialize + DeserializeOwned")]
pub struct BoundaryProbe<P, O> {
    pub point: P,
    pub closure: Cert<P, O>,
    pub depth: usize,
    pub outside: P,
    pub separated: Cert<P, O>,
}

impl<P, O> Evidence<P, O> {
    pub fn verdict(&self) -> Verdict {
        use Evidence::*;
        match self {
            MissingFromBase { .. } | NotDecreasing { .. } | NeverEscapes { .. } | NoTail { .. } => Verdict::Fail,
            NotRegular { .. } | Isolated { .. } | Thick { .. } => Verdict::Fail,
            Unknown { .. } => Verdict::Inconclusive,
            _ => Verdict::Pass,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(bound = "P: Serialize + DeserializeOwned, O: Serialize + DeserializeOwned")]
pub struct SkeletonReport<P, O> {
    pub kind: SkeletonKind,
    pub verdict: Verdict,
    pub witnesses: Vec<Evidence<P, O>>,
}

impl<P, O> SkeletonReport<P, O> {
    fn new(kind: SkeletonKind, witnesses: Vec<Evidence<P, O>>) -> Self {
        let verdict = Verdict::all(witnesses.iter().map(Evidence::verdict));
        SkeletonReport { kind, verdict, witnesses }
    }

    fn merge(kind: SkeletonKind, parts: Vec<SkeletonReport<P, O>>) -> Self {
        SkeletonReport::new(kind, parts.into_iter().flat_map(|r| r.witnesses).collect())
    }

    pub fn failures(&self) -> impl Iterator<Item = &Evidence<P, O>> {
        self.witnesses.iter().filter(|e| e.verdict() == Verdict::Fail)
    }
}

pub type ReportOf<S> = SkeletonReport<<S as SpacePresentation>::Point, <S as SpacePresentation>::Open>;
pub type EvidenceOf<S> = Evidence<<S as SpacePresentation>::Point, <S as SpacePresentation>::Open>;

/// Enumeration prefix plus random points.
fn probe_points<S: SpacePresentation>(s: &S, n: usize, rng: &mut Rng) -> Vec<S::Point> {
    let mut v: Vec<S::Point> = s.points().take(n).collect();
    v.extend((0..n).filter_map(|_| s.sample_point(rng, 0)));
    v
}

/// A sampled point of `X_n`, if the sampler finds one.
fn sample_in<S: SpacePresentation>(s: &S, n: usize, rng: &mut Rng) -> Option<S::Point> {
    (0..16).find_map(|_| s.sample_point(rng, n).filter(|p| s.skeleton_member(n, p)))
}

pub fn check_vanishing<S: SpacePresentation>(s: &S, budget: SkeletonBudget, rng: &mut Rng) -> ReportOf<S> {
    let mut out = Vec::new();
    for p in probe_points(s, budget.samples, rng) {
        if !s.skeleton_member(0, &p) {
            out.push(Evidence::MissingFromBase { point: p });
            continue;
        }
        if let Some(n) = (0..budget.horizon).find(|&n| s.skeleton_member(n + 1, &p) && !s.skeleton_member(n, &p)) {
            out.push(Evidence::NotDecreasing { point: p, n });
            continue;
        }
        match (1..=budget.horizon).find(|&n| !s.skeleton_member(n, &p)) {
            Some(level) => out.push(Evidence::Escapes { point: p, level }),
            None => out.push(Evidence::NeverEscapes { point: p, horizon: budget.horizon }),
        }
    }
    SkeletonReport::new(SkeletonKind::Vanishing, out)
}

/// Find `m` with `∅ != X_m ⊆ cl(open ∩ X_within)` on samples.
fn find_tail<S: SpacePresentation>(
    s: &S,
    within: usize,
    open: &S::Open,
    budget: SkeletonBudget,
    rng: &mut Rng,
) -> EvidenceOf<S> {
    let mut cands: Vec<usize> = s.tail_level(open).into_iter().collect();
    cands.extend((within..=within + budget.horizon).filter(|m| Some(*m) != s.tail_level(open)));
    let mut refuted = Vec::new();
    let mut unknown = None;
    'cand: for m in cands {
        let pts: Vec<S::Point> = (0..4).filter_map(|_| sample_in(s, m, rng)).collect();
        let Some(inhabitant) = pts.first().cloned() else {
            refuted.push((m, None));
            continue;
        };
        let mut inside = Vec::new();
        for q in pts {
            let c = s.in_closure(&q, open, budget.depth);
            let lands = match &c {
                Closure::Member => s.skeleton_member(within, &q),
                Closure::Tail { witness, .. } | Closure::Near { witness, .. } => s.skeleton_member(within, witness),
                _ => false,
            };
            if c.is_out() {
                refuted.push((m, Some((q, c))));
                continue 'cand;
            }
            if !lands {
                unknown.get_or_insert((q, m));
                continue 'cand;
            }
            inside.push((q, c));
        }
        return Evidence::Tail { within, open: open.clone(), level: m, inhabitant, inside };
    }
    match unknown {
        Some((q, m)) => Evidence::Unknown { point: q, open: open.clone(), note: format!("closure undecided at level {m}") },
        None => Evidence::NoTail { within, open: open.clone(), refuted },
    }
}

pub fn check_superconnecting<S: SpacePresentation>(s: &S, budget: SkeletonBudget, rng: &mut Rng) -> ReportOf<S> {
    let mut out = Vec::new();
    for i in 0..budget.samples {
        let open = if i % 2 == 0 { s.base(i / 2) } else { s.sample_open(rng) };
        if s.meets(&open, &open).is_none() {
            continue;
        }
        out.push(find_tail(s, 0, &open, budget, rng));
    }
    SkeletonReport::new(SkeletonKind::Superconnecting, out)
}

/// Opens relative to `X_n` are sampled as `nbhd(p, k) ∩ X_n` with `p ∈ X_n`.
pub fn check_inductively_superconnecting<S: SpacePresentation>(
    s: &S,
    budget: SkeletonBudget,
    rng: &mut Rng,
) -> ReportOf<S> {
    let mut out = Vec::new();
    for i in 0..budget.samples {
        let n = i % (budget.horizon + 1);
        let Some(p) = sample_in(s, n, rng) else {
            continue;
        };
        let open = s.nbhd(&p, rng.gen_range(0..4));
        out.push(find_tail(s, n, &open, budget, rng));
    }
    SkeletonReport::new(SkeletonKind::InductivelySuperconnecting, out)
}

/// Search `V = nbhd(x, j)`, `j > k`, whose closure misses every probe outside
/// `nbhd(x, k) ∪ X_n`.
fn find_regular<S: SpacePresentation>(
    s: &S,
    x: &S::Point,
    n: usize,
    k: usize,
    budget: SkeletonBudget,
    rng: &mut Rng,
) -> EvidenceOf<S> {
    let outer = s.nbhd(x, k);
    let keep = |z: &S::Point| !s.member(z, &outer) && !s.skeleton_member(n, z);
    let shared: Vec<S::Point> = probe_points(s, 12, rng).into_iter().filter(|z| keep(z)).collect();
    let mut tried = Vec::new();
    let mut unknown = None;
    for j in k + 1..=k + budget.depth {
        let inner = s.nbhd(x, j);
        let mut zs = shared.clone();
        zs.extend(s.closure_probes(&inner, rng).into_iter().filter(|z| keep(z)));
        let mut outside = Vec::new();
        let mut bad = None;
        for z in zs {
            let c = s.in_closure(&z, &inner, budget.depth + j);
            if c.is_in() {
                bad = Some((z, c));
                break;
            }
            if !c.is_out() {
                unknown.get_or_insert(z.clone());
                bad = None;
                outside.clear();
                break;
            }
            outside.push((z, c));
        }
        match bad {
            Some((z, c)) => tried.push((inner, z, c)),
            None if unknown.is_none() => {
                return Evidence::Regular { point: x.clone(), n, outer, inner, outside };
            }
            None => {}
        }
    }
    match unknown {
        Some(z) => Evidence::Unknown { point: z, open: outer, note: format!("separation from a neighbourhood of {x} undecided") },
        None => Evidence::NotRegular { point: x.clone(), n, outer, tried },
    }
}

pub fn check_coregular<S: SpacePresentation>(s: &S, budget: SkeletonBudget, rng: &mut Rng) -> ReportOf<S> {
    let mut out = Vec::new();
    for i in 0..budget.samples {
        let n = 1 + i % budget.horizon.max(1);
        let Some(x) = (0..16).find_map(|_| s.sample_point(rng, 0).filter(|x| !s.skeleton_member(n, x))) else {
            continue;
        };
        let k = rng.gen_range(1..5);
        out.push(find_regular(s, &x, n, k, budget, rng));
    }
    SkeletonReport::new(SkeletonKind::Coregular, out)
}

/// Is `X_m` nowhere dense in `X_n`, on samples? `None` when no point of `X_m` was found.
fn thin_evidence<S: SpacePresentation>(
    s: &S,
    n: usize,
    m: usize,
    budget: SkeletonBudget,
    rng: &mut Rng,
) -> Option<Vec<EvidenceOf<S>>> {
    let mut out = Vec::new();
    for _ in 0..budget.samples {
        let Some(p) = sample_in(s, m, rng) else {
            continue;
        };
        let nbhd = s.nbhd(&p, rng.gen_range(0..budget.depth.max(1)));
        let other = s.nearby(&p, &nbhd).into_iter().find(|q| {
            s.member(q, &nbhd) && s.skeleton_member(n, q) && !s.skeleton_member(m, q)
        });
        out.push(match other {
            Some(other) => Evidence::Thin { n, m, nbhd, point: p, other },
            None => Evidence::Thick { n, m, nbhd, point: p },
        });
    }
    (!out.is_empty()).then_some(out)
}

/// `X_{n+1}` is nowhere dense in `X_n`.
pub fn check_nowhere_dense<S: SpacePresentation>(s: &S, n: usize, budget: SkeletonBudget, rng: &mut Rng) -> ReportOf<S> {
    SkeletonReport::new(SkeletonKind::NowhereDense, thin_evidence(s, n, n + 1, budget, rng).unwrap_or_default())
}

pub fn check_crowded<S: SpacePresentation>(s: &S, budget: SkeletonBudget, rng: &mut Rng) -> ReportOf<S> {
    let top = s.top_level().unwrap_or(budget.horizon).min(budget.horizon);
    let mut out = Vec::new();
    for i in 0..budget.samples {
        let level = i % (top + 1);
        let Some(p) = sample_in(s, level, rng) else {
            continue;
        };
        let nbhd = s.nbhd(&p, rng.gen_range(0..budget.depth.max(1)));
        let other = s
            .nearby(&p, &nbhd)
            .into_iter()
            .find(|q| *q != p && s.member(q, &nbhd) && s.skeleton_member(level, q));
        out.push(match other {
            Some(other) => Evidence::Crowded { point: p, level, nbhd, other },
            None => Evidence::Isolated { point: p, level, nbhd },
        });
    }
    SkeletonReport::new(SkeletonKind::Crowded, out)
}

/// For `x` and `U = nbhd(x, k)`: take `V` from the coregularity search at
/// `n = level(x) + 1` and certify that `V` is regular open on boundary probes.
pub fn check_semiregular<S: SpacePresentation>(s: &S, budget: SkeletonBudget, rng: &mut Rng) -> ReportOf<S> {
    let mut out = Vec::new();
    for _ in 0..budget.samples {
        let Some(x) = s.sample_point(rng, 0) else {
            continue;
        };
        let n = (0..).find(|&n| !s.skeleton_member(n, &x)).unwrap();
        let k = rng.gen_range(1..4);
        let (outer, open) = match find_regular(s, &x, n, k, budget, rng) {
            Evidence::Regular { outer, inner, .. } => (outer, inner),
            other => {
                out.push(other);
                continue;
            }
        };
        let mut zs = s.closure_probes(&open, rng);
        zs.extend(s.nearby(&x, &outer));
        let mut boundary = Vec::new();
        let mut stuck = None;
        for z in zs {
            if s.member(&z, &open) {
                continue;
            }
            let closure = s.in_closure(&z, &open, budget.depth);
            if !closure.is_in() {
                continue;
            }
            let near = s.nbhd(&z, budget.depth);
            let found = s.nearby(&z, &near).into_iter().find_map(|w| {
                let c = s.in_closure(&w, &open, 2 * budget.depth + 4);
                c.is_out().then_some((w, c))
            });
            match found {
                Some((outside, separated)) => {
                    boundary.push(BoundaryProbe { point: z, closure, depth: budget.depth, outside, separated })
                }
                None => {
                    stuck = Some(z);
                    break;
                }
            }
        }
        out.push(match stuck {
            Some(z) => Evidence::Unknown { point: z, open, note: "boundary point with no nearby exterior probe".into() },
            None => Evidence::RegularOpen { point: x, outer, open, boundary },
        });
    }
    SkeletonReport::new(SkeletonKind::Semiregular, out)
}

pub fn check_superskeleton<S: SpacePresentation>(s: &S, budget: SkeletonBudget, rng: &mut Rng) -> ReportOf<S> {
    SkeletonReport::merge(
        SkeletonKind::Superskeleton,
        vec![
            check_vanishing(s, budget, rng),
            check_inductively_superconnecting(s, budget, rng),
            check_coregular(s, budget, rng),
        ],
    )
}

pub fn check_canonical<S: SpacePresentation>(s: &S, budget: SkeletonBudget, rng: &mut Rng) -> ReportOf<S> {
    let mut parts = vec![check_superskeleton(s, budget, rng)];
    for n in 0..budget.horizon {
        parts.push(check_nowhere_dense(s, n, budget, rng));
    }
    SkeletonReport::merge(SkeletonKind::Canonical, parts)
}

/// The checks run by `verify`: each property on its own row.
pub fn run_suite<S: SpacePresentation>(s: &S, budget: SkeletonBudget, rng: &mut Rng) -> Vec<ReportOf<S>> {
    let mut dense = Vec::new();
    for n in 0..budget.horizon {
        dense.push(check_nowhere_dense(s, n, budget, rng));
    }
    vec![
        check_vanishing(s, budget, rng),
        check_superconnecting(s, budget, rng),
        check_inductively_superconnecting(s, budget, rng),
        check_coregular(s, budget, rng),
        SkeletonReport::merge(SkeletonKind::NowhereDense, dense),
        check_crowded(s, budget, rng),
    ]
}

/// `n_0 = 0`, then each next index is the least one whose set is certified
/// nowhere dense in the previous one; indices up to `budget.horizon`.
pub fn canonicalize<S: SpacePresentation>(s: &S, budget: SkeletonBudget, rng: &mut Rng) -> Result<Vec<usize>, SkeletonError> {
    let sk = check_superskeleton(s, budget, rng);
    if sk.verdict != Verdict::Pass {
        let kind = sk
            .failures()
            .next()
            .map(|e| match e {
                Evidence::MissingFromBase { .. } | Evidence::NotDecreasing { .. } | Evidence::NeverEscapes { .. } => {
                    SkeletonKind::Vanishing
                }
                Evidence::NoTail { .. } => SkeletonKind::InductivelySuperconnecting,
                _ => SkeletonKind::Coregular,
            })
            .unwrap_or(SkeletonKind::Superskeleton);
        return Err(SkeletonError::NotSuperskeleton(kind));
    }
    let mut seq = vec![0];
    loop {
        let cur = *seq.last().unwrap();
        let next = (cur + 1..=budget.horizon).find(|&m| {
            thin_evidence(s, cur, m, budget, rng)
                .is_some_and(|ev| ev.iter().all(|e| e.verdict() == Verdict::Pass))
        });
        match next {
            Some(m) => seq.push(m),
            None if seq.len() == 1 => return Err(SkeletonError::HorizonExhausted(budget.horizon)),
            None => return Ok(seq),
        }
    }
}

/// Re-check one piece of evidence through the oracles. Claims of emptiness
/// need a declared top level; "no probe found" claims are re-probed.
pub fn replay<S: SpacePresentation>(s: &S, e: &EvidenceOf<S>) -> Result<(), String> {
    use Evidence::*;
    let need = |ok: bool, why: String| if ok { Ok(()) } else { Err(why) };
    let closure = |p: &S::Point, o: &S::Open, c: &Cert<S::Point, S::Open>| s.check_closure(p, o, c);
    match e {
        Escapes { point, level } => need(!s.skeleton_member(*level, point), format!("{point} lies in X_{level}")),
        MissingFromBase { point } => need(!s.skeleton_member(0, point), format!("{point} lies in X_0")),
        NotDecreasing { point, n } => need(
            s.skeleton_member(n + 1, point) && !s.skeleton_member(*n, point),
            format!("{point} does not break monotonicity at {n}"),
        ),
        NeverEscapes { point, horizon } => {
            need((0..=*horizon).all(|n| s.skeleton_member(n, point)), format!("{point} escapes before {horizon}"))
        }
        Tail { within, open, level, inhabitant, inside } => {
            need(s.skeleton_member(*level, inhabitant), format!("{inhabitant} is not in X_{level}"))?;
            for (q, c) in inside {
                need(s.skeleton_member(*level, q) && c.is_in(), format!("{q} is not a certified point of X_{level}"))?;
                closure(q, open, c)?;
                let w = match c {
                    Closure::Tail { witness, .. } | Closure::Near { witness, .. } => witness,
                    _ => q,
                };
                need(s.skeleton_member(*within, w), format!("witness {w} is not in X_{within}"))?;
            }
            Ok(())
        }
        NoTail { open, refuted, .. } => {
            for (m, r) in refuted {
                match r {
                    None => need(
                        s.top_level().is_some_and(|t| *m > t),
                        format!("emptiness of X_{m} is not declared"),
                    )?,
                    Some((q, c)) => {
                        need(s.skeleton_member(*m, q) && c.is_out(), format!("{q} does not refute level {m}"))?;
                        closure(q, open, c)?;
                    }
                }
            }
            Ok(())
        }
        Regular { point, n, outer, inner, outside } => {
            need(!s.skeleton_member(*n, point) && s.member(point, inner), format!("{point} is not in {inner} off X_{n}"))?;
            for (z, c) in outside {
                need(!s.member(z, outer) && !s.skeleton_member(*n, z) && c.is_out(), format!("{z} is not a separated outside point"))?;
                closure(z, inner, c)?;
            }
            Ok(())
        }
        NotRegular { point, n, outer, tried } => {
            need(!s.skeleton_member(*n, point), format!("{point} lies in X_{n}"))?;
            for (v, z, c) in tried {
                need(!s.member(z, outer) && !s.skeleton_member(*n, z) && c.is_in(), format!("{z} does not refute {v}"))?;
                closure(z, v, c)?;
            }
            Ok(())
        }
        Crowded { point, level, nbhd, other } => need(
            point != other
                && s.member(point, nbhd)
                && s.member(other, nbhd)
                && s.skeleton_member(*level, point)
                && s.skeleton_member(*level, other),
            format!("{other} does not crowd {point} in {nbhd}"),
        ),
        Isolated { point, level, nbhd } => need(
            s.member(point, nbhd)
                && !s.nearby(point, nbhd).iter().any(|q| q != point && s.member(q, nbhd) && s.skeleton_member(*level, q)),
            format!("{point} is not isolated in {nbhd}"),
        ),
        Thin { n, m, nbhd, point, other } => need(
            s.skeleton_member(*m, point)
                && s.member(point, nbhd)
                && s.member(other, nbhd)
                && s.skeleton_member(*n, other)
                && !s.skeleton_member(*m, other),
            format!("{other} is not a point of X_{n} off X_{m} in {nbhd}"),
        ),
        Thick { n, m, nbhd, point } => need(
            s.skeleton_member(*m, point)
                && !s.nearby(point, nbhd).iter().any(|q| s.member(q, nbhd) && s.skeleton_member(*n, q) && !s.skeleton_member(*m, q)),
            format!("{nbhd} has a probe in X_{n} off X_{m}"),
        ),
        RegularOpen { point, open, boundary, .. } => {
            need(s.member(point, open), format!("{point} is not in {open}"))?;
            for b in boundary {
                need(b.closure.is_in() && b.separated.is_out(), format!("probe at {} is not certified", b.point))?;
                closure(&b.point, open, &b.closure)?;
                closure(&b.outside, open, &b.separated)?;
                need(s.member(&b.outside, &s.nbhd(&b.point, b.depth)), format!("{} is not near {}", b.outside, b.point))?;
            }
            Ok(())
        }
        Unknown { .. } => Ok(()),
    }
}

pub fn replay_report<S: SpacePresentation>(s: &S, r: &ReportOf<S>) -> Result<(), String> {
    let v = Verdict::all(r.witnesses.iter().map(Evidence::verdict));
    if v != r.verdict {
        return Err(format!("recorded verdict {:?} but evidence gives {v:?}", r.verdict));
    }
    r.witnesses.iter().try_for_each(|e| replay(s, e))
}

// ---------------------------------------------------------------------------
// Tampered skeleta

/// Ways to break a skeleton, for testing that the checkers notice.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "mutation", rename_all = "kebab-case")]
pub enum Mutation {
    /// The first enumerated point leaves every `X_n`, `X_0` included.
    DropFromBase,
    /// Points of level `at + 1` leave `X_at`.
    Unsorted { at: usize },
    /// The first enumerated point stays in every `X_n`.
    Sticky,
    /// `X_n = ∅` from `from` on.
    Collapse { from: usize },
    /// `X'_n = X_{n/2}`: each set repeated.
    Stutter,
}

impl Mutation {
    /// One of each kind, parameters drawn from `rng`.
    pub fn seeded(rng: &mut Rng) -> [Mutation; 5] {
        [
            Mutation::DropFromBase,
            Mutation::Unsorted { at: rng.gen_range(0..3) },
            Mutation::Sticky,
            Mutation::Collapse { from: rng.gen_range(1..4) },
            Mutation::Stutter,
        ]
    }
}

/// Levels beyond this are not distinguished by `Mutant::level`.
const LEVEL_CAP: usize = 64;

#[derive(Clone, Debug)]
pub struct Mutant<S: SpacePresentation> {
    pub base: S,
    pub mutation: Mutation,
    marked: S::Point,
}

impl<S: SpacePresentation> Mutant<S> {
    pub fn new(base: S, mutation: Mutation) -> Self {
        let marked = base.points().next().expect("nonempty space");
        Mutant { base, mutation, marked }
    }
}

impl<S: SpacePresentation> SpacePresentation for Mutant<S> {
    type Point = S::Point;
    type Open = S::Open;

    fn id(&self) -> SpaceId {
        SpaceId::Mutant { base: Box::new(self.base.id()), mutation: self.mutation }
    }

    fn points(&self) -> Box<dyn Iterator<Item = S::Point> + '_> {
        self.base.points()
    }

    fn point_cmp(&self, a: &S::Point, b: &S::Point) -> Ordering {
        self.base.point_cmp(a, b)
    }

    fn base(&self, i: usize) -> S::Open {
        self.base.base(i)
    }

    fn member(&self, p: &S::Point, o: &S::Open) -> bool {
        self.base.member(p, o)
    }

    fn level(&self, p: &S::Point) -> usize {
        (0..LEVEL_CAP).take_while(|&n| self.skeleton_member(n + 1, p)).count()
    }

    fn skeleton_member(&self, n: usize, p: &S::Point) -> bool {
        let l = self.base.level(p);
        match self.mutation {
            Mutation::DropFromBase if *p == self.marked => false,
            Mutation::Sticky if *p == self.marked => true,
            Mutation::Unsorted { at } if n == at && l == at + 1 => false,
            Mutation::Collapse { from } if n >= from => false,
            Mutation::Stutter => l >= n / 2,
            _ => l >= n,
        }
    }

    fn top_level(&self) -> Option<usize> {
        match self.mutation {
            Mutation::Collapse { from } => Some(self.base.top_level().map_or(from - 1, |t| t.min(from - 1))),
            Mutation::Stutter => self.base.top_level().map(|t| 2 * t + 1),
            Mutation::Sticky => None,
            _ => self.base.top_level(),
        }
    }

    fn nbhd(&self, p: &S::Point, k: usize) -> S::Open {
        self.base.nbhd(p, k)
    }

    fn meets(&self, a: &S::Open, b: &S::Open) -> Option<S::Point> {
        self.base.meets(a, b)
    }

    fn tail_level(&self, o: &S::Open) -> Option<usize> {
        let m = self.base.tail_level(o)?;
        Some(if self.mutation == Mutation::Stutter { 2 * m } else { m })
    }

    fn density_witness(&self, o: &S::Open, target: &S::Point, w: &S::Open) -> Option<S::Point> {
        self.base.density_witness(o, target, w)
    }

    fn sample_point(&self, rng: &mut Rng, min_level: usize) -> Option<S::Point> {
        let from = if self.mutation == Mutation::Stutter { min_level / 2 } else { min_level };
        (0..64).find_map(|_| self.base.sample_point(rng, from).filter(|p| self.skeleton_member(min_level, p)))
    }

    fn sample_open(&self, rng: &mut Rng) -> S::Open {
        self.base.sample_open(rng)
    }

    fn nearby(&self, p: &S::Point, w: &S::Open) -> Vec<S::Point> {
        self.base.nearby(p, w)
    }

    fn closure_probes(&self, o: &S::Open, rng: &mut Rng) -> Vec<S::Point> {
        self.base.closure_probes(o, rng)
    }
}

// ---------------------------------------------------------------------------
// A finite discrete space

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Discrete {
    pub size: usize,
}

/// A subset of a finite discrete space, sorted.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Subset(pub Vec<usize>);

impl fmt::Display for Subset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|x| x.to_string()).collect();
        write!(f, "{{{}}}", parts.join(", "))
    }
}

impl SpacePresentation for Discrete {
    type Point = usize;
    type Open = Subset;

    fn id(&self) -> SpaceId {
        SpaceId::Discrete { size: self.size }
    }

    fn points(&self) -> Box<dyn Iterator<Item = usize> + '_> {
        Box::new(0..self.size)
    }

    fn point_cmp(&self, a: &usize, b: &usize) -> Ordering {
        a.cmp(b)
    }

    fn base(&self, i: usize) -> Subset {
        Subset(vec![i % self.size])
    }

    fn member(&self, p: &usize, o: &Subset) -> bool {
        o.0.binary_search(p).is_ok()
    }

    fn level(&self, _: &usize) -> usize {
        0
    }

    fn top_level(&self) -> Option<usize> {
        Some(0)
    }

    fn nbhd(&self, p: &usize, _: usize) -> Subset {
        Subset(vec![*p])
    }

    fn meets(&self, a: &Subset, b: &Subset) -> Option<usize> {
        a.0.iter().find(|x| self.member(x, b)).copied()
    }

    fn tail_level(&self, _: &Subset) -> Option<usize> {
        None
    }

    fn density_witness(&self, _: &Subset, _: &usize, _: &Subset) -> Option<usize> {
        None
    }

    fn sample_point(&self, rng: &mut Rng, min_level: usize) -> Option<usize> {
        (min_level == 0).then(|| rng.gen_range(0..self.size))
    }

    fn sample_open(&self, rng: &mut Rng) -> Subset {
        Subset(vec![rng.gen_range(0..self.size)])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::golomb::golomb_presentation;
    use crate::projective::{BasicOpen, ProjPoint, QPInf};
    use crate::qline::QLine;
    use crate::rat::int;
    use crate::singular::{q_mult, zbar, Projective};
    use rand::SeedableRng;

    fn small() -> SkeletonBudget {
        SkeletonBudget { samples: 24, depth: 8, horizon: 5 }
    }

    fn rng() -> Rng {
        Rng::seed_from_u64(3)
    }

    fn replays<S: SpacePresentation>(s: &S, r: &ReportOf<S>) {
        replay_report(s, r).unwrap_or_else(|e| panic!("{} does not replay: {e}", r.kind));
    }

    #[test]
    fn qpinf_passes_every_check() {
        let mut r = rng();
        for rep in run_suite(&QPInf, small(), &mut r) {
            let bad = rep.witnesses.iter().find(|e| e.verdict() != Verdict::Pass);
            assert_eq!(rep.verdict, Verdict::Pass, "{}: {:?}", rep.kind, bad);
            replays(&QPInf, &rep);
        }
        let rep = check_semiregular(&QPInf, small(), &mut r);
        assert_eq!(rep.verdict, Verdict::Pass, "{:?}", rep.failures().next());
        replays(&QPInf, &rep);
    }

    #[test]
    fn superconnecting_example() {
        let u = BasicOpen::chart(0).with_rat(1, int(0), int(1));
        match find_tail(&QPInf, 0, &u, small(), &mut rng()) {
            Evidence::Tail { level, .. } => assert_eq!(level, 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn qline_is_coregular_not_superconnected() {
        let mut r = rng();
        let rep = check_coregular(&QLine, small(), &mut r);
        assert_eq!(rep.verdict, Verdict::Pass);
        replays(&QLine, &rep);
        let rep = check_superconnecting(&QLine, small(), &mut r);
        assert_eq!(rep.verdict, Verdict::Fail);
        replays(&QLine, &rep);
        assert_eq!(check_vanishing(&QLine, small(), &mut r).verdict, Verdict::Pass);
        assert!(matches!(canonicalize(&QLine, small(), &mut r), Err(SkeletonError::NotSuperskeleton(_))));
    }

    #[test]
    fn golomb_is_not_coregular() {
        let g = golomb_presentation();
        let mut r = rng();
        let rep = check_coregular(&g, small(), &mut r);
        assert_eq!(rep.verdict, Verdict::Fail);
        replays(&g, &rep);
        let rep = check_superconnecting(&g, small(), &mut r);
        assert_eq!(rep.verdict, Verdict::Fail);
    }

    #[test]
    fn discrete_space_is_not_crowded() {
        let d = Discrete { size: 5 };
        let rep = check_crowded(&d, small(), &mut rng());
        assert_eq!(rep.verdict, Verdict::Fail);
        assert!(matches!(rep.failures().next(), Some(Evidence::Isolated { .. })));
        replays(&d, &rep);
    }

    #[test]
    fn canonical_sequences() {
        let mut r = rng();
        let sk = check_superskeleton(&QPInf, small(), &mut r);
        assert_eq!(sk.verdict, Verdict::Pass, "{:?}", sk.witnesses.iter().find(|e| e.verdict() != Verdict::Pass));
        assert_eq!(canonicalize(&QPInf, small(), &mut r).unwrap(), vec![0, 1, 2, 3, 4, 5]);
        let padded = Mutant::new(QPInf, Mutation::Stutter);
        let budget = SkeletonBudget { samples: 12, horizon: 10, ..small() };
        assert_eq!(canonicalize(&padded, budget, &mut r).unwrap(), vec![0, 2, 4, 6, 8, 10]);
    }

    #[test]
    fn every_mutation_is_caught() {
        let mut r = rng();
        for m in Mutation::seeded(&mut r) {
            let s = Mutant::new(QPInf, m);
            let mut reps = run_suite(&s, small(), &mut r);
            reps.push(check_superskeleton(&s, small(), &mut r));
            let caught = reps.iter().filter(|rep| rep.verdict == Verdict::Fail).count();
            assert!(caught > 0, "{m:?} slipped through");
            for rep in &reps {
                replays(&s, rep);
            }
        }
        let s = Mutant::new(QPInf, Mutation::Unsorted { at: 1 });
        let rep = check_vanishing(&s, small(), &mut r);
        assert!(rep.failures().any(|e| matches!(e, Evidence::NotDecreasing { n: 1, .. })));
        assert_eq!(s.level(&ProjPoint::unit(2)), 0);
    }

    #[test]
    fn superskeleton_implies_weaker_skeleta() {
        let mut r = rng();
        let z = Projective::new(zbar());
        let q = Projective::new(q_mult());
        for rep in [check_superskeleton(&z, small(), &mut r), check_superconnecting(&z, small(), &mut r)] {
            assert_eq!(rep.verdict, Verdict::Pass, "{}: {:?}", rep.kind, rep.failures().next());
            replays(&z, &rep);
        }
        for rep in [check_superskeleton(&q, small(), &mut r), check_coregular(&q, small(), &mut r)] {
            assert_eq!(rep.verdict, Verdict::Pass, "{}: {:?}", rep.kind, rep.failures().next());
        }
    }
}
