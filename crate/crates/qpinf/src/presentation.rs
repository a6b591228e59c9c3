//! Oracle bundles for countable spaces with a designated skeleton `X_0 ⊇ X_1 ⊇ ...`.

use crate::Rng;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use std::fmt::{Debug, Display};
use std::hash::Hash;

/// Names a space so certificates can be replayed against the same oracles.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SpaceId {
    Qpinf,
    Qline,
    Golomb,
    Kirch,
    /// Projective space of a singular model, by model name.
    Model(String),
    /// A finite discrete toy space with `size` points.
    Discrete { size: usize },
    /// A base space whose skeleton has been tampered with.
    Mutant { base: Box<SpaceId>, mutation: crate::skeleton::Mutation },
    /// QP^inf with the skeleton rebuilt from cut levels and clopen pieces.
    Reskeleton { cuts: Vec<usize>, pieces: Vec<(usize, Vec<crate::projective::BasicOpen>)> },
}

/// Outcome of one checked clause.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Inconclusive,
    Fail,
}

impl Verdict {
    /// The worse of the two.
    pub fn and(self, o: Verdict) -> Verdict {
        self.max(o)
    }

    pub fn all(it: impl IntoIterator<Item = Verdict>) -> Verdict {
        it.into_iter().fold(Verdict::Pass, Verdict::and)
    }
}

/// Answer to "is `p` in the closure of `o`?". Every variant except `Unknown`
/// is a certificate that can be re-checked with `member`, `meets` and `nbhd`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Closure<P, O> {
    /// `p` lies in the set itself.
    Member,
    /// `level(p) >= level` and the set's closure contains `X_level`;
    /// `witness` lies in the set and in `nbhd(p, depth)`.
    Tail { level: usize, depth: usize, witness: P },
    /// `witness` lies in the set and in `nbhd(p, depth)`.
    Near { depth: usize, witness: P },
    /// `nbhd` contains `p` and misses the set.
    Separated { nbhd: O },
    Unknown,
}

impl<P, O> Closure<P, O> {
    pub fn is_in(&self) -> bool {
        matches!(self, Closure::Member | Closure::Tail { .. } | Closure::Near { .. })
    }

    pub fn is_out(&self) -> bool {
        matches!(self, Closure::Separated { .. })
    }
}

/// Decode a certificate field.
pub fn decode<T: DeserializeOwned>(v: &serde_json::Value) -> Result<T, String> {
    T::deserialize(v).map_err(|e| e.to_string())
}

/// Enumeration prefix scanned by the default `nearby`.
pub const NEARBY_SCAN: usize = 2000;

pub trait SpacePresentation {
    type Point: Clone + Eq + Ord + Hash + Debug + Display + Serialize + DeserializeOwned;
    type Open: Clone + Eq + Hash + Debug + Display + Serialize + DeserializeOwned;

    fn id(&self) -> SpaceId;

    /// Injective enumeration in `point_cmp` order.
    fn points(&self) -> Box<dyn Iterator<Item = Self::Point> + '_>;

    /// Well-order with finite initial segments.
    fn point_cmp(&self, a: &Self::Point, b: &Self::Point) -> Ordering;

    fn base(&self, i: usize) -> Self::Open;

    fn member(&self, p: &Self::Point, o: &Self::Open) -> bool;

    fn level(&self, p: &Self::Point) -> usize;

    fn skeleton_member(&self, n: usize, p: &Self::Point) -> bool {
        self.level(p) >= n
    }

    /// `Some(m)` when `X_n` is empty for every `n > m`.
    fn top_level(&self) -> Option<usize>;

    /// `O_k(p)`: decreasing in `k`, a base at `p`, avoiding `X_{1+level(p)}`.
    fn nbhd(&self, p: &Self::Point, k: usize) -> Self::Open;

    fn meets(&self, a: &Self::Open, b: &Self::Open) -> Option<Self::Point>;

    /// Some `m` with `∅ != X_m ⊆ cl(o)`.
    fn tail_level(&self, o: &Self::Open) -> Option<usize>;

    /// A point of `o ∩ w` near `target`, when `level(target) >= tail_level(o)`.
    fn density_witness(&self, o: &Self::Open, target: &Self::Point, w: &Self::Open) -> Option<Self::Point>;

    /// Random point of `X_min_level`, or `None` if that set is empty.
    fn sample_point(&self, rng: &mut Rng, min_level: usize) -> Option<Self::Point>;

    fn sample_open(&self, rng: &mut Rng) -> Self::Open;

    /// Points of `w` close to `p`, used to probe crowdedness and density.
    /// The default scans an enumeration prefix.
    fn nearby(&self, p: &Self::Point, w: &Self::Open) -> Vec<Self::Point> {
        self.points().take(NEARBY_SCAN).filter(|q| q != p && self.member(q, w)).take(8).collect()
    }

    /// Points likely to sit in `cl(o) \ o`, for separation checks.
    fn closure_probes(&self, _o: &Self::Open, _rng: &mut Rng) -> Vec<Self::Point> {
        Vec::new()
    }

    /// Sound semidecision of `p ∈ cl(o)`. Exact for basic opens whenever
    /// `meets` is exact.
    fn in_closure(&self, p: &Self::Point, o: &Self::Open, depth: usize) -> Closure<Self::Point, Self::Open> {
        if self.member(p, o) {
            return Closure::Member;
        }
        if let Some(m) = self.tail_level(o) {
            if self.skeleton_member(m, p) {
                if let Some(w) = self.density_witness(o, p, &self.nbhd(p, depth)) {
                    return Closure::Tail { level: m, depth, witness: w };
                }
            }
        }
        for k in 0..=depth {
            let nb = self.nbhd(p, k);
            match self.meets(&nb, o) {
                None => return Closure::Separated { nbhd: nb },
                Some(w) if k == depth => return Closure::Near { depth, witness: w },
                Some(_) => {}
            }
        }
        Closure::Unknown
    }

    /// Re-check a closure certificate against the oracles.
    fn check_closure(&self, p: &Self::Point, o: &Self::Open, c: &Closure<Self::Point, Self::Open>) -> Result<(), String> {
        match c {
            Closure::Member => self.member(p, o).then_some(()).ok_or_else(|| format!("{p} is not in {o}")),
            Closure::Tail { level, depth, witness } => {
                if !self.skeleton_member(*level, p) {
                    return Err(format!("{p} is below level {level}"));
                }
                match self.tail_level(o) {
                    Some(m) if m <= *level => {}
                    _ => return Err(format!("{o} has no tail at level {level}")),
                }
                check_near(self, p, o, *depth, witness)
            }
            Closure::Near { depth, witness } => check_near(self, p, o, *depth, witness),
            Closure::Separated { nbhd } => {
                if !self.member(p, nbhd) {
                    return Err(format!("{p} is not in separator {nbhd}"));
                }
                match self.meets(nbhd, o) {
                    None => Ok(()),
                    Some(w) => Err(format!("separator {nbhd} meets {o} at {w}")),
                }
            }
            Closure::Unknown => Ok(()),
        }
    }
}

fn check_near<S: SpacePresentation + ?Sized>(
    s: &S,
    p: &S::Point,
    o: &S::Open,
    depth: usize,
    w: &S::Point,
) -> Result<(), String> {
    if !s.member(w, o) {
        return Err(format!("witness {w} is not in {o}"));
    }
    if !s.member(w, &s.nbhd(p, depth)) {
        return Err(format!("witness {w} is not within depth {depth} of {p}"));
    }
    Ok(())
}

/// Extra structure the back-and-forth engine needs: clopen cells whose
/// boundary is exactly a skeleton set, and perturbations that move a point
/// to a prescribed level while staying inside finitely many opens.
pub trait Constructive: SpacePresentation {
    /// An open `C ∋ p`, closed off `X_l`, with `cl(C) = C ∪ X_l` and
    /// `X_l ⊆ cl(C ∩ X_level(p))`. Inside `nbhd(p, r)` once
    /// `l >= cell_min_level(p, r)`.
    fn cell(&self, p: &Self::Point, r: usize, l: usize) -> Option<Self::Open>;

    fn cell_min_level(&self, p: &Self::Point, r: usize) -> usize;

    /// `o` has the cell shape for boundary level `l`.
    fn is_cell(&self, o: &Self::Open, l: usize) -> bool;

    /// Largest level of a point of `o`.
    fn max_level_in(&self, o: &Self::Open) -> usize;

    /// `inner ⊆ outer`, exactly.
    fn contains_open(&self, outer: &Self::Open, inner: &Self::Open) -> bool;

    /// Exact closure membership for a cell with boundary level `l`.
    fn closure_member(&self, p: &Self::Point, cell: &Self::Open, l: usize) -> bool {
        self.member(p, cell) || self.level(p) >= l
    }

    /// `a ∩ cl(cell) = ∅` for a cell with boundary level `l`.
    fn misses_closure(&self, a: &Self::Open, cell: &Self::Open, l: usize) -> bool {
        self.max_level_in(a) < l && self.meets(a, cell).is_none()
    }

    /// A point of exact level `lvl` in `⋂ w`, near `p` (which has level `>= lvl`).
    fn drop_to_level(&self, p: &Self::Point, lvl: usize, w: &[Self::Open]) -> Option<Self::Point>;

    /// For `a` in the boundary skeleton set of `cell`, a point of `cell ∩ ⋂ w`
    /// whose level is the cell's attachment level.
    fn attach_point(&self, a: &Self::Point, cell: &Self::Open, w: &[Self::Open]) -> Option<Self::Point>;

    /// A point of the same level as `p` in `⋂ w`, not in `avoid`.
    fn crowd(&self, p: &Self::Point, w: &[Self::Open], avoid: &[Self::Point]) -> Option<Self::Point>;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Budget {
    pub points: usize,
    pub depth: usize,
}

/// First point in enumeration order inside every `inside` open, certified
/// outside the closure of every `outside` open, at exactly `level`.
pub fn pick_point<S: SpacePresentation>(
    s: &S,
    inside: &[S::Open],
    outside: &[S::Open],
    level: usize,
    budget: Budget,
) -> Option<S::Point> {
    s.points().take(budget.points).find(|p| {
        s.level(p) == level
            && inside.iter().all(|o| s.member(p, o))
            && outside.iter().all(|o| s.in_closure(p, o, budget.depth).is_out())
    })
}

/// Cantor unpairing of `i` into `(a, b)`.
pub fn unpair(i: usize) -> (usize, usize) {
    let mut w = (num_integer::Roots::sqrt(&(8 * i + 1)) - 1) / 2;
    while (w + 1) * (w + 2) / 2 <= i {
        w += 1;
    }
    while w * (w + 1) / 2 > i {
        w -= 1;
    }
    let t = w * (w + 1) / 2;
    let b = i - t;
    (w - b, b)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unpair_covers_pairs() {
        let mut seen = std::collections::BTreeSet::new();
        for i in 0..55 {
            assert!(seen.insert(unpair(i)));
        }
        for a in 0..5 {
            for b in 0..5 {
                assert!(seen.contains(&(a, b)));
            }
        }
    }
}
