//! QP^inf with a rebuilt skeleton.
//!
//! Given cut levels `0 = n_0 < n_1 < n_2 < ...` and, for some `k >= 1`, a
//! finite list of cells `U_k` with boundary level `n_{k+1}` and charts in
//! `[n_k + 1, n_{k+1})`, the new skeleton is
//!
//! `Y_0 = X`, `Y_k = (U_k ∩ X_{n_k + 1}) ∪ X_{n_{k+1}}` for `k >= 1`.
//!
//! With no pieces this only re-indexes the levels of QP^inf. Opens are finite
//! unions of finite intersections of chart cylinders.

use crate::meet::meets_all;
use crate::presentation::{Constructive, SpaceId, SpacePresentation};
use crate::projective::{
    self as pm, approach_by, crowd_by, drop_to_level_by, nbhd_base, random_open, random_point_from, BasicOpen, ProjPoint,
    QPInf,
};
use rand::Rng as _;
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;
use thiserror::Error;

/// Union of intersections of chart cylinders.
#[derive(Clone, PartialEq, Eq, Hash, Debug, Serialize, Deserialize)]
pub struct Region {
    pub parts: Vec<Vec<BasicOpen>>,
}

impl Region {
    pub fn single(b: BasicOpen) -> Region {
        Region { parts: vec![vec![b]] }
    }

    pub fn member(&self, p: &ProjPoint) -> bool {
        self.parts.iter().any(|part| part.iter().all(|b| pm::member(p, b)))
    }
}

impl fmt::Display for Region {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, part) in self.parts.iter().enumerate() {
            if i > 0 {
                write!(f, " ∪ ")?;
            }
            for (j, b) in part.iter().enumerate() {
                if j > 0 {
                    write!(f, " ∩ ")?;
                }
                write!(f, "{b}")?;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ReskeletonError {
    #[error("cut levels must start at 0 and increase: {0:?}")]
    BadCuts(Vec<usize>),
    #[error("piece {piece} at index {k} is not a cell with boundary {bound} and chart in the stratum")]
    BadPiece { k: usize, piece: String, bound: usize },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Reskeleton {
    cuts: Vec<usize>,
    pieces: BTreeMap<usize, Vec<BasicOpen>>,
}

/// Largest refinement tried when fitting a neighbourhood to the pieces.
const MAX_FIT: usize = 512;

impl Reskeleton {
    pub fn new(cuts: Vec<usize>, pieces: BTreeMap<usize, Vec<BasicOpen>>) -> Result<Self, ReskeletonError> {
        if cuts.len() < 2 || cuts[0] != 0 || cuts.windows(2).any(|w| w[0] >= w[1]) {
            return Err(ReskeletonError::BadCuts(cuts));
        }
        let s = Reskeleton { cuts, pieces };
        for (&k, list) in &s.pieces {
            let bound = s.cut(k + 1);
            for c in list {
                if k == 0 || c.cell_level() != Some(bound) || c.chart <= s.cut(k) {
                    return Err(ReskeletonError::BadPiece { k, piece: c.to_string(), bound });
                }
            }
        }
        Ok(s)
    }

    /// Skeleton `Y_n = X_{m+n}` for `n >= 1`.
    pub fn shifted(m: usize) -> Self {
        let m = m.max(1);
        Reskeleton::new(vec![0, m, m + 1], BTreeMap::new()).expect("increasing cuts")
    }

    pub fn from_id(id: &SpaceId) -> Option<Self> {
        match id {
            SpaceId::Reskeleton { cuts, pieces } => Reskeleton::new(cuts.clone(), pieces.iter().cloned().collect()).ok(),
            _ => None,
        }
    }

    /// `n_k`, continued by steps of one past the stored list.
    pub fn cut(&self, k: usize) -> usize {
        match self.cuts.get(k) {
            Some(&c) => c,
            None => self.cuts.last().unwrap() + (k + 1 - self.cuts.len()),
        }
    }

    pub fn cuts(&self) -> &[usize] {
        &self.cuts
    }

    pub fn pieces(&self, k: usize) -> &[BasicOpen] {
        self.pieces.get(&k).map_or(&[], Vec::as_slice)
    }

    /// The `j` with `n_j <= level < n_{j+1}`.
    fn stratum(&self, level: usize) -> usize {
        let mut j = 0;
        while self.cut(j + 1) <= level {
            j += 1;
        }
        j
    }

    fn in_pieces(&self, j: usize, p: &ProjPoint) -> bool {
        self.pieces(j).iter().any(|c| pm::member(p, c))
    }

    /// Level in the new skeleton.
    pub fn new_level(&self, p: &ProjPoint) -> usize {
        let l = p.level();
        let j = self.stratum(l);
        if j == 0 || (l > self.cut(j) && self.in_pieces(j, p)) {
            j
        } else {
            j - 1
        }
    }

    /// Least `rho` such that `O_rho(p)` lies inside the piece holding `p`
    /// and misses the other pieces of its stratum.
    fn fit(&self, p: &ProjPoint) -> usize {
        let j = self.stratum(p.level());
        let pieces = self.pieces(j);
        if pieces.is_empty() {
            return 0;
        }
        (0..MAX_FIT)
            .find(|&r| {
                let nb = nbhd_base(p, r);
                pieces.iter().all(|c| {
                    if pm::member(p, c) {
                        pm::contains_open(c, &nb)
                    } else {
                        pm::meets(&nb, c).is_none()
                    }
                })
            })
            .unwrap_or(MAX_FIT)
    }

    /// Upper bound for the new level over points of a part, exact when the
    /// part lies inside or outside every piece of the top stratum.
    fn part_level_bound(&self, part: &[BasicOpen]) -> usize {
        let top = part.iter().map(|b| b.chart).min().unwrap();
        let j = self.stratum(top);
        if j == 0 {
            return 0;
        }
        if top == self.cut(j) {
            return j - 1;
        }
        let pieces = self.pieces(j);
        let inside = part.iter().any(|b| pieces.iter().any(|c| pm::contains_open(c, b)));
        let outside = pieces.iter().all(|c| {
            let mut q = part.to_vec();
            q.push(c.clone());
            meets_all(&q).is_none()
        });
        if inside || !outside {
            j
        } else {
            j - 1
        }
    }

    /// Some `k >= 1` with `Y_k ⊆ cl(o)`. `X_t ⊆ cl(P)` for a nonempty part
    /// `P` supported below `t`, and a piece `U` lies in `cl(R ∩ U)` above
    /// `n_k` whenever `R` is nonempty and supported below `n_k + 1`.
    fn tail_of(&self, o: &Region) -> Option<usize> {
        let live: Vec<(&Vec<BasicOpen>, usize)> =
            o.parts.iter().filter(|p| meets_all(p).is_some()).map(|p| (p, support_end(p))).collect();
        let t_min = live.iter().map(|x| x.1).min()?;
        let covered = |k: usize, piece: &BasicOpen| {
            let low = self.cut(k) + 1;
            live.iter().any(|(part, t)| {
                *t <= low || {
                    let rest: Vec<BasicOpen> = part.iter().filter(|b| *b != piece).cloned().collect();
                    rest.len() + 1 == part.len() && !rest.is_empty() && support_end(&rest) <= low && meets_all(&rest).is_some()
                }
            })
        };
        (1..).find(|&k| {
            self.cut(k + 1) >= t_min && (self.cut(k) + 1 >= t_min || self.pieces(k).iter().all(|c| covered(k, c)))
        })
    }
}

/// `1 + max support` over a family of cylinders.
fn support_end(part: &[BasicOpen]) -> usize {
    part.iter().map(BasicOpen::support_max).max().unwrap() + 1
}

impl SpacePresentation for Reskeleton {
    type Point = ProjPoint;
    type Open = Region;

    fn id(&self) -> SpaceId {
        SpaceId::Reskeleton {
            cuts: self.cuts.clone(),
            pieces: self.pieces.iter().map(|(k, v)| (*k, v.clone())).collect(),
        }
    }

    fn points(&self) -> Box<dyn Iterator<Item = ProjPoint> + '_> {
        Box::new(pm::all_points())
    }

    fn point_cmp(&self, a: &ProjPoint, b: &ProjPoint) -> Ordering {
        pm::point_cmp(a, b)
    }

    fn base(&self, i: usize) -> Region {
        Region::single(QPInf.base(i))
    }

    fn member(&self, p: &ProjPoint, o: &Region) -> bool {
        o.member(p)
    }

    fn level(&self, p: &ProjPoint) -> usize {
        self.new_level(p)
    }

    fn top_level(&self) -> Option<usize> {
        None
    }

    fn nbhd(&self, p: &ProjPoint, k: usize) -> Region {
        Region::single(nbhd_base(p, k + self.fit(p)))
    }

    fn meets(&self, a: &Region, b: &Region) -> Option<ProjPoint> {
        a.parts.iter().find_map(|pa| {
            b.parts.iter().find_map(|pb| {
                let mut q = pa.clone();
                q.extend(pb.iter().cloned());
                meets_all(&q)
            })
        })
    }

    fn tail_level(&self, o: &Region) -> Option<usize> {
        self.tail_of(o)
    }

    /// `target + λ s`, with `s` in the cylinders of a part supported below
    /// `level(target)` and the other cylinders of that part holding `target`.
    fn density_witness(&self, o: &Region, target: &ProjPoint, w: &Region) -> Option<ProjPoint> {
        let m = self.tail_of(o)?;
        if self.new_level(target) < m || !w.member(target) {
            return None;
        }
        o.parts.iter().find_map(|part| {
            let (low, high): (Vec<BasicOpen>, Vec<BasicOpen>) =
                part.iter().cloned().partition(|b| b.support_max() < target.level());
            if low.is_empty() || !high.iter().all(|b| pm::member(target, b)) {
                return None;
            }
            let s = meets_all(&low)?;
            approach_by(target, &s, |x| o.member(x) && w.member(x))
        })
    }

    fn sample_point(&self, rng: &mut crate::Rng, min_level: usize) -> Option<ProjPoint> {
        let pieces = self.pieces(min_level);
        if !pieces.is_empty() && rng.gen_bool(0.5) {
            let c = &pieces[rng.gen_range(0..pieces.len())];
            let a = c.sample_member();
            let extra = random_point_from(rng, a.len(), 3, 4);
            let q = approach_by(&a, &extra, |q| pm::member(q, c)).unwrap_or(a);
            return Some(q);
        }
        let from = if min_level == 0 { 0 } else { self.cut(min_level + 1) };
        Some(random_point_from(rng, from, 5, 6))
    }

    fn sample_open(&self, rng: &mut crate::Rng) -> Region {
        Region::single(random_open(rng, 5, 6))
    }

    fn nearby(&self, p: &ProjPoint, w: &Region) -> Vec<ProjPoint> {
        let Some(part) = w.parts.iter().find(|part| part.iter().all(|b| pm::member(p, b))) else {
            return Vec::new();
        };
        QPInf.nearby(p, &part[0]).into_iter().filter(|q| w.member(q)).collect()
    }
}

impl Constructive for Reskeleton {
    /// `C_p ∪ ⋃_a (B ∩ U_a)`: `C_p` a base cell with boundary `n_{l+1}`,
    /// `B` a base cell with boundary `n_l + 1`, `U_a` the pieces at `l`.
    fn cell(&self, p: &ProjPoint, r: usize, l: usize) -> Option<Region> {
        if l <= self.new_level(p) || self.cut(l) < p.level() {
            return None;
        }
        let rr = r + self.fit(p);
        let mut parts = vec![vec![pm::cell(p, rr, self.cut(l + 1))?]];
        let pieces = self.pieces(l);
        if !pieces.is_empty() {
            let b = pm::cell(p, rr, self.cut(l) + 1)?;
            for c in pieces {
                parts.push(vec![b.clone(), c.clone()]);
            }
        }
        Some(Region { parts })
    }

    fn cell_min_level(&self, p: &ProjPoint, r: usize) -> usize {
        let need = pm::cell_min_level(p, r + self.fit(p)).max(p.level() + 1);
        (self.new_level(p) + 1..).find(|&l| self.cut(l) + 1 >= need).unwrap()
    }

    fn is_cell(&self, o: &Region, l: usize) -> bool {
        let Some(first) = o.parts.first() else { return false };
        let [c] = first.as_slice() else { return false };
        let pieces = self.pieces(l);
        if c.cell_level() != Some(self.cut(l + 1)) || c.chart > self.cut(l) || o.parts.len() != pieces.len() + 1 {
            return false;
        }
        o.parts[1..].iter().zip(pieces).all(|(part, piece)| match part.as_slice() {
            [b, u] => b.cell_level() == Some(self.cut(l) + 1) && b.chart == c.chart && u == piece,
            _ => false,
        })
    }

    fn max_level_in(&self, o: &Region) -> usize {
        o.parts.iter().map(|part| self.part_level_bound(part)).max().unwrap_or(0)
    }

    /// Sound but not complete: every inner part must sit in one outer part,
    /// cylinder by cylinder.
    fn contains_open(&self, outer: &Region, inner: &Region) -> bool {
        inner.parts.iter().all(|pi| {
            outer
                .parts
                .iter()
                .any(|po| po.iter().all(|q| pi.iter().any(|b| pm::contains_open(q, b))))
        })
    }

    fn drop_to_level(&self, p: &ProjPoint, lvl: usize, w: &[Region]) -> Option<ProjPoint> {
        let cur = self.new_level(p);
        let ok = |q: &ProjPoint| w.iter().all(|o| o.member(q));
        if cur == lvl {
            return ok(p).then(|| p.clone());
        }
        if cur < lvl {
            return None;
        }
        drop_to_level_by(p, self.cut(lvl + 1), |q| ok(q) && self.new_level(q) == lvl)
    }

    fn attach_point(&self, a: &ProjPoint, cell: &Region, w: &[Region]) -> Option<ProjPoint> {
        let first = cell.parts.first()?.first()?;
        // a point of a piece is reached through `B ∩ U`, anything deeper through `C_p`
        let via = cell.parts[1..]
            .iter()
            .find(|part| part.len() == 2 && pm::member(a, &part[1]))
            .map_or(first, |part| &part[0]);
        let s = via.sample_member();
        if s.level() != via.chart || a.level() <= via.support_max() {
            return None;
        }
        approach_by(a, &s, |q| cell.member(q) && w.iter().all(|o| o.member(q)))
    }

    fn crowd(&self, p: &ProjPoint, w: &[Region], avoid: &[ProjPoint]) -> Option<ProjPoint> {
        let lvl = self.new_level(p);
        crowd_by(p, |q| w.iter().all(|o| o.member(q)) && !avoid.contains(q) && self.new_level(q) == lvl)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::projective::normalize;
    use crate::rat::{int, Rational};
    use crate::skeleton::{run_suite, SkeletonBudget};
    use rand::SeedableRng;

    fn e(k: usize) -> ProjPoint {
        ProjPoint::unit(k)
    }

    /// Cuts (0,2,5,7), one piece at k = 1 around e_3 (stratum [3, 5)).
    fn sample() -> Reskeleton {
        let piece = pm::cell(&e(3), 2, 5).unwrap();
        Reskeleton::new(vec![0, 2, 5, 7], BTreeMap::from([(1, vec![piece])])).unwrap()
    }

    #[test]
    fn levels_follow_the_pieces() {
        let s = sample();
        assert_eq!(s.new_level(&e(0)), 0);
        assert_eq!(s.new_level(&e(1)), 0);
        // level 2 = n_1 is never in a piece
        assert_eq!(s.new_level(&e(2)), 0);
        assert_eq!(s.new_level(&e(3)), 1);
        let far = normalize(&[int(0), int(0), int(0), int(1), int(5)]).unwrap();
        assert_eq!(s.new_level(&far), 0);
        assert_eq!(s.new_level(&e(4)), 0);
        assert_eq!(s.new_level(&e(5)), 1);
        assert_eq!(s.new_level(&e(6)), 1);
        assert_eq!(s.new_level(&e(7)), 2);
        assert_eq!(s.new_level(&e(8)), 3);
    }

    #[test]
    fn shifted_skeleton() {
        let s = Reskeleton::shifted(3);
        assert_eq!((0..7).map(|k| s.new_level(&e(k))).collect::<Vec<_>>(), vec![0, 0, 0, 0, 1, 2, 3]);
    }

    #[test]
    fn bad_inputs_are_rejected() {
        assert!(Reskeleton::new(vec![0, 2, 2], BTreeMap::new()).is_err());
        let piece = pm::cell(&e(1), 2, 4).unwrap();
        assert!(Reskeleton::new(vec![0, 2, 4], BTreeMap::from([(1, vec![piece])])).is_err());
    }

    #[test]
    fn cells_have_the_promised_closure() {
        let s = sample();
        let p = normalize(&[int(1), Rational::new(1.into(), 3.into())]).unwrap();
        let l = s.cell_min_level(&p, 1).max(1);
        let c = s.cell(&p, 1, l).unwrap();
        assert!(s.is_cell(&c, l));
        assert!(s.member(&p, &c));
        assert!(s.contains_open(&s.nbhd(&p, 1), &c));
        assert_eq!(s.max_level_in(&c), 0);
        let mut rng = crate::Rng::seed_from_u64(8);
        for _ in 0..40 {
            let t = s.sample_point(&mut rng, l).unwrap();
            assert!(s.new_level(&t) >= l);
            let near = s.nbhd(&t, 6);
            let w = s.density_witness(&c, &t, &near).expect("boundary point is in the closure");
            assert!(s.member(&w, &c) && s.member(&w, &near));
            let x = s.attach_point(&t, &c, std::slice::from_ref(&near)).unwrap();
            assert_eq!(s.new_level(&x), 0);
        }
        // the piece at l = 1 joins the boundary when the cell is cut at 1
        let c1 = s.cell(&p, 5, 1).unwrap();
        assert!(s.is_cell(&c1, 1));
        let near = s.nbhd(&e(3), 6);
        assert!(s.density_witness(&c1, &e(3), &near).is_some());
        let x = s.attach_point(&e(3), &c1, std::slice::from_ref(&near)).unwrap();
        assert!(s.member(&x, &c1) && s.member(&x, &near));
        // stratum points outside the piece are separated
        let far = normalize(&[int(0), int(0), int(0), int(1), int(5)]).unwrap();
        assert!(s.in_closure(&far, &c1, 10).is_out());
    }

    #[test]
    fn canonical_superskeleton_suite() {
        let s = sample();
        let mut rng = crate::Rng::seed_from_u64(9);
        let budget = SkeletonBudget { samples: 25, depth: 6, ..SkeletonBudget::default() };
        for r in run_suite(&s, budget, &mut rng) {
            assert_eq!(r.verdict, crate::presentation::Verdict::Pass, "{} {:?}", r.kind, r.failures().next());
        }
    }
}
