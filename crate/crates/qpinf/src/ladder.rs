//! Regions of QP^inf with a prescribed boundary. A ladder region is a seed
//! (finitely many cells) together with a sequence of ever smaller cells, the
//! rungs, whose centers creep up on every point of `Y_anchor \ Y_bound`.
//! Each rung sits inside one of the `inside` opens and misses the `avoid` opens.

use crate::presentation::Closure;
use crate::projective::{
    self as pm, box_metric_radius, clearance, metric_off_skeleton, nbhd_base, skeleton_tail_level, BasicOpen,
    ModelError, ProjPoint,
};
use crate::rat::{self, pow2_neg, Rational};
use crate::Rng;
use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;

/// Rungs actually built and checked by `clopen_with_boundary`.
pub const CHECKED_RUNGS: usize = 64;

/// Largest rung index probed when deciding membership or closure.
const MAX_PROBE: usize = 512;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LadderRegion {
    pub anchor: usize,
    pub bound: usize,
    /// Level of every rung center; the chart of the `inside` opens.
    pub attach: usize,
    pub seed: Vec<BasicOpen>,
    pub inside: Vec<BasicOpen>,
    pub avoid: Vec<BasicOpen>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rung {
    pub index: usize,
    pub target: ProjPoint,
    pub center: ProjPoint,
    pub cell: BasicOpen,
    /// Which `inside` open holds the rung.
    pub part: usize,
}

/// Block `s` of the target sequence: points of level `L` in `[anchor, bound)`
/// with at most `s - 1` entries after `L`, all of height `<= s`.
pub fn target_block(anchor: usize, bound: usize, s: u64) -> Vec<ProjPoint> {
    let vals = rat::small_rationals(s);
    let free = s.saturating_sub(1) as usize;
    let mut out = BTreeSet::new();
    for lvl in anchor..bound {
        let mut digits = vec![0usize; free];
        loop {
            let mut v = vec![Rational::zero(); lvl];
            v.push(Rational::one());
            v.extend(digits.iter().map(|&d| vals[d].clone()));
            out.insert(pm::normalize(&v).expect("entry at lvl is 1"));
            let Some(pos) = digits.iter().position(|&d| d + 1 < vals.len()) else {
                break;
            };
            digits[pos] += 1;
            for d in &mut digits[..pos] {
                *d = 0;
            }
        }
    }
    let mut out: Vec<ProjPoint> = out.into_iter().collect();
    out.sort_by(pm::point_cmp);
    out
}

impl LadderRegion {
    /// The `m`-th target; every point of `Y_anchor \ Y_bound` recurs infinitely often.
    pub fn target(&self, m: usize) -> ProjPoint {
        let mut m = m;
        for s in 1u64.. {
            let block = target_block(self.anchor, self.bound, s);
            if m < block.len() {
                return block[m].clone();
            }
            m -= block.len();
        }
        unreachable!()
    }

    /// Rung `m`: a cell of boundary level `>= bound + m + 2` around a point
    /// of level `attach` within `2^-(m+1)` of the target, so the whole rung
    /// lies within `2^-m` of the target.
    pub fn rung(&self, m: usize) -> Result<Rung, ModelError> {
        let target = self.target(m);
        let fail = |why: &str| ModelError::ConstructionFailure(format!("rung {m} at {target}: {why}"));
        let half = pow2_neg(m + 1);
        for (idx, part) in self.inside.iter().enumerate() {
            if part.chart != self.attach || target.level() < skeleton_tail_level(part) {
                continue;
            }
            let s = part.sample_member();
            if s.level() != self.attach {
                continue;
            }
            let center = (0..pm::MAX_HALVINGS).map(|j| pm::combine(&target, &s, &pow2_neg(j))).find(|v| {
                pm::member(v, part) && metric_off_skeleton(v, &target, self.bound).is_ok_and(|d| d < half)
            });
            let Some(center) = center else {
                continue;
            };
            let len = (self.bound + m + 2).max(center.len() + 1);
            for r in (m + 3)..(3 * m + 80) {
                if box_metric_radius(&center, &pow2_neg(r), len, self.bound) >= half {
                    continue;
                }
                let cell = pm::cell(&center, r, len).ok_or_else(|| fail("cell below chart"))?;
                if pm::contains_open(part, &cell) && self.avoid.iter().all(|a| pm::meets(a, &cell).is_none()) {
                    return Ok(Rung { index: m, target, center, cell, part: idx });
                }
            }
        }
        Err(fail("no inside open admits a rung"))
    }

    /// Rung indices that could contain a point at distance `>= gap` from
    /// `Y_anchor \ Y_bound`.
    fn rungs_within(&self, gap: &Rational) -> impl Iterator<Item = usize> + '_ {
        let gap = gap.clone();
        (0..MAX_PROBE).take_while(move |&m| pow2_neg(m) > gap)
    }

    pub fn member(&self, p: &ProjPoint) -> bool {
        if self.seed.iter().any(|c| pm::member(p, c)) {
            return true;
        }
        if p.level() >= self.anchor {
            return false;
        }
        let gap = clearance(p, self.anchor, self.bound);
        self.rungs_within(&gap).any(|m| self.rung(m).is_ok_and(|r| pm::member(p, &r.cell)))
    }

    /// Sound semidecision of `p ∈ cl(region)`.
    pub fn in_closure(&self, p: &ProjPoint, depth: usize) -> Closure<ProjPoint, BasicOpen> {
        if self.member(p) {
            return Closure::Member;
        }
        let near = nbhd_base(p, depth);
        for c in &self.seed {
            let m = skeleton_tail_level(c);
            if p.level() >= m {
                if let Ok(w) = pm::density_witness(c, p, &near) {
                    return Closure::Tail { level: m, depth, witness: w };
                }
            }
        }
        if p.level() >= self.anchor {
            if p.level() < self.bound {
                for m in 0..MAX_PROBE {
                    match self.rung(m) {
                        Ok(r) if pm::member(&r.center, &near) => {
                            return Closure::Near { depth, witness: r.center };
                        }
                        Ok(_) => {}
                        Err(_) => break,
                    }
                }
            }
            return Closure::Unknown;
        }
        for k in 1..=depth {
            let nb = nbhd_base(p, k);
            if self.separates(p, &nb) {
                return Closure::Separated { nbhd: nb };
            }
        }
        Closure::Unknown
    }

    /// `nb ∋ p` misses the region. Rungs lie in the `inside` opens, and a
    /// rung meeting `nb` must be close to `p`, which bounds the ones to check.
    fn separates(&self, p: &ProjPoint, nb: &BasicOpen) -> bool {
        if !pm::member(p, nb) || self.seed.iter().any(|c| pm::meets(c, nb).is_some()) {
            return false;
        }
        if self.inside.iter().all(|c| pm::meets(c, nb).is_none()) {
            return true;
        }
        if p.level() >= self.anchor {
            return false;
        }
        let Some(rho) = radius_of(p, nb, self.bound) else {
            return false;
        };
        let gap = clearance(p, self.anchor, self.bound);
        if rho >= gap {
            return false;
        }
        let slack = gap - rho;
        let mut checked = 0;
        for m in self.rungs_within(&slack) {
            match self.rung(m) {
                Ok(r) if pm::meets(&r.cell, nb).is_none() => checked = m + 1,
                _ => return false,
            }
        }
        checked < MAX_PROBE
    }

    /// Re-check a closure certificate for this region.
    pub fn check_closure(&self, p: &ProjPoint, c: &Closure<ProjPoint, BasicOpen>) -> Result<(), String> {
        match c {
            Closure::Member => self.member(p).then_some(()).ok_or_else(|| format!("{p} is not in the region")),
            Closure::Tail { depth, witness, .. } | Closure::Near { depth, witness } => {
                if !self.member(witness) {
                    return Err(format!("witness {witness} is not in the region"));
                }
                if !pm::member(witness, &nbhd_base(p, *depth)) {
                    return Err(format!("witness {witness} is not within depth {depth} of {p}"));
                }
                Ok(())
            }
            Closure::Separated { nbhd } => {
                self.separates(p, nbhd).then_some(()).ok_or_else(|| format!("{nbhd} does not separate {p}"))
            }
            Closure::Unknown => Ok(()),
        }
    }
}

/// Metric radius of a basic neighbourhood `nbhd_base(p, k)`.
fn radius_of(p: &ProjPoint, nb: &BasicOpen, bound: usize) -> Option<Rational> {
    let k = (0..=nb.support_max()).find(|&k| nbhd_base(p, k) == *nb)?;
    pm::nbhd_metric_radius(p, k, bound)
}

/// Two-sided sampled evidence that a ladder region is clopen off `Y_anchor`
/// with closure `V ∪ Y_anchor`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LadderReport {
    pub rungs: Vec<Rung>,
    /// Points of `Y_anchor`: closure certificate plus a witness of level `attach`.
    pub boundary: Vec<(ProjPoint, Closure<ProjPoint, BasicOpen>)>,
    /// Points below `Y_anchor`: either members or separated.
    pub interior: Vec<(ProjPoint, Closure<ProjPoint, BasicOpen>)>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LadderBudget {
    pub samples: usize,
    pub depth: usize,
}

/// Build the ladder region and certify it on samples; any failed check is a
/// construction failure naming the offending point.
pub fn clopen_with_boundary(
    anchor: usize,
    bound: usize,
    attach: usize,
    seed: Vec<BasicOpen>,
    inside: Vec<BasicOpen>,
    avoid: Vec<BasicOpen>,
    budget: LadderBudget,
    rng: &mut Rng,
) -> Result<(LadderRegion, LadderReport), ModelError> {
    let fail = |why: String| Err(ModelError::ConstructionFailure(why));
    if !(attach < anchor && anchor < bound) {
        return fail(format!("need attach < anchor < bound, got {attach}, {anchor}, {bound}"));
    }
    for c in &seed {
        match c.cell_level() {
            Some(l) if l >= anchor && c.chart == attach => {}
            _ => return fail(format!("seed {c} is not a cell attached at {attach} with boundary in Y_{anchor}")),
        }
    }
    for c in &inside {
        if c.chart != attach || skeleton_tail_level(c) > anchor {
            return fail(format!("inside open {c} must use chart {attach} and indices below {anchor}"));
        }
    }
    let region = LadderRegion { anchor, bound, attach, seed, inside, avoid };
    let mut report = LadderReport { rungs: Vec::new(), boundary: Vec::new(), interior: Vec::new() };
    for m in 0..CHECKED_RUNGS {
        let r = region.rung(m)?;
        let ok = pm::member(&r.center, &r.cell)
            && r.center.level() == attach
            && r.cell.cell_level().is_some_and(|l| l >= bound + m + 2)
            && pm::contains_open(&region.inside[r.part], &r.cell);
        if !ok {
            return fail(format!("rung {m} fails its shape checks"));
        }
        report.rungs.push(r);
    }
    for _ in 0..budget.samples {
        let t = pm::random_point_from(rng, anchor, 5, 6);
        if region.member(&t) {
            return fail(format!("boundary point {t} lies in the region"));
        }
        let c = region.in_closure(&t, budget.depth);
        let witness_ok = match &c {
            Closure::Tail { witness, .. } | Closure::Near { witness, .. } => witness.level() == attach,
            _ => false,
        };
        if !witness_ok {
            return fail(format!("no witness of level {attach} near boundary point {t}: {c:?}"));
        }
        report.boundary.push((t, c));
    }
    let rung_centers: Vec<ProjPoint> = report.rungs.iter().map(|r| r.center.clone()).collect();
    for i in 0..budget.samples {
        let q = match i % 3 {
            0 => pm::random_point(rng, 5, 6),
            // just outside or inside a rung
            1 => pm::crowd(&rung_centers[i % rung_centers.len()], &[], &[]).unwrap(),
            _ => {
                let base = pm::random_point(rng, anchor.max(1), 4);
                let v: Vec<Rational> = (0..anchor.max(base.len())).map(|j| base.coord(j)).collect();
                pm::normalize(&v).unwrap()
            }
        };
        if q.level() >= anchor {
            continue;
        }
        let c = region.in_closure(&q, 64);
        if !(matches!(c, Closure::Member) || c.is_out()) {
            return fail(format!("point {q} off the boundary is neither inside nor separated"));
        }
        report.interior.push((q, c));
    }
    Ok((region, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rat::int;
    use rand::SeedableRng;

    fn degenerate(l: usize) -> (BasicOpen, ProjPoint) {
        let p = ProjPoint::from_ints(&[1, 2]).unwrap();
        (pm::cell(&p, 2, l).unwrap(), p)
    }

    #[test]
    fn targets_cover_the_band() {
        let b1 = target_block(2, 4, 1);
        assert_eq!(b1, vec![ProjPoint::unit(2), ProjPoint::unit(3)]);
        let b2 = target_block(2, 4, 2);
        assert!(b2.iter().all(|p| (2..4).contains(&p.level())));
        let want = pm::normalize(&[int(0), int(0), int(1), rat::rat(-1, 2)]).unwrap();
        assert!(b2.contains(&want));
    }

    #[test]
    fn rungs_shrink_toward_targets() {
        let (seed, _) = degenerate(3);
        let lad = LadderRegion { anchor: 3, bound: 5, attach: 0, seed: vec![seed.clone()], inside: vec![seed], avoid: vec![] };
        for m in 0..20 {
            let r = lad.rung(m).unwrap();
            assert_eq!(r.center.level(), 0);
            let d = metric_off_skeleton(&r.center, &r.target, 5).unwrap();
            assert!(d < pow2_neg(m + 1));
            assert!(lad.member(&r.center));
        }
    }

    #[test]
    fn degenerate_ladder_certifies() {
        let (seed, p) = degenerate(3);
        let mut rng = Rng::seed_from_u64(7);
        let budget = LadderBudget { samples: 30, depth: 8 };
        let (lad, rep) =
            clopen_with_boundary(3, 5, 0, vec![seed.clone()], vec![seed], vec![], budget, &mut rng).unwrap();
        assert!(lad.member(&p));
        for (t, c) in rep.boundary.iter().chain(&rep.interior) {
            lad.check_closure(t, c).unwrap();
        }
        assert!(!lad.member(&ProjPoint::unit(3)));
    }

    #[test]
    fn rejects_bad_shapes() {
        let (seed, _) = degenerate(3);
        let mut rng = Rng::seed_from_u64(1);
        let budget = LadderBudget { samples: 1, depth: 4 };
        let r = clopen_with_boundary(3, 3, 0, vec![seed.clone()], vec![seed.clone()], vec![], budget, &mut rng);
        assert!(matches!(r, Err(ModelError::ConstructionFailure(_))));
        let open = BasicOpen::chart(0).with_rat(1, int(0), int(1));
        let r = clopen_with_boundary(3, 5, 0, vec![open], vec![seed], vec![], budget, &mut rng);
        assert!(r.is_err());
    }
}
