//! Exact witnesses for finite intersections of chart cylinders.
//!
//! Fix the sign of every chart coordinate. Each constraint
//! `x_i / x_c ∈ (lo, hi)` is then a pair of strict homogeneous linear
//! inequalities. Non-chart coordinates are eliminated pairwise; what is left
//! involves only the chart coordinates and is solved by Fourier-Motzkin.

use crate::projective::{meets, normalize, BasicOpen, ProjPoint};
use crate::quad::{simplest_between, Ext, Quad};
use crate::rat::Rational;
use num_traits::{One, Zero};
use std::collections::{BTreeMap, BTreeSet};

/// `Σ a_j y_j + b < 0`.
#[derive(Clone, PartialEq, Eq, Debug)]
struct Ineq {
    a: Vec<Quad>,
    b: Quad,
}

impl Ineq {
    fn is_const(&self) -> bool {
        self.a.iter().all(Quad::is_zero)
    }

    /// Scale so the first nonzero coefficient is `±1`.
    fn normalized(mut self) -> Ineq {
        if let Some(p) = self.a.iter().find(|q| !q.is_zero()).cloned() {
            let s = p.abs().recip();
            for q in self.a.iter_mut() {
                *q = &*q * &s;
            }
            self.b = &self.b * &s;
        }
        self
    }
}

/// Linear form in the chart coordinates; slot 0 is the constant (`x_{c0} = 1`).
type Form = Vec<Quad>;

fn form_var(nv: usize, slot: usize, coef: Quad) -> Form {
    let mut f = vec![Quad::zero(); nv + 1];
    f[slot] = coef;
    f
}

/// `lhs < rhs` as an inequality over the chart variables.
fn less(lhs: &Form, rhs: &Form) -> Ineq {
    let d: Vec<Quad> = lhs.iter().zip(rhs).map(|(x, y)| x - y).collect();
    Ineq { a: d[1..].to_vec(), b: d[0].clone() }
}

fn eval(f: &Form, y: &[Rational]) -> Quad {
    let mut s = f[0].clone();
    for (c, v) in f[1..].iter().zip(y) {
        s = &s + &(c * v);
    }
    s
}

/// Solve by eliminating the variables in order, then substituting back.
fn solve(sys: Vec<Ineq>, nv: usize) -> Option<Vec<Rational>> {
    if sys.iter().any(|e| e.is_const() && !e.b.is_negative()) {
        return None;
    }
    let mut stages = vec![sys];
    for k in 0..nv {
        let cur = stages.last().unwrap();
        let mut next: Vec<Ineq> = Vec::new();
        let (mut pos, mut neg) = (Vec::new(), Vec::new());
        for e in cur {
            match e.a[k].signum() {
                std::cmp::Ordering::Greater => pos.push(e),
                std::cmp::Ordering::Less => neg.push(e),
                std::cmp::Ordering::Equal => next.push(e.clone()),
            }
        }
        for p in &pos {
            for n in &neg {
                // p.a[k] > 0 > n.a[k]: combine to cancel y_k
                let (sp, sn) = (-&n.a[k], p.a[k].clone());
                let a = p.a.iter().zip(&n.a).map(|(x, y)| &(x * &sp) + &(y * &sn)).collect();
                let b = &(&p.b * &sp) + &(&n.b * &sn);
                next.push(Ineq { a, b });
            }
        }
        let mut seen = BTreeSet::new();
        let mut out = Vec::new();
        for e in next {
            let e = e.normalized();
            if e.is_const() {
                if !e.b.is_negative() {
                    return None;
                }
                continue;
            }
            if seen.insert(format!("{:?}", e)) {
                out.push(e);
            }
        }
        stages.push(out);
    }
    let mut y = vec![Rational::zero(); nv];
    for k in (0..nv).rev() {
        let (mut lo, mut hi) = (Ext::NegInf, Ext::PosInf);
        for e in &stages[k] {
            // a_k y_k + rest < 0
            let mut rest = e.b.clone();
            for j in k + 1..nv {
                rest = &rest + &(&e.a[j] * &y[j]);
            }
            if e.a[k].is_zero() {
                continue;
            }
            let bound = Ext::Fin(&(-&rest) / &e.a[k]);
            if e.a[k].is_positive() {
                hi = hi.min(bound);
            } else {
                lo = lo.max(bound);
            }
        }
        if lo >= hi {
            return None;
        }
        y[k] = simplest_between(&lo, &hi);
    }
    Some(y)
}

/// A point in every cylinder of `bs`, or `None` when the intersection is empty.
pub fn meets_all(bs: &[BasicOpen]) -> Option<ProjPoint> {
    match bs {
        [] => None,
        [b] => Some(b.sample_member()),
        [a, b] => meets(a, b),
        _ => meets_many(bs),
    }
}

fn meets_many(bs: &[BasicOpen]) -> Option<ProjPoint> {
    let charts: Vec<usize> = bs.iter().map(|b| b.chart).collect::<BTreeSet<_>>().into_iter().collect();
    let slot: BTreeMap<usize, usize> = charts.iter().enumerate().map(|(s, c)| (*c, s)).collect();
    let nv = charts.len() - 1;
    let n = bs.iter().map(BasicOpen::support_max).max().unwrap() + 1;
    for pattern in 0..(1usize << nv) {
        let sign = |c: usize| -> bool { slot[&c] == 0 || pattern >> (slot[&c] - 1) & 1 == 0 };
        let chart_form = |c: usize, coef: &Quad| -> Form { form_var(nv, slot[&c], coef.clone()) };
        let one = Quad::from(Rational::one());
        let mut sys = Vec::new();
        for c in &charts[1..] {
            // the sign of each chart coordinate
            let f = chart_form(*c, &one);
            let z = vec![Quad::zero(); nv + 1];
            sys.push(if sign(*c) { less(&z, &f) } else { less(&f, &z) });
        }
        // lower and upper bounds on each non-chart coordinate
        let mut lows: BTreeMap<usize, Vec<Form>> = BTreeMap::new();
        let mut highs: BTreeMap<usize, Vec<Form>> = BTreeMap::new();
        for b in bs {
            let pos = sign(b.chart);
            for (i, iv) in &b.constraints {
                let (g, h) = if pos { (&iv.lo, &iv.hi) } else { (&iv.hi, &iv.lo) };
                let lo = chart_form(b.chart, g);
                let hi = chart_form(b.chart, h);
                if let Some(s) = slot.get(i) {
                    let xi = form_var(nv, *s, one.clone());
                    sys.push(less(&lo, &xi));
                    sys.push(less(&xi, &hi));
                } else {
                    lows.entry(*i).or_default().push(lo);
                    highs.entry(*i).or_default().push(hi);
                }
            }
        }
        for (i, ls) in &lows {
            for l in ls {
                for h in &highs[i] {
                    sys.push(less(l, h));
                }
            }
        }
        let Some(y) = solve(sys, nv) else {
            continue;
        };
        let mut v = vec![Rational::zero(); n];
        v[charts[0]] = Rational::one();
        for (k, c) in charts[1..].iter().enumerate() {
            v[*c] = y[k].clone();
        }
        for (i, ls) in &lows {
            let lo = ls.iter().map(|f| eval(f, &y)).max().unwrap();
            let hi = highs[i].iter().map(|f| eval(f, &y)).min().unwrap();
            v[*i] = simplest_between(&Ext::Fin(lo), &Ext::Fin(hi));
        }
        let w = normalize(&v).ok()?;
        debug_assert!(bs.iter().all(|b| crate::projective::member(&w, b)), "meets_all witness {w} fails");
        return Some(w);
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::projective::{member, random_open};
    use crate::rat::{int, rat};
    use rand::SeedableRng;

    #[test]
    fn three_charts() {
        let a = BasicOpen::chart(0).with_rat(1, int(1), int(2)).with_rat(2, int(0), int(1));
        let b = BasicOpen::chart(1).with_rat(2, rat(1, 4), rat(1, 2));
        let c = BasicOpen::chart(2).with_rat(3, int(5), int(6));
        let w = meets_all(&[a.clone(), b.clone(), c.clone()]).unwrap();
        assert!(member(&w, &a) && member(&w, &b) && member(&w, &c));
        // x2/x1 > 1 on the first, < 1/2 on the second
        let d = BasicOpen::chart(1).with_rat(0, int(1), int(2)).with_rat(2, int(2), int(3));
        let e = BasicOpen::chart(0).with_rat(2, int(0), int(1));
        assert_eq!(meets_all(&[d, e, c]), None);
    }

    #[test]
    fn negative_chart_signs() {
        // x1/x0 in (-2,-1) and x0/x1 in (-1,-1/2), x2/x1 in (1,2) with x2/x0 in (-3,-1)
        let a = BasicOpen::chart(0).with_rat(1, int(-2), int(-1)).with_rat(2, int(-3), int(-1));
        let b = BasicOpen::chart(1).with_rat(0, int(-1), rat(-1, 2)).with_rat(2, int(1), int(2));
        let c = BasicOpen::chart(2).with_rat(3, int(0), int(1));
        let w = meets_all(&[a.clone(), b.clone(), c.clone()]).unwrap();
        assert!(member(&w, &a) && member(&w, &b) && member(&w, &c));
    }

    /// Against a brute-force search over a grid of small points.
    #[test]
    fn agrees_with_search_on_random_triples() {
        let mut rng = crate::Rng::seed_from_u64(3);
        let grid: Vec<ProjPoint> = crate::projective::all_points().take(6000).collect();
        let (mut hit, mut miss) = (0, 0);
        for t in 0..300 {
            let bs: Vec<BasicOpen> = (0..3 + t % 2).map(|_| random_open(&mut rng, 4, 3)).collect();
            let got = meets_all(&bs);
            if let Some(w) = &got {
                assert!(bs.iter().all(|b| member(w, b)));
                hit += 1;
            } else {
                miss += 1;
            }
            if grid.iter().any(|p| bs.iter().all(|b| member(p, b))) {
                assert!(got.is_some(), "missed a witness for {bs:?}");
            }
        }
        assert!(hit > 30 && miss > 30, "{hit} {miss}");
    }

    #[test]
    fn pairs_agree_with_two_chart_solver() {
        let mut rng = crate::Rng::seed_from_u64(4);
        for _ in 0..300 {
            let bs: Vec<BasicOpen> = (0..2).map(|_| random_open(&mut rng, 4, 3)).collect();
            assert_eq!(meets_many(&bs).is_some(), meets(&bs[0], &bs[1]).is_some(), "{bs:?}");
        }
    }
}
