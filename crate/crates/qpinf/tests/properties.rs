use proptest::prelude::*;
use qpinf::golomb::{golomb_closure_contains, golomb_presentation, radical, Progression};
use qpinf::homogeneity::{classify_depth, family_misses, random_finite_set, Depth};
use qpinf::presentation::{Budget, Closure, SpacePresentation};
use qpinf::projective::{
    member, meets, metric_off_skeleton, nbhd_base, normalize, random_open, random_point, BasicOpen, ProjPoint, QPInf,
};
use qpinf::singular::{q_mult, q_pos, zbar, Carrier, Projective};
use qpinf::Rng;
use rand::SeedableRng;

fn rng(seed: u64) -> Rng {
    Rng::seed_from_u64(seed)
}

/// The open's own sample and the small points of the enumeration inside it.
fn members(b: &BasicOpen) -> Vec<ProjPoint> {
    let mut out = vec![b.sample_member()];
    out.extend(QPInf.points().take(400).filter(|p| member(p, b)));
    out
}

/// Representatives are fixed by the normal form and by the group action.
fn orbit_invariance<M: Carrier>(model: M, seed: u64) -> Result<(), TestCaseError> {
    let mut r = rng(seed);
    let pres = Projective::new(model.clone());
    let raw: Vec<_> = (0..4).map(|_| model.random_elem(&mut r)).collect();
    let Some(p) = pres.normalize(&raw) else { return Ok(()) };
    prop_assert_eq!(pres.normalize(&p.coords), Some(p.clone()));
    for _ in 0..4 {
        let g = model.random_group(&mut r);
        let moved: Vec<_> = raw.iter().map(|x| model.act(&g, x)).collect();
        prop_assert_eq!(pres.normalize(&moved), Some(p.clone()));
    }
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn normal_form_is_idempotent(seed: u64) {
        let p = random_point(&mut rng(seed), 7, 9);
        prop_assert_eq!(normalize(p.coords()).unwrap(), p);
    }

    #[test]
    fn chart_members_sit_at_or_below_the_chart(seed: u64) {
        let b = random_open(&mut rng(seed), 5, 6);
        for p in members(&b) {
            prop_assert!(p.level() <= b.chart, "{} in {} has level {}", p, b, p.level());
        }
    }

    #[test]
    fn meets_is_symmetric_and_sound(seed: u64) {
        let mut r = rng(seed);
        let (a, b) = (random_open(&mut r, 4, 4), random_open(&mut r, 4, 4));
        let (ab, ba) = (meets(&a, &b), meets(&b, &a));
        prop_assert_eq!(ab.is_some(), ba.is_some());
        for w in ab.iter().chain(&ba) {
            prop_assert!(member(w, &a) && member(w, &b));
        }
    }

    #[test]
    fn closure_answers_carry_their_certificates(seed: u64, depth in 0usize..8) {
        let mut r = rng(seed);
        let b = random_open(&mut r, 4, 4);
        let p = random_point(&mut r, 6, 6);
        match QPInf.in_closure(&p, &b, depth) {
            Closure::Member => prop_assert!(member(&p, &b)),
            Closure::Tail { witness, depth: d, level } => {
                prop_assert!(p.level() >= level);
                prop_assert!(member(&witness, &b) && member(&witness, &nbhd_base(&p, d)));
            }
            Closure::Near { witness, depth: d } => {
                prop_assert!(member(&witness, &b) && member(&witness, &nbhd_base(&p, d)));
            }
            Closure::Separated { nbhd } => {
                prop_assert!(member(&p, &nbhd));
                prop_assert_eq!(meets(&nbhd, &b), None);
            }
            Closure::Unknown => {}
        }
    }

    #[test]
    fn metric_is_symmetric_and_satisfies_the_triangle_inequality(seed: u64) {
        let mut r = rng(seed);
        let bound = 5;
        let [p, q, s] = [(); 3].map(|_| random_point(&mut r, bound, 7));
        let d = |a: &ProjPoint, b: &ProjPoint| metric_off_skeleton(a, b, bound).unwrap();
        prop_assert_eq!(d(&p, &q), d(&q, &p));
        prop_assert_eq!(d(&p, &p), qpinf::rat::int(0));
        prop_assert!(d(&p, &s) <= d(&p, &q) + d(&q, &s));
    }

    #[test]
    fn rational_orbits_have_one_representative(seed: u64) {
        orbit_invariance(q_mult(), seed)?;
        orbit_invariance(q_pos(), seed)?;
    }

    #[test]
    fn zbar_orbits_have_one_representative(seed: u64) {
        orbit_invariance(zbar(), seed)?;
    }

    #[test]
    fn golomb_families_share_a_closure_point(
        raw in prop::collection::vec((1u64..=30, 0u64..30), 1..5),
    ) {
        let family: Vec<Progression> = raw
            .iter()
            .map(|&(b, a)| Progression::new(a % b, b))
            .filter(Progression::coprime)
            .collect();
        let t = family.iter().fold(1, |acc, u| radical(acc * radical(u.b)));
        let g = golomb_presentation();
        for u in &family {
            prop_assert!(g.closure_contains(t, u), "{} against {:?}", t, u);
            prop_assert!(golomb_closure_contains(u, t, 300).holds(), "{} against {:?}", t, u);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn shallow_witnesses_survive_extra_opens(seed: u64, n in 1usize..4) {
        let mut r = rng(seed);
        let set = random_finite_set(&mut r, n);
        let cert = classify_depth(&set, 8, Budget { points: 10, depth: 8 }, &mut r);
        prop_assert_eq!(cert.verdict, Depth::Shallow);
        let w = cert.shallow.unwrap();
        let mut family = w.family.clone();
        family.extend((0..3).map(|_| random_open(&mut r, 4, 4)));
        let points: Vec<ProjPoint> = w.separated.iter().map(|(p, _, _)| p.clone()).collect();
        prop_assert!(family_misses(&points, &family, 8).is_some());
    }
}
