//! Worked values, each checked against an oracle that does not share code
//! with the routine under test.

use qpinf::cli::{self, Command, RunConfig};
use qpinf::engine::{Engine, EngineBudget, Mode};
use qpinf::golomb::{golomb_closure_contains, Progression};
use qpinf::presentation::{Closure, SpacePresentation, Verdict};
use qpinf::projective::{member, meets, nbhd_base, BasicOpen, ProjPoint, QPInf};
use qpinf::rat::{int, rat};

/// Does the line through `p` (any scaling) hit `b`? Scans scalings `c/d`
/// with small numerator and denominator.
fn scaled_hit(p: &ProjPoint, b: &BasicOpen) -> bool {
    for d in 1..=16i64 {
        for c in -64..=64i64 {
            if c == 0 {
                continue;
            }
            let s = rat(c, d);
            let at = |i: usize| p.coord(i) * &s;
            if at(b.chart) == int(1) && b.constraints.iter().all(|(i, iv)| iv.contains(&at(*i))) {
                return true;
            }
        }
    }
    false
}

fn unit_interval() -> BasicOpen {
    BasicOpen::chart(0).with_rat(1, int(0), int(1))
}

#[test]
fn closure_of_a_chart_cylinder() {
    let b = unit_interval();
    // the class of e_2 sits in the skeleton tail of b
    let c = QPInf.in_closure(&ProjPoint::unit(2), &b, 8);
    assert!(c.is_in(), "{c:?}");
    if let Closure::Tail { witness, depth, .. } | Closure::Near { witness, depth } = &c {
        assert!(member(witness, &b));
        assert!(member(witness, &nbhd_base(&ProjPoint::unit(2), *depth)));
    }
    // (1, 5) is kept away by its depth-4 neighbourhood
    let p = ProjPoint::from_ints(&[1, 5]).unwrap();
    match QPInf.in_closure(&p, &b, 4) {
        Closure::Separated { nbhd } => {
            assert!(member(&p, &nbhd));
            assert_eq!(meets(&nbhd, &b), None);
            // coordinate 1 of every point of the neighbourhood is near 5
            for q in QPInf.points().take(3000).filter(|q| member(q, &nbhd)) {
                assert!(!member(&q, &b));
            }
        }
        other => panic!("expected a separation, got {other:?}"),
    }
}

#[test]
fn membership_agrees_with_rescaling() {
    let cases = [
        (ProjPoint::from_ints(&[1, 4]).unwrap(), BasicOpen::chart(1).with_rat(0, int(0), rat(1, 2)), true),
        (ProjPoint::from_ints(&[1, 4]).unwrap(), BasicOpen::chart(1).with_rat(0, rat(1, 2), int(1)), false),
        (ProjPoint::unit(2), BasicOpen::chart(1), false),
        (ProjPoint::from_ints(&[0, 2, 3]).unwrap(), BasicOpen::chart(2).with_rat(1, rat(1, 2), int(1)), true),
    ];
    for (p, b, want) in cases {
        assert_eq!(member(&p, &b), want, "{p} in {b}");
        assert_eq!(scaled_hit(&p, &b), want, "{p} in {b} by rescaling");
    }
}

#[test]
fn meets_witness_is_a_member_of_both() {
    let b1 = unit_interval();
    let b2 = BasicOpen::chart(1).with_rat(0, int(2), int(3));
    let w = meets(&b1, &b2).unwrap();
    assert!(scaled_hit(&w, &b1) && scaled_hit(&w, &b2));
    let far = BasicOpen::chart(0).with_rat(1, int(2), int(3));
    assert_eq!(meets(&b1, &far), None);
    // the scan agrees that nothing small lies in both
    assert!(QPInf.points().take(3000).all(|q| !(member(&q, &b1) && member(&q, &far))));
}

#[test]
fn golomb_examples_against_brute_force() {
    // t is in the closure of a + bN when every t + dN with gcd(t, d) = 1 meets it
    fn scan(t: u64, u: &Progression, dmax: u64) -> bool {
        (1..=dmax).filter(|d| num_integer::gcd(t, *d) == 1).all(|d| (0..u.b * d).any(|j| u.contains(t + d * j)))
    }
    let cases = [(Progression::new(1, 2), 2, true), (Progression::new(3, 4), 2, true), (Progression::new(1, 3), 2, false)];
    for (u, t, want) in cases {
        assert_eq!(scan(t, &u, 60), want, "{t} against {u:?}");
        assert_eq!(golomb_closure_contains(&u, t, 1000).holds(), want, "{t} against {u:?}");
    }
}

#[test]
fn anchored_self_run_is_clean() {
    let q = QPInf;
    let anchors = vec![
        (ProjPoint::unit(1), ProjPoint::from_ints(&[0, 1, 3]).unwrap()),
        (ProjPoint::from_ints(&[1, 2]).unwrap(), ProjPoint::unit(0)),
    ];
    let mut e = Engine::new(&q, &q, anchors.clone(), Mode::Homeo, EngineBudget::default(), 1).unwrap();
    let out = e.run(60);
    let map = e.extract_partial_map();
    let bad: Vec<_> = out.rows.iter().chain(&map.rows).filter(|r| r.verdict != Verdict::Pass).collect();
    assert!(bad.is_empty() && out.failure.is_none(), "{bad:#?} {:?}", out.failure);
    for (a, b) in &anchors {
        assert!(map.table.iter().any(|(x, y)| x == a && y == b), "anchor {a} -> {b} missing");
    }
}

#[test]
fn longer_runs_extend_shorter_traces() {
    let trace = |stages: usize| {
        let cfg = RunConfig { command: Some(Command::Embed), stages: Some(stages), ..RunConfig::default() };
        let rows = cli::execute(&cli::resolve(&cfg).unwrap()).unwrap();
        // drop the header and the closing map summary
        rows.into_iter().skip(1).filter(|r| r.stage != "map").collect::<Vec<_>>()
    };
    let short = trace(10);
    let long = trace(20);
    assert!(short.len() < long.len());
    assert_eq!(short[..], long[..short.len()]);
}
