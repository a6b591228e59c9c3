//! Acceptance suite: one line per criterion, then a single assertion.

use qpinf::cli::{self, Command, Job, RunConfig};
use qpinf::engine::LedgerRow;
use qpinf::homogeneity::{
    build_index_sequence, classify_depth, extend_bijection, partition_levels, random_finite_set, replay_depth, Depth,
    DiscreteSet, ExtendConfig, IndexBijection, SetMap,
};
use qpinf::presentation::{Budget, SpacePresentation, Verdict};
use qpinf::projective::{density_witness, member, nbhd_base, random_open, skeleton_tail_level, ProjPoint, QPInf};
use qpinf::skeleton::Mutation;
use qpinf::Rng;
use rand::{Rng as _, SeedableRng};
use std::path::PathBuf;
use std::time::{Duration, Instant};

const SEED: u64 = 1;

// criterion 1
const FAMILIES: usize = 200;
const MAX_FAMILY: usize = 5;
const TAIL_POINTS: usize = 4;
const WITNESS_DEPTHS: [usize; 3] = [0, 3, 8];
const LIMIT_1: Duration = Duration::from_secs(60);
// criterion 2
const SUITE_SAMPLES: usize = 100;
const SUITE_DEPTH: usize = 8;
// criteria 3 to 6
const STAGES: usize = 60;
const LIMIT_3: Duration = Duration::from_secs(300);
const FINITE_PAIRS: usize = 20;
const MAX_FINITE: usize = 4;
// criterion 7
const SHIFTING_PAIRS: usize = 20;
const SET_HORIZON: usize = 16;
// criterion 8
const MAX_MODULUS: u64 = 30;
const CRT_HORIZON: u64 = 10_000;
const LIMIT_8: Duration = Duration::from_secs(60);

struct Outcome {
    ok: bool,
    detail: String,
}

fn outcome(ok: bool, detail: impl Into<String>) -> Outcome {
    Outcome { ok, detail: detail.into() }
}

fn job(command: Command, source: Option<&str>, target: Option<&str>) -> Job {
    let cfg = RunConfig {
        command: Some(command),
        source: source.map(String::from),
        target: target.map(String::from),
        seed: Some(SEED),
        ..RunConfig::default()
    };
    cli::resolve(&cfg).unwrap()
}

fn failing(rows: &[LedgerRow]) -> Vec<String> {
    rows.iter().filter(|r| r.verdict != Verdict::Pass).map(|r| format!("{} {}", r.stage, r.clause)).take(5).collect()
}

fn scratch_dir() -> PathBuf {
    let d = std::env::temp_dir().join(format!("qpinf-acceptance-{}", std::process::id()));
    std::fs::create_dir_all(&d).unwrap();
    d
}

fn superconnected_families() -> Outcome {
    let start = Instant::now();
    let mut rng = Rng::seed_from_u64(SEED);
    let mut bad = Vec::new();
    let mut witnesses = 0;
    for f in 0..FAMILIES {
        let size = rng.gen_range(1..=MAX_FAMILY);
        let opens: Vec<_> = (0..size).map(|_| random_open(&mut rng, 5, 6)).collect();
        let tail = opens.iter().map(skeleton_tail_level).max().unwrap();
        for _ in 0..TAIL_POINTS {
            let t = QPInf.sample_point(&mut rng, tail).unwrap();
            for k in WITNESS_DEPTHS {
                let w = nbhd_base(&t, k);
                for o in &opens {
                    match density_witness(o, &t, &w) {
                        Ok(x) if member(&x, o) && member(&x, &w) => witnesses += 1,
                        other => bad.push(format!("family {f}: {t} against {o}: {other:?}")),
                    }
                }
            }
        }
    }
    let took = start.elapsed();
    outcome(
        bad.is_empty() && took < LIMIT_1,
        format!("{FAMILIES} families, {witnesses} witnesses, {} failures, {:.1?}", bad.len(), took),
    )
}

fn canonical_suite(artifacts: &mut Vec<(String, Vec<LedgerRow>)>) -> Outcome {
    let j = Job { samples: SUITE_SAMPLES, depth: SUITE_DEPTH, ..job(Command::Verify, Some("qpinf"), None) };
    let rows = cli::execute(&j).unwrap();
    let kinds: Vec<&str> = rows.iter().skip(1).map(|r| r.clause.as_str()).collect();
    let needed = ["vanishing", "inductively-superconnecting", "coregular", "nowhere-dense"];
    let ok = cli::exit_code(&rows) == 0 && needed.iter().all(|k| kinds.contains(k));
    let detail = format!("{} reports at samples {SUITE_SAMPLES}, depth {SUITE_DEPTH}, failing {:?}", kinds.len(), failing(&rows));
    artifacts.push(("verify-qpinf".into(), rows));
    outcome(ok, detail)
}

fn map_row<'a>(rows: &'a [LedgerRow], clause: &str) -> Option<&'a LedgerRow> {
    rows.iter().find(|r| r.stage == "map" && r.clause == clause)
}

fn engine_self_run(artifacts: &mut Vec<(String, Vec<LedgerRow>)>) -> Outcome {
    let start = Instant::now();
    let j = Job { stages: STAGES, ..job(Command::Homeo, Some("qpinf"), Some("qpinf")) };
    let rows = cli::execute(&j).unwrap();
    let took = start.elapsed();
    let clauses = ["1a", "1b", "1c", "1d", "1e", "1f", "2a", "2b", "2c", "2d", "2e", "2f", "2g", "2h", "2i"];
    let seen: Vec<&str> = clauses.iter().copied().filter(|c| rows.iter().any(|r| r.clause == *c)).collect();
    let map_ok = ["injective", "level-preserving", "continuity"]
        .iter()
        .all(|c| map_row(&rows, c).is_some_and(|r| r.verdict == Verdict::Pass));
    let stages = rows.iter().filter(|r| r.clause == "construct").count();
    let ok = cli::exit_code(&rows) == 0 && map_ok && stages == STAGES && took < LIMIT_3;
    let detail = format!(
        "{stages} indices, clauses {}, map checks {map_ok}, failing {:?}, {:.1?}",
        seen.join(","),
        failing(&rows),
        took
    );
    artifacts.push(("homeo-qpinf-qpinf".into(), rows));
    outcome(ok, detail)
}

fn universality_run(artifacts: &mut Vec<(String, Vec<LedgerRow>)>) -> Outcome {
    let j = Job { stages: STAGES, ..job(Command::Embed, Some("qline"), Some("qpinf")) };
    let rows = cli::execute(&j).unwrap();
    let images: Vec<u64> = rows
        .iter()
        .filter(|r| r.clause == "construct")
        .filter_map(|r| r.certificate["point"]["level"].as_u64())
        .collect();
    let ok = cli::exit_code(&rows) == 0 && !images.is_empty() && images.iter().all(|l| *l == 0);
    let detail = format!("{} point stages, all at level 0: {}, failing {:?}", images.len(), images.iter().all(|l| *l == 0), failing(&rows));
    artifacts.push(("embed-qline-qpinf".into(), rows));
    outcome(ok, detail)
}

fn cross_model_run(artifacts: &mut Vec<(String, Vec<LedgerRow>)>) -> Outcome {
    let j = Job { stages: STAGES, ..job(Command::Homeo, Some("qpinf"), Some("zbar")) };
    let rows = cli::execute(&j).unwrap();
    let canonical = rows.iter().any(|r| r.stage == "target-skeleton" && r.clause == "canonical" && r.verdict == Verdict::Pass);
    let axioms = rows.iter().filter(|r| r.stage == "target-axioms").all(|r| r.verdict == Verdict::Pass);
    let onto = map_row(&rows, "surjective-progress").is_some_and(|r| r.verdict == Verdict::Pass);
    let ok = cli::exit_code(&rows) == 0 && canonical && axioms && onto;
    let detail = format!("axioms {axioms}, canonical superskeleton {canonical}, surjective progress {onto}, failing {:?}", failing(&rows));
    artifacts.push(("homeo-qpinf-zbar".into(), rows));
    outcome(ok, detail)
}

fn finite_homogeneity() -> Outcome {
    let mut rng = Rng::seed_from_u64(SEED);
    let mut bad = Vec::new();
    for i in 0..FINITE_PAIRS {
        let n = rng.gen_range(1..=MAX_FINITE);
        let a = random_finite_set(&mut rng, n);
        let b = random_finite_set(&mut rng, n);
        let f = SetMap::new(a.clone(), b.clone(), IndexBijection::random(&mut rng, n)).unwrap();
        let cfg = ExtendConfig { stages: STAGES, seed: SEED + i as u64, ..ExtendConfig::default() };
        let ext = match extend_bijection(&f, &cfg) {
            Ok(e) => e,
            Err(e) => {
                bad.push(format!("pair {i}: {e}"));
                continue;
            }
        };
        let restricted = a.prefix(n).iter().all(|x| ext.table.iter().any(|(p, q)| p == x && Some(q) == f.forward(x).as_ref()))
            && ext.table.iter().all(|(p, q)| a.contains(p) == b.contains(q));
        let done = ext.rows.iter().filter(|r| r.clause == "construct").count();
        if ext.verdict() != Verdict::Pass || !restricted || done != STAGES {
            bad.push(format!("pair {i}: verdict {:?}, restricted {restricted}, {done} indices, failing {:?}", ext.verdict(), failing(&ext.rows)));
        }
    }
    outcome(bad.is_empty(), format!("{FINITE_PAIRS} pairs of size <= {MAX_FINITE}, {STAGES} stages, problems {bad:?}"))
}

fn level_shifting(rng: &mut Rng) -> SetMap {
    loop {
        let n = rng.gen_range(4..=10);
        let perm = IndexBijection::random(rng, n);
        if (0..n).any(|i| perm.apply(i) != i) {
            let target = if rng.gen_bool(0.5) { DiscreteSet::Units } else { DiscreteSet::Steps };
            return SetMap::new(DiscreteSet::Units, target, perm).unwrap();
        }
    }
}

fn depth_pipeline(artifacts: &mut Vec<(String, Vec<LedgerRow>)>) -> Outcome {
    let mut rng = Rng::seed_from_u64(SEED);
    let budget = Budget { points: 20, depth: 8 };
    let finite = DiscreteSet::finite(vec![ProjPoint::unit(2), ProjPoint::from_ints(&[1, 5]).unwrap()]).unwrap();
    let examples = [
        (DiscreteSet::Units, Depth::Deep),
        (finite, Depth::Shallow),
        (DiscreteSet::Convergents { level: 0 }, Depth::Shallow),
        (DiscreteSet::Convergents { level: 2 }, Depth::Shallow),
    ];
    let mut bad = Vec::new();
    for (set, want) in &examples {
        let c = classify_depth(set, SET_HORIZON, budget, &mut rng);
        if c.verdict != *want || replay_depth(set, &c).is_err() {
            bad.push(format!("{set:?}: {:?}", c.verdict));
        }
    }
    for source in ["units", "convergents:0", "convergents:2"] {
        let rows = cli::execute(&job(Command::Classify, Some(source), None)).unwrap();
        if cli::exit_code(&rows) != 0 {
            bad.push(format!("classify {source}: {:?}", failing(&rows)));
        }
        artifacts.push((format!("classify-{source}"), rows));
    }
    let mut claims = 0;
    let mut plus = 0;
    for i in 0..SHIFTING_PAIRS {
        let f = level_shifting(&mut rng);
        let p = build_index_sequence(&f, SET_HORIZON).and_then(|n| partition_levels(&f, &n));
        match p {
            Ok(p) if p.holds() => {
                claims += p.claims.len();
                plus += p.blocks.iter().filter(|b| !b.a_plus.is_empty()).count();
            }
            Ok(p) => bad.push(format!("bijection {i}: {:?}", p.claims.iter().filter(|c| !c.holds).collect::<Vec<_>>())),
            Err(e) => bad.push(format!("bijection {i}: {e}")),
        }
    }
    let detail = format!("4 examples, {SHIFTING_PAIRS} bijections, {claims} claim checks, {plus} blocks with A_k^+, problems {bad:?}");
    outcome(bad.is_empty(), detail)
}

fn golomb_closure(artifacts: &mut Vec<(String, Vec<LedgerRow>)>) -> Outcome {
    let start = Instant::now();
    let j = Job { modulus: MAX_MODULUS, horizon: CRT_HORIZON, ..job(Command::Golomb, None, None) };
    let rows = cli::execute(&j).unwrap();
    let took = start.elapsed();
    let refuted = rows.iter().filter(|r| r.verdict != Verdict::Pass).count();
    let detail = format!("{} progressions with b <= {MAX_MODULUS}, horizon {CRT_HORIZON}, {refuted} refutations, {:.1?}", rows.len() - 1, took);
    artifacts.push(("golomb".into(), rows));
    outcome(refuted == 0 && took < LIMIT_8, detail)
}

fn run_cli(args: &[&str]) -> i32 {
    cli::main_with(std::iter::once("qpinf").chain(args.iter().copied()))
}

fn evidence(row: &LedgerRow) -> Vec<String> {
    let w = row.certificate["witnesses"].as_array().cloned().unwrap_or_default();
    w.iter().filter_map(|e| e["evidence"].as_str().map(String::from)).collect()
}

fn checker_soundness(artifacts: &mut Vec<(String, Vec<LedgerRow>)>) -> Outcome {
    let dir = scratch_dir();
    let mut bad = Vec::new();
    let mut replayed = 0;
    let axioms = cli::execute(&job(Command::Axioms, None, None)).unwrap();
    artifacts.push(("axioms-zbar".into(), axioms));
    let (_, base) = artifacts.iter().find(|(n, _)| n == "verify-qpinf").unwrap();
    let clean: Vec<(String, String)> =
        base.iter().flat_map(|r| evidence(r).into_iter().map(|e| (r.clause.clone(), e))).collect();
    let mut rng = Rng::seed_from_u64(SEED);
    let mut caught = 0;
    for m in Mutation::seeded(&mut rng) {
        let j = Job { samples: 24, horizon: 5, ..job(Command::Verify, Some(&cli::mutant_name(m)), None) };
        let rows = cli::execute(&j).unwrap();
        // a failing row must carry evidence never seen in the clean run
        let witnessed = rows.iter().any(|r| {
            r.verdict == Verdict::Fail
                && evidence(r).iter().any(|e| !clean.contains(&(r.clause.clone(), e.clone())))
        });
        if cli::exit_code(&rows) == 1 && witnessed {
            caught += 1;
        } else {
            bad.push(format!("{m:?} not caught"));
        }
        artifacts.push((format!("verify-{}", cli::mutant_name(m).replace(':', "-")), rows));
    }
    for (name, rows) in artifacts.iter() {
        let path = dir.join(format!("{name}.jsonl"));
        let back = dir.join(format!("{name}.replay.jsonl"));
        cli::write_atomic(&path, &cli::to_jsonl(rows)).unwrap();
        let code = run_cli(&["--replay", path.to_str().unwrap(), "--out", back.to_str().unwrap()]);
        if code == 0 {
            replayed += 1;
        } else {
            let out = std::fs::read_to_string(&back).unwrap_or_default();
            let first = out.lines().find(|l| l.contains("\"fail\"")).unwrap_or("").chars().take(300).collect::<String>();
            bad.push(format!("{name} replay exit {code}: {first}"));
        }
    }
    // a tampered certificate must not replay
    let (_, golomb) = artifacts.iter().find(|(n, _)| n == "golomb").unwrap();
    let mut tampered = golomb.clone();
    tampered[5].certificate["certificates"][0]["checked"] = serde_json::json!(0);
    let rejected = cli::exit_code(&cli::replay_rows(&tampered).unwrap()) == 1;
    if !rejected {
        bad.push("tampered golomb certificate replayed".into());
    }
    std::fs::remove_dir_all(&dir).ok();
    outcome(bad.is_empty(), format!("{replayed} artifacts replayed, {caught}/5 mutations caught, problems {bad:?}"))
}

fn determinism() -> Outcome {
    let dir = scratch_dir();
    let mut bad = Vec::new();
    let configs: [&[&str]; 4] = [
        &["--command", "verify", "--samples", "30"],
        &["--command", "homeo", "--stages", "20"],
        &["--command", "classify", "--source", "units", "--target", "steps", "--perm", "1,0,2", "--stages", "20"],
        &["--command", "axioms"],
    ];
    for (i, args) in configs.iter().enumerate() {
        let mut bytes = Vec::new();
        for run in 0..2 {
            let out = dir.join(format!("run{i}-{run}.jsonl"));
            let mut full: Vec<&str> = args.to_vec();
            full.extend(["--out", out.to_str().unwrap()]);
            run_cli(&full);
            bytes.push(std::fs::read(&out).unwrap_or_default());
        }
        if bytes[0].is_empty() || bytes[0] != bytes[1] {
            bad.push(args.join(" "));
        }
    }
    std::fs::remove_dir_all(&dir).ok();
    outcome(bad.is_empty(), format!("{} configs run twice, differing {bad:?}", configs.len()))
}

#[test]
fn acceptance() {
    let mut artifacts = Vec::new();
    let results = [
        ("superconnected random families", superconnected_families()),
        ("canonical superskeleton suite", canonical_suite(&mut artifacts)),
        ("engine self-run", engine_self_run(&mut artifacts)),
        ("universality embedding", universality_run(&mut artifacts)),
        ("cross-model homeomorphism", cross_model_run(&mut artifacts)),
        ("finite homogeneity", finite_homogeneity()),
        ("deep/shallow pipeline", depth_pipeline(&mut artifacts)),
        ("golomb closure", golomb_closure(&mut artifacts)),
        ("checker soundness", checker_soundness(&mut artifacts)),
        ("determinism", determinism()),
    ];
    for (i, (name, o)) in results.iter().enumerate() {
        println!("criterion {:>2} {} {name}: {}", i + 1, if o.ok { "PASS" } else { "FAIL" }, o.detail);
    }
    let failed: Vec<usize> = results.iter().enumerate().filter(|(_, (_, o))| !o.ok).map(|(i, _)| i + 1).collect();
    assert!(failed.is_empty(), "failing criteria {failed:?}");
}
