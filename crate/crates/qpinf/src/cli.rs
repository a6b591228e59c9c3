//! Batch driver. A run resolves its configuration, executes one command and
//! emits ledger rows as JSON lines; the first row records the resolved
//! configuration so `--replay` can rebuild the same oracles.

use crate::engine::{Engine, EngineBudget, LedgerRow, Mode};
use crate::golomb::{
    check_witness, golomb_closure_contains, golomb_presentation, kirch_presentation, radical, GolombCertificate,
    Progression,
};
use crate::homogeneity::{
    build_index_sequence, classify_depth, extend_bijection, partition_levels, replay_depth, restriction_row,
    Depth, DepthCertificate, DiscreteSet, EngineSetup, ExtendConfig, HomogeneityError, IndexBijection, SetMap,
};
use crate::presentation::{Budget, Constructive, SpacePresentation, Verdict};
use crate::projective::QPInf;
use crate::qline::QLine;
use crate::reskeleton::Reskeleton;
use crate::singular::{
    builtin_model, check_quotient_preconditions, q_mult, q_pos, verify_singular_axioms, zbar, AxiomBudget,
    AxiomReport, BuiltinModel, Projective, SingularModel, Carrier,
};
use crate::skeleton::{check_canonical, replay_report, run_suite, Discrete, Mutant, Mutation, ReportOf, SkeletonBudget, SkeletonReport};
use crate::Rng;
use clap::{Parser, ValueEnum};
use num_integer::Integer;
use rand::SeedableRng;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Skeleton checks on one presentation.
    Verify,
    /// Back-and-forth embedding of the source into the target.
    Embed,
    /// Back-and-forth homeomorphism between source and target.
    Homeo,
    /// Depth of a discrete set; with a target, extend a bijection.
    Classify,
    /// Closure campaigns for arithmetic progressions.
    Golomb,
    /// Axiom checks on a singular model.
    Axioms,
}

#[derive(Parser, Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[command(name = "qpinf", version, about = "Skeleton checks, back-and-forth runs and certificate replay on QP^inf")]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    #[arg(long, value_enum)]
    pub command: Option<Command>,
    /// Space, set or model the command works on.
    #[arg(long)]
    pub source: Option<String>,
    #[arg(long)]
    pub target: Option<String>,
    /// Index permutation for `classify` with a target, e.g. `2,0,1`.
    #[arg(long)]
    pub perm: Option<String>,
    #[arg(long)]
    pub stages: Option<usize>,
    #[arg(long)]
    pub depth: Option<usize>,
    #[arg(long)]
    pub samples: Option<usize>,
    /// Skeleton index, set horizon, CRT modulus bound or model height, by command.
    #[arg(long)]
    pub horizon: Option<u64>,
    /// Largest progression modulus for `golomb`.
    #[arg(long)]
    pub modulus: Option<u64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub replay: Option<PathBuf>,
    /// JSON file with any of the fields above; flags win over it.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}

/// A configuration with every default filled in.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Job {
    pub command: Command,
    pub source: String,
    pub target: Option<String>,
    pub perm: Option<Vec<usize>>,
    pub stages: usize,
    pub depth: usize,
    pub samples: usize,
    pub horizon: u64,
    pub modulus: u64,
    pub seed: u64,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("{location}: {message}")]
pub struct ConfigError {
    pub location: String,
    pub message: String,
}

impl ConfigError {
    fn new(location: impl Into<String>, message: impl ToString) -> Self {
        ConfigError { location: location.into(), message: message.to_string() }
    }
}

impl From<HomogeneityError> for ConfigError {
    fn from(e: HomogeneityError) -> Self {
        ConfigError::new("--source/--target/--perm", e)
    }
}

fn merge(file: RunConfig, flags: RunConfig) -> RunConfig {
    RunConfig {
        command: flags.command.or(file.command),
        source: flags.source.or(file.source),
        target: flags.target.or(file.target),
        perm: flags.perm.or(file.perm),
        stages: flags.stages.or(file.stages),
        depth: flags.depth.or(file.depth),
        samples: flags.samples.or(file.samples),
        horizon: flags.horizon.or(file.horizon),
        modulus: flags.modulus.or(file.modulus),
        seed: flags.seed.or(file.seed),
        out: flags.out.or(file.out),
        replay: flags.replay.or(file.replay),
        config: None,
    }
}

/// Read the config file, if any, under the flags.
pub fn load(flags: RunConfig) -> Result<RunConfig, ConfigError> {
    let Some(path) = flags.config.clone() else { return Ok(flags) };
    let text = std::fs::read_to_string(&path).map_err(|e| ConfigError::new(path.display().to_string(), e))?;
    let file: RunConfig = serde_json::from_str(&text)
        .map_err(|e| ConfigError::new(format!("{}:{}:{}", path.display(), e.line(), e.column()), e))?;
    Ok(merge(file, flags))
}

pub fn resolve(cfg: &RunConfig) -> Result<Job, ConfigError> {
    let command = cfg.command.ok_or_else(|| ConfigError::new("--command", "missing"))?;
    // (source, target, stages, depth, samples, horizon)
    let (source, target, stages, depth, samples, horizon) = match command {
        Command::Verify => ("qpinf", None, 0, 8, 100, 8),
        Command::Embed => ("qline", Some("qpinf"), 60, 8, 4, 6),
        Command::Homeo => ("qpinf", Some("zbar"), 60, 8, 4, 6),
        Command::Classify => ("units", None, 60, 8, 20, 16),
        Command::Golomb => ("golomb", None, 0, 0, 8, 10_000),
        Command::Axioms => ("Zbar-add", None, 0, 6, 40, 4),
    };
    let perm = match &cfg.perm {
        None => None,
        Some(s) => Some(
            s.split(',')
                .map(|t| t.trim().parse::<usize>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| ConfigError::new("--perm", e))?,
        ),
    };
    let job = Job {
        command,
        source: cfg.source.clone().unwrap_or_else(|| source.into()),
        target: cfg.target.clone().or(target.map(String::from)),
        perm,
        stages: cfg.stages.unwrap_or(stages),
        depth: cfg.depth.unwrap_or(depth),
        samples: cfg.samples.unwrap_or(samples),
        horizon: cfg.horizon.unwrap_or(horizon),
        modulus: cfg.modulus.unwrap_or(30),
        seed: cfg.seed.unwrap_or(1),
    };
    if job.samples == 0 {
        return Err(ConfigError::new("--samples", "must be positive"));
    }
    if job.horizon == 0 {
        return Err(ConfigError::new("--horizon", "must be positive"));
    }
    if matches!(command, Command::Embed | Command::Homeo) && job.stages == 0 {
        return Err(ConfigError::new("--stages", "must be positive"));
    }
    if matches!(command, Command::Embed | Command::Homeo) && job.target.is_none() {
        return Err(ConfigError::new("--target", "missing"));
    }
    Ok(job)
}

fn row(stage: &str, clause: &str, verdict: Verdict, certificate: Value) -> LedgerRow {
    LedgerRow { stage: stage.into(), clause: clause.into(), verdict, certificate }
}

fn header(job: &Job) -> LedgerRow {
    row("run", "config", Verdict::Pass, serde_json::to_value(job).expect("serializable"))
}

fn rng_for(job: &Job) -> Rng {
    Rng::seed_from_u64(job.seed)
}

fn skeleton_budget(job: &Job) -> SkeletonBudget {
    SkeletonBudget { samples: job.samples, depth: job.depth, horizon: job.horizon as usize }
}

fn engine_budget(job: &Job) -> EngineBudget {
    EngineBudget { depth: job.depth, samples: job.samples, ..EngineBudget::default() }
}

/// Budget for the skeleton prerequisites of an engine run.
fn prerequisite_budget(job: &Job) -> SkeletonBudget {
    SkeletonBudget { samples: 20, depth: job.depth, horizon: job.horizon as usize }
}

fn axiom_budget(job: &Job) -> AxiomBudget {
    AxiomBudget { samples: job.samples, depth: job.depth, height: job.horizon }
}

fn parse_mutation(s: &str) -> Result<Mutation, ConfigError> {
    let mut it = s.split(':');
    let kind = it.next().unwrap_or_default();
    let mut arg = || -> Result<usize, ConfigError> {
        it.next().ok_or_else(|| ConfigError::new("--source", format!("{kind} needs a parameter")))?
            .parse()
            .map_err(|e| ConfigError::new("--source", e))
    };
    Ok(match kind {
        "drop-from-base" => Mutation::DropFromBase,
        "unsorted" => Mutation::Unsorted { at: arg()? },
        "sticky" => Mutation::Sticky,
        "collapse" => Mutation::Collapse { from: arg()? },
        "stutter" => Mutation::Stutter,
        other => return Err(ConfigError::new("--source", format!("unknown mutation {other}"))),
    })
}

/// Name accepted by `--source` for a tampered QP^inf.
pub fn mutant_name(m: Mutation) -> String {
    match m {
        Mutation::DropFromBase => "mutant:drop-from-base".into(),
        Mutation::Unsorted { at } => format!("mutant:unsorted:{at}"),
        Mutation::Sticky => "mutant:sticky".into(),
        Mutation::Collapse { from } => format!("mutant:collapse:{from}"),
        Mutation::Stutter => "mutant:stutter".into(),
    }
}

fn unknown_space(name: &str) -> ConfigError {
    ConfigError::new("--source/--target", format!("unknown space {name}"))
}

/// Spaces the engine can run on.
macro_rules! with_constructive {
    ($name:expr, |$s:ident| $body:expr) => {{
        match $name {
            "qpinf" => {
                let $s = &QPInf;
                $body
            }
            "qline" => {
                let $s = &QLine;
                $body
            }
            "zbar" => {
                let $s = &Projective::new(zbar());
                $body
            }
            "qmult" => {
                let $s = &Projective::new(q_mult());
                $body
            }
            "qpos" => {
                let $s = &Projective::new(q_pos());
                $body
            }
            other => Err(unknown_space(other)),
        }
    }};
}

/// Every named presentation.
macro_rules! with_space {
    ($name:expr, |$s:ident| $body:expr) => {{
        let name: &str = $name;
        if let Some(m) = name.strip_prefix("mutant:") {
            match parse_mutation(m) {
                Ok(m) => {
                    let $s = &Mutant::new(QPInf, m);
                    $body
                }
                Err(e) => Err(e),
            }
        } else if let Some(n) = name.strip_prefix("discrete:") {
            match n.parse::<usize>() {
                Ok(size) if size > 0 => {
                    let $s = &Discrete { size };
                    $body
                }
                _ => Err(ConfigError::new("--source", format!("bad size {n}"))),
            }
        } else {
            match name {
                "golomb" => {
                    let $s = &golomb_presentation();
                    $body
                }
                "kirch" => {
                    let $s = &kirch_presentation();
                    $body
                }
                other => with_constructive!(other, |$s| $body),
            }
        }
    }};
}

fn report_row<P: Serialize + DeserializeOwned, O: Serialize + DeserializeOwned>(stage: &str, r: &SkeletonReport<P, O>) -> LedgerRow {
    row(stage, &r.kind.to_string(), r.verdict, serde_json::to_value(r).expect("serializable"))
}

fn replay_report_row<S: SpacePresentation>(s: &S, r: &LedgerRow) -> Result<(), String> {
    let rep: ReportOf<S> = crate::presentation::decode(&r.certificate)?;
    if rep.kind.to_string() != r.clause || rep.verdict != r.verdict {
        return Err("row does not match its report".into());
    }
    replay_report(s, &rep)
}

// verify

fn verify_rows<S: SpacePresentation>(s: &S, job: &Job) -> Vec<LedgerRow> {
    let mut rng = rng_for(job);
    run_suite(s, skeleton_budget(job), &mut rng).iter().map(|r| report_row("verify", r)).collect()
}

// embed / homeo

/// Builtin model names used by the `axioms` command, by space name.
fn model_of(space: &str) -> Option<&'static str> {
    match space {
        "zbar" => Some("Zbar-add"),
        "qmult" => Some("Q-mult"),
        "qpos" => Some("Q-pos"),
        _ => None,
    }
}

fn canonical_row<S: SpacePresentation>(stage: &str, s: &S, job: &Job) -> LedgerRow {
    let mut rng = rng_for(job);
    report_row(stage, &check_canonical(s, prerequisite_budget(job), &mut rng))
}

fn engine_rows<X: Constructive, Y: Constructive>(x: &X, y: &Y, mode: Mode, job: &Job) -> Vec<LedgerRow> {
    let mut e = Engine::new(x, y, Vec::new(), mode, engine_budget(job), job.seed).expect("no anchors to check");
    e.run(job.stages).rows
}

fn mode_of(job: &Job) -> Mode {
    if job.command == Command::Embed {
        Mode::Embed
    } else {
        Mode::Homeo
    }
}

fn sides(job: &Job) -> Vec<(&'static str, &str)> {
    let target = job.target.as_deref().unwrap_or_default();
    match mode_of(job) {
        Mode::Embed => vec![("target", target)],
        Mode::Homeo => vec![("source", job.source.as_str()), ("target", target)],
    }
}

fn prerequisite_rows(job: &Job) -> Result<Vec<LedgerRow>, ConfigError> {
    let mut rows = Vec::new();
    for (side, name) in sides(job) {
        if let Some(model) = model_of(name) {
            for r in axiom_rows(model, job.seed, AxiomBudget::default())? {
                rows.push(LedgerRow { stage: format!("{side}-axioms"), ..r });
            }
        }
        rows.push(with_constructive!(name, |s| Ok(canonical_row(&format!("{side}-skeleton"), s, job)))?);
    }
    Ok(rows)
}

fn run_engine_command(job: &Job) -> Result<Vec<LedgerRow>, ConfigError> {
    let mut rows = prerequisite_rows(job)?;
    let target = job.target.as_deref().unwrap_or_default();
    let mode = mode_of(job);
    rows.extend(with_constructive!(job.source.as_str(), |x| with_constructive!(target, |y| Ok(
        engine_rows(x, y, mode, job)
    )))?);
    Ok(rows)
}

/// Re-run construction rows and re-check every other engine row in order.
fn replay_engine<X: Constructive, Y: Constructive>(
    x: &X,
    y: &Y,
    setup: (Vec<(X::Point, Y::Point)>, Mode, EngineBudget, u64),
    rows: &[&LedgerRow],
) -> Result<(Vec<Result<(), String>>, Vec<(X::Point, Y::Point)>), ConfigError> {
    let (anchors, mode, budget, seed) = setup;
    let mut e = Engine::new(x, y, anchors, mode, budget, seed).map_err(|e| ConfigError::new("setup", e))?;
    let mut out = Vec::new();
    for r in rows {
        out.push(if r.clause == "construct" { e.replay_construct(r) } else { e.replay_row(r) });
    }
    let table = e.state.points.iter().map(|p| (p.x.clone(), p.y.clone())).collect();
    Ok((out, table))
}

fn is_engine_row(r: &LedgerRow) -> bool {
    r.stage == "map" || crate::engine::parse_stage(&r.stage).is_some()
}

// classify

pub fn parse_set(s: &str) -> Result<DiscreteSet, ConfigError> {
    let bad = |e: &dyn ToString| ConfigError::new("--source/--target", e.to_string());
    if s.trim_start().starts_with('{') {
        let set: DiscreteSet = serde_json::from_str(s).map_err(|e| bad(&e))?;
        if let DiscreteSet::Finite { points } = &set {
            DiscreteSet::finite(points.clone())?;
        }
        return Ok(set);
    }
    match s.split_once(':') {
        Some(("convergents", l)) => Ok(DiscreteSet::Convergents { level: l.parse().map_err(|e| bad(&e))? }),
        None if s == "units" => Ok(DiscreteSet::Units),
        None if s == "steps" => Ok(DiscreteSet::Steps),
        _ => Err(bad(&format!("unknown set {s}"))),
    }
}

fn depth_verdict(d: Depth) -> Verdict {
    if d == Depth::Unknown {
        Verdict::Inconclusive
    } else {
        Verdict::Pass
    }
}

fn depth_row(stage: &str, c: &DepthCertificate) -> LedgerRow {
    row(stage, "depth", depth_verdict(c.verdict), serde_json::to_value(c).expect("serializable"))
}

fn classify_budget(job: &Job) -> Budget {
    Budget { points: job.samples, depth: job.depth }
}

fn extend_config(job: &Job) -> ExtendConfig {
    ExtendConfig {
        stages: job.stages,
        horizon: job.horizon as usize,
        classify: classify_budget(job),
        skeleton: SkeletonBudget { samples: job.samples, depth: 6, horizon: 6 },
        engine: EngineBudget { depth: job.depth, ..EngineBudget::default() },
        seed: job.seed,
    }
}

fn set_map(job: &Job) -> Result<Option<SetMap>, ConfigError> {
    let Some(t) = &job.target else { return Ok(None) };
    let perm = match &job.perm {
        Some(p) => IndexBijection::new(p.clone())?,
        None => IndexBijection::identity(),
    };
    Ok(Some(SetMap::new(parse_set(&job.source)?, parse_set(t)?, perm)?))
}

fn error_row(e: &HomogeneityError) -> LedgerRow {
    let v = if matches!(e, HomogeneityError::Undecided(_)) { Verdict::Inconclusive } else { Verdict::Fail };
    row("extend", "error", v, json!({ "error": e.to_string() }))
}

fn classify_rows(job: &Job) -> Result<Vec<LedgerRow>, ConfigError> {
    let a = parse_set(&job.source)?;
    let mut rng = rng_for(job);
    let horizon = job.horizon as usize;
    let mut rows = vec![depth_row("source", &classify_depth(&a, horizon, classify_budget(job), &mut rng))];
    let Some(f) = set_map(job)? else { return Ok(rows) };
    rows.push(depth_row("target", &classify_depth(&f.target, horizon, classify_budget(job), &mut rng)));
    match extend_bijection(&f, &extend_config(job)) {
        Ok(ext) => rows.extend(ext.rows),
        Err(e) => rows.push(error_row(&e)),
    }
    Ok(rows)
}

fn replay_classify(job: &Job, rows: &[LedgerRow]) -> Result<Vec<Result<(), String>>, ConfigError> {
    let a = parse_set(&job.source)?;
    let f = set_map(job)?;
    let setup: Option<EngineSetup> = rows
        .iter()
        .find(|r| r.stage == "setup")
        .map(|r| crate::presentation::decode(&r.certificate).map_err(|e| ConfigError::new("setup row", e)))
        .transpose()?;
    let spaces = match &setup {
        Some(s) => Some((
            Reskeleton::from_id(&s.source).ok_or_else(|| ConfigError::new("setup row", "bad source skeleton"))?,
            Reskeleton::from_id(&s.target).ok_or_else(|| ConfigError::new("setup row", "bad target skeleton"))?,
        )),
        None => None,
    };
    let engine_part: Vec<&LedgerRow> = rows.iter().filter(|r| is_engine_row(r)).collect();
    let (mut engine_results, table) = match (&setup, &spaces) {
        (Some(s), Some((x, y))) => {
            let (res, table) = replay_engine(x, y, (s.anchors.clone(), Mode::Homeo, s.budget, s.seed), &engine_part)?;
            (res.into_iter(), table)
        }
        _ => (Vec::new().into_iter(), Vec::new()),
    };
    let mut out = Vec::new();
    for r in rows {
        let res: Result<(), String> = match (r.stage.as_str(), r.clause.as_str()) {
            ("run", _) | ("setup", _) => Ok(()),
            ("source", "depth") | ("target", "depth") => (|| {
                let c: DepthCertificate = crate::presentation::decode(&r.certificate)?;
                let set = if r.stage == "source" { &a } else { &f.as_ref().ok_or("no target")?.target };
                if depth_verdict(c.verdict) != r.verdict {
                    return Err("verdict does not match the certificate".into());
                }
                replay_depth(set, &c)
            })(),
            ("partition", _) => (|| {
                let f = f.as_ref().ok_or("no bijection")?;
                let n = build_index_sequence(f, job.horizon as usize).map_err(|e| e.to_string())?;
                let p = partition_levels(f, &n).map_err(|e| e.to_string())?;
                let again = LedgerRow::new("partition", "claims", p.holds(), serde_json::to_value(&p.claims).unwrap());
                (again == *r).then_some(()).ok_or_else(|| "claims differ".to_string())
            })(),
            ("reskeleton", _) => (|| {
                let (f, (x, y)) = (f.as_ref().ok_or("no bijection")?, spaces.as_ref().ok_or("no setup")?);
                let top = *x.cuts().last().unwrap();
                let below = f.source.below(top).ok_or("source is not deep")?;
                let ok = below.iter().all(|p| Some(y.new_level(&f.forward(p).unwrap())) == Some(x.new_level(p)))
                    && f.target.below(top).ok_or("target is not deep")?.iter().all(|q| {
                        f.backward(q).is_some_and(|p| x.new_level(&p) == y.new_level(q))
                    });
                (ok == (r.verdict == Verdict::Pass)).then_some(()).ok_or_else(|| "level check differs".to_string())
            })(),
            ("reskeleton-source", _) | ("reskeleton-target", _) => (|| {
                let (x, y) = spaces.as_ref().ok_or("no setup")?;
                replay_report_row(if r.stage == "reskeleton-source" { x } else { y }, r)
            })(),
            ("extension", _) => (|| {
                let again = restriction_row(f.as_ref().ok_or("no bijection")?, &table);
                (again == *r).then_some(()).ok_or_else(|| "restriction differs".to_string())
            })(),
            ("extend", "error") => (|| {
                let f = f.as_ref().ok_or("no bijection")?;
                match extend_bijection(f, &extend_config(job)) {
                    Err(e) if error_row(&e) == *r => Ok(()),
                    _ => Err("error does not reproduce".into()),
                }
            })(),
            _ if is_engine_row(r) => engine_results.next().unwrap_or(Err("engine row without setup".into())),
            _ => Err(format!("unexpected row {} {}", r.stage, r.clause)),
        };
        out.push(res);
    }
    Ok(out)
}

// golomb

fn golomb_rows(job: &Job) -> Vec<LedgerRow> {
    let mut rows = Vec::new();
    for b in 1..=job.modulus {
        let rad = radical(b);
        for a in (1..=b).filter(|a| a.gcd(&b) == 1) {
            let u = Progression::new(a, b);
            let certs: Vec<GolombCertificate> =
                (1..=job.samples as u64).map(|j| golomb_closure_contains(&u, rad * j, job.horizon)).collect();
            let ok = certs.iter().all(GolombCertificate::holds);
            let cert = json!({
                "radical": rad,
                "argument": "gcd(d, t) = 1 and rad(b) | t give gcd(d, b) = 1, so t + dN meets a + bN",
                "certificates": certs,
            });
            rows.push(LedgerRow::new(u.to_string(), "radical-multiples", ok, cert));
        }
    }
    rows
}

fn replay_golomb(job: &Job, r: &LedgerRow) -> Result<(), String> {
    let certs: Vec<GolombCertificate> =
        crate::presentation::decode(&r.certificate["certificates"])?;
    let rad = r.certificate["radical"].as_u64().ok_or("missing radical")?;
    let u = certs.first().ok_or("no certificates")?.progression;
    if u.to_string() != r.stage || rad != radical(u.b) {
        return Err("progression or radical differs".into());
    }
    for c in &certs {
        if c.progression != u || c.t % rad != 0 || c.horizon != job.horizon {
            return Err(format!("{} is not a checked multiple", c.t));
        }
        if let Some((d, w)) = c.last_witness {
            if !check_witness(&u, c.t, d, w) {
                return Err(format!("witness {w} for modulus {d} fails"));
            }
        }
        if *c != golomb_closure_contains(&u, c.t, c.horizon) {
            return Err(format!("campaign for {} differs", c.t));
        }
    }
    let ok = certs.iter().all(GolombCertificate::holds);
    (ok == (r.verdict == Verdict::Pass)).then_some(()).ok_or_else(|| "verdict differs".into())
}

// axioms

fn report_rows(stage: &str, rep: &AxiomReport) -> Vec<LedgerRow> {
    rep.rows
        .iter()
        .map(|a| row(stage, &a.axiom, a.verdict, json!({ "model": rep.model, "detail": a.detail })))
        .collect()
}

fn model_rows<M: SingularModel + Carrier + Clone>(m: M, budget: AxiomBudget, rng: &mut Rng) -> Vec<LedgerRow> {
    let mut rows = report_rows("axioms", &verify_singular_axioms(&m, budget, rng));
    rows.extend(report_rows("quotient", &check_quotient_preconditions(&Projective::new(m), budget, rng)));
    rows
}

fn axiom_rows(model: &str, seed: u64, budget: AxiomBudget) -> Result<Vec<LedgerRow>, ConfigError> {
    let mut rng = Rng::seed_from_u64(seed);
    let model = model_of(model).unwrap_or(model);
    Ok(match builtin_model(model).map_err(|e| ConfigError::new("--source", e))? {
        BuiltinModel::QMult => model_rows(q_mult(), budget, &mut rng),
        BuiltinModel::QPos => model_rows(q_pos(), budget, &mut rng),
        BuiltinModel::Zbar => model_rows(zbar(), budget, &mut rng),
    })
}

// entry points

/// Execute a job; the first row is the header.
pub fn execute(job: &Job) -> Result<Vec<LedgerRow>, ConfigError> {
    let mut rows = vec![header(job)];
    rows.extend(match job.command {
        Command::Verify => with_space!(job.source.as_str(), |s| Ok(verify_rows(s, job)))?,
        Command::Embed | Command::Homeo => run_engine_command(job)?,
        Command::Classify => classify_rows(job)?,
        Command::Golomb => golomb_rows(job),
        Command::Axioms => axiom_rows(&job.source, job.seed, axiom_budget(job))?,
    });
    Ok(rows)
}

fn replay_verify<S: SpacePresentation>(s: &S, rows: &[LedgerRow]) -> Vec<Result<(), String>> {
    rows.iter().map(|r| if r.stage == "run" { Ok(()) } else { replay_report_row(s, r) }).collect()
}

fn replay_engine_command(job: &Job, rows: &[LedgerRow]) -> Result<Vec<Result<(), String>>, ConfigError> {
    let target = job.target.as_deref().unwrap_or_default();
    let engine_part: Vec<&LedgerRow> = rows.iter().filter(|r| is_engine_row(r)).collect();
    let mut engine = with_constructive!(job.source.as_str(), |x| with_constructive!(target, |y| Ok(
        replay_engine(x, y, (Vec::new(), mode_of(job), engine_budget(job), job.seed), &engine_part)?.0
    )))?
    .into_iter();
    let prereq = prerequisite_rows(job)?;
    let mut out = Vec::new();
    for r in rows {
        out.push(if r.stage == "run" {
            Ok(())
        } else if is_engine_row(r) {
            engine.next().unwrap_or(Err("missing replay".into()))
        } else if r.stage.ends_with("-skeleton") {
            let name = if r.stage.starts_with("source") { job.source.as_str() } else { target };
            with_constructive!(name, |s| Ok(replay_report_row(s, r)))?
        } else if prereq.contains(r) {
            Ok(())
        } else {
            Err(format!("{} {} does not reproduce", r.stage, r.clause))
        });
    }
    Ok(out)
}

/// Re-check every row of a recorded run. Returns one row per input row.
pub fn replay_rows(rows: &[LedgerRow]) -> Result<Vec<LedgerRow>, ConfigError> {
    let head = rows.first().filter(|r| r.stage == "run").ok_or_else(|| ConfigError::new("replay", "missing header"))?;
    let job: Job = crate::presentation::decode(&head.certificate).map_err(|e| ConfigError::new("header", e))?;
    let results = match job.command {
        Command::Verify => with_space!(job.source.as_str(), |s| Ok(replay_verify(s, rows)))?,
        Command::Embed | Command::Homeo => replay_engine_command(&job, rows)?,
        Command::Classify => replay_classify(&job, rows)?,
        Command::Golomb => rows.iter().map(|r| if r.stage == "run" { Ok(()) } else { replay_golomb(&job, r) }).collect(),
        Command::Axioms => {
            let again = axiom_rows(&job.source, job.seed, axiom_budget(&job))?;
            rows.iter()
                .map(|r| {
                    if r.stage == "run" || again.contains(r) {
                        Ok(())
                    } else {
                        Err(format!("{} {} does not reproduce", r.stage, r.clause))
                    }
                })
                .collect()
        }
    };
    Ok(rows
        .iter()
        .zip(results)
        .map(|(r, res)| match res {
            Ok(()) => row(&r.stage, &r.clause, Verdict::Pass, json!({ "replayed": r.verdict })),
            Err(e) => row(&r.stage, &r.clause, Verdict::Fail, json!({ "replayed": r.verdict, "error": e })),
        })
        .collect())
}

/// 0 when every row passed, 1 on any failure, 2 when only inconclusive rows remain.
pub fn exit_code(rows: &[LedgerRow]) -> i32 {
    match Verdict::all(rows.iter().map(|r| r.verdict)) {
        Verdict::Pass => 0,
        Verdict::Inconclusive => 2,
        Verdict::Fail => 1,
    }
}

pub fn to_jsonl(rows: &[LedgerRow]) -> String {
    let mut s = String::new();
    for r in rows {
        s.push_str(&serde_json::to_string(r).expect("serializable"));
        s.push('\n');
    }
    s
}

pub fn parse_jsonl(text: &str) -> Result<Vec<LedgerRow>, ConfigError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| ConfigError::new(format!("line {}", i + 1), e)))
        .collect()
}

/// Write through a temporary file in the same directory, then rename.
pub fn write_atomic(path: &Path, text: &str) -> std::io::Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    let tmp = dir.join(format!(".{name}.{}.tmp", std::process::id()));
    std::fs::write(&tmp, text)?;
    std::fs::rename(&tmp, path)
}

fn emit(rows: &[LedgerRow], out: Option<&Path>) -> Result<(), ConfigError> {
    let text = to_jsonl(rows);
    match out {
        Some(p) => write_atomic(p, &text).map_err(|e| ConfigError::new(p.display().to_string(), e)),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

/// Run with parsed flags and return the exit code.
pub fn run(flags: RunConfig) -> Result<i32, ConfigError> {
    let cfg = load(flags)?;
    let rows = match &cfg.replay {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| ConfigError::new(p.display().to_string(), e))?;
            replay_rows(&parse_jsonl(&text)?)?
        }
        None => execute(&resolve(&cfg)?)?,
    };
    emit(&rows, cfg.out.as_deref())?;
    Ok(exit_code(&rows))
}

pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let flags = match RunConfig::try_parse_from(args) {
        Ok(f) => f,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return 0;
        }
        Err(e) => {
            eprint!("{e}");
            return 1;
        }
    };
    match run(flags) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("config error at {e}");
            1
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn job(command: Command, source: &str) -> Job {
        let cfg = RunConfig { command: Some(command), source: Some(source.into()), ..RunConfig::default() };
        resolve(&cfg).unwrap()
    }

    #[test]
    fn qline_verify_fails_superconnecting_only() {
        let j = Job { samples: 24, horizon: 5, ..job(Command::Verify, "qline") };
        let rows = execute(&j).unwrap();
        let v = |c: &str| rows.iter().find(|r| r.clause == c).unwrap().verdict;
        assert_eq!(v("coregular"), Verdict::Pass);
        assert_eq!(v("superconnecting"), Verdict::Fail);
        assert_eq!(exit_code(&rows), 1);
        let again = replay_rows(&rows).unwrap();
        assert_eq!(exit_code(&again), 0, "{:?}", again.iter().find(|r| r.verdict != Verdict::Pass));
    }

    #[test]
    fn config_errors_name_the_field() {
        let cfg = RunConfig { command: Some(Command::Verify), samples: Some(0), ..RunConfig::default() };
        assert_eq!(resolve(&cfg).unwrap_err().location, "--samples");
        let e = execute(&job(Command::Verify, "nowhere")).unwrap_err();
        assert!(e.message.contains("unknown space"));
        assert!(resolve(&RunConfig::default()).is_err());
        assert!(parse_set("finite").is_err());
    }

    #[test]
    fn mutant_names_round_trip() {
        let mut rng = Rng::seed_from_u64(9);
        for m in Mutation::seeded(&mut rng) {
            assert_eq!(parse_mutation(mutant_name(m).strip_prefix("mutant:").unwrap()).unwrap(), m);
        }
    }

    #[test]
    fn golomb_rows_replay_and_tampering_is_caught() {
        let j = Job { modulus: 6, horizon: 200, samples: 2, ..job(Command::Golomb, "golomb") };
        let mut rows = execute(&j).unwrap();
        assert_eq!(exit_code(&rows), 0);
        assert_eq!(exit_code(&replay_rows(&rows).unwrap()), 0);
        rows[3].certificate["certificates"][0]["checked"] = json!(1);
        assert_eq!(exit_code(&replay_rows(&rows).unwrap()), 1);
    }

    #[test]
    fn classify_rows_replay() {
        let j = Job { horizon: 10, samples: 6, ..job(Command::Classify, "convergents:2") };
        let rows = execute(&j).unwrap();
        assert_eq!(exit_code(&rows), 0);
        assert_eq!(exit_code(&replay_rows(&rows).unwrap()), 0);
    }

    #[test]
    fn jsonl_round_trip() {
        let rows = execute(&Job { modulus: 3, horizon: 20, samples: 1, ..job(Command::Golomb, "golomb") }).unwrap();
        assert_eq!(parse_jsonl(&to_jsonl(&rows)).unwrap(), rows);
    }
}
