//! Staged back-and-forth construction of a level-preserving embedding (or
//! homeomorphism) `X -> Y` extending a finite level-preserving bijection
//! `A -> B`. Every stage is followed by a ledger of checked clauses.
//!
//! All opens built here are cells (see [`Constructive`]), so membership in
//! their closures is exact: `cl(C) = C ∪ X_l`.

use crate::gamma::{self, GammaIndex};
use crate::presentation::{Closure, Constructive, SpacePresentation, Verdict};
use crate::Rng;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use std::collections::{BTreeMap, BTreeSet};
use thiserror::Error;

pub type Pair = (usize, usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Embed,
    Homeo,
}

/// Which side drives a point stage.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Route {
    /// Copy an anchor pair `(a, f(a))`.
    Anchor,
    /// Least unused source point, partner found in the target.
    Forward,
    /// Least unused target point, partner found in the source.
    Backward,
}

/// Route of point stage `n`: the anchors go first, then forward and
/// backward take turns (forward only when embedding).
pub fn route(n: usize, anchors: usize, mode: Mode) -> Route {
    if n < anchors {
        return Route::Anchor;
    }
    match mode {
        Mode::Homeo if (n - anchors) % 2 == 1 => Route::Backward,
        _ => Route::Forward,
    }
}

/// Index into the anchor table of anchor stage `n`.
fn anchor_slot(n: usize, anchors: usize, mode: Mode) -> usize {
    debug_assert_eq!(route(n, anchors, mode), Route::Anchor);
    n
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EngineBudget {
    /// Closure depth for sampled certificates.
    pub depth: usize,
    /// Boundary and interior samples per side of each cell.
    pub samples: usize,
    /// Enumeration prefix scanned for least unused points.
    pub scan: usize,
    /// Extra refinement tried when fitting a cell.
    pub radius: usize,
}

impl Default for EngineBudget {
    fn default() -> Self {
        EngineBudget { depth: 8, samples: 4, scan: 20_000, radius: 48 }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EngineError {
    #[error("anchor {0} changes level")]
    NotLevelPreserving(usize),
    #[error("stage {stage} failed at {clause}: {detail}")]
    StageFailure { stage: String, clause: String, detail: String },
    #[error("replay: {0}")]
    Replay(String),
}

fn fail(stage: GammaIndex, clause: &str, detail: impl Into<String>) -> EngineError {
    EngineError::StageFailure { stage: stage.to_string(), clause: clause.into(), detail: detail.into() }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PointStage<P, Q> {
    pub n: usize,
    pub route: Route,
    pub level: usize,
    pub x: P,
    pub y: Q,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellStage<OX, OY> {
    pub n: usize,
    pub k: usize,
    pub level: usize,
    pub u: OX,
    pub v: OY,
    /// Refinements the two cells were cut at.
    pub rx: usize,
    pub ry: usize,
}

/// Everything built so far, in stage order. Serializable so a run can be
/// resumed or replayed.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EngineState<P, OX, Q, OY> {
    pub mode: Mode,
    pub points: Vec<PointStage<P, Q>>,
    pub cells: Vec<CellStage<OX, OY>>,
    /// Completed indices.
    pub done: usize,
}

impl<P, OX, Q, OY> EngineState<P, OX, Q, OY> {
    pub fn cursor(&self) -> GammaIndex {
        gamma::nth(self.done)
    }

    pub fn point(&self, n: usize) -> Option<&PointStage<P, Q>> {
        self.points.get(n)
    }

    pub fn cell(&self, p: Pair) -> Option<&CellStage<OX, OY>> {
        self.cells.iter().find(|c| (c.n, c.k) == p)
    }

    pub fn level_of(&self, g: GammaIndex) -> Option<usize> {
        match g {
            GammaIndex::Num(n) => self.point(n).map(|s| s.level),
            GammaIndex::Pair(n, k) => self.cell((n, k)).map(|c| c.level),
        }
    }

    /// Largest `ℓ` over the completed indices below `g`.
    pub fn max_level_below(&self, g: GammaIndex) -> usize {
        g.below().iter().filter_map(|a| self.level_of(*a)).max().unwrap_or(0)
    }

    fn pairs_below(&self, g: GammaIndex) -> Vec<Pair> {
        self.cells.iter().filter(|c| GammaIndex::Pair(c.n, c.k) < g).map(|c| (c.n, c.k)).collect()
    }
}

pub type StateOf<X, Y> = EngineState<
    <X as SpacePresentation>::Point,
    <X as SpacePresentation>::Open,
    <Y as SpacePresentation>::Point,
    <Y as SpacePresentation>::Open,
>;

/// One checked clause.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LedgerRow {
    pub stage: String,
    pub clause: String,
    pub verdict: Verdict,
    pub certificate: Value,
}

impl LedgerRow {
    pub fn new(stage: impl ToString, clause: &str, ok: bool, certificate: Value) -> Self {
        let verdict = if ok { Verdict::Pass } else { Verdict::Fail };
        LedgerRow { stage: stage.to_string(), clause: clause.into(), verdict, certificate }
    }
}

// ---------------------------------------------------------------------------
// One side of the construction

/// Cells and points of one side, keyed for lookup.
struct Side<'a, S: Constructive> {
    space: &'a S,
    points: BTreeMap<usize, S::Point>,
    cells: BTreeMap<Pair, (S::Open, usize)>,
    anchors: Vec<S::Point>,
}

impl<'a, S: Constructive> Side<'a, S> {
    fn inside(&self, p: &S::Point, below: &[Pair]) -> Vec<Pair> {
        below.iter().copied().filter(|ij| self.space.member(p, &self.cells[ij].0)).collect()
    }

    fn outside_closure(&self, p: &S::Point, below: &[Pair]) -> Vec<Pair> {
        below
            .iter()
            .copied()
            .filter(|ij| {
                let (c, l) = &self.cells[ij];
                !self.space.closure_member(p, c, *l)
            })
            .collect()
    }

    /// Drop the members of `inside` whose cell contains another member's
    /// cell; among equal cells keep the latest.
    fn minimal(&self, inside: &[Pair]) -> Vec<Pair> {
        let key = |p: &Pair| GammaIndex::Pair(p.0, p.1);
        inside
            .iter()
            .copied()
            .filter(|ij| {
                !inside.iter().any(|pq| {
                    if pq == ij {
                        return false;
                    }
                    let (a, b) = (&self.cells[pq].0, &self.cells[ij].0);
                    let sub = self.space.contains_open(b, a);
                    let sup = self.space.contains_open(a, b);
                    sub && (!sup || key(pq) > key(ij))
                })
            })
            .collect()
    }

    /// Least point of the enumeration that is neither an anchor nor used.
    fn least_unused(&self, scan: usize) -> Option<S::Point> {
        let used: BTreeSet<&S::Point> = self.points.values().collect();
        self.space.points().take(scan).find(|p| !used.contains(p) && !self.anchors.contains(p))
    }

    /// A basic neighbourhood of `p` missing `cl(cell)`.
    fn separator(&self, p: &S::Point, cell: &S::Open, l: usize, budget: &EngineBudget) -> Option<S::Open> {
        (0..=l + budget.radius).map(|k| self.space.nbhd(p, k)).find(|nb| self.space.misses_closure(nb, cell, l))
    }
}

/// One step of the partner search.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainStep<P, O> {
    /// `attach` (into the cell of `pair`), `drop` (off the closure of the
    /// cell of `pair`, with `separator`) or `finish`.
    pub kind: String,
    pub pair: Option<Pair>,
    pub point: P,
    pub level: usize,
    pub separator: Option<O>,
}

/// Bookkeeping of a forward or backward point stage.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Workspace<P, O> {
    pub inside: Vec<Pair>,
    pub minimal: Vec<Pair>,
    pub outside: Vec<Pair>,
    /// `J_1..J_m`.
    pub split: Vec<Vec<Pair>>,
    /// `J'_0..J'_m`.
    pub split_prime: Vec<Vec<Pair>>,
    pub chain: Vec<ChainStep<P, O>>,
}

fn desc(pairs: &mut [Pair]) {
    pairs.sort_by(|a, b| GammaIndex::Pair(b.0, b.1).cmp(&GammaIndex::Pair(a.0, a.1)));
}

type Levels = BTreeMap<usize, usize>;

/// Split `outside` along the chain of levels of the sorted minimal set.
/// `None` when some level collides with the chain.
fn split_outside(
    minimal: &[Pair],
    outside: &[Pair],
    cell_level: &dyn Fn(Pair) -> usize,
    point_level: &Levels,
    level: usize,
) -> Option<(Vec<Vec<Pair>>, Vec<Vec<Pair>>)> {
    let m = minimal.len();
    let top = |k: usize| cell_level(minimal[k - 1]);
    let bot = |k: usize| point_level[&minimal[k - 1].0];
    let mut split = vec![Vec::new(); m];
    let mut prime = vec![Vec::new(); m + 1];
    for &ij in outside {
        let l = cell_level(ij);
        let slot = if m == 0 {
            (l > level).then_some((true, 0))
        } else if l > top(1) {
            Some((true, 0))
        } else {
            (1..=m).find_map(|k| {
                if top(k) > l && l > bot(k) {
                    return Some((false, k));
                }
                let floor = if k < m { top(k + 1) } else { level };
                (bot(k) > l && l > floor).then_some((true, k))
            })
        };
        match slot? {
            (false, k) => split[k - 1].push(ij),
            (true, k) => prime[k].push(ij),
        }
    }
    Some((split, prime))
}

/// `ℓ(i_1,j_1) > ℓ(i_1) ≥ ℓ(i_2,j_2) > ... > ℓ(i_m) ≥ level`.
fn chain_levels_ok(minimal: &[Pair], cell_level: &dyn Fn(Pair) -> usize, point_level: &Levels, level: usize) -> bool {
    let mut floor = usize::MAX;
    for &ij in minimal {
        let (c, p) = (cell_level(ij), point_level[&ij.0]);
        if !(c <= floor && c > p) {
            return false;
        }
        floor = p;
    }
    floor >= level
}

/// Descending avoidance chain: from `start`, step down through the levels
/// just below each cell of `avoid`, cutting the open away from each closure,
/// and finish at exact level `l` inside every open of `w`.
#[allow(clippy::too_many_arguments)]
fn avoid_chain<S: Constructive>(
    side: &Side<'_, S>,
    avoid: &[Pair],
    l: usize,
    w: &mut Vec<S::Open>,
    start: S::Point,
    trace: &mut Vec<ChainStep<S::Point, S::Open>>,
    budget: &EngineBudget,
) -> Result<S::Point, String> {
    let mut js = avoid.to_vec();
    desc(&mut js);
    let mut cur = start;
    for ij in js {
        let (c, lc) = &side.cells[&ij];
        let v = side
            .space
            .drop_to_level(&cur, lc - 1, w)
            .ok_or_else(|| format!("no point of level {} below the cell of {ij:?}", lc - 1))?;
        if side.space.closure_member(&v, c, *lc) {
            return Err(format!("{v} lies in the closure of the cell of {ij:?}"));
        }
        let sep = side.separator(&v, c, *lc, budget).ok_or_else(|| format!("no separator at {v}"))?;
        w.push(sep.clone());
        trace.push(ChainStep { kind: "drop".into(), pair: Some(ij), point: v.clone(), level: lc - 1, separator: Some(sep) });
        cur = v;
    }
    side.space.drop_to_level(&cur, l, w).ok_or_else(|| format!("no point of level {l} in the chain open"))
}

/// Find a point of level `level` inside the cells of `minimal` (sorted
/// descending) and off the closures of `outside`, avoiding `taken`.
#[allow(clippy::too_many_arguments)]
fn find_partner<S: Constructive>(
    side: &Side<'_, S>,
    minimal: &[Pair],
    split: &[Vec<Pair>],
    prime: &[Vec<Pair>],
    point_level: &Levels,
    level: usize,
    taken: &[S::Point],
    budget: &EngineBudget,
    rng: &mut Rng,
) -> Result<(S::Point, Vec<ChainStep<S::Point, S::Open>>), String> {
    let m = minimal.len();
    let cl = |ij: Pair| side.cells[&ij].1;
    let mut trace = Vec::new();
    let mut w: Vec<S::Open> = Vec::new();
    let l0 = if m > 0 { cl(minimal[0]) } else { level };
    let need = prime[0].iter().map(|ij| cl(*ij) - 1).max().unwrap_or(0).max(l0);
    let start = side.space.sample_point(rng, need).ok_or_else(|| format!("level {need} is empty"))?;
    let mut vp = avoid_chain(side, &prime[0], l0, &mut w, start, &mut trace, budget)?;
    trace.push(ChainStep { kind: "finish".into(), pair: None, point: vp.clone(), level: l0, separator: None });
    for k in 1..=m {
        let ij = minimal[k - 1];
        let (c, _) = &side.cells[&ij];
        let v = side
            .space
            .attach_point(&vp, c, &w)
            .ok_or_else(|| format!("no attachment into the cell of {ij:?} at {vp}"))?;
        if side.space.level(&v) != point_level[&ij.0] {
            return Err(format!("attachment {v} has the wrong level"));
        }
        w.push(c.clone());
        trace.push(ChainStep { kind: "attach".into(), pair: Some(ij), point: v.clone(), level: point_level[&ij.0], separator: None });
        let lk = if k < m { cl(minimal[k]) } else { level };
        let _ = &split[k - 1];
        vp = avoid_chain(side, &prime[k], lk, &mut w, v, &mut trace, budget)?;
        trace.push(ChainStep { kind: "finish".into(), pair: None, point: vp.clone(), level: lk, separator: None });
    }
    let y = if taken.contains(&vp) {
        side.space.crowd(&vp, &w, taken).ok_or_else(|| format!("no fresh point near {vp}"))?
    } else {
        vp
    };
    trace.push(ChainStep { kind: "choose".into(), pair: None, point: y.clone(), level, separator: None });
    Ok((y, trace))
}

// ---------------------------------------------------------------------------
// Engine

/// Two-sided sampled evidence for the boundary of one cell.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundaryCert<P, O> {
    /// Points of `X_l`: outside the cell, in its closure.
    pub boundary: Vec<(P, Closure<P, O>)>,
    /// Points of `X_l` with a witness of level `ℓ(n)` in the cell near them.
    pub attach: Vec<(P, P, usize)>,
    /// Points below `X_l`: members or separated.
    pub interior: Vec<(P, Closure<P, O>)>,
}

pub struct Engine<'a, X: Constructive, Y: Constructive> {
    pub source: &'a X,
    pub target: &'a Y,
    pub anchors: Vec<(X::Point, Y::Point)>,
    pub budget: EngineBudget,
    pub state: StateOf<X, Y>,
    /// Workspaces of point stages, by `n`.
    pub workspaces: BTreeMap<usize, Value>,
    rng: Rng,
}

/// Result of a run: all ledger rows in order, and the failure if any.
#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub rows: Vec<LedgerRow>,
    pub failure: Option<EngineError>,
}

impl RunOutcome {
    pub fn verdict(&self) -> Verdict {
        let v = Verdict::all(self.rows.iter().map(|r| r.verdict));
        if self.failure.is_some() {
            v.and(Verdict::Fail)
        } else {
            v
        }
    }
}

impl<'a, X: Constructive, Y: Constructive> Engine<'a, X, Y> {
    pub fn new(
        source: &'a X,
        target: &'a Y,
        anchors: Vec<(X::Point, Y::Point)>,
        mode: Mode,
        budget: EngineBudget,
        seed: u64,
    ) -> Result<Self, EngineError> {
        for (i, (a, b)) in anchors.iter().enumerate() {
            if source.level(a) != target.level(b) {
                return Err(EngineError::NotLevelPreserving(i));
            }
        }
        Ok(Engine {
            source,
            target,
            anchors,
            budget,
            state: EngineState { mode, points: Vec::new(), cells: Vec::new(), done: 0 },
            workspaces: BTreeMap::new(),
            rng: Rng::seed_from_u64(seed),
        })
    }

    pub fn mode(&self) -> Mode {
        self.state.mode
    }

    fn route(&self, n: usize) -> Route {
        route(n, self.anchors.len(), self.mode())
    }

    fn levels(&self) -> Levels {
        self.state.points.iter().map(|p| (p.n, p.level)).collect()
    }

    fn x_side(&self) -> Side<'a, X> {
        Side {
            space: self.source,
            points: self.state.points.iter().map(|p| (p.n, p.x.clone())).collect(),
            cells: self.state.cells.iter().map(|c| ((c.n, c.k), (c.u.clone(), c.level))).collect(),
            anchors: self.anchors.iter().map(|a| a.0.clone()).collect(),
        }
    }

    fn y_side(&self) -> Side<'a, Y> {
        Side {
            space: self.target,
            points: self.state.points.iter().map(|p| (p.n, p.y.clone())).collect(),
            cells: self.state.cells.iter().map(|c| ((c.n, c.k), (c.v.clone(), c.level))).collect(),
            anchors: self.anchors.iter().map(|a| a.1.clone()).collect(),
        }
    }

    /// Run the next index; returns its construction row and ledger.
    pub fn step(&mut self) -> Result<Vec<LedgerRow>, EngineError> {
        let g = self.state.cursor();
        let construct = match g {
            GammaIndex::Num(n) => self.point_stage(n)?,
            GammaIndex::Pair(n, k) => self.cell_stage(n, k)?,
        };
        self.state.done += 1;
        let mut rows = vec![LedgerRow::new(g, "construct", true, construct)];
        let mut rng = self.rng.clone();
        rows.extend(self.check_stage_invariants(g, &mut rng));
        self.rng = rng;
        Ok(rows)
    }

    /// Run until `stages` indices are complete or a stage fails.
    pub fn run(&mut self, stages: usize) -> RunOutcome {
        let mut rows = Vec::new();
        while self.state.done < stages {
            match self.step() {
                Ok(r) => rows.extend(r),
                Err(e) => {
                    rows.push(LedgerRow::new(self.state.cursor(), "stage", false, json!({ "error": e.to_string() })));
                    return RunOutcome { rows, failure: Some(e) };
                }
            }
        }
        rows.extend(self.extract_partial_map().rows);
        RunOutcome { rows, failure: None }
    }

    fn point_stage(&mut self, n: usize) -> Result<Value, EngineError> {
        let g = GammaIndex::Num(n);
        let r = self.route(n);
        let budget = self.budget;
        let below = self.state.pairs_below(g);
        let levels = self.levels();
        let xs = self.x_side();
        let ys = self.y_side();
        let (x, y, ws) = match r {
            Route::Anchor => {
                let (a, b) = self.anchors[anchor_slot(n, self.anchors.len(), self.mode())].clone();
                (a, b, Value::Null)
            }
            Route::Forward => {
                let x = xs.least_unused(budget.scan).ok_or_else(|| fail(g, "1f", "scan exhausted"))?;
                let level = self.source.level(&x);
                let taken: Vec<Y::Point> = ys.points.values().chain(&ys.anchors).cloned().collect();
                let (y, ws) = self.partner(&xs, &ys, &x, level, &below, &levels, &taken, g)?;
                (x, y, serde_json::to_value(ws).expect("serializable"))
            }
            Route::Backward => {
                let y = ys.least_unused(budget.scan).ok_or_else(|| fail(g, "1g", "scan exhausted"))?;
                let level = self.target.level(&y);
                let taken: Vec<X::Point> = xs.points.values().chain(&xs.anchors).cloned().collect();
                let (x, ws) = self.partner(&ys, &xs, &y, level, &below, &levels, &taken, g)?;
                (x, y, serde_json::to_value(ws).expect("serializable"))
            }
        };
        let level = self.source.level(&x);
        self.workspaces.insert(n, ws.clone());
        let stage = PointStage { n, route: r, level, x, y };
        let out = json!({ "point": stage, "workspace": ws });
        self.state.points.push(stage);
        Ok(out)
    }

    /// Partner search on side `to` for a point `p` of side `from`.
    #[allow(clippy::too_many_arguments)]
    fn partner<A: Constructive, B: Constructive>(
        &mut self,
        from: &Side<'_, A>,
        to: &Side<'_, B>,
        p: &A::Point,
        level: usize,
        below: &[Pair],
        levels: &Levels,
        taken: &[B::Point],
        g: GammaIndex,
    ) -> Result<(B::Point, Workspace<B::Point, B::Open>), EngineError> {
        let inside = from.inside(p, below);
        let outside = from.outside_closure(p, below);
        let mut minimal = from.minimal(&inside);
        desc(&mut minimal);
        let cl = |ij: Pair| from.cells[&ij].1;
        if !chain_levels_ok(&minimal, &cl, levels, level) {
            return Err(fail(g, "cl5", format!("levels along {minimal:?} do not interleave")));
        }
        let (split, prime) =
            split_outside(&minimal, &outside, &cl, levels, level).ok_or_else(|| fail(g, "J-split", "level collision"))?;
        let (q, chain) = find_partner(to, &minimal, &split, &prime, levels, level, taken, &self.budget, &mut self.rng)
            .map_err(|e| fail(g, "lemma-2", e))?;
        Ok((q, Workspace { inside, minimal, outside, split, split_prime: prime, chain }))
    }

    fn cell_stage(&mut self, n: usize, k: usize) -> Result<Value, EngineError> {
        let g = GammaIndex::Pair(n, k);
        let p = self.state.point(n).cloned().expect("point stage precedes its cells");
        let floor = 2 + self.state.max_level_below(g);
        let below = self.state.pairs_below(g);
        let others: Vec<usize> = (0..self.state.points.len()).filter(|&m| m != n).collect();
        let anchor_here = self.route(n) == Route::Anchor;
        let xs = self.x_side();
        let ys = self.y_side();
        let fx = |l: usize| fit_cell(&xs, &p.x, p.level, k, l, &below, &others, anchor_here, &self.budget);
        let fy = |l: usize| fit_cell(&ys, &p.y, p.level, k, l, &below, &others, anchor_here, &self.budget);
        let (mut rx, lx) = fx(floor).ok_or_else(|| fail(g, "2c", "no source cell fits"))?;
        let (mut ry, ly) = fy(floor).ok_or_else(|| fail(g, "2c", "no target cell fits"))?;
        let mut l = lx.max(ly);
        // cells only shrink as `l` grows, but re-fit in case a side needs more
        for _ in 0..4 {
            let (a, la) = fx(l).ok_or_else(|| fail(g, "2c", "no source cell fits"))?;
            let (b, lb) = fy(l).ok_or_else(|| fail(g, "2c", "no target cell fits"))?;
            (rx, ry) = (a, b);
            if la.max(lb) == l {
                break;
            }
            l = la.max(lb);
        }
        let u = self.source.cell(&p.x, rx, l).ok_or_else(|| fail(g, "2f", "source cell"))?;
        let v = self.target.cell(&p.y, ry, l).ok_or_else(|| fail(g, "2f", "target cell"))?;
        let stage = CellStage { n, k, level: l, u, v, rx, ry };
        let out = json!({ "cell": stage });
        self.state.cells.push(stage);
        Ok(out)
    }

    // -----------------------------------------------------------------------
    // Ledger

    /// Every clause for a completed index `g`. Exact clauses depend only on
    /// the state; the boundary clauses draw samples from `rng`.
    pub fn check_stage_invariants(&self, g: GammaIndex, rng: &mut Rng) -> Vec<LedgerRow> {
        let mut rows = self.exact_rows(g);
        if let GammaIndex::Pair(n, k) = g {
            rows.extend(self.boundary_rows(n, k, rng));
        }
        rows
    }

    pub fn exact_rows(&self, g: GammaIndex) -> Vec<LedgerRow> {
        match g {
            GammaIndex::Num(n) => self.point_rows(n),
            GammaIndex::Pair(n, k) => self.cell_rows(n, k),
        }
    }

    fn point_rows(&self, n: usize) -> Vec<LedgerRow> {
        let g = GammaIndex::Num(n);
        let st = &self.state;
        let p = &st.points[n];
        let (s, t) = (self.source, self.target);
        let xs = self.x_side();
        let ys = self.y_side();
        let below = st.pairs_below(g);
        let mut rows = Vec::new();
        let (lx, ly) = (s.level(&p.x), t.level(&p.y));
        rows.push(LedgerRow::new(g, "1a", p.level == lx && lx == ly, json!({ "l": p.level, "x": lx, "y": ly })));
        let fresh_x = st.points[..n].iter().all(|q| q.x != p.x);
        let fresh_y = st.points[..n].iter().all(|q| q.y != p.y);
        rows.push(LedgerRow::new(g, "1b", fresh_x && fresh_y, json!({ "x": fresh_x, "y": fresh_y })));
        let (ix, iy) = (xs.inside(&p.x, &below), ys.inside(&p.y, &below));
        rows.push(LedgerRow::new(g, "1c", ix == iy, json!({ "x": ix, "y": iy })));
        let (jx, jy) = (xs.outside_closure(&p.x, &below), ys.outside_closure(&p.y, &below));
        let (cx, cy) = (complement(&below, &jx), complement(&below, &jy));
        rows.push(LedgerRow::new(g, "1d", cx == cy, json!({ "x": cx, "y": cy })));
        let r = self.route(n);
        let e = match r {
            Route::Anchor => {
                let (a, b) = &self.anchors[anchor_slot(n, self.anchors.len(), self.mode())];
                p.x == *a && p.y == *b
            }
            _ => true,
        };
        rows.push(LedgerRow::new(g, "1e", e, json!({ "route": r })));
        let f = match r {
            Route::Forward => {
                let pre = xs.restricted(n);
                pre.least_unused(self.budget.scan).as_ref() == Some(&p.x) && !ys.anchors.contains(&p.y)
            }
            _ => true,
        };
        rows.push(LedgerRow::new(g, "1f", f, json!({ "route": r })));
        let gg = match r {
            Route::Backward => {
                let pre = ys.restricted(n);
                pre.least_unused(self.budget.scan).as_ref() == Some(&p.y) && !xs.anchors.contains(&p.x)
            }
            _ => true,
        };
        rows.push(LedgerRow::new(g, "1g", gg, json!({ "route": r })));
        rows.extend(self.workspace_rows(n));
        rows
    }

    /// Claims about the bookkeeping of a forward or backward stage.
    fn workspace_rows(&self, n: usize) -> Vec<LedgerRow> {
        let g = GammaIndex::Num(n);
        let p = &self.state.points[n];
        match p.route {
            Route::Anchor => Vec::new(),
            Route::Forward => self.side_workspace_rows(g, &self.x_side(), &self.y_side(), &p.x, &p.y, p.level),
            Route::Backward => self.side_workspace_rows(g, &self.y_side(), &self.x_side(), &p.y, &p.x, p.level),
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn side_workspace_rows<A: Constructive, B: Constructive>(
        &self,
        g: GammaIndex,
        from: &Side<'_, A>,
        to: &Side<'_, B>,
        p: &A::Point,
        q: &B::Point,
        level: usize,
    ) -> Vec<LedgerRow> {
        let below = self.state.pairs_below(g);
        let levels = self.levels();
        let inside = from.inside(p, &below);
        let outside = from.outside_closure(p, &below);
        let mut minimal = from.minimal(&inside);
        desc(&mut minimal);
        let cl = |ij: Pair| from.cells[&ij].1;
        let mut rows = Vec::new();
        let c3 = inside.iter().chain(&outside).all(|ij| cl(*ij) > level)
            && inside.iter().all(|ij| level <= levels[&ij.0]);
        rows.push(LedgerRow::new(g, "cl3", c3, json!({ "inside": inside, "outside": outside })));
        let covers = inside.iter().all(|ij| minimal.iter().any(|pq| from.space.contains_open(&from.cells[ij].0, &from.cells[pq].0)));
        let antichain = minimal.iter().all(|a| minimal.iter().all(|b| a == b || !from.space.contains_open(&from.cells[a].0, &from.cells[b].0)));
        rows.push(LedgerRow::new(g, "I-min", covers && antichain, json!({ "minimal": minimal })));
        rows.push(LedgerRow::new(g, "cl5", chain_levels_ok(&minimal, &cl, &levels, level), json!({ "minimal": minimal })));
        let split = split_outside(&minimal, &outside, &cl, &levels, level);
        rows.push(LedgerRow::new(g, "J-split", split.is_some(), json!({ "split": split })));
        // cl3a, on the partner and on the chain points
        let ws: Option<Workspace<B::Point, B::Open>> =
            self.workspaces.get(&g_num(g)).and_then(|v| crate::presentation::decode(v).ok());
        let mut probes = vec![q.clone()];
        if let Some(w) = &ws {
            probes.extend(w.chain.iter().map(|s| s.point.clone()));
        }
        let full_in = |y: &B::Point| inside.iter().all(|ij| to.space.member(y, &to.cells[ij].0));
        let min_in = |y: &B::Point| minimal.iter().all(|ij| to.space.member(y, &to.cells[ij].0));
        let c3a = probes.iter().all(|y| full_in(y) == min_in(y));
        rows.push(LedgerRow::new(g, "cl3a", c3a, json!({ "probes": probes.len() })));
        let cl_to = |ij: &Pair| to.cells[ij].1;
        if let (Some(w), Some((split, _))) = (&ws, &split) {
            // cl5a: attachment points of the k-th minimal cell miss the closures of J_k
            let attach_ok = w.chain.iter().filter(|s| s.kind == "attach").zip(split).all(|(s, jk)| {
                jk.iter().all(|ij| !to.space.closure_member(&s.point, &to.cells[ij].0, cl_to(ij)))
            });
            rows.push(LedgerRow::new(g, "cl5a", attach_ok, json!({ "attachments": split.len() })));
            let steps_ok = w.chain.iter().all(|s| {
                let lv = to.space.level(&s.point) == s.level;
                match (&s.separator, s.pair) {
                    (Some(sep), Some(ij)) => {
                        lv && to.space.member(&s.point, sep) && to.space.misses_closure(sep, &to.cells[&ij].0, cl_to(&ij))
                    }
                    (_, Some(ij)) => lv && to.space.member(&s.point, &to.cells[&ij].0),
                    _ => lv,
                }
            });
            let chosen = w.chain.last().is_some_and(|s| s.point == *q);
            rows.push(LedgerRow::new(g, "lemma-2", steps_ok && chosen, json!({ "chain": w.chain })));
        }
        rows
    }

    fn cell_rows(&self, n: usize, k: usize) -> Vec<LedgerRow> {
        let g = GammaIndex::Pair(n, k);
        let st = &self.state;
        let c = st.cell((n, k)).expect("completed");
        let p = &st.points[n];
        let (s, t) = (self.source, self.target);
        let (xs, ys) = (self.x_side(), self.y_side());
        let below = st.pairs_below(g);
        let mut rows = Vec::new();
        let floor = 2 + st.max_level_below(g);
        rows.push(LedgerRow::new(g, "2a", c.level >= floor, json!({ "l": c.level, "floor": floor })));
        let hit_x: Vec<usize> =
            st.points.iter().filter(|q| q.n != n && s.closure_member(&q.x, &c.u, c.level)).map(|q| q.n).collect();
        let hit_y: Vec<usize> =
            st.points.iter().filter(|q| q.n != n && t.closure_member(&q.y, &c.v, c.level)).map(|q| q.n).collect();
        rows.push(LedgerRow::new(g, "2b", hit_x.is_empty() && hit_y.is_empty(), json!({ "x": hit_x, "y": hit_y })));
        let cx = s.member(&p.x, &c.u) && s.contains_open(&s.nbhd(&p.x, k), &c.u) && s.max_level_in(&c.u) <= p.level;
        let cy = t.member(&p.y, &c.v) && t.contains_open(&t.nbhd(&p.y, k), &c.v) && t.max_level_in(&c.v) <= p.level;
        rows.push(LedgerRow::new(g, "2c", cx && cy, json!({ "x": cx, "y": cy })));
        let sub_x: Vec<Pair> = below.iter().copied().filter(|ij| s.contains_open(&xs.cells[ij].0, &c.u)).collect();
        let sub_y: Vec<Pair> = below.iter().copied().filter(|ij| t.contains_open(&ys.cells[ij].0, &c.v)).collect();
        let (ix, iy) = (xs.inside(&p.x, &below), ys.inside(&p.y, &below));
        let d = sub_x == ix && sub_y == iy;
        rows.push(LedgerRow::new(g, "2d", d, json!({ "x": [sub_x, ix], "y": [sub_y, iy] })));
        let miss_x: Vec<Pair> = below
            .iter()
            .copied()
            .filter(|ij| {
                let (o, l) = &xs.cells[ij];
                s.misses_closure(&c.u, o, *l)
            })
            .collect();
        let miss_y: Vec<Pair> = below
            .iter()
            .copied()
            .filter(|ij| {
                let (o, l) = &ys.cells[ij];
                t.misses_closure(&c.v, o, *l)
            })
            .collect();
        let (jx, jy) = (xs.outside_closure(&p.x, &below), ys.outside_closure(&p.y, &below));
        let e = miss_x == jx && miss_y == jy;
        rows.push(LedgerRow::new(g, "2e", e, json!({ "x": [miss_x, jx], "y": [miss_y, jy] })));
        let in_u: Vec<usize> = (0..self.anchors.len()).filter(|&i| s.member(&self.anchors[i].0, &c.u)).collect();
        let in_v: Vec<usize> = (0..self.anchors.len()).filter(|&i| t.member(&self.anchors[i].1, &c.v)).collect();
        let anchored = p.route == Route::Anchor;
        rows.push(LedgerRow::new(g, "2g", !anchored || in_u == in_v, json!({ "x": in_u, "y": in_v })));
        let h = anchored || (in_u.is_empty() && in_v.is_empty());
        rows.push(LedgerRow::new(g, "2h", h, json!({ "x": in_u, "y": in_v })));
        rows
    }

    fn boundary_rows(&self, n: usize, k: usize, rng: &mut Rng) -> Vec<LedgerRow> {
        let g = GammaIndex::Pair(n, k);
        let c = self.state.cell((n, k)).expect("completed");
        let p = &self.state.points[n];
        let b = self.budget;
        let cx = boundary_cert(self.source, &p.x, &c.u, c.level, p.level, k, false, &b, rng);
        let cy = boundary_cert(self.target, &p.y, &c.v, c.level, p.level, k, true, &b, rng);
        let mut rows = vec![boundary_row(g, "2f", self.source, self.target, &c.u, &c.v, c.level, p.level, &b, cx, cy)];
        if self.mode() == Mode::Homeo {
            let ax = boundary_cert(self.source, &p.x, &c.u, c.level, p.level, k, true, &b, rng);
            let vac: BoundaryCert<Y::Point, Y::Open> = BoundaryCert { boundary: vec![], attach: vec![], interior: vec![] };
            rows.push(boundary_row(g, "2i", self.source, self.target, &c.u, &c.v, c.level, p.level, &b, ax, vac));
        } else {
            rows.push(LedgerRow::new(g, "2i", true, json!({ "vacuous": "embed mode" })));
        }
        rows
    }

    /// Re-check one recorded row against the state built so far.
    pub fn replay_row(&self, row: &LedgerRow) -> Result<(), String> {
        if row.stage == "map" {
            let again = self.extract_partial_map().rows;
            let found = again.iter().find(|r| r.clause == row.clause).ok_or("missing map row")?;
            return same(row, found);
        }
        let g = parse_stage(&row.stage).ok_or_else(|| format!("bad stage {}", row.stage))?;
        let b = self.budget;
        match row.clause.as_str() {
            "2f" | "2i" => {
                let GammaIndex::Pair(n, k) = g else { return Err("boundary row on a point stage".into()) };
                let c = self.state.cell((n, k)).ok_or("unknown cell")?;
                let lvl = self.state.points[n].level;
                if row.certificate.get("vacuous").is_some() {
                    return if self.mode() == Mode::Embed { Ok(()) } else { Err("vacuous 2i in homeo mode".into()) };
                }
                let cx: BoundaryCert<X::Point, X::Open> =
                    crate::presentation::decode(&row.certificate["x"])?;
                let cy: BoundaryCert<Y::Point, Y::Open> =
                    crate::presentation::decode(&row.certificate["y"])?;
                let again = boundary_row(g, &row.clause, self.source, self.target, &c.u, &c.v, c.level, lvl, &b, cx, cy);
                same(row, &again)
            }
            "construct" | "stage" => Ok(()),
            clause => {
                let again = self.exact_rows(g);
                let found = again.iter().find(|r| r.clause == clause).ok_or_else(|| format!("no clause {clause}"))?;
                same(row, found)
            }
        }
    }

    /// Apply a construction row during replay.
    pub fn replay_construct(&mut self, row: &LedgerRow) -> Result<(), String> {
        let g = parse_stage(&row.stage).ok_or("bad stage")?;
        if g != self.state.cursor() {
            return Err(format!("expected stage {}, found {}", self.state.cursor(), g));
        }
        match g {
            GammaIndex::Num(n) => {
                let st: PointStage<X::Point, Y::Point> =
                    crate::presentation::decode(&row.certificate["point"])?;
                if st.n != n || st.route != self.route(n) {
                    return Err(format!("stage {n} has the wrong route"));
                }
                self.workspaces.insert(n, row.certificate["workspace"].clone());
                self.state.points.push(st);
            }
            GammaIndex::Pair(n, k) => {
                let st: CellStage<X::Open, Y::Open> =
                    crate::presentation::decode(&row.certificate["cell"])?;
                let p = self.state.point(n).ok_or("cell before its point")?;
                if (st.n, st.k) != (n, k)
                    || self.source.cell(&p.x, st.rx, st.level).as_ref() != Some(&st.u)
                    || self.target.cell(&p.y, st.ry, st.level).as_ref() != Some(&st.v)
                {
                    return Err(format!("cell {g} is not the recorded cell"));
                }
                self.state.cells.push(st);
            }
        }
        self.state.done += 1;
        Ok(())
    }

    /// The finished pairs with continuity, injectivity, level and (in homeo
    /// mode) surjectivity checks.
    pub fn extract_partial_map(&self) -> PartialMap<X::Point, Y::Point> {
        let st = &self.state;
        let (s, t) = (self.source, self.target);
        let table: Vec<(X::Point, Y::Point)> = st.points.iter().map(|p| (p.x.clone(), p.y.clone())).collect();
        let mut rows = Vec::new();
        let stage = "map";
        let xs: BTreeSet<&X::Point> = table.iter().map(|r| &r.0).collect();
        let ys: BTreeSet<&Y::Point> = table.iter().map(|r| &r.1).collect();
        let inj = xs.len() == table.len() && ys.len() == table.len();
        rows.push(LedgerRow::new(stage, "injective", inj, json!({ "pairs": table.len() })));
        let lv = st.points.iter().all(|p| s.level(&p.x) == t.level(&p.y));
        rows.push(LedgerRow::new(stage, "level-preserving", lv, json!({ "pairs": table.len() })));
        let anch = st
            .points
            .iter()
            .filter(|p| p.route == Route::Anchor)
            .all(|p| self.anchors.iter().any(|(a, b)| *a == p.x && *b == p.y));
        rows.push(LedgerRow::new(stage, "restricts-to-f", anch, json!({})));
        let mut broken = Vec::new();
        for c in &st.cells {
            let g = GammaIndex::Pair(c.n, c.k);
            for p in st.points.iter().filter(|p| GammaIndex::Num(p.n) > g) {
                if s.member(&p.x, &c.u) != t.member(&p.y, &c.v) {
                    broken.push(json!({ "cell": [c.n, c.k], "point": p.n }));
                }
            }
        }
        rows.push(LedgerRow::new(stage, "continuity", broken.is_empty(), json!({ "cells": st.cells.len(), "broken": broken })));
        if self.mode() == Mode::Homeo {
            let back = st.points.iter().filter(|p| p.route == Route::Backward).count();
            let ys_anchor: Vec<Y::Point> = self.anchors.iter().map(|a| a.1.clone()).collect();
            let first: Vec<Y::Point> =
                t.points().take(self.budget.scan).filter(|y| !ys_anchor.contains(y)).take(back).collect();
            let covered = first.len() == back && first.iter().all(|y| ys.contains(y));
            rows.push(LedgerRow::new(stage, "surjective-progress", covered, json!({ "first": back })));
        }
        PartialMap { table, rows }
    }
}

#[derive(Clone, Debug)]
pub struct PartialMap<P, Q> {
    pub table: Vec<(P, Q)>,
    pub rows: Vec<LedgerRow>,
}

impl<'a, S: Constructive> Side<'a, S> {
    /// Points of the stages before `n` only.
    fn restricted(&self, n: usize) -> Side<'a, S> {
        let points = self.points.iter().filter(|(m, _)| **m < n).map(|(m, p)| (*m, p.clone())).collect();
        Side { space: self.space, points, cells: BTreeMap::new(), anchors: self.anchors.clone() }
    }
}

fn g_num(g: GammaIndex) -> usize {
    match g {
        GammaIndex::Num(n) => n,
        GammaIndex::Pair(n, _) => n,
    }
}

fn complement(all: &[Pair], out: &[Pair]) -> Vec<Pair> {
    all.iter().copied().filter(|p| !out.contains(p)).collect()
}

fn same(row: &LedgerRow, again: &LedgerRow) -> Result<(), String> {
    if row.verdict == again.verdict && row.certificate == again.certificate {
        Ok(())
    } else {
        Err(format!("{} {}: recorded {:?}, recomputed {:?}", row.stage, row.clause, row.verdict, again.verdict))
    }
}

pub fn parse_stage(s: &str) -> Option<GammaIndex> {
    if let Some(inner) = s.strip_prefix('(').and_then(|r| r.strip_suffix(')')) {
        let (a, b) = inner.split_once(',')?;
        return Some(GammaIndex::Pair(a.trim().parse().ok()?, b.trim().parse().ok()?));
    }
    s.parse().ok().map(GammaIndex::Num)
}

/// Least refinement `r >= k` at which the cell around `p` with boundary
/// level `max(l, cell_min_level)` meets every requirement of an open-set
/// stage; returns `(r, level)`.
#[allow(clippy::too_many_arguments)]
fn fit_cell<S: Constructive>(
    side: &Side<'_, S>,
    p: &S::Point,
    level: usize,
    k: usize,
    l: usize,
    below: &[Pair],
    others: &[usize],
    anchored: bool,
    budget: &EngineBudget,
) -> Option<(usize, usize)> {
    let s = side.space;
    let inside = side.inside(p, below);
    let outside = side.outside_closure(p, below);
    let home = s.nbhd(p, k);
    (k..=k + budget.radius).find_map(|r| {
        let l = l.max(s.cell_min_level(p, r));
        let c = s.cell(p, r, l)?;
        let ok = s.member(p, &c)
            && s.max_level_in(&c) <= level
            && s.contains_open(&home, &c)
            && inside.iter().all(|ij| s.contains_open(&side.cells[ij].0, &c))
            && outside.iter().all(|ij| {
                let (o, lo) = &side.cells[ij];
                s.misses_closure(&c, o, *lo)
            })
            && others.iter().all(|m| !s.closure_member(&side.points[m], &c, l))
            && side.anchors.iter().all(|a| s.member(a, &c) == (anchored && a == p));
        ok.then_some((r, l))
    })
}

/// Sampled certificate that `cl(c) = c ∪ X_l`, with attachment witnesses
/// of level `attach` when `with_attach`.
#[allow(clippy::too_many_arguments)]
fn boundary_cert<S: Constructive>(
    s: &S,
    center: &S::Point,
    c: &S::Open,
    l: usize,
    attach: usize,
    k: usize,
    with_attach: bool,
    b: &EngineBudget,
    rng: &mut Rng,
) -> BoundaryCert<S::Point, S::Open> {
    let mut cert = BoundaryCert { boundary: Vec::new(), attach: Vec::new(), interior: Vec::new() };
    let depth = b.depth;
    for _ in 0..b.samples {
        let Some(t) = s.sample_point(rng, l) else { break };
        let near = s.nbhd(&t, depth);
        let cl = match (s.tail_level(c), s.density_witness(c, &t, &near)) {
            (Some(m), Some(w)) => Closure::Tail { level: m, depth, witness: w },
            _ => Closure::Unknown,
        };
        if with_attach {
            if let Some(w) = s.attach_point(&t, c, std::slice::from_ref(&near)) {
                cert.attach.push((t.clone(), w, attach));
            } else {
                cert.attach.push((t.clone(), t.clone(), attach));
            }
        }
        cert.boundary.push((t, cl));
    }
    let mut probes = s.nearby(center, &s.nbhd(center, k));
    probes.extend((0..b.samples).filter_map(|_| s.sample_point(rng, 0)));
    for q in probes.into_iter().filter(|q| s.level(q) < l) {
        let cl = if s.member(&q, c) {
            Closure::Member
        } else {
            match (0..=l + b.radius).map(|j| s.nbhd(&q, j)).find(|nb| s.meets(nb, c).is_none()) {
                Some(nb) => Closure::Separated { nbhd: nb },
                None => Closure::Unknown,
            }
        };
        cert.interior.push((q, cl));
    }
    cert
}

fn side_ok<S: Constructive>(s: &S, c: &S::Open, l: usize, cert: &BoundaryCert<S::Point, S::Open>, b: &EngineBudget) -> Verdict {
    let mut v = if s.is_cell(c, l) { Verdict::Pass } else { Verdict::Fail };
    for (t, cl) in &cert.boundary {
        let ok = s.level(t) >= l && !s.member(t, c) && s.check_closure(t, c, cl).is_ok();
        v = v.and(match (ok, cl.is_in()) {
            (false, _) => Verdict::Fail,
            (true, true) => Verdict::Pass,
            (true, false) => Verdict::Inconclusive,
        });
    }
    for (t, w, lvl) in &cert.attach {
        let ok = s.level(w) == *lvl && s.member(w, c) && s.member(w, &s.nbhd(t, b.depth));
        v = v.and(if ok { Verdict::Pass } else { Verdict::Fail });
    }
    for (q, cl) in &cert.interior {
        let ok = s.level(q) < l && s.check_closure(q, c, cl).is_ok();
        v = v.and(match (ok, cl) {
            (false, _) => Verdict::Fail,
            (true, Closure::Member | Closure::Separated { .. }) => Verdict::Pass,
            _ => Verdict::Inconclusive,
        });
    }
    v
}

#[allow(clippy::too_many_arguments)]
fn boundary_row<X: Constructive, Y: Constructive>(
    g: GammaIndex,
    clause: &str,
    s: &X,
    t: &Y,
    u: &X::Open,
    v: &Y::Open,
    l: usize,
    _attach: usize,
    b: &EngineBudget,
    cx: BoundaryCert<X::Point, X::Open>,
    cy: BoundaryCert<Y::Point, Y::Open>,
) -> LedgerRow {
    let verdict = side_ok(s, u, l, &cx, b).and(side_ok(t, v, l, &cy, b));
    LedgerRow { stage: g.to_string(), clause: clause.into(), verdict, certificate: json!({ "x": cx, "y": cy }) }
}
