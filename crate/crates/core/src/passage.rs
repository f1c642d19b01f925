//! First passage engine.
//!
//! [`simulate_frogs`] runs the frog dynamics in discrete time: every active
//! frog takes one step per unit time along its own keyed walk, and the first
//! active frog to stand on a site wakes the frogs sleeping there. The first
//! visit time of x equals T(source, x); [`oracle_passage_time`] recomputes the
//! same quantity as a shortest path over relay sequences weighted by τ, and
//! the two are checked against each other in the tests.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use rustc_hash::{FxHashMap, FxHashSet};
use serde::{Deserialize, Serialize};

use crate::environment::Environment;
use crate::error::{FrogError, Result};
use crate::lattice::Point;
use crate::walks::{direction, WalkCursor};

pub const DEFAULT_ORACLE_CAP: usize = 300;

/// A hitting or passage time, or the horizon it was censored at.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum HittingTime {
    Finite(u64),
    /// No hit at any time up to and including the horizon.
    Censored(u64),
}

impl HittingTime {
    pub fn finite(self) -> Option<u64> {
        match self {
            HittingTime::Finite(k) => Some(k),
            HittingTime::Censored(_) => None,
        }
    }

    pub fn is_finite(self) -> bool {
        matches!(self, HittingTime::Finite(_))
    }

    /// Finite values compare by value; censored values sort last.
    pub fn sort_key(self) -> u64 {
        self.finite().unwrap_or(u64::MAX)
    }
}

/// How a simulation treats the edge of the sampled box.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoxPolicy {
    /// The box must contain B₁(source, horizon); the finite run then agrees
    /// with the process on all of Z^d up to the horizon.
    #[default]
    Exact,
    /// The box is the whole world: sites outside it carry no frogs.
    Truncated,
}

impl BoxPolicy {
    fn check(self, env: &Environment, source: &Point, horizon: u64) -> Result<()> {
        if self == BoxPolicy::Exact && env.box_radius() < horizon + source.l1_norm() {
            return Err(FrogError::BoxTooSmall {
                box_radius: env.box_radius(),
                horizon,
                source_norm: source.l1_norm(),
            });
        }
        Ok(())
    }
}

/// First visit of a site: when, and by which frog.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Visit {
    pub time: u64,
    /// Origin site of the first visiting frog (the source itself at time 0).
    pub relay: Point,
    /// Index ℓ of that frog at its origin; 0 marks the source's own entry.
    pub frog: u32,
}

#[derive(Clone, Debug)]
pub struct ActivationTable {
    source: Point,
    /// The run stopped after this time, either at the horizon or because all
    /// requested targets were visited.
    simulated_until: u64,
    horizon: u64,
    visits: FxHashMap<Point, Visit>,
    awake_trace: Option<Vec<u64>>,
}

impl ActivationTable {
    pub fn source(&self) -> Point {
        self.source
    }

    pub fn horizon(&self) -> u64 {
        self.horizon
    }

    pub fn simulated_until(&self) -> u64 {
        self.simulated_until
    }

    pub fn visit(&self, y: &Point) -> Option<&Visit> {
        self.visits.get(y)
    }

    pub fn visit_time(&self, y: &Point) -> HittingTime {
        match self.visits.get(y) {
            Some(v) => HittingTime::Finite(v.time),
            None => HittingTime::Censored(self.simulated_until),
        }
    }

    pub fn visited_sites(&self) -> usize {
        self.visits.len()
    }

    /// Active frog count after each time step, when traced.
    pub fn awake_trace(&self) -> Option<&[u64]> {
        self.awake_trace.as_deref()
    }

    /// Relay chain source = v_0, v_1, …, v_m = y read off the genealogy.
    pub fn genealogy(&self, y: &Point) -> Option<Vec<Point>> {
        let mut chain = vec![*y];
        let mut cur = *self.visits.get(y)?;
        let mut at = *y;
        while at != self.source {
            at = cur.relay;
            chain.push(at);
            cur = self.visits[&at];
        }
        chain.reverse();
        Some(chain)
    }

    /// Debug dump: visit table and genealogy edges, sorted by site.
    pub fn to_dump(&self, env: &Environment) -> ReplicaDump {
        let mut rows: Vec<(Point, Visit)> = self.visits.iter().map(|(p, v)| (*p, *v)).collect();
        rows.sort_by_key(|(p, _)| *p);
        ReplicaDump {
            seed: env.seed().clone(),
            law: env.law().label(),
            box_radius: env.box_radius(),
            source: self.source,
            horizon: self.horizon,
            simulated_until: self.simulated_until,
            visit_time: rows.iter().map(|(p, v)| (*p, v.time)).collect(),
            genealogy: rows.iter().filter(|(p, _)| *p != self.source).map(|(p, v)| (v.relay, *p)).collect(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ReplicaDump {
    pub seed: crate::keyed::SeedSpec,
    pub law: String,
    pub box_radius: u64,
    pub source: Point,
    pub horizon: u64,
    pub simulated_until: u64,
    pub visit_time: Vec<(Point, u64)>,
    /// (relay site, visited site) pairs.
    pub genealogy: Vec<(Point, Point)>,
}

#[derive(Clone, Debug, Default)]
pub struct SimOptions {
    pub policy: BoxPolicy,
    /// Stop as soon as every one of these sites has been visited.
    pub stop_when_visited: Option<Vec<Point>>,
    pub trace_awake: bool,
}

struct Frog {
    key: u64,
    steps: u64,
    pos: Point,
    origin: Point,
    index: u32,
}

/// Runs the dynamics from `source` up to `horizon` with the exact box policy.
pub fn simulate_frogs(env: &Environment, source: &Point, horizon: u64) -> Result<ActivationTable> {
    simulate_frogs_with(env, source, horizon, &SimOptions::default())
}

pub fn simulate_frogs_with(
    env: &Environment,
    source: &Point,
    horizon: u64,
    opts: &SimOptions,
) -> Result<ActivationTable> {
    opts.policy.check(env, source, horizon)?;
    let n0 = env.omega(source);
    if n0 == 0 {
        return Err(FrogError::EmptySource(*source));
    }
    let dim = env.dim();
    let mut visits: FxHashMap<Point, Visit> = FxHashMap::default();
    visits.insert(*source, Visit { time: 0, relay: *source, frog: 0 });
    let mut frogs: Vec<Frog> = Vec::new();
    wake(env, source, n0, &mut frogs);

    let mut pending: FxHashSet<Point> = opts.stop_when_visited.iter().flatten().copied().collect();
    pending.remove(source);
    let stopping = opts.stop_when_visited.is_some();
    let mut trace = opts.trace_awake.then(|| vec![frogs.len() as u64]);

    let mut t = 0;
    while t < horizon && !(stopping && pending.is_empty()) {
        t += 1;
        let active = frogs.len();
        for i in 0..active {
            let f = &mut frogs[i];
            let code = direction(f.key, f.steps, dim);
            f.steps += 1;
            f.pos = f.pos.step(code);
            let pos = f.pos;
            if visits.contains_key(&pos) {
                continue;
            }
            let (relay, index) = (f.origin, f.index);
            visits.insert(pos, Visit { time: t, relay, frog: index });
            if stopping {
                pending.remove(&pos);
            }
            let n = env.omega(&pos);
            if n > 0 {
                wake(env, &pos, n, &mut frogs);
            }
        }
        if let Some(tr) = trace.as_mut() {
            tr.push(frogs.len() as u64);
        }
    }
    Ok(ActivationTable { source: *source, simulated_until: t, horizon, visits, awake_trace: trace })
}

fn wake(env: &Environment, site: &Point, n: u32, frogs: &mut Vec<Frog>) {
    for ell in 1..=n {
        frogs.push(Frog { key: env.walk_key(site, ell), steps: 0, pos: *site, origin: *site, index: ell });
    }
}

/// τ(u, v): first time any frog initially at u stands on v.
pub fn tau(env: &Environment, u: &Point, v: &Point, horizon: u64) -> HittingTime {
    let n = env.omega(u);
    if n == 0 || u.l1_dist(v) > horizon {
        return HittingTime::Censored(horizon);
    }
    if u == v {
        return HittingTime::Finite(0);
    }
    let mut best = horizon + 1;
    for ell in 1..=n {
        let mut w = WalkCursor::new(env.walk_key(u, ell), *u);
        for k in 1..best {
            let p = w.advance();
            if p == *v {
                best = k;
                break;
            }
            // cannot reach v before the current best any more
            if k + p.l1_dist(v) >= best {
                break;
            }
        }
    }
    if best <= horizon { HittingTime::Finite(best) } else { HittingTime::Censored(horizon) }
}

/// First hitting times of every site reached by u's frogs within `limit` steps.
pub fn hitting_times_from(env: &Environment, u: &Point, limit: u64) -> FxHashMap<Point, u64> {
    let mut out: FxHashMap<Point, u64> = FxHashMap::default();
    let n = env.omega(u);
    if n == 0 {
        return out;
    }
    out.insert(*u, 0);
    for ell in 1..=n {
        let mut w = WalkCursor::new(env.walk_key(u, ell), *u);
        for k in 1..=limit {
            let p = w.advance();
            out.entry(p).and_modify(|e| *e = (*e).min(k)).or_insert(k);
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PassageOutcome {
    pub value: HittingTime,
    /// Relay sites x_0, …, x_m realizing the value.
    pub witness: Option<Vec<Point>>,
    pub horizon: u64,
    pub box_radius: u64,
}

impl PassageOutcome {
    /// Σ τ(x_i, x_{i+1}) along the witness.
    pub fn witness_cost(&self, env: &Environment) -> Option<HittingTime> {
        let w = self.witness.as_ref()?;
        let mut total = 0;
        for pair in w.windows(2) {
            match tau(env, &pair[0], &pair[1], self.horizon) {
                HittingTime::Finite(k) => total += k,
                c => return Some(c),
            }
        }
        Some(HittingTime::Finite(total))
    }
}

/// T(0, x).
pub fn passage_time(env: &Environment, x: &Point, horizon: u64) -> Result<PassageOutcome> {
    passage_from(env, &Point::origin(env.dim()), x, horizon, BoxPolicy::Exact)
}

/// T(source, x) under the given box policy, with the genealogy as witness.
pub fn passage_from(
    env: &Environment,
    source: &Point,
    x: &Point,
    horizon: u64,
    policy: BoxPolicy,
) -> Result<PassageOutcome> {
    let opts = SimOptions { policy, stop_when_visited: Some(vec![*x]), trace_awake: false };
    let table = simulate_frogs_with(env, source, horizon, &opts)?;
    let value = match table.visit_time(x) {
        HittingTime::Finite(k) => HittingTime::Finite(k),
        HittingTime::Censored(_) => HittingTime::Censored(horizon),
    };
    Ok(PassageOutcome { value, witness: table.genealogy(x), horizon, box_radius: env.box_radius() })
}

/// T(source, x) for several targets from one run.
pub fn passage_times_from(
    env: &Environment,
    source: &Point,
    targets: &[Point],
    horizon: u64,
    policy: BoxPolicy,
) -> Result<Vec<HittingTime>> {
    let opts = SimOptions { policy, stop_when_visited: Some(targets.to_vec()), trace_awake: false };
    let table = simulate_frogs_with(env, source, horizon, &opts)?;
    Ok(targets
        .iter()
        .map(|x| match table.visit_time(x) {
            HittingTime::Finite(k) => HittingTime::Finite(k),
            HittingTime::Censored(_) => HittingTime::Censored(horizon),
        })
        .collect())
}

/// T*(0, x) = T(0*, x*).
pub fn passage_time_star(env: &Environment, x: &Point, horizon: u64) -> Result<PassageOutcome> {
    let s = env.star(&Point::origin(env.dim()), None)?;
    let t = env.star(x, None)?;
    passage_from(env, &s, &t, horizon, BoxPolicy::Exact)
}

/// T*(0, x) for several targets from one run.
pub fn passage_times_star(env: &Environment, targets: &[Point], horizon: u64) -> Result<Vec<HittingTime>> {
    let s = env.star(&Point::origin(env.dim()), None)?;
    let stars = targets.iter().map(|x| env.star(x, None)).collect::<Result<Vec<_>>>()?;
    passage_times_from(env, &s, &stars, horizon, BoxPolicy::Exact)
}

/// Dijkstra over relay sequences in I ∩ box with edge weights τ.
///
/// Edge weights are generated lazily: when a site is settled at distance
/// D, its frogs are walked for `horizon − D` steps, which yields every τ
/// that can still matter.
pub fn oracle_passage_time(
    env: &Environment,
    source: &Point,
    x: &Point,
    horizon: u64,
    cap: usize,
) -> Result<PassageOutcome> {
    let occupied = env.occupied_sites();
    if occupied.len() > cap {
        return Err(FrogError::OracleCapExceeded { sites: occupied.len(), cap });
    }
    let nodes: FxHashSet<Point> = occupied.iter().copied().chain([*x]).collect();
    let mut dist: FxHashMap<Point, u64> = FxHashMap::default();
    let mut parent: FxHashMap<Point, Point> = FxHashMap::default();
    let mut heap = BinaryHeap::new();
    let mut settled: FxHashSet<Point> = FxHashSet::default();

    let outcome = |value, witness| PassageOutcome { value, witness, horizon, box_radius: env.box_radius() };

    if source == x {
        return Ok(outcome(HittingTime::Finite(0), Some(vec![*x])));
    }
    if env.omega(source) == 0 {
        return Ok(outcome(HittingTime::Censored(horizon), None));
    }
    dist.insert(*source, 0);
    heap.push(Reverse((0u64, *source)));
    while let Some(Reverse((d, u))) = heap.pop() {
        if !settled.insert(u) {
            continue;
        }
        if u == *x {
            let mut path = vec![u];
            let mut cur = u;
            while let Some(&p) = parent.get(&cur) {
                path.push(p);
                cur = p;
            }
            path.reverse();
            return Ok(outcome(HittingTime::Finite(d), Some(path)));
        }
        for (v, k) in hitting_times_from(env, &u, horizon - d) {
            if v == u || !nodes.contains(&v) || settled.contains(&v) {
                continue;
            }
            let nd = d + k;
            let better = match dist.get(&v) {
                None => true,
                Some(&old) => nd < old || (nd == old && u < parent[&v]),
            };
            if better {
                dist.insert(v, nd);
                parent.insert(v, u);
                heap.push(Reverse((nd, v)));
            }
        }
    }
    Ok(outcome(HittingTime::Censored(horizon), None))
}

/// v(x): a relay site with T(0*, x) = T(0*, v(x)) + τ(v(x), x).
pub fn witness_last_relay(env: &Environment, x: &Point, horizon: u64) -> Result<Point> {
    let s = env.star(&Point::origin(env.dim()), None)?;
    let opts = SimOptions { policy: BoxPolicy::Exact, stop_when_visited: Some(vec![*x]), trace_awake: false };
    let table = simulate_frogs_with(env, &s, horizon, &opts)?;
    table.visit(x).map(|v| v.relay).ok_or(FrogError::Censored { target: *x, horizon })
}

/// Whether the genealogy from 0 to x contains a relay pair at ℓ1 distance ≥ t.
pub fn jump_witness_scan(env: &Environment, x: &Point, horizon: u64, t: u64) -> Result<bool> {
    let out = passage_time(env, x, horizon)?;
    let chain = out.witness.ok_or(FrogError::Censored { target: *x, horizon })?;
    Ok(chain.windows(2).any(|w| w[0].l1_dist(&w[1]) >= t))
}
