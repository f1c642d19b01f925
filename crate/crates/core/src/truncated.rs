//! Truncated passage times.
//!
//! The two-point function σ_t keeps τ(x, y) for pairs with ‖x − y‖∞ ≤ t,
//! caps it at 4Kt, and prices longer pairs at 4K‖x − y‖∞. T_t is the
//! shortest relay path under σ_t. The module also carries the tiling of Z^d
//! by half-open boxes of side t and the tile count of T_t geodesics.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use rustc_hash::{FxHashMap, FxHashSet};
use serde::{Deserialize, Serialize};

use crate::environment::{ConfigLaw, Environment};
use crate::estimation::{exact_radius, replica_env, replicate, wilson_interval, ReplicaRange};
use crate::keyed::SeedSpec;
use crate::error::{FrogError, Result};
use crate::lattice::{l1_ball, Point};
use crate::passage::{passage_times_from, tau, BoxPolicy, HittingTime};
use crate::walks::WalkCursor;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TruncationParams {
    pub t: u64,
    pub gamma: f64,
    /// The K of σ_t; must exceed d (c4_hat + gamma + 1).
    pub k: u64,
    /// Stand-in for the unknown linear-tail constant, recorded for reports.
    pub c4_hat: f64,
}

pub const DEFAULT_GAMMA: f64 = 1.0;

impl TruncationParams {
    /// K = ⌈d (c4_hat + γ + 1)⌉ + 1.
    pub fn from_c4(dim: usize, t: u64, c4_hat: f64, gamma: f64) -> Result<Self> {
        if t == 0 {
            return Err(FrogError::InvalidParameter { name: "t", reason: "truncation scale must be positive".into() });
        }
        if !(c4_hat > 0.0 && gamma > 0.0) || !c4_hat.is_finite() || !gamma.is_finite() {
            return Err(FrogError::InvalidParameter {
                name: "c4_hat",
                reason: format!("c4_hat {c4_hat} and gamma {gamma} must be positive"),
            });
        }
        let k = (dim as f64 * (c4_hat + gamma + 1.0)).ceil() as u64 + 1;
        TruncationParams { t, gamma, k, c4_hat }.validated(dim)
    }

    pub fn validated(self, dim: usize) -> Result<Self> {
        if self.t == 0 {
            return Err(FrogError::InvalidParameter { name: "t", reason: "truncation scale must be positive".into() });
        }
        if (self.k as f64) <= dim as f64 * (self.c4_hat + self.gamma + 1.0) {
            return Err(FrogError::InvalidParameter {
                name: "K",
                reason: format!(
                    "K = {} must exceed d (c4_hat + gamma + 1) = {}",
                    self.k,
                    dim as f64 * (self.c4_hat + self.gamma + 1.0)
                ),
            });
        }
        Ok(self)
    }

    pub fn with_t(&self, t: u64) -> Self {
        TruncationParams { t, ..self.clone() }
    }

    /// 4Kt.
    pub fn cap(&self) -> u64 {
        4 * self.k * self.t
    }

    /// 4K (t ∨ ‖x − y‖∞): the price of a single direct edge when no frog helps.
    pub fn flat_price(&self, x: &Point, y: &Point) -> u64 {
        4 * self.k * self.t.max(x.linf_dist(y))
    }
}

/// σ_t(x, y).
pub fn sigma_t(env: &Environment, x: &Point, y: &Point, p: &TruncationParams) -> u64 {
    let gap = x.linf_dist(y);
    if gap > p.t {
        return 4 * p.k * gap;
    }
    match tau(env, x, y, p.cap()) {
        HittingTime::Finite(k) => k,
        HittingTime::Censored(_) => p.cap(),
    }
}

/// ‖x − y‖₁ ≤ σ ≤ 4K (t ∨ ‖x − y‖∞).
pub fn sandwich_holds(x: &Point, y: &Point, sigma: u64, p: &TruncationParams) -> bool {
    x.l1_dist(y) <= sigma && sigma <= p.flat_price(x, y)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TruncatedOutcome {
    pub value: u64,
    /// Relay sequence x = x_0, …, x_m = y of a σ_t-geodesic.
    pub witness: Vec<Point>,
    /// Witness edges with ‖·‖∞ > t.
    pub long_range_edges: usize,
    /// Witness edges priced at the 4Kt cap.
    pub capped_edges: usize,
    pub sigma_evaluations: u64,
    pub sandwich_violations: u64,
}

/// T_t(x, y) by label-setting search.
///
/// Every σ_t(u, z) is at least ‖u − z‖₁, so ‖z − y‖₁ is a consistent
/// lower bound on the remaining cost and sites are settled in order of
/// d(z) + ‖z − y‖₁. The search runs under a cost budget B, doubling from
/// 2‖x − y‖₁ up to 4K (t ∨ ‖x − y‖∞) (where the direct edge guarantees an
/// answer): an edge is relaxed only if it can still lie on a path of cost
/// ≤ B, so a path found within the budget is optimal.
pub fn truncated_passage(env: &Environment, x: &Point, y: &Point, p: &TruncationParams) -> Result<TruncatedOutcome> {
    truncated_passage_with(env, x, y, p, BoxPolicy::Exact)
}

/// As [`truncated_passage`]; under [`BoxPolicy::Truncated`] relays outside
/// the box are allowed and carry no frogs.
pub fn truncated_passage_with(
    env: &Environment,
    x: &Point,
    y: &Point,
    p: &TruncationParams,
    policy: BoxPolicy,
) -> Result<TruncatedOutcome> {
    let ceiling = p.flat_price(x, y);
    let mut budget = (2 * x.l1_dist(y)).max(8).min(ceiling);
    loop {
        if let Some(out) = bounded_search(env, x, y, p, budget, policy)? {
            return Ok(out);
        }
        if budget >= ceiling {
            unreachable!("the direct edge costs at most the ceiling");
        }
        budget = (budget * 2).min(ceiling);
    }
}

fn bounded_search(
    env: &Environment,
    x: &Point,
    y: &Point,
    p: &TruncationParams,
    budget: u64,
    policy: BoxPolicy,
) -> Result<Option<TruncatedOutcome>> {
    let mut dist: FxHashMap<Point, u64> = FxHashMap::default();
    let mut parent: FxHashMap<Point, Point> = FxHashMap::default();
    let mut settled: FxHashSet<Point> = FxHashSet::default();
    let mut heap: BinaryHeap<Reverse<(u64, Point)>> = BinaryHeap::new();
    let mut stats = RelaxStats::default();

    let h = |z: &Point| z.l1_dist(y);
    dist.insert(*x, 0);
    heap.push(Reverse((h(x), *x)));

    let relax = |u: Point,
                 du: u64,
                 z: Point,
                 sigma: u64,
                 stats: &mut RelaxStats,
                 dist: &mut FxHashMap<Point, u64>,
                 parent: &mut FxHashMap<Point, Point>,
                 heap: &mut BinaryHeap<Reverse<(u64, Point)>>| {
        stats.evaluations += 1;
        if !sandwich_holds(&u, &z, sigma, p) {
            stats.violations += 1;
        }
        let nd = du + sigma;
        if nd + h(&z) > budget {
            return;
        }
        let better = match dist.get(&z) {
            None => true,
            Some(&old) => nd < old || (nd == old && u < parent[&z]),
        };
        if better {
            dist.insert(z, nd);
            parent.insert(z, u);
            heap.push(Reverse((nd + h(&z), z)));
        }
    };

    let gap_cap = p.cap();
    while let Some(Reverse((_, u))) = heap.pop() {
        if settled.contains(&u) {
            continue;
        }
        settled.insert(u);
        let du = dist[&u];
        if u == *y {
            let mut witness = vec![u];
            let mut cur = u;
            while let Some(&q) = parent.get(&cur) {
                witness.push(q);
                cur = q;
            }
            witness.reverse();
            let long_range_edges = witness.windows(2).filter(|w| w[0].linf_dist(&w[1]) > p.t).count();
            let capped_edges = witness
                .windows(2)
                .filter(|w| w[0].linf_dist(&w[1]) <= p.t && !tau(env, &w[0], &w[1], gap_cap - 1).is_finite())
                .count();
            return Ok(Some(TruncatedOutcome {
                value: du,
                witness,
                long_range_edges,
                capped_edges,
                sigma_evaluations: stats.evaluations,
                sandwich_violations: stats.violations,
            }));
        }
        if policy == BoxPolicy::Exact && u != *x && !env.contains(&u) {
            return Err(FrogError::RegionExceedsBox { point: u, box_radius: env.box_radius() });
        }
        let slack = budget - du;

        // short edges carried by u's own frogs
        let mut hits: FxHashMap<Point, u64> = FxHashMap::default();
        let n = env.omega(&u);
        if n > 0 {
            let limit = slack.min(gap_cap);
            for ell in 1..=n {
                let mut w = WalkCursor::new(env.walk_key(&u, ell), u);
                for k in 1..=limit {
                    let q = w.advance();
                    if q.linf_dist(&u) <= p.t && k + h(&q) <= slack {
                        hits.entry(q).and_modify(|e| *e = (*e).min(k)).or_insert(k);
                    }
                }
            }
            let mut hits: Vec<(Point, u64)> = hits.drain().collect();
            hits.sort_unstable();
            for (z, k) in hits {
                if z != u && !settled.contains(&z) {
                    relax(u, du, z, k, &mut stats, &mut dist, &mut parent, &mut heap);
                }
            }
        }

        // flat-priced edges: the target directly, and occupied relays near u
        if !settled.contains(y) {
            let s = sigma_for_flat(env, &u, y, p, n);
            relax(u, du, *y, s, &mut stats, &mut dist, &mut parent, &mut heap);
        }
        if gap_cap <= slack {
            // 4K max(t, ‖u − z‖∞) ≥ 4K ‖u − z‖₁ / d
            let reach = slack * u.dim() as u64 / (4 * p.k);
            for off in l1_ball(u.dim(), reach) {
                let z = u + off;
                if z == u || z == *y || settled.contains(&z) || !env.is_occupied(&z) {
                    continue;
                }
                let s = sigma_for_flat(env, &u, &z, p, n);
                relax(u, du, z, s, &mut stats, &mut dist, &mut parent, &mut heap);
            }
        }
    }
    Ok(None)
}

#[derive(Default)]
struct RelaxStats {
    evaluations: u64,
    violations: u64,
}

/// σ_t(u, z) for an edge reached through the flat price; short edges still
/// use τ when u's frogs hit z before the cap.
fn sigma_for_flat(env: &Environment, u: &Point, z: &Point, p: &TruncationParams, n: u32) -> u64 {
    if u.linf_dist(z) > p.t || n == 0 {
        p.flat_price(u, z)
    } else {
        sigma_t(env, u, z, p)
    }
}

/// Σ σ_t along a relay sequence.
pub fn path_cost(env: &Environment, path: &[Point], p: &TruncationParams) -> u64 {
    path.windows(2).map(|w| sigma_t(env, &w[0], &w[1], p)).sum()
}

/// Tiling of Z^d by the boxes Λ_q = t q + (−t/2, t/2]^d, q ∈ Z^d.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tiling {
    pub t: u64,
}

impl Tiling {
    pub fn new(t: u64) -> Self {
        assert!(t >= 1, "tile side must be positive");
        Tiling { t }
    }

    /// Index q with z ∈ Λ_q: per coordinate, q = ⌈(2z − t) / 2t⌉.
    pub fn box_of(&self, z: &Point) -> Point {
        let t = self.t as i64;
        let mut q = Point::origin(z.dim());
        for i in 0..z.dim() {
            let a = 2 * z.coord(i) as i64 - t;
            q.set_coord(i, (-(-a).div_euclid(2 * t)) as i32);
        }
        q
    }

    pub fn center(&self, q: &Point) -> Point {
        (self.t as i32) * *q
    }

    pub fn contains(&self, q: &Point, z: &Point) -> bool {
        let t = self.t as i64;
        (0..z.dim()).all(|i| {
            let off = 2 * (z.coord(i) as i64 - t * q.coord(i) as i64);
            -t < off && off <= t
        })
    }
}

pub fn tiling_box_of(tiling: &Tiling, z: &Point) -> Point {
    tiling.box_of(z)
}

/// Number of distinct tiles holding a relay of the witness.
pub fn geodesic_box_count(witness: &[Point], tiling: &Tiling) -> usize {
    witness.iter().map(|z| tiling.box_of(z)).collect::<FxHashSet<_>>().len()
}

/// 3^d (4K (1 ∨ ‖x‖∞ / t) + 1), with `x` the displacement of the geodesic.
pub fn geodesic_box_bound(dim: usize, x: &Point, p: &TruncationParams) -> f64 {
    let ratio = (x.linf_norm() as f64 / p.t as f64).max(1.0);
    3f64.powi(dim as i32) * (4.0 * p.k as f64 * ratio + 1.0)
}

/// One t of the agreement experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgreementRow {
    pub t: u64,
    pub k: u64,
    pub replicas: u64,
    /// Replicas where T* was censored and T_t went past the horizon too.
    pub undecided: u64,
    pub disagreements: u64,
    pub phat: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub max_box_count: usize,
    pub box_bound: f64,
    pub box_bound_violations: u64,
    pub sigma_evaluations: u64,
    pub sandwich_violations: u64,
    /// Geodesics using at least one edge with ‖·‖∞ > t, and the edge total.
    pub geodesics_with_long_range: u64,
    pub long_range_edges: u64,
    pub capped_edges: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgreementReport {
    pub x: Point,
    pub c4_hat: f64,
    pub gamma: f64,
    pub horizon: u64,
    pub replicas: ReplicaRange,
    pub rows: Vec<AgreementRow>,
    /// Replicas with T*(0, x) censored at the horizon.
    pub censored_star: u64,
    /// Finite T* below ‖x* − 0*‖₁ (must be none).
    pub bound_violations: u64,
}

impl AgreementReport {
    /// Each step down the t ladder either lowers p̂ or keeps overlapping
    /// 95% intervals.
    pub fn non_increasing_within_ci(&self) -> bool {
        self.rows
            .windows(2)
            .all(|w| w[1].phat < w[0].phat || (w[0].ci_lo <= w[1].ci_hi && w[1].ci_lo <= w[0].ci_hi))
    }
}

/// Empirical P(T_t(0*, x*) ≠ T*(0, x)) for every t of the ladder.
#[allow(clippy::too_many_arguments)]
pub fn agreement_experiment(
    law: &ConfigLaw,
    x: &Point,
    t_ladder: &[u64],
    range: ReplicaRange,
    horizon: u64,
    c4_hat: f64,
    gamma: f64,
    seed: &SeedSpec,
    threads: Option<usize>,
) -> Result<AgreementReport> {
    if t_ladder.is_empty() || t_ladder.windows(2).any(|w| w[0] >= w[1]) {
        return Err(FrogError::InvalidParameter { name: "t", reason: format!("{t_ladder:?} must increase strictly") });
    }
    if horizon == 0 {
        return Err(FrogError::InvalidParameter { name: "horizon", reason: "must be positive".into() });
    }
    let dim = x.dim();
    let params = t_ladder
        .iter()
        .map(|&t| TruncationParams::from_c4(dim, t, c4_hat, gamma))
        .collect::<Result<Vec<_>>>()?;
    let widest = params.iter().map(|p| p.flat_price(&Point::origin(dim), x)).max().unwrap();
    let radius = exact_radius(horizon, x.l1_norm()).max(widest + 2 * x.l1_norm() + 64);

    struct Rep {
        star: HittingTime,
        bound_violation: bool,
        per_t: Vec<(TruncatedOutcome, usize, f64)>,
    }
    let reps = replicate(range, threads, |r| {
        let env = replica_env(law, dim, radius, seed, r, false)?;
        let s = env.star(&Point::origin(dim), None)?;
        let xs = env.star(x, None)?;
        let star = passage_times_from(&env, &s, &[xs], horizon, BoxPolicy::Exact)?[0];
        let bound_violation = matches!(star, HittingTime::Finite(v) if v < s.l1_dist(&xs));
        let mut per_t = Vec::with_capacity(params.len());
        for p in &params {
            let out = truncated_passage(&env, &s, &xs, p)?;
            let boxes = geodesic_box_count(&out.witness, &Tiling::new(p.t));
            let bound = geodesic_box_bound(dim, &(xs - s), p);
            per_t.push((out, boxes, bound));
        }
        Ok(Rep { star, bound_violation, per_t })
    })?;

    let mut rows = Vec::with_capacity(params.len());
    for (i, p) in params.iter().enumerate() {
        let mut row = AgreementRow {
            t: p.t,
            k: p.k,
            replicas: range.count,
            undecided: 0,
            disagreements: 0,
            phat: 0.0,
            ci_lo: 0.0,
            ci_hi: 1.0,
            max_box_count: 0,
            box_bound: 0.0,
            box_bound_violations: 0,
            sigma_evaluations: 0,
            sandwich_violations: 0,
            geodesics_with_long_range: 0,
            long_range_edges: 0,
            capped_edges: 0,
        };
        for rep in &reps {
            let (out, boxes, bound) = &rep.per_t[i];
            match rep.star {
                HittingTime::Finite(v) => row.disagreements += (v != out.value) as u64,
                HittingTime::Censored(h) if out.value <= h => row.disagreements += 1,
                HittingTime::Censored(_) => row.undecided += 1,
            }
            row.max_box_count = row.max_box_count.max(*boxes);
            row.box_bound = row.box_bound.max(*bound);
            row.box_bound_violations += (*boxes as f64 > *bound) as u64;
            row.sigma_evaluations += out.sigma_evaluations;
            row.sandwich_violations += out.sandwich_violations;
            row.geodesics_with_long_range += (out.long_range_edges > 0) as u64;
            row.long_range_edges += out.long_range_edges as u64;
            row.capped_edges += out.capped_edges as u64;
        }
        let decided = range.count - row.undecided;
        if decided > 0 {
            row.phat = row.disagreements as f64 / decided as f64;
        }
        (row.ci_lo, row.ci_hi) = wilson_interval(row.disagreements, decided);
        rows.push(row);
    }
    Ok(AgreementReport {
        x: *x,
        c4_hat,
        gamma,
        horizon,
        replicas: range,
        rows,
        censored_star: reps.iter().filter(|r| !r.star.is_finite()).count() as u64,
        bound_violations: reps.iter().filter(|r| r.bound_violation).count() as u64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environment::{sample_environment, ConfigLaw};
    use crate::keyed::SeedSpec;
    use crate::lattice::linf_ball;

    fn params(t: u64) -> TruncationParams {
        TruncationParams::from_c4(2, t, 2.0, DEFAULT_GAMMA).unwrap()
    }

    fn env(tag: &str, rep: u64) -> Environment {
        sample_environment(ConfigLaw::Poisson { lambda: 1.0 }, 2, 400, SeedSpec::new(11, tag).with_replica(rep))
            .unwrap()
            .conditioned()
    }

    #[test]
    fn k_constraint() {
        let p = params(3);
        assert_eq!(p.k, 9);
        assert!(TruncationParams { t: 3, gamma: 1.0, k: 8, c4_hat: 2.0 }.validated(2).is_err());
        assert!(TruncationParams::from_c4(2, 0, 2.0, 1.0).is_err());
    }

    #[test]
    fn sigma_cases() {
        let e = env("sig", 0);
        let p = params(4);
        let o = Point::origin(2);
        assert_eq!(sigma_t(&e, &o, &Point::new(&[5, 0]), &p), 4 * p.k * 5);
        assert_eq!(sigma_t(&e, &o, &o, &p), 0);
        let empty = l1_ball(2, 10).into_iter().find(|z| e.omega(z) == 0).unwrap();
        assert_eq!(sigma_t(&e, &empty, &(empty + Point::new(&[1, 1])), &p), p.cap());
        for u in l1_ball(2, 3) {
            for z in linf_ball(&u, 6) {
                assert!(sandwich_holds(&u, &z, sigma_t(&e, &u, &z, &p), &p));
            }
        }
    }

    #[test]
    fn tiling_partition() {
        for t in 1..=5u64 {
            let tiling = Tiling::new(t);
            assert_eq!(tiling.box_of(&Point::origin(2)), Point::origin(2));
            let c = tiling.center(&Point::new(&[2, -1]));
            assert_eq!(tiling.box_of(&c), Point::new(&[2, -1]));
            for z in linf_ball(&Point::origin(2), 12) {
                let claims: Vec<Point> = linf_ball(&Point::origin(2), 13)
                    .into_iter()
                    .filter(|q| tiling.contains(q, &z))
                    .collect();
                assert_eq!(claims, vec![tiling.box_of(&z)], "t={t} z={z:?}");
            }
        }
        // half-open: +t/2 stays in box 0, −t/2 drops to box −1
        let tiling = Tiling::new(4);
        assert_eq!(tiling.box_of(&Point::new(&[2, 0])), Point::new(&[0, 0]));
        assert_eq!(tiling.box_of(&Point::new(&[-2, 0])), Point::new(&[-1, 0]));
    }

    #[test]
    fn box_counts() {
        let tiling = Tiling::new(4);
        assert_eq!(geodesic_box_count(&[Point::origin(2)], &tiling), 1);
        assert_eq!(geodesic_box_count(&[Point::new(&[1, 1]), Point::new(&[-1, 2]), Point::new(&[2, -1])], &tiling), 1);
        assert_eq!(geodesic_box_count(&[Point::origin(2), Point::new(&[3, 0])], &tiling), 2);
    }

    #[test]
    fn trivial_and_sandwich() {
        for rep in 0..8 {
            let e = env("tp", rep);
            let x = e.star(&Point::origin(2), None).unwrap();
            for t in [1, 2, 4] {
                let p = params(t);
                assert_eq!(truncated_passage(&e, &x, &x, &p).unwrap().value, 0);
                let y = x + Point::new(&[5, 0]);
                let out = truncated_passage(&e, &x, &y, &p).unwrap();
                assert!(out.value >= x.l1_dist(&y) && out.value <= p.flat_price(&x, &y));
                assert_eq!(path_cost(&e, &out.witness, &p), out.value);
                assert_eq!(out.sandwich_violations, 0);
                // deterministic geodesic
                assert_eq!(truncated_passage(&e, &x, &y, &p).unwrap(), out);
            }
        }
    }

    /// Shortest path over the complete graph on `nodes` (x first, y second),
    /// every σ_t evaluated up front.
    fn brute_force(env: &Environment, p: &TruncationParams, nodes: &[Point]) -> u64 {
        let n = nodes.len();
        let mut d = vec![u64::MAX; n];
        let mut done = vec![false; n];
        d[0] = 0;
        for _ in 0..n {
            let a = (0..n).filter(|&i| !done[i]).min_by_key(|&i| d[i]).unwrap();
            if d[a] == u64::MAX {
                break;
            }
            done[a] = true;
            for b in 0..n {
                if !done[b] {
                    d[b] = d[b].min(d[a] + sigma_t(env, &nodes[a], &nodes[b], p));
                }
            }
        }
        d[1]
    }

    #[test]
    fn matches_exhaustive_paths_on_tiny_instance() {
        // A world with at most 12 occupied sites; every other site of a wide
        // ball enters the brute force as an empty relay.
        let base = env("tiny", 3);
        let keep: Vec<Point> = l1_ball(2, 5).into_iter().filter(|z| base.is_occupied(z)).take(12).collect();
        let mut doc = base.to_document_with_radius(6);
        doc.conditioned_origin = false;
        let sites = l1_ball(2, 6);
        doc.rle_counts = sites.iter().map(|z| [if keep.contains(z) { base.omega(z) } else { 0 }, 1]).collect();
        let tiny = Environment::from_document(&doc).unwrap();
        let x = keep[0];
        let p = params(4);
        let wide = l1_ball(2, 22);
        for y in [Point::new(&[5, 0]), keep[keep.len() - 1], Point::new(&[0, -3])] {
            let out = truncated_passage_with(&tiny, &x, &y, &p, BoxPolicy::Truncated).unwrap();
            assert!(out.witness.iter().all(|z| z.l1_norm() <= 22), "witness leaves the brute-force ball");
            let mut nodes = vec![x, y];
            nodes.extend(wide.iter().filter(|z| **z != x && **z != y));
            assert_eq!(out.value, brute_force(&tiny, &p, &nodes), "y={y:?}");
        }
    }

    #[test]
    fn raising_a_sigma_never_lowers_t_t() {
        // Shrinking the cap on one occupied site (by emptying it) only raises σ_t values.
        let e = env("mono", 1);
        let x = e.star(&Point::origin(2), None).unwrap();
        let y = x + Point::new(&[6, 0]);
        let p = params(2);
        let before = truncated_passage(&e, &x, &y, &p).unwrap();
        for relay in before.witness.iter().filter(|r| **r != x && **r != y) {
            let e2 = e.with_site_count(*relay, 0);
            assert!(truncated_passage(&e2, &x, &y, &p).unwrap().value >= before.value);
        }
    }

    #[test]
    fn region_outside_box_is_an_error() {
        let e = sample_environment(ConfigLaw::Poisson { lambda: 1.0 }, 2, 3, SeedSpec::new(1, "small"))
            .unwrap()
            .conditioned();
        let p = params(1);
        let r = truncated_passage(&e, &Point::origin(2), &Point::new(&[8, 0]), &p);
        assert!(matches!(r, Err(FrogError::RegionExceedsBox { .. })), "{r:?}");
    }

    #[test]
    fn agreement_ladder() {
        let law = ConfigLaw::Poisson { lambda: 1.0 };
        let rep = agreement_experiment(
            &law,
            &Point::new(&[4, 0]),
            &[1, 2, 4, 8, 32],
            ReplicaRange::first(60),
            32,
            10.0,
            DEFAULT_GAMMA,
            &SeedSpec::new(11, "agree"),
            None,
        )
        .unwrap();
        assert!(rep.non_increasing_within_ci(), "{:?}", rep.rows);
        // t at the horizon: every realized τ ≤ horizon stays below the 4Kt cap
        let last = rep.rows.last().unwrap();
        assert_eq!(last.disagreements, 0);
        // pinned: at t = 1 the long-range price 4K‖·‖∞ with K = 25 all but
        // rules out the plain geodesic
        assert_eq!(rep.rows[0].k, 25);
        let counts: Vec<u64> = rep.rows.iter().map(|r| r.disagreements).collect();
        assert_eq!(counts, vec![57, 27, 1, 0, 0]);
        for row in &rep.rows {
            assert_eq!(row.sandwich_violations, 0);
            assert_eq!(row.box_bound_violations, 0);
        }
        assert_eq!(rep.bound_violations, 0);
    }

    #[test]
    fn agreement_rejects_bad_ladders() {
        let law = ConfigLaw::Poisson { lambda: 1.0 };
        let seed = SeedSpec::new(1, "bad");
        let x = Point::new(&[2, 0]);
        for ladder in [&[][..], &[2, 2][..], &[0, 1][..]] {
            let r = agreement_experiment(&law, &x, ladder, ReplicaRange::first(1), 10, 2.0, 1.0, &seed, None);
            assert!(matches!(r, Err(FrogError::InvalidParameter { .. })), "{ladder:?}");
        }
    }
}
