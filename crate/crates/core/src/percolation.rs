//! Site percolation and the renormalized block fields.
//!
//! A [`SiteField`] is a 0/1 field on the l1 box B₁(0, R). Bernoulli fields
//! come from the keyed generator; white and good fields are computed block
//! by block from an [`Environment`] through the passage engine.
//!
//! The infinite cluster of the paper is proxied by the largest cluster of
//! the box.

use std::collections::VecDeque;
use std::sync::Arc;

use rustc_hash::FxHashMap;
use serde::{Deserialize, Serialize};

use crate::environment::{ConfigLaw, Environment};
use crate::error::{FrogError, Result};
use crate::estimation::{fit_line, replica_env, replicate, wilson_interval, ReplicaRange};
use crate::keyed::{draw, site_key_from_root, unit_f64, KeyedStream, SeedSpec, DOMAIN_FIELD, DOMAIN_STAT};
use crate::lattice::{apply_adapted_map, default_probes, find_adapted_basis, l1_ball, l1_sphere, linf_ball, neighbors, Point};
use crate::passage::{passage_times_from, BoxPolicy, HittingTime};
use crate::truncated::Tiling;

/// Sites of B₁(0, R) in lexicographic order, with a reverse index.
#[derive(Debug)]
pub struct BoxSites {
    pub dim: usize,
    pub radius: u64,
    pub sites: Vec<Point>,
    index: FxHashMap<Point, usize>,
}

impl BoxSites {
    pub fn new(dim: usize, radius: u64) -> Arc<Self> {
        let sites = l1_ball(dim, radius);
        let index = sites.iter().enumerate().map(|(i, p)| (*p, i)).collect();
        Arc::new(BoxSites { dim, radius, sites, index })
    }

    #[inline]
    pub fn index(&self, p: &Point) -> Option<usize> {
        self.index.get(p).copied()
    }

    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Provenance {
    Bernoulli { p: f64 },
    White { n: u64 },
    Good { n: u64, m: u64, delta: f64 },
    Explicit,
}

#[derive(Clone, Debug)]
pub struct SiteField {
    pub provenance: Provenance,
    geometry: Arc<BoxSites>,
    bits: Vec<bool>,
}

impl SiteField {
    pub fn from_fn(geometry: Arc<BoxSites>, provenance: Provenance, mut f: impl FnMut(&Point) -> bool) -> Self {
        let bits = geometry.sites.iter().map(&mut f).collect();
        SiteField { provenance, geometry, bits }
    }

    pub fn try_from_fn(
        geometry: Arc<BoxSites>,
        provenance: Provenance,
        mut f: impl FnMut(&Point) -> Result<bool>,
    ) -> Result<Self> {
        let bits = geometry.sites.iter().map(&mut f).collect::<Result<Vec<_>>>()?;
        Ok(SiteField { provenance, geometry, bits })
    }

    pub fn dim(&self) -> usize {
        self.geometry.dim
    }

    pub fn box_radius(&self) -> u64 {
        self.geometry.radius
    }

    pub fn geometry(&self) -> &Arc<BoxSites> {
        &self.geometry
    }

    /// The bit at `p`; sites outside the box are closed.
    pub fn get(&self, p: &Point) -> bool {
        self.geometry.index(p).is_some_and(|i| self.bits[i])
    }

    pub fn open_count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }
}

/// I.i.d. Bernoulli(p) bits from the site-keyed generator.
pub fn sample_bernoulli_field(p: f64, dim: usize, box_radius: u64, seed: &SeedSpec) -> Result<SiteField> {
    check_field_params(p, dim)?;
    Ok(bernoulli_on(BoxSites::new(dim, box_radius), p, seed))
}

fn check_field_params(p: f64, dim: usize) -> Result<()> {
    if !(0.0..=1.0).contains(&p) {
        return Err(FrogError::InvalidParameter { name: "p", reason: format!("{p} is not in [0, 1]") });
    }
    if !(1..=crate::lattice::MAX_DIM).contains(&dim) {
        return Err(FrogError::Dimension { dim, max: crate::lattice::MAX_DIM });
    }
    Ok(())
}

/// As [`sample_bernoulli_field`] on an existing geometry.
pub fn bernoulli_on(geometry: Arc<BoxSites>, p: f64, seed: &SeedSpec) -> SiteField {
    let root = seed.root(DOMAIN_FIELD);
    SiteField::from_fn(geometry, Provenance::Bernoulli { p }, |x| unit_f64(draw(site_key_from_root(root, x), 0)) < p)
}

struct UnionFind {
    parent: Vec<u32>,
    size: Vec<u32>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind { parent: (0..n as u32).collect(), size: vec![1; n] }
    }

    fn find(&mut self, mut a: u32) -> u32 {
        while self.parent[a as usize] != a {
            let up = self.parent[self.parent[a as usize] as usize];
            self.parent[a as usize] = up;
            a = up;
        }
        a
    }

    fn union(&mut self, a: u32, b: u32) {
        let (mut ra, mut rb) = (self.find(a), self.find(b));
        if ra == rb {
            return;
        }
        if self.size[ra as usize] < self.size[rb as usize] {
            std::mem::swap(&mut ra, &mut rb);
        }
        self.parent[rb as usize] = ra;
        self.size[ra as usize] += self.size[rb as usize];
    }
}

/// Nearest-neighbor clusters of the open sites.
///
/// Cluster ids follow the lexicographic order of each cluster's smallest
/// site; the largest cluster breaks size ties towards the smaller id.
#[derive(Clone, Debug)]
pub struct ClusterLabels {
    geometry: Arc<BoxSites>,
    label: Vec<Option<u32>>,
    pub sizes: Vec<u64>,
    pub largest_id: Option<u32>,
}

impl ClusterLabels {
    pub fn label(&self, p: &Point) -> Option<u32> {
        self.geometry.index(p).and_then(|i| self.label[i])
    }

    pub fn cluster_count(&self) -> usize {
        self.sizes.len()
    }

    pub fn largest_size(&self) -> u64 {
        self.largest_id.map_or(0, |id| self.sizes[id as usize])
    }

    pub fn in_largest(&self, p: &Point) -> bool {
        self.largest_id.is_some() && self.label(p) == self.largest_id
    }
}

pub fn label_clusters(f: &SiteField) -> ClusterLabels {
    let g = &f.geometry;
    let mut uf = UnionFind::new(g.len());
    for (i, p) in g.sites.iter().enumerate() {
        if !f.bits[i] {
            continue;
        }
        // each edge once: only the + directions
        for axis in 0..g.dim {
            if let Some(j) = g.index(&p.step(2 * axis)) {
                if f.bits[j] {
                    uf.union(i as u32, j as u32);
                }
            }
        }
    }
    let mut label = vec![None; g.len()];
    let mut ids: FxHashMap<u32, u32> = FxHashMap::default();
    let mut sizes: Vec<u64> = Vec::new();
    for i in 0..g.len() {
        if !f.bits[i] {
            continue;
        }
        let root = uf.find(i as u32);
        let next = ids.len() as u32;
        let id = *ids.entry(root).or_insert(next);
        if id as usize == sizes.len() {
            sizes.push(0);
        }
        sizes[id as usize] += 1;
        label[i] = Some(id);
    }
    let largest_id = sizes
        .iter()
        .enumerate()
        .fold(None::<(usize, u64)>, |best, (i, &s)| match best {
            Some((_, bs)) if bs >= s => best,
            _ => Some((i, s)),
        })
        .map(|(i, _)| i as u32);
    ClusterLabels { geometry: g.clone(), label, sizes, largest_id }
}

/// Graph distance inside the open sites.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum ChemicalDistance {
    Finite(u64),
    Unreachable,
}

impl ChemicalDistance {
    pub fn finite(self) -> Option<u64> {
        match self {
            ChemicalDistance::Finite(k) => Some(k),
            ChemicalDistance::Unreachable => None,
        }
    }
}

pub fn chemical_distance(f: &SiteField, v1: &Point, v2: &Point) -> ChemicalDistance {
    chemical_distances_from(f, v1).get(v2).map_or(ChemicalDistance::Unreachable, |&d| ChemicalDistance::Finite(d))
}

/// BFS distances from `v` to every open site of its cluster; empty when
/// `v` is closed.
pub fn chemical_distances_from(f: &SiteField, v: &Point) -> FxHashMap<Point, u64> {
    let mut dist: FxHashMap<Point, u64> = FxHashMap::default();
    if !f.get(v) {
        return dist;
    }
    dist.insert(*v, 0);
    let mut queue = VecDeque::from([*v]);
    while let Some(u) = queue.pop_front() {
        let du = dist[&u];
        for w in neighbors(&u) {
            if f.get(&w) && !dist.contains_key(&w) {
                dist.insert(w, du + 1);
                queue.push_back(w);
            }
        }
    }
    dist
}

/// min t such that the largest cluster meets B₁(0, t).
pub fn hole_radius(f: &SiteField, labels: &ClusterLabels) -> Result<u64> {
    let id = labels.largest_id.ok_or(FrogError::EmptyField)?;
    f.geometry
        .sites
        .iter()
        .zip(&labels.label)
        .filter(|(_, l)| **l == Some(id))
        .map(|(p, _)| p.l1_norm())
        .min()
        .ok_or(FrogError::EmptyField)
}

/// Sub-box side ⌊N^{1/4} / (4d)⌋, clamped to at least 1.
pub fn white_subbox_side(n: u64, dim: usize) -> u64 {
    (((n as f64).powf(0.25) / (4.0 * dim as f64)).floor() as u64).max(1)
}

/// Largest integer r with r ≤ N^{1/4}.
fn quarter_power_floor(n: u64) -> u64 {
    let mut r = (n as f64).powf(0.25).floor() as u64;
    while (r + 1).pow(4) <= n {
        r += 1;
    }
    while r > 0 && r.pow(4) > n {
        r -= 1;
    }
    r
}

/// l1 radius around Nv that the white indicator can depend on: the window
/// B∞(Nv, N) ⊂ B₁(Nv, dN) plus N steps of walking.
pub fn white_dependence_radius(n: u64, dim: usize) -> u64 {
    (dim as u64 + 1) * n
}

/// Whether v is white at scale N.
///
/// (1) every tile of the N′-tiling inside B∞(Nv, N) holds an occupied site;
/// (2) T(x, y) ≤ N for all occupied x, y in B∞(Nv, N) with ‖x − y‖₁ ≤ N^{1/4}.
pub fn white_site_indicator(env: &Environment, v: &Point, n: u64) -> Result<bool> {
    if n == 0 {
        return Err(FrogError::InvalidParameter { name: "N", reason: "scale must be positive".into() });
    }
    let dim = env.dim();
    let center = n as i32 * *v;
    let need = center.l1_norm() + white_dependence_radius(n, dim);
    if need > env.box_radius() {
        return Err(FrogError::BoxTooSmall { box_radius: env.box_radius(), horizon: n, source_norm: need - n });
    }
    let window = linf_ball(&center, n);
    let inside = |z: &Point| z.linf_dist(&center) <= n;

    // (1): tiles wholly inside the window
    let side = white_subbox_side(n, dim);
    let tiling = Tiling::new(side);
    let mut tiles: FxHashMap<Point, (usize, bool)> = FxHashMap::default();
    for z in &window {
        let e = tiles.entry(tiling.box_of(z)).or_insert((0, false));
        e.0 += 1;
        e.1 |= env.is_occupied(z);
    }
    let full = (side as usize).pow(dim as u32);
    if tiles.values().any(|&(count, occupied)| count == full && !occupied) {
        return Ok(false);
    }

    // (2): short passages between occupied sites
    let reach = quarter_power_floor(n);
    for x in window.iter().filter(|z| env.is_occupied(z)) {
        let targets: Vec<Point> = l1_ball(dim, reach)
            .into_iter()
            .map(|off| *x + off)
            .filter(|y| y != x && inside(y) && env.is_occupied(y))
            .collect();
        if targets.is_empty() {
            continue;
        }
        let times = passage_times_from(env, x, &targets, n, BoxPolicy::Exact)?;
        if times.iter().any(|t| !t.is_finite()) {
            return Ok(false);
        }
    }
    Ok(true)
}

/// μ̂ by direction: keys are lattice points z = My with ‖z‖₁ = M.
pub type MuTable = FxHashMap<Point, f64>;

/// Directions y ∈ (1/M) Z^d with ‖y‖₁ = 1, as the lattice points My.
pub fn scaled_directions(dim: usize, m: u64) -> Vec<Point> {
    l1_sphere(&Point::origin(dim), m)
}

/// Whether v is good at scale (N, M, δ).
///
/// For every z = My and every unit ξ, with a = N L_z(v) and b = N L_z(v + ξ):
/// T*(a, b) ≤ M N μ̂(y) (1 + δ), and a*, b* lie within l1 distance √N of
/// a and b.
pub fn good_site_indicator(env: &Environment, v: &Point, n: u64, m: u64, delta: f64, mu_hat: &MuTable) -> Result<bool> {
    if n == 0 || m == 0 {
        return Err(FrogError::InvalidParameter { name: "N", reason: "N and M must be positive".into() });
    }
    if !(delta >= 0.0 && delta.is_finite()) {
        return Err(FrogError::InvalidParameter { name: "delta", reason: format!("{delta} must be finite and ≥ 0") });
    }
    let dim = env.dim();
    let probes = default_probes(dim);
    let root_n = (n as f64).sqrt();
    let units = neighbors(&Point::origin(dim));
    let directions = scaled_directions(dim, m);
    if let Some(z) = directions.iter().find(|z| !mu_hat.contains_key(z)) {
        return Err(FrogError::MissingMuHat(*z));
    }
    for z in directions {
        let mu = mu_hat[&z];
        let basis = find_adapted_basis(&z, &probes)?;
        let threshold = (m * n) as f64 * mu * (1.0 + delta);
        let horizon = threshold.floor() as u64;
        let a = n as i32 * apply_adapted_map(&basis, v)?;
        let a_star = env.star(&a, None)?;
        if a_star.l1_dist(&a) as f64 > root_n {
            return Ok(false);
        }
        let mut targets = Vec::with_capacity(units.len());
        for xi in &units {
            let b = n as i32 * apply_adapted_map(&basis, &(*v + *xi))?;
            let b_star = env.star(&b, None)?;
            if b_star.l1_dist(&b) as f64 > root_n {
                return Ok(false);
            }
            targets.push(b_star);
        }
        let times = passage_times_from(env, &a_star, &targets, horizon, BoxPolicy::Exact)?;
        if times.iter().any(|t| !matches!(t, HittingTime::Finite(k) if *k as f64 <= threshold)) {
            return Ok(false);
        }
    }
    Ok(true)
}

/// The white field on block sites B₁(0, block_radius).
pub fn white_field(env: &Environment, n: u64, block_radius: u64) -> Result<SiteField> {
    SiteField::try_from_fn(BoxSites::new(env.dim(), block_radius), Provenance::White { n }, |v| {
        white_site_indicator(env, v, n)
    })
}

/// The good field on block sites B₁(0, block_radius).
pub fn good_field(
    env: &Environment,
    n: u64,
    m: u64,
    delta: f64,
    mu_hat: &MuTable,
    block_radius: u64,
) -> Result<SiteField> {
    SiteField::try_from_fn(BoxSites::new(env.dim(), block_radius), Provenance::Good { n, m, delta }, |v| {
        good_site_indicator(env, v, n, m, delta, mu_hat)
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarginalRow {
    pub n: u64,
    pub replicas: u64,
    pub ones: u64,
    pub phat: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarginalCurve {
    pub seed: SeedSpec,
    pub replicas: ReplicaRange,
    pub rows: Vec<MarginalRow>,
}

impl MarginalCurve {
    pub fn non_decreasing_within_ci(&self) -> bool {
        self.rows.windows(2).all(|w| w[1].phat >= w[0].phat || (w[0].ci_lo <= w[1].ci_hi && w[1].ci_lo <= w[0].ci_hi))
    }
}

/// Monte Carlo P(indicator = 1) per N; the indicator sees (N, replica).
pub fn marginal_curve<F>(
    indicator: F,
    n_ladder: &[u64],
    range: ReplicaRange,
    seed: &SeedSpec,
    threads: Option<usize>,
) -> Result<MarginalCurve>
where
    F: Fn(u64, u64) -> Result<bool> + Sync + Send,
{
    let mut rows = Vec::with_capacity(n_ladder.len());
    for &n in n_ladder {
        let bits = replicate(range, threads, |r| indicator(n, r))?;
        let ones = bits.iter().filter(|&&b| b).count() as u64;
        let (ci_lo, ci_hi) = wilson_interval(ones, range.count);
        rows.push(MarginalRow { n, replicas: range.count, ones, phat: ones as f64 / range.count as f64, ci_lo, ci_hi });
    }
    Ok(MarginalCurve { seed: seed.clone(), replicas: range, rows })
}

/// Marginal of "0 is white" under `law`.
pub fn white_marginal_curve(
    law: &ConfigLaw,
    dim: usize,
    n_ladder: &[u64],
    range: ReplicaRange,
    seed: &SeedSpec,
    threads: Option<usize>,
) -> Result<MarginalCurve> {
    let origin = Point::origin(dim);
    marginal_curve(
        |n, r| {
            let env = replica_env(law, dim, white_dependence_radius(n, dim) + 1, seed, r, false)?;
            white_site_indicator(&env, &origin, n)
        },
        n_ladder,
        range,
        seed,
        threads,
    )
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HoleTailRow {
    pub t: u64,
    /// Replicas with hole radius ≥ t.
    pub hits: u64,
    pub phat: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HoleTailReport {
    pub p: f64,
    pub dim: usize,
    pub box_radius: u64,
    pub replicas: ReplicaRange,
    pub radii: Vec<u64>,
    pub rows: Vec<HoleTailRow>,
    /// Slope of log P(hole ≥ t) against t over t ≥ 1 with hits.
    pub fitted_log_slope: Option<f64>,
}

pub fn hole_tail_experiment(
    p: f64,
    dim: usize,
    box_radius: u64,
    range: ReplicaRange,
    seed: &SeedSpec,
    threads: Option<usize>,
) -> Result<HoleTailReport> {
    let geometry = BoxSites::new(dim, box_radius);
    check_field_params(p, dim)?;
    let radii = replicate(range, threads, |r| {
        let f = bernoulli_on(geometry.clone(), p, &seed.with_replica(r));
        hole_radius(&f, &label_clusters(&f))
    })?;
    let top = radii.iter().copied().max().unwrap_or(0);
    let mut rows = Vec::new();
    for t in 0..=top {
        let hits = radii.iter().filter(|&&h| h >= t).count() as u64;
        let (ci_lo, ci_hi) = wilson_interval(hits, range.count);
        rows.push(HoleTailRow { t, hits, phat: hits as f64 / range.count as f64, ci_lo, ci_hi });
    }
    let fit: Vec<&HoleTailRow> = rows.iter().filter(|r| r.t >= 1 && r.hits > 0).collect();
    let xs: Vec<f64> = fit.iter().map(|r| r.t as f64).collect();
    let ys: Vec<f64> = fit.iter().map(|r| r.phat.ln()).collect();
    Ok(HoleTailReport {
        p,
        dim,
        box_radius,
        replicas: range,
        radii,
        rows,
        fitted_log_slope: fit_line(&xs, &ys).map(|f| f.slope),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChemicalRow {
    pub norm: u64,
    pub pairs: u64,
    pub connected: u64,
    pub mean_ratio: f64,
    pub max_ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChemicalReport {
    pub p: f64,
    pub box_radius: u64,
    /// Boundary margin kept free of endpoints.
    pub margin: u64,
    pub replicas: ReplicaRange,
    pub rows: Vec<ChemicalRow>,
    pub max_ratio: f64,
    /// Finite chemical distances below the l1 distance (must be none).
    pub bound_violations: u64,
}

/// d(0, v)/‖v‖₁ for `per_norm` uniform points v of each l1 sphere, on pairs
/// connected inside the field.
#[allow(clippy::too_many_arguments)]
pub fn chemical_ratio_experiment(
    p: f64,
    dim: usize,
    box_radius: u64,
    norms: &[u64],
    per_norm: u64,
    range: ReplicaRange,
    seed: &SeedSpec,
    threads: Option<usize>,
) -> Result<ChemicalReport> {
    let margin = box_radius / 10;
    if let Some(&bad) = norms.iter().find(|&&n| n == 0 || n + margin > box_radius) {
        return Err(FrogError::InvalidParameter {
            name: "norms",
            reason: format!("{bad} must be positive and at most box_radius − margin = {}", box_radius - margin),
        });
    }
    check_field_params(p, dim)?;
    let geometry = BoxSites::new(dim, box_radius);
    let spheres: Vec<Vec<Point>> = norms.iter().map(|&n| l1_sphere(&Point::origin(dim), n)).collect();
    let origin = Point::origin(dim);
    let reps = replicate(range, threads, |r| {
        let s = seed.with_replica(r);
        let f = bernoulli_on(geometry.clone(), p, &s);
        let dist = chemical_distances_from(&f, &origin);
        let mut stream = KeyedStream::new(s.root(DOMAIN_STAT));
        let mut out = Vec::with_capacity(norms.len());
        for sphere in &spheres {
            let mut found = Vec::new();
            for _ in 0..per_norm {
                let v = sphere[stream.below(sphere.len() as u64) as usize];
                found.push(dist.get(&v).map(|&d| (d, v.l1_norm())));
            }
            out.push(found);
        }
        Ok(out)
    })?;
    let mut rows = Vec::new();
    let mut bound_violations = 0;
    for (i, &n) in norms.iter().enumerate() {
        let ratios: Vec<f64> = reps
            .iter()
            .flat_map(|rep| rep[i].iter().flatten())
            .map(|&(d, l1)| {
                bound_violations += (d < l1) as u64;
                d as f64 / l1 as f64
            })
            .collect();
        rows.push(ChemicalRow {
            norm: n,
            pairs: range.count * per_norm,
            connected: ratios.len() as u64,
            mean_ratio: if ratios.is_empty() { f64::NAN } else { ratios.iter().sum::<f64>() / ratios.len() as f64 },
            max_ratio: ratios.iter().copied().fold(f64::NAN, f64::max),
        });
    }
    let max_ratio = rows.iter().map(|r| r.max_ratio).fold(f64::NAN, f64::max);
    Ok(ChemicalReport { p, box_radius, margin, replicas: range, rows, max_ratio, bound_violations })
}
