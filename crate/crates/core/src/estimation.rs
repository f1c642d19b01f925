//! Replicated statistics over independent environments.
//!
//! Replica `r` of an experiment lives on `seed.with_replica(r)`; replicas are
//! fanned out over a worker pool but results are always gathered in replica
//! order, so every output is a pure function of (law, parameters, seed) and
//! does not depend on the thread count.
//!
//! Tail probabilities are taken under the origin-conditioned measure P̂.
//! Time-constant and concentration runs use the unconditioned measure and
//! the starred passage time T*.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::environment::{ConfigLaw, Environment};
use crate::error::{FrogError, Result};
use crate::keyed::{KeyedStream, SeedSpec, DOMAIN_STAT};
use crate::lattice::Point;
use crate::passage::{passage_times_from, passage_times_star, BoxPolicy, HittingTime};
use crate::walks::direction;

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.959963984540054;

/// Default tolerated fraction of censored replicas per point.
pub const DEFAULT_CENSORING_BUDGET: f64 = 0.05;

/// Half-open block of replica indices `start..start + count`.
///
/// Calibration and test runs take disjoint blocks of one master seed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplicaRange {
    pub start: u64,
    pub count: u64,
}

impl ReplicaRange {
    pub fn new(start: u64, count: u64) -> Self {
        ReplicaRange { start, count }
    }

    pub fn first(count: u64) -> Self {
        ReplicaRange { start: 0, count }
    }

    pub fn end(&self) -> u64 {
        self.start + self.count
    }

    pub fn is_disjoint(&self, other: &ReplicaRange) -> bool {
        self.end() <= other.start || other.end() <= self.start
    }

    /// The block of `count` indices right after this one.
    pub fn next(&self, count: u64) -> Self {
        ReplicaRange { start: self.end(), count }
    }
}

/// Runs `f` on every replica index of `range`, results in index order.
///
/// With `threads = Some(n)` a dedicated pool of n workers is used; with
/// `None` the global rayon pool. Errors are reported for the lowest failing
/// index so that failures are as reproducible as successes.
pub fn replicate<T, F>(range: ReplicaRange, threads: Option<usize>, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(u64) -> Result<T> + Sync + Send,
{
    let run = || -> Vec<Result<T>> { (range.start..range.end()).into_par_iter().map(&f).collect() };
    let out = match threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| FrogError::InvalidParameter { name: "threads", reason: e.to_string() })?
            .install(run),
        None => run(),
    };
    out.into_iter().collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryStats {
    /// Uncensored samples entering mean and std.
    pub n: u64,
    pub mean: f64,
    pub std: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub censored_count: u64,
}

impl SummaryStats {
    /// Sample mean, sample std (n − 1), 95% normal interval for the mean.
    pub fn from_samples(values: &[f64], censored_count: u64) -> Self {
        let n = values.len();
        if n == 0 {
            return SummaryStats { n: 0, mean: f64::NAN, std: f64::NAN, ci_lo: f64::NAN, ci_hi: f64::NAN, censored_count };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let std = sample_std(values, mean);
        let half = if n > 1 { Z95 * std / (n as f64).sqrt() } else { f64::INFINITY };
        SummaryStats { n: n as u64, mean, std, ci_lo: mean - half, ci_hi: mean + half, censored_count }
    }

    pub fn censoring_rate(&self) -> f64 {
        let total = self.n + self.censored_count;
        if total == 0 {
            0.0
        } else {
            self.censored_count as f64 / total as f64
        }
    }

    pub fn overlaps(&self, other: &SummaryStats) -> bool {
        self.ci_lo <= other.ci_hi && other.ci_lo <= self.ci_hi
    }
}

fn sample_std(values: &[f64], mean: f64) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let ss: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
    (ss / (values.len() - 1) as f64).sqrt()
}

/// Wilson 95% interval for a binomial proportion.
pub fn wilson_interval(hits: u64, n: u64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let n = n as f64;
    let p = hits as f64 / n;
    let z2 = Z95 * Z95;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = Z95 * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    if hits == 0 {
        return (0.0, (center + half).min(1.0));
    }
    ((center - half).max(0.0), (center + half).min(1.0))
}

/// Least-squares line through (x, y).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    /// Residual sum of squares.
    pub rss: f64,
    pub points: usize,
}

pub fn fit_line(xs: &[f64], ys: &[f64]) -> Option<LineFit> {
    let n = xs.len();
    if n < 2 || ys.len() != n {
        return None;
    }
    let mx = xs.iter().sum::<f64>() / n as f64;
    let my = ys.iter().sum::<f64>() / n as f64;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss = xs.iter().zip(ys).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
    Some(LineFit { slope, intercept, rss, points: n })
}

/// Where passage horizons come from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum HorizonPolicy {
    Fixed { horizon: u64 },
    /// max(floor, ⌈factor · mu · ‖x‖₁⌉).
    Scaled { factor: f64, mu: f64, floor: u64 },
}

impl Default for HorizonPolicy {
    fn default() -> Self {
        HorizonPolicy::Scaled { factor: 3.0, mu: 2.0, floor: 16 }
    }
}

impl HorizonPolicy {
    pub fn with_mu(mu: f64) -> Self {
        HorizonPolicy::Scaled { factor: 3.0, mu, floor: 16 }
    }

    pub fn horizon(&self, norm: u64) -> u64 {
        match *self {
            HorizonPolicy::Fixed { horizon } => horizon,
            HorizonPolicy::Scaled { factor, mu, floor } => ((factor * mu * norm as f64).ceil() as u64).max(floor),
        }
    }

    fn validated(self) -> Result<Self> {
        match self {
            HorizonPolicy::Fixed { horizon: 0 } => {
                Err(FrogError::InvalidParameter { name: "horizon", reason: "must be positive".into() })
            }
            HorizonPolicy::Scaled { factor, mu, .. } if !(factor > 0.0 && mu > 0.0 && factor.is_finite() && mu.is_finite()) => {
                Err(FrogError::InvalidParameter {
                    name: "horizon",
                    reason: format!("scale factor {factor} and mu {mu} must be positive"),
                })
            }
            p => Ok(p),
        }
    }
}

/// Box radius under which a run of `horizon` steps from any source within
/// `reach` of the origin is exact. Environments are lazy, so a generous
/// radius costs nothing.
pub fn exact_radius(horizon: u64, reach: u64) -> u64 {
    2 * (horizon + reach) + 64
}

/// Environment of replica `r`.
pub fn replica_env(law: &ConfigLaw, dim: usize, radius: u64, seed: &SeedSpec, r: u64, conditioned: bool) -> Result<Environment> {
    let env = Environment::sample(law.clone(), dim, radius, seed.with_replica(r))?;
    Ok(if conditioned { env.conditioned() } else { env })
}

fn check_budget(label: String, censored: u64, total: u64, budget: f64, horizon: u64) -> Result<()> {
    if total == 0 {
        return Ok(());
    }
    let rate = censored as f64 / total as f64;
    if rate > budget {
        return Err(FrogError::CensoringBudget { label, rate, budget, horizon });
    }
    Ok(())
}

fn check_ladder(name: &'static str, ladder: &[u64]) -> Result<()> {
    if ladder.is_empty() || ladder.contains(&0) || ladder.windows(2).any(|w| w[0] >= w[1]) {
        return Err(FrogError::InvalidParameter {
            name,
            reason: format!("{ladder:?} must be a nonempty strictly increasing list of positive integers"),
        });
    }
    Ok(())
}

fn check_replicas(range: &ReplicaRange) -> Result<()> {
    if range.count == 0 {
        return Err(FrogError::InvalidParameter { name: "replicas", reason: "at least one replica is needed".into() });
    }
    Ok(())
}

/// Shared knobs of the replicated experiments.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub horizon: HorizonPolicy,
    pub censoring_budget: f64,
    #[serde(skip)]
    pub threads: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig { horizon: HorizonPolicy::default(), censoring_budget: DEFAULT_CENSORING_BUDGET, threads: None }
    }
}

impl RunConfig {
    pub fn with_horizon(horizon: HorizonPolicy) -> Self {
        RunConfig { horizon, ..Default::default() }
    }

    pub fn threads(mut self, threads: Option<usize>) -> Self {
        self.threads = threads;
        self
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KPoint {
    pub k: u64,
    pub horizon: u64,
    /// T*(0, k·direction)/k over uncensored replicas.
    pub stats: SummaryStats,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeConstantEstimate {
    pub direction: Point,
    pub k_ladder: Vec<u64>,
    pub replicas: ReplicaRange,
    pub per_k: Vec<KPoint>,
    /// Minimum over k of the upper confidence limits.
    pub mu_hat: f64,
    /// ‖direction‖₁, the lower end of ‖x‖₁ ≤ μ(x).
    pub mu_lower: f64,
    /// Replicas with 0* = 0 and (k·direction)* = k·direction, and how many
    /// of them gave T(0, kx)/k below ‖direction‖₁ (must be none).
    pub occupied_subensemble: u64,
    pub occupied_below_lower: u64,
    /// Finite T* values below ‖x* − 0*‖₁ (must be none).
    pub bound_violations: u64,
}

impl TimeConstantEstimate {
    /// Per-k means non-increasing in k up to overlapping 95% intervals.
    pub fn non_increasing_within_ci(&self) -> bool {
        self.per_k.windows(2).all(|w| w[1].stats.mean <= w[0].stats.mean || w[0].stats.overlaps(&w[1].stats))
    }
}

/// μ̂ along `direction` from T*(0, k·direction)/k on replicas of `range`.
pub fn estimate_time_constant(
    law: &ConfigLaw,
    direction: &Point,
    k_ladder: &[u64],
    range: ReplicaRange,
    seed: &SeedSpec,
    cfg: &RunConfig,
) -> Result<TimeConstantEstimate> {
    check_ladder("k", k_ladder)?;
    check_replicas(&range)?;
    if direction.is_zero() {
        return Err(FrogError::InvalidParameter { name: "direction", reason: "must be nonzero".into() });
    }
    let horizon_policy = cfg.horizon.clone().validated()?;
    let dim = direction.dim();
    let targets: Vec<Point> = k_ladder.iter().map(|&k| k as i32 * *direction).collect();
    let horizons: Vec<u64> = targets.iter().map(|x| horizon_policy.horizon(x.l1_norm())).collect();
    let hmax = *horizons.iter().max().unwrap();
    let reach = targets.iter().map(|x| x.l1_norm()).max().unwrap();
    let radius = exact_radius(hmax, reach);

    struct Rep {
        values: Vec<HittingTime>,
        occupied: bool,
        below: bool,
        violations: u64,
    }
    let reps = replicate(range, cfg.threads, |r| {
        let env = replica_env(law, dim, radius, seed, r, false)?;
        let values = passage_times_star(&env, &targets, hmax)?;
        let s = env.star(&Point::origin(dim), None)?;
        let mut violations = 0;
        let mut occupied = s.is_zero();
        let mut below = false;
        for (i, x) in targets.iter().enumerate() {
            let xs = env.star(x, None)?;
            occupied &= xs == *x;
            if let HittingTime::Finite(v) = values[i] {
                if v < s.l1_dist(&xs) {
                    violations += 1;
                }
                if (v as f64) / (k_ladder[i] as f64) < direction.l1_norm() as f64 {
                    below = true;
                }
            }
        }
        Ok(Rep { values, occupied, below: occupied && below, violations })
    })?;

    let mut per_k = Vec::with_capacity(k_ladder.len());
    for (i, &k) in k_ladder.iter().enumerate() {
        // a per-target horizon keeps every point on its own policy even
        // though the run went to the largest one
        let h = horizons[i];
        let mut vals = Vec::new();
        let mut censored = 0;
        for rep in &reps {
            match rep.values[i] {
                HittingTime::Finite(v) if v <= h => vals.push(v as f64 / k as f64),
                _ => censored += 1,
            }
        }
        check_budget(format!("k={k}"), censored, range.count, cfg.censoring_budget, h)?;
        per_k.push(KPoint { k, horizon: h, stats: SummaryStats::from_samples(&vals, censored) });
    }
    let mu_hat = per_k.iter().map(|p| p.stats.ci_hi).fold(f64::INFINITY, f64::min);
    Ok(TimeConstantEstimate {
        direction: *direction,
        k_ladder: k_ladder.to_vec(),
        replicas: range,
        per_k,
        mu_hat,
        mu_lower: direction.l1_norm() as f64,
        occupied_subensemble: reps.iter().filter(|r| r.occupied).count() as u64,
        occupied_below_lower: reps.iter().filter(|r| r.below).count() as u64,
        bound_violations: reps.iter().map(|r| r.violations).sum(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TailSide {
    Upper,
    Lower,
}

impl std::str::FromStr for TailSide {
    type Err = FrogError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "upper" => Ok(TailSide::Upper),
            "lower" => Ok(TailSide::Lower),
            _ => Err(FrogError::InvalidParameter { name: "side", reason: format!("`{s}` is not one of upper, lower") }),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailPoint {
    pub norm: u64,
    pub target: Point,
    /// Passage threshold (1 ± ε) μ̂ ‖x‖₁ in time steps.
    pub threshold: f64,
    pub replicas: u64,
    pub hits: u64,
    pub phat: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlphaFit {
    pub alpha: f64,
    pub slope: f64,
    pub rss: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailCurve {
    pub side: TailSide,
    pub epsilon: f64,
    pub mu_hat: f64,
    pub points: Vec<TailPoint>,
    /// Norms whose point had no hit; they are kept out of the fits.
    pub censored_norms: Vec<u64>,
    /// Slope of log p̂ against ‖x‖₁.
    pub fitted_log_slope: Option<f64>,
    /// Best α of the grid for log p̂ against ‖x‖₁^α.
    pub fitted_exponent_alpha: Option<f64>,
    pub alpha_grid: Vec<AlphaFit>,
    pub bound_violations: u64,
}

/// α grid 0.1, 0.2, …, 1.0 for the stretched-exponential fits.
pub fn alpha_grid() -> Vec<f64> {
    (1..=10).map(|i| i as f64 / 10.0).collect()
}

/// Empirical P̂(T(0,x) ≥ (1+ε) μ̂ ‖x‖₁) or P̂(T(0,x) ≤ (1−ε) μ̂ ‖x‖₁).
///
/// Each run stops at the threshold, which already decides the event: an
/// upper-tail replica censored there is a hit, a lower-tail one is not.
#[allow(clippy::too_many_arguments)]
pub fn deviation_tail_experiment(
    law: &ConfigLaw,
    epsilon: f64,
    side: TailSide,
    x_ladder: &[Point],
    range: ReplicaRange,
    mu_hat: f64,
    seed: &SeedSpec,
    threads: Option<usize>,
) -> Result<TailCurve> {
    if !(epsilon >= 0.0 && epsilon.is_finite()) || (side == TailSide::Lower && epsilon >= 1.0) {
        return Err(FrogError::InvalidParameter {
            name: "epsilon",
            reason: format!("{epsilon} must lie in [0, ∞) for the upper tail and [0, 1) for the lower tail"),
        });
    }
    if !(mu_hat > 0.0 && mu_hat.is_finite()) {
        return Err(FrogError::InvalidParameter { name: "mu_hat", reason: format!("{mu_hat} must be positive") });
    }
    check_replicas(&range)?;
    let norms: Vec<u64> = x_ladder.iter().map(|x| x.l1_norm()).collect();
    check_ladder("x", &norms)?;
    let dim = x_ladder[0].dim();
    let factor = match side {
        TailSide::Upper => 1.0 + epsilon,
        TailSide::Lower => 1.0 - epsilon,
    };
    let thresholds: Vec<f64> = norms.iter().map(|&n| factor * mu_hat * n as f64).collect();
    let horizon = thresholds.iter().fold(0.0f64, |a, &b| a.max(b)).ceil() as u64 + 1;
    let reach = *norms.last().unwrap();
    let radius = exact_radius(horizon, reach);
    let origin = Point::origin(dim);

    let reps = replicate(range, threads, |r| {
        let env = replica_env(law, dim, radius, seed, r, true)?;
        passage_times_from(&env, &origin, x_ladder, horizon, BoxPolicy::Exact)
    })?;

    let mut points = Vec::new();
    let mut bound_violations = 0;
    for (i, x) in x_ladder.iter().enumerate() {
        let mut hits = 0;
        for rep in &reps {
            let hit = match (side, rep[i]) {
                (_, HittingTime::Finite(v)) if v < norms[i] => {
                    bound_violations += 1;
                    side == TailSide::Lower
                }
                (TailSide::Upper, HittingTime::Finite(v)) => v as f64 >= thresholds[i],
                (TailSide::Upper, HittingTime::Censored(_)) => true,
                (TailSide::Lower, HittingTime::Finite(v)) => v as f64 <= thresholds[i],
                (TailSide::Lower, HittingTime::Censored(_)) => false,
            };
            hits += hit as u64;
        }
        let (ci_lo, ci_hi) = wilson_interval(hits, range.count);
        points.push(TailPoint {
            norm: norms[i],
            target: *x,
            threshold: thresholds[i],
            replicas: range.count,
            hits,
            phat: hits as f64 / range.count as f64,
            ci_lo,
            ci_hi,
        });
    }
    let (fitted_log_slope, fitted_exponent_alpha, grid) = tail_fits(&points);
    Ok(TailCurve {
        side,
        epsilon,
        mu_hat,
        censored_norms: points.iter().filter(|p| p.hits == 0).map(|p| p.norm).collect(),
        points,
        fitted_log_slope,
        fitted_exponent_alpha,
        alpha_grid: grid,
        bound_violations,
    })
}

fn tail_fits(points: &[TailPoint]) -> (Option<f64>, Option<f64>, Vec<AlphaFit>) {
    let usable: Vec<&TailPoint> = points.iter().filter(|p| p.hits > 0).collect();
    let ys: Vec<f64> = usable.iter().map(|p| p.phat.ln()).collect();
    let xs: Vec<f64> = usable.iter().map(|p| p.norm as f64).collect();
    let slope = fit_line(&xs, &ys).map(|f| f.slope);
    let mut grid = Vec::new();
    for a in alpha_grid() {
        let xa: Vec<f64> = xs.iter().map(|x| x.powf(a)).collect();
        if let Some(f) = fit_line(&xa, &ys) {
            grid.push(AlphaFit { alpha: a, slope: f.slope, rss: f.rss });
        }
    }
    // first minimum wins, so ties go to the smaller α
    let best = grid.iter().fold(None::<&AlphaFit>, |b, g| match b {
        Some(b) if b.rss <= g.rss => Some(b),
        _ => Some(g),
    });
    (slope, best.map(|b| b.alpha), grid)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConcentrationRow {
    pub norm: u64,
    pub target: Point,
    pub horizon: u64,
    pub n: u64,
    pub censored: u64,
    pub mean: f64,
    pub std: f64,
    pub std_ci_lo: f64,
    pub std_ci_hi: f64,
    /// std / √‖x‖₁.
    pub ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConcentrationReport {
    pub replicas: ReplicaRange,
    pub bootstrap_resamples: u64,
    pub rows: Vec<ConcentrationRow>,
    /// Slope of log std against log ‖x‖₁.
    pub fitted_slope: Option<f64>,
    pub bound_violations: u64,
}

pub const DEFAULT_BOOTSTRAP: u64 = 400;

/// Sample std of T*(0, x) per x, with percentile-bootstrap intervals.
pub fn concentration_experiment(
    law: &ConfigLaw,
    x_ladder: &[Point],
    range: ReplicaRange,
    seed: &SeedSpec,
    cfg: &RunConfig,
    bootstrap_resamples: u64,
) -> Result<ConcentrationReport> {
    law.mean()?;
    check_replicas(&range)?;
    let norms: Vec<u64> = x_ladder.iter().map(|x| x.l1_norm()).collect();
    check_ladder("x", &norms)?;
    let horizon_policy = cfg.horizon.clone().validated()?;
    let dim = x_ladder[0].dim();
    let horizons: Vec<u64> = norms.iter().map(|&n| horizon_policy.horizon(n)).collect();
    let hmax = *horizons.iter().max().unwrap();
    let radius = exact_radius(hmax, *norms.last().unwrap());

    let reps = replicate(range, cfg.threads, |r| {
        let env = replica_env(law, dim, radius, seed, r, false)?;
        let values = passage_times_star(&env, x_ladder, hmax)?;
        let s = env.star(&Point::origin(dim), None)?;
        let mut violations = 0u64;
        for (x, v) in x_ladder.iter().zip(&values) {
            if let HittingTime::Finite(v) = v {
                violations += (*v < s.l1_dist(&env.star(x, None)?)) as u64;
            }
        }
        Ok((values, violations))
    })?;

    let stat_root = seed.root(DOMAIN_STAT);
    let mut rows = Vec::new();
    for (i, x) in x_ladder.iter().enumerate() {
        let h = horizons[i];
        let vals: Vec<f64> = reps
            .iter()
            .filter_map(|(v, _)| match v[i] {
                HittingTime::Finite(t) if t <= h => Some(t as f64),
                _ => None,
            })
            .collect();
        let censored = range.count - vals.len() as u64;
        check_budget(format!("x={x}"), censored, range.count, cfg.censoring_budget, h)?;
        let s = SummaryStats::from_samples(&vals, censored);
        let mut stream = KeyedStream::new(crate::keyed::absorb(stat_root, i as u64));
        let (lo, hi) = bootstrap_std_interval(&vals, bootstrap_resamples, &mut stream);
        rows.push(ConcentrationRow {
            norm: norms[i],
            target: *x,
            horizon: h,
            n: s.n,
            censored,
            mean: s.mean,
            std: s.std,
            std_ci_lo: lo,
            std_ci_hi: hi,
            ratio: s.std / (norms[i] as f64).sqrt(),
        });
    }
    let fit_rows: Vec<&ConcentrationRow> = rows.iter().filter(|r| r.std > 0.0).collect();
    let lx: Vec<f64> = fit_rows.iter().map(|r| (r.norm as f64).ln()).collect();
    let ly: Vec<f64> = fit_rows.iter().map(|r| r.std.ln()).collect();
    Ok(ConcentrationReport {
        replicas: range,
        bootstrap_resamples,
        fitted_slope: fit_line(&lx, &ly).map(|f| f.slope),
        rows,
        bound_violations: reps.iter().map(|(_, v)| v).sum(),
    })
}

/// Percentile bootstrap 95% interval of the sample std.
pub fn bootstrap_std_interval(values: &[f64], resamples: u64, stream: &mut KeyedStream) -> (f64, f64) {
    let n = values.len();
    if n < 2 || resamples == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mut stds: Vec<f64> = (0..resamples)
        .map(|_| {
            let sample: Vec<f64> = (0..n).map(|_| values[stream.below(n as u64) as usize]).collect();
            let m = sample.iter().sum::<f64>() / n as f64;
            sample_std(&sample, m)
        })
        .collect();
    stds.sort_by(f64::total_cmp);
    let at = |q: f64| stds[((q * (resamples - 1) as f64).round() as usize).min(stds.len() - 1)];
    (at(0.025), at(0.975))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnalyticBounds {
    /// −E[ω(0)] ⌈(1+ε) μ̂(ξ1)⌉ log(2d), per unit ‖x‖₁.
    pub upper_tail_rate_lb: f64,
    /// −log(2d), per unit ‖x‖₁.
    pub lower_tail_rate_lb: f64,
}

pub fn analytic_lower_bounds(law: &ConfigLaw, epsilon: f64, mu_hat_xi1: f64, d: usize) -> Result<AnalyticBounds> {
    let mean = law.mean()?;
    if !mean.is_finite() {
        return Err(FrogError::InfiniteMean);
    }
    let log2d = ((2 * d) as f64).ln();
    Ok(AnalyticBounds {
        upper_tail_rate_lb: -mean * ((1.0 + epsilon) * mu_hat_xi1).ceil() * log2d,
        lower_tail_rate_lb: -log2d,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DirectPathCheck {
    pub d: usize,
    pub n: u64,
    pub trials: u64,
    pub hits: u64,
    pub stats: SummaryStats,
    /// (2d)^{−n}.
    pub target: f64,
    /// Binomial standard deviation of the frequency under the target.
    pub sigma: f64,
}

impl DirectPathCheck {
    pub fn within_sigmas(&self, k: f64) -> bool {
        (self.stats.mean - self.target).abs() <= k * self.sigma
    }
}

/// Frequency with which frog 1 at the origin walks the straight path
/// 0, ξ1, 2ξ1, …, nξ1 in its first n steps.
pub fn direct_path_event_check(d: usize, n: u64, trials: u64, seed: &SeedSpec) -> Result<DirectPathCheck> {
    if !(1..=crate::lattice::MAX_DIM).contains(&d) {
        return Err(FrogError::Dimension { dim: d, max: crate::lattice::MAX_DIM });
    }
    if trials == 0 {
        return Err(FrogError::InvalidParameter { name: "trials", reason: "at least one trial is needed".into() });
    }
    let origin = Point::origin(d);
    let mut hits = 0u64;
    for r in 0..trials {
        let key = seed.with_replica(r).walk_key(&origin, 1);
        // code 0 is +ξ1
        hits += (0..n).all(|k| direction(key, k, d) == 0) as u64;
    }
    let samples: Vec<f64> = (0..trials).map(|i| (i < hits) as u64 as f64).collect();
    let target = ((2 * d) as f64).powi(-(n as i32));
    Ok(DirectPathCheck {
        d,
        n,
        trials,
        hits,
        stats: SummaryStats::from_samples(&samples, 0),
        target,
        sigma: (target * (1.0 - target) / trials as f64).sqrt(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubadditivityReport {
    pub triples: u64,
    /// Triples with T(x,y), T(y,z), T(x,z) all finite.
    pub checked: u64,
    pub violations: u64,
    pub checked_star: u64,
    pub violations_star: u64,
    /// Finite T(u, v) below ‖u − v‖₁ (must be none).
    pub bound_violations: u64,
}

/// T(u, v) with the conventions T(u, u) = 0 and T(u, v) = ∞ for ω(u) = 0.
fn relay_time(env: &Environment, u: &Point, v: &Point, horizon: u64) -> Result<HittingTime> {
    if u == v {
        return Ok(HittingTime::Finite(0));
    }
    if !env.is_occupied(u) {
        return Ok(HittingTime::Censored(horizon));
    }
    Ok(passage_times_from(env, u, &[*v], horizon, BoxPolicy::Exact)?[0])
}

/// Per-replica check of T(x,z) ≤ T(x,y) + T(y,z) and of the T* analogue on
/// one random triple per replica drawn from B∞(0, spread).
pub fn subadditivity_audit(
    law: &ConfigLaw,
    dim: usize,
    spread: u64,
    range: ReplicaRange,
    horizon: u64,
    seed: &SeedSpec,
    threads: Option<usize>,
) -> Result<SubadditivityReport> {
    check_replicas(&range)?;
    let radius = exact_radius(horizon, dim as u64 * spread + 16);
    let reps = replicate(range, threads, |r| {
        let env = replica_env(law, dim, radius, seed, r, false)?;
        let mut stream = KeyedStream::new(seed.with_replica(r).root(DOMAIN_STAT));
        let mut pick = || {
            let c: Vec<i32> = (0..dim).map(|_| stream.below(2 * spread + 1) as i32 - spread as i32).collect();
            Point::new(&c)
        };
        let (x, y, z) = (pick(), pick(), pick());
        let mut bound = 0u64;
        let mut eval = |u: &Point, v: &Point| -> Result<Option<u64>> {
            let t = relay_time(&env, u, v, horizon)?;
            if let HittingTime::Finite(k) = t {
                bound += (k < u.l1_dist(v)) as u64;
            }
            Ok(t.finite())
        };
        let plain = (eval(&x, &y)?, eval(&y, &z)?, eval(&x, &z)?);
        let (xs, ys, zs) = (env.star(&x, None)?, env.star(&y, None)?, env.star(&z, None)?);
        let star = (eval(&xs, &ys)?, eval(&ys, &zs)?, eval(&xs, &zs)?);
        Ok((plain, star, bound))
    })?;
    let mut report = SubadditivityReport {
        triples: range.count,
        checked: 0,
        violations: 0,
        checked_star: 0,
        violations_star: 0,
        bound_violations: 0,
    };
    for (plain, star, bound) in reps {
        report.bound_violations += bound;
        if let (Some(a), Some(b), Some(c)) = plain {
            report.checked += 1;
            report.violations += (c > a + b) as u64;
        }
        if let (Some(a), Some(b), Some(c)) = star {
            report.checked_star += 1;
            report.violations_star += (c > a + b) as u64;
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seed(tag: &str) -> SeedSpec {
        SeedSpec::new(77, tag)
    }

    #[test]
    fn summary_stats_by_hand() {
        let s = SummaryStats::from_samples(&[1.0, 2.0, 3.0, 4.0], 1);
        assert_eq!(s.n, 4);
        assert_eq!(s.mean, 2.5);
        let std = (5.0f64 / 3.0).sqrt();
        assert!((s.std - std).abs() < 1e-12);
        assert!((s.ci_hi - (2.5 + Z95 * std / 2.0)).abs() < 1e-12);
        assert!((s.censoring_rate() - 0.2).abs() < 1e-12);
    }

    #[test]
    fn wilson_bounds() {
        let (lo, hi) = wilson_interval(0, 100);
        assert_eq!(lo, 0.0);
        assert!(hi > 0.0 && hi < 0.05);
        let (lo, hi) = wilson_interval(50, 100);
        assert!(lo < 0.5 && hi > 0.5 && (0.5 - lo - (hi - 0.5)).abs() < 1e-12);
    }

    #[test]
    fn line_fit_recovers_line() {
        let xs = [1.0, 2.0, 3.0, 5.0];
        let ys: Vec<f64> = xs.iter().map(|x| -0.3 * x + 2.0).collect();
        let f = fit_line(&xs, &ys).unwrap();
        assert!((f.slope + 0.3).abs() < 1e-12 && (f.intercept - 2.0).abs() < 1e-12 && f.rss < 1e-20);
        assert!(fit_line(&[1.0], &[1.0]).is_none());
        assert!(fit_line(&[2.0, 2.0], &[1.0, 3.0]).is_none());
    }

    #[test]
    fn replica_order_is_thread_independent() {
        let f = |r: u64| Ok(crate::keyed::draw(r, r));
        let a = replicate(ReplicaRange::new(5, 64), Some(1), f).unwrap();
        let b = replicate(ReplicaRange::new(5, 64), Some(3), f).unwrap();
        assert_eq!(a, b);
        assert_eq!(a[0], crate::keyed::draw(5, 5));
        let e = replicate(ReplicaRange::first(10), Some(2), |r| {
            if r >= 4 { Err(FrogError::InvalidParameter { name: "r", reason: r.to_string() }) } else { Ok(r) }
        });
        assert!(matches!(e, Err(FrogError::InvalidParameter { reason, .. }) if reason == "4"));
    }

    #[test]
    fn replica_ranges() {
        let cal = ReplicaRange::first(100);
        let test = cal.next(50);
        assert_eq!(test, ReplicaRange::new(100, 50));
        assert!(cal.is_disjoint(&test));
        assert!(!cal.is_disjoint(&ReplicaRange::new(99, 2)));
    }

    #[test]
    fn analytic_bounds() {
        let b = analytic_lower_bounds(&ConfigLaw::Constant { k: 1 }, 0.5, 2.0, 2).unwrap();
        assert_eq!(b.lower_tail_rate_lb, -(4.0f64).ln());
        assert!((b.lower_tail_rate_lb + 1.3863).abs() < 1e-4);
        assert_eq!(b.upper_tail_rate_lb, -3.0 * (4.0f64).ln());
        let b = analytic_lower_bounds(&ConfigLaw::Poisson { lambda: 2.5 }, 0.0, 1.2, 3).unwrap();
        assert!((b.upper_tail_rate_lb + 2.5 * 2.0 * (6.0f64).ln()).abs() < 1e-12);
    }

    #[test]
    fn direct_path_event() {
        let c = direct_path_event_check(2, 3, 100_000, &seed("a-prime")).unwrap();
        assert_eq!(c.target, 1.0 / 64.0);
        assert!(c.within_sigmas(3.0), "{c:?}");
        let c = direct_path_event_check(2, 0, 10, &seed("a-prime")).unwrap();
        assert_eq!(c.hits, 10);
        let c = direct_path_event_check(3, 2, 10, &seed("a-prime")).unwrap();
        assert_eq!(c.target, 1.0 / 36.0);
    }

    #[test]
    fn horizon_policy() {
        let p = HorizonPolicy::with_mu(1.5);
        assert_eq!(p.horizon(10), 45);
        assert_eq!(p.horizon(1), 16);
        assert_eq!(HorizonPolicy::Fixed { horizon: 7 }.horizon(1000), 7);
        assert!(HorizonPolicy::Fixed { horizon: 0 }.validated().is_err());
    }

    #[test]
    fn lower_tail_with_unit_mu_never_hits() {
        // T(0, x) ≥ ‖x‖₁ path by path. With μ̂ = 1 and ε = 1/6 the thresholds
        // 5‖x‖₁/6 all sit at or below ‖x‖₁ − 1 for ‖x‖₁ ≤ 6.
        let xs: Vec<Point> = [2, 4, 6].iter().map(|&k| Point::on_axis(2, k)).collect();
        let curve = deviation_tail_experiment(
            &ConfigLaw::Poisson { lambda: 1.0 },
            1.0 / 6.0,
            TailSide::Lower,
            &xs,
            ReplicaRange::first(200),
            1.0,
            &seed("lower0"),
            None,
        )
        .unwrap();
        assert!(curve.points.iter().all(|p| p.hits == 0));
        assert_eq!(curve.censored_norms, vec![2, 4, 6]);
        assert!(curve.fitted_log_slope.is_none());
        assert_eq!(curve.bound_violations, 0);
    }

    #[test]
    fn tails_reject_bad_epsilon() {
        let xs = [Point::on_axis(2, 2)];
        for (eps, side) in [(-0.5, TailSide::Upper), (1.0, TailSide::Lower), (f64::NAN, TailSide::Upper)] {
            let r = deviation_tail_experiment(&ConfigLaw::Constant { k: 1 }, eps, side, &xs, ReplicaRange::first(2), 1.5, &seed("e"), None);
            assert!(matches!(r, Err(FrogError::InvalidParameter { name: "epsilon", .. })));
        }
    }

    #[test]
    fn censoring_budget_names_horizon() {
        let r = estimate_time_constant(
            &ConfigLaw::Bernoulli { p: 0.3 },
            &Point::unit(2, 0),
            &[20],
            ReplicaRange::first(20),
            &seed("budget"),
            &RunConfig::with_horizon(HorizonPolicy::Fixed { horizon: 20 }),
        );
        assert!(matches!(r, Err(FrogError::CensoringBudget { horizon: 20, .. })), "{r:?}");
    }

    #[test]
    fn time_constant_small_run() {
        let est = estimate_time_constant(
            &ConfigLaw::Constant { k: 1 },
            &Point::unit(2, 0),
            &[2, 4, 8],
            ReplicaRange::first(60),
            &seed("mu"),
            &RunConfig::default(),
        )
        .unwrap();
        assert!(est.mu_hat >= est.mu_lower);
        assert_eq!(est.occupied_subensemble, 60);
        assert_eq!(est.occupied_below_lower, 0);
        assert_eq!(est.bound_violations, 0);
        // rerun is bit-identical
        let again = estimate_time_constant(
            &ConfigLaw::Constant { k: 1 },
            &Point::unit(2, 0),
            &[2, 4, 8],
            ReplicaRange::first(60),
            &seed("mu"),
            &RunConfig::default().threads(Some(2)),
        )
        .unwrap();
        assert_eq!(serde_json::to_string(&est).unwrap(), serde_json::to_string(&again).unwrap());
    }

    #[test]
    fn subadditivity_degenerate_and_random() {
        let rep = subadditivity_audit(&ConfigLaw::Bernoulli { p: 0.8 }, 2, 0, ReplicaRange::first(5), 20, &seed("sub0"), None).unwrap();
        // x = y = z = 0 in every replica
        assert_eq!(rep.violations + rep.violations_star, 0);
        assert_eq!(rep.checked_star, 5);
        let rep = subadditivity_audit(&ConfigLaw::Bernoulli { p: 0.8 }, 2, 6, ReplicaRange::first(60), 60, &seed("sub"), None).unwrap();
        assert_eq!(rep.violations + rep.violations_star + rep.bound_violations, 0);
        assert!(rep.checked_star > 30);
    }

    #[test]
    fn bootstrap_width_shrinks_with_sample_size() {
        let mut s = KeyedStream::new(9);
        let small: Vec<f64> = (0..400).map(|_| s.next_f64()).collect();
        let large: Vec<f64> = (0..800).map(|_| s.next_f64()).collect();
        let (a, b) = bootstrap_std_interval(&small, 800, &mut KeyedStream::new(1));
        let (c, d) = bootstrap_std_interval(&large, 800, &mut KeyedStream::new(2));
        let ratio = (d - c) / (b - a);
        // twice the data, 1/√2 of the width
        assert!((0.55..0.87).contains(&ratio), "{ratio}");
    }
}
