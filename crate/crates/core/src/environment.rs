//! Initial configurations ω on a finite ℓ1 box.
//!
//! Counts are site-keyed: ω(x) is the law's quantile at a uniform drawn
//! from the key of x, so an [`Environment`] only materializes the sites it is
//! asked about. Explicit counts (from a JSON document or a resampling) are
//! layered on top as overrides.

use rustc_hash::FxHashMap;
use serde::{Deserialize, Serialize};

use crate::error::{FrogError, Result};
use crate::keyed::{self, KeyedStream, SeedSpec, DOMAIN_CONDITION, DOMAIN_SITE, DOMAIN_WALK};
use crate::lattice::{l1_ball, l1_sphere, Point};

pub const DOCUMENT_VERSION: u32 = 1;

const PMF_TOLERANCE: f64 = 1e-12;
const MAX_POISSON_MEAN: f64 = 700.0;

/// Law of a single site's frog count on {0, 1, 2, …}.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case")]
pub enum ConfigLaw {
    Bernoulli { p: f64 },
    Poisson { lambda: f64 },
    /// P(ω = k) = q (1 − q)^k.
    Geometric { q: f64 },
    Constant { k: u32 },
    ExplicitPmf { table: Vec<f64> },
}

impl ConfigLaw {
    /// Checks the parameters and normalizes explicit tables.
    pub fn validated(self) -> Result<Self> {
        let bad = |name: &'static str, reason: String| Err(FrogError::InvalidParameter { name, reason });
        match self {
            ConfigLaw::Bernoulli { p } => {
                if !(p > 0.0 && p <= 1.0) {
                    return bad("p", format!("Bernoulli parameter {p} must lie in (0, 1]"));
                }
            }
            ConfigLaw::Poisson { lambda } => {
                if !(lambda > 0.0 && lambda <= MAX_POISSON_MEAN) {
                    return bad("lambda", format!("Poisson mean {lambda} must lie in (0, {MAX_POISSON_MEAN}]"));
                }
            }
            ConfigLaw::Geometric { q } => {
                if !(q > 0.0 && q < 1.0) {
                    return bad("q", format!("geometric parameter {q} must lie in (0, 1)"));
                }
            }
            ConfigLaw::Constant { k } => {
                if k == 0 {
                    return bad("k", "constant law at 0 puts no frogs anywhere".into());
                }
            }
            ConfigLaw::ExplicitPmf { mut table } => {
                if table.is_empty() || table.iter().any(|&w| !(w >= 0.0) || !w.is_finite()) {
                    return bad("table", "entries must be finite and nonnegative".into());
                }
                let total: f64 = table.iter().sum();
                if (total - 1.0).abs() > PMF_TOLERANCE {
                    return bad("table", format!("entries sum to {total}, not 1"));
                }
                let head: f64 = table[..table.len() - 1].iter().sum();
                let last = table.len() - 1;
                table[last] = (1.0 - head).max(0.0);
                if table[0] >= 1.0 {
                    return bad("table", "law is concentrated at 0".into());
                }
                return Ok(ConfigLaw::ExplicitPmf { table });
            }
        }
        Ok(self)
    }

    pub fn p_zero(&self) -> f64 {
        match self {
            ConfigLaw::Bernoulli { p } => 1.0 - p,
            ConfigLaw::Poisson { lambda } => (-lambda).exp(),
            ConfigLaw::Geometric { q } => *q,
            ConfigLaw::Constant { .. } => 0.0,
            ConfigLaw::ExplicitPmf { table } => table[0],
        }
    }

    pub fn mean(&self) -> Result<f64> {
        Ok(match self {
            ConfigLaw::Bernoulli { p } => *p,
            ConfigLaw::Poisson { lambda } => *lambda,
            ConfigLaw::Geometric { q } => (1.0 - q) / q,
            ConfigLaw::Constant { k } => *k as f64,
            ConfigLaw::ExplicitPmf { table } => table.iter().enumerate().map(|(k, p)| k as f64 * p).sum(),
        })
    }

    /// Generalized inverse of the CDF at `u ∈ [0, 1)`.
    pub fn quantile(&self, u: f64) -> u32 {
        match self {
            ConfigLaw::Bernoulli { p } => (u < *p) as u32,
            ConfigLaw::Constant { k } => *k,
            ConfigLaw::Geometric { q } => {
                let k = ((1.0 - u).ln() / (1.0 - q).ln()).floor();
                if k.is_finite() { k.min(u32::MAX as f64) as u32 } else { u32::MAX }
            }
            ConfigLaw::Poisson { lambda } => {
                let mut k = 0u32;
                let mut pmf = (-lambda).exp();
                let mut cdf = pmf;
                while u >= cdf {
                    k += 1;
                    pmf *= lambda / k as f64;
                    let next = cdf + pmf;
                    if next == cdf && pmf < 1e-300 {
                        break;
                    }
                    cdf = next;
                }
                k
            }
            ConfigLaw::ExplicitPmf { table } => {
                let mut cdf = 0.0;
                for (k, p) in table.iter().enumerate() {
                    cdf += p;
                    if u < cdf {
                        return k as u32;
                    }
                }
                (table.len() - 1) as u32
            }
        }
    }

    /// Quantile of the law conditioned on {ω ≥ 1}.
    pub fn conditional_quantile(&self, u: f64) -> u32 {
        let p0 = self.p_zero();
        self.quantile(p0 + u * (1.0 - p0)).max(1)
    }

    pub fn label(&self) -> String {
        match self {
            ConfigLaw::Bernoulli { p } => format!("bernoulli:{p}"),
            ConfigLaw::Poisson { lambda } => format!("poisson:{lambda}"),
            ConfigLaw::Geometric { q } => format!("geometric:{q}"),
            ConfigLaw::Constant { k } => format!("constant:{k}"),
            ConfigLaw::ExplicitPmf { table } => {
                format!("pmf:{}", table.iter().map(|p| p.to_string()).collect::<Vec<_>>().join(","))
            }
        }
    }

    /// Parses `bernoulli:0.7`, `poisson:1`, `geometric:0.5`, `constant:1`,
    /// `pmf:0.2,0.5,0.3`.
    pub fn parse(s: &str) -> Result<Self> {
        let (kind, arg) = s.split_once(':').ok_or_else(|| FrogError::InvalidParameter {
            name: "law",
            reason: format!("`{s}` is not of the form kind:parameter"),
        })?;
        let num = |a: &str| {
            a.trim().parse::<f64>().map_err(|_| FrogError::InvalidParameter {
                name: "law",
                reason: format!("`{a}` is not a number"),
            })
        };
        let law = match kind.trim().to_ascii_lowercase().as_str() {
            "bernoulli" => ConfigLaw::Bernoulli { p: num(arg)? },
            "poisson" => ConfigLaw::Poisson { lambda: num(arg)? },
            "geometric" => ConfigLaw::Geometric { q: num(arg)? },
            "constant" => {
                let k = num(arg)?;
                if k < 0.0 || k.fract() != 0.0 || k > u32::MAX as f64 {
                    return Err(FrogError::InvalidParameter { name: "k", reason: format!("{k} is not a count") });
                }
                ConfigLaw::Constant { k: k as u32 }
            }
            "pmf" => ConfigLaw::ExplicitPmf { table: arg.split(',').map(num).collect::<Result<_>>()? },
            other => {
                return Err(FrogError::InvalidParameter { name: "law", reason: format!("unknown law `{other}`") })
            }
        };
        law.validated()
    }
}

#[derive(Clone, Debug)]
pub struct Environment {
    dim: usize,
    box_radius: u64,
    law: ConfigLaw,
    seed: SeedSpec,
    conditioned_origin: bool,
    site_root: u64,
    walk_root: u64,
    /// When set, sites without an override hold zero frogs instead of a keyed draw.
    explicit: bool,
    overrides: FxHashMap<Point, u32>,
}

pub fn sample_environment(law: ConfigLaw, dim: usize, box_radius: u64, seed: SeedSpec) -> Result<Environment> {
    Environment::sample(law, dim, box_radius, seed)
}

pub fn condition_origin(env: &Environment) -> Environment {
    env.conditioned()
}

pub fn star(env: &Environment, x: &Point, search_cap: Option<u64>) -> Result<Point> {
    env.star(x, search_cap)
}

impl Environment {
    pub fn sample(law: ConfigLaw, dim: usize, box_radius: u64, seed: SeedSpec) -> Result<Self> {
        if !(1..=crate::lattice::MAX_DIM).contains(&dim) {
            return Err(FrogError::Dimension { dim, max: crate::lattice::MAX_DIM });
        }
        if box_radius > i32::MAX as u64 / 2 {
            return Err(FrogError::InvalidParameter {
                name: "box_radius",
                reason: format!("{box_radius} exceeds the coordinate range"),
            });
        }
        let law = law.validated()?;
        Ok(Environment {
            dim,
            box_radius,
            site_root: seed.root(DOMAIN_SITE),
            walk_root: seed.root(DOMAIN_WALK),
            law,
            seed,
            conditioned_origin: false,
            explicit: false,
            overrides: FxHashMap::default(),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn box_radius(&self) -> u64 {
        self.box_radius
    }

    pub fn law(&self) -> &ConfigLaw {
        &self.law
    }

    pub fn seed(&self) -> &SeedSpec {
        &self.seed
    }

    pub fn conditioned_origin(&self) -> bool {
        self.conditioned_origin
    }

    #[inline]
    pub fn contains(&self, x: &Point) -> bool {
        x.l1_norm() <= self.box_radius
    }

    /// ω(x); zero outside the box.
    #[inline]
    pub fn omega(&self, x: &Point) -> u32 {
        if !self.contains(x) {
            return 0;
        }
        if !self.overrides.is_empty() {
            if let Some(&n) = self.overrides.get(x) {
                return n;
            }
        }
        if self.explicit {
            return 0;
        }
        self.keyed_count(x)
    }

    fn keyed_count(&self, x: &Point) -> u32 {
        let u = KeyedStream::new(keyed::site_key_from_root(self.site_root, x)).next_f64();
        self.law.quantile(u)
    }

    #[inline]
    pub fn is_occupied(&self, x: &Point) -> bool {
        self.omega(x) >= 1
    }

    /// Key of the walk S(x, ℓ).
    #[inline]
    pub fn walk_key(&self, x: &Point, ell: u32) -> u64 {
        keyed::walk_key_from_root(self.walk_root, x, ell)
    }

    pub fn conditioned(&self) -> Environment {
        let mut env = self.clone();
        let origin = Point::origin(self.dim);
        if env.omega(&origin) == 0 {
            let u = KeyedStream::new(self.seed.site_key(DOMAIN_CONDITION, &origin)).next_f64();
            env.overrides.insert(origin, self.law.conditional_quantile(u));
        }
        env.conditioned_origin = true;
        env
    }

    /// Copy with ω(x) replaced by `count`.
    pub fn with_site_count(&self, x: Point, count: u32) -> Environment {
        let mut env = self.clone();
        env.overrides.insert(x, count);
        env
    }

    /// Copy whose counts outside B₁(center, radius) are redrawn from `other`.
    pub fn resampled_outside(&self, center: &Point, radius: u64, other: &SeedSpec) -> Environment {
        let mut env = self.clone();
        let other_root = other.root(DOMAIN_SITE);
        for x in l1_ball(self.dim, self.box_radius) {
            if x.l1_dist(center) > radius {
                let u = KeyedStream::new(keyed::site_key_from_root(other_root, &x)).next_f64();
                env.overrides.insert(x, self.law.quantile(u));
            }
        }
        env
    }

    /// x*: the closest occupied site, lexicographic tie-break.
    ///
    /// Shells are scanned outward up to `search_cap` (default: the box
    /// radius), never past the box boundary.
    pub fn star(&self, x: &Point, search_cap: Option<u64>) -> Result<Point> {
        if !self.contains(x) {
            return Err(FrogError::OutsideBox { point: *x, box_radius: self.box_radius });
        }
        let room = self.box_radius - x.l1_norm();
        let cap = search_cap.unwrap_or(self.box_radius);
        for r in 0..=cap.min(room) {
            // spheres enumerate lexicographically, so the first hit is the tie-break winner
            if let Some(p) = l1_sphere(x, r).into_iter().find(|p| self.is_occupied(p)) {
                return Ok(p);
            }
        }
        Err(FrogError::NoOccupiedSite { point: *x, cap: cap.min(room) })
    }

    /// Occupied sites of the box, lexicographic order.
    pub fn occupied_sites(&self) -> Vec<Point> {
        l1_ball(self.dim, self.box_radius).into_iter().filter(|p| self.is_occupied(p)).collect()
    }

    pub fn to_document(&self) -> EnvironmentDocument {
        self.to_document_with_radius(self.box_radius)
    }

    /// Document of the restriction to B₁(0, radius).
    pub fn to_document_with_radius(&self, radius: u64) -> EnvironmentDocument {
        let radius = radius.min(self.box_radius);
        let mut rle: Vec<[u32; 2]> = Vec::new();
        for x in l1_ball(self.dim, radius) {
            let n = self.omega(&x);
            match rle.last_mut() {
                Some(run) if run[0] == n => run[1] += 1,
                _ => rle.push([n, 1]),
            }
        }
        EnvironmentDocument {
            version: DOCUMENT_VERSION,
            dim: self.dim,
            box_radius: radius,
            law: self.law.clone(),
            seed: self.seed.clone(),
            conditioned_origin: self.conditioned_origin,
            rle_counts: rle,
        }
    }

    pub fn from_document(doc: &EnvironmentDocument) -> Result<Environment> {
        if doc.version != DOCUMENT_VERSION {
            return Err(FrogError::Document(format!("unsupported version {}", doc.version)));
        }
        let mut env = Environment::sample(doc.law.clone(), doc.dim, doc.box_radius, doc.seed.clone())?;
        env.explicit = true;
        env.conditioned_origin = doc.conditioned_origin;
        let sites = l1_ball(doc.dim, doc.box_radius);
        let mut it = sites.iter();
        for &[count, len] in &doc.rle_counts {
            for _ in 0..len {
                let x = it.next().ok_or_else(|| FrogError::Document("more counts than sites".into()))?;
                if count > 0 {
                    env.overrides.insert(*x, count);
                }
            }
        }
        if it.next().is_some() {
            return Err(FrogError::Document("fewer counts than sites".into()));
        }
        if doc.conditioned_origin && env.omega(&Point::origin(doc.dim)) == 0 {
            return Err(FrogError::Document("conditioned document has an empty origin".into()));
        }
        Ok(env)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.to_document()).expect("environment document serializes")
    }

    pub fn from_json(s: &str) -> Result<Environment> {
        let doc: EnvironmentDocument = serde_json::from_str(s).map_err(|e| FrogError::Document(e.to_string()))?;
        Environment::from_document(&doc)
    }
}

/// Versioned on-disk form. `rle_counts` holds `[count, run length]` pairs
/// over the box's sites in lexicographic order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvironmentDocument {
    pub version: u32,
    pub dim: usize,
    pub box_radius: u64,
    pub law: ConfigLaw,
    pub seed: SeedSpec,
    pub conditioned_origin: bool,
    pub rle_counts: Vec<[u32; 2]>,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seed(tag: &str) -> SeedSpec {
        SeedSpec::new(99, tag)
    }

    fn binomial_band(n: f64, p: f64) -> (f64, f64) {
        let sd = (n * p * (1.0 - p)).sqrt() / n;
        (p - 5.0 * sd, p + 5.0 * sd)
    }

    #[test]
    fn degenerate_laws() {
        for law in [ConfigLaw::Constant { k: 1 }, ConfigLaw::Bernoulli { p: 1.0 }] {
            let env = sample_environment(law, 2, 8, seed("deg")).unwrap();
            assert!(l1_ball(2, 8).iter().all(|x| env.omega(x) == 1));
        }
    }

    #[test]
    fn bernoulli_occupation_fraction() {
        let env = sample_environment(ConfigLaw::Bernoulli { p: 0.6 }, 2, 224, seed("bern")).unwrap();
        let sites = l1_ball(2, 224);
        assert!(sites.len() > 100_000);
        let occ = sites.iter().filter(|x| env.is_occupied(x)).count() as f64 / sites.len() as f64;
        let (lo, hi) = binomial_band(sites.len() as f64, 0.6);
        assert!(occ > lo && occ < hi, "{occ}");
    }

    #[test]
    fn law_validation() {
        assert!(ConfigLaw::Bernoulli { p: 1.5 }.validated().is_err());
        assert!(ConfigLaw::Bernoulli { p: 0.0 }.validated().is_err());
        assert!(ConfigLaw::Poisson { lambda: 0.0 }.validated().is_err());
        assert!(ConfigLaw::Poisson { lambda: -1.0 }.validated().is_err());
        assert!(ConfigLaw::Geometric { q: 1.0 }.validated().is_err());
        assert!(ConfigLaw::Constant { k: 0 }.validated().is_err());
        assert!(ConfigLaw::ExplicitPmf { table: vec![0.5, 0.4] }.validated().is_err());
        assert!(ConfigLaw::ExplicitPmf { table: vec![1.0] }.validated().is_err());
        let ok = ConfigLaw::ExplicitPmf { table: vec![0.1, 0.2, 0.7 + 1e-14] }.validated().unwrap();
        if let ConfigLaw::ExplicitPmf { table } = ok {
            assert_eq!(table.iter().sum::<f64>(), 1.0);
        }
        assert!(sample_environment(ConfigLaw::Poisson { lambda: -2.0 }, 2, 3, seed("x")).is_err());
    }

    #[test]
    fn parse_laws() {
        assert_eq!(ConfigLaw::parse("poisson:1.0").unwrap(), ConfigLaw::Poisson { lambda: 1.0 });
        assert_eq!(ConfigLaw::parse("bernoulli:0.7").unwrap(), ConfigLaw::Bernoulli { p: 0.7 });
        assert_eq!(ConfigLaw::parse("constant:3").unwrap(), ConfigLaw::Constant { k: 3 });
        assert!(ConfigLaw::parse("pmf:0.5,0.5").is_ok());
        assert!(ConfigLaw::parse("binomial:3").is_err());
        assert!(ConfigLaw::parse("poisson").is_err());
        assert!(ConfigLaw::parse("bernoulli:2").is_err());
    }

    #[test]
    fn quantiles_match_pmf() {
        // exact inversion check on a fine grid of u
        let laws = [
            ConfigLaw::Poisson { lambda: 1.0 },
            ConfigLaw::Geometric { q: 0.3 },
            ConfigLaw::ExplicitPmf { table: vec![0.25, 0.5, 0.25] },
        ];
        for law in laws {
            let n = 200_000;
            let mut counts = [0usize; 6];
            for i in 0..n {
                let k = law.quantile((i as f64 + 0.5) / n as f64) as usize;
                if k < 6 {
                    counts[k] += 1;
                }
            }
            for (k, &c) in counts.iter().enumerate() {
                let pk = match &law {
                    ConfigLaw::Poisson { lambda } => {
                        (-lambda).exp() * lambda.powi(k as i32) / (1..=k).product::<usize>() as f64
                    }
                    ConfigLaw::Geometric { q } => q * (1.0 - q).powi(k as i32),
                    ConfigLaw::ExplicitPmf { table } => table.get(k).copied().unwrap_or(0.0),
                    _ => unreachable!(),
                };
                assert!((c as f64 / n as f64 - pk).abs() < 1e-4, "{law:?} k={k}");
            }
        }
    }

    #[test]
    fn conditioning() {
        let env = sample_environment(ConfigLaw::Bernoulli { p: 0.3 }, 2, 4, seed("c")).unwrap();
        for r in 0..50 {
            let e = sample_environment(ConfigLaw::Bernoulli { p: 0.3 }, 2, 4, seed("c").with_replica(r)).unwrap();
            let c = condition_origin(&e);
            assert_eq!(c.omega(&Point::origin(2)), 1);
            assert!(c.conditioned_origin());
            for x in l1_ball(2, 4).iter().filter(|x| !x.is_zero()) {
                assert_eq!(c.omega(x), e.omega(x));
            }
        }
        let big = env.with_site_count(Point::origin(2), 3).conditioned();
        assert_eq!(big.omega(&Point::origin(2)), 3);
    }

    #[test]
    fn conditioned_poisson_pmf() {
        let lambda: f64 = 1.0;
        let n = 100_000u64;
        let mut ones = 0u64;
        for r in 0..n {
            let e = sample_environment(ConfigLaw::Poisson { lambda }, 2, 0, seed("cp").with_replica(r)).unwrap();
            if condition_origin(&e).omega(&Point::origin(2)) == 1 {
                ones += 1;
            }
        }
        let target = lambda * (-lambda).exp() / (1.0 - (-lambda).exp());
        let (lo, hi) = binomial_band(n as f64, target);
        let phat = ones as f64 / n as f64;
        assert!(phat > lo && phat < hi, "{phat} vs {target}");
    }

    #[test]
    fn star_examples() {
        let env = sample_environment(ConfigLaw::Constant { k: 1 }, 2, 5, seed("s")).unwrap();
        for x in l1_ball(2, 5) {
            assert_eq!(star(&env, &x, None).unwrap(), x);
        }
        let mut doc = env.to_document();
        // I = {(2,0), (0,2), (-1,0)}
        let sites = l1_ball(2, 5);
        let occupied = [Point::new(&[2, 0]), Point::new(&[0, 2]), Point::new(&[-1, 0])];
        doc.rle_counts = sites.iter().map(|x| [occupied.contains(x) as u32, 1]).collect();
        let env = Environment::from_document(&doc).unwrap();
        assert_eq!(star(&env, &Point::origin(2), None).unwrap(), Point::new(&[-1, 0]));
        assert_eq!(star(&env, &Point::new(&[2, 0]), None).unwrap(), Point::new(&[2, 0]));
        // tie at distance 1 from (1,1): (0,1)? no; (1,0)? no; (2,1)? no -> distance 2 tie (0,2),(2,0) -> (0,2)
        assert_eq!(star(&env, &Point::new(&[1, 1]), None).unwrap(), Point::new(&[0, 2]));
        assert!(matches!(star(&env, &Point::new(&[-4, 0]), Some(1)), Err(FrogError::NoOccupiedSite { .. })));
        assert!(matches!(star(&env, &Point::new(&[9, 0]), None), Err(FrogError::OutsideBox { .. })));
    }

    #[test]
    fn star_is_nearest() {
        let env = sample_environment(ConfigLaw::Bernoulli { p: 0.2 }, 2, 12, seed("near")).unwrap();
        let occ = env.occupied_sites();
        for x in l1_ball(2, 6) {
            let s = star(&env, &x, None).unwrap();
            assert!(occ.iter().all(|y| x.l1_dist(&s) <= x.l1_dist(y)));
            assert_eq!(s, crate::lattice::closest_in_set(&x, &occ).unwrap());
        }
    }

    #[test]
    fn site_locality() {
        let law = ConfigLaw::Poisson { lambda: 2.0 };
        let env = sample_environment(law, 2, 10, seed("loc")).unwrap();
        let x = Point::new(&[3, -4]);
        let changed = env.with_site_count(x, env.omega(&x) + 5);
        for y in l1_ball(2, 10) {
            if y != x {
                assert_eq!(changed.omega(&y), env.omega(&y));
            }
        }
    }

    #[test]
    fn document_round_trip() {
        let env = sample_environment(ConfigLaw::Poisson { lambda: 1.3 }, 3, 4, seed("doc")).unwrap().conditioned();
        let json = env.to_json();
        let back = Environment::from_json(&json).unwrap();
        for x in l1_ball(3, 4) {
            assert_eq!(back.omega(&x), env.omega(&x));
        }
        assert_eq!(back.to_json(), json);
        assert!(json.starts_with("{\"version\":1,"));
        assert!(Environment::from_json("{\"version\":9}").is_err());
    }
}
