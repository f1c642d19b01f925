//! Seeded simple random walk streams S_k(x, ℓ).
//!
//! A frog's whole trajectory is a pure function of (seed, origin site, frog
//! index): step k moves in canonical direction `direction(walk_key, k)` (see
//! [`crate::keyed`] for the layout). Two walks with the same key agree step
//! for step no matter when or where they are queried.

use crate::error::{FrogError, Result};
use crate::keyed::{below, draw, SeedSpec};
use crate::lattice::Point;

/// Default cap on cached steps per stream.
pub const DEFAULT_CACHE_CAP: usize = 1 << 24;

/// Direction code of step `k` (0-based) for the walk with key `key`.
#[inline]
pub fn direction(key: u64, k: u64, dim: usize) -> usize {
    below(draw(key, k), 2 * dim as u64) as usize
}

#[derive(Clone, Debug)]
pub struct WalkStream {
    origin: Point,
    frog_index: u32,
    key: u64,
    cached_steps: Vec<u8>,
    cache_cap: usize,
}

/// Derive the stream of frog `ell` (1-based) starting at `x`.
pub fn derive_stream(seed: &SeedSpec, x: &Point, ell: u32) -> WalkStream {
    assert!(ell >= 1, "frog indices start at 1");
    WalkStream::from_key(*x, ell, seed.walk_key(x, ell))
}

impl WalkStream {
    pub fn from_key(origin: Point, frog_index: u32, key: u64) -> Self {
        WalkStream { origin, frog_index, key, cached_steps: Vec::new(), cache_cap: DEFAULT_CACHE_CAP }
    }

    pub fn with_cache_cap(mut self, cap: usize) -> Self {
        self.cache_cap = cap;
        self
    }

    pub fn origin(&self) -> Point {
        self.origin
    }

    pub fn frog_index(&self) -> u32 {
        self.frog_index
    }

    pub fn key(&self) -> u64 {
        self.key
    }

    pub fn cached_len(&self) -> usize {
        self.cached_steps.len()
    }

    /// Direction code of step k (the move from S_k to S_{k+1}).
    pub fn step_code(&mut self, k: usize) -> Result<usize> {
        self.ensure(k + 1)?;
        Ok(self.cached_steps[k] as usize)
    }

    fn ensure(&mut self, len: usize) -> Result<()> {
        if len <= self.cached_steps.len() {
            return Ok(());
        }
        if len > self.cache_cap {
            return Err(FrogError::WalkCacheOverflow {
                origin: self.origin,
                frog: self.frog_index,
                cap: self.cache_cap,
            });
        }
        let target = len.max(2 * self.cached_steps.len()).min(self.cache_cap);
        let dim = self.origin.dim();
        self.cached_steps.reserve(target - self.cached_steps.len());
        for k in self.cached_steps.len()..target {
            self.cached_steps.push(direction(self.key, k as u64, dim) as u8);
        }
        Ok(())
    }

    /// S_k: the position after `k` steps.
    pub fn walk_position(&mut self, k: usize) -> Result<Point> {
        self.ensure(k)?;
        Ok(self.cached_steps[..k].iter().fold(self.origin, |p, &c| p.step(c as usize)))
    }

    /// S_0, S_1, …, S_k.
    pub fn positions(&mut self, k: usize) -> Result<Vec<Point>> {
        self.ensure(k)?;
        let mut out = Vec::with_capacity(k + 1);
        let mut p = self.origin;
        out.push(p);
        for &c in &self.cached_steps[..k] {
            p = p.step(c as usize);
            out.push(p);
        }
        Ok(out)
    }
}

/// Iterator over S_1, S_2, … that does not cache; used on hot paths.
#[derive(Clone, Debug)]
pub struct WalkCursor {
    pub key: u64,
    pub pos: Point,
    pub steps: u64,
}

impl WalkCursor {
    pub fn new(key: u64, start: Point) -> Self {
        WalkCursor { key, pos: start, steps: 0 }
    }

    #[inline]
    pub fn advance(&mut self) -> Point {
        let code = direction(self.key, self.steps, self.pos.dim());
        self.steps += 1;
        self.pos = self.pos.step(code);
        self.pos
    }
}

pub fn walk_position(w: &mut WalkStream, k: usize) -> Result<Point> {
    w.walk_position(k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::neighbors;

    fn seed() -> SeedSpec {
        SeedSpec::new(20240611, "walks")
    }

    #[test]
    fn deterministic_streams() {
        let x = Point::new(&[3, -2]);
        let mut a = derive_stream(&seed(), &x, 1);
        let mut b = derive_stream(&seed(), &x, 1);
        assert_eq!(a.positions(10_000).unwrap(), b.positions(10_000).unwrap());
        // a cursor walks the same path
        let mut c = WalkCursor::new(a.key(), x);
        let path = a.positions(500).unwrap();
        for expected in &path[1..] {
            assert_eq!(c.advance(), *expected);
        }
    }

    #[test]
    fn distinct_frogs_differ() {
        let x = Point::origin(2);
        let mut a = derive_stream(&seed(), &x, 1);
        let mut b = derive_stream(&seed(), &x, 2);
        let ca: Vec<_> = (0..64).map(|k| a.step_code(k).unwrap()).collect();
        let cb: Vec<_> = (0..64).map(|k| b.step_code(k).unwrap()).collect();
        assert_ne!(ca, cb);
    }

    #[test]
    fn start_and_first_step() {
        let x = Point::new(&[1, 1, 1]);
        let mut w = derive_stream(&seed(), &x, 4);
        assert_eq!(w.walk_position(0).unwrap(), x);
        assert!(neighbors(&x).contains(&w.walk_position(1).unwrap()));
    }

    #[test]
    fn cache_extension_keeps_prefix() {
        let mut w = derive_stream(&seed(), &Point::origin(2), 1);
        let early = w.positions(37).unwrap();
        let late = w.positions(3000).unwrap();
        assert_eq!(&late[..38], &early[..]);
    }

    #[test]
    fn cache_cap_is_enforced() {
        let mut w = derive_stream(&seed(), &Point::origin(2), 1).with_cache_cap(100);
        assert!(w.walk_position(100).is_ok());
        assert!(matches!(w.walk_position(101), Err(FrogError::WalkCacheOverflow { cap: 100, .. })));
    }

    #[test]
    fn speed_and_parity() {
        let x = Point::new(&[0, 7]);
        for ell in 1..=5 {
            let mut w = derive_stream(&seed(), &x, ell);
            let path = w.positions(2000).unwrap();
            for (k, p) in path.iter().enumerate() {
                let dist = p.l1_dist(&x);
                assert!(dist <= k as u64);
                assert_eq!(dist % 2, k as u64 % 2);
                if k > 0 {
                    assert_eq!(p.l1_dist(&path[k - 1]), 1);
                }
            }
        }
    }

    /// Chi-square over 10^6 steps; 5σ per-direction binomial bands as well.
    #[test]
    fn direction_frequencies() {
        for dim in [2usize, 3] {
            let n_dir = 2 * dim;
            let mut counts = vec![0u64; n_dir];
            let mut total = 0u64;
            for ell in 1..=1000u32 {
                let key = seed().walk_key(&Point::origin(dim), ell);
                for k in 0..1000 {
                    counts[direction(key, k, dim)] += 1;
                    total += 1;
                }
            }
            let p = 1.0 / n_dir as f64;
            let expected = total as f64 * p;
            let sd = (total as f64 * p * (1.0 - p)).sqrt();
            let mut chi2 = 0.0;
            for &c in &counts {
                assert!((c as f64 - expected).abs() < 5.0 * sd, "{counts:?}");
                chi2 += (c as f64 - expected).powi(2) / expected;
            }
            // upper 1e-3 quantiles of chi-square with 3 and 5 degrees of freedom
            let crit = if dim == 2 { 16.266 } else { 20.515 };
            assert!(chi2 < crit, "dim {dim}: chi2 {chi2}");
        }
    }
}
