//! Integer lattice geometry: points of Z^d, norms, neighbor sets, the
//! deterministic tie-break for nearest occupied sites, and the group of
//! signed coordinate permutations with its adapted linear maps.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{FrogError, Result};

/// Largest supported lattice dimension.
pub const MAX_DIM: usize = 8;

/// A site of Z^d.
///
/// Stored inline so that points are `Copy` and cheap to hash. Coordinates
/// beyond `dim` are always zero, which keeps the derived ordering
/// lexicographic on the live coordinates.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Point {
    dim: u8,
    coords: [i32; MAX_DIM],
}

impl Point {
    pub fn origin(dim: usize) -> Self {
        assert!((1..=MAX_DIM).contains(&dim), "dimension {dim} out of range");
        Point { dim: dim as u8, coords: [0; MAX_DIM] }
    }

    pub fn new(coords: &[i32]) -> Self {
        let mut p = Point::origin(coords.len());
        p.coords[..coords.len()].copy_from_slice(coords);
        p
    }

    pub fn try_new(coords: &[i32]) -> Result<Self> {
        if coords.is_empty() || coords.len() > MAX_DIM {
            return Err(FrogError::Dimension { dim: coords.len(), max: MAX_DIM });
        }
        Ok(Point::new(coords))
    }

    /// The i-th coordinate vector, `i` counted from zero.
    pub fn unit(dim: usize, axis: usize) -> Self {
        let mut p = Point::origin(dim);
        p.coords[axis] = 1;
        p
    }

    /// `k` times the first coordinate vector.
    pub fn on_axis(dim: usize, k: i32) -> Self {
        let mut p = Point::origin(dim);
        p.coords[0] = k;
        p
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim as usize
    }

    #[inline]
    pub fn coords(&self) -> &[i32] {
        &self.coords[..self.dim as usize]
    }

    #[inline]
    pub fn coord(&self, i: usize) -> i32 {
        self.coords[i]
    }

    #[inline]
    pub fn set_coord(&mut self, i: usize, v: i32) {
        debug_assert!(i < self.dim());
        self.coords[i] = v;
    }

    pub fn is_zero(&self) -> bool {
        self.coords.iter().all(|&c| c == 0)
    }

    #[inline]
    pub fn l1_norm(&self) -> u64 {
        self.coords().iter().map(|c| c.unsigned_abs() as u64).sum()
    }

    #[inline]
    pub fn linf_norm(&self) -> u64 {
        self.coords().iter().map(|c| c.unsigned_abs() as u64).max().unwrap_or(0)
    }

    #[inline]
    pub fn l1_dist(&self, other: &Point) -> u64 {
        (*self - *other).l1_norm()
    }

    #[inline]
    pub fn linf_dist(&self, other: &Point) -> u64 {
        (*self - *other).linf_norm()
    }

    /// Move one step in canonical direction `code` (see [`neighbors`]).
    #[inline]
    pub fn step(&self, code: usize) -> Point {
        let mut p = *self;
        let axis = code >> 1;
        if code & 1 == 0 {
            p.coords[axis] += 1;
        } else {
            p.coords[axis] -= 1;
        }
        p
    }
}

impl fmt::Debug for Point {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, c) in self.coords().iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{c}")?;
        }
        write!(f, ")")
    }
}

impl fmt::Display for Point {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

impl Serialize for Point {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.coords().serialize(s)
    }
}

impl<'de> Deserialize<'de> for Point {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let v = Vec::<i32>::deserialize(d)?;
        Point::try_new(&v).map_err(serde::de::Error::custom)
    }
}

impl Add for Point {
    type Output = Point;
    #[inline]
    fn add(mut self, rhs: Point) -> Point {
        debug_assert_eq!(self.dim, rhs.dim);
        for i in 0..MAX_DIM {
            self.coords[i] += rhs.coords[i];
        }
        self
    }
}

impl Sub for Point {
    type Output = Point;
    #[inline]
    fn sub(mut self, rhs: Point) -> Point {
        debug_assert_eq!(self.dim, rhs.dim);
        for i in 0..MAX_DIM {
            self.coords[i] -= rhs.coords[i];
        }
        self
    }
}

impl Neg for Point {
    type Output = Point;
    fn neg(mut self) -> Point {
        for c in self.coords.iter_mut() {
            *c = -*c;
        }
        self
    }
}

impl Mul<Point> for i32 {
    type Output = Point;
    fn mul(self, mut rhs: Point) -> Point {
        for c in rhs.coords.iter_mut() {
            *c *= self;
        }
        rhs
    }
}

pub fn l1_norm(x: &Point) -> u64 {
    x.l1_norm()
}

/// The 2d nearest neighbors of `x` in canonical order +ξ1, −ξ1, +ξ2, −ξ2, ...
///
/// Walk direction code `c` moves along `neighbors(x)[c] - x`.
pub fn neighbors(x: &Point) -> Vec<Point> {
    (0..2 * x.dim()).map(|c| x.step(c)).collect()
}

/// The ℓ1-closest element of `set` to `x`, ties broken by the
/// lexicographically smallest coordinate vector.
pub fn closest_in_set<'a, I>(x: &Point, set: I) -> Result<Point>
where
    I: IntoIterator<Item = &'a Point>,
{
    set.into_iter()
        .map(|p| (x.l1_dist(p), *p))
        .min()
        .map(|(_, p)| p)
        .ok_or(FrogError::EmptySet)
}

/// All points of Z^d with ‖y‖₁ ≤ r, in lexicographic order.
pub fn l1_ball(dim: usize, r: u64) -> Vec<Point> {
    let mut out = Vec::new();
    let mut cur = Point::origin(dim);
    fill_ball(&mut out, &mut cur, 0, r as i64);
    out
}

fn fill_ball(out: &mut Vec<Point>, cur: &mut Point, axis: usize, budget: i64) {
    if axis == cur.dim() {
        out.push(*cur);
        return;
    }
    for c in -budget..=budget {
        cur.coords[axis] = c as i32;
        fill_ball(out, cur, axis + 1, budget - c.abs());
    }
    cur.coords[axis] = 0;
}

/// All points with ‖y − center‖₁ = r (the ℓ1 sphere), lexicographic order.
pub fn l1_sphere(center: &Point, r: u64) -> Vec<Point> {
    let mut out = Vec::new();
    let mut cur = Point::origin(center.dim());
    fill_sphere(&mut out, &mut cur, 0, r as i64);
    out.iter_mut().for_each(|p| *p = *p + *center);
    out
}

fn fill_sphere(out: &mut Vec<Point>, cur: &mut Point, axis: usize, budget: i64) {
    if axis + 1 == cur.dim() {
        if budget == 0 {
            cur.coords[axis] = 0;
            out.push(*cur);
        } else {
            cur.coords[axis] = -budget as i32;
            out.push(*cur);
            cur.coords[axis] = budget as i32;
            out.push(*cur);
        }
        cur.coords[axis] = 0;
        return;
    }
    for c in -budget..=budget {
        cur.coords[axis] = c as i32;
        fill_sphere(out, cur, axis + 1, budget - c.abs());
    }
    cur.coords[axis] = 0;
}

/// All points of the ℓ∞ ball `center + [-r, r]^d`, lexicographic order.
pub fn linf_ball(center: &Point, r: u64) -> Vec<Point> {
    let dim = center.dim();
    let side = 2 * r as i64 + 1;
    let total = (side as usize).pow(dim as u32);
    let mut out = Vec::with_capacity(total);
    for mut idx in 0..total as i64 {
        let mut p = *center;
        for axis in (0..dim).rev() {
            p.coords[axis] += (idx % side - r as i64) as i32;
            idx /= side;
        }
        out.push(p);
    }
    out
}

/// Ψ_{σ,ε}: coordinate i of the image is `eps[i] * x[sigma[i]]`.
///
/// `sigma` is stored zero-based.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SignedPermutation {
    sigma: Vec<usize>,
    eps: Vec<i8>,
}

impl SignedPermutation {
    pub fn new(sigma: Vec<usize>, eps: Vec<i8>) -> Result<Self> {
        let d = sigma.len();
        if eps.len() != d {
            return Err(FrogError::DimensionMismatch { expected: d, found: eps.len() });
        }
        let mut seen = vec![false; d];
        for &s in &sigma {
            if s >= d || seen[s] {
                return Err(FrogError::InvalidParameter {
                    name: "sigma",
                    reason: format!("{sigma:?} is not a permutation of 0..{d}"),
                });
            }
            seen[s] = true;
        }
        if eps.iter().any(|&e| e != 1 && e != -1) {
            return Err(FrogError::InvalidParameter {
                name: "eps",
                reason: format!("{eps:?} must contain only +1/-1"),
            });
        }
        Ok(SignedPermutation { sigma, eps })
    }

    pub fn identity(dim: usize) -> Self {
        SignedPermutation { sigma: (0..dim).collect(), eps: vec![1; dim] }
    }

    pub fn dim(&self) -> usize {
        self.sigma.len()
    }

    pub fn sigma(&self) -> &[usize] {
        &self.sigma
    }

    pub fn eps(&self) -> &[i8] {
        &self.eps
    }

    pub fn is_identity(&self) -> bool {
        *self == SignedPermutation::identity(self.dim())
    }

    pub fn inverse(&self) -> Self {
        // y_i = e_i x_{s(i)}  =>  x_j = e_{s^-1(j)} y_{s^-1(j)}
        let d = self.dim();
        let mut sigma = vec![0; d];
        let mut eps = vec![1; d];
        for i in 0..d {
            sigma[self.sigma[i]] = i;
            eps[self.sigma[i]] = self.eps[i];
        }
        SignedPermutation { sigma, eps }
    }

    /// `self ∘ other`.
    pub fn compose(&self, other: &SignedPermutation) -> Self {
        let d = self.dim();
        let sigma = (0..d).map(|i| other.sigma[self.sigma[i]]).collect();
        let eps = (0..d).map(|i| self.eps[i] * other.eps[self.sigma[i]]).collect();
        SignedPermutation { sigma, eps }
    }

    /// Every element of O(Z^d), permutations in lexicographic order and
    /// sign patterns counted in binary with `+` first.
    pub fn all(dim: usize) -> Vec<SignedPermutation> {
        let mut perms = Vec::new();
        permutations(&mut (0..dim).collect::<Vec<_>>(), 0, &mut perms);
        perms.sort();
        let mut out = Vec::with_capacity(perms.len() << dim);
        for sigma in perms {
            for mask in 0..(1u32 << dim) {
                let eps = (0..dim).map(|i| if mask >> (dim - 1 - i) & 1 == 0 { 1 } else { -1 }).collect();
                out.push(SignedPermutation { sigma: sigma.clone(), eps });
            }
        }
        out
    }
}

fn permutations(items: &mut Vec<usize>, k: usize, out: &mut Vec<Vec<usize>>) {
    if k == items.len() {
        out.push(items.clone());
        return;
    }
    for i in k..items.len() {
        items.swap(k, i);
        permutations(items, k + 1, out);
        items.swap(k, i);
    }
}

pub fn apply_signed_permutation(g: &SignedPermutation, x: &Point) -> Result<Point> {
    if g.dim() != x.dim() {
        return Err(FrogError::DimensionMismatch { expected: g.dim(), found: x.dim() });
    }
    let mut out = Point::origin(x.dim());
    for i in 0..x.dim() {
        out.coords[i] = g.eps[i] as i32 * x.coords[g.sigma[i]];
    }
    Ok(out)
}

/// A tuple (g_1, ..., g_d) of lattice symmetries with g_1 = Id, defining the
/// linear map y ↦ Σ y_i g_i(x) for a fixed base point x.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdaptedBasis {
    pub g: Vec<SignedPermutation>,
    pub base_point: Point,
    /// Minimum of ‖L(y)‖₁ / (‖x‖₁‖y‖₁) over the probe set, as a fraction.
    pub quality: (u64, u64),
}

impl AdaptedBasis {
    pub fn quality_f64(&self) -> f64 {
        self.quality.0 as f64 / self.quality.1 as f64
    }

    /// The images g_i(x), i.e. the columns of the linear map.
    pub fn images(&self) -> Vec<Point> {
        self.g
            .iter()
            .map(|g| apply_signed_permutation(g, &self.base_point).expect("dimension checked at construction"))
            .collect()
    }
}

pub fn apply_adapted_map(b: &AdaptedBasis, y: &Point) -> Result<Point> {
    if y.dim() != b.base_point.dim() {
        return Err(FrogError::DimensionMismatch { expected: b.base_point.dim(), found: y.dim() });
    }
    Ok(combine(&b.images(), y))
}

fn combine(images: &[Point], y: &Point) -> Point {
    let mut out = Point::origin(y.dim());
    for (i, img) in images.iter().enumerate() {
        out = out + y.coord(i) * *img;
    }
    out
}

/// Default probe set: every nonzero y with ‖y‖₁ ≤ 3.
pub fn default_probes(dim: usize) -> Vec<Point> {
    l1_ball(dim, 3).into_iter().filter(|p| !p.is_zero()).collect()
}

/// Exhaustive search over (O(Z^d))^{d-1} for the tuple with g_1 = Id that
/// maximizes the worst-case ratio ‖L_x(y)‖₁ / (‖x‖₁‖y‖₁) over `probes`.
///
/// The first maximizer in enumeration order wins.
pub fn find_adapted_basis(x: &Point, probes: &[Point]) -> Result<AdaptedBasis> {
    let d = x.dim();
    if d > 4 {
        return Err(FrogError::Dimension { dim: d, max: 4 });
    }
    if x.is_zero() {
        return Err(FrogError::ZeroBasePoint);
    }
    if let Some(p) = probes.iter().find(|p| p.dim() != d) {
        return Err(FrogError::DimensionMismatch { expected: d, found: p.dim() });
    }
    let probes: Vec<Point> = probes.iter().filter(|p| !p.is_zero()).copied().collect();
    let group = SignedPermutation::all(d);
    let images: Vec<Point> = group.iter().map(|g| apply_signed_permutation(g, x).unwrap()).collect();
    let xn = x.l1_norm();

    let mut best: Option<(Vec<usize>, (u64, u64))> = None;
    let mut choice = vec![0usize; d - 1];
    let mut cols = vec![*x; d];
    loop {
        for (k, &c) in choice.iter().enumerate() {
            cols[k + 1] = images[c];
        }
        let q = probes
            .iter()
            .map(|y| (combine(&cols, y).l1_norm(), xn * y.l1_norm()))
            .min_by(|a, b| (a.0 as u128 * b.1 as u128).cmp(&(b.0 as u128 * a.1 as u128)))
            .unwrap_or((1, 1));
        let better = match &best {
            None => true,
            Some((_, bq)) => q.0 as u128 * bq.1 as u128 > bq.0 as u128 * q.1 as u128,
        };
        if better {
            best = Some((choice.clone(), q));
        }
        // odometer over the d-1 free slots
        let mut k = choice.len();
        loop {
            if k == 0 {
                let (idx, q) = best.expect("at least one tuple evaluated");
                let mut g = vec![SignedPermutation::identity(d)];
                g.extend(idx.iter().map(|&i| group[i].clone()));
                let quality = reduce(q);
                if quality.0 == 0 {
                    return Err(FrogError::InvalidParameter {
                        name: "probe_directions",
                        reason: "no tuple gives a positive lower constant".into(),
                    });
                }
                return Ok(AdaptedBasis { g, base_point: *x, quality });
            }
            k -= 1;
            choice[k] += 1;
            if choice[k] < group.len() {
                break;
            }
            choice[k] = 0;
        }
    }
}

fn reduce((a, b): (u64, u64)) -> (u64, u64) {
    fn gcd(a: u64, b: u64) -> u64 {
        if b == 0 { a } else { gcd(b, a % b) }
    }
    let g = gcd(a, b).max(1);
    (a / g, b / g)
}
