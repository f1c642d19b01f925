use thiserror::Error;

use crate::lattice::Point;

pub type Result<T> = std::result::Result<T, FrogError>;

#[derive(Debug, Error)]
pub enum FrogError {
    #[error("dimension {dim} is not supported (maximum {max})")]
    Dimension { dim: usize, max: usize },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("closest point requested from an empty set")]
    EmptySet,

    #[error("adapted basis needs a nonzero base point")]
    ZeroBasePoint,

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("walk cache for frog {frog} at {origin} would exceed {cap} steps")]
    WalkCacheOverflow { origin: Point, frog: u32, cap: usize },

    #[error("no occupied site within l1 distance {cap} of {point}")]
    NoOccupiedSite { point: Point, cap: u64 },

    #[error("point {point} lies outside the sampled box of l1 radius {box_radius}")]
    OutsideBox { point: Point, box_radius: u64 },

    #[error(
        "box radius {box_radius} is smaller than horizon {horizon} + |source|_1 {source_norm}; \
         the finite box would bias passage times"
    )]
    BoxTooSmall { box_radius: u64, horizon: u64, source_norm: u64 },

    #[error("source {0} carries no frogs")]
    EmptySource(Point),

    #[error("passage to {target} is censored at horizon {horizon}")]
    Censored { target: Point, horizon: u64 },

    #[error("oracle instance has {sites} occupied sites, above the cap of {cap}")]
    OracleCapExceeded { sites: usize, cap: usize },

    #[error("search region needs site {point}, outside the sampled box of l1 radius {box_radius}")]
    RegionExceedsBox { point: Point, box_radius: u64 },

    #[error("censoring rate {rate:.4} at {label} exceeds budget {budget:.4}; raise the horizon (currently {horizon})")]
    CensoringBudget { label: String, rate: f64, budget: f64, horizon: u64 },

    #[error("the field has no open sites")]
    EmptyField,

    #[error("missing mu_hat entry for direction {0}")]
    MissingMuHat(Point),

    #[error("law has infinite or unavailable mean")]
    InfiniteMean,

    #[error("environment document: {0}")]
    Document(String),
}
