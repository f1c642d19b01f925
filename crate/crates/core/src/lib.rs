//! Monte Carlo engine for first passage times in the frog model on Z^d.
//!
//! Frogs sit on the sites of Z^d according to an i.i.d. configuration ω.
//! The frogs at the source start active and perform simple random walks;
//! sleeping frogs wake up when an active frog first lands on their site.
//! The crate computes the first passage time T(0, x), hitting times τ,
//! the modified time T*, the truncated time T_t, percolation diagnostics,
//! and the replicated statistics built on top of them.
//!
//! Every random quantity is drawn from a counter-based keyed generator
//! ([`keyed`]), so results are pure functions of (law, parameters, seed).

pub mod environment;
pub mod error;
pub mod estimation;
pub mod keyed;
pub mod lattice;
pub mod passage;
pub mod percolation;
pub mod truncated;
pub mod walks;

pub use environment::{ConfigLaw, Environment};
pub use error::{FrogError, Result};
pub use keyed::SeedSpec;
pub use lattice::Point;
pub use passage::{BoxPolicy, HittingTime, PassageOutcome};
