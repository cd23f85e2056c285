//! Equilibrium computation for verifiable data-disclosure games.
//!
//! A sender privately holds a dataset of i.i.d. outcome counts and may
//! disclose any sub-multiset of it; the receiver responds with the posterior
//! mean of the state. This crate solves the finite-data truth-leaning outcome
//! exactly and constructs the continuum-limit imitation equilibrium, together
//! with the pure pieces of the convergence checks.
//!
//! The crate is `no_std` and only needs `alloc`.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod binary;
pub mod density;
pub mod error;
pub mod finite;
pub mod flow;
pub mod game;
pub mod harness;
pub mod limit;
pub mod num;
pub mod series;
pub mod strategy;
pub mod types;

pub use density::{Piece, PiecewiseDensity};
pub use error::{Error, Result};
pub use finite::{EquilibriumOutcome, FiniteInstance, PoolStep};
pub use game::{validate_game, FiniteMassDist, Game, MassModel, OutcomeModel, RawGame, StateSpace};
pub use limit::{LimitSolution, SegmentKind};
pub use types::{DatasetCounts, TypeSpace};

/// Tolerance for structural checks such as row sums.
pub const STRUCT_TOL: f64 = 1e-12;
/// Tolerance for probability sums over enumerated types.
pub const PROB_TOL: f64 = 1e-9;
/// Absolute tolerance for comparing pool and payoff values.
pub const VALUE_TOL: f64 = 1e-9;
/// Default cap on the number of enumerated finite types.
pub const DEFAULT_MAX_TYPES: usize = 2_000_000;
