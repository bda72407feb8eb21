//! Partial monitoring toolkit: game geometry, loss-difference estimators,
//! best-of-both-worlds FTRL learners for locally and globally observable
//! games, and a seeded simulation harness.
//!
//! The learner for locally observable games solves a small convex
//! exploration problem every round over the sampling distribution and the
//! estimator jointly; the learner for globally observable games uses a
//! fixed in-tree estimator with an adaptive learning rate and an explicit
//! exploration mix. Both run over the Pareto set computed by the geometry
//! module.

pub mod env;
pub mod estimation;
pub mod exobopt;
pub mod ftrl;
pub mod game;
pub mod geometry;
pub mod harness;
pub mod linalg;
pub mod lp;

pub use game::{catalog_game, symbol_stats, validate_game, Game, GameError, SymbolStats, CATALOG};
pub use geometry::{
    cell_dimension, classify, observability_check, pareto_and_neighbors, GameClass, GameClassTag,
    GameGeometry, ObsMode,
};
pub use harness::{prepare, run_all, run_episode, RunConfig, RunError, RunTrace};
