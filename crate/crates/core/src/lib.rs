//! Tabular two-player zero-sum discounted Markov games.
//!
//! The crate covers the full model-based pipeline at "desk scale" (dense,
//! in-memory games):
//!
//! * [`game`] — the game type, policy evaluation, best responses,
//!   exploitability (`nash_gap`), return-variance diagnostics, and the
//!   absorbing-state transform.
//! * [`matrix`] — exact (simplex LP) and regularized (smoothed best-response)
//!   solvers for one-shot matrix games with duality-gap certificates.
//! * [`plan`] — Shapley value iteration with certified planning error and
//!   one-step equilibrium extraction from a Q table.
//! * [`sample`] — generative-model sampling with a keyed counter RNG,
//!   count-based empirical models, and the reward-agnostic multi-reward
//!   pipeline.
//! * [`instances`] — generators: a parameterized family of hard instances
//!   with closed-form Q values, single-controller MDP embeddings, and seeded
//!   random games.
//! * [`experiment`] — sweep harness over sample budgets and seeds, error
//!   metrics against exact reference solutions, and log-log rate fitting.
//!
//! Everything is deterministic given explicit seeds: sampling uses a
//! counter-based generator keyed by `(seed, stream id, state, actions, draw
//! index)`, so results do not depend on execution order or thread schedule.

pub mod error;
pub mod experiment;
pub mod game;
pub mod instances;
mod linalg;
pub mod matrix;
pub mod plan;
pub mod rng;
pub mod sample;

pub use error::{Error, Result};
pub use experiment::{ExperimentConfig, ExperimentRecord, InstanceSource, MetricField, Protocol, RateFit};
pub use game::{MarkovGame, Owner, QTable, StationaryPolicy, VTable, VarianceTable};
pub use instances::{
    HardInstance, HardInstanceSpec, Hypothesis, InstanceCheck, MdpSpec, RewardId,
    SelectedConstants, VerifyReport,
};
pub use matrix::{MatrixGameSolution, RegularizerKind, RegularizerSpec};
pub use plan::{OracleKind, PlanConfig, PlanResult};
pub use rng::RngSpec;
pub use sample::{EmpiricalModel, GenerativeSampler};

/// Crate version, re-exported for the CLI's `--version` output.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
