//! Crate-wide error type.
//!
//! One enum for the whole library: the modules are small and callers (CLI,
//! experiment harness) treat every failure the same way — print and exit
//! nonzero — so per-module error types would only add conversion noise.

use crate::instances::VerifyReport;

/// Everything that can go wrong across the crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Structurally malformed input: shapes that do not line up.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// A value-level invariant violation, with the index path of the first
    /// offending entry (e.g. `transition[2][0][1]`).
    #[error("invalid {path}: {message}")]
    Invalid { path: String, message: String },

    /// A linear system that should be solvable for any discount < 1 came back
    /// singular; the input data is corrupted.
    #[error("singular linear system in {0} (corrupted game data?)")]
    Singular(&'static str),

    /// An iterative procedure hit its cap before meeting its tolerance.
    #[error("{context}: iteration cap {cap} exceeded (achieved {achieved:.3e})")]
    IterationCap {
        context: &'static str,
        cap: u64,
        achieved: f64,
    },

    /// The regularized saddle solver failed to converge; carries the last
    /// measured duality gap.
    #[error("regularized solver did not converge: last gap {last_gap:.3e} after {sweeps} sweeps")]
    NonConvergence { last_gap: f64, sweeps: u64 },

    /// An internal consistency check failed (e.g. an LP that is feasible and
    /// bounded by construction came back without a certificate). Always a bug,
    /// never a property of the input.
    #[error("internal error in {context}: {message}")]
    Internal {
        context: &'static str,
        message: String,
    },

    /// The planner could not certify the requested planning error.
    #[error("planning certification failed: certified {achieved:.3e} > requested {requested:.3e}")]
    Certification { achieved: f64, requested: f64 },

    /// No feasible constants exist for the requested hard-instance parameters.
    /// This is a legitimate outcome (the construction only admits a bounded
    /// range of `eps` for each discount), not a bug.
    #[error("infeasible hard-instance parameters: {first_violation} (closest grid cell c'={c_prime}, c={c})")]
    Infeasible {
        first_violation: String,
        c_prime: u64,
        c: u64,
    },

    /// One or more structural checks on a built hard instance failed.
    #[error("instance verification failed: {}", .report.failed_names().join(", "))]
    Verification { report: VerifyReport },

    /// Rate fitting had fewer than three usable grid points after dropping
    /// groups at the numerical noise floor.
    #[error("degenerate rate grid: {0}")]
    DegenerateGrid(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Helper for invariant violations with an index path.
    pub(crate) fn invalid(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Invalid {
            path: path.into(),
            message: message.into(),
        }
    }
}
