//! Error taxonomy shared by every module of the crate.
//!
//! Solver failures are deliberately fine-grained: the sequential scheduler
//! records them per step and keeps going, so the distinction between, say,
//! an unidentifiable mixture and a rank-deficient slice matters downstream.

use thiserror::Error;

use crate::graph::NodeId;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Error, Debug, Clone, PartialEq)]
pub enum Error {
    /// Malformed input: bad scope, bad assignment, empty sample set, invalid
    /// generator dimensions and the like.
    #[error("validation error: {0}")]
    Validation(String),

    /// An enumeration cap would be exceeded (node count, component size).
    #[error("resource error: {0}")]
    Resource(String),

    /// A structural precondition fails (set not marginalizable, separation
    /// property absent).
    #[error("structure error: {0}")]
    Structure(String),

    /// A conditioning event has (numerically) zero probability.
    #[error("degenerate event: {0}")]
    DegenerateEvent(String),

    /// A matrix that must be inverted is singular or too ill-conditioned.
    #[error("rank deficiency: {0}")]
    RankDeficient(String),

    /// The mixture behind a three-view table cannot be identified
    /// (eigenvalue gap below threshold).
    #[error("unidentifiable mixture: {0}")]
    Unidentifiable(String),

    /// The three-view table is not consistent with any valid two-state
    /// mixture (complex eigenvalues, out-of-range weights or conditionals).
    #[error("invalid mixture: {0}")]
    InvalidMixture(String),

    /// A merge solver produced values outside the tolerated range.
    #[error("invalid result: {0}")]
    InvalidResult(String),

    /// A label preference is too close to zero to decide a direction.
    #[error("ambiguous label: {0}")]
    AmbiguousLabel(String),

    /// A node marginal sits on the 0.5 symmetry point, so no canonical
    /// label exists.
    #[error("degenerate label: {0}")]
    DegenerateLabel(String),

    /// Two recovered tables disagree on a shared sub-scope beyond tolerance.
    #[error("inconsistency: {0}")]
    Inconsistent(String),

    /// Moments are requested for pairs the store never recovered.
    #[error("incomplete recovery, missing pairs: {missing:?}")]
    Incomplete { missing: Vec<(NodeId, NodeId)> },

    /// Moment targets sit on or outside the moment polytope boundary.
    #[error("boundary error: {0}")]
    Boundary(String),

    /// The per-round candidate budget would be exceeded.
    #[error("candidate budget exceeded in round {round}: {count} > {budget}")]
    Budget {
        round: usize,
        count: usize,
        budget: usize,
    },

    /// Random graph generation failed repeatedly.
    #[error("generation error: {0}")]
    Generation(String),

    /// A scripted plan step could not be executed.
    #[error("plan step {index} failed: {source}")]
    PlanStep {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    /// File or serialization problem (CLI surface).
    #[error("io error: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }
}
