//! Error types shared across the crate.

use thiserror::Error;

/// Top-level error for simulator, scenario, agent, search, and pipeline operations.
#[derive(Debug, Error)]
pub enum CoreError {
    #[error("non-finite input: {0}")]
    NonFinite(&'static str),

    #[error("invalid scenario spec: {0}")]
    InvalidSpec(String),

    /// Instantiation failed because a parameter places an actor outside the
    /// drivable area. Carries how far outside (m), for penalty-based searches.
    #[error("actor placed {excess:.3} m outside the drivable area")]
    OffRoadPlacement { excess: f64 },

    #[error("observation/policy mismatch: expected dim {expected}, got {got}")]
    ObsDim { expected: usize, got: usize },

    #[error("training diverged: {0}")]
    Divergence(String),

    #[error("search budget exhausted: used {used} of {budget}")]
    BudgetExhausted { used: usize, budget: usize },

    #[error("no feasible candidate found: {0}")]
    Infeasible(String),

    #[error("linear algebra failure: {0}")]
    Numerics(String),

    #[error("schema mismatch: file has {found}, this build reads {expected}")]
    Schema { found: String, expected: String },

    #[error("malformed artifact {path}: {reason}")]
    Artifact { path: String, reason: String },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, CoreError>;
