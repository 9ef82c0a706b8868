//! Desk-scale driving-safety benchmark: a deterministic 2D simulator, a library of
//! parameterized pre-crash scenario templates, trainable ego agents, black-box
//! scenario-search algorithms, and a three-level metric engine with an overall score.
//!
//! Everything is built around one reproducibility contract: every stochastic choice
//! flows from a single master seed through stable hashing ([`seeding`]), and all
//! parallel fan-out ([`exec`]) produces results bit-identical to the sequential path.

pub mod agents;
pub mod error;
pub mod eval;
pub mod exec;
pub mod generation;
pub mod geom;
pub mod pipeline;
pub mod rollout;
pub mod scenario;
pub mod seeding;
pub mod sim;

pub use error::CoreError;
