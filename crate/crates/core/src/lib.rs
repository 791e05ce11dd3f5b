//! Desk-scale machinery for a multi-domain verifiable-reward RL stage:
//! structured-response parsing, per-domain reward verifiers, curriculum
//! sampling over difficulty tiers, ratio-EMA rollout expansion, sequence
//! packing / rank balancing, and bicubic adaptation of position-embedding
//! tables — all exercised end-to-end against a deterministic synthetic
//! learner so every algorithm is testable without training a model.
//!
//! Numeric kernels (interpolation, IoU, advantages, loss aggregation) are
//! generic over the scalar type via [`num::Real`]; the orchestration layer
//! runs at the default [`Scalar`].

pub mod config;
pub mod curriculum;
pub mod expansion;
pub mod geom;
pub mod harness;
pub mod judge;
pub mod num;
pub mod parser;
pub mod reward;
pub mod sched;
pub mod sim;

/// Default scalar used by the orchestration layer and the CLI.
pub type Scalar = f64;

/// Embedding table at the default scalar.
pub type EmbeddingTable = geom::EmbeddingTable<Scalar>;
/// Axis-aligned box at the default scalar.
pub type BBox = reward::bbox::BBox<Scalar>;
/// Expansion controller state at the default scalar.
pub type ExpansionState = expansion::ExpansionState<Scalar>;
