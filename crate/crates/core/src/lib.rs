//! Interaction embeddings for knowledge graphs.
//!
//! Each entity and relation carries one general embedding. A per-relation row
//! of the interaction matrix turns the head embedding into a triple-specific
//! interaction embedding, which in turn reshapes the relation embedding:
//!
//! ```text
//! h_I  = c_r ∘ h
//! r_I  = h_I ∘ r
//! q_hr = tanh(h_I + r_I + b)
//! f    = σ(q_hr · t)
//! ```
//!
//! The crate covers the full pipeline: triple ingestion and indexing ([`kg`]),
//! scoring ([`model`]), training with negative sampling and Adam ([`trainer`]),
//! filtered link-prediction evaluation ([`eval`]), and the embedding-guided
//! search for closed-path explanations and their supports ([`explain`]).

pub mod checkpoint;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod explain;
pub mod kg;
pub mod model;
pub mod synth;
pub mod trainer;

pub use error::{Error, Result};
pub use kg::{Dictionary, EntityId, KnowledgeGraph, RelationId, Split, SplitMask, Triple};
pub use model::{Matrix, ModelParams, ScoreMode};
pub use trainer::TrainConfig;
