//! Few-shot relation learning on knowledge graphs: a relation-meta learner
//! with gradient-meta refinement, extended by a per-relation bottleneck
//! adapter and neighbor-context entity embeddings.
//!
//! The pipeline runs in three stages:
//!
//! 1. [`pretrain`]: TransE entity embeddings on the pre-train relations.
//! 2. [`train`]: meta-training of the relation-meta learner, the entity
//!    table and a shared adapter on tasks sampled from the train relations.
//! 3. [`eval`]: meta-testing, where each unseen relation tunes its own
//!    adapter on its support set and ranks candidate tails for its queries.

pub mod adapter;
pub mod checkpoint;
pub mod config;
pub mod error;
pub mod eval;
pub mod kg;
pub mod meta;
pub mod numerics;
pub mod pretrain;
pub mod runner;
pub mod seed;
pub mod synthetic;
pub mod train;

pub use error::{CheckpointError, Error, Result};
