//! Triple storage, relation splits, neighbor contexts, candidate pools and
//! few-shot task sampling.

mod candidates;
mod graph;
mod neighbors;
mod splits;
mod task;

pub use candidates::{CandidatePools, MIN_CANDIDATES};
pub use graph::{EntityId, KnowledgeGraph, RelationId, Triple, Vocab};
pub use neighbors::NeighborIndex;
pub use splits::{RelationSplits, SPLIT_NAMES};
pub use task::{
    sample_negative, sample_negative_tails, sample_task, sample_task_with, support_and_queries,
    Task,
};
