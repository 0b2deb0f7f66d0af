use rand::seq::index;
use rand::Rng;

use super::candidates::CandidatePools;
use super::graph::{EntityId, KnowledgeGraph, RelationId, Triple};
use crate::error::{Error, Result};
use crate::seed;

/// One relation's few-shot episode.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Task {
    pub relation: RelationId,
    pub support: Vec<Triple>,
    pub query_pos: Vec<Triple>,
    /// One corrupted triple per positive query, same position.
    pub query_neg: Vec<Triple>,
}

/// Draws a corrupted tail for `triple` uniformly from its negative pool.
pub fn sample_negative<R: Rng>(
    kg: &KnowledgeGraph,
    pools: &CandidatePools,
    triple: &Triple,
    rng: &mut R,
) -> Result<Triple> {
    let pool = pools.negative_pool(kg, triple.relation, triple.head);
    if pool.is_empty() {
        return Err(Error::NoNegatives(kg.relation_name(triple.relation).to_owned()));
    }
    let tail = pool[rng.gen_range(0..pool.len())];
    Ok(Triple { tail, ..*triple })
}

/// Negative tails for each triple, drawn from a stream keyed by `seed`.
pub fn sample_negative_tails(
    kg: &KnowledgeGraph,
    pools: &CandidatePools,
    triples: &[Triple],
    seed: u64,
) -> Result<Vec<EntityId>> {
    let mut rng = seed::rng(seed, &[]);
    triples
        .iter()
        .map(|t| sample_negative(kg, pools, t, &mut rng).map(|n| n.tail))
        .collect()
}

fn check_size(kg: &KnowledgeGraph, relation: RelationId, shots: usize) -> Result<&[Triple]> {
    let triples = kg.relation_triples(relation);
    if shots == 0 || triples.len() <= shots {
        return Err(Error::InsufficientTriples {
            relation: kg.relation_name(relation).to_owned(),
            available: triples.len(),
            shots,
        });
    }
    Ok(triples)
}

/// Samples `shots` support triples and up to `queries` disjoint query
/// triples, each query paired with one corrupted tail.
pub fn sample_task(
    kg: &KnowledgeGraph,
    pools: &CandidatePools,
    relation: RelationId,
    shots: usize,
    queries: usize,
    seed: u64,
) -> Result<Task> {
    let mut rng = seed::rng(seed, &[]);
    sample_task_with(kg, pools, relation, shots, queries, &mut rng)
}

pub fn sample_task_with<R: Rng>(
    kg: &KnowledgeGraph,
    pools: &CandidatePools,
    relation: RelationId,
    shots: usize,
    queries: usize,
    rng: &mut R,
) -> Result<Task> {
    let triples = check_size(kg, relation, shots)?;
    let take = (shots + queries).min(triples.len());
    let picked: Vec<Triple> = index::sample(rng, triples.len(), take)
        .into_iter()
        .map(|i| triples[i])
        .collect();
    let (support, query_pos) = picked.split_at(shots);
    let query_neg = query_pos
        .iter()
        .map(|t| sample_negative(kg, pools, t, rng))
        .collect::<Result<Vec<_>>>()?;
    Ok(Task {
        relation,
        support: support.to_vec(),
        query_pos: query_pos.to_vec(),
        query_neg,
    })
}

/// Evaluation episode: `shots` seeded support triples; every other triple
/// of the relation is a query.
pub fn support_and_queries(
    kg: &KnowledgeGraph,
    relation: RelationId,
    shots: usize,
    seed: u64,
) -> Result<(Vec<Triple>, Vec<Triple>)> {
    let triples = check_size(kg, relation, shots)?;
    let mut rng = seed::rng(seed, &[relation as u64]);
    let mut chosen: Vec<usize> = index::sample(&mut rng, triples.len(), shots).into_vec();
    let support = chosen.iter().map(|&i| triples[i]).collect();
    chosen.sort_unstable();
    let queries = triples
        .iter()
        .enumerate()
        .filter(|(i, _)| chosen.binary_search(i).is_err())
        .map(|(_, t)| *t)
        .collect();
    Ok((support, queries))
}
