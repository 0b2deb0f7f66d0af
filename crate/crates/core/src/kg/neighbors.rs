use std::collections::{BTreeSet, HashSet};

use rand::seq::index;

use super::graph::{EntityId, KnowledgeGraph, RelationId};
use crate::seed::{self, stream};

/// Undirected entity adjacency over the background graph.
#[derive(Clone, Debug)]
pub struct NeighborIndex {
    full: Vec<Vec<EntityId>>,
    capped: Vec<Vec<EntityId>>,
    max_neighbors: usize,
    seed: u64,
}

fn cap(list: &[EntityId], max: usize, rng_parts: &[u64], seed: u64) -> Vec<EntityId> {
    if list.len() <= max {
        return list.to_vec();
    }
    let mut rng = seed::rng(seed, rng_parts);
    let mut kept: Vec<EntityId> = index::sample(&mut rng, list.len(), max)
        .into_iter()
        .map(|i| list[i])
        .collect();
    kept.sort_unstable();
    kept
}

impl NeighborIndex {
    /// Adjacency over triples whose relation is not in `excluded`, edges
    /// taken in both directions, self-loops ignored. Lists longer than
    /// `max_neighbors` are cut down by seeded sampling without replacement.
    pub fn build(
        kg: &KnowledgeGraph,
        excluded: &HashSet<RelationId>,
        max_neighbors: usize,
        seed: u64,
    ) -> Self {
        let mut sets = vec![BTreeSet::new(); kg.entity_count()];
        for t in kg.triples() {
            if excluded.contains(&t.relation) || t.head == t.tail {
                continue;
            }
            sets[t.head].insert(t.tail);
            sets[t.tail].insert(t.head);
        }
        let full: Vec<Vec<EntityId>> = sets.into_iter().map(|s| s.into_iter().collect()).collect();
        let capped = full
            .iter()
            .enumerate()
            .map(|(e, list)| cap(list, max_neighbors, &[stream::NEIGHBORS, e as u64], seed))
            .collect();
        NeighborIndex {
            full,
            capped,
            max_neighbors,
            seed,
        }
    }

    pub fn entity_count(&self) -> usize {
        self.capped.len()
    }

    /// One-hop neighbors after truncation, sorted.
    pub fn neighbors(&self, entity: EntityId) -> &[EntityId] {
        &self.capped[entity]
    }

    /// One-hop neighbors before truncation, sorted.
    pub fn all_neighbors(&self, entity: EntityId) -> &[EntityId] {
        &self.full[entity]
    }

    /// Union of entities reachable in `1..=hops` steps, excluding `entity`.
    /// Each hop's newly reached set is capped at `max_neighbors`.
    pub fn within_hops(&self, entity: EntityId, hops: usize) -> Vec<EntityId> {
        let mut visited: BTreeSet<EntityId> = self.capped[entity].iter().copied().collect();
        visited.remove(&entity);
        let mut frontier: Vec<EntityId> = visited.iter().copied().collect();
        for hop in 2..=hops {
            let fresh: BTreeSet<EntityId> = frontier
                .iter()
                .flat_map(|&n| self.capped[n].iter().copied())
                .filter(|&n| n != entity && !visited.contains(&n))
                .collect();
            let fresh: Vec<EntityId> = fresh.into_iter().collect();
            frontier = cap(
                &fresh,
                self.max_neighbors,
                &[stream::NEIGHBORS, entity as u64, hop as u64],
                self.seed,
            );
            if frontier.is_empty() {
                break;
            }
            visited.extend(frontier.iter().copied());
        }
        visited.into_iter().collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn excluded_relations_are_ignored() {
        let kg = KnowledgeGraph::from_named([("a", "r1", "b"), ("b", "r2", "c")]);
        let r2 = kg.relation_id("r2").unwrap();
        let idx = NeighborIndex::build(&kg, &HashSet::from([r2]), 50, 0);
        let (a, b, c) = (0, 1, 2);
        assert_eq!(idx.neighbors(b), &[a]);
        assert!(idx.neighbors(c).is_empty());
    }

    #[test]
    fn edges_are_undirected() {
        let kg = KnowledgeGraph::from_named([("a", "r1", "b")]);
        let idx = NeighborIndex::build(&kg, &HashSet::new(), 50, 0);
        assert_eq!(idx.neighbors(0), &[1]);
        assert_eq!(idx.neighbors(1), &[0]);
    }

    #[test]
    fn hub_is_truncated_reproducibly() {
        let names: Vec<String> = (0..80).map(|i| format!("n{i}")).collect();
        let rows: Vec<(&str, &str, &str)> =
            names.iter().map(|n| ("hub", "r", n.as_str())).collect();
        let kg = KnowledgeGraph::from_named(rows);
        let a = NeighborIndex::build(&kg, &HashSet::new(), 50, 7);
        let b = NeighborIndex::build(&kg, &HashSet::new(), 50, 7);
        assert_eq!(a.all_neighbors(0).len(), 80);
        assert_eq!(a.neighbors(0).len(), 50);
        assert_eq!(a.neighbors(0), b.neighbors(0));
        let c = NeighborIndex::build(&kg, &HashSet::new(), 50, 8);
        assert_ne!(a.neighbors(0), c.neighbors(0));
    }

    #[test]
    fn multi_hop_union() {
        // a - b - c - d
        let kg = KnowledgeGraph::from_named([("a", "r", "b"), ("b", "r", "c"), ("c", "r", "d")]);
        let idx = NeighborIndex::build(&kg, &HashSet::new(), 50, 0);
        assert_eq!(idx.within_hops(0, 1), vec![1]);
        assert_eq!(idx.within_hops(0, 2), vec![1, 2]);
        assert_eq!(idx.within_hops(0, 3), vec![1, 2, 3]);
        assert_eq!(idx.within_hops(1, 2), vec![0, 2, 3]);
    }
}
