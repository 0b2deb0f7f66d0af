use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::path::Path;

use super::graph::{EntityId, KnowledgeGraph, RelationId};
use crate::error::{Error, Result};

/// Relations with fewer candidates than this are not evaluated.
pub const MIN_CANDIDATES: usize = 10;

/// Per-relation candidate tail pools.
///
/// A relation listed in a candidates file uses that list; every other
/// relation falls back to all entities seen as a tail in the background
/// graph.
#[derive(Clone, Debug)]
pub struct CandidatePools {
    explicit: HashMap<RelationId, Vec<EntityId>>,
    fallback: Vec<EntityId>,
    filtered: bool,
}

impl CandidatePools {
    pub fn fallback_only(kg: &KnowledgeGraph, excluded: &HashSet<RelationId>, filtered: bool) -> Self {
        let fallback: BTreeSet<EntityId> = kg
            .triples()
            .iter()
            .filter(|t| !excluded.contains(&t.relation))
            .map(|t| t.tail)
            .collect();
        CandidatePools {
            explicit: HashMap::new(),
            fallback: fallback.into_iter().collect(),
            filtered,
        }
    }

    /// Adds the entries of a JSON `relation -> [entity, ...]` file.
    pub fn with_file(mut self, path: impl AsRef<Path>, kg: &KnowledgeGraph) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let raw: BTreeMap<String, Vec<String>> = serde_json::from_str(&text)?;
        self.add_named(&raw, kg)?;
        Ok(self)
    }

    pub fn add_named(&mut self, raw: &BTreeMap<String, Vec<String>>, kg: &KnowledgeGraph) -> Result<()> {
        for (rel, names) in raw {
            let r = kg.relation_id(rel)?;
            let mut ids = names
                .iter()
                .map(|n| kg.entity_id(n))
                .collect::<Result<Vec<_>>>()?;
            ids.sort_unstable();
            ids.dedup();
            self.explicit.insert(r, ids);
        }
        Ok(())
    }

    pub fn filtered(&self) -> bool {
        self.filtered
    }

    pub fn set_filtered(&mut self, filtered: bool) {
        self.filtered = filtered;
    }

    /// The unfiltered pool for a relation, sorted by entity id.
    pub fn pool(&self, relation: RelationId) -> &[EntityId] {
        self.explicit
            .get(&relation)
            .unwrap_or(&self.fallback)
            .as_slice()
    }

    pub fn is_evaluable(&self, relation: RelationId) -> bool {
        self.pool(relation).len() >= MIN_CANDIDATES
    }

    /// Candidates for ranking `(head, relation, truth)`. In filtered mode
    /// every other known tail of `(head, relation)` is removed; `truth`
    /// itself stays if the pool contains it.
    pub fn candidate_set(
        &self,
        kg: &KnowledgeGraph,
        relation: RelationId,
        head: EntityId,
        truth: EntityId,
    ) -> Vec<EntityId> {
        let pool = self.pool(relation);
        if !self.filtered {
            return pool.to_vec();
        }
        let known = kg.true_tails(head, relation);
        pool.iter()
            .copied()
            .filter(|&e| e == truth || known.binary_search(&e).is_err())
            .collect()
    }

    /// Corruption pool for `(head, relation)`: the candidate pool minus
    /// every known true tail.
    pub fn negative_pool(&self, kg: &KnowledgeGraph, relation: RelationId, head: EntityId) -> Vec<EntityId> {
        let known = kg.true_tails(head, relation);
        self.pool(relation)
            .iter()
            .copied()
            .filter(|e| known.binary_search(e).is_err())
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_entries_pass_through() {
        let rows: Vec<(String, String, String)> = (0..14)
            .map(|i| ("h".to_string(), "r9".to_string(), format!("e{i}")))
            .collect();
        let kg = KnowledgeGraph::from_named(rows.iter().map(|(a, b, c)| (a.as_str(), b.as_str(), c.as_str())));
        let names: Vec<String> = (0..12).map(|i| format!("e{i}")).collect();
        let mut pools = CandidatePools::fallback_only(&kg, &HashSet::new(), true);
        pools
            .add_named(&BTreeMap::from([("r9".to_string(), names.clone())]), &kg)
            .unwrap();
        let r9 = kg.relation_id("r9").unwrap();
        let expected: Vec<EntityId> = names.iter().map(|n| kg.entity_id(n).unwrap()).collect();
        assert_eq!(pools.pool(r9), expected.as_slice());
        assert!(pools.is_evaluable(r9));
    }

    #[test]
    fn small_pools_are_not_evaluable() {
        let rows: Vec<(String, String, String)> = (0..8)
            .map(|i| (format!("h{i}"), "r".to_string(), format!("t{i}")))
            .collect();
        let kg = KnowledgeGraph::from_named(rows.iter().map(|(a, b, c)| (a.as_str(), b.as_str(), c.as_str())));
        let pools = CandidatePools::fallback_only(&kg, &HashSet::new(), true);
        assert_eq!(pools.pool(0).len(), 8);
        assert!(!pools.is_evaluable(0));
    }

    #[test]
    fn unknown_names_in_file_are_errors() {
        let kg = KnowledgeGraph::from_named([("a", "r", "b")]);
        let mut pools = CandidatePools::fallback_only(&kg, &HashSet::new(), true);
        let bad_rel = BTreeMap::from([("zz".to_string(), vec!["a".to_string()])]);
        assert!(pools.add_named(&bad_rel, &kg).is_err());
        let bad_ent = BTreeMap::from([("r".to_string(), vec!["q".to_string()])]);
        assert!(pools.add_named(&bad_ent, &kg).is_err());
    }

    #[test]
    fn fallback_filters_other_true_tails() {
        // tails observed in the background: b, c
        let kg = KnowledgeGraph::from_named([("a", "r", "b"), ("a", "r", "c"), ("x", "s", "c")]);
        let (a, b, c) = (0, 1, 2);
        let r = kg.relation_id("r").unwrap();
        let pools = CandidatePools::fallback_only(&kg, &HashSet::new(), true);
        assert_eq!(pools.pool(r), &[b, c]);
        assert_eq!(pools.candidate_set(&kg, r, a, b), vec![b]);
        assert_eq!(pools.candidate_set(&kg, r, a, c), vec![c]);
        let raw = CandidatePools::fallback_only(&kg, &HashSet::new(), false);
        assert_eq!(raw.candidate_set(&kg, r, a, b), vec![b, c]);
        assert!(pools.negative_pool(&kg, r, a).is_empty());
    }
}
