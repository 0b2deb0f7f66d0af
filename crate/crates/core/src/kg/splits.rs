use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use super::graph::{KnowledgeGraph, RelationId};
use crate::error::{Error, Result};

pub const SPLIT_NAMES: [&str; 4] = ["pretrain", "train", "valid", "test"];

/// Four mutually exclusive relation sets.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct RelationSplits {
    pub pretrain: Vec<RelationId>,
    pub train: Vec<RelationId>,
    pub valid: Vec<RelationId>,
    pub test: Vec<RelationId>,
}

impl RelationSplits {
    /// Reads a JSON object mapping each split name to relation names.
    pub fn load(path: impl AsRef<Path>, kg: &KnowledgeGraph) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let raw: BTreeMap<String, Vec<String>> = serde_json::from_str(&text)?;
        Self::from_names(&raw, kg)
    }

    pub fn from_names(raw: &BTreeMap<String, Vec<String>>, kg: &KnowledgeGraph) -> Result<Self> {
        if let Some(extra) = raw.keys().find(|k| !SPLIT_NAMES.contains(&k.as_str())) {
            return Err(Error::Splits(format!("unknown split `{extra}`")));
        }
        let ids = |name: &str| -> Result<Vec<RelationId>> {
            let names = raw
                .get(name)
                .ok_or_else(|| Error::Splits(format!("missing split `{name}`")))?;
            names.iter().map(|n| kg.relation_id(n)).collect()
        };
        let splits = RelationSplits {
            pretrain: ids("pretrain")?,
            train: ids("train")?,
            valid: ids("valid")?,
            test: ids("test")?,
        };
        splits.validate(kg)?;
        Ok(splits)
    }

    pub fn validate(&self, kg: &KnowledgeGraph) -> Result<()> {
        let mut seen = HashSet::new();
        for (name, set) in SPLIT_NAMES.iter().zip(self.all()) {
            for &r in set {
                if !seen.insert(r) {
                    return Err(Error::Splits(format!(
                        "relation `{}` appears twice (again in `{name}`)",
                        kg.relation_name(r)
                    )));
                }
            }
        }
        Ok(())
    }

    fn all(&self) -> [&Vec<RelationId>; 4] {
        [&self.pretrain, &self.train, &self.valid, &self.test]
    }

    pub fn get(&self, name: &str) -> Option<&[RelationId]> {
        SPLIT_NAMES
            .iter()
            .position(|n| *n == name)
            .map(|i| self.all()[i].as_slice())
    }

    pub fn sizes(&self) -> (usize, usize, usize, usize) {
        (
            self.pretrain.len(),
            self.train.len(),
            self.valid.len(),
            self.test.len(),
        )
    }

    /// Relations unseen during meta-training. Their triples are kept out
    /// of neighbor contexts and the fallback candidate pool.
    pub fn held_out(&self) -> HashSet<RelationId> {
        self.valid.iter().chain(&self.test).copied().collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kg() -> KnowledgeGraph {
        KnowledgeGraph::from_named([
            ("a", "r0", "b"),
            ("a", "r1", "b"),
            ("a", "r2", "b"),
            ("a", "r3", "b"),
        ])
    }

    fn raw(sets: [&[&str]; 4]) -> BTreeMap<String, Vec<String>> {
        SPLIT_NAMES
            .iter()
            .zip(sets)
            .map(|(k, v)| (k.to_string(), v.iter().map(|s| s.to_string()).collect()))
            .collect()
    }

    #[test]
    fn disjoint_splits_load() {
        let s = RelationSplits::from_names(&raw([&["r0"], &["r1"], &["r2"], &["r3"]]), &kg()).unwrap();
        assert_eq!(s.sizes(), (1, 1, 1, 1));
        assert_eq!(s.get("valid").unwrap(), &[2]);
    }

    #[test]
    fn overlap_is_rejected() {
        let err = RelationSplits::from_names(&raw([&["r0"], &["r1", "r0"], &["r2"], &["r3"]]), &kg());
        assert!(matches!(err, Err(Error::Splits(_))));
    }

    #[test]
    fn unknown_relation_is_rejected() {
        let err = RelationSplits::from_names(&raw([&["r0"], &["r9"], &["r2"], &["r3"]]), &kg());
        assert!(matches!(err, Err(Error::UnknownRelation(_))));
    }

    #[test]
    fn missing_and_extra_keys() {
        let mut m = raw([&["r0"], &["r1"], &["r2"], &["r3"]]);
        m.remove("test");
        assert!(RelationSplits::from_names(&m, &kg()).is_err());
        let mut m = raw([&["r0"], &["r1"], &["r2"], &["r3"]]);
        m.insert("holdout".into(), vec![]);
        assert!(RelationSplits::from_names(&m, &kg()).is_err());
    }
}
