//! Small generated graphs for tests, examples and smoke runs.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::kg::{KnowledgeGraph, RelationSplits};

/// `e0 -next-> e1 -next-> ... -> e{n-1}`.
pub fn chain_graph(n: usize) -> KnowledgeGraph {
    let names: Vec<String> = (0..n).map(|i| format!("e{i}")).collect();
    KnowledgeGraph::from_named(
        names
            .windows(2)
            .map(|w| (w[0].as_str(), "next", w[1].as_str())),
    )
}

/// Offset relations over a line of entities: `plus_k` links `e_i` to
/// `e_{i+k}`. Every relation is a composition of the shorter ones, so
/// what is learned on small offsets transfers to larger ones.
#[derive(Clone, Debug)]
pub struct OffsetGraph {
    pub kg: KnowledgeGraph,
    pub splits: RelationSplits,
    pub split_names: BTreeMap<String, Vec<String>>,
}

pub fn offset_graph(entities: usize) -> OffsetGraph {
    let layout: [(&str, &[usize]); 4] = [
        ("pretrain", &[1, 2]),
        ("train", &[3, 4, 5, 6]),
        ("valid", &[7]),
        ("test", &[8, 9]),
    ];
    let mut rows = Vec::new();
    let mut split_names = BTreeMap::new();
    for (split, offsets) in layout {
        let mut names = Vec::new();
        for &k in offsets {
            let rel = format!("plus_{k}");
            for i in 0..entities.saturating_sub(k) {
                rows.push((format!("e{i}"), rel.clone(), format!("e{}", i + k)));
            }
            names.push(rel);
        }
        split_names.insert(split.to_string(), names);
    }
    let kg = KnowledgeGraph::from_named(rows.iter().map(|(h, r, t)| (h.as_str(), r.as_str(), t.as_str())));
    let splits = RelationSplits::from_names(&split_names, &kg).expect("layout is disjoint");
    OffsetGraph {
        kg,
        splits,
        split_names,
    }
}

impl OffsetGraph {
    /// Writes `triples.tsv` and `splits.json` under `dir`.
    pub fn write(&self, dir: &Path) -> Result<(PathBuf, PathBuf)> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let triples = dir.join("triples.tsv");
        let splits = dir.join("splits.json");
        self.kg.write_triples(&triples)?;
        let json = serde_json::to_string_pretty(&self.split_names)?;
        std::fs::write(&splits, json).map_err(|e| Error::io(&splits, e))?;
        Ok((triples, splits))
    }
}
