use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub type EntityId = usize;
pub type RelationId = usize;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Triple {
    pub head: EntityId,
    pub relation: RelationId,
    pub tail: EntityId,
}

impl Triple {
    pub fn new(head: EntityId, relation: RelationId, tail: EntityId) -> Self {
        Triple {
            head,
            relation,
            tail,
        }
    }
}

/// Name <-> dense id bijection, ids in first-appearance order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Vocab {
    names: Vec<String>,
    ids: HashMap<String, usize>,
}

impl Vocab {
    pub fn intern(&mut self, name: &str) -> usize {
        if let Some(&id) = self.ids.get(name) {
            return id;
        }
        let id = self.names.len();
        self.names.push(name.to_owned());
        self.ids.insert(name.to_owned(), id);
        id
    }

    pub fn id(&self, name: &str) -> Option<usize> {
        self.ids.get(name).copied()
    }

    pub fn name(&self, id: usize) -> &str {
        &self.names[id]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }
}

/// Deduplicated triples with entity/relation vocabularies and per-relation
/// and per-(head, relation) indexes.
#[derive(Clone, Debug)]
pub struct KnowledgeGraph {
    entities: Vocab,
    relations: Vocab,
    triples: Vec<Triple>,
    by_relation: Vec<Vec<Triple>>,
    tails: HashMap<(EntityId, RelationId), Vec<EntityId>>,
    duplicates_dropped: usize,
}

impl KnowledgeGraph {
    /// Reads a tab-separated `head<TAB>relation<TAB>tail` file.
    pub fn load_triples(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut rows = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 3 || fields.iter().any(|f| f.is_empty()) {
                return Err(Error::Parse {
                    path: path.to_owned(),
                    line: i + 1,
                    msg: format!("expected 3 non-empty tab-separated fields, got {}", fields.len()),
                });
            }
            rows.push((fields[0], fields[1], fields[2]));
        }
        if rows.is_empty() {
            return Err(Error::EmptyFile(path.to_owned()));
        }
        let kg = Self::from_named(rows);
        if kg.duplicates_dropped > 0 {
            log::warn!(
                "{}: dropped {} duplicate triples",
                path.display(),
                kg.duplicates_dropped
            );
        }
        Ok(kg)
    }

    pub fn from_named<'a>(rows: impl IntoIterator<Item = (&'a str, &'a str, &'a str)>) -> Self {
        let mut entities = Vocab::default();
        let mut relations = Vocab::default();
        let mut seen = HashSet::new();
        let mut triples = Vec::new();
        let mut duplicates_dropped = 0;
        for (h, r, t) in rows {
            let triple = Triple::new(entities.intern(h), relations.intern(r), entities.intern(t));
            if seen.insert(triple) {
                triples.push(triple);
            } else {
                duplicates_dropped += 1;
            }
        }

        let mut by_relation = vec![Vec::new(); relations.len()];
        let mut tails: HashMap<_, Vec<_>> = HashMap::new();
        for t in &triples {
            by_relation[t.relation].push(*t);
            tails.entry((t.head, t.relation)).or_default().push(t.tail);
        }
        for list in tails.values_mut() {
            list.sort_unstable();
        }

        KnowledgeGraph {
            entities,
            relations,
            triples,
            by_relation,
            tails,
            duplicates_dropped,
        }
    }

    /// Writes the triples back out in stored order; reloading the file
    /// reproduces the same id assignment.
    pub fn write_triples(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut out = String::new();
        for t in &self.triples {
            let _ = writeln!(
                out,
                "{}\t{}\t{}",
                self.entities.name(t.head),
                self.relations.name(t.relation),
                self.entities.name(t.tail)
            );
        }
        std::fs::write(path.as_ref(), out).map_err(|e| Error::io(path.as_ref(), e))
    }

    pub fn entities(&self) -> &Vocab {
        &self.entities
    }

    pub fn relations(&self) -> &Vocab {
        &self.relations
    }

    pub fn entity_count(&self) -> usize {
        self.entities.len()
    }

    pub fn relation_count(&self) -> usize {
        self.relations.len()
    }

    pub fn triples(&self) -> &[Triple] {
        &self.triples
    }

    pub fn duplicates_dropped(&self) -> usize {
        self.duplicates_dropped
    }

    pub fn relation_triples(&self, relation: RelationId) -> &[Triple] {
        &self.by_relation[relation]
    }

    /// Every known tail of `(head, relation)`, sorted.
    pub fn true_tails(&self, head: EntityId, relation: RelationId) -> &[EntityId] {
        self.tails
            .get(&(head, relation))
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    pub fn entity_id(&self, name: &str) -> Result<EntityId> {
        self.entities
            .id(name)
            .ok_or_else(|| Error::UnknownEntity(name.to_owned()))
    }

    pub fn relation_id(&self, name: &str) -> Result<RelationId> {
        self.relations
            .id(name)
            .ok_or_else(|| Error::UnknownRelation(name.to_owned()))
    }

    pub fn relation_name(&self, relation: RelationId) -> &str {
        self.relations.name(relation)
    }

    /// Relations with at least `min` triples, by id.
    pub fn relations_with_min_triples(&self, min: usize) -> Vec<RelationId> {
        (0..self.relation_count())
            .filter(|&r| self.by_relation[r].len() >= min)
            .collect()
    }

    /// SHA-256 over both vocabularies in id order; pins checkpoints to a graph.
    pub fn vocab_digest(&self) -> String {
        let mut h = Sha256::new();
        for name in self.entities.names() {
            h.update(name.as_bytes());
            h.update(b"\n");
        }
        h.update(b"\0");
        for name in self.relations.names() {
            h.update(name.as_bytes());
            h.update(b"\n");
        }
        h.finalize().iter().fold(String::with_capacity(64), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
    }
}
