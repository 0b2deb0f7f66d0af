//! Tail ranking, MRR and Hits@N, split evaluation with per-relation
//! adapter tuning, and pairwise relation similarity.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::adapter::{support_relation_meta, tune_adapter, AdapterParams, ContextTable, Pipeline, TuneOutcome};
use crate::error::{Error, Result};
use crate::kg::{sample_negative_tails, support_and_queries, EntityId, KnowledgeGraph, RelationId, Triple};
use crate::meta::{gradient_meta, refine_meta, Hyperparams, RelationMeta, Stage};
use crate::numerics::{axpy, dot, norm};
use crate::pretrain::{distance, EmbeddingTable};
use crate::seed::{self, stream};
use crate::train::{Dataset, ModelState};

/// Rank of one query's true tail among its candidates (1 = best).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RankResult {
    pub query: usize,
    pub rank: usize,
    pub candidates: usize,
}

/// Ranks `truth` among `candidates` by ascending score `||h + r - t||`.
/// Ties go against the true tail for every candidate with a smaller id.
pub fn rank_true_tail(
    head: EntityId,
    truth: EntityId,
    r: &RelationMeta,
    emb: &EmbeddingTable,
    candidates: &[EntityId],
) -> Result<RankResult> {
    r.expect_stage(Stage::Refined)?;
    if !candidates.contains(&truth) {
        return Err(Error::MissingTruth(truth));
    }
    if r.dim() != emb.dim() {
        return Err(Error::Shape(format!("relation meta dim {} vs embeddings {}", r.dim(), emb.dim())));
    }
    let h = emb.row(head);
    let target = distance(h, &r.vector, emb.row(truth));
    let mut ahead = 0;
    let mut seen = BTreeSet::new();
    for &c in candidates {
        if c == truth || !seen.insert(c) {
            continue;
        }
        let s = distance(h, &r.vector, emb.row(c));
        if s < target || (s == target && c < truth) {
            ahead += 1;
        }
    }
    Ok(RankResult {
        query: 0,
        rank: ahead + 1,
        candidates: seen.len() + 1,
    })
}

/// MRR and Hits@{1,5,10} over a set of ranks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mrr: f64,
    pub hits1: f64,
    pub hits5: f64,
    pub hits10: f64,
    pub n_queries: usize,
}

pub fn compute_metrics(ranks: &[RankResult]) -> Result<Summary> {
    if ranks.is_empty() {
        return Err(Error::Empty("rank list"));
    }
    let n = ranks.len() as f64;
    let hits = |k: usize| ranks.iter().filter(|r| r.rank <= k).count() as f64 / n;
    Ok(Summary {
        mrr: ranks.iter().map(|r| 1.0 / r.rank as f64).sum::<f64>() / n,
        hits1: hits(1),
        hits5: hits(5),
        hits10: hits(10),
        n_queries: ranks.len(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Skipped {
    pub relation: String,
    pub reason: String,
}

/// Metrics of one evaluation run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub mrr: f64,
    pub hits1: f64,
    pub hits5: f64,
    pub hits10: f64,
    pub n_queries: usize,
    pub per_relation: BTreeMap<String, Summary>,
    pub skipped: Vec<Skipped>,
    pub variant: String,
    /// Effective run configuration, when produced by a command.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub config: BTreeMap<String, String>,
}

impl MetricsReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// A relation's support set, queries and the relation meta used to rank.
#[derive(Clone, Debug)]
pub struct AdaptedRelation {
    pub relation: RelationId,
    pub support: Vec<Triple>,
    pub support_negs: Vec<EntityId>,
    pub queries: Vec<Triple>,
    pub refined: RelationMeta,
    pub tuning: Option<TuneOutcome>,
}

/// Starting adapter for a meta-test relation.
pub fn initial_test_adapter(
    model: &ModelState,
    relation: RelationId,
    hp: &Hyperparams,
    pipeline: Pipeline,
    seed: u64,
) -> Result<AdapterParams> {
    if pipeline.transfer {
        return model
            .theta
            .clone()
            .ok_or_else(|| Error::Config("transfer-adapter needs a meta-trained adapter in the checkpoint".into()));
    }
    let mut rng = seed::rng(seed, &[stream::TEST_ADAPTER, relation as u64]);
    Ok(AdapterParams::init(model.emb.dim(), hp.adapter_hidden, &mut rng))
}

/// Splits a relation into support and queries, then builds its refined
/// relation meta with the pipeline's meta-test procedure.
pub fn adapt_relation(
    data: &Dataset,
    relation: RelationId,
    model: &ModelState,
    context: Option<&ContextTable>,
    hp: &Hyperparams,
    pipeline: Pipeline,
    seed: u64,
) -> Result<AdaptedRelation> {
    let (support, queries) =
        support_and_queries(&data.kg, relation, hp.shots, seed::derive(seed, &[stream::EVAL_SPLIT]))?;
    let negs_seed = seed::derive(seed, &[stream::SUPPORT_NEGATIVES, relation as u64]);
    let support_negs = sample_negative_tails(&data.kg, &data.pools, &support, negs_seed)?;
    let ctx = if pipeline.context { context.map(|c| (c, hp.mu)) } else { None };
    if pipeline.context && ctx.is_none() {
        return Err(Error::Config("pipeline uses context but no context table was given".into()));
    }
    let r_c = support_relation_meta(&support, &model.emb, ctx, &model.phi)?;
    let (refined, tuning) = if pipeline.test_adapter {
        let theta = initial_test_adapter(model, relation, hp, pipeline, seed)?;
        let out = tune_adapter(&support, &support_negs, &r_c, &model.emb, theta, hp)?;
        (out.refined.clone(), Some(out))
    } else {
        let g = gradient_meta(&support, &support_negs, &r_c, &model.emb, hp.gamma)?;
        (refine_meta(&r_c, &g, hp.beta)?, None)
    };
    Ok(AdaptedRelation {
        relation,
        support,
        support_negs,
        queries,
        refined,
        tuning,
    })
}

/// Candidate list for one query, with the truth added if the pool lacks it.
pub fn query_candidates(data: &Dataset, q: &Triple) -> Vec<EntityId> {
    let mut c = data.pools.candidate_set(&data.kg, q.relation, q.head, q.tail);
    if let Err(pos) = c.binary_search(&q.tail) {
        c.insert(pos, q.tail);
    }
    c
}

/// Evaluates every relation in `relations` (in id order): adapts on `K`
/// support triples, ranks every remaining triple. Relations that cannot be
/// evaluated are listed in `skipped`.
pub fn evaluate_split(
    data: &Dataset,
    relations: &[RelationId],
    model: &ModelState,
    context: Option<&ContextTable>,
    hp: &Hyperparams,
    pipeline: Pipeline,
    seed: u64,
) -> Result<MetricsReport> {
    let mut rels = relations.to_vec();
    rels.sort_unstable();
    rels.dedup();
    let mut all = Vec::new();
    let mut per_relation = BTreeMap::new();
    let mut skipped = Vec::new();
    for r in rels {
        let name = data.kg.relation_name(r).to_string();
        if !data.pools.is_evaluable(r) {
            log::warn!("relation `{name}`: candidate pool too small, skipped");
            skipped.push(Skipped {
                relation: name,
                reason: format!("fewer than {} candidates", crate::kg::MIN_CANDIDATES),
            });
            continue;
        }
        let adapted = match adapt_relation(data, r, model, context, hp, pipeline, seed) {
            Ok(a) => a,
            Err(e @ (Error::InsufficientTriples { .. } | Error::NoNegatives(_))) => {
                log::warn!("relation `{name}`: {e}, skipped");
                skipped.push(Skipped {
                    relation: name,
                    reason: e.to_string(),
                });
                continue;
            }
            Err(e) => return Err(e),
        };
        let mut ranks = Vec::with_capacity(adapted.queries.len());
        for q in &adapted.queries {
            let cands = query_candidates(data, q);
            let mut rr = rank_true_tail(q.head, q.tail, &adapted.refined, &model.emb, &cands)?;
            rr.query = all.len() + ranks.len();
            ranks.push(rr);
        }
        per_relation.insert(name, compute_metrics(&ranks)?);
        all.extend(ranks);
    }
    let total = compute_metrics(&all)?;
    Ok(MetricsReport {
        mrr: total.mrr,
        hits1: total.hits1,
        hits5: total.hits5,
        hits10: total.hits10,
        n_queries: total.n_queries,
        per_relation,
        skipped,
        variant: pipeline.name(),
        config: BTreeMap::new(),
    })
}

/// Pairwise cosine similarity of relations, each represented by the mean
/// embedding of the entities in its triples.
#[derive(Clone, Debug, PartialEq)]
pub struct SimilarityMatrix {
    pub names: Vec<String>,
    pub values: Vec<Vec<f64>>,
    /// Relations whose mean embedding is the zero vector; their
    /// similarities are 0.
    pub zero_vectors: Vec<String>,
}

pub fn relation_similarity_matrix(
    kg: &KnowledgeGraph,
    emb: &EmbeddingTable,
    relations: &[RelationId],
) -> Result<SimilarityMatrix> {
    if relations.is_empty() {
        return Err(Error::Empty("relation list"));
    }
    let mut reps = Vec::with_capacity(relations.len());
    for &r in relations {
        let triples = kg.relation_triples(r);
        if triples.is_empty() {
            return Err(Error::Empty("relation without triples"));
        }
        let ents: BTreeSet<EntityId> = triples.iter().flat_map(|t| [t.head, t.tail]).collect();
        let mut m = vec![0.0; emb.dim()];
        for &e in &ents {
            axpy(1.0, emb.row(e), &mut m);
        }
        let k = ents.len() as f64;
        m.iter_mut().for_each(|v| *v /= k);
        reps.push(m);
    }
    let norms: Vec<f64> = reps.iter().map(|v| norm(v)).collect();
    let n = relations.len();
    let mut values = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i..n {
            let s = if norms[i] == 0.0 || norms[j] == 0.0 {
                0.0
            } else if i == j {
                1.0
            } else {
                (dot(&reps[i], &reps[j]) / (norms[i] * norms[j])).clamp(-1.0, 1.0)
            };
            values[i][j] = s;
            values[j][i] = s;
        }
    }
    let names = relations.iter().map(|&r| kg.relation_name(r).to_string()).collect::<Vec<_>>();
    let zero_vectors = names
        .iter()
        .zip(&norms)
        .filter(|(_, &n)| n == 0.0)
        .map(|(name, _)| name.clone())
        .collect::<Vec<_>>();
    for name in &zero_vectors {
        log::warn!("relation `{name}` has a zero mean embedding; its similarities are set to 0");
    }
    Ok(SimilarityMatrix {
        names,
        values,
        zero_vectors,
    })
}

impl SimilarityMatrix {
    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    /// Largest `|s_ij - s_ji|`.
    pub fn asymmetry(&self) -> f64 {
        let n = self.len();
        (0..n)
            .flat_map(|i| (0..n).map(move |j| (i, j)))
            .map(|(i, j)| (self.values[i][j] - self.values[j][i]).abs())
            .fold(0.0, f64::max)
    }

    /// Mean and population standard deviation of the entries above the
    /// diagonal.
    pub fn off_diagonal_stats(&self) -> (f64, f64) {
        let xs: Vec<f64> = (0..self.len())
            .flat_map(|i| self.values[i][i + 1..].iter().copied())
            .collect();
        if xs.is_empty() {
            return (0.0, 0.0);
        }
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        (mean, var.sqrt())
    }

    pub fn summary_line(&self) -> String {
        let (mean, std) = self.off_diagonal_stats();
        format!("relations={} off_diagonal_mean={mean:.6} off_diagonal_std={std:.6}", self.len())
    }

    /// Header row and first column hold relation names; 6 decimals.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["relation".to_string()];
        header.extend(self.names.iter().cloned());
        w.write_record(&header)?;
        for (name, row) in self.names.iter().zip(&self.values) {
            let mut rec = vec![name.clone()];
            rec.extend(row.iter().map(|v| format!("{v:.6}")));
            w.write_record(&rec)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Config(format!("csv buffer: {e}")))?;
        Ok(String::from_utf8(bytes).expect("csv of utf-8 fields"))
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()?).map_err(|e| Error::io(path, e))
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut r = csv::Reader::from_reader(text.as_bytes());
        let names: Vec<String> = r.headers()?.iter().skip(1).map(str::to_string).collect();
        let mut values = Vec::new();
        for (i, rec) in r.records().enumerate() {
            let rec = rec?;
            let bad = |msg: String| Error::Parse {
                path: "similarity.csv".into(),
                line: i + 2,
                msg,
            };
            if rec.get(0) != names.get(i).map(String::as_str) || rec.len() != names.len() + 1 {
                return Err(bad("row label or width does not match the header".into()));
            }
            let row = rec
                .iter()
                .skip(1)
                .map(|v| v.parse::<f64>().map_err(|e| bad(format!("`{v}`: {e}"))))
                .collect::<Result<Vec<_>>>()?;
            values.push(row);
        }
        if values.len() != names.len() {
            return Err(Error::Parse {
                path: "similarity.csv".into(),
                line: values.len() + 1,
                msg: format!("{} rows for {} relations", values.len(), names.len()),
            });
        }
        Ok(SimilarityMatrix {
            names,
            values,
            zero_vectors: Vec::new(),
        })
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Tensor;
    use rand::Rng;

    fn line_emb(values: &[f64]) -> EmbeddingTable {
        EmbeddingTable::new(Tensor::matrix(values.len(), 1, values.to_vec()).unwrap(), false).unwrap()
    }

    fn refined(v: Vec<f64>) -> RelationMeta {
        RelationMeta::new(v, Stage::Refined)
    }

    #[test]
    fn clear_winner_ranks_first() {
        // head at 0, r = 0: scores are |t|
        let emb = line_emb(&[0.0, 0.1, 0.3, 0.5]);
        let rr = rank_true_tail(0, 1, &refined(vec![0.0]), &emb, &[1, 2, 3]).unwrap();
        assert_eq!(rr.rank, 1);
        assert_eq!(rr.candidates, 3);
    }

    #[test]
    fn ties_break_by_entity_id() {
        let emb = line_emb(&[0.0, 0.5, 0.5, 0.5]);
        let r = refined(vec![0.0]);
        assert_eq!(rank_true_tail(0, 1, &r, &emb, &[1, 2, 3]).unwrap().rank, 1);
        assert_eq!(rank_true_tail(0, 3, &r, &emb, &[1, 2, 3]).unwrap().rank, 3);
    }

    #[test]
    fn missing_truth_and_stage_are_errors() {
        let emb = line_emb(&[0.0, 0.5, 0.5]);
        assert!(matches!(
            rank_true_tail(0, 1, &refined(vec![0.0]), &emb, &[2]),
            Err(Error::MissingTruth(1))
        ));
        let raw = RelationMeta::new(vec![0.0], Stage::Adapted);
        assert!(rank_true_tail(0, 1, &raw, &emb, &[1, 2]).is_err());
    }

    #[test]
    fn rank_agrees_with_full_sort() {
        let mut rng = seed::rng(5, &[]);
        let n = 51;
        let data: Vec<f64> = (0..n * 3).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let emb = EmbeddingTable::new(Tensor::matrix(n, 3, data).unwrap(), false).unwrap();
        let r = refined(vec![0.1, -0.2, 0.3]);
        let cands: Vec<EntityId> = (1..n).collect();
        for truth in [1, 17, 50] {
            let mut scored: Vec<(f64, EntityId)> = cands
                .iter()
                .map(|&c| (distance(emb.row(0), &r.vector, emb.row(c)), c))
                .collect();
            scored.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let oracle = scored.iter().position(|&(_, c)| c == truth).unwrap() + 1;
            assert_eq!(rank_true_tail(0, truth, &r, &emb, &cands).unwrap().rank, oracle);
        }
    }

    fn ranks(rs: &[usize]) -> Vec<RankResult> {
        rs.iter()
            .map(|&rank| RankResult {
                query: 0,
                rank,
                candidates: 100,
            })
            .collect()
    }

    #[test]
    fn metrics_examples() {
        let m = compute_metrics(&ranks(&[1, 2, 4])).unwrap();
        assert!((m.mrr - (1.0 + 0.5 + 0.25) / 3.0).abs() < 1e-15);
        assert!((m.hits1 - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(m.hits5, 1.0);
        assert_eq!(m.hits10, 1.0);
        let ones = compute_metrics(&ranks(&[1, 1, 1])).unwrap();
        assert_eq!((ones.mrr, ones.hits1, ones.hits5, ones.hits10), (1.0, 1.0, 1.0, 1.0));
        assert!(compute_metrics(&[]).is_err());
    }

    fn kg5() -> KnowledgeGraph {
        KnowledgeGraph::from_named([
            ("a", "r1", "b"),
            ("b", "r2", "a"),
            ("c", "r3", "d"),
            ("a", "r4", "c"),
            ("d", "r5", "d"),
        ])
    }

    #[test]
    fn similarity_matches_cosine_oracle() {
        let kg = kg5();
        let mut rng = seed::rng(9, &[]);
        let data: Vec<f64> = (0..4 * 3).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let emb = EmbeddingTable::new(Tensor::matrix(4, 3, data).unwrap(), false).unwrap();
        let rels: Vec<RelationId> = (0..5).collect();
        let m = relation_similarity_matrix(&kg, &emb, &rels).unwrap();
        let ids = |names: &[&str]| names.iter().map(|n| kg.entity_id(n).unwrap()).collect::<Vec<_>>();
        let sets = [ids(&["a", "b"]), ids(&["a", "b"]), ids(&["c", "d"]), ids(&["a", "c"]), ids(&["d"])];
        let mean = |s: &[EntityId]| -> Vec<f64> {
            (0..3).map(|i| s.iter().map(|&e| emb.row(e)[i]).sum::<f64>() / s.len() as f64).collect()
        };
        for i in 0..5 {
            for j in 0..5 {
                let (u, v) = (mean(&sets[i]), mean(&sets[j]));
                let cos = dot(&u, &v) / (norm(&u) * norm(&v));
                assert!((m.values[i][j] - cos).abs() < 1e-12);
            }
        }
        assert!((m.values[0][1] - 1.0).abs() < 1e-12);
        assert_eq!(m.asymmetry(), 0.0);
    }

    #[test]
    fn orthogonal_and_zero_representations() {
        let kg = KnowledgeGraph::from_named([("a", "r1", "a"), ("b", "r2", "b"), ("z", "r3", "z")]);
        let emb = EmbeddingTable::new(Tensor::matrix(3, 2, vec![1.0, 0.0, 0.0, 1.0, 0.0, 0.0]).unwrap(), false).unwrap();
        let m = relation_similarity_matrix(&kg, &emb, &[0, 1, 2]).unwrap();
        assert_eq!(m.values[0][1], 0.0);
        assert_eq!(m.values[2][0], 0.0);
        assert_eq!(m.zero_vectors, vec!["r3".to_string()]);
    }

    #[test]
    fn csv_round_trip() {
        let kg = kg5();
        let emb = EmbeddingTable::new(Tensor::matrix(4, 2, vec![1.0, 0.2, 0.3, 1.0, -1.0, 0.5, 0.1, 0.1]).unwrap(), false)
            .unwrap();
        let m = relation_similarity_matrix(&kg, &emb, &[0, 2, 3]).unwrap();
        let back = SimilarityMatrix::from_csv(&m.to_csv().unwrap()).unwrap();
        assert_eq!(back.names, m.names);
        for i in 0..3 {
            for j in 0..3 {
                assert!((back.values[i][j] - m.values[i][j]).abs() <= 5e-7);
                assert_eq!(back.values[i][j], back.values[j][i]);
            }
        }
        assert!(m.summary_line().starts_with("relations=3"));
    }
}
