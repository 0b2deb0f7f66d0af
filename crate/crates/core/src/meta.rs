//! Relation-meta learner, margin losses over support and query sets, and
//! the one-step gradient-meta refinement.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kg::{sample_negative_tails, CandidatePools, EntityId, KnowledgeGraph, Triple};
use crate::numerics::{axpy, glorot_uniform, mlp_forward_cached, MlpCache, ParamBundle, Parameters, Tensor};
use crate::pretrain::{residual, EmbeddingTable};

/// Hidden activation slope of the relation-meta learner.
pub const RML_SLOPE: f64 = 0.2;

/// Which transformations a relation meta vector has been through.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Stage {
    Raw,
    Context,
    Adapted,
    Refined,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RelationMeta {
    pub vector: Vec<f64>,
    pub stage: Stage,
}

impl RelationMeta {
    pub fn new(vector: Vec<f64>, stage: Stage) -> Self {
        RelationMeta { vector, stage }
    }

    pub fn dim(&self) -> usize {
        self.vector.len()
    }

    pub fn expect_stage(&self, stage: Stage) -> Result<()> {
        if self.stage == stage {
            Ok(())
        } else {
            Err(Error::Stage {
                expected: stage,
                found: self.stage,
            })
        }
    }
}

/// Every scalar knob of meta-training and meta-testing.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    /// Weight of the adapter network against the residual.
    pub alpha: f64,
    /// Weight of the neighbor context against the entity's own embedding.
    pub mu: f64,
    /// Step size of the gradient-meta refinement.
    pub beta: f64,
    /// Margin of the hinge losses.
    pub gamma: f64,
    pub shots: usize,
    pub dim: usize,
    pub rml_hidden: usize,
    pub adapter_hidden: usize,
    pub hops: usize,
    pub max_neighbors: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub eval_every: usize,
    pub patience: usize,
    pub adapter_steps: usize,
    pub adapter_tol: f64,
    pub negatives_per_positive: usize,
    pub queries: usize,
    pub filtered: bool,
    pub seed: u64,
}

impl Default for Hyperparams {
    /// UMLS settings.
    fn default() -> Self {
        Hyperparams {
            alpha: 0.1,
            mu: 0.3,
            beta: 5.0,
            gamma: 1.0,
            shots: 3,
            dim: 100,
            rml_hidden: 200,
            adapter_hidden: 50,
            hops: 1,
            max_neighbors: 50,
            lr: 0.001,
            batch_size: 64,
            epochs: 100_000,
            eval_every: 1000,
            patience: 30,
            adapter_steps: 50,
            adapter_tol: 1e-6,
            negatives_per_positive: 1,
            queries: 3,
            filtered: true,
            seed: 0,
        }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if !(0.0..=1.0).contains(&self.alpha) {
            return bad(format!("adapter.alpha = {} outside [0, 1]", self.alpha));
        }
        if !(0.0..=1.0).contains(&self.mu) {
            return bad(format!("context.mu = {} outside [0, 1]", self.mu));
        }
        if !(self.beta > 0.0) || !(self.gamma > 0.0) || !(self.lr > 0.0) {
            return bad("train.beta, train.gamma and train.lr must be positive".into());
        }
        if !(self.adapter_tol >= 0.0) {
            return bad("test.adapter_tol must be non-negative".into());
        }
        if !(1..=3).contains(&self.hops) {
            return bad(format!("context.hops = {} outside 1..=3", self.hops));
        }
        let counts = [
            ("test.shots", self.shots),
            ("model.dim", self.dim),
            ("model.rml_hidden", self.rml_hidden),
            ("adapter.hidden", self.adapter_hidden),
            ("context.max_neighbors", self.max_neighbors),
            ("train.batch_size", self.batch_size),
            ("train.eval_every", self.eval_every),
            ("train.patience", self.patience),
            ("train.queries", self.queries),
        ];
        if let Some((name, _)) = counts.iter().find(|(_, v)| *v == 0) {
            return bad(format!("{name} must be positive"));
        }
        if self.negatives_per_positive != 1 {
            return bad("exactly one negative per positive is supported".into());
        }
        if self.adapter_hidden >= self.dim {
            log::warn!(
                "adapter.hidden = {} is not a bottleneck for model.dim = {}",
                self.adapter_hidden,
                self.dim
            );
        }
        Ok(())
    }
}

/// Relation-meta learner weights: `concat(h, t)` (2d) -> hidden -> d.
#[derive(Clone, Debug, PartialEq)]
pub struct RmlParams(ParamBundle);

pub const RML_NAMES: [&str; 4] = ["rml.w1", "rml.b1", "rml.w2", "rml.b2"];

impl RmlParams {
    pub fn init<R: Rng>(dim: usize, hidden: usize, rng: &mut R) -> Self {
        let w1 = glorot_uniform(hidden, 2 * dim, rng);
        let w2 = glorot_uniform(dim, hidden, rng);
        Self::from_tensors([w1, Tensor::zeros(&[hidden]), w2, Tensor::zeros(&[dim])])
            .expect("shapes chain by construction")
    }

    pub fn from_tensors(t: [Tensor; 4]) -> Result<Self> {
        let mut b = ParamBundle::new();
        for (name, tensor) in RML_NAMES.iter().zip(t) {
            b.push(*name, tensor)?;
        }
        let input = b.tensors()[0].cols();
        if !input.is_multiple_of(2) {
            return Err(Error::Shape("relation-meta input must be a (head, tail) pair".into()));
        }
        let (_, out) = crate::numerics::check_shapes(&b, input)?;
        if out * 2 != input {
            return Err(Error::Shape(format!("relation-meta maps {input} -> {out}, expected 2d -> d")));
        }
        Ok(RmlParams(b))
    }

    pub fn dim(&self) -> usize {
        self.0.tensors()[3].len()
    }

    pub fn bundle(&self) -> &ParamBundle {
        &self.0
    }

    pub fn bundle_mut(&mut self) -> &mut ParamBundle {
        &mut self.0
    }

    pub fn into_bundle(self) -> ParamBundle {
        self.0
    }
}

impl Parameters for RmlParams {
    fn tensors(&self) -> &[Tensor] {
        self.0.tensors()
    }

    fn tensors_mut(&mut self) -> &mut [Tensor] {
        self.0.tensors_mut()
    }
}

/// Relation meta from (head, tail) embedding pairs: mean of the learner's
/// outputs. Pass `stage = Context` when the pairs are context-augmented.
pub fn relation_meta(pairs: &[(&[f64], &[f64])], phi: &RmlParams, stage: Stage) -> Result<RelationMeta> {
    relation_meta_cached(pairs, phi, stage).map(|(r, _)| r)
}

pub(crate) fn relation_meta_cached(
    pairs: &[(&[f64], &[f64])],
    phi: &RmlParams,
    stage: Stage,
) -> Result<(RelationMeta, Vec<MlpCache>)> {
    if pairs.is_empty() {
        return Err(Error::Empty("support set"));
    }
    let d = phi.dim();
    let mut mean = vec![0.0; d];
    let mut caches = Vec::with_capacity(pairs.len());
    let mut input = Vec::with_capacity(2 * d);
    for (h, t) in pairs {
        input.clear();
        input.extend_from_slice(h);
        input.extend_from_slice(t);
        let (out, cache) = mlp_forward_cached(&input, phi.bundle(), RML_SLOPE)?;
        axpy(1.0, &out, &mut mean);
        caches.push(cache);
    }
    let k = pairs.len() as f64;
    mean.iter_mut().for_each(|v| *v /= k);
    Ok((RelationMeta::new(mean, stage), caches))
}

/// Hinge sum `sum_i [gamma + s(h_i, r, t_i) - s(h_i, r, t'_i)]_+` and its
/// gradients. A term exactly at the margin counts as inactive.
#[derive(Clone, Debug)]
pub struct HingeOutcome {
    pub loss: f64,
    pub active_terms: usize,
    /// `dL/dr`.
    pub d_relation: Vec<f64>,
    /// `(entity, dL/demb(entity))`, one entry per touched slot.
    pub d_entities: Vec<(EntityId, Vec<f64>)>,
}

pub(crate) fn hinge(
    triples: &[Triple],
    neg_tails: &[EntityId],
    r: &[f64],
    emb: &EmbeddingTable,
    gamma: f64,
    entity_grads: bool,
) -> HingeOutcome {
    let mut out = HingeOutcome {
        loss: 0.0,
        active_terms: 0,
        d_relation: vec![0.0; r.len()],
        d_entities: Vec::new(),
    };
    for (t, &neg) in triples.iter().zip(neg_tails) {
        let h = emb.row(t.head);
        let (vp, sp) = residual(h, r, emb.row(t.tail));
        let (vn, sn) = residual(h, r, emb.row(neg));
        let term = gamma + sp - sn;
        if term <= 0.0 {
            continue;
        }
        out.loss += term;
        out.active_terms += 1;
        // zero residual: subgradient 0 for that score
        let up: Vec<f64> = if sp > 0.0 { vp.iter().map(|v| v / sp).collect() } else { vec![0.0; r.len()] };
        let un: Vec<f64> = if sn > 0.0 { vn.iter().map(|v| v / sn).collect() } else { vec![0.0; r.len()] };
        let diff: Vec<f64> = up.iter().zip(&un).map(|(a, b)| a - b).collect();
        axpy(1.0, &diff, &mut out.d_relation);
        if entity_grads {
            out.d_entities.push((t.head, diff));
            out.d_entities.push((t.tail, up.iter().map(|v| -v).collect()));
            out.d_entities.push((neg, un));
        }
    }
    out
}

/// Support loss with explicit negative tails (one per support triple).
pub fn support_loss(
    support: &[Triple],
    neg_tails: &[EntityId],
    r: &RelationMeta,
    emb: &EmbeddingTable,
    gamma: f64,
) -> Result<f64> {
    check_pairs(support, neg_tails, r, emb)?;
    Ok(hinge(support, neg_tails, &r.vector, emb, gamma, false).loss)
}

/// Support loss with negatives drawn from the candidate pools under `seed`.
pub fn support_loss_seeded(
    kg: &KnowledgeGraph,
    pools: &CandidatePools,
    support: &[Triple],
    r: &RelationMeta,
    emb: &EmbeddingTable,
    gamma: f64,
    seed: u64,
) -> Result<f64> {
    let negs = sample_negative_tails(kg, pools, support, seed)?;
    support_loss(support, &negs, r, emb, gamma)
}

/// `dL_S/dr` with the entity table held fixed.
pub fn gradient_meta(
    support: &[Triple],
    neg_tails: &[EntityId],
    r: &RelationMeta,
    emb: &EmbeddingTable,
    gamma: f64,
) -> Result<Vec<f64>> {
    check_pairs(support, neg_tails, r, emb)?;
    Ok(hinge(support, neg_tails, &r.vector, emb, gamma, false).d_relation)
}

/// `r - beta * g`, tagged refined.
pub fn refine_meta(r: &RelationMeta, g: &[f64], beta: f64) -> Result<RelationMeta> {
    if g.len() != r.dim() {
        return Err(Error::Shape(format!("gradient meta has {} dims, relation meta {}", g.len(), r.dim())));
    }
    let v = r.vector.iter().zip(g).map(|(x, gi)| x - beta * gi).collect();
    Ok(RelationMeta::new(v, Stage::Refined))
}

/// Query loss; only defined for a refined relation meta.
pub fn query_loss(
    query_pos: &[Triple],
    query_neg: &[Triple],
    r: &RelationMeta,
    emb: &EmbeddingTable,
    gamma: f64,
) -> Result<f64> {
    r.expect_stage(Stage::Refined)?;
    let negs = paired_negatives(query_pos, query_neg)?;
    check_pairs(query_pos, &negs, r, emb)?;
    Ok(hinge(query_pos, &negs, &r.vector, emb, gamma, false).loss)
}

/// Support loss as a function of the relation meta and the entity table,
/// for gradient checking. Parameters are `relation` (a `d` vector) and
/// `emb` (the entity table).
#[derive(Clone, Debug)]
pub struct SupportObjective {
    pub support: Vec<Triple>,
    pub neg_tails: Vec<EntityId>,
    pub gamma: f64,
}

impl SupportObjective {
    pub fn bundle(relation: Vec<f64>, emb: Tensor) -> ParamBundle {
        ParamBundle::new()
            .with("relation", Tensor::vector(relation))
            .and_then(|b| b.with("emb", emb))
            .expect("distinct names")
    }

    fn unpack(p: &ParamBundle) -> Result<(&[f64], EmbeddingTable)> {
        match (p.get("relation"), p.get("emb")) {
            (Some(r), Some(e)) if p.len() == 2 && e.shape().len() == 2 && e.cols() == r.len() => {
                Ok((r.data(), EmbeddingTable::new(e.clone(), false)?))
            }
            _ => Err(Error::Shape("support objective expects `relation` and `emb`".into())),
        }
    }
}

impl crate::numerics::Objective for SupportObjective {
    fn loss(&self, p: &ParamBundle) -> Result<f64> {
        let (r, emb) = Self::unpack(p)?;
        Ok(hinge(&self.support, &self.neg_tails, r, &emb, self.gamma, false).loss)
    }

    fn loss_and_gradient(&self, p: &ParamBundle) -> Result<(f64, ParamBundle)> {
        let (r, emb) = Self::unpack(p)?;
        let h = hinge(&self.support, &self.neg_tails, r, &emb, self.gamma, true);
        let mut g = p.zeros_like();
        let t = g.tensors_mut();
        t[0].data_mut().copy_from_slice(&h.d_relation);
        for (e, d) in &h.d_entities {
            axpy(1.0, d, t[1].row_mut(*e));
        }
        Ok((h.loss, g))
    }
}

pub(crate) fn paired_negatives(pos: &[Triple], neg: &[Triple]) -> Result<Vec<EntityId>> {
    if pos.len() != neg.len() {
        return Err(Error::Shape(format!("{} positives, {} negatives", pos.len(), neg.len())));
    }
    pos.iter()
        .zip(neg)
        .map(|(p, n)| {
            if p.head == n.head && p.relation == n.relation {
                Ok(n.tail)
            } else {
                Err(Error::Shape("negative does not corrupt the tail of its positive".into()))
            }
        })
        .collect()
}

fn check_pairs(triples: &[Triple], negs: &[EntityId], r: &RelationMeta, emb: &EmbeddingTable) -> Result<()> {
    if triples.len() != negs.len() {
        return Err(Error::Shape(format!("{} triples, {} negatives", triples.len(), negs.len())));
    }
    if r.dim() != emb.dim() {
        return Err(Error::Shape(format!("relation meta dim {} vs embeddings {}", r.dim(), emb.dim())));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{mlp_forward, Tensor};
    use crate::seed;

    fn table(rows: &[&[f64]]) -> EmbeddingTable {
        let d = rows[0].len();
        let data = rows.iter().flat_map(|r| r.iter().copied()).collect();
        EmbeddingTable::new(Tensor::matrix(rows.len(), d, data).unwrap(), false).unwrap()
    }

    fn random_table(n: usize, d: usize, seed: u64) -> EmbeddingTable {
        let mut rng = seed::rng(seed, &[]);
        let data = (0..n * d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        EmbeddingTable::new(Tensor::matrix(n, d, data).unwrap(), false).unwrap()
    }

    #[test]
    fn single_pair_mean_is_the_output() {
        let mut rng = seed::rng(1, &[]);
        let phi = RmlParams::init(4, 8, &mut rng);
        let h = [0.1, 0.2, -0.3, 0.4];
        let t = [0.5, -0.1, 0.0, 0.2];
        let r = relation_meta(&[(&h, &t)], &phi, Stage::Raw).unwrap();
        let x: Vec<f64> = h.iter().chain(&t).copied().collect();
        assert_eq!(r.vector, mlp_forward(&x, phi.bundle(), RML_SLOPE).unwrap());
        let twice = relation_meta(&[(&h, &t), (&h, &t)], &phi, Stage::Raw).unwrap();
        for (a, b) in twice.vector.iter().zip(&r.vector) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn three_pairs_average_independent_passes() {
        let mut rng = seed::rng(2, &[]);
        let phi = RmlParams::init(5, 10, &mut rng);
        let emb = random_table(6, 5, 3);
        let pairs: Vec<(&[f64], &[f64])> = (0..3).map(|i| (emb.row(2 * i), emb.row(2 * i + 1))).collect();
        let r = relation_meta(&pairs, &phi, Stage::Raw).unwrap();
        let mut oracle = vec![0.0; 5];
        for (h, t) in &pairs {
            let x: Vec<f64> = h.iter().chain(t.iter()).copied().collect();
            for (o, y) in oracle.iter_mut().zip(mlp_forward(&x, phi.bundle(), RML_SLOPE).unwrap()) {
                *o += y / 3.0;
            }
        }
        for (a, b) in r.vector.iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn empty_support_is_an_error() {
        let mut rng = seed::rng(1, &[]);
        let phi = RmlParams::init(4, 8, &mut rng);
        assert!(relation_meta(&[], &phi, Stage::Raw).is_err());
    }

    // Entities on a line so that scores are easy to place: head at 0,
    // r = 0, tails at chosen distances.
    fn line_instance(pos_dist: f64, neg_dist: f64) -> (EmbeddingTable, Vec<Triple>, Vec<EntityId>, RelationMeta) {
        let emb = table(&[&[0.0, 0.0], &[pos_dist, 0.0], &[0.0, neg_dist]]);
        (emb, vec![Triple::new(0, 0, 1)], vec![2], RelationMeta::new(vec![0.0, 0.0], Stage::Raw))
    }

    #[test]
    fn satisfied_margin_contributes_nothing() {
        let (emb, s, n, r) = line_instance(0.2, 1.5);
        assert_eq!(support_loss(&s, &n, &r, &emb, 1.0).unwrap(), 0.0);
        assert_eq!(gradient_meta(&s, &n, &r, &emb, 1.0).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn violated_margin_is_clamped_arithmetic() {
        let (emb, s, n, r) = line_instance(1.0, 0.5);
        assert!((support_loss(&s, &n, &r, &emb, 1.0).unwrap() - 1.5).abs() < 1e-15);
        let refined = RelationMeta::new(r.vector.clone(), Stage::Refined);
        let q_neg = vec![Triple::new(0, 0, 2)];
        assert!((query_loss(&s, &q_neg, &refined, &emb, 1.0).unwrap() - 1.5).abs() < 1e-15);
        assert!(query_loss(&s, &q_neg, &r, &emb, 1.0).is_err());
    }

    #[test]
    fn single_active_term_gradient_formula() {
        let emb = random_table(3, 4, 17);
        let r = RelationMeta::new(vec![0.3, -0.2, 0.1, 0.05], Stage::Raw);
        let s = vec![Triple::new(0, 0, 1)];
        let g = gradient_meta(&s, &[2], &r, &emb, 10.0).unwrap();
        let diff = |t: usize| -> Vec<f64> {
            (0..4).map(|i| emb.row(0)[i] + r.vector[i] - emb.row(t)[i]).collect()
        };
        let (p, n) = (diff(1), diff(2));
        let (np, nn) = (crate::numerics::norm(&p), crate::numerics::norm(&n));
        for i in 0..4 {
            assert!((g[i] - (p[i] / np - n[i] / nn)).abs() < 1e-12);
        }
    }

    #[test]
    fn refine_examples() {
        let r = RelationMeta::new(vec![1.0, 1.0], Stage::Adapted);
        let out = refine_meta(&r, &[0.1, 0.2], 5.0).unwrap();
        assert!((out.vector[0] - 0.5).abs() < 1e-15 && out.vector[1].abs() < 1e-15);
        assert_eq!(out.stage, Stage::Refined);
        assert_eq!(refine_meta(&r, &[0.0, 0.0], 5.0).unwrap().vector, r.vector);
        assert_eq!(refine_meta(&r, &[0.3, 0.4], 0.0).unwrap().vector, r.vector);
        assert!(refine_meta(&r, &[0.3], 1.0).is_err());
    }

    #[test]
    fn zero_residual_contributes_zero_gradient() {
        // positive tail exactly at h + r
        let emb = table(&[&[0.0, 0.0], &[1.0, 0.0], &[1.0, 0.5]]);
        let r = RelationMeta::new(vec![1.0, 0.0], Stage::Raw);
        let g = gradient_meta(&[Triple::new(0, 0, 1)], &[2], &r, &emb, 1.0).unwrap();
        // only -unit(h + r - t') = -(0, -1)
        assert!((g[0]).abs() < 1e-15 && (g[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn hyperparam_ranges() {
        let mut hp = Hyperparams::default();
        hp.validate().unwrap();
        hp.alpha = 1.5;
        assert!(hp.validate().is_err());
        hp = Hyperparams { beta: 0.0, ..Default::default() };
        assert!(hp.validate().is_err());
        hp = Hyperparams { hops: 4, ..Default::default() };
        assert!(hp.validate().is_err());
    }
}
