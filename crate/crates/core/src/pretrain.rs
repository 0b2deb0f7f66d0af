//! TransE pre-training of entity embeddings on the pre-train relations.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::kg::{KnowledgeGraph, RelationId, Triple};
use crate::numerics::{Objective, ParamBundle, Tensor};
use crate::seed::{self, stream};

/// Entity (or relation) vectors, one row per id.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingTable {
    table: Tensor,
    pub frozen: bool,
}

impl EmbeddingTable {
    pub fn new(table: Tensor, frozen: bool) -> Result<Self> {
        if table.shape().len() != 2 || table.cols() == 0 {
            return Err(Error::Shape(format!("embedding table shape {:?}", table.shape())));
        }
        if !table.is_finite() {
            return Err(Error::NonFinite("embedding table".into()));
        }
        Ok(EmbeddingTable { table, frozen })
    }

    pub fn dim(&self) -> usize {
        self.table.cols()
    }

    pub fn len(&self) -> usize {
        self.table.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn row(&self, id: usize) -> &[f64] {
        self.table.row(id)
    }

    pub fn tensor(&self) -> &Tensor {
        &self.table
    }

    pub fn tensor_mut(&mut self) -> &mut Tensor {
        &mut self.table
    }

    pub fn into_tensor(self) -> Tensor {
        self.table
    }

    pub fn frozen_copy(&self) -> Self {
        EmbeddingTable {
            table: self.table.clone(),
            frozen: true,
        }
    }
}

/// `||h + r - t||_2`; lower is more plausible.
pub fn transe_score(h: &[f64], r: &[f64], t: &[f64]) -> Result<f64> {
    if h.len() != r.len() || r.len() != t.len() {
        return Err(Error::Shape(format!(
            "score over dims {}, {}, {}",
            h.len(),
            r.len(),
            t.len()
        )));
    }
    Ok(distance(h, r, t))
}

#[inline]
pub(crate) fn distance(h: &[f64], r: &[f64], t: &[f64]) -> f64 {
    h.iter()
        .zip(r)
        .zip(t)
        .map(|((a, b), c)| {
            let x = a + b - c;
            x * x
        })
        .sum::<f64>()
        .sqrt()
}

/// `h + r - t` and its norm.
#[inline]
pub(crate) fn residual(h: &[f64], r: &[f64], t: &[f64]) -> (Vec<f64>, f64) {
    let v: Vec<f64> = h.iter().zip(r).zip(t).map(|((a, b), c)| a + b - c).collect();
    let n = crate::numerics::norm(&v);
    (v, n)
}

#[derive(Clone, Debug, PartialEq)]
pub struct PretrainConfig {
    pub dim: usize,
    pub margin: f64,
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        PretrainConfig {
            dim: 100,
            margin: 1.0,
            lr: 0.01,
            epochs: 1000,
            batch_size: 128,
            seed: 0,
        }
    }
}

impl PretrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.batch_size == 0 {
            return Err(Error::Config("pretrain dim and batch size must be positive".into()));
        }
        if !(self.margin > 0.0) || !(self.lr > 0.0) {
            return Err(Error::Config("pretrain margin and lr must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct PretrainOutput {
    pub entities: EmbeddingTable,
    pub relations: EmbeddingTable,
    /// Mean hinge loss per epoch.
    pub epoch_losses: Vec<f64>,
}

fn normalize_rows(t: &mut Tensor) {
    for i in 0..t.rows() {
        let row = t.row_mut(i);
        let n = crate::numerics::norm(row);
        if n > 0.0 {
            row.iter_mut().for_each(|v| *v /= n);
        }
    }
}

fn uniform_table<R: Rng>(rows: usize, dim: usize, rng: &mut R) -> Tensor {
    let bound = 6.0 / (dim as f64).sqrt();
    let data = (0..rows * dim).map(|_| rng.gen_range(-bound..bound)).collect();
    let mut t = Tensor::matrix(rows, dim, data).expect("sized by construction");
    normalize_rows(&mut t);
    t
}

/// Corrupts head or tail (fair coin) with a uniformly drawn different entity.
fn corrupt<R: Rng>(t: &Triple, entity_count: usize, rng: &mut R) -> Triple {
    let replace_head = rng.gen_bool(0.5);
    let original = if replace_head { t.head } else { t.tail };
    let mut e = rng.gen_range(0..entity_count);
    while e == original && entity_count > 1 {
        e = rng.gen_range(0..entity_count);
    }
    if replace_head {
        Triple { head: e, ..*t }
    } else {
        Triple { tail: e, ..*t }
    }
}

/// Hinge loss of one (positive, negative) pair; accumulates gradients
/// scaled by `scale` when the margin is violated.
fn pair_step(
    ent: &Tensor,
    rel: &Tensor,
    pos: &Triple,
    neg: &Triple,
    margin: f64,
    scale: f64,
    d_ent: &mut Tensor,
    d_rel: &mut Tensor,
) -> f64 {
    let (vp, sp) = residual(ent.row(pos.head), rel.row(pos.relation), ent.row(pos.tail));
    let (vn, sn) = residual(ent.row(neg.head), rel.row(neg.relation), ent.row(neg.tail));
    let loss = margin + sp - sn;
    if loss <= 0.0 {
        return 0.0;
    }
    if sp > 0.0 {
        let c = scale / sp;
        crate::numerics::axpy(c, &vp, d_ent.row_mut(pos.head));
        crate::numerics::axpy(c, &vp, d_rel.row_mut(pos.relation));
        crate::numerics::axpy(-c, &vp, d_ent.row_mut(pos.tail));
    }
    if sn > 0.0 {
        let c = scale / sn;
        crate::numerics::axpy(-c, &vn, d_ent.row_mut(neg.head));
        crate::numerics::axpy(-c, &vn, d_rel.row_mut(neg.relation));
        crate::numerics::axpy(c, &vn, d_ent.row_mut(neg.tail));
    }
    loss
}

/// Trains TransE with mini-batch SGD on the triples of `relations`.
///
/// Entity rows are projected to the unit sphere at the start of every
/// epoch and once more at the end; relation rows are free.
pub fn pretrain_transe(
    kg: &KnowledgeGraph,
    relations: &[RelationId],
    cfg: &PretrainConfig,
) -> Result<PretrainOutput> {
    cfg.validate()?;
    if relations.is_empty() {
        return Err(Error::Empty("pre-train split"));
    }
    let mut triples: Vec<Triple> = relations
        .iter()
        .flat_map(|&r| kg.relation_triples(r).iter().copied())
        .collect();
    if triples.is_empty() {
        return Err(Error::Empty("pre-train triples"));
    }

    let mut init_rng = seed::rng(cfg.seed, &[stream::PRETRAIN_INIT]);
    let mut ent = uniform_table(kg.entity_count(), cfg.dim, &mut init_rng);
    let mut rel = uniform_table(kg.relation_count(), cfg.dim, &mut init_rng);
    let mut d_ent = Tensor::zeros(ent.shape());
    let mut d_rel = Tensor::zeros(rel.shape());
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        normalize_rows(&mut ent);
        let mut rng = seed::rng(cfg.seed, &[stream::PRETRAIN_EPOCH, epoch as u64]);
        triples.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in triples.chunks(cfg.batch_size) {
            let scale = 1.0 / batch.len() as f64;
            let mut touched = Vec::with_capacity(batch.len() * 4);
            for pos in batch {
                let neg = corrupt(pos, kg.entity_count(), &mut rng);
                total += pair_step(&ent, &rel, pos, &neg, cfg.margin, scale, &mut d_ent, &mut d_rel);
                touched.extend([pos.head, pos.tail, neg.head, neg.tail]);
            }
            touched.sort_unstable();
            touched.dedup();
            for &e in &touched {
                crate::numerics::axpy(-cfg.lr, d_ent.row(e), ent.row_mut(e));
                d_ent.row_mut(e).fill(0.0);
            }
            let mut rels: Vec<RelationId> = batch.iter().map(|t| t.relation).collect();
            rels.sort_unstable();
            rels.dedup();
            for r in rels {
                crate::numerics::axpy(-cfg.lr, d_rel.row(r), rel.row_mut(r));
                d_rel.row_mut(r).fill(0.0);
            }
        }
        let mean = total / triples.len() as f64;
        if !mean.is_finite() {
            return Err(Error::NonFinite(format!("pre-training loss at epoch {epoch}")));
        }
        epoch_losses.push(mean);
        if epoch % 100 == 0 {
            log::debug!("pretrain epoch {epoch}: loss {mean:.6}");
        }
    }
    normalize_rows(&mut ent);

    Ok(PretrainOutput {
        entities: EmbeddingTable::new(ent, true)?,
        relations: EmbeddingTable::new(rel, true)?,
        epoch_losses,
    })
}

/// Mean hinge loss of a fixed batch of (positive, negative) pairs, as a
/// function of the `entities` and `relations` tables.
pub struct PretrainLoss {
    pub pairs: Vec<(Triple, Triple)>,
    pub margin: f64,
}

impl PretrainLoss {
    pub fn bundle(entities: Tensor, relations: Tensor) -> ParamBundle {
        ParamBundle::new()
            .with("entities", entities)
            .and_then(|b| b.with("relations", relations))
            .expect("distinct names")
    }
}

impl Objective for PretrainLoss {
    fn loss(&self, p: &ParamBundle) -> Result<f64> {
        self.loss_and_gradient(p).map(|(l, _)| l)
    }

    fn loss_and_gradient(&self, p: &ParamBundle) -> Result<(f64, ParamBundle)> {
        let t = p.tensors();
        if t.len() != 2 || t[0].cols() != t[1].cols() {
            return Err(Error::Shape("pretrain loss expects entity and relation tables".into()));
        }
        let mut g = p.zeros_like();
        let scale = 1.0 / self.pairs.len().max(1) as f64;
        let (ge, gr) = g.tensors_mut().split_at_mut(1);
        let mut total = 0.0;
        for (pos, neg) in &self.pairs {
            total += pair_step(&t[0], &t[1], pos, neg, self.margin, scale, &mut ge[0], &mut gr[0]);
        }
        Ok((total * scale, g))
    }
}
