//! Model state and the first-order meta-training loop.

use rand::Rng;

use crate::adapter::{adapter_backward, adapter_forward_cached, AdapterParams, ContextTable, Pipeline};
use crate::error::{Error, Result};
use crate::eval::evaluate_split;
use crate::kg::{
    sample_negative, sample_task_with, CandidatePools, EntityId, KnowledgeGraph, NeighborIndex, RelationId,
    RelationSplits, Task,
};
use crate::meta::{hinge, paired_negatives, refine_meta, relation_meta_cached, Hyperparams, RmlParams, Stage, RML_SLOPE};
use crate::numerics::{axpy, mlp_backward, AdamState, Objective, ParamBundle, Tensor};
use crate::pretrain::EmbeddingTable;
use crate::seed::{self, stream};

/// A graph with its relation splits, candidate pools and background
/// neighbor index (held-out relations excluded).
#[derive(Clone, Debug)]
pub struct Dataset {
    pub kg: KnowledgeGraph,
    pub splits: RelationSplits,
    pub pools: CandidatePools,
    pub neighbors: NeighborIndex,
}

impl Dataset {
    pub fn new(kg: KnowledgeGraph, splits: RelationSplits, pools: CandidatePools, max_neighbors: usize, seed: u64) -> Self {
        let neighbors = NeighborIndex::build(&kg, &splits.held_out(), max_neighbors, seed);
        Dataset {
            kg,
            splits,
            pools,
            neighbors,
        }
    }

    /// Candidate pools from background tails only.
    pub fn with_fallback_pools(kg: KnowledgeGraph, splits: RelationSplits, hp: &Hyperparams) -> Self {
        let pools = CandidatePools::fallback_only(&kg, &splits.held_out(), hp.filtered);
        Self::new(kg, splits, pools, hp.max_neighbors, hp.seed)
    }

    /// Relations of `split` with more than `shots` triples; the rest are
    /// reported and dropped.
    pub fn usable_relations(&self, split: &str, shots: usize) -> Vec<RelationId> {
        let rels = self.splits.get(split).unwrap_or(&[]);
        rels.iter()
            .copied()
            .filter(|&r| {
                let ok = self.kg.relation_triples(r).len() > shots;
                if !ok {
                    log::warn!("{split} relation `{}` has too few triples, skipped", self.kg.relation_name(r));
                }
                ok
            })
            .collect()
    }
}

/// All learned and frozen tensors of the model.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelState {
    /// Trainable entity embeddings.
    pub emb: EmbeddingTable,
    /// Frozen pre-trained entity embeddings used for neighbor context.
    pub f: EmbeddingTable,
    pub phi: RmlParams,
    /// Shared meta-training adapter, absent when training without one.
    pub theta: Option<AdapterParams>,
}

impl ModelState {
    /// Fresh model on top of pre-trained entity embeddings. Every random
    /// initialization draws from its own stream.
    pub fn init(pretrained: &EmbeddingTable, hp: &Hyperparams, pipeline: Pipeline) -> Result<Self> {
        if pretrained.dim() != hp.dim {
            return Err(Error::Shape(format!(
                "pre-trained dim {} vs model.dim {}",
                pretrained.dim(),
                hp.dim
            )));
        }
        let phi = RmlParams::init(hp.dim, hp.rml_hidden, &mut seed::rng(hp.seed, &[stream::RML_INIT]));
        let theta = pipeline
            .train_adapter
            .then(|| AdapterParams::init(hp.dim, hp.adapter_hidden, &mut seed::rng(hp.seed, &[stream::ADAPTER_INIT])));
        Ok(ModelState {
            emb: EmbeddingTable::new(pretrained.tensor().clone(), false)?,
            f: pretrained.frozen_copy(),
            phi,
            theta,
        })
    }

    pub fn context_table(&self, data: &Dataset, hp: &Hyperparams) -> Result<ContextTable> {
        ContextTable::build(&self.f, &data.neighbors, hp.hops)
    }

    pub fn is_finite(&self) -> bool {
        self.emb.tensor().is_finite()
            && self.phi.bundle().is_finite()
            && self.theta.as_ref().is_none_or(|t| t.bundle().is_finite())
    }
}

/// Gradients of one batch with respect to the trainable parts of a model.
#[derive(Clone, Debug)]
pub struct ModelGrads {
    pub phi: ParamBundle,
    pub theta: Option<ParamBundle>,
    pub emb: Tensor,
}

impl ModelGrads {
    pub fn zeros_like(model: &ModelState) -> Self {
        ModelGrads {
            phi: model.phi.bundle().zeros_like(),
            theta: model.theta.as_ref().map(|t| t.bundle().zeros_like()),
            emb: Tensor::zeros(model.emb.tensor().shape()),
        }
    }

    pub fn scale(&mut self, s: f64) {
        self.phi.scale(s);
        if let Some(t) = &mut self.theta {
            t.scale(s);
        }
        self.emb.data_mut().iter_mut().for_each(|v| *v *= s);
    }
}

/// Query loss of one task and, accumulated into `grads`, its first-order
/// gradient: the gradient meta is a constant during backpropagation.
///
/// `frozen_g` replaces the gradient meta computed from the support set.
#[allow(clippy::too_many_arguments)]
pub fn task_loss_and_grads(
    task: &Task,
    support_negs: &[EntityId],
    model: &ModelState,
    context: Option<(&ContextTable, f64)>,
    use_adapter: bool,
    hp: &Hyperparams,
    frozen_g: Option<&[f64]>,
    grads: &mut ModelGrads,
) -> Result<f64> {
    let emb = &model.emb;
    let d = emb.dim();
    let support = &task.support;
    let inputs: Vec<(Vec<f64>, Vec<f64>)> = match context {
        Some((table, mu)) => support
            .iter()
            .map(|t| (table.embed(t.head, emb, mu).vector, table.embed(t.tail, emb, mu).vector))
            .collect(),
        None => support.iter().map(|t| (emb.row(t.head).to_vec(), emb.row(t.tail).to_vec())).collect(),
    };
    let pairs: Vec<(&[f64], &[f64])> = inputs.iter().map(|(h, t)| (h.as_slice(), t.as_slice())).collect();
    let stage = if context.is_some() { Stage::Context } else { Stage::Raw };
    let (r_c, caches) = relation_meta_cached(&pairs, &model.phi, stage)?;

    let adapted = if use_adapter {
        let theta = model
            .theta
            .as_ref()
            .ok_or_else(|| Error::Config("pipeline uses an adapter but the model has none".into()))?;
        let (r_a, cache) = adapter_forward_cached(&r_c, theta, hp.alpha)?;
        Some((theta, r_a, cache))
    } else {
        None
    };
    let r_a = adapted.as_ref().map_or(&r_c, |(_, r, _)| r);

    let g = match frozen_g {
        Some(g) => g.to_vec(),
        None => hinge(support, support_negs, &r_a.vector, emb, hp.gamma, false).d_relation,
    };
    let r_p = refine_meta(r_a, &g, hp.beta)?;

    let q_negs = paired_negatives(&task.query_pos, &task.query_neg)?;
    let q = hinge(&task.query_pos, &q_negs, &r_p.vector, emb, hp.gamma, true);
    if !q.loss.is_finite() {
        return Err(Error::NonFinite(format!(
            "query loss for relation {} (relation meta norm {:.3e})",
            task.relation,
            crate::numerics::norm(&r_p.vector)
        )));
    }
    if q.active_terms == 0 {
        return Ok(0.0);
    }
    for (e, g) in &q.d_entities {
        axpy(1.0, g, grads.emb.row_mut(*e));
    }

    let d_rc = match &adapted {
        Some((theta, _, cache)) => {
            let tg = grads
                .theta
                .as_mut()
                .ok_or_else(|| Error::Config("adapter gradient buffer missing".into()))?;
            adapter_backward(theta, cache, &q.d_relation, hp.alpha, tg)
        }
        None => q.d_relation,
    };
    let k = support.len() as f64;
    let d_out: Vec<f64> = d_rc.iter().map(|v| v / k).collect();
    let mut dx = vec![0.0; 2 * d];
    for (t, cache) in support.iter().zip(&caches) {
        dx.iter_mut().for_each(|v| *v = 0.0);
        mlp_backward(model.phi.bundle(), cache, &d_out, RML_SLOPE, &mut grads.phi, Some(&mut dx));
        let (wh, wt) = match context {
            Some((table, mu)) => (table.own_weight(t.head, mu), table.own_weight(t.tail, mu)),
            None => (1.0, 1.0),
        };
        axpy(wh, &dx[..d], grads.emb.row_mut(t.head));
        axpy(wt, &dx[d..], grads.emb.row_mut(t.tail));
    }
    Ok(q.loss)
}

/// One evaluation row of the training log.
#[derive(Clone, Debug, PartialEq)]
pub struct LogRow {
    pub epoch: usize,
    /// Mean query loss per task since the previous row.
    pub train_loss: f64,
    pub valid_mrr: f64,
}

impl LogRow {
    pub fn to_line(&self) -> String {
        format!("{}\t{:.6}\t{:.6}", self.epoch, self.train_loss, self.valid_mrr)
    }
}

pub fn format_log(rows: &[LogRow]) -> String {
    rows.iter().map(|r| r.to_line() + "\n").collect()
}

/// Parses lines written by [`format_log`].
pub fn parse_log(text: &str) -> Result<Vec<LogRow>> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, line)| {
            let bad = || Error::Parse {
                path: "train_log.tsv".into(),
                line: i + 1,
                msg: format!("expected `epoch<TAB>loss<TAB>mrr`, got `{line}`"),
            };
            let f: Vec<&str> = line.split('\t').collect();
            if f.len() != 3 {
                return Err(bad());
            }
            Ok(LogRow {
                epoch: f[0].parse().map_err(|_| bad())?,
                train_loss: f[1].parse().map_err(|_| bad())?,
                valid_mrr: f[2].parse().map_err(|_| bad())?,
            })
        })
        .collect()
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Parameters at the best validation evaluation (or the initial state).
    pub model: ModelState,
    pub log: Vec<LogRow>,
    pub initial_mrr: f64,
    pub best_mrr: f64,
    /// 0 when no evaluation beat the initial state.
    pub best_epoch: usize,
    pub epochs_run: usize,
    pub stopped_early: bool,
}

/// Samples one training task and its fixed support negatives.
pub fn sample_training_task<R: Rng>(
    kg: &KnowledgeGraph,
    pools: &CandidatePools,
    relation: RelationId,
    hp: &Hyperparams,
    rng: &mut R,
) -> Result<(Task, Vec<EntityId>)> {
    let task = sample_task_with(kg, pools, relation, hp.shots, hp.queries, rng)?;
    let negs = task
        .support
        .iter()
        .map(|t| sample_negative(kg, pools, t, rng).map(|n| n.tail))
        .collect::<Result<Vec<_>>>()?;
    Ok((task, negs))
}

/// Meta-trains `model` on tasks from the train relations, evaluating
/// validation MRR every `eval_every` epochs and keeping the best state.
/// One epoch is one batch of `batch_size` tasks.
pub fn meta_train(data: &Dataset, model: ModelState, hp: &Hyperparams, pipeline: Pipeline) -> Result<TrainOutcome> {
    hp.validate()?;
    if pipeline.train_adapter != model.theta.is_some() {
        return Err(Error::Config(format!(
            "pipeline `{pipeline}` does not match the model's adapter presence"
        )));
    }
    let train = data.usable_relations("train", hp.shots);
    if train.is_empty() {
        return Err(Error::Empty("train relations"));
    }
    let valid = data.usable_relations("valid", hp.shots);
    if valid.is_empty() {
        return Err(Error::Empty("valid relations"));
    }
    let table = if pipeline.context { Some(model.context_table(data, hp)?) } else { None };
    let context = table.as_ref().map(|t| (t, hp.mu));
    let validate = |m: &ModelState| -> Result<f64> {
        Ok(evaluate_split(data, &valid, m, table.as_ref(), hp, pipeline, hp.seed)?.mrr)
    };

    let mut model = model;
    let initial_mrr = validate(&model)?;
    log::info!("epoch 0: valid MRR {initial_mrr:.4}");
    let mut best = (initial_mrr, 0usize, model.clone());
    let mut log_rows = Vec::new();
    let mut adam_phi = AdamState::new(&model.phi, hp.lr);
    let mut adam_theta = model.theta.as_ref().map(|t| AdamState::new(t, hp.lr));
    let mut adam_emb = AdamState::new(model.emb.tensor(), hp.lr);
    let mut window = (0.0, 0usize);
    let mut since_best = 0;
    let mut epochs_run = 0;
    let mut stopped_early = false;

    for epoch in 1..=hp.epochs {
        let mut rng = seed::rng(hp.seed, &[stream::TASKS, epoch as u64]);
        let mut grads = ModelGrads::zeros_like(&model);
        let mut loss = 0.0;
        for _ in 0..hp.batch_size {
            let r = train[rng.gen_range(0..train.len())];
            let (task, negs) = sample_training_task(&data.kg, &data.pools, r, hp, &mut rng)?;
            loss += task_loss_and_grads(&task, &negs, &model, context, pipeline.train_adapter, hp, None, &mut grads)?;
        }
        let n = hp.batch_size as f64;
        loss /= n;
        if !loss.is_finite() {
            return Err(Error::NonFinite(format!("training loss at epoch {epoch}")));
        }
        grads.scale(1.0 / n);
        adam_phi.step(&mut model.phi, &grads.phi)?;
        if let (Some(adam), Some(theta), Some(g)) = (&mut adam_theta, &mut model.theta, &grads.theta) {
            adam.step(theta, g)?;
        }
        adam_emb.step(model.emb.tensor_mut(), &grads.emb)?;
        if !model.is_finite() {
            return Err(Error::NonFinite(format!("parameters after epoch {epoch}")));
        }
        window.0 += loss;
        window.1 += 1;
        epochs_run = epoch;

        if epoch % hp.eval_every == 0 {
            let mrr = validate(&model)?;
            let row = LogRow {
                epoch,
                train_loss: window.0 / window.1 as f64,
                valid_mrr: mrr,
            };
            log::info!("epoch {epoch}: train loss {:.4}, valid MRR {mrr:.4}", row.train_loss);
            log_rows.push(row);
            window = (0.0, 0);
            if mrr > best.0 {
                best = (mrr, epoch, model.clone());
                since_best = 0;
            } else {
                since_best += 1;
                if since_best >= hp.patience {
                    log::info!("early stop at epoch {epoch}, best epoch {}", best.1);
                    stopped_early = true;
                    break;
                }
            }
        }
    }

    Ok(TrainOutcome {
        model: best.2,
        log: log_rows,
        initial_mrr,
        best_mrr: best.0,
        best_epoch: best.1,
        epochs_run,
        stopped_early,
    })
}

/// Query loss of one task as a function of (relation-meta learner,
/// adapter, entity table) with the gradient meta frozen at its value for
/// the reference model.
#[derive(Clone, Debug)]
pub struct QueryObjective {
    pub task: Task,
    pub support_negs: Vec<EntityId>,
    pub reference: ModelState,
    pub context: Option<ContextTable>,
    pub use_adapter: bool,
    pub hp: Hyperparams,
    frozen_g: Vec<f64>,
}

impl QueryObjective {
    pub fn new(
        task: Task,
        support_negs: Vec<EntityId>,
        reference: ModelState,
        context: Option<ContextTable>,
        use_adapter: bool,
        hp: Hyperparams,
    ) -> Result<Self> {
        let mut obj = QueryObjective {
            task,
            support_negs,
            reference,
            context,
            use_adapter,
            hp,
            frozen_g: Vec::new(),
        };
        obj.frozen_g = obj.gradient_meta_at(&obj.reference)?;
        Ok(obj)
    }

    fn gradient_meta_at(&self, m: &ModelState) -> Result<Vec<f64>> {
        let emb = &m.emb;
        let inputs: Vec<(Vec<f64>, Vec<f64>)> = self
            .task
            .support
            .iter()
            .map(|t| match &self.context {
                Some(c) => (c.embed(t.head, emb, self.hp.mu).vector, c.embed(t.tail, emb, self.hp.mu).vector),
                None => (emb.row(t.head).to_vec(), emb.row(t.tail).to_vec()),
            })
            .collect();
        let pairs: Vec<(&[f64], &[f64])> = inputs.iter().map(|(h, t)| (h.as_slice(), t.as_slice())).collect();
        let (mut r, _) = relation_meta_cached(&pairs, &m.phi, Stage::Raw)?;
        if self.use_adapter {
            let theta = m.theta.as_ref().ok_or(Error::Empty("adapter"))?;
            r = adapter_forward_cached(&r, theta, self.hp.alpha)?.0;
        }
        Ok(hinge(&self.task.support, &self.support_negs, &r.vector, emb, self.hp.gamma, false).d_relation)
    }

    /// Flattens the trainable tensors of the reference model.
    pub fn params(&self) -> ParamBundle {
        let mut b = self.reference.phi.bundle().clone();
        if let Some(t) = &self.reference.theta {
            for (n, x) in t.bundle().iter() {
                b.push(n, x.clone()).expect("distinct names");
            }
        }
        b.push("emb", self.reference.emb.tensor().clone()).expect("distinct names");
        b
    }

    fn unpack(&self, params: &ParamBundle) -> Result<ModelState> {
        let t = params.tensors();
        let phi = RmlParams::from_tensors([t[0].clone(), t[1].clone(), t[2].clone(), t[3].clone()])?;
        let theta = match &self.reference.theta {
            Some(_) => Some(AdapterParams::from_tensors([t[4].clone(), t[5].clone(), t[6].clone(), t[7].clone()])?),
            None => None,
        };
        let emb = EmbeddingTable::new(t[t.len() - 1].clone(), false)?;
        Ok(ModelState {
            emb,
            f: self.reference.f.clone(),
            phi,
            theta,
        })
    }

    fn run(&self, params: &ParamBundle) -> Result<(f64, ModelState, ModelGrads)> {
        let m = self.unpack(params)?;
        let mut g = ModelGrads::zeros_like(&m);
        let ctx = self.context.as_ref().map(|c| (c, self.hp.mu));
        let loss = task_loss_and_grads(
            &self.task,
            &self.support_negs,
            &m,
            ctx,
            self.use_adapter,
            &self.hp,
            Some(&self.frozen_g),
            &mut g,
        )?;
        Ok((loss, m, g))
    }
}

impl Objective for QueryObjective {
    fn loss(&self, params: &ParamBundle) -> Result<f64> {
        self.run(params).map(|(l, _, _)| l)
    }

    fn loss_and_gradient(&self, params: &ParamBundle) -> Result<(f64, ParamBundle)> {
        let (loss, _, g) = self.run(params)?;
        let mut out = params.zeros_like();
        let mut tensors: Vec<Tensor> = g.phi.tensors().to_vec();
        if let Some(t) = g.theta {
            tensors.extend(t.tensors().iter().cloned());
        }
        tensors.push(g.emb);
        for (dst, src) in out.tensors_mut().iter_mut().zip(tensors) {
            *dst = src;
        }
        Ok((loss, out))
    }
}
