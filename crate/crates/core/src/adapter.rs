//! Bottleneck adapter on the relation meta, neighbor-context entity
//! embeddings, per-relation adapter tuning, and pipeline variants.

use std::fmt;

use rand::Rng;

use crate::error::{Error, Result};
use crate::kg::{EntityId, NeighborIndex, Triple};
use crate::meta::{gradient_meta, hinge, refine_meta, relation_meta, Hyperparams, RelationMeta, RmlParams, Stage};
use crate::numerics::{
    axpy, glorot_uniform, mlp_backward, mlp_forward_cached, AdamState, MlpCache, ParamBundle, Parameters, Tensor,
};
use crate::pretrain::EmbeddingTable;

pub const ADAPTER_NAMES: [&str; 4] = ["adapter.w_down", "adapter.b_down", "adapter.w_up", "adapter.b_up"];

/// Inner activation slope of the adapter network (plain relu).
pub const ADAPTER_SLOPE: f64 = 0.0;

/// `W_down (m x d)`, `b_down (m)`, `W_up (d x m)`, `b_up (d)`.
#[derive(Clone, Debug, PartialEq)]
pub struct AdapterParams(ParamBundle);

impl AdapterParams {
    /// Glorot-uniform weights, zero biases.
    pub fn init<R: Rng>(dim: usize, hidden: usize, rng: &mut R) -> Self {
        let down = glorot_uniform(hidden, dim, rng);
        let up = glorot_uniform(dim, hidden, rng);
        Self::from_tensors([down, Tensor::zeros(&[hidden]), up, Tensor::zeros(&[dim])])
            .expect("shapes chain by construction")
    }

    pub fn zeros(dim: usize, hidden: usize) -> Self {
        Self::from_tensors([
            Tensor::zeros(&[hidden, dim]),
            Tensor::zeros(&[hidden]),
            Tensor::zeros(&[dim, hidden]),
            Tensor::zeros(&[dim]),
        ])
        .expect("shapes chain by construction")
    }

    pub fn from_tensors(t: [Tensor; 4]) -> Result<Self> {
        let mut b = ParamBundle::new();
        for (name, tensor) in ADAPTER_NAMES.iter().zip(t) {
            b.push(*name, tensor)?;
        }
        let dim = b.tensors()[0].cols();
        let (hidden, out) = crate::numerics::check_shapes(&b, dim)?;
        if out != dim || hidden == 0 {
            return Err(Error::Shape(format!("adapter maps {dim} -> {hidden} -> {out}")));
        }
        Ok(AdapterParams(b))
    }

    pub fn dim(&self) -> usize {
        self.0.tensors()[3].len()
    }

    pub fn hidden(&self) -> usize {
        self.0.tensors()[1].len()
    }

    pub fn param_count(&self) -> usize {
        self.0.param_count()
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

impl Parameters for AdapterParams {
    fn tensors(&self) -> &[Tensor] {
        self.0.tensors()
    }

    fn tensors_mut(&mut self) -> &mut [Tensor] {
        self.0.tensors_mut()
    }
}

/// `alpha * FFN(r) + (1 - alpha) * r`, tagged adapted.
pub fn adapter_forward(r: &RelationMeta, theta: &AdapterParams, alpha: f64) -> Result<RelationMeta> {
    adapter_forward_cached(r, theta, alpha).map(|(out, _)| out)
}

pub fn adapter_forward_cached(
    r: &RelationMeta,
    theta: &AdapterParams,
    alpha: f64,
) -> Result<(RelationMeta, MlpCache)> {
    if r.dim() != theta.dim() {
        return Err(Error::Shape(format!("relation meta dim {} vs adapter dim {}", r.dim(), theta.dim())));
    }
    let (ffn, cache) = mlp_forward_cached(&r.vector, theta.bundle(), ADAPTER_SLOPE)?;
    let v = ffn
        .iter()
        .zip(&r.vector)
        .map(|(y, x)| alpha * y + (1.0 - alpha) * x)
        .collect();
    Ok((RelationMeta::new(v, Stage::Adapted), cache))
}

/// Given `d_out = dL/d(adapted)`, accumulates `dL/dTheta` into `grads`
/// and returns `dL/dr`.
pub fn adapter_backward(
    theta: &AdapterParams,
    cache: &MlpCache,
    d_out: &[f64],
    alpha: f64,
    grads: &mut ParamBundle,
) -> Vec<f64> {
    let scaled: Vec<f64> = d_out.iter().map(|g| alpha * g).collect();
    let mut d_in: Vec<f64> = d_out.iter().map(|g| (1.0 - alpha) * g).collect();
    let mut through = vec![0.0; d_in.len()];
    mlp_backward(theta.bundle(), cache, &scaled, ADAPTER_SLOPE, grads, Some(&mut through));
    axpy(1.0, &through, &mut d_in);
    d_in
}

/// An entity's context-augmented embedding and how it was made.
#[derive(Clone, Debug, PartialEq)]
pub struct ContextEmbedding {
    pub vector: Vec<f64>,
    pub mu: f64,
    pub hops: usize,
}

/// Per-entity mean of the frozen table over each entity's neighborhood.
/// The frozen table never changes, so the means are computed once.
#[derive(Clone, Debug)]
pub struct ContextTable {
    means: Vec<Option<Vec<f64>>>,
    hops: usize,
}

impl ContextTable {
    pub fn build(f: &EmbeddingTable, neighbors: &NeighborIndex, hops: usize) -> Result<Self> {
        if !(1..=3).contains(&hops) {
            return Err(Error::Config(format!("context.hops = {hops} outside 1..=3")));
        }
        if neighbors.entity_count() != f.len() {
            return Err(Error::Shape(format!(
                "neighbor index covers {} entities, frozen table {}",
                neighbors.entity_count(),
                f.len()
            )));
        }
        let means = (0..f.len())
            .map(|e| {
                let ns = neighbors.within_hops(e, hops);
                if ns.is_empty() {
                    return None;
                }
                let mut m = vec![0.0; f.dim()];
                for &n in &ns {
                    axpy(1.0, f.row(n), &mut m);
                }
                let k = ns.len() as f64;
                m.iter_mut().for_each(|v| *v /= k);
                Some(m)
            })
            .collect();
        Ok(ContextTable { means, hops })
    }

    pub fn hops(&self) -> usize {
        self.hops
    }

    pub fn neighbor_mean(&self, entity: EntityId) -> Option<&[f64]> {
        self.means[entity].as_deref()
    }

    /// `mu * mean + (1 - mu) * emb(e)`, or `emb(e)` without neighbors.
    pub fn embed(&self, entity: EntityId, emb: &EmbeddingTable, mu: f64) -> ContextEmbedding {
        let own = emb.row(entity);
        let vector = match self.neighbor_mean(entity) {
            Some(m) => m.iter().zip(own).map(|(a, b)| mu * a + (1.0 - mu) * b).collect(),
            None => own.to_vec(),
        };
        ContextEmbedding {
            vector,
            mu,
            hops: self.hops,
        }
    }

    /// `d e^c / d emb(e)` is this scalar times the identity.
    pub fn own_weight(&self, entity: EntityId, mu: f64) -> f64 {
        if self.means[entity].is_some() {
            1.0 - mu
        } else {
            1.0
        }
    }
}

/// One-off context embedding without a precomputed table.
pub fn context_embedding(
    entity: EntityId,
    emb: &EmbeddingTable,
    f: &EmbeddingTable,
    neighbors: &NeighborIndex,
    mu: f64,
    hops: usize,
) -> ContextEmbedding {
    let ns = neighbors.within_hops(entity, hops);
    let own = emb.row(entity);
    if ns.is_empty() {
        return ContextEmbedding {
            vector: own.to_vec(),
            mu,
            hops,
        };
    }
    let k = ns.len() as f64;
    let vector = (0..own.len())
        .map(|i| {
            let mean = ns.iter().map(|&n| f.row(n)[i]).sum::<f64>() / k;
            mu * mean + (1.0 - mu) * own[i]
        })
        .collect();
    ContextEmbedding { vector, mu, hops }
}

/// Relation meta of a support set: context-augmented when a table is
/// given, raw otherwise.
pub fn support_relation_meta(
    support: &[Triple],
    emb: &EmbeddingTable,
    context: Option<(&ContextTable, f64)>,
    phi: &RmlParams,
) -> Result<RelationMeta> {
    match context {
        Some((table, mu)) => {
            let rows: Vec<(Vec<f64>, Vec<f64>)> = support
                .iter()
                .map(|t| (table.embed(t.head, emb, mu).vector, table.embed(t.tail, emb, mu).vector))
                .collect();
            let pairs: Vec<(&[f64], &[f64])> = rows.iter().map(|(h, t)| (h.as_slice(), t.as_slice())).collect();
            relation_meta(&pairs, phi, Stage::Context)
        }
        None => {
            let pairs: Vec<(&[f64], &[f64])> = support.iter().map(|t| (emb.row(t.head), emb.row(t.tail))).collect();
            relation_meta(&pairs, phi, Stage::Raw)
        }
    }
}

/// Result of tuning one relation's adapter.
#[derive(Clone, Debug)]
pub struct TuneOutcome {
    pub theta: AdapterParams,
    pub refined: RelationMeta,
    /// Support loss at each visited adapter state, initial state first.
    pub losses: Vec<f64>,
    /// Adam steps taken.
    pub steps: usize,
}

impl TuneOutcome {
    pub fn initial_loss(&self) -> f64 {
        self.losses[0]
    }

    pub fn final_loss(&self) -> f64 {
        *self.losses.last().expect("at least the initial loss")
    }
}

/// Tunes a relation-specific adapter on its support set with everything
/// else frozen, then refines the adapted meta with one gradient-meta step.
///
/// Each step adapts `r_c` with the current parameters, evaluates the support
/// loss and its gradient at the adapted meta, and takes an Adam step on the
/// adapter parameters. The loop ends after `hp.adapter_steps` steps or when
/// the loss changes by less than `hp.adapter_tol`.
pub fn tune_adapter(
    support: &[Triple],
    neg_tails: &[EntityId],
    r_c: &RelationMeta,
    emb: &EmbeddingTable,
    theta: AdapterParams,
    hp: &Hyperparams,
) -> Result<TuneOutcome> {
    if support.is_empty() {
        return Err(Error::Empty("support set"));
    }
    let mut theta = theta;
    let mut adam = AdamState::new(&theta, hp.lr);
    let mut losses = Vec::with_capacity(hp.adapter_steps + 1);
    let mut steps = 0;
    loop {
        let (r_a, cache) = adapter_forward_cached(r_c, &theta, hp.alpha)?;
        let h = hinge(support, neg_tails, &r_a.vector, emb, hp.gamma, false);
        if !h.loss.is_finite() {
            return Err(Error::NonFinite(format!("support loss during adapter tuning (step {steps})")));
        }
        let converged = losses
            .last()
            .is_some_and(|prev: &f64| (prev - h.loss).abs() < hp.adapter_tol);
        losses.push(h.loss);
        if steps == hp.adapter_steps || converged {
            let g = gradient_meta(support, neg_tails, &r_a, emb, hp.gamma)?;
            let refined = refine_meta(&r_a, &g, hp.beta)?;
            return Ok(TuneOutcome {
                theta,
                refined,
                losses,
                steps,
            });
        }
        let mut grads = theta.bundle().zeros_like();
        adapter_backward(&theta, &cache, &h.d_relation, hp.alpha, &mut grads);
        adam.step(&mut theta, &grads)?;
        steps += 1;
    }
}

/// Support loss at the adapted relation meta as a function of the adapter
/// parameters, everything else frozen.
#[derive(Clone, Debug)]
pub struct TuneObjective {
    pub support: Vec<Triple>,
    pub neg_tails: Vec<EntityId>,
    pub r_c: RelationMeta,
    pub emb: EmbeddingTable,
    pub alpha: f64,
    pub gamma: f64,
}

impl crate::numerics::Objective for TuneObjective {
    fn loss(&self, p: &ParamBundle) -> Result<f64> {
        self.loss_and_gradient(p).map(|(l, _)| l)
    }

    fn loss_and_gradient(&self, p: &ParamBundle) -> Result<(f64, ParamBundle)> {
        let theta = AdapterParams::from_tensors(
            p.tensors()
                .to_vec()
                .try_into()
                .map_err(|_| Error::Shape("adapter objective expects four tensors".into()))?,
        )?;
        let (r_a, cache) = adapter_forward_cached(&self.r_c, &theta, self.alpha)?;
        let h = hinge(&self.support, &self.neg_tails, &r_a.vector, &self.emb, self.gamma, false);
        let mut g = p.zeros_like();
        adapter_backward(&theta, &cache, &h.d_relation, self.alpha, &mut g);
        Ok((h.loss, g))
    }
}

/// Which parts of the architecture are active at each stage.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Pipeline {
    pub train_adapter: bool,
    pub test_adapter: bool,
    pub context: bool,
    /// Start meta-test adapters from the meta-trained parameters.
    pub transfer: bool,
}

impl Default for Pipeline {
    fn default() -> Self {
        Pipeline {
            train_adapter: true,
            test_adapter: true,
            context: true,
            transfer: false,
        }
    }
}

impl Pipeline {
    /// Neither adapter nor context anywhere.
    pub fn metar() -> Self {
        Pipeline {
            train_adapter: false,
            test_adapter: false,
            context: false,
            transfer: false,
        }
    }

    pub fn is_metar(&self) -> bool {
        *self == Self::metar()
    }

    /// Canonical comma-separated variant list (`full` when nothing is off).
    pub fn name(&self) -> String {
        let mut parts = Vec::new();
        if !self.train_adapter && !self.test_adapter {
            parts.push("no-adapter");
        } else if !self.train_adapter {
            parts.push("no-train-adapter");
        }
        if !self.context {
            parts.push("no-context");
        }
        if self.transfer {
            parts.push("transfer-adapter");
        }
        if parts.is_empty() {
            "full".to_string()
        } else {
            parts.join(",")
        }
    }
}

impl fmt::Display for Pipeline {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

/// Parses `full`, `metar`, or a comma-separated combination of
/// `no-adapter`, `no-context`, `no-train-adapter`, `transfer-adapter`.
pub fn ablation_variant(name: &str) -> Result<Pipeline> {
    let mut p = Pipeline::default();
    for part in name.split(',').map(str::trim) {
        match part {
            "full" => {}
            "metar" => p = Pipeline { transfer: p.transfer, ..Pipeline::metar() },
            "no-adapter" => {
                p.train_adapter = false;
                p.test_adapter = false;
            }
            "no-context" => p.context = false,
            "no-train-adapter" => p.train_adapter = false,
            "transfer-adapter" => p.transfer = true,
            _ => return Err(Error::UnknownVariant(part.to_string())),
        }
    }
    if p.transfer && !(p.train_adapter && p.test_adapter) {
        return Err(Error::UnknownVariant(format!(
            "{name}: transfer-adapter needs an adapter in both stages"
        )));
    }
    Ok(p)
}
