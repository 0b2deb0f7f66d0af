//! Fixtures shared by the integration tests.
#![allow(dead_code)]

use std::path::{Path, PathBuf};

use rand::Rng;
use reladapter::adapter::{support_relation_meta, AdapterParams, Pipeline, TuneObjective};
use reladapter::config::RunConfig;
use reladapter::eval::MetricsReport;
use reladapter::kg::Triple;
use reladapter::meta::{Hyperparams, SupportObjective};
use reladapter::numerics::{ParamBundle, Tensor};
use reladapter::pretrain::{EmbeddingTable, PretrainLoss};
use reladapter::seed;
use reladapter::synthetic::offset_graph;
use reladapter::train::{sample_training_task, Dataset, ModelState, QueryObjective};

/// Step of the central differences used for gradient checks.
pub const FD_STEP: f64 = 1e-4;
/// Largest accepted relative gradient error.
pub const FD_TOLERANCE: f64 = 1e-4;

pub fn repo_path(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..").join(rel)
}

/// The toy config with its output redirected to `out`.
pub fn toy_config(out: &Path) -> RunConfig {
    let mut cfg = RunConfig::load(repo_path("configs/toy.conf")).unwrap();
    cfg.set("output.dir", out.to_str().unwrap()).unwrap();
    cfg
}

pub fn random_table(n: usize, d: usize, s: u64, frozen: bool) -> EmbeddingTable {
    let mut rng = seed::rng(s, &[0xE1]);
    let data = (0..n * d).map(|_| rng.gen_range(-0.5..0.5)).collect();
    EmbeddingTable::new(Tensor::matrix(n, d, data).unwrap(), frozen).unwrap()
}

pub fn random_vec(d: usize, s: u64, scale: f64) -> Vec<f64> {
    let mut rng = seed::rng(s, &[0xE2]);
    (0..d).map(|_| rng.gen_range(-scale..scale)).collect()
}

/// `d = 8`, `K = 3` and small networks.
pub fn small_hp() -> Hyperparams {
    Hyperparams {
        dim: 8,
        rml_hidden: 16,
        adapter_hidden: 4,
        batch_size: 4,
        eval_every: 5,
        patience: 3,
        epochs: 10,
        adapter_steps: 5,
        shots: 3,
        ..Default::default()
    }
}

pub fn toy_data(hp: &Hyperparams) -> Dataset {
    let g = offset_graph(30);
    Dataset::with_fallback_pools(g.kg, g.splits, hp)
}

/// A training task on a train relation picked by `s`, with its support
/// negatives.
pub fn toy_task(data: &Dataset, hp: &Hyperparams, s: u64) -> (reladapter::kg::Task, Vec<usize>) {
    let rels = &data.splits.train;
    let r = rels[s as usize % rels.len()];
    let mut rng = seed::rng(s, &[0xE3]);
    sample_training_task(&data.kg, &data.pools, r, hp, &mut rng).unwrap()
}

pub fn pretrain_instance(s: u64) -> (PretrainLoss, ParamBundle) {
    let data = toy_data(&small_hp());
    let n = data.kg.entity_count();
    let mut rng = seed::rng(s, &[0xE4]);
    let triples: Vec<Triple> = data
        .splits
        .pretrain
        .iter()
        .flat_map(|&r| data.kg.relation_triples(r).iter().copied())
        .collect();
    let pairs = (0..12)
        .map(|_| {
            let pos = triples[rng.gen_range(0..triples.len())];
            let mut tail = rng.gen_range(0..n);
            while tail == pos.tail {
                tail = rng.gen_range(0..n);
            }
            (pos, Triple { tail, ..pos })
        })
        .collect();
    let entities = random_table(n, 8, s, false).into_tensor();
    let relations = random_table(data.kg.relation_count(), 8, s + 1000, false).into_tensor();
    (PretrainLoss { pairs, margin: 1.0 }, PretrainLoss::bundle(entities, relations))
}

pub fn support_instance(s: u64) -> (SupportObjective, ParamBundle) {
    let hp = small_hp();
    let data = toy_data(&hp);
    let (task, negs) = toy_task(&data, &hp, s);
    let obj = SupportObjective {
        support: task.support,
        neg_tails: negs,
        gamma: hp.gamma,
    };
    let emb = random_table(data.kg.entity_count(), 8, s, false).into_tensor();
    (obj, SupportObjective::bundle(random_vec(8, s, 0.5), emb))
}

pub fn query_instance(s: u64) -> (QueryObjective, ParamBundle) {
    let hp = Hyperparams { seed: s, ..small_hp() };
    let data = toy_data(&hp);
    let pipeline = Pipeline::default();
    let model = ModelState::init(&random_table(data.kg.entity_count(), 8, s, true), &hp, pipeline).unwrap();
    let (task, negs) = toy_task(&data, &hp, s);
    let ctx = model.context_table(&data, &hp).unwrap();
    let obj = QueryObjective::new(task, negs, model, Some(ctx), true, hp).unwrap();
    let params = obj.params();
    (obj, params)
}

pub fn tune_instance(s: u64) -> (TuneObjective, ParamBundle) {
    let hp = small_hp();
    let data = toy_data(&hp);
    let model = ModelState::init(&random_table(data.kg.entity_count(), 8, s, true), &hp, Pipeline::default()).unwrap();
    let (task, negs) = toy_task(&data, &hp, s);
    let ctx = model.context_table(&data, &hp).unwrap();
    let r_c = support_relation_meta(&task.support, &model.emb, Some((&ctx, hp.mu)), &model.phi).unwrap();
    let theta = AdapterParams::init(8, hp.adapter_hidden, &mut seed::rng(s, &[0xE5]));
    let alpha = seed::rng(s, &[0xE6]).gen_range(0.1..1.0);
    let obj = TuneObjective {
        support: task.support,
        neg_tails: negs,
        r_c,
        emb: model.emb,
        alpha,
        gamma: hp.gamma,
    };
    (obj, theta.into_bundle())
}

/// `hits1 <= hits5 <= hits10` overall and per relation.
pub fn hits_monotone(report: &MetricsReport) -> bool {
    let ok = |a: f64, b: f64, c: f64| a <= b && b <= c;
    ok(report.hits1, report.hits5, report.hits10)
        && report.per_relation.values().all(|s| ok(s.hits1, s.hits5, s.hits10))
}
