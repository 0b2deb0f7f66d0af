//! Central-difference checks of every analytic gradient: TransE
//! pre-training, support loss, query loss and adapter tuning.
//!
//! `cargo run --release --example gradient_check [instances]`

use rand::Rng;
use reladapter::adapter::{support_relation_meta, AdapterParams, Pipeline, TuneObjective};
use reladapter::kg::Triple;
use reladapter::meta::{Hyperparams, SupportObjective};
use reladapter::numerics::{finite_diff_check, Tensor};
use reladapter::pretrain::{EmbeddingTable, PretrainLoss};
use reladapter::seed;
use reladapter::synthetic::offset_graph;
use reladapter::train::{sample_training_task, Dataset, ModelState, QueryObjective};

const STEP: f64 = 1e-4;

fn table(n: usize, d: usize, s: u64) -> EmbeddingTable {
    let mut rng = seed::rng(s, &[1]);
    let data = (0..n * d).map(|_| rng.gen_range(-0.5..0.5)).collect();
    EmbeddingTable::new(Tensor::matrix(n, d, data).expect("n x d"), true).expect("finite")
}

fn main() -> reladapter::Result<()> {
    let instances: u64 = std::env::args().nth(1).map_or(20, |s| s.parse().expect("instances"));
    let hp = Hyperparams {
        dim: 8,
        rml_hidden: 16,
        adapter_hidden: 4,
        ..Default::default()
    };
    let g = offset_graph(30);
    let data = Dataset::with_fallback_pools(g.kg, g.splits, &hp);
    let n = data.kg.entity_count();
    let mut worst = [0.0f64; 4];
    for s in 0..instances {
        let mut rng = seed::rng(s, &[2]);
        let r = data.splits.train[s as usize % data.splits.train.len()];
        let (task, negs) = sample_training_task(&data.kg, &data.pools, r, &hp, &mut rng)?;

        let pairs = task
            .support
            .iter()
            .zip(&negs)
            .map(|(t, &tail)| (*t, Triple { tail, ..*t }))
            .collect();
        let pre = PretrainLoss { pairs, margin: 1.0 };
        let params = PretrainLoss::bundle(table(n, 8, s).into_tensor(), table(data.kg.relation_count(), 8, s + 99).into_tensor());
        worst[0] = worst[0].max(finite_diff_check(&pre, &params, STEP)?);

        let support = SupportObjective {
            support: task.support.clone(),
            neg_tails: negs.clone(),
            gamma: hp.gamma,
        };
        let params = SupportObjective::bundle(vec![0.1; 8], table(n, 8, s).into_tensor());
        worst[1] = worst[1].max(finite_diff_check(&support, &params, STEP)?);

        let model = ModelState::init(&table(n, 8, s), &Hyperparams { seed: s, ..hp.clone() }, Pipeline::default())?;
        let ctx = model.context_table(&data, &hp)?;
        let r_c = support_relation_meta(&task.support, &model.emb, Some((&ctx, hp.mu)), &model.phi)?;
        let tune = TuneObjective {
            support: task.support.clone(),
            neg_tails: negs.clone(),
            r_c,
            emb: model.emb.clone(),
            alpha: 0.5,
            gamma: hp.gamma,
        };
        let theta = AdapterParams::init(8, hp.adapter_hidden, &mut rng);
        worst[3] = worst[3].max(finite_diff_check(&tune, theta.bundle(), STEP)?);

        let query = QueryObjective::new(task, negs, model, Some(ctx), true, hp.clone())?;
        worst[2] = worst[2].max(finite_diff_check(&query, &query.params(), STEP)?);
    }
    for (name, err) in ["pre-training", "support", "query", "adapter tuning"].iter().zip(worst) {
        println!("{name:<15} max relative error {err:.2e} over {instances} instances");
    }
    Ok(())
}
