//! Meta-training on the 30-entity offset graph, where every relation is a
//! composition of shorter ones, then meta-testing on the held-out offsets.
//!
//! `cargo run --release --example meta_train_toy [variant]`

use reladapter::adapter::ablation_variant;
use reladapter::eval::evaluate_split;
use reladapter::meta::Hyperparams;
use reladapter::pretrain::{pretrain_transe, PretrainConfig};
use reladapter::synthetic::offset_graph;
use reladapter::train::{meta_train, Dataset, ModelState};

fn main() -> reladapter::Result<()> {
    let variant = std::env::args().nth(1).unwrap_or_else(|| "full".into());
    let pipeline = ablation_variant(&variant)?;
    let g = offset_graph(30);
    let hp = Hyperparams {
        dim: 16,
        rml_hidden: 32,
        adapter_hidden: 4,
        batch_size: 8,
        epochs: 2000,
        eval_every: 50,
        patience: 20,
        ..Default::default()
    };
    let pre = pretrain_transe(
        &g.kg,
        &g.splits.pretrain,
        &PretrainConfig {
            dim: hp.dim,
            epochs: 500,
            ..Default::default()
        },
    )?;
    let data = Dataset::with_fallback_pools(g.kg, g.splits, &hp);
    let model = ModelState::init(&pre.entities, &hp, pipeline)?;
    let out = meta_train(&data, model, &hp, pipeline)?;
    println!("epoch  train-loss  valid-MRR");
    println!("{:>5}  {:>10}  {:.4}", 0, "-", out.initial_mrr);
    for row in &out.log {
        println!("{:>5}  {:>10.4}  {:.4}", row.epoch, row.train_loss, row.valid_mrr);
    }
    println!("best valid MRR {:.4} at epoch {}", out.best_mrr, out.best_epoch);
    let ctx = out.model.context_table(&data, &hp)?;
    let report = evaluate_split(&data, &data.splits.test, &out.model, Some(&ctx), &hp, pipeline, hp.seed)?;
    println!(
        "test ({variant}): MRR {:.4}  Hits@1 {:.4}  Hits@5 {:.4}  Hits@10 {:.4}",
        report.mrr, report.hits1, report.hits5, report.hits10
    );
    Ok(())
}
