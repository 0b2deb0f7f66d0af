//! Per-relation adapter tuning at meta-test time on the UMLS test
//! relations: support-loss trajectory and the refined relation meta with
//! and without the adapter.
//!
//! `cargo run --release --example adapter_tuning`

use std::path::Path;

use reladapter::adapter::Pipeline;
use reladapter::eval::adapt_relation;
use reladapter::meta::{support_loss, Hyperparams};
use reladapter::numerics::norm;
use reladapter::pretrain::{pretrain_transe, PretrainConfig};
use reladapter::runner::load_dataset;
use reladapter::config::RunConfig;
use reladapter::train::ModelState;

fn main() -> reladapter::Result<()> {
    let cfg = RunConfig::load(Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/umls.conf"))?;
    let data = load_dataset(&cfg)?;
    let hp = Hyperparams {
        adapter_steps: 200,
        ..cfg.hp.clone()
    };
    let pre = pretrain_transe(&data.kg, &data.splits.pretrain, &PretrainConfig::default())?;
    let model = ModelState::init(&pre.entities, &hp, Pipeline::default())?;
    let ctx = model.context_table(&data, &hp)?;
    for &r in &data.splits.test {
        let with = adapt_relation(&data, r, &model, Some(&ctx), &hp, Pipeline::default(), hp.seed)?;
        let without = adapt_relation(&data, r, &model, Some(&ctx), &hp, Pipeline { test_adapter: false, ..Pipeline::default() }, hp.seed)?;
        let t = with.tuning.as_ref().expect("adapter pipeline tunes");
        let trace: Vec<String> = t.losses.iter().step_by(25).map(|l| format!("{l:.3}")).collect();
        let gap: Vec<f64> = with.refined.vector.iter().zip(&without.refined.vector).map(|(a, b)| a - b).collect();
        println!("{}", data.kg.relation_name(r));
        println!("  support loss over {} steps: {}", t.steps, trace.join(" "));
        println!(
            "  after refinement: adapted {:.3}, plain {:.3}; |R'_adapted - R'_plain| = {:.3}",
            support_loss(&with.support, &with.support_negs, &with.refined, &model.emb, hp.gamma)?,
            support_loss(&without.support, &without.support_negs, &without.refined, &model.emb, hp.gamma)?,
            norm(&gap)
        );
    }
    Ok(())
}
