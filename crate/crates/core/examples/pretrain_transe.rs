//! TransE pre-training on the UMLS pre-train relations.
//!
//! `cargo run --release --example pretrain_transe [epochs] [lr]`

use std::path::Path;

use reladapter::kg::{KnowledgeGraph, RelationSplits};
use reladapter::pretrain::{pretrain_transe, PretrainConfig};

fn main() -> reladapter::Result<()> {
    let mut args = std::env::args().skip(1);
    let epochs = args.next().map_or(1000, |s| s.parse().expect("epochs"));
    let lr = args.next().map_or(0.01, |s| s.parse().expect("lr"));
    let data = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/umls");
    let kg = KnowledgeGraph::load_triples(data.join("triples.tsv"))?;
    let splits = RelationSplits::load(data.join("splits.json"), &kg)?;
    println!(
        "{} entities, {} relations, {} triples; pre-training on {} relations",
        kg.entity_count(),
        kg.relation_count(),
        kg.triples().len(),
        splits.pretrain.len()
    );
    let cfg = PretrainConfig {
        epochs,
        lr,
        ..Default::default()
    };
    let out = pretrain_transe(&kg, &splits.pretrain, &cfg)?;
    let step = (epochs / 10).max(1);
    for (epoch, loss) in out.epoch_losses.iter().enumerate().step_by(step) {
        println!("epoch {epoch:>5}  loss {loss:.4}");
    }
    println!("final loss {:.4}", out.epoch_losses.last().copied().unwrap_or(f64::NAN));
    Ok(())
}
