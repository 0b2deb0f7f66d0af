//! Pairwise cosine similarity of the UMLS train relations, each represented
//! by the mean pre-trained embedding of its entities.
//!
//! `cargo run --release --example relation_similarity [split]`

use std::path::Path;

use reladapter::eval::relation_similarity_matrix;
use reladapter::kg::{KnowledgeGraph, RelationSplits};
use reladapter::pretrain::{pretrain_transe, PretrainConfig};

fn main() -> reladapter::Result<()> {
    let split = std::env::args().nth(1).unwrap_or_else(|| "train".into());
    let data = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/umls");
    let kg = KnowledgeGraph::load_triples(data.join("triples.tsv"))?;
    let splits = RelationSplits::load(data.join("splits.json"), &kg)?;
    let relations = splits
        .get(&split)
        .ok_or_else(|| reladapter::Error::Splits(format!("unknown split `{split}`")))?;
    let pre = pretrain_transe(&kg, &splits.pretrain, &PretrainConfig::default())?;
    let m = relation_similarity_matrix(&kg, &pre.entities, relations)?;
    let width = m.names.iter().map(String::len).max().unwrap_or(0);
    for (name, row) in m.names.iter().zip(&m.values) {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:5.2}")).collect();
        println!("{name:>width$}  {}", cells.join(" "));
    }
    println!("{}", m.summary_line());
    Ok(())
}
