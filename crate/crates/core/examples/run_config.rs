//! The four pipeline commands driven from a config file, as the CLI does:
//! pre-train, meta-train, meta-test and analyze, all writing into the
//! config's `output.dir`.
//!
//! `cargo run --release --example run_config [config]`

use std::path::PathBuf;

use reladapter::config::RunConfig;
use reladapter::runner::{cmd_analyze, cmd_meta_test, cmd_meta_train, cmd_pretrain};

fn main() -> reladapter::Result<()> {
    let path = std::env::args()
        .nth(1)
        .map_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs/toy.conf"), PathBuf::from);
    let cfg = RunConfig::load(&path)?;
    println!("pre-trained -> {}", cmd_pretrain(&cfg)?.display());
    let s = cmd_meta_train(&cfg, None)?;
    println!("valid MRR {:.4} -> {:.4} at epoch {}", s.initial_mrr, s.best_mrr, s.best_epoch);
    let (r, metrics) = cmd_meta_test(&cfg, None)?;
    println!("test MRR {:.4} Hits@10 {:.4} -> {}", r.mrr, r.hits10, metrics.display());
    println!("{}", cmd_analyze(&cfg, None, "train")?.summary_line());
    Ok(())
}
