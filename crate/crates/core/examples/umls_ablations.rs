//! UMLS 3-shot: pre-train, meta-train every pipeline variant and meta-test,
//! over several seeds, through the same commands the CLI runs.
//!
//! `cargo run --release --example umls_ablations [seeds] [out-dir]`

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use reladapter::config::RunConfig;
use reladapter::runner::{cmd_meta_test, cmd_meta_train, cmd_pretrain};

const VARIANTS: [&str; 4] = ["full", "metar", "no-adapter", "no-context"];

fn config(out: &Path, seed: u64, variant: &str) -> reladapter::Result<RunConfig> {
    let mut cfg = RunConfig::load(Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/umls.conf"))?;
    cfg.set("seed", &seed.to_string())?;
    cfg.set("pipeline.variant", variant)?;
    cfg.output = out.to_path_buf();
    Ok(cfg)
}

fn main() -> reladapter::Result<()> {
    let mut args = std::env::args().skip(1);
    let seeds: u64 = args.next().map_or(3, |s| s.parse().expect("seeds"));
    let root = args.next().map_or_else(|| PathBuf::from("runs/umls_ablations"), PathBuf::from);
    let mut mrr: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for seed in 0..seeds {
        let dir = root.join(format!("seed{seed}"));
        let pre = cmd_pretrain(&config(&dir.join("pretrain"), seed, "full")?)?;
        for variant in VARIANTS {
            let cfg = config(&dir.join(variant), seed, variant)?;
            let s = cmd_meta_train(&cfg, Some(&pre))?;
            let (r, _) = cmd_meta_test(&cfg, None)?;
            println!(
                "seed {seed} {variant:<17} valid {:.3} (epoch {:>4})  test MRR {:.3}  Hits@10 {:.3}",
                s.best_mrr, s.best_epoch, r.mrr, r.hits10
            );
            mrr.entry(variant.to_string()).or_default().push(r.mrr);
        }
        let (r, _) = cmd_meta_test(&config(&dir.join("full"), seed, "transfer-adapter")?, None)?;
        println!("seed {seed} {:<17} test MRR {:.3}  Hits@10 {:.3}", "transfer-adapter", r.mrr, r.hits10);
        mrr.entry("transfer-adapter".into()).or_default().push(r.mrr);
    }
    println!("\nmean test MRR over {seeds} seeds");
    for (variant, v) in &mrr {
        println!("  {variant:<17} {:.3}", v.iter().sum::<f64>() / v.len() as f64);
    }
    Ok(())
}
