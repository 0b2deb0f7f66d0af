use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use reladapter::config::RunConfig;
use reladapter::runner;

#[derive(Parser)]
#[command(name = "reladapter", version, about = "Few-shot relation learning with context-aware adapters")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Config file (`key = value` lines).
    #[arg(long)]
    config: PathBuf,
    /// Overrides `seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides `output.dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Any other `key=value` override; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Pre-train TransE entity embeddings on the pre-train relations.
    Pretrain {
        #[command(flatten)]
        common: Common,
    },
    /// Meta-train on the train relations, early-stopping on validation MRR.
    MetaTrain {
        #[command(flatten)]
        common: Common,
        /// Pipeline variant, e.g. `full`, `no-adapter`, `no-context`.
        #[arg(long)]
        variant: Option<String>,
        /// Pre-training checkpoint (default: `<out>/pretrain.ckpt`).
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Tune per-relation adapters and rank queries on the test relations.
    MetaTest {
        #[command(flatten)]
        common: Common,
        /// Pipeline variant, e.g. `full`, `transfer-adapter`.
        #[arg(long)]
        variant: Option<String>,
        /// Support-set size K.
        #[arg(long)]
        shots: Option<usize>,
        /// Meta-trained checkpoint (default: `<out>/meta_train.ckpt`).
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Pairwise cosine similarity of the relations of one split.
    Analyze {
        #[command(flatten)]
        common: Common,
        /// Any checkpoint holding a pre-trained table (default: `<out>/pretrain.ckpt`).
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, default_value = "train")]
        split: String,
    },
}

fn load(common: &Common, extra: &[(&str, Option<String>)]) -> Result<RunConfig> {
    let mut cfg = RunConfig::load(&common.config).with_context(|| format!("loading {}", common.config.display()))?;
    for kv in &common.set {
        let (k, v) = kv.split_once('=').with_context(|| format!("--set expects KEY=VALUE, got `{kv}`"))?;
        cfg.set(k.trim(), v.trim())?;
    }
    if let Some(seed) = common.seed {
        cfg.set("seed", &seed.to_string())?;
    }
    if let Some(out) = &common.out {
        cfg.output = out.clone();
    }
    for (k, v) in extra {
        if let Some(v) = v {
            cfg.set(k, v)?;
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().command {
        Command::Pretrain { common } => {
            let cfg = load(&common, &[])?;
            let path = runner::cmd_pretrain(&cfg)?;
            println!("{}", path.display());
        }
        Command::MetaTrain { common, variant, checkpoint } => {
            let cfg = load(&common, &[("pipeline.variant", variant)])?;
            let s = runner::cmd_meta_train(&cfg, checkpoint.as_deref())?;
            println!(
                "valid MRR {:.4} -> best {:.4} at epoch {} ({} epochs run)",
                s.initial_mrr, s.best_mrr, s.best_epoch, s.epochs_run
            );
        }
        Command::MetaTest { common, variant, shots, checkpoint } => {
            let cfg = load(&common, &[("pipeline.variant", variant), ("test.shots", shots.map(|k| k.to_string()))])?;
            let (r, path) = runner::cmd_meta_test(&cfg, checkpoint.as_deref())?;
            println!(
                "{}: MRR {:.4}  Hits@1 {:.4}  Hits@5 {:.4}  Hits@10 {:.4}  ({} queries) -> {}",
                r.variant,
                r.mrr,
                r.hits1,
                r.hits5,
                r.hits10,
                r.n_queries,
                path.display()
            );
        }
        Command::Analyze { common, checkpoint, split } => {
            let cfg = load(&common, &[])?;
            let m = runner::cmd_analyze(&cfg, checkpoint.as_deref(), &split)?;
            println!("{}", m.summary_line());
        }
    }
    Ok(())
}
