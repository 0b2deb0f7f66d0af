//! Pipeline commands. Each writes into the run directory
//! (`output.dir`): the config echo, checkpoints, the training log,
//! metrics and the similarity matrix.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::checkpoint::{Checkpoint, STAGE_META_TRAIN};
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::eval::{evaluate_split, relation_similarity_matrix, MetricsReport, SimilarityMatrix};
use crate::kg::{CandidatePools, KnowledgeGraph, RelationSplits};
use crate::pretrain::pretrain_transe;
use crate::train::{format_log, meta_train, Dataset, ModelState, TrainOutcome};

pub const CONFIG_ECHO: &str = "config.txt";
pub const PRETRAIN_CKPT: &str = "pretrain.ckpt";
pub const META_TRAIN_CKPT: &str = "meta_train.ckpt";
pub const TRAIN_LOG: &str = "train_log.tsv";
pub const TRAIN_SUMMARY: &str = "train_summary.json";
pub const SIMILARITY_CSV: &str = "similarity.csv";
pub const SIMILARITY_SUMMARY: &str = "similarity_summary.txt";

/// `metrics_<variant>.json`, with `,` in combined variants written as `+`.
pub fn metrics_file(variant: &str) -> String {
    format!("metrics_{}.json", variant.replace(',', "+"))
}

/// Graph, splits and candidate pools named by the config.
pub fn load_dataset(cfg: &RunConfig) -> Result<Dataset> {
    let kg = KnowledgeGraph::load_triples(&cfg.triples)?;
    let splits = RelationSplits::load(&cfg.splits, &kg)?;
    let mut pools = CandidatePools::fallback_only(&kg, &splits.held_out(), cfg.hp.filtered);
    if let Some(path) = &cfg.candidates {
        pools = pools.with_file(path, &kg)?;
    }
    Ok(Dataset::new(kg, splits, pools, cfg.hp.max_neighbors, cfg.hp.seed))
}

fn prepare(cfg: &RunConfig) -> Result<&Path> {
    cfg.validate()?;
    let out = cfg.output.as_path();
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let echo = out.join(CONFIG_ECHO);
    std::fs::write(&echo, cfg.echo()).map_err(|e| Error::io(&echo, e))?;
    Ok(out)
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// TransE on the pre-train relations; writes `pretrain.ckpt`.
pub fn cmd_pretrain(cfg: &RunConfig) -> Result<PathBuf> {
    let out = prepare(cfg)?;
    let kg = KnowledgeGraph::load_triples(&cfg.triples)?;
    let splits = RelationSplits::load(&cfg.splits, &kg)?;
    let trained = pretrain_transe(&kg, &splits.pretrain, &cfg.pretrain)?;
    if let (Some(first), Some(last)) = (trained.epoch_losses.first(), trained.epoch_losses.last()) {
        log::info!("pre-training loss {first:.4} -> {last:.4}");
    }
    let ck = Checkpoint::from_pretrained(&kg, &trained.entities, cfg.hp.adapter_hidden, cfg.entries())?;
    let path = out.join(PRETRAIN_CKPT);
    ck.save(&path)?;
    Ok(path)
}

/// Headline numbers of a meta-training run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub initial_mrr: f64,
    pub best_mrr: f64,
    pub best_epoch: usize,
    pub epochs_run: usize,
    pub stopped_early: bool,
    pub variant: String,
}

impl TrainSummary {
    fn from_outcome(o: &TrainOutcome, variant: &str) -> Self {
        TrainSummary {
            initial_mrr: o.initial_mrr,
            best_mrr: o.best_mrr,
            best_epoch: o.best_epoch,
            epochs_run: o.epochs_run,
            stopped_early: o.stopped_early,
            variant: variant.to_string(),
        }
    }
}

/// Meta-trains from a pre-training checkpoint (default: the run
/// directory's); writes the best-on-validation `meta_train.ckpt`,
/// `train_log.tsv` and `train_summary.json`.
pub fn cmd_meta_train(cfg: &RunConfig, pretrained: Option<&Path>) -> Result<TrainSummary> {
    let out = prepare(cfg)?;
    let pipeline = cfg.pipeline()?;
    let data = load_dataset(cfg)?;
    let ck_path = pretrained.map_or_else(|| out.join(PRETRAIN_CKPT), Path::to_path_buf);
    let table = Checkpoint::load(&ck_path)?.pretrained(&data.kg)?;
    let model = ModelState::init(&table, &cfg.hp, pipeline)?;
    let outcome = meta_train(&data, model, &cfg.hp, pipeline)?;
    let ck = Checkpoint::from_model(&data.kg, &outcome.model, cfg.hp.adapter_hidden, &pipeline.name(), cfg.entries())?;
    ck.save(&out.join(META_TRAIN_CKPT))?;
    write(&out.join(TRAIN_LOG), &format_log(&outcome.log))?;
    let summary = TrainSummary::from_outcome(&outcome, &pipeline.name());
    write(&out.join(TRAIN_SUMMARY), &(serde_json::to_string_pretty(&summary)? + "\n"))?;
    Ok(summary)
}

/// Meta-tests a meta-trained checkpoint (default: the run directory's) on
/// the test relations; writes `metrics_<variant>.json`.
pub fn cmd_meta_test(cfg: &RunConfig, checkpoint: Option<&Path>) -> Result<(MetricsReport, PathBuf)> {
    let out = prepare(cfg)?;
    let pipeline = cfg.pipeline()?;
    let data = load_dataset(cfg)?;
    let ck_path = checkpoint.map_or_else(|| out.join(META_TRAIN_CKPT), Path::to_path_buf);
    let ck = Checkpoint::load(&ck_path)?;
    ck.expect_stage(STAGE_META_TRAIN)?;
    if pipeline.transfer && !ck.has_adapter() {
        return Err(Error::Config(
            "transfer-adapter needs a checkpoint trained with an adapter".into(),
        ));
    }
    let model = ck.to_model(&data.kg)?;
    if ck.header.variant != pipeline.name() {
        log::info!(
            "checkpoint trained as `{}`, testing as `{}`",
            ck.header.variant,
            pipeline.name()
        );
    }
    let table = if pipeline.context { Some(model.context_table(&data, &cfg.hp)?) } else { None };
    let mut report = evaluate_split(&data, &data.splits.test, &model, table.as_ref(), &cfg.hp, pipeline, cfg.hp.seed)?;
    report.config = cfg.entries();
    let path = out.join(metrics_file(&pipeline.name()));
    write(&path, &report.to_json()?)?;
    Ok((report, path))
}

/// Pairwise similarity of the relations in `split`, from the pre-trained
/// table of a checkpoint (default: the run directory's pre-training one);
/// writes `similarity.csv` and a one-line summary.
pub fn cmd_analyze(cfg: &RunConfig, checkpoint: Option<&Path>, split: &str) -> Result<SimilarityMatrix> {
    let out = prepare(cfg)?;
    let kg = KnowledgeGraph::load_triples(&cfg.triples)?;
    let splits = RelationSplits::load(&cfg.splits, &kg)?;
    let relations = splits
        .get(split)
        .ok_or_else(|| Error::Splits(format!("unknown split `{split}`")))?;
    let ck_path = checkpoint.map_or_else(|| out.join(crate::runner::PRETRAIN_CKPT), Path::to_path_buf);
    let table = Checkpoint::load(&ck_path)?.pretrained(&kg)?;
    let matrix = relation_similarity_matrix(&kg, &table, relations)?;
    matrix.write_csv(&out.join(SIMILARITY_CSV))?;
    write(&out.join(SIMILARITY_SUMMARY), &(matrix.summary_line() + "\n"))?;
    Ok(matrix)
}
