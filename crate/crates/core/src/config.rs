//! Flat `key = value` run configuration.
//!
//! Lines are `key = value`; `#` starts a comment; blank lines are ignored.
//! Unknown keys are rejected. Dataset paths are resolved against the
//! directory of the config file. Precedence, lowest first: built-in
//! defaults, the file, command-line overrides.

use std::path::{Path, PathBuf};

use crate::adapter::{ablation_variant, Pipeline};
use crate::error::{Error, Result};
use crate::meta::Hyperparams;
use crate::pretrain::PretrainConfig;

/// Every accepted key, in echo order.
pub const KEYS: [&str; 29] = [
    "dataset.triples",
    "dataset.splits",
    "dataset.candidates",
    "model.dim",
    "model.rml_hidden",
    "adapter.hidden",
    "adapter.alpha",
    "context.mu",
    "context.hops",
    "context.max_neighbors",
    "train.gamma",
    "train.beta",
    "train.lr",
    "train.batch_size",
    "train.epochs",
    "train.eval_every",
    "train.patience",
    "train.queries",
    "test.shots",
    "test.adapter_steps",
    "test.adapter_tol",
    "test.filtered",
    "pretrain.lr",
    "pretrain.margin",
    "pretrain.epochs",
    "pretrain.batch_size",
    "pipeline.variant",
    "seed",
    "output.dir",
];

const REQUIRED: [&str; 2] = ["dataset.triples", "dataset.splits"];

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub triples: PathBuf,
    pub splits: PathBuf,
    pub candidates: Option<PathBuf>,
    pub hp: Hyperparams,
    pub pretrain: PretrainConfig,
    pub variant: String,
    pub output: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            triples: PathBuf::new(),
            splits: PathBuf::new(),
            candidates: None,
            hp: Hyperparams::default(),
            pretrain: PretrainConfig::default(),
            variant: "full".to_string(),
            output: PathBuf::from("runs/default"),
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value
        .parse()
        .map_err(|e| Error::Config(format!("{key} = `{value}`: {e}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(Error::Config(format!("{key} = `{value}`: expected true or false"))),
    }
}

fn resolve(base: &Path, value: &str) -> PathBuf {
    let p = PathBuf::from(value);
    if p.is_absolute() {
        p
    } else {
        base.join(p)
    }
}

impl RunConfig {
    /// Reads a config file; relative paths resolve against its directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse_str(&text, base, path)
    }

    /// Parses config text; `origin` is only used in error messages.
    pub fn parse_str(text: &str, base: &Path, origin: &Path) -> Result<Self> {
        let mut cfg = RunConfig::default();
        let mut seen = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let parse_err = |msg: String| Error::Parse {
                path: origin.to_path_buf(),
                line: i + 1,
                msg,
            };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| parse_err(format!("expected `key = value`, got `{line}`")))?;
            let (key, value) = (key.trim(), value.trim());
            if seen.iter().any(|k| k == key) {
                return Err(parse_err(format!("duplicate key `{key}`")));
            }
            cfg.set_with_base(key, value, base)
                .map_err(|e| parse_err(e.to_string()))?;
            seen.push(key.to_string());
        }
        let missing: Vec<&str> = REQUIRED
            .iter()
            .copied()
            .filter(|k| !seen.iter().any(|s| s == k))
            .collect();
        if !missing.is_empty() {
            return Err(Error::Config(format!("missing required keys: {}", missing.join(", "))));
        }
        Ok(cfg)
    }

    /// Applies one override; relative paths resolve against the current
    /// directory.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        self.set_with_base(key, value, Path::new(""))
    }

    fn set_with_base(&mut self, key: &str, value: &str, base: &Path) -> Result<()> {
        let hp = &mut self.hp;
        match key {
            "dataset.triples" => self.triples = resolve(base, value),
            "dataset.splits" => self.splits = resolve(base, value),
            "dataset.candidates" => {
                self.candidates = (!value.is_empty() && value != "none").then(|| resolve(base, value))
            }
            "model.dim" => {
                hp.dim = parse(key, value)?;
                self.pretrain.dim = hp.dim;
            }
            "model.rml_hidden" => hp.rml_hidden = parse(key, value)?,
            "adapter.hidden" => hp.adapter_hidden = parse(key, value)?,
            "adapter.alpha" => hp.alpha = parse(key, value)?,
            "context.mu" => hp.mu = parse(key, value)?,
            "context.hops" => hp.hops = parse(key, value)?,
            "context.max_neighbors" => hp.max_neighbors = parse(key, value)?,
            "train.gamma" => hp.gamma = parse(key, value)?,
            "train.beta" => hp.beta = parse(key, value)?,
            "train.lr" => hp.lr = parse(key, value)?,
            "train.batch_size" => hp.batch_size = parse(key, value)?,
            "train.epochs" => hp.epochs = parse(key, value)?,
            "train.eval_every" => hp.eval_every = parse(key, value)?,
            "train.patience" => hp.patience = parse(key, value)?,
            "train.queries" => hp.queries = parse(key, value)?,
            "test.shots" => hp.shots = parse(key, value)?,
            "test.adapter_steps" => hp.adapter_steps = parse(key, value)?,
            "test.adapter_tol" => hp.adapter_tol = parse(key, value)?,
            "test.filtered" => hp.filtered = parse_bool(key, value)?,
            "pretrain.lr" => self.pretrain.lr = parse(key, value)?,
            "pretrain.margin" => self.pretrain.margin = parse(key, value)?,
            "pretrain.epochs" => self.pretrain.epochs = parse(key, value)?,
            "pretrain.batch_size" => self.pretrain.batch_size = parse(key, value)?,
            "pipeline.variant" => {
                ablation_variant(value)?;
                self.variant = value.to_string();
            }
            "seed" => {
                hp.seed = parse(key, value)?;
                self.pretrain.seed = hp.seed;
            }
            "output.dir" => self.output = resolve(base, value),
            _ => return Err(Error::Config(format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<String> {
        let hp = &self.hp;
        let path = |p: &Path| p.display().to_string();
        Some(match key {
            "dataset.triples" => path(&self.triples),
            "dataset.splits" => path(&self.splits),
            "dataset.candidates" => self.candidates.as_deref().map_or("none".to_string(), path),
            "model.dim" => hp.dim.to_string(),
            "model.rml_hidden" => hp.rml_hidden.to_string(),
            "adapter.hidden" => hp.adapter_hidden.to_string(),
            "adapter.alpha" => hp.alpha.to_string(),
            "context.mu" => hp.mu.to_string(),
            "context.hops" => hp.hops.to_string(),
            "context.max_neighbors" => hp.max_neighbors.to_string(),
            "train.gamma" => hp.gamma.to_string(),
            "train.beta" => hp.beta.to_string(),
            "train.lr" => hp.lr.to_string(),
            "train.batch_size" => hp.batch_size.to_string(),
            "train.epochs" => hp.epochs.to_string(),
            "train.eval_every" => hp.eval_every.to_string(),
            "train.patience" => hp.patience.to_string(),
            "train.queries" => hp.queries.to_string(),
            "test.shots" => hp.shots.to_string(),
            "test.adapter_steps" => hp.adapter_steps.to_string(),
            "test.adapter_tol" => hp.adapter_tol.to_string(),
            "test.filtered" => hp.filtered.to_string(),
            "pretrain.lr" => self.pretrain.lr.to_string(),
            "pretrain.margin" => self.pretrain.margin.to_string(),
            "pretrain.epochs" => self.pretrain.epochs.to_string(),
            "pretrain.batch_size" => self.pretrain.batch_size.to_string(),
            "pipeline.variant" => self.variant.clone(),
            "seed" => hp.seed.to_string(),
            "output.dir" => path(&self.output),
            _ => return None,
        })
    }

    /// Range checks across all sections.
    pub fn validate(&self) -> Result<()> {
        self.hp.validate()?;
        self.pretrain.validate()?;
        self.pipeline()?;
        if self.pretrain.dim != self.hp.dim {
            return Err(Error::Config("pre-training and model dimensions differ".into()));
        }
        Ok(())
    }

    pub fn pipeline(&self) -> Result<Pipeline> {
        ablation_variant(&self.variant)
    }

    /// Every key with its effective value, one `key = value` per line.
    /// Loading the echo reproduces this configuration.
    pub fn echo(&self) -> String {
        KEYS.iter()
            .map(|k| format!("{k} = {}\n", self.get(k).expect("listed key")))
            .collect()
    }

    /// The echo as ordered pairs, for embedding in output headers.
    pub fn entries(&self) -> std::collections::BTreeMap<String, String> {
        KEYS.iter()
            .map(|k| (k.to_string(), self.get(k).expect("listed key")))
            .collect()
    }
}
