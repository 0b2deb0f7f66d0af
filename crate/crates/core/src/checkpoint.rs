//! Binary checkpoints.
//!
//! Layout: the 8 magic bytes `RLADPT1\n`, a little-endian `u32` header
//! length, a compact JSON header, then every array as little-endian `f32`
//! in header order. Arrays are `emb`, `f`, the four relation-meta learner
//! tensors and, when present, the four adapter tensors. Pre-training
//! checkpoints hold only `emb` and `f`.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::adapter::{AdapterParams, ADAPTER_NAMES};
use crate::error::{CheckpointError, Error, Result};
use crate::kg::KnowledgeGraph;
use crate::meta::{RmlParams, RML_NAMES};
use crate::numerics::Tensor;
use crate::pretrain::EmbeddingTable;
use crate::train::ModelState;

pub const MAGIC: &[u8; 8] = b"RLADPT1\n";
pub const FORMAT_VERSION: u32 = 1;
pub const STAGE_PRETRAIN: &str = "pretrain";
pub const STAGE_META_TRAIN: &str = "meta-train";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArrayInfo {
    pub name: String,
    pub shape: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Header {
    pub format_version: u32,
    pub d: usize,
    /// Adapter hidden width of the run.
    pub m: usize,
    pub entity_count: usize,
    pub relation_count: usize,
    pub vocab_hash: String,
    pub stage: String,
    /// Pipeline variant the checkpoint was trained with.
    pub variant: String,
    /// Effective run configuration.
    pub hyperparams: BTreeMap<String, String>,
    pub arrays: Vec<ArrayInfo>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub header: Header,
    pub arrays: Vec<Tensor>,
}

fn corrupt(msg: impl Into<String>) -> Error {
    CheckpointError::CorruptHeader(msg.into()).into()
}

impl Checkpoint {
    fn new(
        kg: &KnowledgeGraph,
        stage: &str,
        m: usize,
        variant: &str,
        hyperparams: BTreeMap<String, String>,
        named: Vec<(String, Tensor)>,
    ) -> Result<Self> {
        if let Some((name, _)) = named.iter().find(|(_, t)| !t.is_finite()) {
            return Err(Error::NonFinite(format!("checkpoint array `{name}`")));
        }
        let d = named[0].1.cols();
        let header = Header {
            format_version: FORMAT_VERSION,
            d,
            m,
            entity_count: kg.entity_count(),
            relation_count: kg.relation_count(),
            vocab_hash: kg.vocab_digest(),
            stage: stage.to_string(),
            variant: variant.to_string(),
            hyperparams,
            arrays: named
                .iter()
                .map(|(n, t)| ArrayInfo {
                    name: n.clone(),
                    shape: t.shape().to_vec(),
                })
                .collect(),
        };
        Ok(Checkpoint {
            header,
            arrays: named.into_iter().map(|(_, t)| t).collect(),
        })
    }

    /// Pre-trained entity table, stored as both `emb` and `f`.
    pub fn from_pretrained(
        kg: &KnowledgeGraph,
        entities: &EmbeddingTable,
        m: usize,
        hyperparams: BTreeMap<String, String>,
    ) -> Result<Self> {
        let t = entities.tensor().clone();
        Self::new(
            kg,
            STAGE_PRETRAIN,
            m,
            "none",
            hyperparams,
            vec![("emb".into(), t.clone()), ("f".into(), t)],
        )
    }

    pub fn from_model(
        kg: &KnowledgeGraph,
        model: &ModelState,
        m: usize,
        variant: &str,
        hyperparams: BTreeMap<String, String>,
    ) -> Result<Self> {
        let mut named = vec![
            ("emb".to_string(), model.emb.tensor().clone()),
            ("f".to_string(), model.f.tensor().clone()),
        ];
        for (n, t) in model.phi.bundle().iter() {
            named.push((n.to_string(), t.clone()));
        }
        if let Some(theta) = &model.theta {
            for (n, t) in theta.bundle().iter() {
                named.push((n.to_string(), t.clone()));
            }
        }
        Self::new(kg, STAGE_META_TRAIN, m, variant, hyperparams, named)
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.header
            .arrays
            .iter()
            .position(|a| a.name == name)
            .map(|i| &self.arrays[i])
    }

    fn require(&self, name: &str) -> Result<Tensor> {
        self.get(name)
            .cloned()
            .ok_or_else(|| CheckpointError::MissingArray(name.to_string()).into())
    }

    pub fn expect_stage(&self, stage: &str) -> Result<()> {
        if self.header.stage == stage {
            Ok(())
        } else {
            Err(CheckpointError::WrongStage {
                expected: stage.to_string(),
                found: self.header.stage.clone(),
            }
            .into())
        }
    }

    pub fn check_vocab(&self, kg: &KnowledgeGraph) -> Result<()> {
        let current = kg.vocab_digest();
        if self.header.vocab_hash != current {
            return Err(CheckpointError::VocabMismatch {
                stored: self.header.vocab_hash.clone(),
                current,
            }
            .into());
        }
        Ok(())
    }

    /// The frozen pre-trained table (`f`).
    pub fn pretrained(&self, kg: &KnowledgeGraph) -> Result<EmbeddingTable> {
        self.check_vocab(kg)?;
        EmbeddingTable::new(self.require("f")?, true)
    }

    pub fn has_adapter(&self) -> bool {
        self.get(ADAPTER_NAMES[0]).is_some()
    }

    pub fn to_model(&self, kg: &KnowledgeGraph) -> Result<ModelState> {
        self.expect_stage(STAGE_META_TRAIN)?;
        self.check_vocab(kg)?;
        let four = |names: [&str; 4]| -> Result<[Tensor; 4]> {
            Ok([self.require(names[0])?, self.require(names[1])?, self.require(names[2])?, self.require(names[3])?])
        };
        let phi = RmlParams::from_tensors(four(RML_NAMES)?)?;
        let theta = if self.has_adapter() {
            Some(AdapterParams::from_tensors(four(ADAPTER_NAMES)?)?)
        } else {
            None
        };
        Ok(ModelState {
            emb: EmbeddingTable::new(self.require("emb")?, false)?,
            f: EmbeddingTable::new(self.require("f")?, true)?,
            phi,
            theta,
        })
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = serde_json::to_vec(&self.header)?;
        let payload: usize = self.arrays.iter().map(Tensor::len).sum();
        let mut out = Vec::with_capacity(12 + header.len() + 4 * payload);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(header.len() as u32).to_le_bytes());
        out.extend_from_slice(&header);
        for t in &self.arrays {
            for &v in t.data() {
                out.extend_from_slice(&(v as f32).to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 8 || &bytes[..8] != MAGIC {
            return Err(CheckpointError::BadMagic.into());
        }
        let len_bytes: [u8; 4] = bytes
            .get(8..12)
            .ok_or_else(|| corrupt("missing header length"))?
            .try_into()
            .expect("four bytes");
        let header_len = u32::from_le_bytes(len_bytes) as usize;
        let header_bytes = bytes
            .get(12..12 + header_len)
            .ok_or_else(|| corrupt("header runs past end of file"))?;
        let header: Header = serde_json::from_slice(header_bytes).map_err(|e| corrupt(e.to_string()))?;
        if header.format_version != FORMAT_VERSION {
            return Err(corrupt(format!("unsupported format version {}", header.format_version)));
        }
        let counts: Vec<usize> = header.arrays.iter().map(|a| a.shape.iter().product()).collect();
        let expected = 4 * counts.iter().sum::<usize>();
        let payload = &bytes[12 + header_len..];
        if payload.len() != expected {
            return Err(CheckpointError::SizeMismatch {
                expected,
                found: payload.len(),
            }
            .into());
        }
        let mut arrays = Vec::with_capacity(counts.len());
        let mut chunks = payload.chunks_exact(4);
        for (info, n) in header.arrays.iter().zip(counts) {
            let data: Vec<f64> = chunks
                .by_ref()
                .take(n)
                .map(|c| f32::from_le_bytes(c.try_into().expect("four bytes")) as f64)
                .collect();
            arrays.push(Tensor::from_shape(&info.shape, data).map_err(|e| corrupt(e.to_string()))?);
        }
        Ok(Checkpoint { header, arrays })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adapter::Pipeline;
    use crate::meta::Hyperparams;
    use crate::seed;
    use crate::synthetic::offset_graph;
    use rand::Rng;

    fn model(kg: &KnowledgeGraph) -> ModelState {
        let hp = Hyperparams {
            dim: 6,
            rml_hidden: 12,
            adapter_hidden: 3,
            ..Default::default()
        };
        let mut rng = seed::rng(1, &[]);
        let data = (0..kg.entity_count() * 6).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let table = EmbeddingTable::new(Tensor::matrix(kg.entity_count(), 6, data).unwrap(), true).unwrap();
        ModelState::init(&table, &hp, Pipeline::default()).unwrap()
    }

    #[test]
    fn round_trip_within_f32_precision() {
        let kg = offset_graph(12).kg;
        let m = model(&kg);
        let ck = Checkpoint::from_model(&kg, &m, 3, "full", BTreeMap::new()).unwrap();
        let back = Checkpoint::from_bytes(&ck.to_bytes().unwrap()).unwrap();
        assert_eq!(back.header, ck.header);
        let restored = back.to_model(&kg).unwrap();
        let pairs = [
            (m.emb.tensor(), restored.emb.tensor()),
            (m.f.tensor(), restored.f.tensor()),
        ];
        for (a, b) in pairs {
            for (x, y) in a.data().iter().zip(b.data()) {
                assert!((x - y).abs() <= 1e-6 * x.abs().max(1e-30));
            }
        }
        assert!(restored.theta.is_some());
        // a second save of the restored model is byte-identical
        let again = Checkpoint::from_model(&kg, &restored, 3, "full", BTreeMap::new()).unwrap();
        assert_eq!(again.to_bytes().unwrap(), ck.to_bytes().unwrap());
    }

    #[test]
    fn distinct_errors() {
        let kg = offset_graph(12).kg;
        let ck = Checkpoint::from_model(&kg, &model(&kg), 3, "full", BTreeMap::new()).unwrap();
        let bytes = ck.to_bytes().unwrap();
        let err = |b: &[u8]| Checkpoint::from_bytes(b).unwrap_err();
        assert!(matches!(err(&bytes[..bytes.len() - 3]), Error::Checkpoint(CheckpointError::SizeMismatch { .. })));
        assert!(matches!(err(b"NOTACKPT...."), Error::Checkpoint(CheckpointError::BadMagic)));
        let mut bad = bytes.clone();
        bad[13] = b'!';
        assert!(matches!(err(&bad), Error::Checkpoint(CheckpointError::CorruptHeader(_))));

        let other = offset_graph(13).kg;
        assert!(matches!(
            ck.to_model(&other),
            Err(Error::Checkpoint(CheckpointError::VocabMismatch { .. }))
        ));
        let pre = Checkpoint::from_pretrained(&kg, &model(&kg).f, 3, BTreeMap::new()).unwrap();
        assert!(matches!(
            pre.to_model(&kg),
            Err(Error::Checkpoint(CheckpointError::WrongStage { .. }))
        ));
        let mut no_phi = ck.clone();
        no_phi.header.arrays[2].name = "something".into();
        assert!(matches!(
            no_phi.to_model(&kg),
            Err(Error::Checkpoint(CheckpointError::MissingArray(_)))
        ));
    }
}
