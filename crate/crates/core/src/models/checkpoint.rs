//! Binary checkpoints: `DANT` magic, little-endian `u32` version, `u32`
//! header length, a JSON header, then every parameter as a little-endian
//! `f64` in declaration order.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::{ClassifierConfig, EnhancerConfig, LeadStrategy, StageTag};
use super::{ClassifierModel, DanetModel};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"DANT";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    /// `danet` or `classifier`.
    pub kind: String,
    pub stage: StageTag,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub strategy: Option<LeadStrategy>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub enhancer: Option<EnhancerConfig>,
    pub classifier: ClassifierConfig,
    pub param_count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Checkpoint {
    Danet(DanetModel),
    Classifier(ClassifierModel),
}

impl Checkpoint {
    pub fn stage(&self) -> StageTag {
        match self {
            Checkpoint::Danet(m) => m.stage,
            Checkpoint::Classifier(m) => m.stage,
        }
    }

    pub fn header(&self) -> CheckpointHeader {
        match self {
            Checkpoint::Danet(m) => CheckpointHeader {
                kind: "danet".into(),
                stage: m.stage,
                strategy: Some(m.strategy),
                enhancer: Some(m.enhancer.config.clone()),
                classifier: m.classifier.config.clone(),
                param_count: m.store.scalar_count(),
            },
            Checkpoint::Classifier(m) => CheckpointHeader {
                kind: "classifier".into(),
                stage: m.stage,
                strategy: None,
                enhancer: None,
                classifier: m.classifier.config.clone(),
                param_count: m.store.scalar_count(),
            },
        }
    }

    pub fn into_danet(self) -> Result<DanetModel> {
        match self {
            Checkpoint::Danet(m) => Ok(m),
            Checkpoint::Classifier(m) => Err(Error::Config(format!(
                "expected a DANet checkpoint, found a {} classifier",
                m.stage
            ))),
        }
    }

    pub fn into_classifier(self) -> Result<ClassifierModel> {
        match self {
            Checkpoint::Classifier(m) => Ok(m),
            Checkpoint::Danet(m) => Err(Error::Config(format!(
                "expected a classifier checkpoint, found a {} DANet",
                m.stage
            ))),
        }
    }

    /// Fails with a config error unless the architecture matches.
    pub fn expect_configs(&self, enhancer: Option<&EnhancerConfig>, classifier: &ClassifierConfig) -> Result<()> {
        let h = self.header();
        if h.enhancer.as_ref() != enhancer || &h.classifier != classifier {
            return Err(Error::Config(format!(
                "checkpoint architecture differs from the expected one (stage {})",
                h.stage
            )));
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = serde_json::to_vec(&self.header())?;
        let params = match self {
            Checkpoint::Danet(m) => m.store.flatten(),
            Checkpoint::Classifier(m) => m.store.flatten(),
        };
        let mut out = Vec::with_capacity(12 + header.len() + 8 * params.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u32).to_le_bytes());
        out.extend_from_slice(&header);
        for v in params {
            out.extend_from_slice(&v.to_le_bytes());
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 4 || &bytes[..4] != MAGIC {
            return Err(Error::Format("not a checkpoint (bad magic)".into()));
        }
        let read_u32 = |at: usize| -> Result<u32> {
            bytes
                .get(at..at + 4)
                .map(|b| u32::from_le_bytes(b.try_into().unwrap()))
                .ok_or_else(|| Error::Corrupt("checkpoint truncated in preamble".into()))
        };
        let version = read_u32(4)?;
        if version != VERSION {
            return Err(Error::Format(format!("checkpoint version {version}, expected {VERSION}")));
        }
        let header_len = read_u32(8)? as usize;
        let header_bytes = bytes
            .get(12..12 + header_len)
            .ok_or_else(|| Error::Corrupt("checkpoint truncated in header".into()))?;
        let header: CheckpointHeader =
            serde_json::from_slice(header_bytes).map_err(|e| Error::Corrupt(format!("checkpoint header: {e}")))?;
        let body = &bytes[12 + header_len..];
        if body.len() != header.param_count * 8 {
            return Err(Error::Corrupt(format!(
                "checkpoint holds {} bytes of parameters, header declares {}",
                body.len(),
                header.param_count * 8
            )));
        }
        let values: Vec<f64> = body
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();

        let mut ckpt = match header.kind.as_str() {
            "danet" => {
                let enhancer = header
                    .enhancer
                    .as_ref()
                    .ok_or_else(|| Error::Corrupt("DANet checkpoint without enhancer config".into()))?;
                let strategy = header.strategy.unwrap_or_default();
                Checkpoint::Danet(DanetModel::new(enhancer, &header.classifier, strategy, 0)?)
            }
            "classifier" => Checkpoint::Classifier(ClassifierModel::new(&header.classifier, header.stage, 0)?),
            other => return Err(Error::Corrupt(format!("unknown checkpoint kind {other:?}"))),
        };
        let store = match &mut ckpt {
            Checkpoint::Danet(m) => {
                m.stage = header.stage;
                &mut m.store
            }
            Checkpoint::Classifier(m) => &mut m.store,
        };
        if store.scalar_count() != header.param_count {
            return Err(Error::Config(format!(
                "header declares {} parameters, architecture has {}",
                header.param_count,
                store.scalar_count()
            )));
        }
        store.load_flat(&values)?;
        Ok(ckpt)
    }
}

pub fn save_checkpoint(ckpt: &Checkpoint, path: &Path) -> Result<()> {
    std::fs::write(path, ckpt.to_bytes()?).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Checkpoint::from_bytes(&bytes)
}

impl DanetModel {
    pub fn save(&self, path: &Path) -> Result<()> {
        save_checkpoint(&Checkpoint::Danet(self.clone()), path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        load_checkpoint(path)?.into_danet()
    }
}

impl ClassifierModel {
    pub fn save(&self, path: &Path) -> Result<()> {
        save_checkpoint(&Checkpoint::Classifier(self.clone()), path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        load_checkpoint(path)?.into_classifier()
    }
}
