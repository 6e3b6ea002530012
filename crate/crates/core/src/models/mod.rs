//! The waveform enhancer, the classifier, and the two ways of combining them:
//! learned weights (DANet) and manual weights (DANet-h).

mod checkpoint;
mod config;
mod network;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::attention::AttentionWeights;
use crate::ecg_io::EcgRecord;
use crate::error::{Error, Result};
use crate::nn::{Graph, NodeId, ParamId, ParamStore, Tensor};

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CheckpointHeader, MAGIC, VERSION};
pub use config::{ClassifierConfig, ConvStage, EnhancerConfig, LeadStrategy, StageTag};
pub use network::{Classifier, ClassifierNodes, Enhancer, EnhancerNodes};

const ENHANCER_STREAM: u64 = 1;
const CLASSIFIER_STREAM: u64 = 2;

/// Per-network init generators. The classifier stream does not depend on
/// whether an enhancer was built, so every model kind shares its classifier
/// initialisation for a given seed.
fn init_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// `(channels, frames)` tensor holding a record's samples.
pub fn record_tensor(rec: &EcgRecord) -> Tensor {
    Tensor::new(vec![rec.channels(), rec.frames()], rec.samples().concat()).expect("record shape is consistent")
}

/// Builds a classifier in its own parameter store.
pub fn build_classifier(cfg: &ClassifierConfig, seed: u64) -> Result<ClassifierModel> {
    ClassifierModel::new(cfg, StageTag::Init, seed)
}

/// Builds an enhancer in its own parameter store.
pub fn build_enhancer(cfg: &EnhancerConfig, seed: u64) -> Result<(ParamStore, Enhancer)> {
    let mut store = ParamStore::new();
    let enhancer = Enhancer::build(cfg, &mut store, &mut init_rng(seed, ENHANCER_STREAM))?;
    Ok((store, enhancer))
}

fn check_channels(rec: &EcgRecord, expected: usize) -> Result<()> {
    if rec.channels() != expected {
        return Err(Error::Shape(format!(
            "model expects {expected} lead(s), record {} has {}",
            rec.id(),
            rec.channels()
        )));
    }
    Ok(())
}

/// Enhancer plus classifier in one parameter store (enhancer first).
#[derive(Debug, Clone, PartialEq)]
pub struct DanetModel {
    pub store: ParamStore,
    pub enhancer: Enhancer,
    pub classifier: Classifier,
    pub strategy: LeadStrategy,
    pub stage: StageTag,
}

/// Node ids of one DANet pass.
#[derive(Debug, Clone)]
pub struct DanetNodes {
    pub enhancer: EnhancerNodes,
    pub weighted: NodeId,
    pub classifier: ClassifierNodes,
}

impl DanetModel {
    pub fn new(
        enhancer: &EnhancerConfig,
        classifier: &ClassifierConfig,
        strategy: LeadStrategy,
        seed: u64,
    ) -> Result<Self> {
        let channels = strategy.channels();
        if enhancer.in_channels != channels || classifier.in_channels != channels {
            return Err(Error::Config(format!(
                "lead strategy needs {channels} channel(s); enhancer has {}, classifier {}",
                enhancer.in_channels, classifier.in_channels
            )));
        }
        let mut store = ParamStore::new();
        let enh = Enhancer::build(enhancer, &mut store, &mut init_rng(seed, ENHANCER_STREAM))?;
        let cls = Classifier::build(classifier, &mut store, &mut init_rng(seed, CLASSIFIER_STREAM))?;
        Ok(Self {
            store,
            enhancer: enh,
            classifier: cls,
            strategy,
            stage: StageTag::Init,
        })
    }

    pub fn enhancer_params(&self) -> Vec<ParamId> {
        self.enhancer.param_ids()
    }

    pub fn classifier_params(&self) -> Vec<ParamId> {
        self.classifier.param_ids()
    }

    /// The enhancer accepts any length with the right lead count.
    pub fn check_enhancer_input(&self, rec: &EcgRecord) -> Result<()> {
        check_channels(rec, self.strategy.channels())
    }

    pub fn check_record(&self, rec: &EcgRecord) -> Result<()> {
        check_channels(rec, self.strategy.channels())?;
        if rec.frames() != self.classifier.config.input_frames {
            return Err(Error::Shape(format!(
                "classifier expects {} frames, record {} has {}",
                self.classifier.config.input_frames,
                rec.id(),
                rec.frames()
            )));
        }
        Ok(())
    }

    /// Records the full pass `x -> w2 -> x * w2 -> probability`.
    pub fn graph_forward(&self, g: &mut Graph, x: NodeId) -> Result<DanetNodes> {
        let enhancer = self.enhancer.forward(g, x)?;
        let weighted = g.scale_frames(x, enhancer.weights)?;
        let classifier = self.classifier.forward(g, weighted)?;
        Ok(DanetNodes {
            enhancer,
            weighted,
            classifier,
        })
    }

    /// Automatic attention weights w2 for one record.
    pub fn enhance(&self, rec: &EcgRecord) -> Result<AttentionWeights> {
        check_channels(rec, self.strategy.channels())?;
        let mut g = Graph::new(&self.store);
        let x = g.input(record_tensor(rec));
        let nodes = self.enhancer.forward(&mut g, x)?;
        AttentionWeights::new(g.value(nodes.weights).data().to_vec())
    }

    /// APC probability of `classifier(rec * enhancer(rec))`.
    pub fn predict(&self, rec: &EcgRecord) -> Result<f64> {
        self.check_record(rec)?;
        let mut g = Graph::new(&self.store);
        let x = g.input(record_tensor(rec));
        let nodes = self.graph_forward(&mut g, x)?;
        Ok(g.value(nodes.classifier.prob).data()[0])
    }

    /// Classifier applied to an already weighted record.
    pub fn classify(&self, rec: &EcgRecord) -> Result<f64> {
        self.check_record(rec)?;
        classify_with(&self.store, &self.classifier, rec)
    }
}

fn classify_with(store: &ParamStore, classifier: &Classifier, rec: &EcgRecord) -> Result<f64> {
    let mut g = Graph::new(store);
    let x = g.input(record_tensor(rec));
    let nodes = classifier.forward(&mut g, x)?;
    Ok(g.value(nodes.prob).data()[0])
}

/// A classifier on its own: the baseline CNN or DANet-h.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierModel {
    pub store: ParamStore,
    pub classifier: Classifier,
    pub stage: StageTag,
}

impl ClassifierModel {
    pub fn new(cfg: &ClassifierConfig, stage: StageTag, seed: u64) -> Result<Self> {
        let mut store = ParamStore::new();
        let classifier = Classifier::build(cfg, &mut store, &mut init_rng(seed, CLASSIFIER_STREAM))?;
        Ok(Self { store, classifier, stage })
    }

    pub fn check_record(&self, rec: &EcgRecord) -> Result<()> {
        let cfg = &self.classifier.config;
        check_channels(rec, cfg.in_channels)?;
        if rec.frames() != cfg.input_frames {
            return Err(Error::Shape(format!(
                "classifier expects {} frames, record {} has {}",
                cfg.input_frames,
                rec.id(),
                rec.frames()
            )));
        }
        Ok(())
    }

    pub fn predict(&self, rec: &EcgRecord) -> Result<f64> {
        self.check_record(rec)?;
        classify_with(&self.store, &self.classifier, rec)
    }

    /// Pre-sigmoid output.
    pub fn logit(&self, rec: &EcgRecord) -> Result<f64> {
        self.check_record(rec)?;
        let mut g = Graph::new(&self.store);
        let x = g.input(record_tensor(rec));
        let nodes = self.classifier.forward(&mut g, x)?;
        Ok(g.value(nodes.logit).data()[0])
    }

    /// DANet-h: classifier of `rec * w1`.
    pub fn predict_weighted(&self, rec: &EcgRecord, w1: &AttentionWeights) -> Result<f64> {
        danet_h_forward(self, rec, w1)
    }
}

/// Automatic weights from the enhancer of `model`.
pub fn enhancer_forward(model: &DanetModel, rec: &EcgRecord) -> Result<AttentionWeights> {
    model.enhance(rec)
}

pub fn danet_forward(model: &DanetModel, rec: &EcgRecord) -> Result<f64> {
    model.predict(rec)
}

pub fn danet_h_forward(model: &ClassifierModel, rec: &EcgRecord, w1: &AttentionWeights) -> Result<f64> {
    let amended = crate::attention::apply_weights(rec, w1)?;
    model.predict(&amended)
}
