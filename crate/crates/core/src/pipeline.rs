//! Record preparation shared by training, evaluation and the command line:
//! preprocess, delineate the reference lead, build manual weights.

use serde::{Deserialize, Serialize};

use crate::attention::{manual_weights, AttentionWeights, DiseaseRule};
use crate::delineator::{delineate_with, DelineatorConfig};
use crate::ecg_io::{DatasetManifest, EcgRecord, Label, SynthSample};
use crate::error::Result;
use crate::fiducial::FiducialSet;
use crate::signal::{preprocess, PreprocessConfig};
use crate::training::Example;

/// Lead delineated when a record keeps several leads.
pub const REFERENCE_LEAD: &str = "II";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrepareConfig {
    pub preprocess: PreprocessConfig,
    pub rule: DiseaseRule,
    #[serde(default)]
    pub delineator: DelineatorConfig,
}

impl Default for PrepareConfig {
    fn default() -> Self {
        Self {
            preprocess: PreprocessConfig::default(),
            rule: DiseaseRule::apc(),
            delineator: DelineatorConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prepared {
    pub record: EcgRecord,
    pub fiducials: FiducialSet,
    pub weights: AttentionWeights,
}

/// Fiducials of the reference lead (or the first lead) of a preprocessed record.
pub fn delineate_record(rec: &EcgRecord, cfg: &DelineatorConfig) -> Result<FiducialSet> {
    let lead = rec.lead_index(REFERENCE_LEAD).unwrap_or(0);
    delineate_with(rec.lead(lead), rec.fs(), cfg)
}

pub fn prepare_record(raw: &EcgRecord, cfg: &PrepareConfig) -> Result<Prepared> {
    let record = preprocess(raw, &cfg.preprocess)?;
    let fiducials = delineate_record(&record, &cfg.delineator)?;
    let weights = manual_weights(&fiducials, &cfg.rule, record.frames())?;
    Ok(Prepared {
        record,
        fiducials,
        weights,
    })
}

pub fn prepare_example(raw: &EcgRecord, label: Option<Label>, cfg: &PrepareConfig) -> Result<Example> {
    let p = prepare_record(raw, cfg)?;
    Ok(Example {
        id: raw.id().to_string(),
        record: p.record,
        weights: Some(p.weights),
        label,
    })
}

/// Every labelled record of a dataset manifest, in label-file order.
pub fn prepare_dataset(manifest: &DatasetManifest, cfg: &PrepareConfig) -> Result<Vec<Example>> {
    manifest
        .load_labels()?
        .iter()
        .map(|entry| {
            let raw = manifest.load_record(&entry.record_id)?;
            prepare_example(&raw.with_id(entry.record_id.clone()), Some(entry.label), cfg)
        })
        .collect()
}

/// In-memory synthetic samples to examples.
pub fn prepare_synthetic(samples: &[SynthSample], cfg: &PrepareConfig) -> Result<Vec<Example>> {
    samples
        .iter()
        .map(|s| prepare_example(&s.record, Some(s.label.label), cfg))
        .collect()
}
