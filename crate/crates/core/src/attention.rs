//! Manual attention weights from fiducial points, point-wise weighting of
//! records, and the two data augmentations (random segment, additive noise).

use std::path::Path;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::ecg_io::EcgRecord;
use crate::error::{Error, Result};
use crate::fiducial::{Beat, FiducialSet};

/// Wave region a rule emphasises. `St` runs from QRS offset to T offset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Region {
    P,
    Qrs,
    T,
    St,
}

impl Region {
    /// Inclusive span of this region in one beat, if present.
    pub fn span(self, beat: &Beat) -> Option<(usize, usize)> {
        match self {
            Region::P => beat.p_span(),
            Region::Qrs => Some(beat.qrs_span()),
            Region::T => beat.t_span(),
            Region::St => beat.t_offset.map(|off| (beat.qrs_offset, off)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiseaseRule {
    pub name: String,
    pub region: Region,
    pub in_weight: f64,
    pub base_weight: f64,
}

impl DiseaseRule {
    /// P waves at 1.0, everything else at 0.3.
    pub fn apc() -> Self {
        Self {
            name: "apc".into(),
            region: Region::P,
            in_weight: 1.0,
            base_weight: 0.3,
        }
    }

    /// ST segment through the T wave at 1.0, everything else at 0.3.
    pub fn stt() -> Self {
        Self {
            name: "stt".into(),
            region: Region::St,
            in_weight: 1.0,
            base_weight: 0.3,
        }
    }

    pub fn builtin(name: &str) -> Option<Self> {
        match name.to_ascii_lowercase().as_str() {
            "apc" => Some(Self::apc()),
            "stt" | "st-t" => Some(Self::stt()),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.base_weight > 0.0 && self.base_weight <= self.in_weight && self.in_weight <= 1.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "rule {:?}: need 0 < base_weight <= in_weight <= 1, got base {} in {}",
                self.name, self.base_weight, self.in_weight
            )))
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let rule: Self = serde_json::from_str(&text)?;
        rule.validate()?;
        Ok(rule)
    }

    /// A built-in name (`apc`, `stt`) or a path to a JSON rule file.
    pub fn resolve(spec: &str) -> Result<Self> {
        match Self::builtin(spec) {
            Some(rule) => Ok(rule),
            None => Self::load(Path::new(spec)),
        }
    }
}

impl FromStr for DiseaseRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::resolve(s)
    }
}

/// One weight per sample instant, shared by every lead.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AttentionWeights {
    w: Vec<f64>,
}

impl AttentionWeights {
    /// Values must be finite and within [0, 1].
    pub fn new(w: Vec<f64>) -> Result<Self> {
        if w.is_empty() {
            return Err(Error::Shape("attention weights must not be empty".into()));
        }
        if let Some((k, v)) = w.iter().enumerate().find(|(_, v)| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Param(format!("attention weight {v} at {k} outside [0, 1]")));
        }
        Ok(Self { w })
    }

    pub fn constant(len: usize, value: f64) -> Result<Self> {
        Self::new(vec![value; len])
    }

    pub fn len(&self) -> usize {
        self.w.len()
    }

    pub fn is_empty(&self) -> bool {
        self.w.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.w
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.w
    }

    /// Element-wise product.
    pub fn product(&self, other: &Self) -> Result<Self> {
        if self.len() != other.len() {
            return Err(Error::Shape(format!("weights of length {} and {}", self.len(), other.len())));
        }
        Ok(Self {
            w: self.w.iter().zip(&other.w).map(|(a, b)| a * b).collect(),
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string(self)?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let w: Vec<f64> = serde_json::from_str(&text)?;
        Self::new(w)
    }
}

/// `in_weight` on every sample inside a rule region, `base_weight` elsewhere.
pub fn manual_weights(fid: &FiducialSet, rule: &DiseaseRule, frames: usize) -> Result<AttentionWeights> {
    rule.validate()?;
    let mut w = vec![rule.base_weight; frames];
    for beat in &fid.beats {
        if beat.max_index() >= frames {
            return Err(Error::Bounds {
                index: beat.max_index(),
                len: frames,
            });
        }
        if let Some((lo, hi)) = rule.region.span(beat) {
            w[lo..=hi].iter_mut().for_each(|v| *v = rule.in_weight);
        }
    }
    AttentionWeights::new(w)
}

/// Multiplies every lead by `w` sample by sample.
pub fn apply_weights(rec: &EcgRecord, w: &AttentionWeights) -> Result<EcgRecord> {
    if w.len() != rec.frames() {
        return Err(Error::Shape(format!(
            "{} weights for a record of {} frames",
            w.len(),
            rec.frames()
        )));
    }
    let samples = rec
        .samples()
        .iter()
        .map(|lead| lead.iter().zip(&w.w).map(|(x, k)| x * k).collect())
        .collect();
    rec.with_samples(rec.fs(), samples)
}

/// Crops a random contiguous window of `out_len` frames from both the record
/// and its weights.
pub fn augment_segment<R: Rng + ?Sized>(
    rec: &EcgRecord,
    w: &AttentionWeights,
    out_len: usize,
    rng: &mut R,
) -> Result<(EcgRecord, AttentionWeights)> {
    let frames = rec.frames();
    if w.len() != frames {
        return Err(Error::Shape(format!("{} weights for {frames} frames", w.len())));
    }
    if out_len == 0 || out_len > frames {
        return Err(Error::Length(format!("segment of {out_len} frames from a record of {frames}")));
    }
    let start = rng.gen_range(0..=frames - out_len);
    let samples = rec
        .samples()
        .iter()
        .map(|lead| lead[start..start + out_len].to_vec())
        .collect();
    Ok((
        rec.with_samples(rec.fs(), samples)?,
        AttentionWeights::new(w.w[start..start + out_len].to_vec())?,
    ))
}

/// Adds i.i.d. Gaussian noise (`sigma_mv`) to every sample.
pub fn augment_noise<R: Rng + ?Sized>(rec: &EcgRecord, sigma_mv: f64, rng: &mut R) -> Result<EcgRecord> {
    if !(sigma_mv >= 0.0 && sigma_mv.is_finite()) {
        return Err(Error::Param(format!("noise sigma must be >= 0, got {sigma_mv}")));
    }
    if sigma_mv == 0.0 {
        return Ok(rec.clone());
    }
    let normal = Normal::new(0.0, sigma_mv).map_err(|e| Error::Param(e.to_string()))?;
    let samples = rec
        .samples()
        .iter()
        .map(|lead| lead.iter().map(|x| x + normal.sample(rng)).collect())
        .collect();
    rec.with_samples(rec.fs(), samples)
}
