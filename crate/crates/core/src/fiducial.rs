//! Per-beat fiducial points shared by the synthetic generator (ground truth)
//! and the delineator (estimates). Both serialize to the same `truth.json`
//! schema: a map from record id to `{ "fs": .., "beats": [..] }` with
//! zero-based sample indices.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Beat {
    pub r_peak: usize,
    pub qrs_onset: usize,
    pub qrs_offset: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_onset: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_offset: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_onset: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_offset: Option<usize>,
}

impl Beat {
    pub fn p_span(&self) -> Option<(usize, usize)> {
        self.p_onset.zip(self.p_offset)
    }

    pub fn qrs_span(&self) -> (usize, usize) {
        (self.qrs_onset, self.qrs_offset)
    }

    pub fn t_span(&self) -> Option<(usize, usize)> {
        self.t_onset.zip(self.t_offset)
    }

    /// Checks the within-beat ordering
    /// `p_onset < p_offset < qrs_onset <= r_peak <= qrs_offset < t_onset < t_offset`
    /// for whichever waves are present.
    pub fn is_ordered(&self) -> bool {
        let mut chain = Vec::with_capacity(6);
        if let Some((on, off)) = self.p_span() {
            chain.extend([on, off]);
        }
        chain.extend([self.qrs_onset, self.qrs_offset]);
        if let Some((on, off)) = self.t_span() {
            chain.extend([on, off]);
        }
        chain.windows(2).all(|w| w[0] < w[1])
            && self.qrs_onset <= self.r_peak
            && self.r_peak <= self.qrs_offset
            && self.p_onset.is_some() == self.p_offset.is_some()
            && self.t_onset.is_some() == self.t_offset.is_some()
    }

    pub fn max_index(&self) -> usize {
        [self.p_offset, self.t_offset, Some(self.qrs_offset)]
            .into_iter()
            .flatten()
            .max()
            .unwrap_or(self.qrs_offset)
    }
}

/// Fiducial points of one single-lead signal, beats sorted by QRS onset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiducialSet {
    pub fs: f64,
    pub beats: Vec<Beat>,
}

/// Generator ground truth uses the same layout as delineator output.
pub type FiducialTruth = FiducialSet;

impl FiducialSet {
    pub fn empty(fs: f64) -> Self {
        Self {
            fs,
            beats: Vec::new(),
        }
    }

    /// Verifies ordering within and across beats and that every index is
    /// below `frames`.
    pub fn validate(&self, frames: usize) -> Result<()> {
        for beat in &self.beats {
            if !beat.is_ordered() {
                return Err(Error::Data(format!("beat fiducials out of order: {beat:?}")));
            }
            if beat.max_index() >= frames {
                return Err(Error::Bounds {
                    index: beat.max_index(),
                    len: frames,
                });
            }
        }
        for pair in self.beats.windows(2) {
            if pair[0].qrs_offset >= pair[1].qrs_onset {
                return Err(Error::Data("QRS spans of consecutive beats overlap".into()));
            }
        }
        Ok(())
    }
}

/// Contents of a `truth.json` file.
pub type TruthFile = BTreeMap<String, FiducialSet>;

pub fn write_truth(path: &Path, truth: &TruthFile) -> Result<()> {
    let text = serde_json::to_string_pretty(truth)?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_truth(path: &Path) -> Result<TruthFile> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}
