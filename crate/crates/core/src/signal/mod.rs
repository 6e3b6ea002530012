//! Deterministic record preprocessing: resampling, band-pass filtering, lead
//! selection and optional per-lead normalization, applied in that order.

mod filter;
mod resample;

use serde::{Deserialize, Serialize};

use crate::ecg_io::EcgRecord;
use crate::error::{Error, Result};

pub use filter::{Biquad, SosFilter};
pub use resample::{resample_signal, resampled_len, CUTOFF_FRACTION, KAISER_BETA, TAPS_PER_PHASE};

/// Standard-deviation floor for z-scoring, in mV.
pub const ZSCORE_STD_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalize {
    #[default]
    None,
    Zscore,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PreprocessConfig {
    pub target_fs: f64,
    /// `(low, high)` band edges in Hz; `None` skips filtering.
    pub band: Option<(f64, f64)>,
    pub filter_order: usize,
    /// Leads to keep, in output order. Empty keeps every lead.
    pub leads_keep: Vec<String>,
    pub normalize: Normalize,
}

impl Default for PreprocessConfig {
    /// 150 Hz, 0.5-50 Hz order-6 band-pass, lead II only, no normalization.
    fn default() -> Self {
        Self {
            target_fs: 150.0,
            band: Some((0.5, 50.0)),
            filter_order: 6,
            leads_keep: vec!["II".into()],
            normalize: Normalize::None,
        }
    }
}

impl PreprocessConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.target_fs > 0.0) {
            return Err(Error::Config(format!("target_fs must be positive, got {}", self.target_fs)));
        }
        if let Some((low, high)) = self.band {
            if high >= self.target_fs / 2.0 {
                return Err(Error::Nyquist {
                    high,
                    nyquist: self.target_fs / 2.0,
                });
            }
            if !(low > 0.0 && low < high) {
                return Err(Error::Config(format!("band ({low}, {high}) must satisfy 0 < low < high")));
            }
            if ![2, 4, 6, 8].contains(&self.filter_order) {
                return Err(Error::Config(format!(
                    "filter_order must be one of 2, 4, 6, 8 (got {})",
                    self.filter_order
                )));
            }
        }
        Ok(())
    }
}

pub fn resample(rec: &EcgRecord, target_fs: f64) -> Result<EcgRecord> {
    let samples = resample::resample_many(rec.samples(), rec.fs(), target_fs)?;
    rec.with_samples(target_fs, samples)
}

/// Zero-phase Butterworth band-pass of every lead.
pub fn bandpass(rec: &EcgRecord, low: f64, high: f64, order: usize) -> Result<EcgRecord> {
    let filter = SosFilter::butterworth_bandpass(order, low, high, rec.fs())?;
    let samples = rec.samples().iter().map(|x| filter.filtfilt(x)).collect();
    rec.with_samples(rec.fs(), samples)
}

pub fn select_leads(rec: &EcgRecord, names: &[String]) -> Result<EcgRecord> {
    let samples = names
        .iter()
        .map(|name| {
            rec.lead_index(name)
                .map(|i| rec.lead(i).to_vec())
                .ok_or_else(|| Error::UnknownLead(name.clone()))
        })
        .collect::<Result<Vec<_>>>()?;
    EcgRecord::new(rec.id(), rec.fs(), names.to_vec(), samples)
}

pub fn zscore(x: &[f64]) -> Vec<f64> {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt().max(ZSCORE_STD_FLOOR);
    x.iter().map(|v| (v - mean) / std).collect()
}

pub fn normalize(rec: &EcgRecord, mode: Normalize) -> Result<EcgRecord> {
    match mode {
        Normalize::None => Ok(rec.clone()),
        Normalize::Zscore => {
            let samples = rec.samples().iter().map(|x| zscore(x)).collect();
            rec.with_samples(rec.fs(), samples)
        }
    }
}

pub fn preprocess(rec: &EcgRecord, cfg: &PreprocessConfig) -> Result<EcgRecord> {
    cfg.validate()?;
    let mut out = resample(rec, cfg.target_fs)?;
    if let Some((low, high)) = cfg.band {
        out = bandpass(&out, low, high, cfg.filter_order)?;
    }
    if !cfg.leads_keep.is_empty() {
        out = select_leads(&out, &cfg.leads_keep)?;
    }
    normalize(&out, cfg.normalize)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn eight_lead(frames: usize) -> EcgRecord {
        let names = ["I", "II", "V1", "V2", "V3", "V4", "V5", "V6"];
        let samples = (0..8)
            .map(|i| {
                (0..frames)
                    .map(|k| ((k as f64 * 0.01 * (i + 1) as f64).sin()) * 0.5)
                    .collect()
            })
            .collect();
        EcgRecord::new("r", 500.0, names.iter().map(|s| s.to_string()).collect(), samples).unwrap()
    }

    #[test]
    fn default_pipeline_shape() {
        let out = preprocess(&eight_lead(5000), &PreprocessConfig::default()).unwrap();
        assert_eq!((out.channels(), out.frames()), (1, 1500));
        assert_eq!(out.fs(), 150.0);
        assert_eq!(out.leads(), &["II".to_string()]);
    }

    #[test]
    fn noop_config_is_identity() {
        let rec = eight_lead(300);
        let cfg = PreprocessConfig {
            target_fs: 500.0,
            band: None,
            filter_order: 6,
            leads_keep: vec![],
            normalize: Normalize::None,
        };
        let out = preprocess(&rec, &cfg).unwrap();
        for (a, b) in rec.samples().iter().flatten().zip(out.samples().iter().flatten()) {
            assert!((a - b).abs() <= 1e-9);
        }
    }

    #[test]
    fn zscore_of_constant_is_zero() {
        let rec = EcgRecord::single("c", 150.0, "II", vec![3.0; 100]).unwrap();
        let out = normalize(&rec, Normalize::Zscore).unwrap();
        assert!(out.lead(0).iter().all(|&v| v == 0.0));
        let z = zscore(&[1.0, 2.0, 3.0, 4.0]);
        let mean: f64 = z.iter().sum::<f64>() / 4.0;
        let var: f64 = z.iter().map(|v| v * v).sum::<f64>() / 4.0;
        assert!(mean.abs() < 1e-12 && (var - 1.0).abs() < 1e-12);
    }

    #[test]
    fn lead_selection() {
        let rec = eight_lead(50);
        let out = select_leads(&rec, &["II".into()]).unwrap();
        assert_eq!((out.channels(), out.frames()), (1, 50));
        assert_eq!(out.lead(0), rec.lead(1));
        let all: Vec<String> = rec.leads().to_vec();
        assert_eq!(select_leads(&rec, &all).unwrap(), rec);
        let swapped = select_leads(&rec, &["V1".into(), "I".into()]).unwrap();
        assert_eq!(swapped.lead(0), rec.lead(2));
        assert!(matches!(
            select_leads(&rec, &["XX".into()]),
            Err(Error::UnknownLead(n)) if n == "XX"
        ));
    }

    #[test]
    fn config_validation() {
        let mut cfg = PreprocessConfig::default();
        cfg.filter_order = 5;
        assert!(cfg.validate().is_err());
        let mut cfg = PreprocessConfig::default();
        cfg.band = Some((0.5, 80.0));
        assert!(matches!(cfg.validate(), Err(Error::Nyquist { .. })));
        let cfg: PreprocessConfig =
            serde_json::from_str(&serde_json::to_string(&PreprocessConfig::default()).unwrap()).unwrap();
        assert_eq!(cfg, PreprocessConfig::default());
    }
}
