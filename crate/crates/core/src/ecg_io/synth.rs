//! Synthetic single-beat-train ECG made of Gaussian bumps, with exact
//! fiducial ground truth.
//!
//! Every wave is a sum of Gaussians. A wave's "width" is the span over which
//! it exceeds 10% of its peak, which is also how the recorded truth spans are
//! defined: onset is the first sample inside that span, offset the last.

use std::path::{Path, PathBuf};

use rand::{seq::SliceRandom, Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{save_record, write_labels, DatasetManifest, EcgRecord, Label, LabelEntry, RecordFormat};
use crate::error::{Error, Result};
use crate::fiducial::{write_truth, Beat, FiducialTruth, TruthFile};

/// A Gaussian drops to 10% of its peak at `sigma * sqrt(2 ln 10)`.
const TEN_PERCENT_HALF_WIDTH: f64 = 2.145_966_026_289_347;

/// Amplitude (mV) and 10%-of-peak width (ms) of one wave.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WaveShape {
    pub amplitude_mv: f64,
    pub width_ms: f64,
}

/// How the single premature beat of an APC record differs from a sinus beat.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ApcConfig {
    /// Premature RR interval as a fraction of `rr_mean`, in (0, 1).
    pub prematurity: f64,
    /// Multiplier on the ectopic P amplitude (negative inverts it).
    pub p_amplitude_scale: f64,
    pub p_width_scale: f64,
}

impl Default for ApcConfig {
    fn default() -> Self {
        Self {
            prematurity: 0.6,
            p_amplitude_scale: -1.0,
            p_width_scale: 0.75,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeadSpec {
    pub name: String,
    pub gain: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthParams {
    pub fs: f64,
    /// Seconds.
    pub duration: f64,
    /// Seconds.
    pub rr_mean: f64,
    /// Standard deviation of sinus RR intervals in seconds; deviations are
    /// clipped to ±4% of `rr_mean`.
    pub rr_jitter: f64,
    pub p: WaveShape,
    pub qrs: WaveShape,
    pub t: WaveShape,
    /// P-wave centre to R peak, ms.
    pub pr_interval_ms: f64,
    /// R peak to T-wave centre, ms.
    pub rt_interval_ms: f64,
    pub apc: bool,
    pub apc_config: ApcConfig,
    pub noise_sigma: f64,
    pub seed: u64,
    pub leads: Vec<LeadSpec>,
}

impl Default for SynthParams {
    fn default() -> Self {
        Self {
            fs: 150.0,
            duration: 10.0,
            rr_mean: 0.8,
            rr_jitter: 0.02,
            p: WaveShape {
                amplitude_mv: 0.15,
                width_ms: 40.0,
            },
            qrs: WaveShape {
                amplitude_mv: 1.0,
                width_ms: 80.0,
            },
            t: WaveShape {
                amplitude_mv: 0.3,
                width_ms: 120.0,
            },
            pr_interval_ms: 160.0,
            rt_interval_ms: 280.0,
            apc: false,
            apc_config: ApcConfig::default(),
            noise_sigma: 0.01,
            seed: 0,
            leads: vec![LeadSpec {
                name: "II".into(),
                gain: 1.0,
            }],
        }
    }
}

impl SynthParams {
    pub fn frames(&self) -> usize {
        (self.duration * self.fs).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Param(msg));
        if !(self.fs > 0.0 && self.duration > 0.0) {
            return bad("fs and duration must be positive".into());
        }
        let n = self.duration * self.fs;
        if (n - n.round()).abs() > 1e-9 {
            return bad(format!("duration * fs = {n} is not an integer"));
        }
        for (name, w) in [("P", self.p), ("QRS", self.qrs), ("T", self.t)] {
            if !(w.width_ms > 0.0 && w.amplitude_mv.is_finite()) {
                return bad(format!("{name} wave needs a positive width"));
            }
        }
        let widths = (self.p.width_ms + self.qrs.width_ms + self.t.width_ms) / 1000.0;
        if self.rr_mean <= widths {
            return bad(format!("rr_mean {} s must exceed summed wave widths {widths} s", self.rr_mean));
        }
        let prem = self.apc_config.prematurity;
        if !(prem > 0.0 && prem < 1.0) {
            return bad(format!("prematurity ratio {prem} outside (0, 1)"));
        }
        if !(self.apc_config.p_width_scale > 0.0) {
            return bad("ectopic P width scale must be positive".into());
        }
        if !(self.rr_jitter >= 0.0 && self.noise_sigma >= 0.0) {
            return bad("rr_jitter and noise_sigma must be non-negative".into());
        }
        if self.leads.is_empty() {
            return bad("at least one lead is required".into());
        }
        Ok(())
    }
}

/// One Gaussian: centre and sigma in seconds, amplitude in mV.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bump {
    pub center: f64,
    pub sigma: f64,
    pub amplitude: f64,
}

impl Bump {
    fn from_width(center: f64, width_s: f64, amplitude: f64) -> Self {
        Self {
            center,
            sigma: width_s / 2.0 / TEN_PERCENT_HALF_WIDTH,
            amplitude,
        }
    }

    pub fn value(&self, t: f64) -> f64 {
        let z = (t - self.center) / self.sigma;
        self.amplitude * (-0.5 * z * z).exp()
    }

    /// Interval (seconds) on which the bump exceeds 10% of its peak.
    pub fn span(&self) -> (f64, f64) {
        let h = self.sigma * TEN_PERCENT_HALF_WIDTH;
        (self.center - h, self.center + h)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Component {
    P,
    Qrs,
    T,
}

/// Geometry of one generated beat.
#[derive(Debug, Clone, PartialEq)]
pub struct BeatGeometry {
    pub r_time: f64,
    pub p: Bump,
    /// Q, R and S bumps.
    pub qrs: [Bump; 3],
    pub t: Bump,
    pub premature: bool,
}

impl BeatGeometry {
    pub fn sinus(r_time: f64, params: &SynthParams) -> Self {
        Self::build(r_time, params, false)
    }

    fn build(r_time: f64, params: &SynthParams, premature: bool) -> Self {
        let (p_amp, p_width) = if premature {
            let a = params.apc_config;
            (
                params.p.amplitude_mv * a.p_amplitude_scale,
                params.p.width_ms * a.p_width_scale,
            )
        } else {
            (params.p.amplitude_mv, params.p.width_ms)
        };
        let w = params.qrs.width_ms / 1000.0;
        let a = params.qrs.amplitude_mv;
        Self {
            r_time,
            p: Bump::from_width(r_time - params.pr_interval_ms / 1000.0, p_width / 1000.0, p_amp),
            qrs: [
                Bump::from_width(r_time - 0.35 * w, 0.3 * w, -0.15 * a),
                Bump::from_width(r_time, 0.5 * w, a),
                Bump::from_width(r_time + 0.35 * w, 0.3 * w, -0.3 * a),
            ],
            t: Bump::from_width(
                r_time + params.rt_interval_ms / 1000.0,
                params.t.width_ms / 1000.0,
                params.t.amplitude_mv,
            ),
            premature,
        }
    }

    pub fn bumps(&self, component: Component) -> &[Bump] {
        match component {
            Component::P => std::slice::from_ref(&self.p),
            Component::Qrs => &self.qrs,
            Component::T => std::slice::from_ref(&self.t),
        }
    }

    pub fn start(&self) -> f64 {
        self.p.span().0.min(self.qrs[0].span().0)
    }

    pub fn end(&self) -> f64 {
        self.t.span().1
    }

    /// Converts the continuous spans to sample indices.
    pub fn truth(&self, fs: f64, with_p: bool) -> Beat {
        let to_span = |(a, b): (f64, f64)| ((a * fs).ceil() as usize, (b * fs).floor() as usize);
        let (p_on, p_off) = to_span(self.p.span());
        let (q_on, _) = to_span(self.qrs[0].span());
        let (_, s_off) = to_span(self.qrs[2].span());
        let (t_on, t_off) = to_span(self.t.span());
        Beat {
            r_peak: (self.r_time * fs).round() as usize,
            qrs_onset: q_on,
            qrs_offset: s_off,
            p_onset: with_p.then_some(p_on),
            p_offset: with_p.then_some(p_off),
            t_onset: Some(t_on),
            t_offset: Some(t_off),
        }
    }
}

/// Beat schedule for `params`, using the seeded RNG for RR jitter and for the
/// position of the premature beat.
pub fn synth_schedule(params: &SynthParams, rng: &mut ChaCha8Rng) -> Result<Vec<BeatGeometry>> {
    params.validate()?;
    let last_sample = (params.frames() - 1) as f64 / params.fs;
    let template = BeatGeometry::sinus(0.0, params);
    let lead_in = -template.start();
    let tail = template.end();
    let mut r = (params.rr_mean / 2.0).max(lead_in + 0.02);

    let jitter = if params.rr_jitter > 0.0 {
        Some(Normal::new(0.0, params.rr_jitter).map_err(|e| Error::Param(e.to_string()))?)
    } else {
        None
    };
    let clip = 0.04 * params.rr_mean;

    let mut r_times = Vec::new();
    while r + tail <= last_sample {
        r_times.push(r);
        let dev = jitter.map_or(0.0, |n| n.sample(rng).clamp(-clip, clip));
        r += params.rr_mean + dev;
    }
    if r_times.len() < 2 {
        return Err(Error::Param(format!(
            "duration {} s holds fewer than two beats",
            params.duration
        )));
    }

    let mut beats: Vec<BeatGeometry> =
        r_times.iter().map(|&t| BeatGeometry::sinus(t, params)).collect();
    if params.apc {
        let n = beats.len();
        let k = if n >= 3 { rng.gen_range(1..n - 1) } else { 1 };
        let r_time = beats[k - 1].r_time + params.apc_config.prematurity * params.rr_mean;
        beats[k] = BeatGeometry::build(r_time, params, true);
    }
    Ok(beats)
}

/// Noise-free samples of one component of every beat.
pub fn render_component(beats: &[BeatGeometry], component: Component, fs: f64, frames: usize) -> Vec<f64> {
    let mut out = vec![0.0; frames];
    for beat in beats {
        for bump in beat.bumps(component) {
            // 8 sigma covers the bump to far below f64 resolution of its peak
            let lo = ((bump.center - 8.0 * bump.sigma) * fs).floor().max(0.0) as usize;
            let hi = (((bump.center + 8.0 * bump.sigma) * fs).ceil() as usize).min(frames.saturating_sub(1));
            for (k, v) in out.iter_mut().enumerate().take(hi + 1).skip(lo) {
                *v += bump.value(k as f64 / fs);
            }
        }
    }
    out
}

/// Generates one record with its fiducial truth and label. Identical params
/// (including the seed) give bit-identical output.
pub fn synth_record(params: &SynthParams) -> Result<(EcgRecord, FiducialTruth, LabelEntry)> {
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let beats = synth_schedule(params, &mut rng)?;
    let frames = params.frames();
    let fs = params.fs;

    let mut clean = vec![0.0; frames];
    for component in [Component::P, Component::Qrs, Component::T] {
        for (c, v) in clean.iter_mut().zip(render_component(&beats, component, fs, frames)) {
            *c += v;
        }
    }

    let noise = if params.noise_sigma > 0.0 {
        Some(Normal::new(0.0, params.noise_sigma).map_err(|e| Error::Param(e.to_string()))?)
    } else {
        None
    };
    let samples: Vec<Vec<f64>> = params
        .leads
        .iter()
        .map(|lead| {
            clean
                .iter()
                .map(|&v| lead.gain * v + noise.map_or(0.0, |n| n.sample(&mut rng)))
                .collect()
        })
        .collect();

    let id = format!("synth-{}", params.seed);
    let names = params.leads.iter().map(|l| l.name.clone()).collect();
    let record = EcgRecord::new(id.clone(), fs, names, samples)?;

    let with_p = |b: &BeatGeometry| b.p.amplitude != 0.0;
    let truth = FiducialTruth {
        fs,
        beats: beats.iter().map(|b| b.truth(fs, with_p(b))).collect(),
    };
    let label = LabelEntry {
        record_id: id,
        label: if params.apc { Label::Apc } else { Label::NonApc },
    };
    Ok((record, truth, label))
}

pub struct SynthSample {
    pub record: EcgRecord,
    pub truth: FiducialTruth,
    pub label: LabelEntry,
}

/// In-memory corpus of `n` records, `round(n * apc_fraction)` of them APC.
/// Per-record seeds and the APC assignment are drawn from `seed`.
pub fn synth_corpus(n: usize, apc_fraction: f64, base: &SynthParams, seed: u64) -> Result<Vec<SynthSample>> {
    if n == 0 {
        return Err(Error::Param("dataset size must be at least 1".into()));
    }
    if !(0.0..=1.0).contains(&apc_fraction) {
        return Err(Error::Param(format!("apc_fraction {apc_fraction} outside [0, 1]")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let seeds: Vec<u64> = (0..n).map(|_| rng.gen()).collect();
    let n_apc = (n as f64 * apc_fraction).round() as usize;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let mut is_apc = vec![false; n];
    for &i in &order[..n_apc] {
        is_apc[i] = true;
    }

    let width = n.to_string().len().max(5);
    (0..n)
        .map(|i| {
            let params = SynthParams {
                apc: is_apc[i],
                seed: seeds[i],
                ..base.clone()
            };
            let (record, truth, mut label) = synth_record(&params)?;
            let id = format!("rec{i:0width$}");
            label.record_id = id.clone();
            Ok(SynthSample {
                record: record.with_id(id),
                truth,
                label,
            })
        })
        .collect()
}

/// Paths written by [`synth_dataset`].
#[derive(Debug, Clone)]
pub struct SynthDataset {
    pub manifest: PathBuf,
    pub records_dir: PathBuf,
    pub labels: PathBuf,
    pub truth: PathBuf,
}

/// Writes a corpus to `out_dir`: `records/<id>/record.csv` + `meta.json`,
/// `labels.csv`, `truth.json` and a `manifest.json` describing the split.
pub fn synth_dataset(
    n: usize,
    apc_fraction: f64,
    base: &SynthParams,
    seed: u64,
    out_dir: &Path,
) -> Result<SynthDataset> {
    let corpus = synth_corpus(n, apc_fraction, base, seed)?;
    let records_dir = out_dir.join("records");
    std::fs::create_dir_all(&records_dir).map_err(|e| Error::io(&records_dir, e))?;

    let mut truth = TruthFile::new();
    let mut labels = Vec::with_capacity(n);
    for sample in &corpus {
        let id = sample.record.id();
        save_record(&sample.record, &records_dir.join(id).join(super::RECORD_FILE))?;
        truth.insert(id.to_string(), sample.truth.clone());
        labels.push(sample.label.clone());
    }
    let labels_path = out_dir.join("labels.csv");
    write_labels(&labels_path, &labels)?;
    let truth_path = out_dir.join("truth.json");
    write_truth(&truth_path, &truth)?;

    let manifest = DatasetManifest {
        records_dir: PathBuf::from("records"),
        labels: PathBuf::from("labels.csv"),
        truth: Some(PathBuf::from("truth.json")),
        format: RecordFormat::Csv,
    };
    let manifest_path = out_dir.join("manifest.json");
    manifest.save(&manifest_path)?;
    Ok(SynthDataset {
        manifest: manifest_path,
        records_dir,
        labels: labels_path,
        truth: truth_path,
    })
}
