//! Single-lead P-QRS-T delineation.
//!
//! R peaks come from a Pan-Tompkins style detector (derivative, squaring,
//! 150 ms moving-window integration, adaptive thresholds with a refractory
//! period, T-wave discrimination and search-back). QRS boundaries are where
//! the derivative magnitude goes quiet relative to the complex's steepest
//! slope; P and T waves are the largest smooth bump in a window before and
//! after the complex. Every threshold is relative to the signal itself, so
//! delineation is invariant to positive amplitude scaling.
//!
//! The delineator is best effort; absent P or T waves are reported as `None`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fiducial::{Beat, FiducialSet, FiducialTruth};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DelineatorConfig {
    pub integration_ms: f64,
    pub refractory_ms: f64,
    /// Peaks this close after a QRS with less than half its slope are T waves.
    pub t_discrimination_ms: f64,
    /// R is the largest |x| within this distance of the integrator peak.
    pub r_search_ms: f64,
    /// Integrator peaks below this fraction of the global maximum are ignored.
    pub min_peak_fraction: f64,
    pub qrs_search_ms: f64,
    pub qrs_slope_fraction: f64,
    /// The derivative must stay below threshold this long to end a QRS.
    pub qrs_quiet_ms: f64,
    /// P window is `[qrs_onset - p_window_ms.0, qrs_onset - p_window_ms.1]`.
    pub p_window_ms: (f64, f64),
    /// T window starts `t_window_ms.0` after QRS offset, spans at most
    /// `t_window_ms.1`, and stops `t_next_guard_ms` before the next QRS.
    pub t_window_ms: (f64, f64),
    pub t_next_guard_ms: f64,
    pub wave_smoothing_ms: f64,
    /// Wave onset/offset where the bump falls to this fraction of its peak.
    pub wave_edge_fraction: f64,
    /// Bumps must exceed this multiple of the window's noise MAD.
    pub noise_mad_factor: f64,
    /// Bumps must also exceed this fraction of the R amplitude.
    pub min_wave_fraction: f64,
}

impl Default for DelineatorConfig {
    fn default() -> Self {
        Self {
            integration_ms: 150.0,
            refractory_ms: 200.0,
            t_discrimination_ms: 360.0,
            r_search_ms: 75.0,
            min_peak_fraction: 0.1,
            qrs_search_ms: 100.0,
            qrs_slope_fraction: 0.1,
            qrs_quiet_ms: 12.0,
            p_window_ms: (280.0, 40.0),
            t_window_ms: (60.0, 450.0),
            t_next_guard_ms: 40.0,
            wave_smoothing_ms: 20.0,
            wave_edge_fraction: 0.05,
            noise_mad_factor: 2.0,
            min_wave_fraction: 0.03,
        }
    }
}

fn samples(ms: f64, fs: f64) -> usize {
    (ms * fs / 1000.0).round() as usize
}

fn central_derivative(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mut d = vec![0.0; n];
    for k in 1..n.saturating_sub(1) {
        d[k] = (x[k + 1] - x[k - 1]) / 2.0;
    }
    d
}

/// Centred moving average with window `w` (shrinks at the edges).
fn moving_average(x: &[f64], w: usize) -> Vec<f64> {
    let n = x.len();
    let half = w / 2;
    let mut prefix = Vec::with_capacity(n + 1);
    prefix.push(0.0);
    for v in x {
        prefix.push(prefix.last().unwrap() + v);
    }
    (0..n)
        .map(|k| {
            let lo = k.saturating_sub(half);
            let hi = (k + half + 1).min(n);
            (prefix[hi] - prefix[lo]) / (hi - lo) as f64
        })
        .collect()
}

fn median(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.sort_by(f64::total_cmp);
    let m = values.len() / 2;
    if values.len() % 2 == 1 {
        values[m]
    } else {
        0.5 * (values[m - 1] + values[m])
    }
}

fn argmax_abs(x: &[f64], lo: usize, hi: usize) -> usize {
    (lo..=hi)
        .max_by(|&a, &b| x[a].abs().total_cmp(&x[b].abs()).then(b.cmp(&a)))
        .unwrap_or(lo)
}

struct Candidate {
    index: usize,
    height: f64,
    slope: f64,
}

/// Detects R peaks; indices are strictly increasing.
pub fn detect_r_peaks(x: &[f64], fs: f64) -> Result<Vec<usize>> {
    detect_r_peaks_with(x, fs, &DelineatorConfig::default())
}

pub fn detect_r_peaks_with(x: &[f64], fs: f64, cfg: &DelineatorConfig) -> Result<Vec<usize>> {
    if !(fs > 0.0) {
        return Err(Error::Param(format!("sampling rate must be positive, got {fs}")));
    }
    if (x.len() as f64) < fs {
        return Err(Error::Length(format!(
            "signal of {} samples is shorter than 1 s at {fs} Hz",
            x.len()
        )));
    }
    let n = x.len();
    let d = central_derivative(x);
    let squared: Vec<f64> = d.iter().map(|v| v * v).collect();
    let mwi = moving_average(&squared, samples(cfg.integration_ms, fs).max(1));
    let global_max = mwi.iter().cloned().fold(0.0, f64::max);
    if !(global_max > 0.0) {
        return Ok(Vec::new());
    }

    let refractory = samples(cfg.refractory_ms, fs).max(1);
    let slope_half = samples(cfg.r_search_ms, fs).max(1);
    let slope_at = |k: usize| {
        let lo = k.saturating_sub(slope_half);
        let hi = (k + slope_half).min(n - 1);
        d[lo..=hi].iter().fold(0.0f64, |m, v| m.max(v.abs()))
    };

    // local maxima of the integrator, merged within the refractory period
    let floor = cfg.min_peak_fraction * global_max;
    let mut candidates: Vec<Candidate> = Vec::new();
    for k in 1..n - 1 {
        if mwi[k] > mwi[k - 1] && mwi[k] >= mwi[k + 1] && mwi[k] > 0.0 {
            let c = Candidate {
                index: k,
                height: mwi[k],
                slope: slope_at(k),
            };
            match candidates.last_mut() {
                Some(last) if k - last.index < refractory => {
                    if c.height > last.height {
                        *last = c;
                    }
                }
                _ => candidates.push(c),
            }
        }
    }

    let mut strong: Vec<f64> = candidates.iter().map(|c| c.height).filter(|&h| h >= 0.3 * global_max).collect();
    let mut weak: Vec<f64> = candidates.iter().map(|c| c.height).filter(|&h| h < 0.3 * global_max).collect();
    let mut spki = median(&mut strong);
    let mut npki = median(&mut weak);

    let t_window = samples(cfg.t_discrimination_ms, fs);
    let mut accepted: Vec<usize> = Vec::new(); // indices into candidates
    let mut rejected: Vec<(usize, f64)> = Vec::new(); // (candidate, threshold at the time)
    for (ci, c) in candidates.iter().enumerate() {
        let threshold = (npki + 0.25 * (spki - npki)).max(floor);

        // search back over a long gap before judging the current candidate
        if let Some(&last) = accepted.last() {
            let rr = rr_average(&accepted, &candidates);
            let gap = c.index - candidates[last].index;
            if let Some(rr) = rr {
                if gap as f64 > 1.66 * rr {
                    let lo = candidates[last].index + refractory;
                    let hi = c.index.saturating_sub(refractory);
                    let best = rejected
                        .iter()
                        .filter(|(r, thr)| {
                            let idx = candidates[*r].index;
                            idx >= lo && idx <= hi && candidates[*r].height > (0.5 * thr).max(0.5 * floor)
                        })
                        .max_by(|a, b| candidates[a.0].height.total_cmp(&candidates[b.0].height));
                    if let Some(&(r, _)) = best {
                        accepted.push(r);
                        spki = 0.25 * candidates[r].height + 0.75 * spki;
                    }
                }
            }
        }

        if c.height > threshold {
            let is_t_wave = accepted.last().is_some_and(|&last| {
                let prev = &candidates[last];
                c.index - prev.index < t_window && c.slope < 0.5 * prev.slope
            });
            if !is_t_wave {
                accepted.push(ci);
                spki = 0.125 * c.height + 0.875 * spki;
                continue;
            }
        }
        npki = 0.125 * c.height + 0.875 * npki;
        rejected.push((ci, threshold));
    }

    let r_half = samples(cfg.r_search_ms, fs).max(1);
    let mut peaks: Vec<usize> = Vec::with_capacity(accepted.len());
    for &ci in &accepted {
        let k = candidates[ci].index;
        let r = argmax_abs(x, k.saturating_sub(r_half), (k + r_half).min(n - 1));
        match peaks.last() {
            Some(&prev) if r <= prev || r - prev < refractory => {
                if x[r].abs() > x[prev].abs() && r > prev {
                    *peaks.last_mut().unwrap() = r;
                }
            }
            _ => peaks.push(r),
        }
    }
    Ok(peaks)
}

fn rr_average(accepted: &[usize], candidates: &[Candidate]) -> Option<f64> {
    if accepted.len() < 2 {
        return None;
    }
    let recent = &accepted[accepted.len().saturating_sub(9)..];
    let sum: usize = recent
        .windows(2)
        .map(|w| candidates[w[1]].index.abs_diff(candidates[w[0]].index))
        .sum();
    Some(sum as f64 / (recent.len() - 1) as f64)
}

/// Delineates P, QRS and T waves with the default configuration.
pub fn delineate(x: &[f64], fs: f64) -> Result<FiducialSet> {
    delineate_with(x, fs, &DelineatorConfig::default())
}

pub fn delineate_with(x: &[f64], fs: f64, cfg: &DelineatorConfig) -> Result<FiducialSet> {
    let peaks = detect_r_peaks_with(x, fs, cfg)?;
    let n = x.len();
    let d = central_derivative(x);
    let smooth = moving_average(x, samples(cfg.wave_smoothing_ms, fs).max(1));
    let residual: Vec<f64> = x.iter().zip(&smooth).map(|(a, b)| a - b).collect();

    let search = samples(cfg.qrs_search_ms, fs).max(1);
    let quiet = samples(cfg.qrs_quiet_ms, fs).max(1);

    // QRS boundaries first; they bound the wave windows of neighbours
    let mut complexes: Vec<(usize, usize, usize)> = Vec::with_capacity(peaks.len());
    for (i, &r) in peaks.iter().enumerate() {
        let left_limit = if i > 0 { (peaks[i - 1] + r) / 2 + 1 } else { 0 };
        let right_limit = if i + 1 < peaks.len() { (r + peaks[i + 1]) / 2 } else { n - 1 };
        let lo = r.saturating_sub(search).max(left_limit);
        let hi = (r + search).min(right_limit);
        let peak_slope = d[lo..=hi].iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let threshold = cfg.qrs_slope_fraction * peak_slope;

        let quiet_edge = |range: &mut dyn Iterator<Item = usize>, fallback: usize| {
            let mut run = 0;
            let mut run_start = fallback;
            for k in range {
                if d[k].abs() < threshold {
                    if run == 0 {
                        run_start = k;
                    }
                    run += 1;
                    if run >= quiet {
                        return run_start;
                    }
                } else {
                    run = 0;
                }
            }
            if run > 0 {
                run_start
            } else {
                fallback
            }
        };
        let onset = quiet_edge(&mut (lo..=r).rev(), lo);
        let offset = quiet_edge(&mut (r..=hi), hi);
        complexes.push((onset.min(r), r, offset.max(r)));
    }

    let ms = |v: f64| samples(v, fs);
    let mut beats = Vec::with_capacity(complexes.len());
    for (i, &(q_on, r, q_off)) in complexes.iter().enumerate() {
        let r_amp = x[r].abs();

        let prev_end = if i > 0 { complexes[i - 1].2 + 1 } else { 0 };
        let p_lo = q_on.saturating_sub(ms(cfg.p_window_ms.0)).max(prev_end);
        let p_hi = q_on.checked_sub(ms(cfg.p_window_ms.1).max(1));
        let p = p_hi.and_then(|hi| find_wave(&smooth, &residual, p_lo, hi, r_amp, cfg));

        let t_lo = q_off + ms(cfg.t_window_ms.0).max(1);
        let mut t_hi = (q_off + ms(cfg.t_window_ms.1)).min(n - 1);
        if let Some(next) = complexes.get(i + 1) {
            t_hi = t_hi.min(next.0.saturating_sub(ms(cfg.t_next_guard_ms).max(1)));
        }
        let t = find_wave(&smooth, &residual, t_lo, t_hi, r_amp, cfg);

        beats.push(Beat {
            r_peak: r,
            qrs_onset: q_on,
            qrs_offset: q_off,
            p_onset: p.map(|w| w.0),
            p_offset: p.map(|w| w.1),
            t_onset: t.map(|w| w.0),
            t_offset: t.map(|w| w.1),
        });
    }
    Ok(FiducialSet { fs, beats })
}

/// Largest interior bump of `smooth` within `[lo, hi]`, measured from the
/// window median. Returns `(onset, offset)` or `None` when nothing clears the
/// noise and amplitude floors.
fn find_wave(
    smooth: &[f64],
    residual: &[f64],
    lo: usize,
    hi: usize,
    r_amp: f64,
    cfg: &DelineatorConfig,
) -> Option<(usize, usize)> {
    if hi < lo + 4 || hi >= smooth.len() {
        return None;
    }
    let baseline = median(&mut smooth[lo..=hi].to_vec());
    let e = |k: usize| smooth[k] - baseline;

    let peak = (lo + 1..hi)
        .filter(|&k| e(k).abs() >= e(k - 1).abs() && e(k).abs() >= e(k + 1).abs())
        .max_by(|&a, &b| e(a).abs().total_cmp(&e(b).abs()).then(b.cmp(&a)))?;
    let amp = e(peak).abs();

    let mut res = residual[lo..=hi].to_vec();
    let res_median = median(&mut res);
    let mut dev: Vec<f64> = residual[lo..=hi].iter().map(|v| (v - res_median).abs()).collect();
    let noise = 1.4826 * median(&mut dev);
    if !(amp > cfg.noise_mad_factor * noise && amp > cfg.min_wave_fraction * r_amp) {
        return None;
    }

    let sign = e(peak).signum();
    let inside = |k: usize| sign * e(k) >= cfg.wave_edge_fraction * amp;
    let mut onset = peak;
    while onset > lo && inside(onset - 1) {
        onset -= 1;
    }
    let mut offset = peak;
    while offset < hi && inside(offset + 1) {
        offset += 1;
    }
    (onset < offset).then_some((onset, offset))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Boundary {
    POnset,
    POffset,
    QrsOnset,
    QrsOffset,
    TOnset,
    TOffset,
}

impl Boundary {
    pub const ALL: [Boundary; 6] = [
        Boundary::POnset,
        Boundary::POffset,
        Boundary::QrsOnset,
        Boundary::QrsOffset,
        Boundary::TOnset,
        Boundary::TOffset,
    ];

    fn of(self, beat: &Beat) -> Option<usize> {
        match self {
            Boundary::POnset => beat.p_onset,
            Boundary::POffset => beat.p_offset,
            Boundary::QrsOnset => Some(beat.qrs_onset),
            Boundary::QrsOffset => Some(beat.qrs_offset),
            Boundary::TOnset => beat.t_onset,
            Boundary::TOffset => beat.t_offset,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundaryStats {
    pub truth: usize,
    pub predicted: usize,
    pub matched: usize,
}

impl BoundaryStats {
    fn add(&mut self, other: BoundaryStats) {
        self.truth += other.truth;
        self.predicted += other.predicted;
        self.matched += other.matched;
    }

    /// Matched / truth; 1.0 when there was nothing to find.
    pub fn sensitivity(&self) -> f64 {
        if self.truth == 0 {
            1.0
        } else {
            self.matched as f64 / self.truth as f64
        }
    }

    /// Matched / predicted; 1.0 when nothing was predicted.
    pub fn precision(&self) -> f64 {
        if self.predicted == 0 {
            1.0
        } else {
            self.matched as f64 / self.predicted as f64
        }
    }
}

/// Per-boundary match counts between a delineation and ground truth.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MatchReport {
    pub by_boundary: BTreeMap<Boundary, BoundaryStats>,
}

impl MatchReport {
    pub fn stats(&self, b: Boundary) -> BoundaryStats {
        self.by_boundary.get(&b).copied().unwrap_or_default()
    }

    pub fn total(&self) -> BoundaryStats {
        let mut t = BoundaryStats::default();
        for s in self.by_boundary.values() {
            t.add(*s);
        }
        t
    }

    /// Accumulates another report (e.g. across records).
    pub fn merge(&mut self, other: &MatchReport) {
        for (b, s) in &other.by_boundary {
            self.by_boundary.entry(*b).or_default().add(*s);
        }
    }
}

/// Greedy nearest matching of each boundary type within `tol_ms`.
pub fn fiducial_stats(pred: &FiducialSet, truth: &FiducialTruth, tol_ms: f64) -> Result<MatchReport> {
    if (pred.fs - truth.fs).abs() > 1e-9 {
        return Err(Error::Config(format!(
            "sampling rates differ: prediction {} Hz, truth {} Hz",
            pred.fs, truth.fs
        )));
    }
    let tol = tol_ms * truth.fs / 1000.0 + 1e-9;
    let mut report = MatchReport::default();
    for b in Boundary::ALL {
        let t: Vec<usize> = truth.beats.iter().filter_map(|beat| b.of(beat)).collect();
        let p: Vec<usize> = pred.beats.iter().filter_map(|beat| b.of(beat)).collect();
        let mut pairs: Vec<(usize, usize, usize)> = Vec::new();
        for (ti, &tv) in t.iter().enumerate() {
            for (pi, &pv) in p.iter().enumerate() {
                let dist = tv.abs_diff(pv);
                if dist as f64 <= tol {
                    pairs.push((dist, ti, pi));
                }
            }
        }
        pairs.sort_unstable();
        let mut t_used = vec![false; t.len()];
        let mut p_used = vec![false; p.len()];
        let mut matched = 0;
        for (_, ti, pi) in pairs {
            if !t_used[ti] && !p_used[pi] {
                t_used[ti] = true;
                p_used[pi] = true;
                matched += 1;
            }
        }
        report.by_boundary.insert(
            b,
            BoundaryStats {
                truth: t.len(),
                predicted: p.len(),
                matched,
            },
        );
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ecg_io::{render_component, synth_record, BeatGeometry, Component, SynthParams};

    fn clean() -> SynthParams {
        SynthParams {
            noise_sigma: 0.0,
            rr_jitter: 0.0,
            ..SynthParams::default()
        }
    }

    #[test]
    fn short_signal_is_rejected() {
        assert!(matches!(detect_r_peaks(&[0.0; 100], 150.0), Err(Error::Length(_))));
    }

    #[test]
    fn zero_signal_has_no_peaks() {
        assert!(detect_r_peaks(&[0.0; 1500], 150.0).unwrap().is_empty());
        assert!(delineate(&[0.0; 1500], 150.0).unwrap().beats.is_empty());
    }

    #[test]
    fn clean_record_peaks_match_truth() {
        let (rec, truth, _) = synth_record(&clean()).unwrap();
        let peaks = detect_r_peaks(rec.lead(0), rec.fs()).unwrap();
        assert!((11..=13).contains(&peaks.len()), "{peaks:?}");
        assert_eq!(peaks.len(), truth.beats.len());
        for (p, b) in peaks.iter().zip(&truth.beats) {
            assert!(p.abs_diff(b.r_peak) <= 2, "{p} vs {}", b.r_peak);
        }
    }

    #[test]
    fn single_beat_at_500() {
        let params = clean();
        let fs = params.fs;
        let beat = BeatGeometry::sinus(500.0 / fs, &params);
        let beats = [beat];
        let mut x = vec![0.0; 1000];
        for c in [Component::P, Component::Qrs, Component::T] {
            for (v, w) in x.iter_mut().zip(render_component(&beats, c, fs, 1000)) {
                *v += w;
            }
        }
        let peaks = detect_r_peaks(&x, fs).unwrap();
        assert_eq!(peaks.len(), 1, "{peaks:?}");
        assert!((498..=502).contains(&peaks[0]));
    }

    #[test]
    fn missing_p_waves_are_absent() {
        let mut p = clean();
        p.p.amplitude_mv = 0.0;
        let (rec, _, _) = synth_record(&p).unwrap();
        let fid = delineate(rec.lead(0), rec.fs()).unwrap();
        assert!(!fid.beats.is_empty());
        assert!(fid.beats.iter().all(|b| b.p_onset.is_none() && b.p_offset.is_none()));
    }

    #[test]
    fn premature_beat_gets_a_qrs() {
        for seed in 0..10 {
            let p = SynthParams {
                apc: true,
                seed,
                noise_sigma: 0.0,
                ..SynthParams::default()
            };
            let (rec, truth, _) = synth_record(&p).unwrap();
            let fid = delineate(rec.lead(0), rec.fs()).unwrap();
            assert_eq!(fid.beats.len(), truth.beats.len(), "seed {seed}");
            fid.validate(rec.frames()).unwrap();
        }
    }

    #[test]
    fn clean_record_boundaries_within_30ms() {
        let (rec, truth, _) = synth_record(&clean()).unwrap();
        let fid = delineate(rec.lead(0), rec.fs()).unwrap();
        let report = fiducial_stats(&fid, &truth, 30.0).unwrap();
        assert!(report.total().sensitivity() >= 0.9, "{report:?}");
    }

    #[test]
    fn stats_identity_and_empty() {
        let (_, truth, _) = synth_record(&clean()).unwrap();
        let report = fiducial_stats(&truth, &truth, 10.0).unwrap();
        for b in Boundary::ALL {
            assert_eq!(report.stats(b).sensitivity(), 1.0);
            assert_eq!(report.stats(b).precision(), 1.0);
        }
        let empty = FiducialSet::empty(truth.fs);
        let report = fiducial_stats(&empty, &truth, 10.0).unwrap();
        assert_eq!(report.total().sensitivity(), 0.0);
        assert!(fiducial_stats(&FiducialSet::empty(500.0), &truth, 10.0).is_err());
    }

    #[test]
    fn tolerance_boundary() {
        let (_, truth, _) = synth_record(&clean()).unwrap();
        // 20 ms at 150 Hz is 3 samples
        let mut shifted = truth.clone();
        shifted.beats[0].qrs_onset -= 4;
        let report = fiducial_stats(&shifted, &truth, 20.0).unwrap();
        let s = report.stats(Boundary::QrsOnset);
        assert_eq!(s.matched, s.truth - 1);
        let mut shifted = truth.clone();
        shifted.beats[0].qrs_onset -= 3;
        let s = fiducial_stats(&shifted, &truth, 20.0).unwrap().stats(Boundary::QrsOnset);
        assert_eq!(s.matched, s.truth);
    }
}
