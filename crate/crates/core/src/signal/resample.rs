//! Rational-ratio polyphase resampler with a Kaiser-windowed sinc kernel.

use std::f64::consts::PI;

use crate::error::{Error, Result};

pub const TAPS_PER_PHASE: usize = 64;
pub const KAISER_BETA: f64 = 8.0;
/// Anti-alias cut-off as a fraction of the lower of the two rates.
pub const CUTOFF_FRACTION: f64 = 0.45;
const MAX_PHASES: u64 = 4096;

/// Zeroth-order modified Bessel function of the first kind (power series).
fn bessel_i0(x: f64) -> f64 {
    let q = x * x / 4.0;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..200 {
        term *= q / (k * k) as f64;
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Expresses `fs_out / fs_in` as `up / down` in lowest terms, with rates
/// resolved to 1 mHz.
fn rational_ratio(fs_in: f64, fs_out: f64) -> Result<(u64, u64)> {
    let to_int = |f: f64| (f * 1000.0).round() as u64;
    let (a, b) = (to_int(fs_in), to_int(fs_out));
    if a == 0 || b == 0 {
        return Err(Error::Param("sampling rates must be at least 1 mHz".into()));
    }
    let g = gcd(a, b);
    let (up, down) = (b / g, a / g);
    if up > MAX_PHASES {
        return Err(Error::Param(format!(
            "resampling ratio {fs_out}/{fs_in} needs {up} phases (max {MAX_PHASES})"
        )));
    }
    Ok((up, down))
}

/// Polyphase filter bank: `phases[p][j]` weights input sample `i + j - 31`
/// for output positions `i + p / up`.
struct PolyphaseBank {
    up: u64,
    down: u64,
    phases: Vec<[f64; TAPS_PER_PHASE]>,
}

impl PolyphaseBank {
    fn new(fs_in: f64, fs_out: f64) -> Result<Self> {
        let (up, down) = rational_ratio(fs_in, fs_out)?;
        // cut-off in cycles per input sample
        let c = CUTOFF_FRACTION * fs_in.min(fs_out) / fs_in;
        let half = (TAPS_PER_PHASE / 2) as f64;
        let i0_beta = bessel_i0(KAISER_BETA);
        let kernel = |t: f64| {
            let u = t / half;
            if u.abs() > 1.0 {
                return 0.0;
            }
            let arg = 2.0 * c * t;
            let sinc = if arg.abs() < 1e-12 {
                1.0
            } else {
                (PI * arg).sin() / (PI * arg)
            };
            2.0 * c * sinc * bessel_i0(KAISER_BETA * (1.0 - u * u).sqrt()) / i0_beta
        };

        let phases = (0..up)
            .map(|p| {
                let frac = p as f64 / up as f64;
                let mut taps = [0.0; TAPS_PER_PHASE];
                for (j, tap) in taps.iter_mut().enumerate() {
                    let offset = j as f64 - (half - 1.0);
                    *tap = kernel(frac - offset);
                }
                let sum: f64 = taps.iter().sum();
                taps.iter_mut().for_each(|t| *t /= sum);
                taps
            })
            .collect();
        Ok(Self { up, down, phases })
    }

    fn apply(&self, x: &[f64], out_len: usize) -> Vec<f64> {
        let n = x.len() as i64;
        let first_offset = TAPS_PER_PHASE as i64 / 2 - 1;
        (0..out_len as u64)
            .map(|k| {
                let pos = k * self.down;
                let base = (pos / self.up) as i64;
                let taps = &self.phases[(pos % self.up) as usize];
                taps.iter()
                    .enumerate()
                    .map(|(j, w)| {
                        // edge samples are held beyond the record
                        let idx = (base + j as i64 - first_offset).clamp(0, n - 1);
                        w * x[idx as usize]
                    })
                    .sum()
            })
            .collect()
    }
}

/// Output length for a resampled signal: `round(n * fs_out / fs_in)`.
pub fn resampled_len(n: usize, fs_in: f64, fs_out: f64) -> usize {
    (n as f64 * fs_out / fs_in).round() as usize
}

/// Resamples one signal. Equal rates return the input unchanged.
pub fn resample_signal(x: &[f64], fs_in: f64, fs_out: f64) -> Result<Vec<f64>> {
    if !(fs_in > 0.0 && fs_out > 0.0) {
        return Err(Error::Param("sampling rates must be positive".into()));
    }
    if x.is_empty() {
        return Err(Error::EmptyRecord);
    }
    if fs_in == fs_out {
        return Ok(x.to_vec());
    }
    let bank = PolyphaseBank::new(fs_in, fs_out)?;
    Ok(bank.apply(x, resampled_len(x.len(), fs_in, fs_out)))
}

/// Resamples many equal-length signals with one filter bank.
pub(crate) fn resample_many(leads: &[Vec<f64>], fs_in: f64, fs_out: f64) -> Result<Vec<Vec<f64>>> {
    if !(fs_in > 0.0 && fs_out > 0.0) {
        return Err(Error::Param("sampling rates must be positive".into()));
    }
    if leads.iter().any(|l| l.is_empty()) {
        return Err(Error::EmptyRecord);
    }
    if fs_in == fs_out {
        return Ok(leads.to_vec());
    }
    let bank = PolyphaseBank::new(fs_in, fs_out)?;
    Ok(leads
        .iter()
        .map(|x| bank.apply(x, resampled_len(x.len(), fs_in, fs_out)))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bessel_reference_values() {
        // I0(1), I0(8) from tables
        assert!((bessel_i0(1.0) - 1.266_065_877_752_008_4).abs() < 1e-14);
        assert!((bessel_i0(8.0) - 427.564_115_721_804_74).abs() < 1e-9);
    }

    #[test]
    fn ratio_reduction() {
        assert_eq!(rational_ratio(500.0, 150.0).unwrap(), (3, 10));
        assert_eq!(rational_ratio(360.0, 150.0).unwrap(), (5, 12));
        assert_eq!(rational_ratio(128.0, 256.0).unwrap(), (2, 1));
    }

    #[test]
    fn lengths() {
        assert_eq!(resample_signal(&vec![0.0; 5000], 500.0, 150.0).unwrap().len(), 1500);
        assert_eq!(resample_signal(&vec![0.0; 7], 500.0, 150.0).unwrap().len(), 2);
        assert!(matches!(resample_signal(&[], 500.0, 150.0), Err(Error::EmptyRecord)));
    }

    #[test]
    fn constant_is_preserved() {
        let y = resample_signal(&vec![2.5; 300], 500.0, 150.0).unwrap();
        assert!(y.iter().all(|v| (v - 2.5).abs() < 1e-12));
    }

    #[test]
    fn upsampling_tone() {
        let fs_in = 150.0;
        let x: Vec<f64> = (0..1500).map(|k| (2.0 * PI * 3.0 * k as f64 / fs_in).sin()).collect();
        let y = resample_signal(&x, fs_in, 500.0).unwrap();
        assert_eq!(y.len(), 5000);
        let err = (1000..4000)
            .map(|k| y[k] - (2.0 * PI * 3.0 * k as f64 / 500.0).sin())
            .fold(0.0f64, |m, e| m.max(e.abs()));
        assert!(err < 1e-3, "{err}");
    }
}
