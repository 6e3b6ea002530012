//! Butterworth band-pass as a cascade of second-order sections, with
//! forward-backward (zero-phase) application.
//!
//! The design runs the classic analog route: Butterworth low-pass prototype
//! of order `order / 2`, low-pass to band-pass transform around the
//! pre-warped band edges, then the bilinear transform. Every section carries
//! one zero at z = 1 and one at z = -1 and is scaled to unit gain at the band
//! centre.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Direct-form II transposed biquad, `a0` normalized to 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Biquad {
    pub b: [f64; 3],
    pub a: [f64; 2],
}

impl Biquad {
    fn response(&self, z_inv: Complex64) -> Complex64 {
        let num = self.b[0] + z_inv * (self.b[1] + z_inv * self.b[2]);
        let den = 1.0 + z_inv * (self.a[0] + z_inv * self.a[1]);
        num / den
    }

    /// DF2T state that makes a constant input `u` produce its steady output.
    fn steady_state(&self, u: f64) -> ([f64; 2], f64) {
        let gain = (self.b[0] + self.b[1] + self.b[2]) / (1.0 + self.a[0] + self.a[1]);
        let y = gain * u;
        let s2 = self.b[2] * u - self.a[1] * y;
        let s1 = y - self.b[0] * u;
        ([s1, s2], y)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SosFilter {
    sections: Vec<Biquad>,
}

impl SosFilter {
    /// Designs an order-`order` Butterworth band-pass (`order / 2` biquads).
    pub fn butterworth_bandpass(order: usize, low: f64, high: f64, fs: f64) -> Result<Self> {
        if order == 0 || order % 2 != 0 || order > 16 {
            return Err(Error::Param(format!("band-pass order must be even in 2..=16, got {order}")));
        }
        let nyquist = fs / 2.0;
        if high >= nyquist {
            return Err(Error::Nyquist { high, nyquist });
        }
        if !(low > 0.0 && low < high) {
            return Err(Error::Param(format!("band edges must satisfy 0 < {low} < {high}")));
        }

        let proto_order = order / 2;
        let warp = |f: f64| 2.0 * fs * (PI * f / fs).tan();
        let (w1, w2) = (warp(low), warp(high));
        let bw = w2 - w1;
        let w0 = (w1 * w2).sqrt();

        let mut z_poles = Vec::with_capacity(order);
        for k in 0..proto_order {
            let theta = PI * (2 * k + proto_order + 1) as f64 / (2 * proto_order) as f64;
            let p = Complex64::from_polar(1.0, theta) * bw;
            let disc = (p * p - 4.0 * w0 * w0).sqrt();
            for s in [(p + disc) / 2.0, (p - disc) / 2.0] {
                z_poles.push((2.0 * fs + s) / (2.0 * fs - s));
            }
        }

        let tol = 1e-12;
        let mut sections = Vec::with_capacity(proto_order);
        let mut reals: Vec<f64> = z_poles.iter().filter(|z| z.im.abs() <= tol).map(|z| z.re).collect();
        reals.sort_by(f64::total_cmp);
        for z in z_poles.iter().filter(|z| z.im > tol) {
            sections.push(Biquad {
                b: [1.0, 0.0, -1.0],
                a: [-2.0 * z.re, z.norm_sqr()],
            });
        }
        for pair in reals.chunks(2) {
            let [r1, r2] = [pair[0], pair[1]];
            sections.push(Biquad {
                b: [1.0, 0.0, -1.0],
                a: [-(r1 + r2), r1 * r2],
            });
        }
        debug_assert_eq!(sections.len(), proto_order);

        let omega0 = 2.0 * (w0 / (2.0 * fs)).atan();
        let z_inv = Complex64::from_polar(1.0, -omega0);
        for section in &mut sections {
            let g = 1.0 / section.response(z_inv).norm();
            for b in &mut section.b {
                *b *= g;
            }
        }
        Ok(Self { sections })
    }

    pub fn sections(&self) -> &[Biquad] {
        &self.sections
    }

    /// Complex single-pass response at `f_hz`.
    pub fn response(&self, f_hz: f64, fs: f64) -> Complex64 {
        let z_inv = Complex64::from_polar(1.0, -2.0 * PI * f_hz / fs);
        self.sections
            .iter()
            .fold(Complex64::new(1.0, 0.0), |acc, s| acc * s.response(z_inv))
    }

    /// Causal single pass from zero state.
    pub fn filter(&self, x: &[f64]) -> Vec<f64> {
        let mut y = x.to_vec();
        for s in &self.sections {
            run_section(s, &mut y, [0.0, 0.0]);
        }
        y
    }

    fn filter_from_steady(&self, x: &mut [f64]) {
        let Some(&first) = x.first() else { return };
        let mut u = first;
        for s in &self.sections {
            let (state, y0) = s.steady_state(u);
            run_section(s, x, state);
            u = y0;
        }
    }

    /// Zero-phase forward-backward filtering. The signal is padded with an
    /// odd reflection at both ends and each pass starts from the steady state
    /// of its first input value.
    pub fn filtfilt(&self, x: &[f64]) -> Vec<f64> {
        let n = x.len();
        if n == 0 {
            return Vec::new();
        }
        let pad = (3 * (2 * self.sections.len() + 1)).min(n - 1);
        let mut ext = Vec::with_capacity(n + 2 * pad);
        ext.extend((1..=pad).rev().map(|i| 2.0 * x[0] - x[i]));
        ext.extend_from_slice(x);
        ext.extend((1..=pad).map(|i| 2.0 * x[n - 1] - x[n - 1 - i]));

        self.filter_from_steady(&mut ext);
        ext.reverse();
        self.filter_from_steady(&mut ext);
        ext.reverse();
        ext[pad..pad + n].to_vec()
    }
}

fn run_section(s: &Biquad, x: &mut [f64], state: [f64; 2]) {
    let [b0, b1, b2] = s.b;
    let [a1, a2] = s.a;
    let [mut s1, mut s2] = state;
    for v in x.iter_mut() {
        let input = *v;
        let y = b0 * input + s1;
        s1 = b1 * input - a1 * y + s2;
        s2 = b2 * input - a2 * y;
        *v = y;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn db(x: f64) -> f64 {
        20.0 * x.log10()
    }

    #[test]
    fn section_count_and_edges() {
        for order in [2, 4, 6, 8] {
            let f = SosFilter::butterworth_bandpass(order, 0.5, 50.0, 150.0).unwrap();
            assert_eq!(f.sections().len(), order / 2);
            for edge in [0.5, 50.0] {
                let g = db(f.response(edge, 150.0).norm());
                assert!((g + 3.0103).abs() < 1e-3, "order {order} edge {edge}: {g} dB");
            }
            assert!(db(f.response(10.0, 150.0).norm()).abs() < 0.1);
        }
    }

    #[test]
    fn stable_poles() {
        let f = SosFilter::butterworth_bandpass(8, 0.5, 50.0, 500.0).unwrap();
        for s in f.sections() {
            // |z|^2 = a2 for a conjugate pair; real pairs satisfy the Jury test
            assert!(s.a[1].abs() < 1.0);
            assert!((s.a[0]).abs() < 1.0 + s.a[1]);
        }
    }

    #[test]
    fn rejects_bad_bands() {
        assert!(matches!(
            SosFilter::butterworth_bandpass(6, 0.5, 75.0, 150.0),
            Err(Error::Nyquist { .. })
        ));
        assert!(SosFilter::butterworth_bandpass(6, 0.0, 50.0, 150.0).is_err());
        assert!(SosFilter::butterworth_bandpass(6, 60.0, 50.0, 150.0).is_err());
        assert!(SosFilter::butterworth_bandpass(5, 0.5, 50.0, 150.0).is_err());
    }

    #[test]
    fn constant_input_is_removed() {
        let f = SosFilter::butterworth_bandpass(6, 0.5, 50.0, 150.0).unwrap();
        let y = f.filtfilt(&vec![1.0; 1500]);
        let mean_abs = y.iter().map(|v| v.abs()).sum::<f64>() / y.len() as f64;
        assert!(mean_abs < 1e-3, "{mean_abs}");
    }

    #[test]
    fn short_inputs() {
        let f = SosFilter::butterworth_bandpass(6, 0.5, 50.0, 150.0).unwrap();
        assert!(f.filtfilt(&[]).is_empty());
        assert_eq!(f.filtfilt(&[2.0]).len(), 1);
        assert_eq!(f.filtfilt(&[1.0, 2.0, 3.0]).len(), 3);
    }
}
