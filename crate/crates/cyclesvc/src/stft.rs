//! Short-time Fourier analysis shared by the feature extractors, the
//! synthesizers and the metrics.
//!
//! Framing convention used everywhere in this crate:
//! - `num_frames = ceil(len / hop)`
//! - frame `t` is centered on sample `t * hop`, zero-padded at the edges
//!
//! [`RealFft`] wraps `rustfft` with a real-input interface (forward to
//! `n/2 + 1` bins, inverse from the half spectrum) and exposes the exact
//! adjoints of both transforms, which the autodiff ops are built on.

use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::mat::Mat;

pub fn hann(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 * (1.0 - (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos()))
        .collect()
}

pub fn blackman(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| {
            let x = 2.0 * std::f64::consts::PI * i as f64 / n as f64;
            0.42 - 0.5 * x.cos() + 0.08 * (2.0 * x).cos()
        })
        .collect()
}

/// `ceil(len / hop)` frames, each centered on `t * hop`.
pub fn num_frames(len: usize, hop: usize) -> usize {
    len.div_ceil(hop)
}

/// Real-input FFT of a fixed size plus the adjoints of both directions.
pub struct RealFft {
    n: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl RealFft {
    pub fn new(n: usize) -> Self {
        assert!(n >= 2 && n % 2 == 0, "FFT size must be even and >= 2");
        let mut planner = FftPlanner::new();
        Self {
            n,
            fwd: planner.plan_fft_forward(n),
            inv: planner.plan_fft_inverse(n),
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    /// Number of half-spectrum bins, `n/2 + 1`.
    pub fn bins(&self) -> usize {
        self.n / 2 + 1
    }

    /// Forward transform of `n` real samples to `n/2 + 1` complex bins.
    pub fn forward(&self, x: &[f64]) -> Vec<Complex<f64>> {
        assert_eq!(x.len(), self.n);
        let mut buf: Vec<Complex<f64>> = x.iter().map(|&v| Complex::new(v, 0.0)).collect();
        self.fwd.process(&mut buf);
        buf.truncate(self.bins());
        buf
    }

    /// Inverse transform from the half spectrum back to `n` real samples
    /// (includes the `1/n` normalization).
    pub fn inverse(&self, spec: &[Complex<f64>]) -> Vec<f64> {
        assert_eq!(spec.len(), self.bins());
        let mut buf = vec![Complex::new(0.0, 0.0); self.n];
        buf[..self.bins()].copy_from_slice(spec);
        // Imaginary parts at DC and Nyquist cannot influence a real signal.
        buf[0].im = 0.0;
        buf[self.n / 2].im = 0.0;
        for k in 1..self.n / 2 {
            buf[self.n - k] = buf[k].conj();
        }
        self.inv.process(&mut buf);
        buf.iter().map(|c| c.re / self.n as f64).collect()
    }

    /// Adjoint of [`RealFft::forward`]: maps a cotangent on the half
    /// spectrum to a cotangent on the input samples.
    pub fn adjoint_forward(&self, grad: &[Complex<f64>]) -> Vec<f64> {
        assert_eq!(grad.len(), self.bins());
        let mut weighted: Vec<Complex<f64>> = grad.to_vec();
        for (k, g) in weighted.iter_mut().enumerate() {
            if k != 0 && k != self.n / 2 {
                *g *= 0.5;
            }
        }
        let mut out = self.inverse(&weighted);
        for v in &mut out {
            *v *= self.n as f64;
        }
        out
    }

    /// Adjoint of [`RealFft::inverse`]: maps a cotangent on the output
    /// samples to a cotangent on the half spectrum.
    pub fn adjoint_inverse(&self, grad: &[f64]) -> Vec<Complex<f64>> {
        assert_eq!(grad.len(), self.n);
        let mut spec = self.forward(grad);
        let n = self.n as f64;
        for (k, g) in spec.iter_mut().enumerate() {
            let c = if k == 0 || k == self.n / 2 { 1.0 } else { 2.0 };
            *g *= c / n;
        }
        spec[0].im = 0.0;
        let half = self.n / 2;
        spec[half].im = 0.0;
        spec
    }
}

/// Windowed STFT over the shared framing convention.
pub struct Stft {
    window: Vec<f64>,
    hop: usize,
    fft: RealFft,
}

impl Stft {
    pub fn new(win_len: usize, hop: usize, window: Vec<f64>) -> Self {
        assert_eq!(window.len(), win_len);
        assert!(hop > 0);
        Self {
            window,
            hop,
            fft: RealFft::new(win_len),
        }
    }

    pub fn hann(win_len: usize, hop: usize) -> Self {
        Self::new(win_len, hop, hann(win_len))
    }

    pub fn win_len(&self) -> usize {
        self.window.len()
    }

    pub fn hop(&self) -> usize {
        self.hop
    }

    pub fn bins(&self) -> usize {
        self.fft.bins()
    }

    pub fn window(&self) -> &[f64] {
        &self.window
    }

    pub fn fft(&self) -> &RealFft {
        &self.fft
    }

    /// Copy the windowed frame centered on `t * hop` into `buf`,
    /// zero-padding beyond the signal edges.
    pub fn fill_frame(&self, samples: &[f64], t: usize, buf: &mut [f64]) {
        let w = self.window.len();
        assert_eq!(buf.len(), w);
        let center = (t * self.hop) as isize;
        let start = center - (w / 2) as isize;
        for (i, b) in buf.iter_mut().enumerate() {
            let idx = start + i as isize;
            *b = if idx >= 0 && (idx as usize) < samples.len() {
                samples[idx as usize] * self.window[i]
            } else {
                0.0
            };
        }
    }

    /// Complex half-spectra for every frame: `num_frames` rows.
    pub fn spectra(&self, samples: &[f64]) -> Vec<Vec<Complex<f64>>> {
        let frames = num_frames(samples.len(), self.hop);
        let mut buf = vec![0.0; self.window.len()];
        (0..frames)
            .map(|t| {
                self.fill_frame(samples, t, &mut buf);
                self.fft.forward(&buf)
            })
            .collect()
    }

    /// Magnitude spectrogram, `[num_frames x bins]`.
    pub fn magnitudes(&self, samples: &[f64]) -> Mat {
        let spectra = self.spectra(samples);
        let bins = self.bins();
        let mut out = Mat::zeros(spectra.len(), bins);
        for (t, spec) in spectra.iter().enumerate() {
            let row = out.row_mut(t);
            for (b, c) in spec.iter().enumerate() {
                row[b] = c.norm();
            }
        }
        out
    }
}
