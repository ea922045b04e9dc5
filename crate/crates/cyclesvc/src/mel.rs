//! Log-mel spectrograms.
//!
//! Defaults: 44.1 kHz input, FFT 2048, Hann window, hop 512, 128 mel bins
//! spanning 40 Hz – 16 kHz, HTK mel scale, peak-normalized triangles applied
//! to the magnitude spectrum, then `ln(max(mel, 1e-5))`. Frames follow the
//! shared centered zero-padded convention, so a clip of `n` samples yields
//! `ceil(n / hop)` frames.
//!
//! A [`MelSpec`] optionally records min/max normalization metadata; the
//! structural-similarity loss operates on mels normalized to `[0, 1]`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mat::Mat;
use crate::stft::Stft;
use crate::AudioClip;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct MelConfig {
    pub sample_rate: u32,
    pub n_fft: usize,
    pub hop: usize,
    pub n_mels: usize,
    pub f_min: f64,
    pub f_max: f64,
    pub log_floor: f64,
}

impl Default for MelConfig {
    fn default() -> Self {
        Self {
            sample_rate: 44100,
            n_fft: 2048,
            hop: 512,
            n_mels: 128,
            f_min: 40.0,
            f_max: 16000.0,
            log_floor: 1e-5,
        }
    }
}

/// Min/max recorded when a mel spectrogram is scaled to `[0, 1]`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct MelNorm {
    pub min: f64,
    pub max: f64,
}

impl MelNorm {
    pub fn apply(&self, v: f64) -> f64 {
        (v - self.min) / (self.max - self.min)
    }

    pub fn invert(&self, v: f64) -> f64 {
        v * (self.max - self.min) + self.min
    }
}

/// A log-mel matrix, `[n_frames x n_mels]`, one row per frame.
#[derive(Debug, Clone, PartialEq)]
pub struct MelSpec {
    pub values: Mat,
    pub hop: usize,
    pub norm: Option<MelNorm>,
}

impl MelSpec {
    pub fn n_frames(&self) -> usize {
        self.values.rows()
    }

    pub fn n_mels(&self) -> usize {
        self.values.cols()
    }

    /// Scale into `[0, 1]` with the given constants, clamping overshoot,
    /// and record them.
    pub fn normalized(&self, norm: MelNorm) -> MelSpec {
        assert!(norm.max > norm.min, "degenerate mel normalization range");
        MelSpec {
            values: self.values.map(|v| norm.apply(v).clamp(0.0, 1.0)),
            hop: self.hop,
            norm: Some(norm),
        }
    }

    /// Undo normalization back to log-mel values.
    pub fn denormalized(&self) -> MelSpec {
        match self.norm {
            None => self.clone(),
            Some(n) => MelSpec {
                values: self.values.map(|v| n.invert(v)),
                hop: self.hop,
                norm: None,
            },
        }
    }
}

pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Triangular mel filterbank in sparse form plus its center frequencies.
pub struct MelBank {
    /// Per filter: first FFT bin covered and the weights from that bin on.
    filters: Vec<(usize, Vec<f64>)>,
    centers_hz: Vec<f64>,
    n_bins: usize,
}

impl MelBank {
    pub fn new(cfg: &MelConfig) -> Self {
        let n_bins = cfg.n_fft / 2 + 1;
        let hz_per_bin = cfg.sample_rate as f64 / cfg.n_fft as f64;
        let mel_lo = hz_to_mel(cfg.f_min);
        let mel_hi = hz_to_mel(cfg.f_max);
        let edges: Vec<f64> = (0..cfg.n_mels + 2)
            .map(|i| mel_to_hz(mel_lo + (mel_hi - mel_lo) * i as f64 / (cfg.n_mels + 1) as f64))
            .collect();

        let mut filters = Vec::with_capacity(cfg.n_mels);
        for m in 0..cfg.n_mels {
            let (lo, center, hi) = (edges[m], edges[m + 1], edges[m + 2]);
            let b_lo = (lo / hz_per_bin).ceil().max(0.0) as usize;
            let b_hi = ((hi / hz_per_bin).floor() as usize).min(n_bins - 1);
            let mut weights = Vec::new();
            for b in b_lo..=b_hi {
                let f = b as f64 * hz_per_bin;
                let w = if f <= center {
                    (f - lo) / (center - lo)
                } else {
                    (hi - f) / (hi - center)
                };
                weights.push(w.max(0.0));
            }
            filters.push((b_lo, weights));
        }
        MelBank {
            filters,
            centers_hz: edges[1..=cfg.n_mels].to_vec(),
            n_bins,
        }
    }

    pub fn n_mels(&self) -> usize {
        self.filters.len()
    }

    pub fn n_bins(&self) -> usize {
        self.n_bins
    }

    pub fn centers_hz(&self) -> &[f64] {
        &self.centers_hz
    }

    /// Apply to one magnitude spectrum row.
    pub fn apply(&self, magnitudes: &[f64], out: &mut [f64]) {
        assert_eq!(magnitudes.len(), self.n_bins);
        assert_eq!(out.len(), self.filters.len());
        for (o, (start, weights)) in out.iter_mut().zip(&self.filters) {
            *o = crate::mat::dot(weights, &magnitudes[*start..*start + weights.len()]);
        }
    }

    /// Transpose application: scatter mel-space values back to FFT bins.
    /// This is the exact adjoint of [`MelBank::apply`].
    pub fn apply_transpose(&self, mel_values: &[f64], out: &mut [f64]) {
        assert_eq!(mel_values.len(), self.filters.len());
        assert_eq!(out.len(), self.n_bins);
        out.fill(0.0);
        for (v, (start, weights)) in mel_values.iter().zip(&self.filters) {
            for (i, w) in weights.iter().enumerate() {
                out[start + i] += v * w;
            }
        }
    }
}

/// Compute the log-mel spectrogram of a clip.
pub fn mel_spectrogram(clip: &AudioClip, cfg: &MelConfig) -> Result<MelSpec> {
    if clip.sample_rate != cfg.sample_rate {
        return Err(Error::ShapeMismatch {
            what: "mel_spectrogram sample rate",
            expected: cfg.sample_rate.to_string(),
            got: clip.sample_rate.to_string(),
        });
    }
    if clip.len() < cfg.n_fft {
        return Err(Error::ClipTooShort {
            need: cfg.n_fft,
            got: clip.len(),
        });
    }
    clip.check_finite()?;

    let stft = Stft::hann(cfg.n_fft, cfg.hop);
    let bank = MelBank::new(cfg);
    let mags = stft.magnitudes(&clip.samples);
    let mut values = Mat::zeros(mags.rows(), cfg.n_mels);
    for t in 0..mags.rows() {
        bank.apply(mags.row(t), values.row_mut(t));
        for v in values.row_mut(t) {
            *v = v.max(cfg.log_floor).ln();
        }
    }
    Ok(MelSpec {
        values,
        hop: cfg.hop,
        norm: None,
    })
}

/// Differentiable mel transform for the training graph: waveform var
/// `[1 x L]` in, normalized log-mel var `[ceil(L/hop) x n_mels]` out
/// (normalization applied, no clamping so gradients stay alive).
pub struct MelGraph {
    cfg: MelConfig,
    window: Vec<f64>,
    bank: MelBank,
    norm: MelNorm,
}

impl MelGraph {
    pub fn new(cfg: MelConfig, norm: MelNorm) -> Self {
        let window = crate::stft::hann(cfg.n_fft);
        let bank = MelBank::new(&cfg);
        Self {
            cfg,
            window,
            bank,
            norm,
        }
    }

    pub fn apply(&self, g: &mut crate::ad::Graph, wav: crate::ad::Var) -> crate::ad::Var {
        use rustfft::num_complex::Complex;
        let samples = g.value(wav).row(0);
        let n_fft = self.cfg.n_fft;
        let frames = crate::stft::num_frames(samples.len(), self.cfg.hop);
        let fft = crate::stft::RealFft::new(n_fft);
        let bins = fft.bins();

        let mut spectra: Vec<Vec<Complex<f64>>> = Vec::with_capacity(frames);
        let mut mel_linear = Mat::zeros(frames, self.cfg.n_mels);
        let mut out = Mat::zeros(frames, self.cfg.n_mels);
        let mut seg = vec![0.0; n_fft];
        let mut mags = vec![0.0; bins];
        for t in 0..frames {
            let start = (t * self.cfg.hop) as isize - (n_fft / 2) as isize;
            for (i, s) in seg.iter_mut().enumerate() {
                let idx = start + i as isize;
                *s = if idx >= 0 && (idx as usize) < samples.len() {
                    samples[idx as usize] * self.window[i]
                } else {
                    0.0
                };
            }
            let spec = fft.forward(&seg);
            for (m, c) in mags.iter_mut().zip(&spec) {
                *m = c.norm();
            }
            self.bank.apply(&mags, mel_linear.row_mut(t));
            for (o, &ml) in out.row_mut(t).iter_mut().zip(mel_linear.row(t)) {
                *o = self.norm.apply(ml.max(self.cfg.log_floor).ln());
            }
            spectra.push(spec);
        }

        g.push(
            out,
            vec![wav],
            Box::new(MelGraphOp {
                cfg: self.cfg.clone(),
                window: self.window.clone(),
                bank: MelBank::new(&self.cfg),
                norm: self.norm,
                spectra,
                mel_linear,
            }),
        )
    }
}

struct MelGraphOp {
    cfg: MelConfig,
    window: Vec<f64>,
    bank: MelBank,
    norm: MelNorm,
    spectra: Vec<Vec<rustfft::num_complex::Complex<f64>>>,
    mel_linear: Mat,
}

impl crate::ad::GradOp for MelGraphOp {
    fn backward(&self, grad: &Mat, _out: &Mat, p: &[&Mat]) -> Vec<Option<Mat>> {
        let fft = crate::stft::RealFft::new(self.cfg.n_fft);
        let bins = fft.bins();
        let wav_len = p[0].cols();
        let inv_range = 1.0 / (self.norm.max - self.norm.min);
        let mut dwav = Mat::zeros(1, wav_len);
        let dw = dwav.row_mut(0);

        let mut dmel = vec![0.0; self.cfg.n_mels];
        let mut dmag = vec![0.0; bins];
        for (t, spec) in self.spectra.iter().enumerate() {
            // Through normalization and the floored log.
            for ((d, &g), &ml) in dmel
                .iter_mut()
                .zip(grad.row(t))
                .zip(self.mel_linear.row(t))
            {
                *d = if ml > self.cfg.log_floor {
                    g * inv_range / ml
                } else {
                    0.0
                };
            }
            self.bank.apply_transpose(&dmel, &mut dmag);
            // Magnitude to complex spectrum.
            let dspec: Vec<rustfft::num_complex::Complex<f64>> = spec
                .iter()
                .zip(&dmag)
                .map(|(c, &dm)| {
                    let n = c.norm();
                    if n > 1e-30 {
                        c * (dm / n)
                    } else {
                        rustfft::num_complex::Complex::new(0.0, 0.0)
                    }
                })
                .collect();
            let dseg = fft.adjoint_forward(&dspec);
            let start = (t * self.cfg.hop) as isize - (self.cfg.n_fft / 2) as isize;
            for (i, (&ds, &w)) in dseg.iter().zip(&self.window).enumerate() {
                let idx = start + i as isize;
                if idx >= 0 && (idx as usize) < wav_len {
                    dw[idx as usize] += ds * w;
                }
            }
        }
        vec![Some(dwav)]
    }
}
