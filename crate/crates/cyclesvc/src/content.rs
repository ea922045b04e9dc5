//! Timbre-lean per-frame content features.
//!
//! The default extractor works on 16 kHz audio with a 320-sample hop and
//! takes the first `dim` real cepstral coefficients of each frame,
//! excluding `c0`. Dropping `c0` removes overall gain; truncating the
//! cepstrum keeps the spectral envelope and discards pitch harmonics,
//! which live at quefrencies far above the kept range for any singing F0.
//!
//! [`ContentEncoder`] is a trait so a learned encoder can be swapped in
//! without touching any caller.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mat::Mat;
use crate::stft::{RealFft, Stft};
use crate::AudioClip;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ContentConfig {
    pub sample_rate: u32,
    pub hop: usize,
    pub window: usize,
    pub dim: usize,
    pub log_floor: f64,
}

impl Default for ContentConfig {
    fn default() -> Self {
        Self {
            sample_rate: 16000,
            hop: 320,
            window: 1024,
            dim: 32,
            log_floor: 1e-5,
        }
    }
}

/// Frame-aligned content features, `[n_frames x dim]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ContentFeatures {
    pub values: Mat,
}

impl ContentFeatures {
    pub fn n_frames(&self) -> usize {
        self.values.rows()
    }

    pub fn dim(&self) -> usize {
        self.values.cols()
    }
}

/// Anything that can turn audio into per-frame content features.
pub trait ContentEncoder: Send + Sync {
    fn encode(&self, clip: &AudioClip) -> Result<ContentFeatures>;
    fn dim(&self) -> usize;
    /// The rate the encoder expects its input at.
    fn sample_rate(&self) -> u32;
}

/// The built-in cepstral-envelope encoder.
pub struct CepstralEncoder {
    cfg: ContentConfig,
}

impl CepstralEncoder {
    pub fn new(cfg: ContentConfig) -> Self {
        assert!(cfg.dim > 0 && cfg.dim < cfg.window);
        Self { cfg }
    }

    pub fn config(&self) -> &ContentConfig {
        &self.cfg
    }
}

impl ContentEncoder for CepstralEncoder {
    fn encode(&self, clip: &AudioClip) -> Result<ContentFeatures> {
        let cfg = &self.cfg;
        if clip.sample_rate != cfg.sample_rate {
            return Err(Error::ShapeMismatch {
                what: "content encoder sample rate",
                expected: cfg.sample_rate.to_string(),
                got: clip.sample_rate.to_string(),
            });
        }
        if clip.len() < cfg.window {
            return Err(Error::ClipTooShort {
                need: cfg.window,
                got: clip.len(),
            });
        }

        let stft = Stft::hann(cfg.window, cfg.hop);
        let cep_fft = RealFft::new(cfg.window);
        let spectra = stft.spectra(&clip.samples);
        let bins = stft.bins();

        let mut values = Mat::zeros(spectra.len(), cfg.dim);
        let mut log_mag = vec![0.0; bins];
        for (t, spec) in spectra.iter().enumerate() {
            for (l, c) in log_mag.iter_mut().zip(spec) {
                *l = c.norm().max(cfg.log_floor).ln();
            }
            // Real cepstrum: inverse transform of the log magnitude,
            // keeping quefrencies 1..=dim.
            let full: Vec<rustfft::num_complex::Complex<f64>> = log_mag
                .iter()
                .map(|&v| rustfft::num_complex::Complex::new(v, 0.0))
                .collect();
            let cep = cep_fft.inverse(&full);
            values.row_mut(t).copy_from_slice(&cep[1..=cfg.dim]);
        }
        Ok(ContentFeatures { values })
    }

    fn dim(&self) -> usize {
        self.cfg.dim
    }

    fn sample_rate(&self) -> u32 {
        self.cfg.sample_rate
    }
}

/// Stretch or squeeze content features to exactly `n_frames` rows by linear
/// interpolation along time. Endpoints are preserved.
pub fn align_to_frames(content: &ContentFeatures, n_frames: usize) -> Result<ContentFeatures> {
    if n_frames == 0 {
        return Err(Error::OutOfRange {
            what: "n_frames",
            msg: "must be positive".into(),
        });
    }
    let src = &content.values;
    if src.rows() == 0 {
        return Err(Error::EmptyClip);
    }
    if src.rows() == n_frames {
        return Ok(content.clone());
    }
    let mut out = Mat::zeros(n_frames, src.cols());
    for t in 0..n_frames {
        let pos = if n_frames == 1 {
            0.0
        } else {
            t as f64 * (src.rows() - 1) as f64 / (n_frames - 1) as f64
        };
        let lo = pos.floor() as usize;
        let hi = (lo + 1).min(src.rows() - 1);
        let frac = pos - lo as f64;
        let (a, b) = (src.row(lo), src.row(hi));
        for (o, (x, y)) in out.row_mut(t).iter_mut().zip(a.iter().zip(b)) {
            *o = x * (1.0 - frac) + y * frac;
        }
    }
    Ok(ContentFeatures { values: out })
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let (mut dot, mut na, mut nb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        if na == nb {
            1.0
        } else {
            0.0
        }
    } else {
        dot / (na.sqrt() * nb.sqrt())
    }
}

/// Mean framewise cosine similarity between two equally framed features.
pub fn mean_frame_cosine(a: &ContentFeatures, b: &ContentFeatures) -> f64 {
    assert_eq!(a.n_frames(), b.n_frames());
    let mut acc = 0.0;
    for t in 0..a.n_frames() {
        acc += cosine(a.values.row(t), b.values.row(t));
    }
    acc / a.n_frames() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testsignal::{formant_vowel, silence, vowel_a, vowel_i};

    fn encoder() -> CepstralEncoder {
        CepstralEncoder::new(ContentConfig::default())
    }

    #[test]
    fn silence_maps_to_all_zero_features() {
        let feats = encoder().encode(&silence(0.5, 16000)).unwrap();
        assert!(feats.values.data().iter().all(|&v| v.abs() < 1e-12));
    }

    #[test]
    fn features_are_amplitude_invariant() {
        let loud = formant_vowel(200.0, &vowel_a(), 0.5, 0.8, 16000);
        let soft = AudioClip::new(loud.samples.iter().map(|s| s * 0.5).collect(), 16000);
        let fa = encoder().encode(&loud).unwrap();
        let fb = encoder().encode(&soft).unwrap();
        let sim = mean_frame_cosine(&fa, &fb);
        assert!(sim >= 0.99, "cosine {sim}");
    }

    #[test]
    fn different_vowels_are_less_similar_than_same_vowel() {
        let a1 = encoder().encode(&formant_vowel(200.0, &vowel_a(), 0.5, 0.8, 16000)).unwrap();
        let a2 = encoder().encode(&formant_vowel(210.0, &vowel_a(), 0.4, 0.8, 16000)).unwrap();
        let i1 = encoder().encode(&formant_vowel(200.0, &vowel_i(), 0.5, 0.8, 16000)).unwrap();
        let same = mean_frame_cosine(&a1, &a2);
        let diff = mean_frame_cosine(&a1, &i1);
        assert!(
            same > diff,
            "same-vowel {same} should exceed cross-vowel {diff}"
        );
    }

    #[test]
    fn align_is_identity_when_lengths_match() {
        let f = encoder().encode(&formant_vowel(220.0, &vowel_a(), 0.5, 0.5, 16000)).unwrap();
        let aligned = align_to_frames(&f, f.n_frames()).unwrap();
        assert_eq!(aligned.values, f.values);
    }

    #[test]
    fn constant_features_stay_constant_under_alignment() {
        let f = ContentFeatures {
            values: Mat::filled(5, 3, 0.7),
        };
        for n in [1, 2, 8, 31] {
            let a = align_to_frames(&f, n).unwrap();
            assert_eq!(a.n_frames(), n);
            assert!(a.values.data().iter().all(|&v| (v - 0.7).abs() < 1e-12));
        }
    }

    #[test]
    fn two_frame_ramp_interpolates_the_midpoint() {
        let f = ContentFeatures {
            values: Mat::from_vec(2, 2, vec![0.0, 0.0, 1.0, 1.0]),
        };
        let a = align_to_frames(&f, 3).unwrap();
        assert_eq!(a.values.row(0), &[0.0, 0.0]);
        assert_eq!(a.values.row(1), &[0.5, 0.5]);
        assert_eq!(a.values.row(2), &[1.0, 1.0]);
    }

    #[test]
    fn zero_frames_is_an_error() {
        let f = ContentFeatures {
            values: Mat::filled(4, 2, 1.0),
        };
        assert!(align_to_frames(&f, 0).is_err());
    }

    #[test]
    fn short_clip_is_an_error() {
        assert!(matches!(
            encoder().encode(&silence(0.01, 16000)),
            Err(Error::ClipTooShort { .. })
        ));
    }
}
