//! Singing voice conversion with a cycle pitch-shift training strategy.
//!
//! The pipeline converts a sung performance to a target singer's timbre
//! while preserving content and melody:
//!
//! 1. deterministic feature extraction — log-mel spectrogram, YIN-style F0,
//!    per-frame RMS volume, cepstral content features ([`mel`], [`pitch`],
//!    [`volume`], [`content`]);
//! 2. a differentiable subtractive synthesizer driven by those features
//!    ([`ddsp`]);
//! 3. a denoising-diffusion decoder over mel spectrograms conditioned on
//!    the synthesizer's hidden features ([`diffusion`]);
//! 4. a harmonic-plus-noise vocoder that renders (mel, F0) back to audio
//!    ([`vocoder`]).
//!
//! Training runs the synthesizer twice per step — once at a pitch raised by
//! 6–18 semitones, once restored to the original pitch from content features
//! re-extracted off the shifted render — and penalizes the restored mel
//! against the original with a structural-similarity loss ([`train`],
//! [`loss`]). Conversion is a single pass plus shallow diffusion refinement
//! ([`convert`]).
//!
//! Everything is CPU-only `f64`, seeded and bit-reproducible; gradients come
//! from the small reverse-mode tape in [`ad`].


pub mod ad;
pub mod audio;
pub mod checkpoint;
pub mod config;
pub mod content;
pub mod convert;
pub mod dataset;
pub mod ddsp;
pub mod diffusion;
pub mod error;
pub mod eval;
pub mod loss;
pub mod mat;
pub mod mel;
pub mod nn;
pub mod opt;
pub mod pitch;
pub mod resample;
pub mod stft;
pub mod testsignal;
pub mod train;
pub mod vocoder;
pub mod volume;

pub use audio::AudioClip;
pub use error::{Error, ErrorClass, Result};
pub use mat::Mat;
