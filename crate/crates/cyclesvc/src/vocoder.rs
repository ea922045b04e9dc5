//! Harmonic-plus-noise vocoder: renders `(mel, F0)` back to audio.
//!
//! Voiced frames get a bank of sinusoids at multiples of F0 whose
//! amplitudes sample the spectral envelope implied by the mel values;
//! all frames additionally get white noise shaped by the same envelope —
//! at `noise_gain` on voiced frames and full strength on unvoiced ones.
//! This keeps the interface of a neural vocoder (mel + F0 in, audio out),
//! so a trained one can be dropped in behind the same call, while staying
//! deterministic for a given seed.
//!
//! The envelope-to-amplitude calibration inverts the analysis chain: a
//! sine of amplitude `a` shows up in a Hann-windowed magnitude STFT as a
//! peak of `a * sum(window) / 2`, and the mel triangles are peak-normalized,
//! so dividing the interpolated mel magnitude by `sum(window)/2` recovers
//! the sine amplitude.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rustfft::num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mel::{hz_to_mel, MelBank, MelConfig, MelSpec};
use crate::pitch::F0Contour;
use crate::stft::{hann, RealFft};
use crate::AudioClip;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct VocoderConfig {
    pub n_harmonics: usize,
    /// Noise level on voiced frames, relative to the envelope.
    pub noise_gain: f64,
    pub sample_rate: u32,
    pub hop: usize,
    /// Mel analysis settings used to interpret the input mel.
    pub mel: MelConfig,
}

impl Default for VocoderConfig {
    fn default() -> Self {
        Self {
            n_harmonics: 64,
            noise_gain: 0.05,
            sample_rate: 44100,
            hop: 512,
            mel: MelConfig::default(),
        }
    }
}

/// Piecewise-linear interpolation of per-frame mel magnitudes over mel
/// scale, evaluated at an arbitrary frequency.
fn envelope_at(mags: &[f64], centers_mel: &[f64], hz: f64) -> f64 {
    let m = hz_to_mel(hz);
    if m <= centers_mel[0] {
        return mags[0];
    }
    if m >= *centers_mel.last().unwrap() {
        return *mags.last().unwrap();
    }
    // centers are monotonically increasing
    let mut lo = 0;
    let mut hi = centers_mel.len() - 1;
    while hi - lo > 1 {
        let mid = (lo + hi) / 2;
        if centers_mel[mid] <= m {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let frac = (m - centers_mel[lo]) / (centers_mel[hi] - centers_mel[lo]);
    mags[lo] * (1.0 - frac) + mags[hi] * frac
}

/// Render a waveform from a mel spectrogram and an aligned F0 contour.
///
/// The mel may be normalized (its recorded constants are inverted) or raw
/// log-mel. Output length is exactly `n_frames * hop`.
pub fn vocode(mel: &MelSpec, f0: &F0Contour, cfg: &VocoderConfig, seed: u64) -> Result<AudioClip> {
    if mel.n_frames() != f0.len() {
        return Err(Error::ShapeMismatch {
            what: "vocoder frames",
            expected: mel.n_frames().to_string(),
            got: f0.len().to_string(),
        });
    }
    if mel.n_frames() == 0 {
        return Err(Error::EmptyClip);
    }
    let log_mel = mel.denormalized();
    let frames = log_mel.n_frames();
    let hop = cfg.hop;
    let sr = cfg.sample_rate as f64;
    let out_len = frames * hop;

    let bank = MelBank::new(&cfg.mel);
    let centers_mel: Vec<f64> = bank.centers_hz().iter().map(|&h| hz_to_mel(h)).collect();
    // Linear-magnitude envelope per frame; the log floor maps back to ~0.
    let floor = cfg.mel.log_floor;
    let env: Vec<Vec<f64>> = (0..frames)
        .map(|t| {
            log_mel
                .values
                .row(t)
                .iter()
                .map(|&v| (v.exp() - floor).max(0.0))
                .collect()
        })
        .collect();

    let window = hann(cfg.mel.n_fft);
    let win_sum: f64 = window.iter().sum();
    let amp_scale = 2.0 / win_sum;

    // Harmonic branch: per-sample phase integration, amplitudes linearly
    // interpolated between frame centers.
    let mut harm = vec![0.0; out_len];
    let nyq = sr * 0.475;
    let mut phase = 0.0f64;
    for n in 0..out_len {
        let pos = n as f64 / hop as f64;
        let t0 = (pos.floor() as usize).min(frames - 1);
        let t1 = (t0 + 1).min(frames - 1);
        let frac = pos - t0 as f64;
        let (fa, fb) = (f0.hz[t0], f0.hz[t1]);
        let f = if fa > 0.0 && fb > 0.0 {
            fa * (1.0 - frac) + fb * frac
        } else if frac < 0.5 {
            fa
        } else {
            fb
        };
        if f <= 0.0 {
            continue;
        }
        phase += f / sr;
        let rot = Complex::from_polar(1.0, 2.0 * std::f64::consts::PI * phase);
        let mut z = Complex::new(1.0, 0.0);
        let mut acc = 0.0;
        for k in 1..=cfg.n_harmonics {
            z *= rot;
            let fk = k as f64 * f;
            if fk >= nyq {
                break;
            }
            let e0 = envelope_at(&env[t0], &centers_mel, fk);
            let e1 = envelope_at(&env[t1], &centers_mel, fk);
            let a = (e0 * (1.0 - frac) + e1 * frac) * amp_scale;
            acc += a * z.im;
        }
        harm[n] = acc;
    }

    // Noise branch: white noise shaped by the envelope per frame via
    // windowed overlap-add spectral filtering. NOISE_CAL is measured so
    // that an all-unvoiced flat envelope round-trips through the default
    // analysis mel at unit ratio (pinned by a unit test).
    const NOISE_CAL: f64 = 6.14;
    let win_len = 2 * hop;
    let fft = RealFft::new(win_len);
    let bins = fft.bins();
    let hz_per_bin = sr / win_len as f64;
    let noise_window = hann(win_len);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise_src: Vec<f64> = (0..out_len).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut noise = vec![0.0; out_len];
    let mut seg = vec![0.0; win_len];
    for t in 0..frames {
        let start = (t * hop) as isize - (win_len / 2) as isize;
        for (i, s) in seg.iter_mut().enumerate() {
            let idx = start + i as isize;
            *s = if idx >= 0 && (idx as usize) < out_len {
                noise_src[idx as usize] * noise_window[i]
            } else {
                0.0
            };
        }
        let mut spec = fft.forward(&seg);
        let gain = if f0.voiced[t] { cfg.noise_gain } else { 1.0 };
        for (b, c) in spec.iter_mut().enumerate().take(bins) {
            let fhz = b as f64 * hz_per_bin;
            let e = envelope_at(&env[t], &centers_mel, fhz.max(1.0));
            *c *= e * gain * amp_scale * NOISE_CAL;
        }
        let back = fft.inverse(&spec);
        for (i, &v) in back.iter().enumerate() {
            let idx = start + i as isize;
            if idx >= 0 && (idx as usize) < out_len {
                noise[idx as usize] += v * noise_window[i] / 0.75;
            }
        }
    }

    let samples: Vec<f64> = harm.iter().zip(&noise).map(|(h, n)| h + n).collect();
    let clip = AudioClip::new(samples, cfg.sample_rate);
    clip.check_finite()?;
    Ok(clip)
}
