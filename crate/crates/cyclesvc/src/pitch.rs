//! Fundamental-frequency estimation and pitch-contour manipulation.
//!
//! The estimator is a YIN-style cumulative mean normalized difference
//! function, FFT-accelerated, with threshold 0.1 and a 40–1200 Hz search
//! range. The clip is band-limited by an exact-factor decimation before
//! analysis; wideband signals (a band-limited pulse train has energy up to
//! Nyquist) otherwise defeat integer-lag autocorrelation whenever the true
//! period is a non-integer number of samples. Frames stay aligned with the
//! mel framing (one F0 value per hop, window centered on `t * hop`).
//! Unvoiced frames carry `hz == 0` and an explicit flag, so a semitone
//! shift maps unvoiced to unvoiced.
//!
//! Shifting by `key` semitones multiplies voiced frames by `2^(key/12)`.

use rand::Rng;
use rustfft::num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stft::{num_frames, RealFft};
use crate::AudioClip;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct F0Config {
    pub sample_rate: u32,
    pub hop: usize,
    /// Integration window of the difference function, in samples.
    pub frame_len: usize,
    pub f_min: f64,
    pub f_max: f64,
    /// Voicing decision threshold on the normalized difference dip.
    pub threshold: f64,
    /// Frames quieter than this RMS are unvoiced outright.
    pub silence_rms: f64,
    /// Exact decimation factor applied before analysis; must divide `hop`.
    pub decimate: usize,
    /// How the period lag is chosen from the normalized difference curve.
    pub pick: DipPick,
}

/// Lag selection strategy.
///
/// `FirstBelowThreshold` is the textbook rule and the default. `GlobalMin`
/// takes the deepest dip instead (voiced if it clears the threshold);
/// metrics over noisy audio use it because spurious early dips otherwise
/// cause octave-up errors once the threshold is loosened.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DipPick {
    FirstBelowThreshold,
    GlobalMin,
}

impl Default for F0Config {
    fn default() -> Self {
        Self {
            sample_rate: 44100,
            hop: 512,
            frame_len: 2048,
            f_min: 40.0,
            f_max: 1200.0,
            threshold: 0.1,
            silence_rms: 1e-4,
            decimate: 4,
            pick: DipPick::FirstBelowThreshold,
        }
    }
}

/// Per-frame fundamental frequency with voiced flags.
///
/// Invariant: `hz[i] == 0` exactly where `voiced[i]` is false, and voiced
/// frames lie within `[20, 2000]` Hz.
#[derive(Debug, Clone, PartialEq)]
pub struct F0Contour {
    pub hz: Vec<f64>,
    pub voiced: Vec<bool>,
}

impl F0Contour {
    pub fn len(&self) -> usize {
        self.hz.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hz.is_empty()
    }

    pub fn voiced_count(&self) -> usize {
        self.voiced.iter().filter(|v| **v).count()
    }

    pub fn median_voiced_hz(&self) -> Option<f64> {
        let mut v: Vec<f64> = self
            .hz
            .iter()
            .zip(&self.voiced)
            .filter(|(_, &vc)| vc)
            .map(|(&h, _)| h)
            .collect();
        if v.is_empty() {
            return None;
        }
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        Some(v[v.len() / 2])
    }
}

/// Multiply voiced frames by `2^(key/12)`; unvoiced frames stay at zero.
pub fn shift_pitch_contour(f0: &F0Contour, key: i32) -> F0Contour {
    let factor = 2f64.powf(key as f64 / 12.0);
    F0Contour {
        hz: f0
            .hz
            .iter()
            .zip(&f0.voiced)
            .map(|(&h, &v)| if v { h * factor } else { 0.0 })
            .collect(),
        voiced: f0.voiced.clone(),
    }
}

/// Uniform cycle-shift key in `[6, 18]` semitones.
pub fn sample_cycle_key(rng: &mut impl Rng) -> i32 {
    rng.random_range(6..=18)
}

/// Uniform augmentation key in `[-5, 5]` semitones.
pub fn sample_perturb_key(rng: &mut impl Rng) -> i32 {
    rng.random_range(-5..=5)
}

/// Estimate the F0 contour of a clip, aligned with mel frames.
pub fn estimate_f0(clip: &AudioClip, cfg: &F0Config) -> Result<F0Contour> {
    if clip.sample_rate != cfg.sample_rate {
        return Err(Error::ShapeMismatch {
            what: "estimate_f0 sample rate",
            expected: cfg.sample_rate.to_string(),
            got: clip.sample_rate.to_string(),
        });
    }
    if clip.len() < cfg.frame_len {
        return Err(Error::ClipTooShort {
            need: cfg.frame_len,
            got: clip.len(),
        });
    }
    assert!(
        cfg.decimate > 0 && cfg.hop % cfg.decimate == 0 && cfg.sample_rate as usize % cfg.decimate == 0,
        "decimation factor must divide hop and sample rate"
    );

    let analysis_rate = cfg.sample_rate / cfg.decimate as u32;
    let analysis = if cfg.decimate == 1 {
        clip.clone()
    } else {
        crate::resample::resample(clip, analysis_rate)?
    };
    let hop = cfg.hop / cfg.decimate;
    let w = (cfg.frame_len / cfg.decimate).max(2);

    let sr = analysis_rate as f64;
    let tau_min = (sr / cfg.f_max).floor().max(2.0) as usize;
    let tau_max = (sr / cfg.f_min).ceil() as usize;
    let buf_len = w + tau_max;
    let fft_len = (buf_len + w).next_power_of_two();
    let fft = RealFft::new(fft_len);

    // Frame count follows the undecimated signal so contours always align
    // with the mel frames of the same clip.
    let frames = num_frames(clip.len(), cfg.hop);
    let mut hz = vec![0.0; frames];
    let mut voiced = vec![false; frames];

    let mut buf = vec![0.0; buf_len];
    for t in 0..frames {
        fill_centered(&analysis.samples, t * hop, w, &mut buf);
        let rms = (buf[..w].iter().map(|v| v * v).sum::<f64>() / w as f64).sqrt();
        if rms < cfg.silence_rms {
            continue;
        }
        if let Some(tau) = yin_period(&buf, w, tau_min, tau_max, cfg.threshold, cfg.pick, &fft) {
            let f = sr / tau;
            if f >= cfg.f_min && f <= cfg.f_max {
                hz[t] = f;
                voiced[t] = true;
            }
        }
    }
    Ok(F0Contour { hz, voiced })
}

/// Copy `buf.len()` samples so that the first `w` of them are the window
/// centered on `center`; zero-pad outside the signal.
fn fill_centered(samples: &[f64], center: usize, w: usize, buf: &mut [f64]) {
    let start = center as isize - (w / 2) as isize;
    for (i, b) in buf.iter_mut().enumerate() {
        let idx = start + i as isize;
        *b = if idx >= 0 && (idx as usize) < samples.len() {
            samples[idx as usize]
        } else {
            0.0
        };
    }
}

/// One YIN lag estimate for a buffer holding `w + tau_max` samples:
/// difference function via FFT cross-correlation, cumulative mean
/// normalization, absolute threshold, parabolic refinement.
fn yin_period(
    buf: &[f64],
    w: usize,
    tau_min: usize,
    tau_max: usize,
    threshold: f64,
    pick: DipPick,
    fft: &RealFft,
) -> Option<f64> {
    let n = fft.len();
    debug_assert!(buf.len() >= w + tau_max && n >= buf.len() + w);

    // Cross-correlation xc(tau) = sum_{j<w} x[j] x[j+tau] for tau <= tau_max.
    let mut a = vec![0.0; n];
    a[..w].copy_from_slice(&buf[..w]);
    let mut b = vec![0.0; n];
    b[..w + tau_max].copy_from_slice(&buf[..w + tau_max]);
    let sa = fft.forward(&a);
    let sb = fft.forward(&b);
    let prod: Vec<Complex<f64>> = sa.iter().zip(&sb).map(|(x, y)| x.conj() * y).collect();
    let xc = fft.inverse(&prod);

    // Running energies: e0 = ||x[0..w]||^2, e(tau) = ||x[tau..tau+w]||^2.
    let mut prefix = vec![0.0; buf.len() + 1];
    for (i, &v) in buf.iter().enumerate() {
        prefix[i + 1] = prefix[i] + v * v;
    }
    let e0 = prefix[w];

    let mut d = vec![0.0; tau_max + 1];
    for (tau, dv) in d.iter_mut().enumerate().skip(1) {
        let e_tau = prefix[tau + w] - prefix[tau];
        *dv = (e0 + e_tau - 2.0 * xc[tau]).max(0.0);
    }

    // Cumulative mean normalized difference.
    let mut cmnd = vec![1.0; tau_max + 1];
    let mut running = 0.0;
    for tau in 1..=tau_max {
        running += d[tau];
        cmnd[tau] = if running > 0.0 {
            d[tau] * tau as f64 / running
        } else {
            1.0
        };
    }

    match pick {
        DipPick::FirstBelowThreshold => {
            // First dip under threshold, descended to its local minimum.
            let mut tau = tau_min;
            while tau <= tau_max {
                if cmnd[tau] < threshold {
                    while tau + 1 <= tau_max && cmnd[tau + 1] < cmnd[tau] {
                        tau += 1;
                    }
                    return Some(parabolic_min(&cmnd, tau));
                }
                tau += 1;
            }
            None
        }
        DipPick::GlobalMin => {
            let best = (tau_min..=tau_max)
                .min_by(|&a, &b| cmnd[a].partial_cmp(&cmnd[b]).unwrap())?;
            if cmnd[best] >= threshold {
                return None;
            }
            // Subharmonic guard: dips at lag multiples can be marginally
            // deeper, so take the smallest lag within a slack of the
            // global minimum and descend to its local minimum.
            let accept = cmnd[best] + 0.08;
            let mut tau = tau_min;
            while cmnd[tau] > accept {
                tau += 1;
            }
            while tau + 1 <= tau_max && cmnd[tau + 1] < cmnd[tau] {
                tau += 1;
            }
            Some(parabolic_min(&cmnd, tau))
        }
    }
}

fn parabolic_min(values: &[f64], idx: usize) -> f64 {
    if idx == 0 || idx + 1 >= values.len() {
        return idx as f64;
    }
    let (s0, s1, s2) = (values[idx - 1], values[idx], values[idx + 1]);
    let denom = s0 + s2 - 2.0 * s1;
    if denom.abs() < 1e-12 {
        idx as f64
    } else {
        idx as f64 + (s0 - s2) / (2.0 * denom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testsignal::{silence, sine, white_noise};
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn pure_sine_is_tracked_within_one_percent() {
        let clip = sine(440.0, 0.5, 2.0, 44100);
        let f0 = estimate_f0(&clip, &F0Config::default()).unwrap();
        let voiced_rate = f0.voiced_count() as f64 / f0.len() as f64;
        assert!(voiced_rate >= 0.95, "voiced rate {voiced_rate}");
        let median = f0.median_voiced_hz().unwrap();
        assert!((median - 440.0).abs() / 440.0 < 0.01, "median {median}");
    }

    #[test]
    fn white_noise_is_mostly_unvoiced() {
        let clip = white_noise(0.5, 2.0, 44100, 11);
        let f0 = estimate_f0(&clip, &F0Config::default()).unwrap();
        let unvoiced_rate = 1.0 - f0.voiced_count() as f64 / f0.len() as f64;
        assert!(unvoiced_rate >= 0.8, "unvoiced rate {unvoiced_rate}");
    }

    #[test]
    fn silence_is_fully_unvoiced_with_zero_hz() {
        let clip = silence(1.0, 44100);
        let f0 = estimate_f0(&clip, &F0Config::default()).unwrap();
        assert_eq!(f0.voiced_count(), 0);
        assert!(f0.hz.iter().all(|&h| h == 0.0));
    }

    #[test]
    fn contour_invariant_holds_on_real_signal() {
        let clip = crate::testsignal::sing(&crate::testsignal::SingSpec::default());
        let f0 = estimate_f0(&clip, &F0Config::default()).unwrap();
        assert_eq!(f0.len(), num_frames(clip.len(), 512));
        for (h, v) in f0.hz.iter().zip(&f0.voiced) {
            if *v {
                assert!((20.0..=2000.0).contains(h));
            } else {
                assert_eq!(*h, 0.0);
            }
        }
    }

    #[test]
    fn octave_shift_doubles_every_voiced_frame() {
        let f0 = F0Contour {
            hz: vec![220.0, 330.0, 0.0],
            voiced: vec![true, true, false],
        };
        let up = shift_pitch_contour(&f0, 12);
        assert_eq!(up.hz, vec![440.0, 660.0, 0.0]);
        assert_eq!(up.voiced, f0.voiced);
    }

    #[test]
    fn zero_key_is_the_identity() {
        let f0 = F0Contour {
            hz: vec![123.4, 0.0, 543.2],
            voiced: vec![true, false, true],
        };
        assert_eq!(shift_pitch_contour(&f0, 0), f0);
    }

    #[test]
    fn seven_semitones_matches_direct_evaluation() {
        // 200 * 2^(7/12), evaluated independently.
        let expected = 200.0 * (7.0 / 12.0 * 2f64.ln()).exp();
        let f0 = F0Contour {
            hz: vec![200.0],
            voiced: vec![true],
        };
        let out = shift_pitch_contour(&f0, 7);
        assert!((out.hz[0] - expected).abs() < 1e-9);
        assert!((out.hz[0] - 299.661415).abs() < 1e-5);
    }

    #[test]
    fn up_then_down_round_trips() {
        let f0 = F0Contour {
            hz: vec![196.0, 220.5, 0.0, 415.3],
            voiced: vec![true, true, false, true],
        };
        for key in [-14, -5, 0, 3, 12, 18] {
            let back = shift_pitch_contour(&shift_pitch_contour(&f0, key), -key);
            for (a, b) in back.hz.iter().zip(&f0.hz) {
                if *b > 0.0 {
                    assert!((a - b).abs() / b < 1e-9);
                } else {
                    assert_eq!(*a, 0.0);
                }
            }
        }
    }

    #[test]
    fn cycle_key_covers_its_range_and_nothing_else() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut seen = [0usize; 19];
        for _ in 0..10_000 {
            let k = sample_cycle_key(&mut rng);
            assert!((6..=18).contains(&k));
            seen[k as usize] += 1;
        }
        for k in 6..=18 {
            assert!(seen[k] > 0, "key {k} never drawn");
        }
    }

    #[test]
    fn perturb_key_stays_in_range_with_near_zero_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut sum = 0.0;
        for _ in 0..10_000 {
            let k = sample_perturb_key(&mut rng);
            assert!((-5..=5).contains(&k));
            sum += k as f64;
        }
        assert!((sum / 10_000.0).abs() < 0.2);
    }

    #[test]
    fn key_sampling_is_reproducible() {
        let a: Vec<i32> = {
            let mut rng = ChaCha8Rng::seed_from_u64(7);
            (0..32).map(|_| sample_cycle_key(&mut rng)).collect()
        };
        let b: Vec<i32> = {
            let mut rng = ChaCha8Rng::seed_from_u64(7);
            (0..32).map(|_| sample_cycle_key(&mut rng)).collect()
        };
        assert_eq!(a, b);
    }

    #[test]
    fn estimate_is_pure() {
        let clip = sine(330.0, 0.4, 1.0, 44100);
        let a = estimate_f0(&clip, &F0Config::default()).unwrap();
        let b = estimate_f0(&clip, &F0Config::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn signal_domain_shift_matches_contour_shift() {
        // Shifting the contour by k should match estimating a sine
        // resynthesized at f * 2^(k/12).
        let base = 220.0;
        for key in [3, 7, 12] {
            let shifted_hz = base * 2f64.powf(key as f64 / 12.0);
            let clip = sine(shifted_hz, 0.5, 1.5, 44100);
            let measured = estimate_f0(&clip, &F0Config::default())
                .unwrap()
                .median_voiced_hz()
                .unwrap();
            let original = estimate_f0(&sine(base, 0.5, 1.5, 44100), &F0Config::default())
                .unwrap()
                .median_voiced_hz()
                .unwrap();
            let via_contour = original * 2f64.powf(key as f64 / 12.0);
            assert!(
                (measured - via_contour).abs() / via_contour < 0.02,
                "key {key}: {measured} vs {via_contour}"
            );
        }
    }
}
