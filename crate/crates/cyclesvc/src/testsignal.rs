//! Synthetic signal generators: sines, noise, formant vowels, and a small
//! procedural "singing" corpus.
//!
//! These exist so the whole pipeline can be exercised without any real
//! recordings — the demo corpus is a set of gliding-pitch vowels with
//! vibrato, tremolo and a touch of breath noise, split across synthetic
//! "singers" that differ in formant placement and pitch range.

use std::f64::consts::PI;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::audio::AudioClip;

/// Constant-frequency sine at the given peak amplitude.
pub fn sine(freq_hz: f64, amplitude: f64, duration_secs: f64, sample_rate: u32) -> AudioClip {
    let n = (duration_secs * sample_rate as f64).round() as usize;
    let samples = (0..n)
        .map(|i| amplitude * (2.0 * PI * freq_hz * i as f64 / sample_rate as f64).sin())
        .collect();
    AudioClip::new(samples, sample_rate)
}

/// Uniform white noise in `[-amplitude, amplitude]`.
pub fn white_noise(amplitude: f64, duration_secs: f64, sample_rate: u32, seed: u64) -> AudioClip {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = (duration_secs * sample_rate as f64).round() as usize;
    let samples = (0..n)
        .map(|_| rng.random_range(-amplitude..=amplitude))
        .collect();
    AudioClip::new(samples, sample_rate)
}

/// Digital silence.
pub fn silence(duration_secs: f64, sample_rate: u32) -> AudioClip {
    let n = (duration_secs * sample_rate as f64).round() as usize;
    AudioClip::new(vec![0.0; n], sample_rate)
}

/// A formant preset: center frequencies and bandwidths of three resonances.
#[derive(Debug, Clone, Copy)]
pub struct Formants {
    pub centers: [f64; 3],
    pub bandwidths: [f64; 3],
}

/// Rough vowel presets (center frequencies in Hz).
pub fn vowel_a() -> Formants {
    Formants {
        centers: [800.0, 1150.0, 2900.0],
        bandwidths: [80.0, 90.0, 120.0],
    }
}

pub fn vowel_i() -> Formants {
    Formants {
        centers: [280.0, 2250.0, 2890.0],
        bandwidths: [45.0, 100.0, 120.0],
    }
}

pub fn vowel_o() -> Formants {
    Formants {
        centers: [450.0, 800.0, 2830.0],
        bandwidths: [70.0, 80.0, 100.0],
    }
}

fn formant_gain(f: f64, formants: &Formants) -> f64 {
    // Sum of resonance magnitude responses plus a gentle spectral tilt.
    let mut g = 0.0;
    for (c, b) in formants.centers.iter().zip(&formants.bandwidths) {
        let d = (f - c) / b;
        g += 1.0 / (1.0 + d * d);
    }
    g * (1.0 / (1.0 + f / 4000.0))
}

/// Additive formant vowel at a fixed pitch. Used by content-feature tests.
pub fn formant_vowel(
    f0_hz: f64,
    formants: &Formants,
    amplitude: f64,
    duration_secs: f64,
    sample_rate: u32,
) -> AudioClip {
    let n = (duration_secs * sample_rate as f64).round() as usize;
    let nyquist = sample_rate as f64 / 2.0;
    let n_harm = ((nyquist * 0.9) / f0_hz).floor() as usize;
    let gains: Vec<f64> = (1..=n_harm)
        .map(|k| formant_gain(k as f64 * f0_hz, formants))
        .collect();
    let peak: f64 = gains.iter().sum();
    let mut samples = vec![0.0; n];
    for (k, g) in gains.iter().enumerate() {
        let f = (k + 1) as f64 * f0_hz;
        let w = 2.0 * PI * f / sample_rate as f64;
        for (i, s) in samples.iter_mut().enumerate() {
            *s += g * (w * i as f64).sin();
        }
    }
    for s in &mut samples {
        *s *= amplitude / peak;
    }
    AudioClip::new(samples, sample_rate)
}

/// Parameters for one procedural singing clip.
#[derive(Debug, Clone)]
pub struct SingSpec {
    pub start_hz: f64,
    pub end_hz: f64,
    pub formants: Formants,
    pub amplitude: f64,
    pub breath: f64,
    pub vibrato_hz: f64,
    pub vibrato_cents: f64,
    pub duration_secs: f64,
    pub sample_rate: u32,
    pub seed: u64,
}

impl Default for SingSpec {
    fn default() -> Self {
        Self {
            start_hz: 200.0,
            end_hz: 260.0,
            formants: vowel_a(),
            amplitude: 0.35,
            breath: 0.01,
            vibrato_hz: 5.5,
            vibrato_cents: 30.0,
            duration_secs: 2.2,
            sample_rate: 44100,
            seed: 0,
        }
    }
}

/// Render one gliding-pitch vowel with vibrato, tremolo and breath noise.
pub fn sing(spec: &SingSpec) -> AudioClip {
    let sr = spec.sample_rate as f64;
    let n = (spec.duration_secs * sr).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed.wrapping_mul(0x9e37_79b9).wrapping_add(7));

    // Per-sample F0: exponential glide plus vibrato.
    let mut f0 = Vec::with_capacity(n);
    let ratio = spec.end_hz / spec.start_hz;
    for i in 0..n {
        let u = i as f64 / n as f64;
        let vib = (2.0 * PI * spec.vibrato_hz * i as f64 / sr).sin();
        let cents = spec.vibrato_cents * vib;
        f0.push(spec.start_hz * ratio.powf(u) * 2f64.powf(cents / 1200.0));
    }

    let nyquist = sr / 2.0;
    let n_harm = ((nyquist * 0.9) / spec.end_hz.max(spec.start_hz)).floor() as usize;
    let gains: Vec<f64> = (1..=n_harm.max(1))
        .map(|k| formant_gain(k as f64 * 0.5 * (spec.start_hz + spec.end_hz), &spec.formants))
        .collect();
    let peak: f64 = gains.iter().sum();

    let mut phase = 0.0f64;
    let mut samples = Vec::with_capacity(n);
    for i in 0..n {
        phase += f0[i] / sr;
        let tremolo = 1.0 + 0.08 * (2.0 * PI * 3.1 * i as f64 / sr).sin();
        // Attack and release envelope so clips do not click.
        let t = i as f64 / sr;
        let t_end = spec.duration_secs - t;
        let env = (t / 0.05).min(1.0).min((t_end / 0.08).min(1.0)).max(0.0);
        let mut v = 0.0;
        for (k, g) in gains.iter().enumerate() {
            let h = (k + 1) as f64;
            if h * f0[i] < nyquist * 0.95 {
                v += g * (2.0 * PI * h * phase).sin();
            }
        }
        v = v / peak * spec.amplitude * tremolo * env;
        v += spec.breath * rng.random_range(-1.0..=1.0) * env;
        samples.push(v);
    }
    AudioClip::new(samples, spec.sample_rate)
}

/// A synthetic singer: a formant signature plus a comfortable pitch range.
#[derive(Debug, Clone)]
pub struct SingerProfile {
    pub name: String,
    pub formants: Formants,
    pub low_hz: f64,
    pub high_hz: f64,
}

/// Two default singers with disjoint ranges ("alto"-ish and "bass"-ish).
pub fn default_singers() -> Vec<SingerProfile> {
    vec![
        SingerProfile {
            name: "alda".into(),
            formants: vowel_a(),
            low_hz: 190.0,
            high_hz: 300.0,
        },
        SingerProfile {
            name: "bruno".into(),
            formants: vowel_o(),
            low_hz: 100.0,
            high_hz: 170.0,
        },
    ]
}

/// Write a corpus under `dir` as `<singer>/<clip>.wav` with a chosen
/// breath-noise level. `clips_per_singer` clips are generated per singer,
/// each a glide between two random pitches inside the singer's range.
pub fn write_corpus(
    dir: &std::path::Path,
    singers: &[SingerProfile],
    clips_per_singer: usize,
    duration_secs: f64,
    breath: f64,
    seed: u64,
) -> crate::error::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for singer in singers {
        let sub = dir.join(&singer.name);
        std::fs::create_dir_all(&sub)?;
        for c in 0..clips_per_singer {
            let a = rng.random_range(singer.low_hz..singer.high_hz);
            let b = rng.random_range(singer.low_hz..singer.high_hz);
            let spec = SingSpec {
                start_hz: a,
                end_hz: b,
                formants: singer.formants,
                duration_secs,
                breath,
                seed: rng.random(),
                ..SingSpec::default()
            };
            let clip = sing(&spec);
            crate::audio::write_wav(sub.join(format!("clip{c:03}.wav")), &clip)?;
        }
    }
    Ok(())
}

/// [`write_corpus`] with the default breath level.
pub fn write_demo_corpus(
    dir: &std::path::Path,
    singers: &[SingerProfile],
    clips_per_singer: usize,
    duration_secs: f64,
    seed: u64,
) -> crate::error::Result<()> {
    write_corpus(dir, singers, clips_per_singer, duration_secs, 0.01, seed)
}
