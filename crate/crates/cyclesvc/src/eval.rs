//! Objective metrics: mel SSIM between clips, F0 RMSE over shared voiced
//! frames, a harmonic-to-noise-ratio hoarseness proxy, and log-spectrogram
//! image emission.
//!
//! The HNR splits each voiced frame's spectrum into harmonic bins (within
//! `±HARMONIC_HALF_WIDTH` bins of every multiple of the frame's estimated
//! F0) and everything else, and reports `10 log10(harmonic / rest)` in dB,
//! averaged over voiced frames. Lower values mean hoarser, noisier audio.

use std::io::BufWriter;
use std::path::Path;

use crate::error::{Error, Result};
use crate::loss::{ssim, SsimConfig};
use crate::mel::{mel_spectrogram, MelConfig, MelNorm};
use crate::pitch::{estimate_f0, F0Config};
use crate::stft::Stft;
use crate::AudioClip;

/// One row of the metrics CSV: `file,mel_ssim,f0_rmse_hz,hnr_db`.
#[derive(Debug, Clone)]
pub struct MetricsRow {
    pub file: String,
    pub mel_ssim: f64,
    pub f0_rmse_hz: f64,
    pub hnr_db: f64,
}

impl MetricsRow {
    pub const CSV_HEADER: &'static str = "file,mel_ssim,f0_rmse_hz,hnr_db";

    pub fn to_csv_line(&self) -> String {
        format!(
            "{},{:.6},{:.3},{:.3}",
            self.file, self.mel_ssim, self.f0_rmse_hz, self.hnr_db
        )
    }
}

fn trim_to_common(a: &AudioClip, b: &AudioClip, hop: usize) -> Result<(AudioClip, AudioClip)> {
    if a.sample_rate != b.sample_rate {
        return Err(Error::ShapeMismatch {
            what: "metric sample rates",
            expected: a.sample_rate.to_string(),
            got: b.sample_rate.to_string(),
        });
    }
    let diff = a.len().abs_diff(b.len());
    if diff > hop {
        return Err(Error::ShapeMismatch {
            what: "clip lengths",
            expected: format!("{} +/- {hop}", a.len()),
            got: b.len().to_string(),
        });
    }
    let n = a.len().min(b.len());
    Ok((
        AudioClip::new(a.samples[..n].to_vec(), a.sample_rate),
        AudioClip::new(b.samples[..n].to_vec(), b.sample_rate),
    ))
}

/// SSIM between the normalized mels of two clips (durations must agree to
/// within one hop). Symmetric; 1.0 for identical clips.
pub fn mel_ssim_score(a: &AudioClip, b: &AudioClip) -> Result<f64> {
    let cfg = MelConfig {
        sample_rate: a.sample_rate,
        ..MelConfig::default()
    };
    let (a, b) = trim_to_common(a, b, cfg.hop)?;
    let ma = mel_spectrogram(&a, &cfg)?;
    let mb = mel_spectrogram(&b, &cfg)?;
    // One shared normalization so the comparison sees real level differences.
    let norm = MelNorm {
        min: ma.values.min().min(mb.values.min()),
        max: (ma.values.max().max(mb.values.max()) + 1e-9),
    };
    ssim(&ma.normalized(norm), &mb.normalized(norm), &SsimConfig::default())
}

/// RMSE in Hz over frames voiced in both clips.
pub fn f0_rmse(a: &AudioClip, b: &AudioClip) -> Result<f64> {
    let cfg = F0Config {
        sample_rate: a.sample_rate,
        ..F0Config::default()
    };
    let (a, b) = trim_to_common(a, b, cfg.hop)?;
    let fa = estimate_f0(&a, &cfg)?;
    let fb = estimate_f0(&b, &cfg)?;
    let mut acc = 0.0;
    let mut n = 0usize;
    for t in 0..fa.len().min(fb.len()) {
        if fa.voiced[t] && fb.voiced[t] {
            let d = fa.hz[t] - fb.hz[t];
            acc += d * d;
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::NoCommonVoicedFrames);
    }
    Ok((acc / n as f64).sqrt())
}

/// Half-width (in FFT bins) of the band counted as harmonic energy.
const HARMONIC_HALF_WIDTH: usize = 3;
const HNR_WIN: usize = 4096;
const HNR_HOP: usize = 1024;

/// Mean harmonic-to-noise ratio in dB over voiced frames; lower = hoarser.
///
/// Pitch tracking here runs with a permissive voicing threshold: hoarse
/// audio is exactly the input whose periodicity dips would fail the strict
/// feature-extraction threshold, yet it still has a measurable pitch.
pub fn hoarseness_proxy(clip: &AudioClip) -> Result<f64> {
    let f0cfg = F0Config {
        sample_rate: clip.sample_rate,
        threshold: 0.7,
        pick: crate::pitch::DipPick::GlobalMin,
        ..F0Config::default()
    };
    let f0 = estimate_f0(clip, &f0cfg)?;
    if f0.voiced_count() == 0 {
        return Err(Error::NoVoicedFrames("hoarseness_proxy"));
    }
    let stft = Stft::hann(HNR_WIN, HNR_HOP);
    let mags = stft.magnitudes(&clip.samples);
    let bin_hz = clip.sample_rate as f64 / HNR_WIN as f64;
    let f_limit = clip.sample_rate as f64 * 0.45;

    let mut acc = 0.0;
    let mut frames = 0usize;
    for t in 0..mags.rows() {
        // Nearest analysis frame of the pitch contour.
        let f0_idx = ((t * HNR_HOP) / f0cfg.hop).min(f0.len() - 1);
        if !f0.voiced[f0_idx] {
            continue;
        }
        let hz = f0.hz[f0_idx];
        let row = mags.row(t);
        let mut harmonic = 0.0;
        let mut total = 0.0;
        for (b, &m) in row.iter().enumerate() {
            let p = m * m;
            let fhz = b as f64 * bin_hz;
            if fhz > f_limit {
                break;
            }
            total += p;
            let k = (fhz / hz).round().max(1.0);
            let dist = (fhz - k * hz).abs() / bin_hz;
            if dist <= HARMONIC_HALF_WIDTH as f64 {
                harmonic += p;
            }
        }
        let rest = (total - harmonic).max(1e-300);
        if total > 0.0 {
            acc += 10.0 * (harmonic.max(1e-300) / rest).log10();
            frames += 1;
        }
    }
    if frames == 0 {
        return Err(Error::NoVoicedFrames("hoarseness_proxy"));
    }
    Ok(acc / frames as f64)
}

/// Render a log-magnitude spectrogram to a grayscale PNG, low frequencies
/// at the bottom.
pub fn emit_spectrogram(clip: &AudioClip, path: impl AsRef<Path>) -> Result<()> {
    let stft = Stft::hann(2048, 512);
    if clip.len() < 2048 {
        return Err(Error::ClipTooShort {
            need: 2048,
            got: clip.len(),
        });
    }
    let mags = stft.magnitudes(&clip.samples);
    let (frames, bins) = mags.shape();
    let log: Vec<f64> = mags.data().iter().map(|&m| m.max(1e-6).ln()).collect();
    let (lo, hi) = log
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    let range = (hi - lo).max(1e-9);

    let file = std::fs::File::create(path.as_ref())?;
    let mut enc = png::Encoder::new(BufWriter::new(file), frames as u32, bins as u32);
    enc.set_color(png::ColorType::Grayscale);
    enc.set_depth(png::BitDepth::Eight);
    let mut writer = enc.write_header().map_err(png_err)?;
    let mut pixels = vec![0u8; frames * bins];
    for t in 0..frames {
        for b in 0..bins {
            let v = (log[t * bins + b] - lo) / range;
            // Row 0 = highest frequency.
            pixels[(bins - 1 - b) * frames + t] = (v * 255.0).round() as u8;
        }
    }
    writer.write_image_data(&pixels).map_err(png_err)?;
    Ok(())
}

fn png_err(e: png::EncodingError) -> Error {
    Error::Io(std::io::Error::other(e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testsignal::{sine, sing, white_noise, SingSpec};

    #[test]
    fn identical_clips_score_unit_ssim_and_zero_rmse() {
        let clip = sing(&SingSpec::default());
        let s = mel_ssim_score(&clip, &clip).unwrap();
        assert!((s - 1.0).abs() < 1e-6, "{s}");
        assert_eq!(f0_rmse(&clip, &clip).unwrap(), 0.0);
    }

    #[test]
    fn clip_vs_noise_scores_low() {
        let clip = sing(&SingSpec::default());
        let noise = white_noise(0.3, clip.duration_secs(), 44100, 5);
        let s = mel_ssim_score(&clip, &noise).unwrap();
        assert!(s < 0.3, "{s}");
    }

    #[test]
    fn metrics_are_symmetric() {
        let a = sing(&SingSpec::default());
        let b = sing(&SingSpec {
            start_hz: 230.0,
            end_hz: 205.0,
            seed: 9,
            ..SingSpec::default()
        });
        let s1 = mel_ssim_score(&a, &b).unwrap();
        let s2 = mel_ssim_score(&b, &a).unwrap();
        assert!((s1 - s2).abs() < 1e-9);
        let r1 = f0_rmse(&a, &b).unwrap();
        let r2 = f0_rmse(&b, &a).unwrap();
        assert!((r1 - r2).abs() < 1e-9);
    }

    #[test]
    fn octave_shift_shows_up_as_large_rmse() {
        let a = sine(220.0, 0.4, 1.5, 44100);
        let b = sine(440.0, 0.4, 1.5, 44100);
        let r = f0_rmse(&a, &b).unwrap();
        assert!((r - 220.0).abs() < 10.0, "rmse {r}");
    }

    #[test]
    fn pure_sine_has_high_hnr() {
        let clip = sine(440.0, 0.4, 1.5, 44100);
        let hnr = hoarseness_proxy(&clip).unwrap();
        assert!(hnr > 30.0, "hnr {hnr}");
    }

    #[test]
    fn zero_db_snr_mix_has_low_hnr() {
        let tone = sine(440.0, 0.4, 1.5, 44100);
        let noise = white_noise(0.4 * (3f64 / 2.0).sqrt(), 1.5, 44100, 6); // equal power
        let mix = AudioClip::new(
            tone.samples
                .iter()
                .zip(&noise.samples)
                .map(|(a, b)| a + b)
                .collect(),
            44100,
        );
        let hnr = hoarseness_proxy(&mix).unwrap();
        assert!(hnr < 5.0, "hnr {hnr}");
    }

    #[test]
    fn hnr_decreases_monotonically_with_added_noise() {
        let base = sing(&SingSpec {
            breath: 0.0,
            ..SingSpec::default()
        });
        let mut last = f64::INFINITY;
        for level in [0.0f64, 0.1, 0.3] {
            let noise = white_noise(level.max(1e-9), base.duration_secs(), 44100, 7);
            let mix = AudioClip::new(
                base.samples
                    .iter()
                    .zip(&noise.samples)
                    .map(|(a, b)| a + b)
                    .collect(),
                44100,
            );
            let hnr = hoarseness_proxy(&mix).unwrap();
            assert!(hnr < last, "level {level}: {hnr} vs previous {last}");
            last = hnr;
        }
    }

    #[test]
    fn all_unvoiced_input_is_an_error() {
        let quiet = crate::testsignal::silence(1.0, 44100);
        assert!(matches!(
            hoarseness_proxy(&quiet),
            Err(Error::NoVoicedFrames(_))
        ));
    }

    #[test]
    fn spectrogram_files_are_written_and_structured() {
        let dir = tempfile::tempdir().unwrap();

        // Silence: all pixels equal.
        let p1 = dir.path().join("silence.png");
        emit_spectrogram(&crate::testsignal::silence(0.5, 44100), &p1).unwrap();
        assert!(std::fs::metadata(&p1).unwrap().len() > 0);

        // 440 Hz sine: the brightest row should match the tone bin.
        let p2 = dir.path().join("sine.png");
        let clip = sine(440.0, 0.5, 0.7, 44100);
        emit_spectrogram(&clip, &p2).unwrap();
        let decoder = png::Decoder::new(std::io::BufReader::new(std::fs::File::open(&p2).unwrap()));
        let mut reader = decoder.read_info().unwrap();
        let mut buf = vec![0u8; reader.output_buffer_size().unwrap()];
        let info = reader.next_frame(&mut buf).unwrap();
        let (w, h) = (info.width as usize, info.height as usize);
        let row_energy: Vec<u64> = (0..h)
            .map(|r| buf[r * w..(r + 1) * w].iter().map(|&v| v as u64).sum())
            .collect();
        let brightest = row_energy
            .iter()
            .enumerate()
            .max_by_key(|(_, &e)| e)
            .unwrap()
            .0;
        let expected_bin = (440.0_f64 * 2048.0 / 44100.0).round() as usize;
        let expected_row = h - 1 - expected_bin;
        assert!(
            (brightest as isize - expected_row as isize).abs() <= 2,
            "brightest {brightest}, expected {expected_row}"
        );
    }

    #[test]
    fn mismatched_durations_error() {
        let a = sine(220.0, 0.3, 1.0, 44100);
        let b = sine(220.0, 0.3, 1.5, 44100);
        assert!(mel_ssim_score(&a, &b).is_err());
    }
}
