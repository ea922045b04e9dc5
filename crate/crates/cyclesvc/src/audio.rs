//! Mono audio clips and WAV I/O.
//!
//! [`AudioClip`] is the waveform currency of the whole pipeline: samples are
//! `f64` in nominal `[-1, 1]`, always mono. WAV files are read via `hound`
//! (16-bit and 24-bit PCM plus 32-bit float; multi-channel input is downmixed
//! by averaging) and written as 16-bit PCM.

use std::path::Path;

use crate::error::{Error, Result};

/// A mono waveform with its sample rate and an optional speaker id.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
    pub speaker_id: Option<u32>,
}

impl AudioClip {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Self {
        assert!(sample_rate > 0, "sample_rate must be positive");
        Self {
            samples,
            sample_rate,
            speaker_id: None,
        }
    }

    pub fn with_speaker(mut self, speaker_id: u32) -> Self {
        self.speaker_id = Some(speaker_id);
        self
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    /// Root-mean-square level of the whole clip.
    pub fn rms(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        let sum: f64 = self.samples.iter().map(|s| s * s).sum();
        (sum / self.samples.len() as f64).sqrt()
    }

    /// Error if any sample is NaN or infinite.
    pub fn check_finite(&self) -> Result<()> {
        if self.samples.iter().all(|s| s.is_finite()) {
            Ok(())
        } else {
            Err(Error::non_finite("audio samples"))
        }
    }
}

/// Read a WAV file into a mono clip, averaging channels if needed.
pub fn read_wav(path: impl AsRef<Path>) -> Result<AudioClip> {
    let mut reader = hound::WavReader::open(path.as_ref())?;
    let spec = reader.spec();
    let channels = spec.channels as usize;
    if channels == 0 {
        return Err(Error::Corrupt {
            path: path.as_ref().to_path_buf(),
            msg: "zero channels".into(),
        });
    }

    let interleaved: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (hound::SampleFormat::Float, 32) => reader
            .samples::<f32>()
            .map(|s| s.map(|v| v as f64))
            .collect::<std::result::Result<_, _>>()?,
        (hound::SampleFormat::Int, bits) if bits <= 32 => {
            let scale = (1u64 << (bits - 1)) as f64;
            reader
                .samples::<i32>()
                .map(|s| s.map(|v| v as f64 / scale))
                .collect::<std::result::Result<_, _>>()?
        }
        (fmt, bits) => {
            return Err(Error::Corrupt {
                path: path.as_ref().to_path_buf(),
                msg: format!("unsupported sample format {fmt:?} at {bits} bits"),
            })
        }
    };

    let frames = interleaved.len() / channels;
    let samples = if channels == 1 {
        interleaved
    } else {
        (0..frames)
            .map(|i| {
                interleaved[i * channels..(i + 1) * channels].iter().sum::<f64>()
                    / channels as f64
            })
            .collect()
    };

    Ok(AudioClip::new(samples, spec.sample_rate))
}

/// Write a clip as 16-bit PCM WAV, clamping to `[-1, 1]`.
pub fn write_wav(path: impl AsRef<Path>, clip: &AudioClip) -> Result<()> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: clip.sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut writer = hound::WavWriter::create(path.as_ref(), spec)?;
    for &s in &clip.samples {
        let v = (s.clamp(-1.0, 1.0) * 32767.0).round() as i16;
        writer.write_sample(v)?;
    }
    writer.finalize()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wav_round_trip_is_close_to_16_bit_resolution() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.wav");
        let clip = AudioClip::new(
            (0..2000)
                .map(|n| (2.0 * std::f64::consts::PI * 440.0 * n as f64 / 44100.0).sin() * 0.5)
                .collect(),
            44100,
        );
        write_wav(&path, &clip).unwrap();
        let back = read_wav(&path).unwrap();
        assert_eq!(back.sample_rate, 44100);
        assert_eq!(back.len(), clip.len());
        for (a, b) in clip.samples.iter().zip(&back.samples) {
            assert!((a - b).abs() < 1.0 / 32000.0, "{a} vs {b}");
        }
    }

    #[test]
    fn stereo_is_downmixed_by_averaging() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("st.wav");
        let spec = hound::WavSpec {
            channels: 2,
            sample_rate: 8000,
            bits_per_sample: 16,
            sample_format: hound::SampleFormat::Int,
        };
        let mut w = hound::WavWriter::create(&path, spec).unwrap();
        for _ in 0..100 {
            w.write_sample(16000i16).unwrap();
            w.write_sample(-16000i16).unwrap();
        }
        w.finalize().unwrap();
        let clip = read_wav(&path).unwrap();
        assert_eq!(clip.len(), 100);
        assert!(clip.samples.iter().all(|s| s.abs() < 1e-9));
    }

    #[test]
    fn rms_of_sine_is_amplitude_over_sqrt2() {
        let clip = AudioClip::new(
            (0..44100)
                .map(|n| 0.8 * (2.0 * std::f64::consts::PI * 100.0 * n as f64 / 44100.0).sin())
                .collect(),
            44100,
        );
        assert!((clip.rms() - 0.8 / 2f64.sqrt()).abs() < 1e-3);
    }
}
