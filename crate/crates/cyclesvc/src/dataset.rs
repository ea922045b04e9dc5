//! Corpus preprocessing and the on-disk feature format.
//!
//! A preprocessed corpus directory looks like:
//!
//! ```text
//! out/
//!   stats.json            # shapes, normalization constants, speaker table
//!   records/
//!     <speaker>__<stem>.svcf
//! ```
//!
//! Each `.svcf` record is one clip's aligned features: magic `SVCF`, a
//! schema integer, a JSON header with shapes and the speaker id, then
//! little-endian `f64` arrays — raw log-mel `[n_frames x n_mels]`, F0 in
//! Hz `[n_frames]`, voiced flags as bytes, RMS volume `[n_frames]` and
//! content features `[n_frames x content_dim]`. Mel normalization constants
//! live in `stats.json` (corpus-wide min/max) and are applied at load time.
//!
//! Speaker ids are assigned 1..n by alphabetical order of the speaker
//! directories.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::audio::read_wav;
use crate::content::{align_to_frames, CepstralEncoder, ContentConfig, ContentEncoder, ContentFeatures};
use crate::error::{Error, Result};
use crate::mat::Mat;
use crate::mel::{mel_spectrogram, MelConfig, MelNorm, MelSpec};
use crate::pitch::{estimate_f0, F0Config, F0Contour};
use crate::resample::resample;
use crate::volume::{extract_volume, VolumeContour};
use crate::AudioClip;

const RECORD_MAGIC: &[u8; 4] = b"SVCF";
pub const RECORD_SCHEMA: u32 = 1;

/// Aligned per-frame features for one clip.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureBundle {
    pub stem: String,
    pub speaker_id: u32,
    /// Raw (unnormalized) log-mel.
    pub mel: MelSpec,
    pub f0: F0Contour,
    pub volume: VolumeContour,
    pub content: ContentFeatures,
}

impl FeatureBundle {
    pub fn n_frames(&self) -> usize {
        self.mel.n_frames()
    }
}

/// Extraction settings shared by preprocessing and inference.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct FeatureSet {
    pub mel: MelConfig,
    pub f0: F0Config,
    pub content: ContentConfig,
}

impl FeatureSet {
    pub fn extract(&self, clip: &AudioClip, speaker_id: u32, stem: &str) -> Result<FeatureBundle> {
        let mel = mel_spectrogram(clip, &self.mel)?;
        let f0 = estimate_f0(clip, &self.f0)?;
        let volume = extract_volume(clip, self.mel.hop, self.mel.n_fft)?;
        let at_rate = resample(clip, self.content.sample_rate)?;
        let encoder = CepstralEncoder::new(self.content.clone());
        let content = align_to_frames(&encoder.encode(&at_rate)?, mel.n_frames())?;
        debug_assert_eq!(f0.len(), mel.n_frames());
        debug_assert_eq!(volume.len(), mel.n_frames());
        Ok(FeatureBundle {
            stem: stem.to_string(),
            speaker_id,
            mel,
            f0,
            volume,
            content,
        })
    }
}

/// Corpus-wide constants written next to the records.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct CorpusStats {
    pub schema: u32,
    pub mel_norm: MelNorm,
    /// Speaker name to 1-based id, alphabetical.
    pub speakers: BTreeMap<String, u32>,
    pub n_clips: usize,
    pub features: FeatureSet,
}

impl CorpusStats {
    pub fn n_speakers(&self) -> usize {
        self.speakers.len()
    }

    pub fn speaker_id(&self, name_or_id: &str) -> Result<u32> {
        if let Ok(id) = name_or_id.parse::<u32>() {
            if id >= 1 && id as usize <= self.speakers.len() {
                return Ok(id);
            }
            return Err(Error::UnknownSpeaker(name_or_id.to_string()));
        }
        self.speakers
            .get(name_or_id)
            .copied()
            .ok_or_else(|| Error::UnknownSpeaker(name_or_id.to_string()))
    }
}

#[derive(Serialize, Deserialize)]
struct RecordHeader {
    schema: u32,
    stem: String,
    speaker_id: u32,
    n_frames: usize,
    n_mels: usize,
    content_dim: usize,
    hop: usize,
}

fn write_f64s(w: &mut impl Write, data: &[f64]) -> Result<()> {
    let mut buf = Vec::with_capacity(data.len() * 8);
    for v in data {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

fn read_f64s(r: &mut impl Read, n: usize) -> Result<Vec<f64>> {
    let mut buf = vec![0u8; n * 8];
    r.read_exact(&mut buf)?;
    Ok(buf
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

pub fn write_record(path: impl AsRef<Path>, bundle: &FeatureBundle) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path.as_ref())?);
    let header = RecordHeader {
        schema: RECORD_SCHEMA,
        stem: bundle.stem.clone(),
        speaker_id: bundle.speaker_id,
        n_frames: bundle.n_frames(),
        n_mels: bundle.mel.n_mels(),
        content_dim: bundle.content.dim(),
        hop: bundle.mel.hop,
    };
    let header_json = serde_json::to_vec(&header)?;
    w.write_all(RECORD_MAGIC)?;
    w.write_all(&RECORD_SCHEMA.to_le_bytes())?;
    w.write_all(&(header_json.len() as u32).to_le_bytes())?;
    w.write_all(&header_json)?;
    write_f64s(&mut w, bundle.mel.values.data())?;
    write_f64s(&mut w, &bundle.f0.hz)?;
    let flags: Vec<u8> = bundle.f0.voiced.iter().map(|&v| v as u8).collect();
    w.write_all(&flags)?;
    write_f64s(&mut w, &bundle.volume.rms)?;
    write_f64s(&mut w, bundle.content.values.data())?;
    Ok(())
}

pub fn read_record(path: impl AsRef<Path>) -> Result<FeatureBundle> {
    let path = path.as_ref();
    let corrupt = |msg: &str| Error::Corrupt {
        path: path.to_path_buf(),
        msg: msg.to_string(),
    };
    let mut r = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != RECORD_MAGIC {
        return Err(corrupt("bad magic"));
    }
    let mut u32buf = [0u8; 4];
    r.read_exact(&mut u32buf)?;
    if u32::from_le_bytes(u32buf) != RECORD_SCHEMA {
        return Err(corrupt("unsupported schema"));
    }
    r.read_exact(&mut u32buf)?;
    let hlen = u32::from_le_bytes(u32buf) as usize;
    let mut hbuf = vec![0u8; hlen];
    r.read_exact(&mut hbuf)?;
    let header: RecordHeader = serde_json::from_slice(&hbuf)?;

    let mel_data = read_f64s(&mut r, header.n_frames * header.n_mels)?;
    let hz = read_f64s(&mut r, header.n_frames)?;
    let mut flags = vec![0u8; header.n_frames];
    r.read_exact(&mut flags)?;
    let volume = read_f64s(&mut r, header.n_frames)?;
    let content = read_f64s(&mut r, header.n_frames * header.content_dim)?;

    let bundle = FeatureBundle {
        stem: header.stem,
        speaker_id: header.speaker_id,
        mel: MelSpec {
            values: Mat::from_vec(header.n_frames, header.n_mels, mel_data),
            hop: header.hop,
            norm: None,
        },
        f0: F0Contour {
            hz,
            voiced: flags.iter().map(|&b| b != 0).collect(),
        },
        volume: VolumeContour { rms: volume },
        content: ContentFeatures {
            values: Mat::from_vec(header.n_frames, header.content_dim, content),
        },
    };
    if !bundle.mel.values.all_finite() || !bundle.content.values.all_finite() {
        return Err(corrupt("non-finite features"));
    }
    Ok(bundle)
}

/// Summary of one preprocessing run.
#[derive(Debug)]
pub struct PreprocessSummary {
    pub written: usize,
    pub skipped_short: Vec<PathBuf>,
    pub stats: CorpusStats,
}

/// Preprocess a directory of `<speaker>/<clip>.wav` into records + stats.
pub fn preprocess_dir(
    input_dir: &Path,
    output_dir: &Path,
    features: &FeatureSet,
    min_clip_secs: f64,
) -> Result<PreprocessSummary> {
    let mut speaker_dirs: Vec<(String, PathBuf)> = std::fs::read_dir(input_dir)?
        .filter_map(|e| e.ok())
        .filter(|e| e.path().is_dir())
        .map(|e| (e.file_name().to_string_lossy().to_string(), e.path()))
        .collect();
    speaker_dirs.sort();
    if speaker_dirs.is_empty() {
        return Err(Error::EmptyCorpus(format!(
            "no speaker directories under {}",
            input_dir.display()
        )));
    }
    let speakers: BTreeMap<String, u32> = speaker_dirs
        .iter()
        .enumerate()
        .map(|(i, (name, _))| (name.clone(), i as u32 + 1))
        .collect();

    let records_dir = output_dir.join("records");
    std::fs::create_dir_all(&records_dir)?;

    let mut written = 0usize;
    let mut skipped_short = Vec::new();
    let mut mel_min = f64::INFINITY;
    let mut mel_max = f64::NEG_INFINITY;

    for (name, dir) in &speaker_dirs {
        let speaker_id = speakers[name];
        let mut wavs: Vec<PathBuf> = std::fs::read_dir(dir)?
            .filter_map(|e| e.ok())
            .map(|e| e.path())
            .filter(|p| p.extension().map(|e| e == "wav").unwrap_or(false))
            .collect();
        wavs.sort();
        for wav in wavs {
            let clip = read_wav(&wav)?;
            let clip = resample(&clip, features.mel.sample_rate)?;
            if clip.duration_secs() < min_clip_secs {
                skipped_short.push(wav.clone());
                continue;
            }
            let stem = wav
                .file_stem()
                .map(|s| s.to_string_lossy().to_string())
                .unwrap_or_else(|| "clip".into());
            let bundle = features.extract(&clip, speaker_id, &stem)?;
            mel_min = mel_min.min(bundle.mel.values.min());
            mel_max = mel_max.max(bundle.mel.values.max());
            write_record(records_dir.join(format!("{name}__{stem}.svcf")), &bundle)?;
            written += 1;
        }
    }

    if written == 0 {
        return Err(Error::EmptyCorpus(format!(
            "no usable clips (>= {min_clip_secs} s) under {}",
            input_dir.display()
        )));
    }

    let stats = CorpusStats {
        schema: RECORD_SCHEMA,
        mel_norm: MelNorm {
            min: mel_min,
            max: mel_max + 1e-9,
        },
        speakers,
        n_clips: written,
        features: features.clone(),
    };
    std::fs::write(
        output_dir.join("stats.json"),
        serde_json::to_string_pretty(&stats)?,
    )?;
    Ok(PreprocessSummary {
        written,
        skipped_short,
        stats,
    })
}

/// A preprocessed corpus loaded into memory with its train/test split.
pub struct LoadedCorpus {
    pub stats: CorpusStats,
    pub bundles: Vec<FeatureBundle>,
    pub train_idx: Vec<usize>,
    pub test_idx: Vec<usize>,
}

/// Load records + stats and split ~9:1 per speaker with a seeded shuffle.
pub fn load_corpus(dir: &Path, split_seed: u64) -> Result<LoadedCorpus> {
    let stats: CorpusStats = serde_json::from_str(&std::fs::read_to_string(dir.join("stats.json"))?)?;
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir.join("records"))?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.extension().map(|e| e == "svcf").unwrap_or(false))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::EmptyCorpus(format!("no records under {}", dir.display())));
    }
    let bundles: Vec<FeatureBundle> = paths.iter().map(read_record).collect::<Result<_>>()?;

    let mut train_idx = Vec::new();
    let mut test_idx = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(split_seed);
    for speaker in stats.speakers.values() {
        let mut idx: Vec<usize> = bundles
            .iter()
            .enumerate()
            .filter(|(_, b)| b.speaker_id == *speaker)
            .map(|(i, _)| i)
            .collect();
        idx.shuffle(&mut rng);
        let n = idx.len();
        let n_test = if n >= 2 {
            ((n as f64 / 10.0).round() as usize).max(1)
        } else {
            0
        };
        test_idx.extend(idx.drain(..n_test));
        train_idx.extend(idx);
    }
    train_idx.sort_unstable();
    test_idx.sort_unstable();
    Ok(LoadedCorpus {
        stats,
        bundles,
        train_idx,
        test_idx,
    })
}
