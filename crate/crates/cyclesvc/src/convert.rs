//! The conversion path: features from a source clip, an optional pitch
//! shift, one synthesizer pass, shallow diffusion refinement of the mel,
//! then the vocoder.
//!
//! Batch mode takes a CSV manifest with header `source,target_speaker,key`,
//! writes one wav per row named `<stem>_spk<id>_key<key>.wav` plus a
//! metrics CSV, and keeps going when individual rows fail.

use std::io::Write as _;
use std::path::{Path, PathBuf};

use crate::content::{align_to_frames, ContentEncoder};
use crate::ddsp::AcousticCondition;
use crate::diffusion::sample_shallow;
use crate::error::{Error, Result};
use crate::eval::MetricsRow;
use crate::mel::{mel_spectrogram, MelSpec};
use crate::pitch::{estimate_f0, shift_pitch_contour};
use crate::resample::resample;
use crate::train::Models;
use crate::volume::extract_volume;
use crate::AudioClip;

/// One conversion job.
#[derive(Debug, Clone)]
pub struct ConversionRequest {
    pub source: AudioClip,
    /// 1-based speaker id in the checkpoint's table.
    pub target_speaker: u32,
    /// Semitones applied to the source pitch.
    pub key: i32,
    /// Shallow diffusion steps (0 skips refinement entirely).
    pub diffusion_k: usize,
    pub seed: u64,
}

impl ConversionRequest {
    pub fn new(source: AudioClip, target_speaker: u32, key: i32) -> Self {
        Self {
            source,
            target_speaker,
            key,
            diffusion_k: 100,
            seed: 0,
        }
    }
}

/// Convert one clip. The output is 44.1 kHz (the pipeline rate) and equals
/// the source duration to within one hop.
pub fn convert(req: &ConversionRequest, models: &Models) -> Result<AudioClip> {
    let pipeline = &models.pipeline;
    if req.target_speaker == 0 || req.target_speaker as usize > models.stats.n_speakers() {
        return Err(Error::UnknownSpeaker(req.target_speaker.to_string()));
    }
    if req.diffusion_k > models.schedule.len() {
        return Err(Error::OutOfRange {
            what: "diffusion_k",
            msg: format!(
                "{} exceeds schedule length {}",
                req.diffusion_k,
                models.schedule.len()
            ),
        });
    }

    let source = resample(&req.source, pipeline.mel.sample_rate)?;
    let features = &models.stats.features;
    let f0_o = estimate_f0(&source, &features.f0)?;
    if f0_o.voiced_count() == 0 {
        eprintln!("warning: source is entirely unvoiced; output will be noise-only");
    }
    let volume = extract_volume(&source, pipeline.mel.hop, pipeline.mel.n_fft)?;
    let encoder = models.content_encoder();
    let at_rate = resample(&source, encoder.sample_rate())?;
    let content = align_to_frames(&encoder.encode(&at_rate)?, f0_o.len())?;

    let f0_s = shift_pitch_contour(&f0_o, req.key);
    let cond = AcousticCondition {
        content: &content,
        volume: &volume,
        f0: &f0_s,
        speaker_id: req.target_speaker,
    };
    let (wav_ddsp, hidden) = models.ddsp.forward_plain(&cond, &f0_s, req.seed)?;

    let mel_raw = mel_spectrogram(&wav_ddsp, &pipeline.mel)?;
    let mel_init = MelSpec {
        values: models.normalize_mel(&mel_raw.values),
        hop: pipeline.mel.hop,
        norm: Some(models.stats.mel_norm),
    };
    let refined = sample_shallow(
        &models.denoiser,
        &mel_init,
        &hidden.values,
        req.diffusion_k,
        &models.schedule,
        req.seed.wrapping_add(1),
    )?;
    let mel_s = MelSpec {
        values: refined,
        hop: pipeline.mel.hop,
        norm: Some(models.stats.mel_norm),
    };
    if !mel_s.values.all_finite() {
        return Err(Error::non_finite("refined mel"));
    }

    let out = crate::vocoder::vocode(&mel_s, &f0_s, &pipeline.vocoder(), req.seed.wrapping_add(2))?;
    out.check_finite()?;
    Ok(out)
}

/// One manifest row.
#[derive(Debug, Clone)]
pub struct ManifestRow {
    pub source: PathBuf,
    pub target_speaker: String,
    pub key: i32,
}

/// Parse a `source,target_speaker,key` CSV manifest.
pub fn read_manifest(path: &Path) -> Result<Vec<ManifestRow>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::Corrupt {
            path: path.to_path_buf(),
            msg: e.to_string(),
        })?;
    let headers = reader
        .headers()
        .map_err(|e| Error::Corrupt {
            path: path.to_path_buf(),
            msg: e.to_string(),
        })?
        .clone();
    let expected = ["source", "target_speaker", "key"];
    if headers.iter().collect::<Vec<_>>() != expected {
        return Err(Error::Corrupt {
            path: path.to_path_buf(),
            msg: format!("manifest header must be {}", expected.join(",")),
        });
    }
    let mut rows = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| Error::Corrupt {
            path: path.to_path_buf(),
            msg: format!("row {}: {e}", i + 2),
        })?;
        let key: i32 = rec[2].parse().map_err(|_| Error::Corrupt {
            path: path.to_path_buf(),
            msg: format!("row {}: bad key {:?}", i + 2, &rec[2]),
        })?;
        rows.push(ManifestRow {
            source: PathBuf::from(&rec[0]),
            target_speaker: rec[1].to_string(),
            key,
        });
    }
    Ok(rows)
}

/// Outcome of a batch conversion.
#[derive(Debug)]
pub struct BatchOutcome {
    pub written: Vec<PathBuf>,
    pub failures: Vec<(ManifestRow, String)>,
    pub metrics_csv: PathBuf,
}

/// Run every manifest row, write wavs + metrics, continue past failures.
pub fn batch_convert(
    manifest: &Path,
    models: &Models,
    out_dir: &Path,
    diffusion_k: usize,
    seed: u64,
) -> Result<BatchOutcome> {
    let rows = read_manifest(manifest)?;
    std::fs::create_dir_all(out_dir)?;
    let metrics_csv = out_dir.join("metrics.csv");
    let mut csv_out = std::io::BufWriter::new(std::fs::File::create(&metrics_csv)?);
    writeln!(csv_out, "{}", MetricsRow::CSV_HEADER)?;

    let mut written = Vec::new();
    let mut failures = Vec::new();
    for row in rows {
        match convert_row(&row, models, out_dir, diffusion_k, seed) {
            Ok((path, metrics)) => {
                writeln!(csv_out, "{}", metrics.to_csv_line())?;
                written.push(path);
            }
            Err(e) => {
                eprintln!("warning: {} failed: {e}", row.source.display());
                failures.push((row, e.to_string()));
            }
        }
    }
    csv_out.flush()?;
    Ok(BatchOutcome {
        written,
        failures,
        metrics_csv,
    })
}

fn convert_row(
    row: &ManifestRow,
    models: &Models,
    out_dir: &Path,
    diffusion_k: usize,
    seed: u64,
) -> Result<(PathBuf, MetricsRow)> {
    let speaker = models.stats.speaker_id(&row.target_speaker)?;
    let source = crate::audio::read_wav(&row.source)?;
    let req = ConversionRequest {
        source: source.clone(),
        target_speaker: speaker,
        key: row.key,
        diffusion_k,
        seed,
    };
    let out = convert(&req, models)?;
    let stem = row
        .source
        .file_stem()
        .map(|s| s.to_string_lossy().to_string())
        .unwrap_or_else(|| "clip".into());
    let name = format!("{stem}_spk{speaker}_key{}.wav", row.key);
    let path = out_dir.join(&name);
    crate::audio::write_wav(&path, &out)?;

    let source_441 = resample(&source, models.pipeline.mel.sample_rate)?;
    let mel_ssim = crate::eval::mel_ssim_score(&source_441, &out).unwrap_or(f64::NAN);
    let f0_rmse = crate::eval::f0_rmse(&source_441, &out).unwrap_or(f64::NAN);
    let hnr = crate::eval::hoarseness_proxy(&out).unwrap_or(f64::NAN);
    Ok((
        path,
        MetricsRow {
            file: name,
            mel_ssim,
            f0_rmse_hz: f0_rmse,
            hnr_db: hnr,
        },
    ))
}
