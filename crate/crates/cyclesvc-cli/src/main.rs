//! Batch command-line interface for the cyclesvc pipeline.
//!
//! Subcommands: `preprocess`, `train`, `convert`, `evaluate`, and
//! `synth-corpus` (demo data). Exit codes: 0 success, 1 usage or
//! configuration error, 2 data error, 3 numeric failure. See docs/cli.md.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use cyclesvc::config::PipelineConfig;
use cyclesvc::dataset::FeatureSet;
use cyclesvc::error::{Error, ErrorClass};
use cyclesvc::eval::MetricsRow;

#[derive(Parser)]
#[command(
    name = "cyclesvc",
    about = "Singing voice conversion with cycle pitch-shift training",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Extract features from a directory of <speaker>/<clip>.wav files.
    Preprocess(PreprocessArgs),
    /// Train models on a preprocessed corpus.
    Train(TrainArgs),
    /// Convert a clip (or a CSV manifest of clips) to a target speaker.
    Convert(ConvertArgs),
    /// Compute objective metrics for paired reference/output directories.
    Evaluate(EvaluateArgs),
    /// Generate a synthetic demo corpus of procedural singers.
    SynthCorpus(SynthCorpusArgs),
}

#[derive(Args)]
struct PreprocessArgs {
    /// Directory of <speaker>/<clip>.wav inputs.
    #[arg(long)]
    input: PathBuf,
    /// Output directory for records and stats.json.
    #[arg(long)]
    output: PathBuf,
    /// Pipeline config file (key=value with a `preset`).
    #[arg(long)]
    config: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    /// Preprocessed corpus directory.
    #[arg(long)]
    data: PathBuf,
    /// Pipeline config file.
    #[arg(long)]
    config: PathBuf,
    /// Run directory for checkpoints and the loss log.
    #[arg(long, default_value = "runs/default")]
    run_dir: PathBuf,
    /// Resume from a checkpoint (continues the step counter).
    #[arg(long)]
    resume: Option<PathBuf>,
    /// Override the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Print a progress line every N steps (0 = silent).
    #[arg(long, default_value_t = 50)]
    log_every: usize,
}

#[derive(Args)]
struct ConvertArgs {
    /// Trained checkpoint.
    #[arg(long)]
    checkpoint: PathBuf,
    /// Source wav (single-clip mode).
    #[arg(long, conflicts_with = "manifest")]
    source: Option<PathBuf>,
    /// Target speaker name or 1-based id (single-clip mode).
    #[arg(long)]
    speaker: Option<String>,
    /// Pitch shift in semitones.
    #[arg(long, default_value_t = 0, allow_hyphen_values = true)]
    key: i32,
    /// Output wav path (single-clip mode).
    #[arg(long)]
    output: Option<PathBuf>,
    /// CSV manifest `source,target_speaker,key` (batch mode).
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Output directory (batch mode).
    #[arg(long, default_value = "converted")]
    out_dir: PathBuf,
    /// Shallow diffusion steps.
    #[arg(long, default_value_t = 100)]
    shallow_steps: usize,
    /// Seed for the diffusion and vocoder noise.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Directory of reference wavs.
    #[arg(long)]
    ref_dir: PathBuf,
    /// Directory of output wavs with matching file names.
    #[arg(long)]
    out_dir: PathBuf,
    /// Where to write the metrics CSV.
    #[arg(long, default_value = "metrics.csv")]
    csv: PathBuf,
    /// Also write log-spectrogram PNGs next to the CSV.
    #[arg(long)]
    emit_spectrograms: bool,
}

#[derive(Args)]
struct SynthCorpusArgs {
    /// Output directory, one subdirectory per synthetic singer.
    #[arg(long)]
    output: PathBuf,
    /// Clips per singer.
    #[arg(long, default_value_t = 6)]
    clips: usize,
    /// Clip duration in seconds.
    #[arg(long, default_value_t = 2.2)]
    seconds: f64,
    #[arg(long, default_value_t = 42)]
    seed: u64,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version requests are successes, parse errors usage.
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e.class() {
                ErrorClass::Usage => 1u8,
                ErrorClass::Data => 2u8,
                ErrorClass::Numeric => 3u8,
            })
        }
    }
}

fn run(cli: Cli) -> cyclesvc::Result<()> {
    match cli.command {
        Command::Preprocess(args) => preprocess(args),
        Command::Train(args) => train(args),
        Command::Convert(args) => convert(args),
        Command::Evaluate(args) => evaluate(args),
        Command::SynthCorpus(args) => synth_corpus(args),
    }
}

fn preprocess(args: PreprocessArgs) -> cyclesvc::Result<()> {
    let pipeline = PipelineConfig::from_file(&args.config)?;
    let features = FeatureSet {
        mel: pipeline.mel.clone(),
        f0: pipeline.f0.clone(),
        content: pipeline.content.clone(),
    };
    let summary = cyclesvc::dataset::preprocess_dir(
        &args.input,
        &args.output,
        &features,
        pipeline.min_clip_secs,
    )?;
    for skipped in &summary.skipped_short {
        eprintln!(
            "warning: skipped {} (< {} s)",
            skipped.display(),
            pipeline.min_clip_secs
        );
    }
    println!(
        "wrote {} records for {} speakers to {}",
        summary.written,
        summary.stats.n_speakers(),
        args.output.display()
    );
    Ok(())
}

fn train(args: TrainArgs) -> cyclesvc::Result<()> {
    let mut pipeline = PipelineConfig::from_file(&args.config)?;
    if let Some(seed) = args.seed {
        pipeline.train.seed = seed;
    }
    let log_every = args.log_every;
    let max_steps = pipeline.train.max_steps;
    let started = std::time::Instant::now();
    let mut seen = 0usize;
    let ckpt = cyclesvc::train::train(
        &args.data,
        pipeline,
        &args.run_dir,
        args.resume.as_deref(),
        |out| {
            seen += 1;
            if log_every > 0 && seen % log_every == 0 {
                eprintln!(
                    "step {seen}/{max_steps}  l_cyc {:.4}  l_diff {:.4}  l_total {:.4}  [{:.0?}]",
                    out.l_cyc,
                    out.l_diff,
                    out.l_total,
                    started.elapsed()
                );
            }
        },
    )?;
    println!("final checkpoint: {}", ckpt.display());
    Ok(())
}

fn convert(args: ConvertArgs) -> cyclesvc::Result<()> {
    let models = cyclesvc::train::load_models(&args.checkpoint)?;
    if let Some(manifest) = &args.manifest {
        let outcome = cyclesvc::convert::batch_convert(
            manifest,
            &models,
            &args.out_dir,
            args.shallow_steps,
            args.seed,
        )?;
        println!(
            "converted {} clips ({} failures); metrics at {}",
            outcome.written.len(),
            outcome.failures.len(),
            outcome.metrics_csv.display()
        );
        return Ok(());
    }
    let (Some(source), Some(speaker)) = (&args.source, &args.speaker) else {
        return Err(Error::InvalidArgument(
            "either --manifest or both --source and --speaker are required".into(),
        ));
    };
    let speaker_id = models.stats.speaker_id(speaker)?;
    let clip = cyclesvc::audio::read_wav(source)?;
    let req = cyclesvc::convert::ConversionRequest {
        source: clip,
        target_speaker: speaker_id,
        key: args.key,
        diffusion_k: args.shallow_steps,
        seed: args.seed,
    };
    let out = cyclesvc::convert::convert(&req, &models)?;
    let stem = source
        .file_stem()
        .map(|s| s.to_string_lossy().to_string())
        .unwrap_or_else(|| "clip".into());
    let path = args
        .output
        .unwrap_or_else(|| PathBuf::from(format!("{stem}_spk{speaker_id}_key{}.wav", args.key)));
    cyclesvc::audio::write_wav(&path, &out)?;
    println!("wrote {}", path.display());
    Ok(())
}

fn wav_stems(dir: &Path) -> cyclesvc::Result<Vec<(String, PathBuf)>> {
    let mut out: Vec<(String, PathBuf)> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.extension().map(|e| e == "wav").unwrap_or(false))
        .map(|p| {
            (
                p.file_stem()
                    .map(|s| s.to_string_lossy().to_string())
                    .unwrap_or_default(),
                p,
            )
        })
        .collect();
    out.sort();
    Ok(out)
}

fn evaluate(args: EvaluateArgs) -> cyclesvc::Result<()> {
    use std::io::Write as _;
    let refs = wav_stems(&args.ref_dir)?;
    let outs = wav_stems(&args.out_dir)?;
    let mut csv = std::io::BufWriter::new(std::fs::File::create(&args.csv)?);
    writeln!(csv, "{}", MetricsRow::CSV_HEADER)?;
    let mut pairs = 0usize;
    for (stem, ref_path) in &refs {
        let Some((_, out_path)) = outs.iter().find(|(s, _)| s == stem) else {
            eprintln!("warning: no output matching {stem}");
            continue;
        };
        let a = cyclesvc::audio::read_wav(ref_path)?;
        let b = cyclesvc::audio::read_wav(out_path)?;
        let b = cyclesvc::resample::resample(&b, a.sample_rate)?;
        let row = MetricsRow {
            file: format!("{stem}.wav"),
            mel_ssim: cyclesvc::eval::mel_ssim_score(&a, &b).unwrap_or(f64::NAN),
            f0_rmse_hz: cyclesvc::eval::f0_rmse(&a, &b).unwrap_or(f64::NAN),
            hnr_db: cyclesvc::eval::hoarseness_proxy(&b).unwrap_or(f64::NAN),
        };
        writeln!(csv, "{}", row.to_csv_line())?;
        pairs += 1;
        if args.emit_spectrograms {
            let dir = args.csv.parent().unwrap_or(Path::new("."));
            cyclesvc::eval::emit_spectrogram(&a, dir.join(format!("{stem}_ref.png")))?;
            cyclesvc::eval::emit_spectrogram(&b, dir.join(format!("{stem}_out.png")))?;
        }
    }
    for (stem, _) in &outs {
        if !refs.iter().any(|(s, _)| s == stem) {
            eprintln!("warning: no reference matching {stem}");
        }
    }
    csv.flush()?;
    println!("wrote {} metric rows to {}", pairs, args.csv.display());
    Ok(())
}

fn synth_corpus(args: SynthCorpusArgs) -> cyclesvc::Result<()> {
    cyclesvc::testsignal::write_demo_corpus(
        &args.output,
        &cyclesvc::testsignal::default_singers(),
        args.clips,
        args.seconds,
        args.seed,
    )?;
    println!(
        "wrote {} singers x {} clips to {}",
        cyclesvc::testsignal::default_singers().len(),
        args.clips,
        args.output.display()
    );
    Ok(())
}
