//! Pipeline configuration: presets plus a flat `key=value` config file.
//!
//! A config file names a `preset` (`desk` or `full`) and overrides
//! individual keys. `desk` is sized for CPU experiments; `full` carries
//! the full-scale hyperparameters (44.1 kHz, hop 512, 128 mels, lr 1.5e-4,
//! batch 64, 40k steps, a 20x512 WaveNet, shallow diffusion at 100 steps,
//! cycle keys 6-18, perturbation keys +/-5).
//!
//! Unknown keys, bad values and duplicates are reported with their line
//! number.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::content::ContentConfig;
use crate::error::{Error, Result};
use crate::loss::{SsimConfig, SsimVariant, SsimWindow};
use crate::mel::MelConfig;
use crate::pitch::F0Config;
use crate::vocoder::VocoderConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    Desk,
    Full,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    Ssim,
    Mse,
}

/// Optimization and cycle-strategy settings.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub max_steps: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub weight_decay: f64,
    pub sched_gamma: f64,
    pub sched_step: usize,
    /// Probability that a step runs the two-pass cycle; the rest run the
    /// single-pass +/-5 semitone perturbation step.
    pub cycle_prob: f64,
    pub loss_kind: LossKind,
    pub seed: u64,
    /// Frames per training segment (random crop per clip per step).
    pub segment_frames: usize,
    /// Mel frames trimmed from each segment edge in the cycle loss, where
    /// window bleed differs between a cropped render and the stored mel.
    pub trim_start: usize,
    pub trim_end: usize,
    /// Route the diffusion conditioning gradient into the acoustic model.
    pub detach_hidden: bool,
    /// Probability of zeroing the diffusion conditioning for an item, so
    /// the denoiser keeps an unconditional pathway and degrades gracefully
    /// on out-of-distribution conditioning at inference.
    pub cond_dropout: f64,
    /// Additionally train diffusion on a clean (non-cycle) pass.
    pub diffusion_clean_pass: bool,
    /// Apply the +/-5 perturbation on top of the cycle shift.
    pub compose_perturb: bool,
    pub checkpoint_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 1.5e-4,
            batch_size: 64,
            max_steps: 40_000,
            beta1: 0.9,
            beta2: 0.999,
            weight_decay: 0.01,
            sched_gamma: 0.5,
            sched_step: 10_000,
            cycle_prob: 1.0,
            loss_kind: LossKind::Ssim,
            seed: 42,
            segment_frames: 64,
            trim_start: 2,
            trim_end: 4,
            detach_hidden: false,
            cond_dropout: 0.2,
            diffusion_clean_pass: false,
            compose_perturb: false,
            checkpoint_every: 10_000,
        }
    }
}

impl TrainConfig {
    pub fn desk() -> Self {
        Self {
            lr: 2e-3,
            batch_size: 8,
            max_steps: 2_000,
            sched_step: 500,
            checkpoint_every: 500,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.lr <= 0.0 {
            return Err(Error::OutOfRange {
                what: "lr",
                msg: "must be positive".into(),
            });
        }
        if !(0.0..=1.0).contains(&self.cycle_prob) {
            return Err(Error::OutOfRange {
                what: "cycle_prob",
                msg: "must be in [0, 1]".into(),
            });
        }
        if self.batch_size == 0 || self.max_steps == 0 || self.segment_frames < 8 {
            return Err(Error::OutOfRange {
                what: "train sizes",
                msg: "batch_size, max_steps must be positive; segment_frames >= 8".into(),
            });
        }
        Ok(())
    }
}

/// Everything needed to build, train and run the pipeline.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct PipelineConfig {
    pub preset: Preset,
    pub train: TrainConfig,
    pub mel: MelConfig,
    pub f0: F0Config,
    pub content: ContentConfig,
    pub ssim: SsimConfig,
    pub ddsp_hidden: usize,
    pub ddsp_layers: usize,
    pub synth_win: usize,
    pub denoiser_layers: usize,
    pub denoiser_channels: usize,
    pub diffusion_steps: usize,
    pub beta_start: f64,
    pub beta_end: f64,
    pub shallow_k: usize,
    pub n_harmonics: usize,
    pub noise_gain: f64,
    pub min_clip_secs: f64,
}

impl PipelineConfig {
    pub fn desk() -> Self {
        Self {
            preset: Preset::Desk,
            train: TrainConfig::desk(),
            mel: MelConfig::default(),
            f0: F0Config::default(),
            content: ContentConfig::default(),
            ssim: SsimConfig::default(),
            ddsp_hidden: 64,
            ddsp_layers: 2,
            synth_win: 1024,
            denoiser_layers: 4,
            denoiser_channels: 64,
            diffusion_steps: 1000,
            beta_start: 1e-4,
            beta_end: 0.02,
            shallow_k: 100,
            n_harmonics: 64,
            noise_gain: 0.05,
            min_clip_secs: 2.0,
        }
    }

    pub fn full() -> Self {
        Self {
            preset: Preset::Full,
            train: TrainConfig::default(),
            content: ContentConfig {
                dim: 768,
                ..ContentConfig::default()
            },
            ddsp_hidden: 256,
            ddsp_layers: 3,
            denoiser_layers: 20,
            denoiser_channels: 512,
            ..Self::desk()
        }
    }

    pub fn vocoder(&self) -> VocoderConfig {
        VocoderConfig {
            n_harmonics: self.n_harmonics,
            noise_gain: self.noise_gain,
            sample_rate: self.mel.sample_rate,
            hop: self.mel.hop,
            mel: self.mel.clone(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        self.ssim.validate()?;
        if self.shallow_k > self.diffusion_steps {
            return Err(Error::OutOfRange {
                what: "shallow_k",
                msg: format!(
                    "{} exceeds diffusion_steps {}",
                    self.shallow_k, self.diffusion_steps
                ),
            });
        }
        Ok(())
    }

    /// Parse a flat `key=value` config file.
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        Self::from_str_named(&text, path)
    }

    pub fn from_str_named(text: &str, path: &Path) -> Result<Self> {
        let mut pairs: Vec<(usize, String, String)> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(Error::ConfigParse {
                    path: path.to_path_buf(),
                    line: i + 1,
                    msg: format!("expected key=value, got {line:?}"),
                });
            };
            let key = k.trim().to_string();
            if pairs.iter().any(|(_, pk, _)| *pk == key) {
                return Err(Error::ConfigParse {
                    path: path.to_path_buf(),
                    line: i + 1,
                    msg: format!("duplicate key {key:?}"),
                });
            }
            pairs.push((i + 1, key, v.trim().to_string()));
        }

        let preset = pairs
            .iter()
            .find(|(_, k, _)| k == "preset")
            .ok_or_else(|| Error::ConfigMissing("preset".into()))?;
        let mut cfg = match preset.2.as_str() {
            "desk" => Self::desk(),
            "full" | "paper" => Self::full(),
            other => {
                return Err(Error::ConfigParse {
                    path: path.to_path_buf(),
                    line: preset.0,
                    msg: format!("unknown preset {other:?} (expected desk or full)"),
                })
            }
        };

        for (line, key, value) in &pairs {
            let err = |msg: String| Error::ConfigParse {
                path: path.to_path_buf(),
                line: *line,
                msg,
            };
            let bad = |what: &str| err(format!("invalid {what}: {value:?}"));
            macro_rules! parse {
                ($ty:ty) => {
                    value.parse::<$ty>().map_err(|_| bad(stringify!($ty)))?
                };
            }
            match key.as_str() {
                "preset" => {}
                "seed" => cfg.train.seed = parse!(u64),
                "lr" => cfg.train.lr = parse!(f64),
                "batch_size" => cfg.train.batch_size = parse!(usize),
                "max_steps" => cfg.train.max_steps = parse!(usize),
                "beta1" => cfg.train.beta1 = parse!(f64),
                "beta2" => cfg.train.beta2 = parse!(f64),
                "weight_decay" => cfg.train.weight_decay = parse!(f64),
                "sched_gamma" => cfg.train.sched_gamma = parse!(f64),
                "sched_step" => cfg.train.sched_step = parse!(usize),
                "cycle_prob" => cfg.train.cycle_prob = parse!(f64),
                "segment_frames" => cfg.train.segment_frames = parse!(usize),
                "checkpoint_every" => cfg.train.checkpoint_every = parse!(usize),
                "detach_hidden" => cfg.train.detach_hidden = parse!(bool),
                "cond_dropout" => cfg.train.cond_dropout = parse!(f64),
                "diffusion_clean_pass" => cfg.train.diffusion_clean_pass = parse!(bool),
                "compose_perturb" => cfg.train.compose_perturb = parse!(bool),
                "loss" => {
                    cfg.train.loss_kind = match value.as_str() {
                        "ssim" => LossKind::Ssim,
                        "mse" => LossKind::Mse,
                        _ => return Err(bad("loss (ssim|mse)")),
                    }
                }
                "ssim_window" => {
                    cfg.ssim.window = match value.as_str() {
                        "sliding" => SsimWindow::Sliding,
                        "global" => SsimWindow::Global,
                        _ => return Err(bad("ssim_window (sliding|global)")),
                    }
                }
                "ssim_variant" => {
                    cfg.ssim.variant = match value.as_str() {
                        "standard" => SsimVariant::Standard,
                        "sigma_product" => SsimVariant::SigmaProduct,
                        _ => return Err(bad("ssim_variant (standard|sigma_product)")),
                    }
                }
                "sample_rate" => {
                    let sr = parse!(u32);
                    cfg.mel.sample_rate = sr;
                    cfg.f0.sample_rate = sr;
                }
                "hop" => {
                    let hop = parse!(usize);
                    cfg.mel.hop = hop;
                    cfg.f0.hop = hop;
                }
                "n_mels" => cfg.mel.n_mels = parse!(usize),
                "content_dim" => cfg.content.dim = parse!(usize),
                "hidden" => cfg.ddsp_hidden = parse!(usize),
                "ddsp_layers" => cfg.ddsp_layers = parse!(usize),
                "denoiser_layers" => cfg.denoiser_layers = parse!(usize),
                "denoiser_channels" => cfg.denoiser_channels = parse!(usize),
                "diffusion_steps" => cfg.diffusion_steps = parse!(usize),
                "beta_start" => cfg.beta_start = parse!(f64),
                "beta_end" => cfg.beta_end = parse!(f64),
                "shallow_k" => cfg.shallow_k = parse!(usize),
                "n_harmonics" => cfg.n_harmonics = parse!(usize),
                "noise_gain" => cfg.noise_gain = parse!(f64),
                "min_clip_secs" => cfg.min_clip_secs = parse!(f64),
                other => {
                    return Err(err(format!("unknown config key {other:?}")));
                }
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}
