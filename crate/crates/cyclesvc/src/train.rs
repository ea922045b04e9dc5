//! The cycle pitch-shift training loop.
//!
//! One cycle step per clip segment:
//!
//! 1. draw a key uniformly from 6..=18 semitones and shift the F0 contour;
//! 2. first pass: synthesize `wav_s` from (content, volume, shifted F0,
//!    speaker) — this pass carries no loss of its own;
//! 3. re-extract content features from `wav_s` under an explicit
//!    stop-gradient (the encoder consumes sample values, not graph nodes);
//! 4. second pass through the same synthesizer at the original F0 yields
//!    `wav_c` and the hidden features `hidden_c`;
//! 5. the cycle loss compares the mel of `wav_c` with the original mel
//!    (structural similarity by default, MSE as the ablation);
//! 6. the diffusion decoder trains on noised original mels conditioned on
//!    `hidden_c`; its noise-prediction loss adds to the total;
//! 7. one optimizer step updates both models.
//!
//! Steps run the single-pass +/-5 semitone perturbation variant instead
//! with probability `1 - cycle_prob` (the non-cycle baseline trains with
//! `cycle_prob = 0`).
//!
//! All randomness derives from `(seed, step)`, so interrupted runs resume
//! bit-identically and two runs with one seed are indistinguishable.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::ad::{Graph, Var};
use crate::audio::AudioClip;
use crate::checkpoint::{self, CheckpointMeta};
use crate::config::{LossKind, PipelineConfig};
use crate::content::{align_to_frames, CepstralEncoder, ContentEncoder, ContentFeatures};
use crate::dataset::{CorpusStats, FeatureBundle, LoadedCorpus};
use crate::ddsp::{AcousticCondition, DdspConfig, DdspModel};
use crate::diffusion::{noise_like, q_sample, Denoiser, DenoiserConfig, DiffusionSchedule};
use crate::error::{Error, Result};
use crate::loss::{cyc_loss_graph, diffusion_loss_graph, mse_loss_graph};
use crate::mat::Mat;
use crate::mel::{MelGraph, MelSpec};
use crate::nn::Bound;
use crate::opt::{step_lr, AdamW, AdamWConfig};
use crate::pitch::{sample_cycle_key, sample_perturb_key, shift_pitch_contour, F0Contour};
use crate::volume::VolumeContour;

/// The acoustic model, the diffusion decoder and everything they share.
pub struct Models {
    pub pipeline: PipelineConfig,
    pub stats: CorpusStats,
    pub ddsp: DdspModel,
    pub denoiser: Denoiser,
    pub schedule: DiffusionSchedule,
}

impl Models {
    pub fn init(pipeline: PipelineConfig, stats: CorpusStats, seed: u64) -> Result<Self> {
        pipeline.validate()?;
        if stats.features.mel.n_mels != pipeline.mel.n_mels
            || stats.features.content.dim != pipeline.content.dim
        {
            return Err(Error::ShapeMismatch {
                what: "corpus feature shapes",
                expected: format!(
                    "{} mels / {} content dims",
                    pipeline.mel.n_mels, pipeline.content.dim
                ),
                got: format!(
                    "{} mels / {} content dims",
                    stats.features.mel.n_mels, stats.features.content.dim
                ),
            });
        }
        let ddsp_cfg = DdspConfig {
            sample_rate: pipeline.mel.sample_rate,
            hop: pipeline.mel.hop,
            synth_win: pipeline.synth_win,
            hidden: pipeline.ddsp_hidden,
            layers: pipeline.ddsp_layers,
            content_dim: pipeline.content.dim,
            n_speakers: stats.n_speakers(),
        };
        let den_cfg = DenoiserConfig {
            in_dim: pipeline.mel.n_mels,
            layers: pipeline.denoiser_layers,
            channels: pipeline.denoiser_channels,
            cond_dim: pipeline.ddsp_hidden,
            t_embed_dim: 128,
        };
        let schedule =
            DiffusionSchedule::linear(pipeline.diffusion_steps, pipeline.beta_start, pipeline.beta_end);
        schedule.check_consistency(1e-9)?;
        Ok(Self {
            ddsp: DdspModel::new(ddsp_cfg, seed.wrapping_mul(2).wrapping_add(1)),
            denoiser: Denoiser::new(den_cfg, seed.wrapping_mul(2).wrapping_add(2)),
            schedule,
            pipeline,
            stats,
        })
    }

    pub fn content_encoder(&self) -> CepstralEncoder {
        CepstralEncoder::new(self.stats.features.content.clone())
    }

    /// Normalize a raw log-mel matrix with the corpus constants (clamped).
    pub fn normalize_mel(&self, raw: &Mat) -> Mat {
        raw.map(|v| self.stats.mel_norm.apply(v).clamp(0.0, 1.0))
    }
}

/// What one training step reports.
#[derive(Debug, Clone)]
pub struct CycleStepOutput {
    /// Pitch-shifted (or perturbed) render from the last batch item.
    pub wav_s: AudioClip,
    /// Restored render from the last batch item.
    pub wav_c: AudioClip,
    /// Normalized mel of `wav_c`.
    pub mel_c: MelSpec,
    pub l_cyc: f64,
    pub l_diff: f64,
    pub l_total: f64,
    pub key: i32,
    pub t: usize,
    /// Whether this step ran the cycle (vs the perturbation baseline).
    pub cycled: bool,
    /// Gradient on the pass-1 render, if any reached it. The stop-gradient
    /// contract keeps this `None`.
    pub wav_s_grad_norm: Option<f64>,
}

struct ItemLosses {
    l_cyc: Var,
    l_diff: Var,
    wav_s: Var,
    wav_c: Var,
    mel_hat: Var,
    key: i32,
    t: usize,
}

fn crop_bundle(
    bundle: &FeatureBundle,
    start: usize,
    len: usize,
) -> (ContentFeatures, VolumeContour, F0Contour, Mat) {
    let end = start + len;
    (
        ContentFeatures {
            values: bundle.content.values.slice_rows(start, end),
        },
        VolumeContour {
            rms: bundle.volume.rms[start..end].to_vec(),
        },
        F0Contour {
            hz: bundle.f0.hz[start..end].to_vec(),
            voiced: bundle.f0.voiced[start..end].to_vec(),
        },
        bundle.mel.values.slice_rows(start, end),
    )
}

pub struct Trainer {
    pub models: Models,
    opt_ddsp: AdamW,
    opt_denoiser: AdamW,
    pub step: usize,
    /// Where non-finite-loss diagnostics are dumped.
    pub dump_dir: Option<PathBuf>,
}

impl Trainer {
    pub fn new(models: Models) -> Self {
        let cfg = &models.pipeline.train;
        let adam = AdamWConfig {
            lr: cfg.lr,
            beta1: cfg.beta1,
            beta2: cfg.beta2,
            eps: 1e-8,
            weight_decay: cfg.weight_decay,
        };
        let opt_ddsp = AdamW::new(&models.ddsp.params, adam.clone());
        let opt_denoiser = AdamW::new(&models.denoiser.params, adam);
        Self {
            models,
            opt_ddsp,
            opt_denoiser,
            step: 0,
            dump_dir: None,
        }
    }

    pub fn current_lr(&self) -> f64 {
        let cfg = &self.models.pipeline.train;
        step_lr(cfg.lr, cfg.sched_gamma, cfg.sched_step, self.step)
    }

    fn step_rng(&self, step: usize) -> ChaCha8Rng {
        let seed = self.models.pipeline.train.seed;
        ChaCha8Rng::seed_from_u64(
            seed.wrapping_mul(0x9E37_79B9_7F4A_7C15)
                .wrapping_add(step as u64),
        )
    }

    /// One optimizer step over a sampled batch. Returns the step log.
    pub fn train_step(&mut self, corpus: &LoadedCorpus) -> Result<CycleStepOutput> {
        let cfg = self.models.pipeline.train.clone();
        let mut rng = self.step_rng(self.step);
        let cycled = rng.random_range(0.0..1.0) < cfg.cycle_prob;
        let indices: Vec<usize> = (0..cfg.batch_size)
            .map(|_| corpus.train_idx[rng.random_range(0..corpus.train_idx.len())])
            .collect();

        let mut acc_ddsp: Vec<Option<Mat>> = (0..self.models.ddsp.params.len()).map(|_| None).collect();
        let mut acc_den: Vec<Option<Mat>> =
            (0..self.models.denoiser.params.len()).map(|_| None).collect();
        let mut sum_cyc = 0.0;
        let mut sum_diff = 0.0;
        let mut last: Option<CycleStepOutput> = None;

        for &idx in &indices {
            let bundle = &corpus.bundles[idx];
            let frames = bundle.n_frames();
            let seg = cfg.segment_frames.min(frames);
            let start = if frames > seg {
                rng.random_range(0..frames - seg)
            } else {
                0
            };
            let key = if cycled {
                let base = sample_cycle_key(&mut rng);
                if cfg.compose_perturb {
                    base + sample_perturb_key(&mut rng)
                } else {
                    base
                }
            } else {
                sample_perturb_key(&mut rng)
            };
            let t = rng.random_range(0..self.models.schedule.len());
            let eps_seed: u64 = rng.random();
            let synth_seed_1: u64 = rng.random();
            let synth_seed_2: u64 = rng.random();
            let drop_cond = rng.random_range(0.0..1.0) < cfg.cond_dropout;

            let mut g = Graph::new();
            let bound_ddsp = self.models.ddsp.params.bind(&mut g);
            let bound_den = self.models.denoiser.params.bind(&mut g);
            let item = if cycled {
                self.cycle_item(
                    &mut g, &bound_ddsp, &bound_den, bundle, start, seg, key, t, eps_seed,
                    [synth_seed_1, synth_seed_2], drop_cond,
                )?
            } else {
                self.baseline_item(
                    &mut g, &bound_ddsp, &bound_den, bundle, start, seg, key, t, eps_seed,
                    synth_seed_1, drop_cond,
                )?
            };

            let l_cyc_v = g.value(item.l_cyc).item();
            let l_diff_v = g.value(item.l_diff).item();
            if !l_cyc_v.is_finite() || !l_diff_v.is_finite() {
                let dump = self.dump_diagnostics(bundle, &item, l_cyc_v, l_diff_v)?;
                return Err(Error::NonFinite {
                    what: "training loss",
                    context: Some(format!(
                        "step {}, clip {}, key {}, t {}{}",
                        self.step,
                        bundle.stem,
                        item.key,
                        item.t,
                        dump.map(|p| format!(", dump at {}", p.display()))
                            .unwrap_or_default()
                    )),
                });
            }
            sum_cyc += l_cyc_v;
            sum_diff += l_diff_v;

            let root = g.add(item.l_cyc, item.l_diff);
            let mut grads = g.backward(root);
            let wav_s_grad_norm = grads.get(item.wav_s).map(|m| m.norm());
            for (slot, got) in acc_ddsp
                .iter_mut()
                .zip(self.models.ddsp.params.grads(&bound_ddsp, &mut grads))
            {
                accumulate(slot, got);
            }
            for (slot, got) in acc_den
                .iter_mut()
                .zip(self.models.denoiser.params.grads(&bound_den, &mut grads))
            {
                accumulate(slot, got);
            }

            last = Some(CycleStepOutput {
                wav_s: AudioClip::new(
                    g.value(item.wav_s).data().to_vec(),
                    self.models.pipeline.mel.sample_rate,
                ),
                wav_c: AudioClip::new(
                    g.value(item.wav_c).data().to_vec(),
                    self.models.pipeline.mel.sample_rate,
                ),
                mel_c: MelSpec {
                    values: g.value(item.mel_hat).clone(),
                    hop: self.models.pipeline.mel.hop,
                    norm: Some(self.models.stats.mel_norm),
                },
                l_cyc: 0.0,
                l_diff: 0.0,
                l_total: 0.0,
                key: item.key,
                t: item.t,
                cycled,
                wav_s_grad_norm,
            });
        }

        let scale = 1.0 / cfg.batch_size as f64;
        for slot in acc_ddsp.iter_mut().chain(acc_den.iter_mut()).flatten() {
            slot.scale_assign(scale);
        }

        let lr = self.current_lr();
        self.opt_ddsp.step(&mut self.models.ddsp.params, &acc_ddsp, lr);
        self.opt_denoiser
            .step(&mut self.models.denoiser.params, &acc_den, lr);
        self.step += 1;

        let l_cyc = sum_cyc * scale;
        let l_diff = sum_diff * scale;
        let mut out = last.expect("batch_size >= 1");
        out.l_cyc = l_cyc;
        out.l_diff = l_diff;
        out.l_total = crate::loss::total_loss(l_cyc, l_diff)?;
        Ok(out)
    }

    /// The two-pass cycle for one segment.
    #[allow(clippy::too_many_arguments)]
    fn cycle_item(
        &self,
        g: &mut Graph,
        bound_ddsp: &Bound,
        bound_den: &Bound,
        bundle: &FeatureBundle,
        start: usize,
        seg: usize,
        key: i32,
        t: usize,
        eps_seed: u64,
        synth_seeds: [u64; 2],
        drop_cond: bool,
    ) -> Result<ItemLosses> {
        let models = &self.models;
        let (content_o, vol_o, f0_o, mel_o_raw) = crop_bundle(bundle, start, seg);
        let f0_s = shift_pitch_contour(&f0_o, key);

        // Pass 1: shifted synthesis. On the graph, but nothing downstream
        // consumes the node, so no gradient ever reaches it.
        let cond1 = AcousticCondition {
            content: &content_o,
            volume: &vol_o,
            f0: &f0_s,
            speaker_id: bundle.speaker_id,
        };
        let (wav_s, _hidden_s) = models.ddsp.forward(g, bound_ddsp, &cond1, &f0_s, synth_seeds[0])?;

        // Stop-gradient: content features are re-extracted from the sample
        // values of the shifted render.
        let wav_s_clip = AudioClip::new(
            g.value(wav_s).data().to_vec(),
            models.pipeline.mel.sample_rate,
        );
        let encoder = models.content_encoder();
        let at_rate = crate::resample::resample(&wav_s_clip, encoder.sample_rate())?;
        let ssl_s = align_to_frames(&encoder.encode(&at_rate)?, seg)?;

        // Pass 2: restore the original pitch from the re-extracted content.
        let cond2 = AcousticCondition {
            content: &ssl_s,
            volume: &vol_o,
            f0: &f0_o,
            speaker_id: bundle.speaker_id,
        };
        let (wav_c, hidden_c) = models.ddsp.forward(g, bound_ddsp, &cond2, &f0_o, synth_seeds[1])?;

        let (l_cyc, mel_hat) = self.recon_loss(g, wav_c, &mel_o_raw, seg)?;
        let l_diff =
            self.diffusion_loss_on(g, bound_den, &mel_o_raw, hidden_c, t, eps_seed, drop_cond)?;
        Ok(ItemLosses {
            l_cyc,
            l_diff,
            wav_s,
            wav_c,
            mel_hat,
            key,
            t,
        })
    }

    /// Single-pass +/-5 semitone perturbation step: reconstruct at the
    /// perturbed pitch against the original mel target.
    #[allow(clippy::too_many_arguments)]
    fn baseline_item(
        &self,
        g: &mut Graph,
        bound_ddsp: &Bound,
        bound_den: &Bound,
        bundle: &FeatureBundle,
        start: usize,
        seg: usize,
        key: i32,
        t: usize,
        eps_seed: u64,
        synth_seed: u64,
        drop_cond: bool,
    ) -> Result<ItemLosses> {
        let models = &self.models;
        let (content_o, vol_o, f0_o, mel_o_raw) = crop_bundle(bundle, start, seg);
        let f0_p = shift_pitch_contour(&f0_o, key);
        let cond = AcousticCondition {
            content: &content_o,
            volume: &vol_o,
            f0: &f0_p,
            speaker_id: bundle.speaker_id,
        };
        let (wav_p, hidden) = models.ddsp.forward(g, bound_ddsp, &cond, &f0_p, synth_seed)?;
        let (l_cyc, mel_hat) = self.recon_loss(g, wav_p, &mel_o_raw, seg)?;
        let l_diff =
            self.diffusion_loss_on(g, bound_den, &mel_o_raw, hidden, t, eps_seed, drop_cond)?;
        Ok(ItemLosses {
            l_cyc,
            l_diff,
            wav_s: wav_p,
            wav_c: wav_p,
            mel_hat,
            key,
            t,
        })
    }

    /// Mel-space reconstruction loss with edge trimming.
    fn recon_loss(&self, g: &mut Graph, wav: Var, mel_o_raw: &Mat, seg: usize) -> Result<(Var, Var)> {
        let models = &self.models;
        let cfg = &models.pipeline.train;
        let mel_graph = MelGraph::new(models.pipeline.mel.clone(), models.stats.mel_norm);
        let mel_hat = mel_graph.apply(g, wav);
        let lo = cfg.trim_start.min(seg / 4);
        let hi = seg - cfg.trim_end.min(seg / 4);
        let mel_hat_trim = g.slice_rows(mel_hat, lo, hi);
        let target = g.constant(models.normalize_mel(&mel_o_raw.slice_rows(lo, hi)));
        let l = match cfg.loss_kind {
            LossKind::Ssim => cyc_loss_graph(g, target, mel_hat_trim, &models.pipeline.ssim),
            LossKind::Mse => mse_loss_graph(g, target, mel_hat_trim),
        };
        Ok((l, mel_hat))
    }

    /// Noise-prediction loss on the original mel, conditioned on hidden
    /// features (optionally detached).
    fn diffusion_loss_on(
        &self,
        g: &mut Graph,
        bound_den: &Bound,
        mel_o_raw: &Mat,
        hidden: Var,
        t: usize,
        eps_seed: u64,
        drop_cond: bool,
    ) -> Result<Var> {
        let models = &self.models;
        let x0 = models.normalize_mel(mel_o_raw);
        let eps = noise_like(x0.rows(), x0.cols(), eps_seed);
        let x_t = q_sample(&x0, t, &eps, &models.schedule)?;
        let x_t = g.constant(x_t);
        let eps_c = g.constant(eps);
        let cond = if drop_cond {
            let (r, c) = g.value(hidden).shape();
            g.constant(Mat::zeros(r, c))
        } else if models.pipeline.train.detach_hidden {
            g.constant(g.value(hidden).clone())
        } else {
            hidden
        };
        let eps_pred = models
            .denoiser
            .forward(g, bound_den, x_t, t, models.schedule.alpha_bars[t], cond)?;
        Ok(diffusion_loss_graph(g, eps_c, eps_pred))
    }

    fn dump_diagnostics(
        &self,
        bundle: &FeatureBundle,
        item: &ItemLosses,
        l_cyc: f64,
        l_diff: f64,
    ) -> Result<Option<PathBuf>> {
        let Some(dir) = &self.dump_dir else {
            return Ok(None);
        };
        std::fs::create_dir_all(dir)?;
        let path = dir.join(format!("nonfinite_step{}.json", self.step));
        let body = serde_json::json!({
            "step": self.step,
            "clip": bundle.stem,
            "speaker_id": bundle.speaker_id,
            "key": item.key,
            "t": item.t,
            "l_cyc": format!("{l_cyc}"),
            "l_diff": format!("{l_diff}"),
        });
        std::fs::write(&path, serde_json::to_string_pretty(&body)?)?;
        Ok(Some(path))
    }

    /// Serialize models + optimizer state.
    pub fn save_checkpoint(&self, path: &Path) -> Result<()> {
        let mut tensors: BTreeMap<String, Mat> = BTreeMap::new();
        for (name, m) in self.models.ddsp.params.iter() {
            tensors.insert(name.to_string(), m.clone());
        }
        for (name, m) in self.models.denoiser.params.iter() {
            tensors.insert(name.to_string(), m.clone());
        }
        let (t1, m1, v1) = self.opt_ddsp.state();
        for ((name, _), (m, v)) in self.models.ddsp.params.iter().zip(m1.iter().zip(v1)) {
            tensors.insert(format!("opt.m.{name}"), m.clone());
            tensors.insert(format!("opt.v.{name}"), v.clone());
        }
        let (_t2, m2, v2) = self.opt_denoiser.state();
        for ((name, _), (m, v)) in self.models.denoiser.params.iter().zip(m2.iter().zip(v2)) {
            tensors.insert(format!("opt.m.{name}"), m.clone());
            tensors.insert(format!("opt.v.{name}"), v.clone());
        }
        let meta = CheckpointMeta {
            schema: checkpoint::SCHEMA,
            step: self.step,
            opt_step: t1,
            pipeline: self.models.pipeline.clone(),
            stats: self.models.stats.clone(),
        };
        checkpoint::save(path, &meta, &tensors)
    }

    /// Restore a trainer (models + optimizer) from a checkpoint.
    pub fn from_checkpoint(path: &Path) -> Result<Self> {
        let ckpt = checkpoint::load(path)?;
        let models = load_models_from(&ckpt)?;
        let mut trainer = Trainer::new(models);
        trainer.step = ckpt.meta.step;

        let restore_opt = |params: &crate::nn::Params, opt: &mut AdamW| -> Result<()> {
            let mut ms = Vec::new();
            let mut vs = Vec::new();
            for (name, value) in params.iter() {
                let m = ckpt.tensors.get(&format!("opt.m.{name}"));
                let v = ckpt.tensors.get(&format!("opt.v.{name}"));
                match (m, v) {
                    (Some(m), Some(v)) if m.shape() == value.shape() => {
                        ms.push(m.clone());
                        vs.push(v.clone());
                    }
                    _ => {
                        return Err(Error::Corrupt {
                            path: path.to_path_buf(),
                            msg: format!("missing optimizer state for {name}"),
                        })
                    }
                }
            }
            opt.restore(ckpt.meta.opt_step, ms, vs);
            Ok(())
        };
        restore_opt(&trainer.models.ddsp.params, &mut trainer.opt_ddsp)?;
        restore_opt(&trainer.models.denoiser.params, &mut trainer.opt_denoiser)?;
        Ok(trainer)
    }
}

fn accumulate(slot: &mut Option<Mat>, got: Option<Mat>) {
    if let Some(got) = got {
        match slot {
            Some(acc) => acc.add_assign(&got),
            empty => *empty = Some(got),
        }
    }
}

/// Rebuild models (without optimizer state) from a loaded checkpoint.
pub fn load_models_from(ckpt: &checkpoint::Checkpoint) -> Result<Models> {
    let mut models = Models::init(ckpt.meta.pipeline.clone(), ckpt.meta.stats.clone(), 0)?;
    let missing = models
        .ddsp
        .params
        .load_named(|name| ckpt.tensors.get(name).cloned());
    let missing2 = models
        .denoiser
        .params
        .load_named(|name| ckpt.tensors.get(name).cloned());
    if !missing.is_empty() || !missing2.is_empty() {
        return Err(Error::Corrupt {
            path: PathBuf::from("checkpoint"),
            msg: format!("missing tensors: {:?} {:?}", missing, missing2),
        });
    }
    Ok(models)
}

/// Load models for inference.
pub fn load_models(path: &Path) -> Result<Models> {
    load_models_from(&checkpoint::load(path)?)
}

/// Full training driver: split the corpus, run `max_steps`, log a CSV row
/// per step, checkpoint periodically, return the final checkpoint path.
pub fn train(
    corpus_dir: &Path,
    pipeline: PipelineConfig,
    run_dir: &Path,
    resume: Option<&Path>,
    mut progress: impl FnMut(&CycleStepOutput),
) -> Result<PathBuf> {
    let corpus = crate::dataset::load_corpus(corpus_dir, pipeline.train.seed)?;
    if corpus.train_idx.is_empty() {
        return Err(Error::EmptyCorpus("empty training split".into()));
    }
    std::fs::create_dir_all(run_dir)?;

    let mut trainer = match resume {
        Some(ckpt) => Trainer::from_checkpoint(ckpt)?,
        None => Trainer::new(Models::init(
            pipeline.clone(),
            corpus.stats.clone(),
            pipeline.train.seed,
        )?),
    };
    trainer.dump_dir = Some(run_dir.to_path_buf());

    let log_path = run_dir.join("loss.csv");
    let fresh = !log_path.exists() || resume.is_none();
    let mut log = std::io::BufWriter::new(if fresh {
        std::fs::File::create(&log_path)?
    } else {
        std::fs::OpenOptions::new().append(true).open(&log_path)?
    });
    if fresh {
        writeln!(log, "step,l_cyc,l_diff,l_total,lr,key,t")?;
    }

    let max_steps = trainer.models.pipeline.train.max_steps;
    let every = trainer.models.pipeline.train.checkpoint_every;
    while trainer.step < max_steps {
        let lr = trainer.current_lr();
        let out = trainer.train_step(&corpus)?;
        writeln!(
            log,
            "{},{:.12},{:.12},{:.12},{:.9},{},{}",
            trainer.step, out.l_cyc, out.l_diff, out.l_total, lr, out.key, out.t
        )?;
        progress(&out);
        if every > 0 && trainer.step % every == 0 && trainer.step < max_steps {
            trainer.save_checkpoint(&run_dir.join(format!("ckpt_{:06}.svck", trainer.step)))?;
        }
    }
    log.flush()?;
    let final_path = run_dir.join("model.svck");
    trainer.save_checkpoint(&final_path)?;
    Ok(final_path)
}
