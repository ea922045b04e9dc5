//! The differentiable subtractive synthesizer ("combsub") acoustic model.
//!
//! Condition features (content, volume, F0, speaker) pass through linear
//! projections into a shared hidden sequence, a small stack of gated
//! convolutions produces per-frame hidden features, and three heads emit
//! synthesis controls: a harmonic amplitude, harmonic filter magnitudes and
//! noise filter magnitudes (one magnitude per FFT bin of the synthesis
//! window).
//!
//! Synthesis sums two sources, overlap-added at a 50%-overlap Hann window:
//!
//! - a combtooth source — band-limited sinc pulses placed by integrating
//!   the per-sample F0 — shaped by the harmonic filter and scaled by the
//!   amplitude;
//! - seeded white noise shaped by the noise filter.
//!
//! Both the frequency-domain filtering and the overlap-add are linear, so
//! their backward pass is built from the exact FFT adjoints in [`stft`].
//! The whole forward is one graph; training differentiates through it.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rustfft::num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::ad::{GradOp, Graph, Var};
use crate::content::ContentFeatures;
use crate::error::{Error, Result};
use crate::mat::Mat;
use crate::nn::{Bound, Conv1d, Linear, ParamId, Params};
use crate::pitch::F0Contour;
use crate::stft::{hann, RealFft};
use crate::volume::VolumeContour;
use crate::AudioClip;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct DdspConfig {
    pub sample_rate: u32,
    pub hop: usize,
    /// Synthesis window / FFT length; filters have `synth_win/2 + 1` bins.
    pub synth_win: usize,
    pub hidden: usize,
    pub layers: usize,
    pub content_dim: usize,
    pub n_speakers: usize,
}

impl DdspConfig {
    /// Full-size configuration (hidden 256, 3 gated layers).
    pub fn full(content_dim: usize, n_speakers: usize) -> Self {
        Self {
            sample_rate: 44100,
            hop: 512,
            synth_win: 1024,
            hidden: 256,
            layers: 3,
            content_dim,
            n_speakers,
        }
    }

    /// Desk-scale configuration (hidden 64, 2 gated layers).
    pub fn desk(content_dim: usize, n_speakers: usize) -> Self {
        Self {
            hidden: 64,
            layers: 2,
            ..Self::full(content_dim, n_speakers)
        }
    }

    pub fn filter_bins(&self) -> usize {
        self.synth_win / 2 + 1
    }
}

/// Everything the acoustic model is conditioned on for one clip/segment.
pub struct AcousticCondition<'a> {
    pub content: &'a ContentFeatures,
    pub volume: &'a VolumeContour,
    pub f0: &'a F0Contour,
    /// 1-based speaker id.
    pub speaker_id: u32,
}

impl AcousticCondition<'_> {
    pub fn validate(&self, cfg: &DdspConfig) -> Result<usize> {
        let frames = self.content.n_frames();
        if self.volume.len() != frames || self.f0.len() != frames {
            return Err(Error::ShapeMismatch {
                what: "acoustic condition frames",
                expected: frames.to_string(),
                got: format!("volume {}, f0 {}", self.volume.len(), self.f0.len()),
            });
        }
        if self.content.dim() != cfg.content_dim {
            return Err(Error::ShapeMismatch {
                what: "content dimension",
                expected: cfg.content_dim.to_string(),
                got: self.content.dim().to_string(),
            });
        }
        if self.speaker_id == 0 || self.speaker_id as usize > cfg.n_speakers {
            return Err(Error::UnknownSpeaker(self.speaker_id.to_string()));
        }
        if frames == 0 {
            return Err(Error::EmptyClip);
        }
        Ok(frames)
    }
}

/// Per-frame hidden features handed to the diffusion decoder.
#[derive(Debug, Clone, PartialEq)]
pub struct HiddenFeatures {
    pub values: Mat,
}

/// Per-frame synthesis controls.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthParams {
    pub harmonic_amplitude: Vec<f64>,
    pub harmonic_filter_mags: Mat,
    pub noise_filter_mags: Mat,
}

// ---- combtooth-subtractive synthesis ----

/// Per-sample F0 from a frame contour: linear interpolation between frame
/// centers inside voiced runs, zero elsewhere.
fn f0_per_sample(f0: &F0Contour, hop: usize, len: usize) -> Vec<f64> {
    let frames = f0.len();
    (0..len)
        .map(|n| {
            let pos = n as f64 / hop as f64;
            let t0 = (pos.floor() as usize).min(frames - 1);
            let t1 = (t0 + 1).min(frames - 1);
            let frac = pos - t0 as f64;
            let (a, b) = (f0.hz[t0], f0.hz[t1]);
            if a > 0.0 && b > 0.0 {
                a * (1.0 - frac) + b * frac
            } else if frac < 0.5 {
                a
            } else {
                b
            }
        })
        .collect()
}

/// Band-limited pulse train: a unit sinc at each integer crossing of the
/// integrated phase, zero on unvoiced samples.
fn combtooth(f0_samples: &[f64], sample_rate: u32) -> Vec<f64> {
    let sr = sample_rate as f64;
    let mut phase = 0.0f64;
    f0_samples
        .iter()
        .map(|&f| {
            if f <= 0.0 {
                return 0.0;
            }
            phase += f / sr;
            let x = phase - phase.round();
            let arg = std::f64::consts::PI * sr * x / f;
            if arg.abs() < 1e-9 {
                1.0
            } else {
                arg.sin() / arg
            }
        })
        .collect()
}

/// Precomputed spectra of the two excitation sources for one contour;
/// shared by the plain synthesizer and the graph operation.
pub struct CombSub {
    window: Vec<f64>,
    hop: usize,
    frames: usize,
    out_len: usize,
    fft: RealFft,
    exc_spec: Vec<Vec<Complex<f64>>>,
    noise_spec: Vec<Vec<Complex<f64>>>,
}

impl CombSub {
    pub fn new(f0: &F0Contour, hop: usize, sample_rate: u32, win: usize, noise_seed: u64) -> Self {
        assert!(win % 2 == 0 && win >= 2 * hop, "synthesis window must cover the hop overlap");
        let frames = f0.len();
        let out_len = frames * hop;
        let window = hann(win);
        let fft = RealFft::new(win);

        let f0s = f0_per_sample(f0, hop, out_len);
        let exc = combtooth(&f0s, sample_rate);
        let mut rng = ChaCha8Rng::seed_from_u64(noise_seed);
        let noise: Vec<f64> = (0..out_len).map(|_| rng.random_range(-1.0..1.0)).collect();

        let frame_spectra = |signal: &[f64]| -> Vec<Vec<Complex<f64>>> {
            let mut buf = vec![0.0; win];
            (0..frames)
                .map(|t| {
                    let start = (t * hop) as isize - (win / 2) as isize;
                    for (i, b) in buf.iter_mut().enumerate() {
                        let idx = start + i as isize;
                        *b = if idx >= 0 && (idx as usize) < signal.len() {
                            signal[idx as usize] * window[i]
                        } else {
                            0.0
                        };
                    }
                    fft.forward(&buf)
                })
                .collect()
        };

        let exc_spec = frame_spectra(&exc);
        let noise_spec = frame_spectra(&noise);
        Self {
            window,
            hop,
            frames,
            out_len,
            fft,
            exc_spec,
            noise_spec,
        }
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn bins(&self) -> usize {
        self.fft.bins()
    }

    pub fn out_len(&self) -> usize {
        self.out_len
    }

    fn frame_start(&self, t: usize) -> isize {
        (t * self.hop) as isize - (self.window.len() / 2) as isize
    }

    /// Filter, inverse-transform and overlap-add both branches. Also
    /// returns the per-frame harmonic segments before amplitude scaling
    /// (`[frames x win]`), which the backward pass needs.
    pub fn render(&self, amp: &[f64], harm: &Mat, noise: &Mat) -> (Vec<f64>, Mat) {
        assert_eq!(amp.len(), self.frames);
        assert_eq!(harm.shape(), (self.frames, self.bins()));
        assert_eq!(noise.shape(), (self.frames, self.bins()));
        let win = self.window.len();
        let mut out = vec![0.0; self.out_len];
        let mut harm_segs = Mat::zeros(self.frames, win);
        let mut spec = vec![Complex::new(0.0, 0.0); self.bins()];
        for t in 0..self.frames {
            let (hrow, nrow) = (harm.row(t), noise.row(t));
            for (k, s) in spec.iter_mut().enumerate() {
                *s = self.exc_spec[t][k] * hrow[k];
            }
            let hseg = self.fft.inverse(&spec);
            harm_segs.row_mut(t).copy_from_slice(&hseg);

            for (k, s) in spec.iter_mut().enumerate() {
                *s = self.noise_spec[t][k] * nrow[k];
            }
            let nseg = self.fft.inverse(&spec);

            let start = self.frame_start(t);
            for i in 0..win {
                let idx = start + i as isize;
                if idx >= 0 && (idx as usize) < self.out_len {
                    out[idx as usize] += amp[t] * hseg[i] + nseg[i];
                }
            }
        }
        (out, harm_segs)
    }
}

struct CombSubOp {
    synth: CombSub,
    harm_segs: Mat,
}

impl GradOp for CombSubOp {
    fn backward(&self, grad: &Mat, _out: &Mat, p: &[&Mat]) -> Vec<Option<Mat>> {
        let s = &self.synth;
        let win = s.window.len();
        let bins = s.bins();
        let (amp, harm) = (p[0], p[1]);
        let g = grad.row(0);

        let mut d_amp = Mat::zeros(s.frames, 1);
        let mut d_harm = Mat::zeros(s.frames, bins);
        let mut d_noise = Mat::zeros(s.frames, bins);
        let mut gseg = vec![0.0; win];
        for t in 0..s.frames {
            let start = s.frame_start(t);
            for (i, b) in gseg.iter_mut().enumerate() {
                let idx = start + i as isize;
                *b = if idx >= 0 && (idx as usize) < g.len() {
                    g[idx as usize]
                } else {
                    0.0
                };
            }
            // Amplitude: dot of the gradient segment with the unscaled
            // harmonic segment.
            d_amp.set(t, 0, crate::mat::dot(&gseg, self.harm_segs.row(t)));

            // Filters: adjoint of irfft, then the real part of G * conj(S).
            let gspec = s.fft.adjoint_inverse(&gseg);
            let a = amp.at(t, 0);
            let dh = d_harm.row_mut(t);
            let dn = d_noise.row_mut(t);
            for k in 0..bins {
                dh[k] = a * (gspec[k] * s.exc_spec[t][k].conj()).re;
                dn[k] = (gspec[k] * s.noise_spec[t][k].conj()).re;
            }
        }
        let _ = harm;
        vec![Some(d_amp), Some(d_harm), Some(d_noise)]
    }
}

/// Insert the synthesizer into a graph. `amp` is `[T x 1]`, the filter
/// magnitudes are `[T x bins]`; returns the waveform as `[1 x T*hop]`.
pub fn combsub_graph(g: &mut Graph, synth: CombSub, amp: Var, harm: Var, noise: Var) -> Var {
    let amp_col: Vec<f64> = (0..synth.frames()).map(|t| g.value(amp).at(t, 0)).collect();
    let (wav, harm_segs) = synth.render(&amp_col, g.value(harm), g.value(noise));
    g.push(
        Mat::row_vec(wav),
        vec![amp, harm, noise],
        Box::new(CombSubOp { synth, harm_segs }),
    )
}

/// Plain (non-graph) synthesis from explicit controls.
pub fn combsub_synthesize(
    params: &SynthParams,
    f0: &F0Contour,
    hop: usize,
    sample_rate: u32,
    synth_win: usize,
    noise_seed: u64,
) -> Result<AudioClip> {
    if params.harmonic_amplitude.len() != f0.len()
        || params.harmonic_filter_mags.rows() != f0.len()
        || params.noise_filter_mags.rows() != f0.len()
    {
        return Err(Error::ShapeMismatch {
            what: "synthesis params frames",
            expected: f0.len().to_string(),
            got: params.harmonic_amplitude.len().to_string(),
        });
    }
    let synth = CombSub::new(f0, hop, sample_rate, synth_win, noise_seed);
    let (wav, _) = synth.render(
        &params.harmonic_amplitude,
        &params.harmonic_filter_mags,
        &params.noise_filter_mags,
    );
    Ok(AudioClip::new(wav, sample_rate))
}

// ---- the acoustic model ----

pub struct DdspModel {
    pub cfg: DdspConfig,
    pub params: Params,
    proj_content: Linear,
    proj_volume: Linear,
    proj_f0: Linear,
    unvoiced: ParamId,
    speakers: ParamId,
    convs: Vec<Conv1d>,
    head_amp: Linear,
    head_harm: Linear,
    head_noise: Linear,
}

impl DdspModel {
    pub fn new(cfg: DdspConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Params::new();
        let h = cfg.hidden;
        let proj_content = Linear::new(&mut params, "ddsp.embed.content", cfg.content_dim, h, &mut rng);
        let proj_volume = Linear::new(&mut params, "ddsp.embed.volume", 1, h, &mut rng);
        let proj_f0 = Linear::new(&mut params, "ddsp.embed.f0", 1, h, &mut rng);
        let unvoiced = params.add("ddsp.embed.unvoiced", crate::nn::init_uniform(1, h, h, &mut rng));
        let speakers = params.add(
            "ddsp.embed.speakers",
            crate::nn::init_uniform(cfg.n_speakers, h, h, &mut rng),
        );
        let convs = (0..cfg.layers)
            .map(|l| {
                Conv1d::new(
                    &mut params,
                    &format!("ddsp.net.conv{l}"),
                    h,
                    2 * h,
                    3,
                    1 << (l % 4),
                    &mut rng,
                )
            })
            .collect();
        let bins = cfg.filter_bins();
        let head_amp = Linear::with_bias(&mut params, "ddsp.head.amp", h, 1, -1.0, &mut rng);
        let head_harm = Linear::with_bias(&mut params, "ddsp.head.harm", h, bins, -3.0, &mut rng);
        let head_noise = Linear::with_bias(&mut params, "ddsp.head.noise", h, bins, -6.0, &mut rng);
        Self {
            cfg,
            params,
            proj_content,
            proj_volume,
            proj_f0,
            unvoiced,
            speakers,
            convs,
            head_amp,
            head_harm,
            head_noise,
        }
    }

    /// Sum of projected condition features plus the speaker embedding,
    /// `[T x hidden]`. Unvoiced frames swap the F0 projection for a learned
    /// embedding row.
    pub fn embed_condition(
        &self,
        g: &mut Graph,
        bound: &Bound,
        cond: &AcousticCondition,
    ) -> Result<Var> {
        let frames = cond.validate(&self.cfg)?;
        let h = self.cfg.hidden;

        let content = g.constant(cond.content.values.clone());
        let c = self.proj_content.forward(g, bound, content);

        let vol = g.constant(Mat::col_vec(cond.volume.rms.clone()));
        let v = self.proj_volume.forward(g, bound, vol);

        // log-Hz on voiced frames, masked; unvoiced rows take the learned
        // embedding instead.
        let logf0 = Mat::col_vec(
            cond.f0
                .hz
                .iter()
                .map(|&hz| if hz > 0.0 { (hz / 100.0).ln() } else { 0.0 })
                .collect(),
        );
        let mask = Mat::col_vec(
            cond.f0
                .voiced
                .iter()
                .map(|&v| if v { 1.0 } else { 0.0 })
                .collect(),
        );
        let inv_mask = g.constant(mask.map(|m| 1.0 - m));
        let mask = g.constant(mask);
        let logf0 = g.constant(logf0);
        let f_proj = self.proj_f0.forward(g, bound, logf0);
        let f_voiced = g.broadcast_col_mul(f_proj, mask);
        let zeros = g.constant(Mat::zeros(frames, h));
        let unvoiced_rows = g.broadcast_row_add(zeros, bound.var(self.unvoiced));
        let f_unvoiced = g.broadcast_col_mul(unvoiced_rows, inv_mask);
        let f = g.add(f_voiced, f_unvoiced);

        let spk_idx = cond.speaker_id as usize - 1;
        let spk_row = g.slice_rows(bound.var(self.speakers), spk_idx, spk_idx + 1);

        let cv = g.add(c, v);
        let cvf = g.add(cv, f);
        Ok(g.broadcast_row_add(cvf, spk_row))
    }

    /// Gated convolution stack with residual connections.
    fn frame_net(&self, g: &mut Graph, bound: &Bound, embed: Var) -> Var {
        let h = self.cfg.hidden;
        let mut x = embed;
        for conv in &self.convs {
            let y = conv.forward(g, bound, x);
            let a = g.slice_cols(y, 0, h);
            let b = g.slice_cols(y, h, 2 * h);
            let ta = g.tanh(a);
            let sb = g.sigmoid(b);
            let z = g.mul(ta, sb);
            x = g.add(x, z);
        }
        x
    }

    /// Hidden features and synthesis controls for a condition.
    pub fn controls(
        &self,
        g: &mut Graph,
        bound: &Bound,
        cond: &AcousticCondition,
    ) -> Result<(Var, Var, Var, Var)> {
        let embed = self.embed_condition(g, bound, cond)?;
        let hidden = self.frame_net(g, bound, embed);
        let amp_lin = self.head_amp.forward(g, bound, hidden);
        let amp = g.softplus(amp_lin, 1e-7);
        let harm_lin = self.head_harm.forward(g, bound, hidden);
        let harm = g.softplus(harm_lin, 1e-7);
        let noise_lin = self.head_noise.forward(g, bound, hidden);
        let noise = g.softplus(noise_lin, 1e-7);
        Ok((hidden, amp, harm, noise))
    }

    /// Full forward pass on a graph: synthesize the waveform for
    /// `f0_synth` (which may differ from the condition's F0 during cycle
    /// training) and return `(waveform, hidden)` vars.
    pub fn forward(
        &self,
        g: &mut Graph,
        bound: &Bound,
        cond: &AcousticCondition,
        f0_synth: &F0Contour,
        noise_seed: u64,
    ) -> Result<(Var, Var)> {
        let frames = cond.validate(&self.cfg)?;
        if f0_synth.len() != frames {
            return Err(Error::ShapeMismatch {
                what: "synthesis F0 frames",
                expected: frames.to_string(),
                got: f0_synth.len().to_string(),
            });
        }
        let (hidden, amp, harm, noise) = self.controls(g, bound, cond)?;
        let synth = CombSub::new(
            f0_synth,
            self.cfg.hop,
            self.cfg.sample_rate,
            self.cfg.synth_win,
            noise_seed,
        );
        let wav = combsub_graph(g, synth, amp, harm, noise);
        Ok((wav, hidden))
    }

    /// Inference-mode forward: no gradients, plain outputs.
    pub fn forward_plain(
        &self,
        cond: &AcousticCondition,
        f0_synth: &F0Contour,
        noise_seed: u64,
    ) -> Result<(AudioClip, HiddenFeatures)> {
        let mut g = Graph::new();
        let bound = self.params.bind_frozen(&mut g);
        let (wav, hidden) = self.forward(&mut g, &bound, cond, f0_synth, noise_seed)?;
        let clip = AudioClip::new(g.value(wav).data().to_vec(), self.cfg.sample_rate);
        let hf = HiddenFeatures {
            values: g.value(hidden).clone(),
        };
        if !clip.samples.iter().all(|s| s.is_finite()) || !hf.values.all_finite() {
            return Err(Error::non_finite("ddsp forward"));
        }
        Ok((clip, hf))
    }
}
