//! Training objectives: structural-similarity cycle loss, MSE ablation
//! loss, diffusion noise-prediction loss, and their unweighted sum.
//!
//! SSIM compares mean, variance and covariance statistics with stabilizers
//! `c1 = (k1*L)^2`, `c2 = (k2*L)^2`. Two denominator forms are provided:
//!
//! - [`SsimVariant::Standard`] uses `(sigma_x^2 + sigma_y^2 + c2)` — the
//!   usual SSIM contrast-structure denominator and the default;
//! - [`SsimVariant::SigmaProduct`] uses `(sigma_x * sigma_y + c2)`.
//!
//! Note that the sigma-product form is not self-normalizing: for x == y it
//! evaluates to `(2 sigma^2 + c2) / (sigma^2 + c2)`, approaching 2 on
//! high-variance inputs. It is provided for reproducibility experiments
//! only; the identity `SSIM(x, x) = 1` and the `[-1, 1]` bound hold for
//! the standard variant.
//!
//! Statistics are taken either over sliding Gaussian windows (default,
//! 11 taps, sigma 1.5, treating the mel like an image) or globally over
//! the whole matrix. The window shrinks to fit inputs smaller than the
//! configured size.
//!
//! Everything here is built on the autodiff graph, so each loss has both a
//! plain evaluation wrapper and a graph form usable inside training.

use serde::{Deserialize, Serialize};

use crate::ad::{GradOp, Graph, Var};
use crate::error::{Error, Result};
use crate::mat::Mat;
use crate::mel::MelSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SsimWindow {
    Global,
    Sliding,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SsimVariant {
    Standard,
    SigmaProduct,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SsimConfig {
    pub k1: f64,
    pub k2: f64,
    /// Dynamic range of the inputs (1.0 for mels normalized to [0, 1]).
    pub dynamic_range: f64,
    pub window: SsimWindow,
    pub window_size: usize,
    pub window_sigma: f64,
    pub variant: SsimVariant,
}

impl Default for SsimConfig {
    fn default() -> Self {
        Self {
            k1: 0.01,
            k2: 0.03,
            dynamic_range: 1.0,
            window: SsimWindow::Sliding,
            window_size: 11,
            window_sigma: 1.5,
            variant: SsimVariant::Standard,
        }
    }
}

impl SsimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k1 <= 0.0 || self.k2 <= 0.0 {
            return Err(Error::OutOfRange {
                what: "ssim stabilizers",
                msg: "k1 and k2 must be positive".into(),
            });
        }
        if self.window_size < 3 || self.window_size % 2 == 0 {
            return Err(Error::OutOfRange {
                what: "ssim window_size",
                msg: "must be odd and >= 3".into(),
            });
        }
        Ok(())
    }

    fn c1(&self) -> f64 {
        (self.k1 * self.dynamic_range).powi(2)
    }

    fn c2(&self) -> f64 {
        (self.k2 * self.dynamic_range).powi(2)
    }
}

fn gaussian_kernel(size: usize, sigma: f64) -> Vec<f64> {
    let half = (size / 2) as f64;
    let mut k: Vec<f64> = (0..size)
        .map(|i| (-((i as f64 - half).powi(2)) / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = k.iter().sum();
    for v in &mut k {
        *v /= sum;
    }
    k
}

/// Valid-mode separable 2-D blur with a normalized kernel; a linear map,
/// so its backward pass is the exact transpose (scatter).
struct BlurValidOp {
    kernel: Vec<f64>,
}

fn blur_valid(x: &Mat, kernel: &[f64]) -> Mat {
    let w = kernel.len();
    let (rows, cols) = x.shape();
    assert!(rows >= w && cols >= w, "blur input smaller than kernel");
    // Along columns first.
    let mut tmp = Mat::zeros(rows, cols - w + 1);
    for r in 0..rows {
        let src = x.row(r);
        let dst = tmp.row_mut(r);
        for (j, d) in dst.iter_mut().enumerate() {
            *d = crate::mat::dot(kernel, &src[j..j + w]);
        }
    }
    // Then along rows.
    let mut out = Mat::zeros(rows - w + 1, cols - w + 1);
    for j in 0..out.cols() {
        for i in 0..out.rows() {
            let mut acc = 0.0;
            for (a, kv) in kernel.iter().enumerate() {
                acc += kv * tmp.at(i + a, j);
            }
            out.set(i, j, acc);
        }
    }
    out
}

impl GradOp for BlurValidOp {
    fn backward(&self, grad: &Mat, _out: &Mat, p: &[&Mat]) -> Vec<Option<Mat>> {
        let w = self.kernel.len();
        let (rows, cols) = p[0].shape();
        // Transpose of the row blur: spread along rows.
        let mut tmp = Mat::zeros(rows, cols - w + 1);
        for i in 0..grad.rows() {
            for j in 0..grad.cols() {
                let g = grad.at(i, j);
                if g == 0.0 {
                    continue;
                }
                for (a, kv) in self.kernel.iter().enumerate() {
                    *tmp.row_mut(i + a).get_mut(j).unwrap() += g * kv;
                }
            }
        }
        // Transpose of the column blur: spread along columns.
        let mut dx = Mat::zeros(rows, cols);
        for r in 0..rows {
            let src = tmp.row(r);
            let dst = dx.row_mut(r);
            for (j, &s) in src.iter().enumerate() {
                if s == 0.0 {
                    continue;
                }
                for (b, kv) in self.kernel.iter().enumerate() {
                    dst[j + b] += s * kv;
                }
            }
        }
        vec![Some(dx)]
    }
}

fn blur_var(g: &mut Graph, x: Var, kernel: &[f64]) -> Var {
    let v = blur_valid(g.value(x), kernel);
    g.push(
        v,
        vec![x],
        Box::new(BlurValidOp {
            kernel: kernel.to_vec(),
        }),
    )
}

/// `sqrt(max(x, 0) + eps)`, safe for the sigma-product denominator.
struct SqrtFloorOp;

impl GradOp for SqrtFloorOp {
    fn backward(&self, grad: &Mat, out: &Mat, p: &[&Mat]) -> Vec<Option<Mat>> {
        let mut dx = grad.zip_map(out, |g, o| g * 0.5 / o);
        dx = dx.zip_map(p[0], |d, x| if x > 0.0 { d } else { 0.0 });
        vec![Some(dx)]
    }
}

fn sqrt_floor(g: &mut Graph, x: Var, eps: f64) -> Var {
    let v = g.value(x).map(|v| (v.max(0.0) + eps).sqrt());
    g.push(v, vec![x], Box::new(SqrtFloorOp))
}

/// SSIM between two equally shaped matrices on the graph; returns a scalar
/// node in `[-1, 1]`.
pub fn ssim_graph(g: &mut Graph, x: Var, y: Var, cfg: &SsimConfig) -> Var {
    let shape = g.value(x).shape();
    assert_eq!(shape, g.value(y).shape(), "ssim on mismatched shapes");
    let c1 = cfg.c1();
    let c2 = cfg.c2();

    let stats = |g: &mut Graph, a: Var| -> (Var, Var) {
        // returns (mu, mean_of_square) per window or globally
        match cfg.window {
            SsimWindow::Global => (g.mean(a), {
                let sq = g.mul(a, a);
                g.mean(sq)
            }),
            SsimWindow::Sliding => {
                let (rows, cols) = shape;
                let mut w = cfg.window_size.min(rows).min(cols);
                if w % 2 == 0 {
                    w -= 1;
                }
                let kernel = gaussian_kernel(w.max(1), cfg.window_sigma);
                let mu = blur_var(g, a, &kernel);
                let sq = g.mul(a, a);
                let musq = blur_var(g, sq, &kernel);
                (mu, musq)
            }
        }
    };

    let (mu_x, ex2) = stats(g, x);
    let (mu_y, ey2) = stats(g, y);
    let exy = match cfg.window {
        SsimWindow::Global => {
            let p = g.mul(x, y);
            g.mean(p)
        }
        SsimWindow::Sliding => {
            let (rows, cols) = shape;
            let mut w = cfg.window_size.min(rows).min(cols);
            if w % 2 == 0 {
                w -= 1;
            }
            let kernel = gaussian_kernel(w.max(1), cfg.window_sigma);
            let p = g.mul(x, y);
            blur_var(g, p, &kernel)
        }
    };

    let mu_xx = g.mul(mu_x, mu_x);
    let mu_yy = g.mul(mu_y, mu_y);
    let mu_xy = g.mul(mu_x, mu_y);
    let var_x = g.sub(ex2, mu_xx);
    let var_y = g.sub(ey2, mu_yy);
    let cov = g.sub(exy, mu_xy);

    // (2 mu_x mu_y + c1)(2 cov + c2)
    let l_num = {
        let t = g.mul_scalar(mu_xy, 2.0);
        g.add_scalar(t, c1)
    };
    let cs_num = {
        let t = g.mul_scalar(cov, 2.0);
        g.add_scalar(t, c2)
    };
    let num = g.mul(l_num, cs_num);

    // (mu_x^2 + mu_y^2 + c1) * denominator variant
    let l_den = {
        let t = g.add(mu_xx, mu_yy);
        g.add_scalar(t, c1)
    };
    let cs_den = match cfg.variant {
        SsimVariant::Standard => {
            let t = g.add(var_x, var_y);
            g.add_scalar(t, c2)
        }
        SsimVariant::SigmaProduct => {
            let sx = sqrt_floor(g, var_x, 1e-12);
            let sy = sqrt_floor(g, var_y, 1e-12);
            let t = g.mul(sx, sy);
            g.add_scalar(t, c2)
        }
    };
    let den = g.mul(l_den, cs_den);
    let map = g.div(num, den);
    if g.value(map).len() == 1 {
        map
    } else {
        g.mean(map)
    }
}

/// Cycle-consistency loss `1 - SSIM(x, y)` on the graph.
pub fn cyc_loss_graph(g: &mut Graph, x: Var, y: Var, cfg: &SsimConfig) -> Var {
    let s = ssim_graph(g, x, y, cfg);
    let neg = g.mul_scalar(s, -1.0);
    g.add_scalar(neg, 1.0)
}

/// Mean squared elementwise difference on the graph.
pub fn mse_loss_graph(g: &mut Graph, x: Var, y: Var) -> Var {
    let d = g.sub(x, y);
    let sq = g.mul(d, d);
    g.mean(sq)
}

/// Diffusion noise-prediction loss: the Monte-Carlo squared error between
/// true and predicted noise, reduced by mean over all elements.
pub fn diffusion_loss_graph(g: &mut Graph, eps: Var, eps_pred: Var) -> Var {
    mse_loss_graph(g, eps, eps_pred)
}

fn check_mel_pair(x: &MelSpec, y: &MelSpec) -> Result<()> {
    if !x.values.same_shape(&y.values) {
        return Err(Error::ShapeMismatch {
            what: "mel pair",
            expected: format!("{:?}", x.values.shape()),
            got: format!("{:?}", y.values.shape()),
        });
    }
    Ok(())
}

/// Mean SSIM index between two equally shaped mel spectrograms.
pub fn ssim(x: &MelSpec, y: &MelSpec, cfg: &SsimConfig) -> Result<f64> {
    check_mel_pair(x, y)?;
    cfg.validate()?;
    let mut g = Graph::new();
    let xv = g.constant(x.values.clone());
    let yv = g.constant(y.values.clone());
    let s = ssim_graph(&mut g, xv, yv, cfg);
    Ok(g.value(s).item())
}

/// `1 - ssim(x, y)`; zero iff the SSIM index is one.
pub fn cyc_loss(x: &MelSpec, y: &MelSpec, cfg: &SsimConfig) -> Result<f64> {
    Ok(1.0 - ssim(x, y, cfg)?)
}

/// Mean squared elementwise difference.
pub fn mse_loss(x: &MelSpec, y: &MelSpec) -> Result<f64> {
    check_mel_pair(x, y)?;
    let d = x.values.zip_map(&y.values, |a, b| a - b);
    Ok(d.sq_norm() / d.len() as f64)
}

/// Plain diffusion loss over noise tensors.
pub fn diffusion_loss(eps: &Mat, eps_pred: &Mat) -> Result<f64> {
    if !eps.same_shape(eps_pred) {
        return Err(Error::ShapeMismatch {
            what: "noise pair",
            expected: format!("{:?}", eps.shape()),
            got: format!("{:?}", eps_pred.shape()),
        });
    }
    let d = eps.zip_map(eps_pred, |a, b| a - b);
    Ok(d.sq_norm() / d.len() as f64)
}

/// Unweighted total loss; errors on non-finite inputs.
pub fn total_loss(l_cyc: f64, l_diff: f64) -> Result<f64> {
    if !l_cyc.is_finite() || !l_diff.is_finite() {
        return Err(Error::non_finite("total loss inputs"));
    }
    Ok(l_cyc + l_diff)
}
