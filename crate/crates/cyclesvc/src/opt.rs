//! AdamW with decoupled weight decay and a step-decay learning-rate schedule.

use crate::mat::Mat;
use crate::nn::Params;

#[derive(Debug, Clone)]
pub struct AdamWConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self {
            lr: 1.5e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
        }
    }
}

/// Multiplicative step decay: `lr * gamma^(step / step_size)`.
pub fn step_lr(base_lr: f64, gamma: f64, step_size: usize, step: usize) -> f64 {
    assert!(step_size > 0);
    base_lr * gamma.powi((step / step_size) as i32)
}

pub struct AdamW {
    pub cfg: AdamWConfig,
    m: Vec<Mat>,
    v: Vec<Mat>,
    t: u64,
}

impl AdamW {
    pub fn new(params: &Params, cfg: AdamWConfig) -> Self {
        let m = params.iter().map(|(_, p)| Mat::zeros(p.rows(), p.cols())).collect();
        let v = params.iter().map(|(_, p)| Mat::zeros(p.rows(), p.cols())).collect();
        Self { cfg, m, v, t: 0 }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }

    /// One update over all parameters. `grads` is aligned with the param
    /// store; `None` entries (parameters untouched by this step's graph)
    /// still receive weight decay but no moment update.
    pub fn step(&mut self, params: &mut Params, grads: &[Option<Mat>], lr: f64) {
        self.t += 1;
        let b1 = self.cfg.beta1;
        let b2 = self.cfg.beta2;
        let bc1 = 1.0 - b1.powi(self.t as i32);
        let bc2 = 1.0 - b2.powi(self.t as i32);

        for (i, (_, p)) in params.iter_mut().enumerate() {
            // Decoupled decay first.
            if self.cfg.weight_decay > 0.0 {
                p.scale_assign(1.0 - lr * self.cfg.weight_decay);
            }
            let Some(g) = grads.get(i).and_then(|g| g.as_ref()) else {
                continue;
            };
            let m = &mut self.m[i];
            let v = &mut self.v[i];
            for ((pd, gd), (md, vd)) in p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.data_mut().iter_mut().zip(v.data_mut()))
            {
                *md = b1 * *md + (1.0 - b1) * gd;
                *vd = b2 * *vd + (1.0 - b2) * gd * gd;
                let mhat = *md / bc1;
                let vhat = *vd / bc2;
                *pd -= lr * mhat / (vhat.sqrt() + self.cfg.eps);
            }
        }
    }

    /// Optimizer state tensors for checkpointing, in parameter order.
    pub fn state(&self) -> (u64, &[Mat], &[Mat]) {
        (self.t, &self.m, &self.v)
    }

    pub fn restore(&mut self, t: u64, m: Vec<Mat>, v: Vec<Mat>) {
        assert_eq!(m.len(), self.m.len());
        assert_eq!(v.len(), self.v.len());
        self.t = t;
        self.m = m;
        self.v = v;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ad::Graph;

    #[test]
    fn adamw_descends_a_quadratic() {
        // minimize (x - 3)^2 elementwise
        let mut params = Params::new();
        let id = params.add("x", Mat::filled(1, 4, 10.0));
        let mut opt = AdamW::new(
            &params,
            AdamWConfig {
                lr: 0.1,
                weight_decay: 0.0,
                ..AdamWConfig::default()
            },
        );
        for _ in 0..500 {
            let mut g = Graph::new();
            let bound = params.bind(&mut g);
            let x = bound.var(id);
            let target = g.constant(Mat::filled(1, 4, 3.0));
            let d = g.sub(x, target);
            let sq = g.mul(d, d);
            let loss = g.mean(sq);
            let mut grads = g.backward(loss);
            let pg = params.grads(&bound, &mut grads);
            opt.step(&mut params, &pg, 0.1);
        }
        for &v in params.value(id).data() {
            assert!((v - 3.0).abs() < 1e-3, "{v}");
        }
    }

    #[test]
    fn step_lr_halves_on_schedule() {
        assert_eq!(step_lr(1.5e-4, 0.5, 10_000, 0), 1.5e-4);
        assert_eq!(step_lr(1.5e-4, 0.5, 10_000, 9_999), 1.5e-4);
        assert_eq!(step_lr(1.5e-4, 0.5, 10_000, 10_000), 0.75e-4);
        assert_eq!(step_lr(1.5e-4, 0.5, 10_000, 20_000), 0.375e-4);
    }

    #[test]
    fn weight_decay_shrinks_untouched_parameters() {
        let mut params = Params::new();
        params.add("x", Mat::filled(1, 1, 1.0));
        let mut opt = AdamW::new(
            &params,
            AdamWConfig {
                weight_decay: 0.1,
                ..AdamWConfig::default()
            },
        );
        opt.step(&mut params, &[None], 1.0);
        let v = params.iter().next().unwrap().1.item();
        assert!((v - 0.9).abs() < 1e-12);
    }
}
