//! Adaptive first-order optimiser with decoupled weight decay.

use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamWConfig {
    pub lr: f64,
    /// 0 disables the first moment.
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdamW {
    pub cfg: AdamWConfig,
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
    pub step: u64,
}

impl AdamW {
    pub fn new(cfg: AdamWConfig, params: &[Tensor]) -> Self {
        let zeros: Vec<Tensor> = params.iter().map(|p| Tensor::zeros(p.raw_dim())).collect();
        Self {
            cfg,
            m: zeros.clone(),
            v: zeros,
            step: 0,
        }
    }

    pub fn update(&mut self, params: &mut [Tensor], grads: &[Tensor]) {
        assert_eq!(params.len(), grads.len());
        self.step += 1;
        let c = self.cfg;
        let bc1 = if c.beta1 > 0.0 { 1.0 - c.beta1.powi(self.step as i32) } else { 1.0 };
        let bc2 = 1.0 - c.beta2.powi(self.step as i32);
        for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            let m = &mut self.m[i];
            let v = &mut self.v[i];
            ndarray::Zip::from(p)
                .and(g)
                .and(m)
                .and(v)
                .for_each(|p, &g, m, v| {
                    *m = c.beta1 * *m + (1.0 - c.beta1) * g;
                    *v = c.beta2 * *v + (1.0 - c.beta2) * g * g;
                    let mh = *m / bc1;
                    let vh = *v / bc2;
                    *p -= c.lr * (mh / (vh.sqrt() + c.eps) + c.weight_decay * *p);
                });
        }
    }
}

/// Scale `grads` in place so their joint L2 norm is at most `max_norm`;
/// returns the norm before clipping.
pub fn clip_global_norm(grads: &mut [Tensor], max_norm: f64) -> f64 {
    let norm = grads.iter().map(|g| g.iter().map(|x| x * x).sum::<f64>()).sum::<f64>().sqrt();
    if max_norm > 0.0 && norm > max_norm {
        let s = max_norm / norm;
        grads.iter_mut().for_each(|g| g.mapv_inplace(|x| x * s));
    }
    norm
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimises_a_quadratic() {
        let mut p = vec![Tensor::from_elem((1, 1, 1, 2), 3.0)];
        let mut opt = AdamW::new(AdamWConfig { lr: 0.05, beta1: 0.0, ..Default::default() }, &p);
        for _ in 0..500 {
            let g = vec![p[0].mapv(|x| 2.0 * x)];
            opt.update(&mut p, &g);
        }
        assert!(p[0].iter().all(|x| x.abs() < 0.1));
    }

    #[test]
    fn clipping_caps_the_norm() {
        let mut g = vec![Tensor::from_elem((1, 1, 1, 4), 1.0)];
        assert_eq!(clip_global_norm(&mut g, 1.0), 2.0);
        assert!((g[0].iter().map(|x| x * x).sum::<f64>() - 1.0).abs() < 1e-12);
    }
}
