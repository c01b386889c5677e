//! Conditional velocity network.
//!
//! Frames are stacked as channels, so a clip of `F` RGB frames is one
//! `(N, 3F, H, W)` tensor. The network is
//!
//! ```text
//! h = conv_in(x_t) + fuse([x_deg, x_bg]) + t_proj(emb t) + d_proj(emb d) + c_proj(c)
//! h = h + b(silu(a(silu(h))))        (per residual block)
//! y = out(silu(h)) + skip([x_deg, x_bg])
//! ```
//!
//! `fuse`, `skip` and the three projections start at zero; `skip` is 1x1.
//! With `predict_clean` the head output `y` is a clean-clip estimate and the
//! velocity is `(y - x_t) / max(1 - t, CLEAN_FLOOR)`; otherwise `y` is the
//! velocity.

use std::path::Path;

use ndarray::{Array3, Array4};
use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, Tensor, Var};
use crate::checkpoint;
use crate::error::{Error, Result};
use crate::flowcore::{CondVars, Conditioning, VelocityField};
use crate::nn::{sinusoidal_features, Bound, Conv, Init, ParamStore};
use crate::rng::{stream, tag};

/// Embedding coordinate of the `d = 0` token; grid step sizes map to `[0, 1]`.
pub const INSTANT_TOKEN: f64 = 1.25;

/// Lower bound on `1 - t` in the clean-estimate head.
pub const CLEAN_FLOOR: f64 = 0.05;

fn yes() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub frames: usize,
    pub height: usize,
    pub width: usize,
    pub hidden: usize,
    pub blocks: usize,
    pub n_freq: usize,
    pub k_max: usize,
    pub param_budget: usize,
    /// Temporal 3-D convolutions. Only the stacked-channel layout exists.
    pub conv3d: bool,
    #[serde(default = "yes")]
    pub predict_clean: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            frames: 5,
            height: 32,
            width: 32,
            hidden: 16,
            blocks: 2,
            n_freq: 6,
            k_max: crate::flowcore::DEFAULT_K_MAX,
            param_budget: 500_000,
            conv3d: false,
            predict_clean: true,
        }
    }
}

impl ModelConfig {
    pub fn channels(&self) -> usize {
        3 * self.frames
    }

    pub fn validate(&self) -> Result<()> {
        if self.frames == 0 || self.height == 0 || self.width == 0 || self.hidden == 0 || self.n_freq == 0 {
            return Err(Error::Config("model extents must be positive".into()));
        }
        if self.k_max < 1 {
            return Err(Error::Config("k_max must be >= 1".into()));
        }
        if self.conv3d {
            return Err(Error::Config("3-D temporal convolutions are not available".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct Layers {
    conv_in: Conv,
    fuse: Conv,
    t_proj: Conv,
    d_proj: Conv,
    c_proj: Conv,
    blocks: Vec<(Conv, Conv)>,
    out: Conv,
    skip: Conv,
}

#[derive(Clone, Debug)]
pub struct VelocityModel {
    pub cfg: ModelConfig,
    pub params: ParamStore,
    layers: Layers,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ModelMeta {
    pub kind: String,
    pub config: ModelConfig,
    pub architecture: String,
    pub seed: u64,
    pub iteration: usize,
}

/// Step-size embedding coordinate.
pub fn step_coordinate(d: f64, k_max: usize) -> f64 {
    if d == 0.0 {
        INSTANT_TOKEN
    } else {
        -d.log2() / k_max as f64
    }
}

/// Fresh model; weights come from the `(seed, INIT)` stream.
pub fn init_model(cfg: &ModelConfig, seed: u64) -> Result<VelocityModel> {
    cfg.validate()?;
    let mut rng = stream(seed, &[tag::INIT]);
    let mut s = ParamStore::new();
    let (c, h, e) = (cfg.channels(), cfg.hidden, 2 * cfg.n_freq);
    let layers = Layers {
        conv_in: Conv::new(&mut s, "conv_in", c, h, 3, true, Init::Scaled(1.0), &mut rng),
        fuse: Conv::new(&mut s, "fuse", 2 * c, h, 3, true, Init::Zeros, &mut rng),
        t_proj: Conv::new(&mut s, "t_proj", e, h, 1, true, Init::Zeros, &mut rng),
        d_proj: Conv::new(&mut s, "d_proj", e, h, 1, true, Init::Zeros, &mut rng),
        c_proj: Conv::new(&mut s, "c_proj", crate::annotation::CONDITION_DIM, h, 1, true, Init::Zeros, &mut rng),
        blocks: (0..cfg.blocks)
            .map(|i| {
                (
                    Conv::new(&mut s, &format!("block{i}.a"), h, h, 3, true, Init::Scaled(1.0), &mut rng),
                    Conv::new(&mut s, &format!("block{i}.b"), h, h, 3, true, Init::Scaled(0.5), &mut rng),
                )
            })
            .collect(),
        out: Conv::new(&mut s, "out", h, c, 3, true, Init::Scaled(0.5), &mut rng),
        skip: Conv::new(&mut s, "skip", 2 * c, c, 1, false, Init::Zeros, &mut rng),
    };
    if s.numel() > cfg.param_budget {
        return Err(Error::Config(format!(
            "{} parameters exceed the budget of {}",
            s.numel(),
            cfg.param_budget
        )));
    }
    Ok(VelocityModel {
        cfg: cfg.clone(),
        params: s,
        layers,
    })
}

impl VelocityModel {
    pub fn bind<'a>(&'a self, g: &mut Graph, trainable: bool) -> BoundModel<'a> {
        BoundModel {
            model: self,
            params: Bound::new(g, &self.params, trainable),
        }
    }

    fn check(&self, shape: [usize; 4]) -> Result<()> {
        let want = [self.cfg.channels(), self.cfg.height, self.cfg.width];
        if shape[1..] != want {
            return Err(Error::Shape(format!(
                "model expects (N, {}, {}, {}), got {shape:?}",
                want[0], want[1], want[2]
            )));
        }
        Ok(())
    }

    /// Evaluate the velocity without tracking gradients.
    pub fn predict_velocity(&self, x_t: &Tensor, cond: &Conditioning, t: &[f64], d: &[f64]) -> Result<Tensor> {
        let s = crate::autodiff::shape4(x_t);
        self.check(s)?;
        for other in [&cond.x_deg, &cond.x_bg] {
            if other.shape() != x_t.shape() {
                return Err(Error::Shape(format!("condition {:?} vs x_t {:?}", other.shape(), s)));
            }
        }
        if cond.c.shape() != [s[0], crate::annotation::CONDITION_DIM, 1, 1] || t.len() != s[0] || d.len() != s[0] {
            return Err(Error::Shape("condition vector, t or d do not match the batch".into()));
        }
        let mut g = Graph::new();
        let m = self.bind(&mut g, false);
        let cv = cond.place(&mut g);
        let x = g.constant(x_t.clone());
        let v = m.velocity(&mut g, x, t, d, &cv);
        Ok(g.value(v).clone())
    }

    pub fn save(&self, path: &Path, seed: u64, iteration: usize) -> Result<()> {
        let meta = ModelMeta {
            kind: "velocity_model".into(),
            config: self.cfg.clone(),
            architecture: checkpoint::architecture_hash(&self.params),
            seed,
            iteration,
        };
        checkpoint::save(path, &checkpoint::store_arrays("", &self.params), &meta)
    }

    pub fn load(path: &Path) -> Result<(VelocityModel, ModelMeta)> {
        let (arrays, meta): (_, ModelMeta) = checkpoint::load(path)?;
        let mut model = init_model(&meta.config, 0)?;
        checkpoint::restore_store(path, &arrays, "", &mut model.params)?;
        Ok((model, meta))
    }
}

/// A model whose parameters are placed on a particular graph.
pub struct BoundModel<'a> {
    pub model: &'a VelocityModel,
    pub params: Bound,
}

impl VelocityField for BoundModel<'_> {
    fn velocity(&self, g: &mut Graph, x: Var, t: &[f64], d: &[f64], cond: &CondVars) -> Var {
        let cfg = &self.model.cfg;
        let l = &self.model.layers;
        let p = &self.params;
        let max_freq = 2f64.powi(cfg.n_freq as i32 - 1);
        let tf = g.constant(sinusoidal_features(t, cfg.n_freq, max_freq));
        let dvals: Vec<f64> = d.iter().map(|&d| step_coordinate(d, cfg.k_max)).collect();
        let df = g.constant(sinusoidal_features(&dvals, cfg.n_freq, max_freq));

        let mut h = l.conv_in.forward(g, p, x);
        let pair = g.concat(&[cond.x_deg, cond.x_bg]);
        let fused = l.fuse.forward(g, p, pair);
        h = g.add(h, fused);
        for (layer, input) in [(&l.t_proj, tf), (&l.d_proj, df), (&l.c_proj, cond.c)] {
            let e = layer.forward(g, p, input);
            h = g.add(h, e);
        }
        for (a, b) in &l.blocks {
            let u = g.silu(h);
            let u = a.forward(g, p, u);
            let u = g.silu(u);
            let u = b.forward(g, p, u);
            h = g.add(h, u);
        }
        let h = g.silu(h);
        let y = l.out.forward(g, p, h);
        let carried = l.skip.forward(g, p, pair);
        let y = g.add(y, carried);
        if !cfg.predict_clean {
            return y;
        }
        let inv: Vec<f64> = t.iter().map(|&t| 1.0 / (1.0 - t).max(CLEAN_FLOOR)).collect();
        let inv = g.constant(Array4::from_shape_vec((t.len(), 1, 1, 1), inv).expect("one per sample"));
        let diff = g.sub(y, x);
        g.mul(diff, inv)
    }
}

/// Parameters enter as constants on whatever graph is passed, so the model
/// itself serves as a detached teacher.
impl VelocityField for VelocityModel {
    fn velocity(&self, g: &mut Graph, x: Var, t: &[f64], d: &[f64], cond: &CondVars) -> Var {
        self.bind(g, false).velocity(g, x, t, d, cond)
    }
}

/// `(F, H, W, 3)` video to a `(3F, H, W)` stack, channel `3f + k`.
pub fn video_to_channels(v: &Array4<f32>) -> Array3<f64> {
    let (f, h, w, _) = v.dim();
    Array3::from_shape_fn((3 * f, h, w), |(c, y, x)| f64::from(v[[c / 3, y, x, c % 3]]))
}

pub fn channels_to_video(t: &Tensor, i: usize) -> Array4<f64> {
    let s = t.shape();
    let (f, h, w) = (s[1] / 3, s[2], s[3]);
    Array4::from_shape_fn((f, h, w, 3), |(fi, y, x, k)| t[[i, 3 * fi + k, y, x]])
}

/// Stack per-sample `(3F, H, W)` arrays into a batch.
pub fn stack(items: &[Array3<f64>]) -> Tensor {
    let views: Vec<_> = items.iter().map(|a| a.view().insert_axis(ndarray::Axis(0))).collect();
    ndarray::concatenate(ndarray::Axis(0), &views).expect("equal shapes")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flowcore::standard_normal;

    fn tiny() -> ModelConfig {
        ModelConfig {
            frames: 2,
            height: 4,
            width: 4,
            hidden: 4,
            blocks: 1,
            n_freq: 2,
            k_max: 3,
            param_budget: 5_000,
            conv3d: false,
            predict_clean: true,
        }
    }

    fn cond(rng: &mut impl rand::Rng, n: usize) -> Conditioning {
        Conditioning {
            x_deg: standard_normal(rng, [n, 6, 4, 4]),
            x_bg: standard_normal(rng, [n, 6, 4, 4]),
            c: standard_normal(rng, [n, 23, 1, 1]),
        }
    }

    #[test]
    fn zero_init_ignores_conditioning() {
        let m = init_model(&tiny(), 3).unwrap();
        let mut rng = stream(0, &[]);
        let x = standard_normal(&mut rng, [2, 6, 4, 4]);
        let a = cond(&mut rng, 2);
        let b = cond(&mut rng, 2);
        let va = m.predict_velocity(&x, &a, &[0.3, 0.6], &[0.0, 0.5]).unwrap();
        let vb = m.predict_velocity(&x, &b, &[0.3, 0.6], &[0.0, 0.5]).unwrap();
        assert_eq!(va, vb);
        assert_eq!(va.shape(), x.shape());
    }

    #[test]
    fn budget_and_shape_checks() {
        let mut cfg = tiny();
        cfg.param_budget = 10;
        assert!(init_model(&cfg, 0).is_err());
        let m = init_model(&tiny(), 0).unwrap();
        let mut rng = stream(0, &[]);
        let bad = standard_normal(&mut rng, [1, 3, 4, 4]);
        assert!(m.predict_velocity(&bad, &cond(&mut rng, 1), &[0.5], &[0.0]).is_err());
        assert!(init_model(&ModelConfig::default(), 0).unwrap().params.numel() <= 500_000);
    }

    #[test]
    fn channel_layout_round_trips() {
        let v = Array4::from_shape_fn((2, 3, 3, 3), |(f, y, x, k)| (f * 27 + y * 9 + x * 3 + k) as f32);
        let stacked = stack(&[video_to_channels(&v)]);
        assert_eq!(channels_to_video(&stacked, 0), v.mapv(f64::from));
    }

    #[test]
    fn checkpoint_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let m = init_model(&tiny(), 5).unwrap();
        let p = dir.path().join("m.llab");
        m.save(&p, 5, 12).unwrap();
        let (back, meta) = VelocityModel::load(&p).unwrap();
        assert_eq!(back.params, m.params);
        assert_eq!(meta.iteration, 12);
        assert!(matches!(
            VelocityModel::load(&dir.path().join("none.llab")),
            Err(Error::CheckpointNotFound(_))
        ));
    }
}
