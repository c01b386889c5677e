//! Flow-matching primitives and path-consistency (shortcut) targets.
//!
//! Data tensors are NCHW with the frames of a clip stacked as channels.
//! Step sizes live on the dyadic grid `{2^-k : 0 <= k <= k_max}`; the value
//! `d = 0` is the token for the instantaneous (plain flow) velocity.

use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::autodiff::{shape4, Graph, Tensor, Var};
use crate::error::{Error, Result};

pub const DEFAULT_K_MAX: usize = 7;
/// Tolerance on `t + d <= 1`.
const STEP_EPS: f64 = 1e-12;

/// Conditioning signals placed on a graph as constants.
#[derive(Clone, Copy, Debug)]
pub struct CondVars {
    pub x_deg: Var,
    pub x_bg: Var,
    /// `(N, 23, 1, 1)` condition vector.
    pub c: Var,
}

/// Conditioning tensors of a batch.
#[derive(Clone, Debug, PartialEq)]
pub struct Conditioning {
    pub x_deg: Tensor,
    pub x_bg: Tensor,
    pub c: Tensor,
}

impl Conditioning {
    pub fn place(&self, g: &mut Graph) -> CondVars {
        CondVars {
            x_deg: g.constant(self.x_deg.clone()),
            x_bg: g.constant(self.x_bg.clone()),
            c: g.constant(self.c.clone()),
        }
    }

    pub fn batch(&self) -> usize {
        self.x_deg.shape()[0]
    }

    /// Rows `idx` of every tensor.
    pub fn select(&self, idx: &[usize]) -> Conditioning {
        Conditioning {
            x_deg: select_rows(&self.x_deg, idx),
            x_bg: select_rows(&self.x_bg, idx),
            c: select_rows(&self.c, idx),
        }
    }
}

pub fn select_rows(t: &Tensor, idx: &[usize]) -> Tensor {
    t.select(ndarray::Axis(0), idx)
}

/// A step-size conditioned velocity field `v(x, t, d | cond)` evaluated on a
/// graph. Implementations holding handles into one graph must only be
/// called with that graph.
pub trait VelocityField {
    fn velocity(&self, g: &mut Graph, x: Var, t: &[f64], d: &[f64], cond: &CondVars) -> Var;
}

/// Everything the three losses consume for one batch.
#[derive(Clone, Debug)]
pub struct FlowBatch {
    pub x0: Tensor,
    pub x1: Tensor,
    pub x_t: Tensor,
    pub t: Vec<f64>,
    pub d: Vec<f64>,
    pub cond: Conditioning,
}

fn same_shape(a: &Tensor, b: &Tensor, what: &str) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::Shape(format!(
            "{what}: {:?} vs {:?}",
            a.shape(),
            b.shape()
        )));
    }
    Ok(())
}

/// `x_t = t * x1 + (1 - t) * x0`, with one `t` per sample.
pub fn interpolate(x0: &Tensor, x1: &Tensor, t: &[f64]) -> Result<Tensor> {
    same_shape(x0, x1, "interpolate")?;
    if t.len() != x0.shape()[0] {
        return Err(Error::Shape(format!(
            "{} times for a batch of {}",
            t.len(),
            x0.shape()[0]
        )));
    }
    let mut out = x0.clone();
    for (i, &ti) in t.iter().enumerate() {
        let mut o = out.index_axis_mut(ndarray::Axis(0), i);
        let a = x1.index_axis(ndarray::Axis(0), i);
        o.zip_mut_with(&a, |o, a| *o = ti * *a + (1.0 - ti) * *o);
    }
    Ok(out)
}

/// `v = x1 - x0`.
pub fn velocity_target(x0: &Tensor, x1: &Tensor) -> Result<Tensor> {
    same_shape(x0, x1, "velocity_target")?;
    Ok(x1 - x0)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LogitNormal {
    pub mu: f64,
    pub sigma: f64,
}

impl Default for LogitNormal {
    fn default() -> Self {
        Self { mu: 0.0, sigma: 1.0 }
    }
}

pub fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// `t = sigmoid(z)`, `z ~ N(mu, sigma^2)`, kept strictly inside `(0, 1)`.
pub fn sample_time(rng: &mut impl Rng, p: LogitNormal) -> f64 {
    let z = Normal::new(p.mu, p.sigma).expect("sigma > 0").sample(rng);
    sigmoid(z).clamp(f64::EPSILON, 1.0 - f64::EPSILON)
}

pub fn dyadic(k: usize) -> f64 {
    0.5f64.powi(k as i32)
}

/// `d = 2^-k` with `k` uniform on `0..=k_max`.
pub fn sample_stepsize(rng: &mut impl Rng, k_max: usize) -> Result<f64> {
    if k_max < 1 {
        return Err(Error::Config("k_max must be >= 1".into()));
    }
    Ok(dyadic(rng.gen_range(0..=k_max)))
}

/// Step size of a consistency pair: `k` uniform on `1..=k_max`, so that
/// the doubled step `2d` is also on the grid.
pub fn sample_pair_stepsize(rng: &mut impl Rng, k_max: usize) -> Result<f64> {
    if k_max < 1 {
        return Err(Error::Config("k_max must be >= 1".into()));
    }
    Ok(dyadic(rng.gen_range(1..=k_max)))
}

/// Start time for a pair of steps `d`: a logit-normal draw rounded down to
/// a multiple of `2d`, so the pair ends at or before 1.
pub fn sample_pair_time(rng: &mut impl Rng, p: LogitNormal, d: f64) -> f64 {
    let t = sample_time(rng, p);
    ((t / (2.0 * d)).floor() * 2.0 * d).min(1.0 - 2.0 * d).max(0.0)
}

pub fn is_on_grid(d: f64, k_max: usize) -> bool {
    (0..=k_max).any(|k| dyadic(k) == d)
}

fn check_step(t: &[f64], d: &[f64], factor: f64) -> Result<()> {
    for (ti, di) in t.iter().zip(d) {
        if ti + factor * di > 1.0 + STEP_EPS {
            return Err(Error::Step(format!(
                "t + {factor}d = {} exceeds 1 (t = {ti}, d = {di})",
                ti + factor * di
            )));
        }
    }
    Ok(())
}

/// `x_{t+d} = x_t + d * v(x_t, t, d)` on the graph.
pub fn euler_step(
    field: &dyn VelocityField,
    g: &mut Graph,
    x_t: Var,
    t: &[f64],
    d: &[f64],
    cond: &CondVars,
) -> Result<Var> {
    check_step(t, d, 1.0)?;
    let v = field.velocity(g, x_t, t, d, cond);
    let dt = g.constant(per_sample(d, g.shape(x_t)[0]));
    let step = g.mul(v, dt);
    Ok(g.add(x_t, step))
}

/// `(N, 1, 1, 1)` tensor of per-sample scalars.
pub fn per_sample(values: &[f64], n: usize) -> Tensor {
    assert_eq!(values.len(), n);
    Tensor::from_shape_fn((n, 1, 1, 1), |(i, _, _, _)| values[i])
}

/// Detached self-teacher for a step of `2d`:
/// `0.5 * [v(x_t, t, d') + v(x_{t+d}, t + d, d')]`, where `x_{t+d}` comes from
/// an Euler step of size `d` and `d'` is the step token the teacher is
/// conditioned on (normally `d` itself).
pub fn shortcut_target_with_token(
    field: &dyn VelocityField,
    x_t: &Tensor,
    t: &[f64],
    d: &[f64],
    token: &[f64],
    cond: &Conditioning,
) -> Result<Tensor> {
    check_step(t, d, 2.0)?;
    let mut g = Graph::new();
    let cv = cond.place(&mut g);
    let x = g.constant(x_t.clone());
    let v1 = field.velocity(&mut g, x, t, token, &cv);
    let dt = g.constant(per_sample(d, x_t.shape()[0]));
    let step = g.mul(v1, dt);
    let x_mid = g.add(x, step);
    let t_mid: Vec<f64> = t.iter().zip(d).map(|(a, b)| a + b).collect();
    let v2 = field.velocity(&mut g, x_mid, &t_mid, token, &cv);
    let sum = g.add(v1, v2);
    let avg = g.scale(sum, 0.5);
    Ok(g.value(avg).clone())
}

pub fn shortcut_target(
    field: &dyn VelocityField,
    x_t: &Tensor,
    t: &[f64],
    d: &[f64],
    cond: &Conditioning,
) -> Result<Tensor> {
    shortcut_target_with_token(field, x_t, t, d, d, cond)
}

/// Mean squared error between a prediction and a constant target.
pub fn mse(g: &mut Graph, pred: Var, target: &Tensor) -> Var {
    let t = g.constant(target.clone());
    let diff = g.sub(pred, t);
    let sq = g.square(diff);
    g.mean(sq)
}

fn check_steps(steps: usize, k_max: usize) -> Result<()> {
    if steps == 0 || !steps.is_power_of_two() || steps > 1usize << k_max {
        return Err(Error::Config(format!(
            "step budget {steps} must be a power of two in [1, {}]",
            1usize << k_max
        )));
    }
    Ok(())
}

/// `steps` Euler steps of size `1/steps` from `x0` on graph `g`;
/// differentiable with respect to everything the field depends on.
pub fn sample_on_graph(
    field: &dyn VelocityField,
    g: &mut Graph,
    x0: Var,
    steps: usize,
    k_max: usize,
    cond: &CondVars,
) -> Result<Var> {
    check_steps(steps, k_max)?;
    let n = g.shape(x0)[0];
    let d = 1.0 / steps as f64;
    let mut x = x0;
    for i in 0..steps {
        let t = vec![i as f64 * d; n];
        x = euler_step(field, g, x, &t, &vec![d; n], cond)?;
    }
    Ok(x)
}

/// Sample from a given starting noise without tracking gradients.
pub fn sample_from(
    field: &dyn VelocityField,
    x0: &Tensor,
    steps: usize,
    k_max: usize,
    cond: &Conditioning,
) -> Result<Tensor> {
    check_steps(steps, k_max)?;
    let n = x0.shape()[0];
    let d = 1.0 / steps as f64;
    let mut x = x0.clone();
    for i in 0..steps {
        // A fresh graph per step keeps memory flat.
        let mut g = Graph::new();
        let cv = cond.place(&mut g);
        let xv = g.constant(x);
        let t = vec![i as f64 * d; n];
        let next = euler_step(field, &mut g, xv, &t, &vec![d; n], &cv)?;
        x = g.value(next).clone();
    }
    Ok(x)
}

pub fn standard_normal(rng: &mut impl Rng, shape: [usize; 4]) -> Tensor {
    Tensor::from_shape_simple_fn(shape, || StandardNormal.sample(rng))
}

/// Sample with `x0 ~ N(0, I)` drawn from `rng`.
pub fn sample(
    field: &dyn VelocityField,
    cond: &Conditioning,
    steps: usize,
    k_max: usize,
    rng: &mut impl Rng,
) -> Result<Tensor> {
    let x0 = standard_normal(rng, shape4(&cond.x_deg));
    sample_from(field, &x0, steps, k_max, cond)
}
