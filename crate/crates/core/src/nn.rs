//! Named parameter storage and the few layer types the networks use.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::autodiff::{shape4, Graph, Gradients, Tensor, Var};

/// Index of a parameter inside a [`ParamStore`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamId(pub usize);

/// Ordered, named collection of parameter tensors.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    names: Vec<String>,
    values: Vec<Tensor>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor) -> ParamId {
        let name = name.into();
        assert!(
            !self.names.contains(&name),
            "duplicate parameter name {name}"
        );
        self.names.push(name);
        self.values.push(value);
        ParamId(self.values.len() - 1)
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.values[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.values[id.0]
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Total scalar parameter count.
    pub fn numel(&self) -> usize {
        self.values.iter().map(|v| v.len()).sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names.iter().map(String::as_str).zip(self.values.iter())
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn values(&self) -> &[Tensor] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Tensor] {
        &mut self.values
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    /// Replace values from `(name, tensor)` pairs; every stored name must be
    /// present with a matching shape.
    pub fn load_named<'a>(
        &mut self,
        mut lookup: impl FnMut(&str) -> Option<&'a Tensor>,
    ) -> Result<(), String> {
        for (name, value) in self.names.iter().zip(self.values.iter_mut()) {
            let src = lookup(name).ok_or_else(|| format!("missing parameter {name}"))?;
            if src.shape() != value.shape() {
                return Err(format!(
                    "parameter {name}: expected shape {:?}, found {:?}",
                    value.shape(),
                    src.shape()
                ));
            }
            value.assign(src);
        }
        Ok(())
    }

    /// Flatten all parameters into one vector (store order).
    pub fn flatten(&self) -> Vec<f64> {
        self.values
            .iter()
            .flat_map(|v| v.iter().copied())
            .collect()
    }

    /// Inverse of [`ParamStore::flatten`].
    pub fn unflatten(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.numel());
        let mut it = flat.iter();
        for v in &mut self.values {
            for x in v.iter_mut() {
                *x = *it.next().expect("length checked");
            }
        }
    }
}

/// Parameters placed on a graph, indexed like the store.
#[derive(Clone, Debug)]
pub struct Bound {
    vars: Vec<Var>,
}

impl Bound {
    /// Place every parameter on `g`. With `trainable = false` they become
    /// constants and no gradient is accumulated for them.
    pub fn new(g: &mut Graph, store: &ParamStore, trainable: bool) -> Self {
        let vars = store
            .values()
            .iter()
            .map(|v| {
                if trainable {
                    g.input(v.clone())
                } else {
                    g.constant(v.clone())
                }
            })
            .collect();
        Self { vars }
    }

    pub fn var(&self, id: ParamId) -> Var {
        self.vars[id.0]
    }

    /// Per-parameter gradients in store order (zeros when none flowed).
    pub fn collect(&self, grads: &Gradients, store: &ParamStore) -> Vec<Tensor> {
        self.vars
            .iter()
            .zip(store.values())
            .map(|(v, t)| grads.get_or_zeros(*v, shape4(t)))
            .collect()
    }
}

/// Weight initialisation scheme.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Init {
    Zeros,
    /// Normal with standard deviation `gain / sqrt(fan_in)`.
    Scaled(f64),
}

/// Convolution (or, at `k = 1` on `(N, F, 1, 1)` inputs, a dense layer)
/// with an optional bias.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct Conv {
    pub weight: ParamId,
    pub bias: Option<ParamId>,
}

impl Conv {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        c_in: usize,
        c_out: usize,
        k: usize,
        bias: bool,
        init: Init,
        rng: &mut impl Rng,
    ) -> Self {
        let weight = match init {
            Init::Zeros => Tensor::zeros((c_out, c_in, k, k)),
            Init::Scaled(gain) => {
                let std = gain / ((c_in * k * k) as f64).sqrt();
                let normal = Normal::new(0.0, std).expect("positive std");
                Tensor::from_shape_fn((c_out, c_in, k, k), |_| normal.sample(rng))
            }
        };
        let weight = store.add(format!("{name}.weight"), weight);
        let bias = bias.then(|| store.add(format!("{name}.bias"), Tensor::zeros((1, c_out, 1, 1))));
        Self { weight, bias }
    }

    pub fn forward(&self, g: &mut Graph, p: &Bound, x: Var) -> Var {
        let y = g.conv(x, p.var(self.weight));
        match self.bias {
            Some(b) => g.add(y, p.var(b)),
            None => y,
        }
    }
}

/// Sinusoidal features of a scalar, returned as a `(N, 2 * n_freq, 1, 1)`
/// tensor. Frequencies are geometric from 1 to `max_freq`.
pub fn sinusoidal_features(values: &[f64], n_freq: usize, max_freq: f64) -> Tensor {
    let n = values.len();
    let mut out = Tensor::zeros((n, 2 * n_freq, 1, 1));
    for (i, &v) in values.iter().enumerate() {
        for f in 0..n_freq {
            let ratio = if n_freq > 1 {
                f as f64 / (n_freq - 1) as f64
            } else {
                0.0
            };
            let freq = max_freq.powf(ratio) * std::f64::consts::PI;
            out[[i, 2 * f, 0, 0]] = (freq * v).sin();
            out[[i, 2 * f + 1, 0, 0]] = (freq * v).cos();
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn flatten_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut store = ParamStore::new();
        Conv::new(&mut store, "a", 2, 3, 3, true, Init::Scaled(1.0), &mut rng);
        Conv::new(&mut store, "b", 3, 1, 1, false, Init::Zeros, &mut rng);
        let flat = store.flatten();
        assert_eq!(flat.len(), store.numel());
        let mut other = store.clone();
        other.unflatten(&vec![0.0; flat.len()]);
        assert_ne!(other, store);
        other.unflatten(&flat);
        assert_eq!(other, store);
    }

    #[test]
    fn zero_init_is_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut store = ParamStore::new();
        let c = Conv::new(&mut store, "z", 4, 4, 3, true, Init::Zeros, &mut rng);
        assert!(store.get(c.weight).iter().all(|&x| x == 0.0));
    }

    #[test]
    fn sinusoidal_features_are_bounded() {
        let f = sinusoidal_features(&[0.0, 0.5, 1.0], 4, 16.0);
        assert_eq!(f.shape(), &[3, 8, 1, 1]);
        assert!(f.iter().all(|x| x.abs() <= 1.0));
        assert_eq!(f[[0, 1, 0, 0]], 1.0);
    }
}
