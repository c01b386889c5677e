//! Reverse-mode automatic differentiation over 4-D `f64` tensors.
//!
//! Every value in a [`Graph`] is an NCHW [`Tensor`]. Vectors are carried as
//! `(N, F, 1, 1)` and scalars as `(1, 1, 1, 1)`, so convolution doubles as the
//! dense layer and broadcasting covers biases and per-sample scalars.
//!
//! The graph is append-only. A node remembers the operation that produced it;
//! [`Graph::backward`] walks the nodes in reverse creation order. Nodes that
//! do not depend on any trainable input are never visited.

use ndarray::linalg::general_mat_mul;
use ndarray::{Array4, ArrayView2, ArrayViewMut2, Axis};

pub type Tensor = Array4<f64>;

/// Handle to a node of a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    Scale(Var, f64),
    Silu(Var),
    Tanh(Var),
    Sqrt(Var),
    Square(Var),
    Conv { x: Var, w: Var, k: usize },
    AvgPool2(Var),
    Upsample(Var, usize),
    Concat(Vec<Var>),
    Slice { x: Var, start: usize },
    Reshape(Var),
    SumPerSample(Var),
    SumChannels(Var),
    Sum(Var),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

/// A computation graph. Build it forward, then call [`Graph::backward`].
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

/// Gradients of one scalar root with respect to every node that needs them.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    /// Gradient of `v`, or zeros of `shape` when nothing flowed into it.
    pub fn get_or_zeros(&self, v: Var, shape: [usize; 4]) -> Tensor {
        self.get(v).cloned().unwrap_or_else(|| Tensor::zeros(shape))
    }
}

pub fn shape4(t: &Tensor) -> [usize; 4] {
    let s = t.shape();
    [s[0], s[1], s[2], s[3]]
}

fn broadcast_shape(a: [usize; 4], b: [usize; 4]) -> [usize; 4] {
    let mut out = [0; 4];
    for i in 0..4 {
        out[i] = match (a[i], b[i]) {
            (x, y) if x == y => x,
            (1, y) => y,
            (x, 1) => x,
            _ => panic!("shapes {a:?} and {b:?} do not broadcast"),
        };
    }
    out
}

/// Sum `g` over the axes where `shape` has extent 1 but `g` does not.
fn reduce_to(mut g: Tensor, shape: [usize; 4]) -> Tensor {
    for ax in 0..4 {
        if shape[ax] == 1 && g.shape()[ax] != 1 {
            g = g.sum_axis(Axis(ax)).insert_axis(Axis(ax));
        }
    }
    g
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn ng(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    /// A leaf that gradients never flow into.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    /// A leaf whose gradient is wanted.
    pub fn input(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    pub fn scalar_constant(&mut self, x: f64) -> Var {
        self.constant(Tensor::from_elem((1, 1, 1, 1), x))
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> [usize; 4] {
        shape4(&self.nodes[v.0].value)
    }

    /// The single element of a `(1, 1, 1, 1)` node.
    pub fn scalar(&self, v: Var) -> f64 {
        let t = self.value(v);
        debug_assert_eq!(t.len(), 1);
        t[[0, 0, 0, 0]]
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.ng(v)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a) + self.value(b);
        let ng = self.ng(a) || self.ng(b);
        self.push(value, Op::Add(a, b), ng)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a) - self.value(b);
        let ng = self.ng(a) || self.ng(b);
        self.push(value, Op::Sub(a, b), ng)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a) * self.value(b);
        let ng = self.ng(a) || self.ng(b);
        self.push(value, Op::Mul(a, b), ng)
    }

    pub fn div(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a) / self.value(b);
        let ng = self.ng(a) || self.ng(b);
        self.push(value, Op::Div(a, b), ng)
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Var {
        let value = self.value(a) * k;
        let ng = self.ng(a);
        self.push(value, Op::Scale(a, k), ng)
    }

    pub fn silu(&mut self, a: Var) -> Var {
        let value = self.value(a).mapv(|x| x * sigmoid(x));
        let ng = self.ng(a);
        self.push(value, Op::Silu(a), ng)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let value = self.value(a).mapv(f64::tanh);
        let ng = self.ng(a);
        self.push(value, Op::Tanh(a), ng)
    }

    /// Square root. The derivative at exactly zero is taken as zero, so a
    /// norm of a vanishing residual has a finite (zero) gradient.
    pub fn sqrt(&mut self, a: Var) -> Var {
        let value = self.value(a).mapv(|x| x.max(0.0).sqrt());
        let ng = self.ng(a);
        self.push(value, Op::Sqrt(a), ng)
    }

    pub fn square(&mut self, a: Var) -> Var {
        let value = self.value(a).mapv(|x| x * x);
        let ng = self.ng(a);
        self.push(value, Op::Square(a), ng)
    }

    /// Stride-1 convolution with `k x k` kernels and zero padding `k / 2`.
    /// `w` has shape `(c_out, c_in, k, k)`.
    pub fn conv(&mut self, x: Var, w: Var) -> Var {
        let ws = self.shape(w);
        assert_eq!(ws[2], ws[3], "square kernels only");
        let k = ws[2];
        assert!(k % 2 == 1, "odd kernels only");
        let value = conv_forward(self.value(x), self.value(w), k);
        let ng = self.ng(x) || self.ng(w);
        self.push(value, Op::Conv { x, w, k }, ng)
    }

    pub fn avg_pool2(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let [n, c, h, w] = shape4(x);
        assert!(h % 2 == 0 && w % 2 == 0, "avg_pool2 needs even extents");
        let mut out = Tensor::zeros((n, c, h / 2, w / 2));
        for ((i, j, y, xx), o) in out.indexed_iter_mut() {
            let (y2, x2) = (2 * y, 2 * xx);
            *o = 0.25
                * (x[[i, j, y2, x2]]
                    + x[[i, j, y2 + 1, x2]]
                    + x[[i, j, y2, x2 + 1]]
                    + x[[i, j, y2 + 1, x2 + 1]]);
        }
        let ng = self.ng(a);
        self.push(out, Op::AvgPool2(a), ng)
    }

    /// Nearest-neighbour upsampling by an integer factor.
    pub fn upsample(&mut self, a: Var, factor: usize) -> Var {
        let x = self.value(a);
        let [n, c, h, w] = shape4(x);
        let out = Tensor::from_shape_fn((n, c, h * factor, w * factor), |(i, j, y, xx)| {
            x[[i, j, y / factor, xx / factor]]
        });
        let ng = self.ng(a);
        self.push(out, Op::Upsample(a, factor), ng)
    }

    /// Concatenate along the channel axis.
    pub fn concat(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty());
        let views: Vec<_> = parts.iter().map(|p| self.value(*p).view()).collect();
        let value = ndarray::concatenate(Axis(1), &views).expect("concat shapes");
        let ng = parts.iter().any(|p| self.ng(*p));
        self.push(value, Op::Concat(parts.to_vec()), ng)
    }

    /// Channels `start..start + len`.
    pub fn slice_channels(&mut self, a: Var, start: usize, len: usize) -> Var {
        let value = self
            .value(a)
            .slice(ndarray::s![.., start..start + len, .., ..])
            .to_owned();
        let ng = self.ng(a);
        self.push(value, Op::Slice { x: a, start }, ng)
    }

    /// Row-major reshape; element count must match.
    pub fn reshape(&mut self, a: Var, shape: [usize; 4]) -> Var {
        let value = self
            .value(a)
            .as_standard_layout()
            .into_owned()
            .into_shape_with_order(shape)
            .expect("reshape element count");
        let ng = self.ng(a);
        self.push(value, Op::Reshape(a), ng)
    }

    /// Sum over all but the batch axis: `(N, C, H, W) -> (N, 1, 1, 1)`.
    pub fn sum_per_sample(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let n = x.shape()[0];
        let mut out = Tensor::zeros((n, 1, 1, 1));
        for i in 0..n {
            out[[i, 0, 0, 0]] = x.index_axis(Axis(0), i).sum();
        }
        let ng = self.ng(a);
        self.push(out, Op::SumPerSample(a), ng)
    }

    /// Sum over the channel axis: `(N, C, H, W) -> (N, 1, H, W)`.
    pub fn sum_channels(&mut self, a: Var) -> Var {
        let value = self.value(a).sum_axis(Axis(1)).insert_axis(Axis(1));
        let ng = self.ng(a);
        self.push(value, Op::SumChannels(a), ng)
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).sum();
        let ng = self.ng(a);
        self.push(Tensor::from_elem((1, 1, 1, 1), s), Op::Sum(a), ng)
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let n = self.value(a).len() as f64;
        let s = self.sum(a);
        self.scale(s, 1.0 / n)
    }

    /// Gradients of the scalar `root` with respect to every node on a path
    /// to a trainable input.
    pub fn backward(&self, root: Var) -> Gradients {
        assert_eq!(self.value(root).len(), 1, "backward needs a scalar root");
        let mut grads: Vec<Option<Tensor>> = vec![None; root.0 + 1];
        if !self.ng(root) {
            return Gradients { grads };
        }
        grads[root.0] = Some(Tensor::ones(self.shape(root)));

        for idx in (0..=root.0).rev() {
            let node = &self.nodes[idx];
            if !node.needs_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else {
                continue;
            };
            match &node.op {
                Op::Leaf => {
                    grads[idx] = Some(g);
                    continue;
                }
                Op::Add(a, b) => {
                    self.acc(&mut grads, *a, || reduce_to(g.clone(), self.shape(*a)));
                    self.acc(&mut grads, *b, || reduce_to(g.clone(), self.shape(*b)));
                }
                Op::Sub(a, b) => {
                    self.acc(&mut grads, *a, || reduce_to(g.clone(), self.shape(*a)));
                    self.acc(&mut grads, *b, || reduce_to(-&g, self.shape(*b)));
                }
                Op::Mul(a, b) => {
                    let (va, vb) = (self.value(*a), self.value(*b));
                    self.acc(&mut grads, *a, || reduce_to(&g * vb, shape4(va)));
                    self.acc(&mut grads, *b, || reduce_to(&g * va, shape4(vb)));
                }
                Op::Div(a, b) => {
                    let (va, vb) = (self.value(*a), self.value(*b));
                    self.acc(&mut grads, *a, || reduce_to(&g / vb, shape4(va)));
                    self.acc(&mut grads, *b, || {
                        let out = &node.value;
                        reduce_to(-(&g * out) / vb, shape4(vb))
                    });
                }
                Op::Scale(a, k) => {
                    let k = *k;
                    self.acc(&mut grads, *a, || &g * k);
                }
                Op::Silu(a) => {
                    let x = self.value(*a);
                    self.acc(&mut grads, *a, || {
                        let mut out = g.clone();
                        out.zip_mut_with(x, |gi, &xi| {
                            let s = sigmoid(xi);
                            *gi *= s * (1.0 + xi * (1.0 - s));
                        });
                        out
                    });
                }
                Op::Tanh(a) => {
                    let y = &node.value;
                    self.acc(&mut grads, *a, || {
                        let mut out = g.clone();
                        out.zip_mut_with(y, |gi, &yi| *gi *= 1.0 - yi * yi);
                        out
                    });
                }
                Op::Sqrt(a) => {
                    let y = &node.value;
                    self.acc(&mut grads, *a, || {
                        let mut out = g.clone();
                        out.zip_mut_with(y, |gi, &yi| {
                            *gi = if yi > 0.0 { *gi / (2.0 * yi) } else { 0.0 };
                        });
                        out
                    });
                }
                Op::Square(a) => {
                    let x = self.value(*a);
                    self.acc(&mut grads, *a, || {
                        let mut out = g.clone();
                        out.zip_mut_with(x, |gi, &xi| *gi *= 2.0 * xi);
                        out
                    });
                }
                Op::Conv { x, w, k } => {
                    let (gx, gw) = conv_backward(
                        self.value(*x),
                        self.value(*w),
                        &g,
                        *k,
                        self.ng(*x),
                        self.ng(*w),
                    );
                    if let Some(gx) = gx {
                        self.acc(&mut grads, *x, || gx);
                    }
                    if let Some(gw) = gw {
                        self.acc(&mut grads, *w, || gw);
                    }
                }
                Op::AvgPool2(a) => {
                    self.acc(&mut grads, *a, || {
                        let [n, c, h, w] = self.shape(*a);
                        Tensor::from_shape_fn((n, c, h, w), |(i, j, y, x)| {
                            0.25 * g[[i, j, y / 2, x / 2]]
                        })
                    });
                }
                Op::Upsample(a, f) => {
                    let f = *f;
                    self.acc(&mut grads, *a, || {
                        let [n, c, h, w] = self.shape(*a);
                        let mut out = Tensor::zeros((n, c, h, w));
                        for ((i, j, y, x), gi) in g.indexed_iter() {
                            out[[i, j, y / f, x / f]] += gi;
                        }
                        out
                    });
                }
                Op::Concat(parts) => {
                    let mut start = 0;
                    for p in parts {
                        let len = self.shape(*p)[1];
                        let s = start;
                        self.acc(&mut grads, *p, || {
                            g.slice(ndarray::s![.., s..s + len, .., ..]).to_owned()
                        });
                        start += len;
                    }
                }
                Op::Slice { x, start } => {
                    let start = *start;
                    self.acc(&mut grads, *x, || {
                        let mut out = Tensor::zeros(self.shape(*x));
                        let len = g.shape()[1];
                        out.slice_mut(ndarray::s![.., start..start + len, .., ..])
                            .assign(&g);
                        out
                    });
                }
                Op::Reshape(a) => {
                    self.acc(&mut grads, *a, || {
                        g.as_standard_layout()
                            .into_owned()
                            .into_shape_with_order(self.shape(*a))
                            .expect("reshape grad")
                    });
                }
                Op::SumPerSample(a) | Op::SumChannels(a) | Op::Sum(a) => {
                    self.acc(&mut grads, *a, || {
                        let shape = self.shape(*a);
                        g.broadcast(shape).expect("sum grad broadcast").to_owned()
                    });
                }
            }
        }
        Gradients { grads }
    }

    fn acc(&self, grads: &mut [Option<Tensor>], target: Var, make: impl FnOnce() -> Tensor) {
        if !self.ng(target) {
            return;
        }
        let contribution = make();
        match &mut grads[target.0] {
            Some(existing) => *existing += &contribution,
            slot @ None => *slot = Some(contribution),
        }
    }
}

/// Output shape of a broadcasting binary op; exposed for callers that
/// pre-validate shapes.
pub fn broadcast_shapes(a: [usize; 4], b: [usize; 4]) -> [usize; 4] {
    broadcast_shape(a, b)
}

fn im2col(x: &[f64], c_in: usize, h: usize, w: usize, k: usize, cols: &mut [f64]) {
    let pad = k / 2;
    let hw = h * w;
    for c in 0..c_in {
        let plane = &x[c * hw..(c + 1) * hw];
        for ky in 0..k {
            for kx in 0..k {
                let row = ((c * k + ky) * k + kx) * hw;
                let dst = &mut cols[row..row + hw];
                for y in 0..h {
                    let sy = y as isize + ky as isize - pad as isize;
                    let line = &mut dst[y * w..(y + 1) * w];
                    if sy < 0 || sy >= h as isize {
                        line.fill(0.0);
                        continue;
                    }
                    let src = &plane[sy as usize * w..(sy as usize + 1) * w];
                    let shift = kx as isize - pad as isize;
                    for (x, v) in line.iter_mut().enumerate() {
                        let sx = x as isize + shift;
                        *v = if sx < 0 || sx >= w as isize {
                            0.0
                        } else {
                            src[sx as usize]
                        };
                    }
                }
            }
        }
    }
}

fn col2im(cols: &[f64], c_in: usize, h: usize, w: usize, k: usize, x: &mut [f64]) {
    let pad = k / 2;
    let hw = h * w;
    for c in 0..c_in {
        let plane = &mut x[c * hw..(c + 1) * hw];
        for ky in 0..k {
            for kx in 0..k {
                let row = ((c * k + ky) * k + kx) * hw;
                let src = &cols[row..row + hw];
                for y in 0..h {
                    let sy = y as isize + ky as isize - pad as isize;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let shift = kx as isize - pad as isize;
                    let dst = &mut plane[sy as usize * w..(sy as usize + 1) * w];
                    for x in 0..w {
                        let sx = x as isize + shift;
                        if sx >= 0 && sx < w as isize {
                            dst[sx as usize] += src[y * w + x];
                        }
                    }
                }
            }
        }
    }
}

fn conv_forward(x: &Tensor, w: &Tensor, k: usize) -> Tensor {
    let [n, c_in, h, wd] = shape4(x);
    let [c_out, wc_in, _, _] = shape4(w);
    assert_eq!(c_in, wc_in, "conv channel mismatch");
    let x = x.as_standard_layout();
    let w = w.as_standard_layout();
    let xs = x.as_slice().expect("standard layout");
    let ws = w.as_slice().expect("standard layout");
    let hw = h * wd;
    let ckk = c_in * k * k;
    let wmat = ArrayView2::from_shape((c_out, ckk), ws).expect("weight view");
    let mut out = Tensor::zeros((n, c_out, h, wd));
    let mut cols = vec![0.0; if k == 1 { 0 } else { ckk * hw }];
    {
        let os = out.as_slice_mut().expect("fresh array");
        for i in 0..n {
            let xi = &xs[i * c_in * hw..(i + 1) * c_in * hw];
            let colmat = if k == 1 {
                ArrayView2::from_shape((ckk, hw), xi).expect("cols view")
            } else {
                im2col(xi, c_in, h, wd, k, &mut cols);
                ArrayView2::from_shape((ckk, hw), &cols[..]).expect("cols view")
            };
            let oi = &mut os[i * c_out * hw..(i + 1) * c_out * hw];
            let mut omat = ArrayViewMut2::from_shape((c_out, hw), oi).expect("out view");
            general_mat_mul(1.0, &wmat, &colmat, 0.0, &mut omat);
        }
    }
    out
}

fn conv_backward(
    x: &Tensor,
    w: &Tensor,
    g: &Tensor,
    k: usize,
    want_x: bool,
    want_w: bool,
) -> (Option<Tensor>, Option<Tensor>) {
    let [n, c_in, h, wd] = shape4(x);
    let [c_out, _, _, _] = shape4(w);
    let x = x.as_standard_layout();
    let w = w.as_standard_layout();
    let g = g.as_standard_layout();
    let xs = x.as_slice().expect("standard layout");
    let ws = w.as_slice().expect("standard layout");
    let gs = g.as_slice().expect("standard layout");
    let hw = h * wd;
    let ckk = c_in * k * k;
    let wmat = ArrayView2::from_shape((c_out, ckk), ws).expect("weight view");

    let mut gx = want_x.then(|| Tensor::zeros((n, c_in, h, wd)));
    let mut gw = want_w.then(|| Tensor::zeros((c_out, c_in, k, k)));
    let mut cols = vec![0.0; if k == 1 { 0 } else { ckk * hw }];
    let mut gcols = vec![0.0; if want_x && k != 1 { ckk * hw } else { 0 }];

    for i in 0..n {
        let gi = ArrayView2::from_shape((c_out, hw), &gs[i * c_out * hw..(i + 1) * c_out * hw])
            .expect("grad view");
        if let Some(gw) = gw.as_mut() {
            let xi = &xs[i * c_in * hw..(i + 1) * c_in * hw];
            let colmat = if k == 1 {
                ArrayView2::from_shape((ckk, hw), xi).expect("cols view")
            } else {
                im2col(xi, c_in, h, wd, k, &mut cols);
                ArrayView2::from_shape((ckk, hw), &cols[..]).expect("cols view")
            };
            let gws = gw.as_slice_mut().expect("fresh array");
            let mut gwmat = ArrayViewMut2::from_shape((c_out, ckk), gws).expect("gw view");
            general_mat_mul(1.0, &gi, &colmat.t(), 1.0, &mut gwmat);
        }
        if let Some(gx) = gx.as_mut() {
            let gxs = gx.as_slice_mut().expect("fresh array");
            let gxi = &mut gxs[i * c_in * hw..(i + 1) * c_in * hw];
            if k == 1 {
                let mut m = ArrayViewMut2::from_shape((ckk, hw), gxi).expect("gx view");
                general_mat_mul(1.0, &wmat.t(), &gi, 0.0, &mut m);
            } else {
                let mut m =
                    ArrayViewMut2::from_shape((ckk, hw), &mut gcols[..]).expect("gcols view");
                general_mat_mul(1.0, &wmat.t(), &gi, 0.0, &mut m);
                col2im(&gcols, c_in, h, wd, k, gxi);
            }
        }
    }
    (gx, gw)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_tensor(rng: &mut ChaCha8Rng, shape: [usize; 4]) -> Tensor {
        Tensor::from_shape_fn(shape, |_| rng.gen_range(-1.0..1.0))
    }

    /// Central-difference check of d(root)/d(input) for a graph builder.
    fn check_grad(shape: [usize; 4], build: impl Fn(&mut Graph, Var) -> Var) {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let x0 = rand_tensor(&mut rng, shape);
        let mut g = Graph::new();
        let x = g.input(x0.clone());
        let root = build(&mut g, x);
        let grads = g.backward(root);
        let analytic = grads.get_or_zeros(x, shape);

        let eval = |xv: &Tensor| {
            let mut g = Graph::new();
            let x = g.constant(xv.clone());
            let r = build(&mut g, x);
            g.scalar(r)
        };
        let h = 1e-6;
        for idx in 0..x0.len() {
            let mut plus = x0.clone();
            let mut minus = x0.clone();
            plus.as_slice_mut().unwrap()[idx] += h;
            minus.as_slice_mut().unwrap()[idx] -= h;
            let fd = (eval(&plus) - eval(&minus)) / (2.0 * h);
            let an = analytic.as_slice().unwrap()[idx];
            assert!(
                (fd - an).abs() <= 1e-6 * (1.0 + fd.abs()),
                "index {idx}: fd {fd} analytic {an}"
            );
        }
    }

    #[test]
    fn elementwise_ops_match_finite_differences() {
        check_grad([2, 3, 2, 2], |g, x| {
            let s = g.silu(x);
            let t = g.tanh(s);
            let q = g.square(t);
            let m = g.mul(q, x);
            g.sum(m)
        });
    }

    #[test]
    fn broadcast_ops_reduce_gradients() {
        check_grad([1, 3, 1, 1], |g, b| {
            let a = g.constant(Tensor::from_shape_fn((2, 3, 2, 2), |(i, j, y, x)| {
                (i + j + y + x) as f64 * 0.3 + 1.0
            }));
            let s = g.add(a, b);
            let d = g.div(s, a);
            let m = g.mul(d, b);
            g.sum(m)
        });
    }

    #[test]
    fn conv_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let w = rand_tensor(&mut rng, [4, 2, 3, 3]);
        check_grad([2, 2, 5, 4], |g, x| {
            let wv = g.constant(w.clone());
            let y = g.conv(x, wv);
            let y2 = g.square(y);
            g.sum(y2)
        });
        let x = rand_tensor(&mut rng, [2, 2, 5, 4]);
        check_grad([4, 2, 3, 3], |g, w| {
            let xv = g.constant(x.clone());
            let y = g.conv(xv, w);
            let y2 = g.silu(y);
            g.sum(y2)
        });
        check_grad([3, 2, 1, 1], |g, w| {
            let xv = g.constant(x.clone());
            let y = g.conv(xv, w);
            let y2 = g.square(y);
            g.sum(y2)
        });
    }

    #[test]
    fn conv_matches_direct_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x = rand_tensor(&mut rng, [1, 2, 4, 3]);
        let w = rand_tensor(&mut rng, [3, 2, 3, 3]);
        let out = conv_forward(&x, &w, 3);
        for o in 0..3 {
            for y in 0..4isize {
                for xx in 0..3isize {
                    let mut s = 0.0;
                    for c in 0..2 {
                        for ky in 0..3isize {
                            for kx in 0..3isize {
                                let (sy, sx) = (y + ky - 1, xx + kx - 1);
                                if (0..4).contains(&sy) && (0..3).contains(&sx) {
                                    s += w[[o, c, ky as usize, kx as usize]]
                                        * x[[0, c, sy as usize, sx as usize]];
                                }
                            }
                        }
                    }
                    assert!((out[[0, o, y as usize, xx as usize]] - s).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn structural_ops_match_finite_differences() {
        check_grad([2, 4, 4, 4], |g, x| {
            let p = g.avg_pool2(x);
            let u = g.upsample(p, 2);
            let a = g.slice_channels(u, 1, 2);
            let b = g.slice_channels(x, 0, 1);
            let c = g.concat(&[a, b]);
            let r = g.reshape(c, [6, 1, 4, 4]);
            let s = g.sum_channels(r);
            let q = g.square(s);
            let ps = g.sum_per_sample(q);
            let root = g.sqrt(ps);
            g.sum(root)
        });
    }

    #[test]
    fn sqrt_of_zero_has_zero_gradient() {
        let mut g = Graph::new();
        let x = g.input(Tensor::zeros((1, 1, 1, 1)));
        let r = g.sqrt(x);
        let grads = g.backward(r);
        assert_eq!(grads.get(x).unwrap()[[0, 0, 0, 0]], 0.0);
    }

    #[test]
    fn constant_branches_are_not_differentiated() {
        let mut g = Graph::new();
        let c = g.constant(Tensor::ones((1, 1, 2, 2)));
        let x = g.input(Tensor::ones((1, 1, 2, 2)));
        let y = g.mul(c, x);
        let s = g.sum(y);
        let grads = g.backward(s);
        assert!(grads.get(c).is_none());
        assert!(grads.get(x).is_some());
    }
}
