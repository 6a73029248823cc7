use rand::Rng;
use serde::{Deserialize, Serialize};

use super::layer::{Layer, LayerSpec};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Parameters of one feed-forward network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Network<T> {
    layers: Vec<Layer<T>>,
}

#[derive(Debug, Clone)]
struct LayerCache<T> {
    input: Matrix<T>,
    pre: Matrix<T>,
    /// Activation output before dropout.
    post: Matrix<T>,
    /// Per-element dropout scale (0 or 1/(1-p)); `None` when dropout is off.
    mask: Option<Vec<T>>,
}

#[derive(Debug, Clone)]
struct ForwardCache<T> {
    layers: Vec<LayerCache<T>>,
}

/// Gradient buffers mirroring a [`Network`] plus a stack of cached forward passes.
///
/// Each `forward_train` pushes one cache and each `backward` pops the most
/// recent one, so a network applied twice in one step is unwound in reverse
/// order. Parameter gradients accumulate until [`GradTape::zero`].
#[derive(Debug, Clone)]
pub struct GradTape<T> {
    pub weights: Vec<Matrix<T>>,
    pub biases: Vec<Vec<T>>,
    caches: Vec<ForwardCache<T>>,
}

impl<T: Scalar> GradTape<T> {
    pub fn zero(&mut self) {
        for w in &mut self.weights {
            w.fill(T::zero());
        }
        for b in &mut self.biases {
            b.fill(T::zero());
        }
        self.caches.clear();
    }

    pub fn pending_passes(&self) -> usize {
        self.caches.len()
    }

    /// Flat view of every gradient entry, weights then biases per layer.
    pub fn flat(&self) -> Vec<T> {
        let mut out = Vec::new();
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend_from_slice(w.as_slice());
            out.extend_from_slice(b);
        }
        out
    }
}

impl<T: Scalar> Network<T> {
    pub fn new<R: Rng + ?Sized>(specs: &[LayerSpec], rng: &mut R) -> Result<Self> {
        if specs.is_empty() {
            return Err(Error::Dimension("network needs at least one layer".into()));
        }
        for pair in specs.windows(2) {
            if pair[0].out_dim != pair[1].in_dim {
                return Err(Error::Dimension(format!(
                    "layer output {} does not feed input {}",
                    pair[0].out_dim, pair[1].in_dim
                )));
            }
        }
        let layers = specs
            .iter()
            .map(|&s| Layer::init(s, rng))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { layers })
    }

    pub fn from_layers(layers: Vec<Layer<T>>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Dimension("network needs at least one layer".into()));
        }
        for l in &layers {
            l.spec.validate()?;
            if l.weight.shape() != (l.spec.out_dim, l.spec.in_dim) || l.bias.len() != l.spec.out_dim {
                return Err(Error::Dimension("layer parameters do not match spec".into()));
            }
        }
        Ok(Self { layers })
    }

    pub fn layers(&self) -> &[Layer<T>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer<T>] {
        &mut self.layers
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].spec.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].spec.out_dim
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(|l| l.weight.as_slice().len() + l.bias.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weight.is_finite() && l.bias.iter().all(|b| b.is_finite()))
    }

    pub fn tape(&self) -> GradTape<T> {
        GradTape {
            weights: self
                .layers
                .iter()
                .map(|l| Matrix::zeros(l.spec.out_dim, l.spec.in_dim))
                .collect(),
            biases: self.layers.iter().map(|l| vec![T::zero(); l.spec.out_dim]).collect(),
            caches: Vec::new(),
        }
    }

    fn check_input(&self, x: &Matrix<T>) -> Result<()> {
        if x.cols() != self.in_dim() {
            return Err(Error::Dimension(format!(
                "input has {} columns, network expects {}",
                x.cols(),
                self.in_dim()
            )));
        }
        if !x.is_finite() {
            return Err(Error::Validation("non-finite network input".into()));
        }
        Ok(())
    }

    /// Eval-mode forward pass: deterministic, dropout disabled.
    pub fn forward(&self, x: &Matrix<T>) -> Result<Matrix<T>> {
        self.check_input(x)?;
        let mut h = x.clone();
        for l in &self.layers {
            let act = l.spec.activation;
            h = l.affine(&h)?.map(|z| act.apply(z));
        }
        Ok(h)
    }

    /// Forward pass in the given mode. Train mode caches activations on `tape`
    /// and draws dropout masks from `rng`.
    pub fn forward_mode<R: Rng + ?Sized>(
        &self,
        x: &Matrix<T>,
        mode: Mode,
        tape: &mut GradTape<T>,
        rng: &mut R,
    ) -> Result<Matrix<T>> {
        match mode {
            Mode::Eval => self.forward(x),
            Mode::Train => self.forward_train(x, tape, rng),
        }
    }

    pub fn forward_train<R: Rng + ?Sized>(
        &self,
        x: &Matrix<T>,
        tape: &mut GradTape<T>,
        rng: &mut R,
    ) -> Result<Matrix<T>> {
        self.check_input(x)?;
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut h = x.clone();
        for l in &self.layers {
            let pre = l.affine(&h)?;
            let act = l.spec.activation;
            let post = pre.map(|z| act.apply(z));
            let p = l.spec.dropout_p;
            let (out, mask) = if p > 0.0 {
                let keep = T::of(1.0 / (1.0 - p));
                let mask: Vec<T> = (0..post.as_slice().len())
                    .map(|_| if rng.random::<f64>() < p { T::zero() } else { keep })
                    .collect();
                let mut out = post.clone();
                for (v, &m) in out.as_mut_slice().iter_mut().zip(&mask) {
                    *v *= m;
                }
                (out, Some(mask))
            } else {
                (post.clone(), None)
            };
            caches.push(LayerCache {
                input: h,
                pre,
                post,
                mask,
            });
            h = out;
        }
        tape.caches.push(ForwardCache { layers: caches });
        Ok(h)
    }

    /// Pops the most recent cached pass, accumulates parameter gradients and
    /// returns the gradient with respect to that pass's input.
    pub fn backward(&self, tape: &mut GradTape<T>, upstream: &Matrix<T>) -> Result<Matrix<T>> {
        let cache = tape
            .caches
            .pop()
            .ok_or_else(|| Error::State("backward called without a cached forward pass".into()))?;
        if cache.layers.len() != self.layers.len() {
            return Err(Error::State("cached pass belongs to a different network".into()));
        }
        let rows = cache.layers[0].input.rows();
        if upstream.shape() != (rows, self.out_dim()) {
            return Err(Error::Dimension(format!(
                "upstream gradient {:?} does not match output {:?}",
                upstream.shape(),
                (rows, self.out_dim())
            )));
        }
        let mut g = upstream.clone();
        for (idx, (l, c)) in self.layers.iter().zip(&cache.layers).enumerate().rev() {
            if let Some(mask) = &c.mask {
                for (v, &m) in g.as_mut_slice().iter_mut().zip(mask) {
                    *v *= m;
                }
            }
            let act = l.spec.activation;
            for ((v, &z), &a) in g
                .as_mut_slice()
                .iter_mut()
                .zip(c.pre.as_slice())
                .zip(c.post.as_slice())
            {
                *v *= act.derivative(z, a);
            }
            g.t_matmul_acc(&c.input, &mut tape.weights[idx])?;
            let db = &mut tape.biases[idx];
            for r in g.row_iter() {
                for (b, &v) in db.iter_mut().zip(r) {
                    *b += v;
                }
            }
            g = g.matmul(&l.weight)?;
        }
        Ok(g)
    }

    /// Mutable parameter slices paired with their gradients, in the same order as
    /// [`GradTape::flat`].
    pub fn param_grad_pairs<'a>(&'a mut self, tape: &'a GradTape<T>) -> Vec<(&'a mut [T], &'a [T])> {
        let mut out = Vec::with_capacity(2 * self.layers.len());
        for ((l, gw), gb) in self.layers.iter_mut().zip(&tape.weights).zip(&tape.biases) {
            out.push((l.weight.as_mut_slice(), gw.as_slice()));
            out.push((l.bias.as_mut_slice(), gb.as_slice()));
        }
        out
    }

    /// Every parameter, weights then biases per layer.
    pub fn flat_params(&self) -> Vec<T> {
        let mut out = Vec::with_capacity(self.n_params());
        for l in &self.layers {
            out.extend_from_slice(l.weight.as_slice());
            out.extend_from_slice(&l.bias);
        }
        out
    }

    /// Mutable access to parameter `i` in [`Network::flat_params`] order.
    pub fn param_mut(&mut self, mut i: usize) -> &mut T {
        for l in &mut self.layers {
            let nw = l.weight.as_slice().len();
            if i < nw {
                return &mut l.weight.as_mut_slice()[i];
            }
            i -= nw;
            if i < l.bias.len() {
                return &mut l.bias[i];
            }
            i -= l.bias.len();
        }
        panic!("parameter index out of range");
    }

    /// Sum of squared weight entries over all layers (biases excluded), and the
    /// number of weight matrices.
    pub fn weight_sq_norms(&self) -> Vec<T> {
        self.layers.iter().map(|l| l.weight.sum_squares()).collect()
    }
}
