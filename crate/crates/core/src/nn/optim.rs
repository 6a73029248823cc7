use serde::{Deserialize, Serialize};

use super::network::{GradTape, Network};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum OptimizerKind {
    Sgd { momentum: f64 },
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub lr: f64,
    pub weight_decay: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            kind: OptimizerKind::Sgd { momentum: 0.0 },
            lr: 1e-3,
            weight_decay: 0.0,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::config("optimizer.lr", "must be finite and non-negative"));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::config("optimizer.weight_decay", "must be finite and non-negative"));
        }
        match self.kind {
            OptimizerKind::Sgd { momentum } if !(0.0..1.0).contains(&momentum) => {
                Err(Error::config("optimizer.momentum", "must lie in [0, 1)"))
            }
            OptimizerKind::Adam { beta1, beta2, eps }
                if !(0.0..1.0).contains(&beta1) || !(0.0..1.0).contains(&beta2) || eps <= 0.0 =>
            {
                Err(Error::config("optimizer.adam", "betas must lie in [0, 1) and eps > 0"))
            }
            _ => Ok(()),
        }
    }
}

/// Plain SGD: `p <- p - lr * (g + weight_decay * p)`, then zeroes the tape.
pub fn sgd_step<T: Scalar>(net: &mut Network<T>, tape: &mut GradTape<T>, lr: f64, weight_decay: f64) {
    let (lr, wd) = (T::of(lr), T::of(weight_decay));
    for (p, g) in net.param_grad_pairs(tape) {
        for (pi, &gi) in p.iter_mut().zip(g) {
            *pi -= lr * (gi + wd * *pi);
        }
    }
    tape.zero();
}

/// Moment buffers for a fixed, ordered list of parameter slices.
#[derive(Debug, Clone, Default)]
pub struct OptimizerState<T> {
    steps: u64,
    first: Vec<Vec<T>>,
    second: Vec<Vec<T>>,
}

impl<T: Scalar> OptimizerState<T> {
    pub fn new() -> Self {
        Self {
            steps: 0,
            first: Vec::new(),
            second: Vec::new(),
        }
    }

    /// Applies one update. `params` must list the same slices in the same order
    /// on every call.
    pub fn step(&mut self, cfg: &OptimizerConfig, params: Vec<(&mut [T], &[T])>) {
        if self.first.is_empty() {
            self.first = params.iter().map(|(p, _)| vec![T::zero(); p.len()]).collect();
            self.second = self.first.clone();
        }
        debug_assert_eq!(self.first.len(), params.len());
        self.steps += 1;
        let lr = T::of(cfg.lr);
        let wd = T::of(cfg.weight_decay);
        match cfg.kind {
            OptimizerKind::Sgd { momentum } => {
                let mu = T::of(momentum);
                for ((p, g), vel) in params.into_iter().zip(&mut self.first) {
                    for ((pi, &gi), vi) in p.iter_mut().zip(g).zip(vel.iter_mut()) {
                        let d = gi + wd * *pi;
                        *vi = mu * *vi + d;
                        *pi -= lr * *vi;
                    }
                }
            }
            OptimizerKind::Adam { beta1, beta2, eps } => {
                let (b1, b2, eps) = (T::of(beta1), T::of(beta2), T::of(eps));
                let t = self.steps as i32;
                let c1 = T::one() - b1.powi(t);
                let c2 = T::one() - b2.powi(t);
                for (((p, g), m), v) in params
                    .into_iter()
                    .zip(&mut self.first)
                    .zip(&mut self.second)
                {
                    for (((pi, &gi), mi), vi) in p.iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
                        let d = gi + wd * *pi;
                        *mi = b1 * *mi + (T::one() - b1) * d;
                        *vi = b2 * *vi + (T::one() - b2) * d * d;
                        *pi -= lr * (*mi / c1) / ((*vi / c2).sqrt() + eps);
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Matrix;
    use crate::nn::{Activation, LayerSpec};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn scalar_net(w: f64) -> Network<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut net = Network::new(&[LayerSpec::new(1, 1, Activation::Identity)], &mut rng).unwrap();
        net.layers_mut()[0].weight = Matrix::from_vec(1, 1, vec![w]).unwrap();
        net
    }

    #[test]
    fn zero_lr_keeps_params() {
        let mut net = scalar_net(0.7);
        let mut tape = net.tape();
        tape.weights[0].fill(3.0);
        let before = net.clone();
        sgd_step(&mut net, &mut tape, 0.0, 0.1);
        assert_eq!(net, before);
        assert_eq!(tape.flat(), vec![0.0, 0.0]);
    }

    #[test]
    fn quadratic_step() {
        // f(w) = w^2, gradient 2w
        let mut net = scalar_net(1.0);
        let mut tape = net.tape();
        tape.weights[0].fill(2.0);
        sgd_step(&mut net, &mut tape, 0.1, 0.0);
        assert!((net.layers()[0].weight[(0, 0)] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn stateful_sgd_without_momentum_matches_plain() {
        let cfg = OptimizerConfig { lr: 0.1, ..Default::default() };
        let mut state = OptimizerState::new();
        let mut a = scalar_net(1.0);
        let mut tape = a.tape();
        tape.weights[0].fill(2.0);
        state.step(&cfg, a.param_grad_pairs(&tape));
        let mut b = scalar_net(1.0);
        sgd_step(&mut b, &mut tape, 0.1, 0.0);
        assert_eq!(a, b);
    }

    #[test]
    fn adam_moves_against_gradient() {
        let cfg = OptimizerConfig {
            kind: OptimizerKind::Adam { beta1: 0.9, beta2: 0.999, eps: 1e-8 },
            lr: 0.01,
            weight_decay: 0.0,
        };
        let mut state = OptimizerState::new();
        let mut net = scalar_net(1.0);
        let mut tape = net.tape();
        tape.weights[0].fill(2.0);
        state.step(&cfg, net.param_grad_pairs(&tape));
        assert!((net.layers()[0].weight[(0, 0)] - 0.99).abs() < 1e-6);
    }
}
