//! One minibatch of the full objective: decoupling losses, the prototype-space
//! loss with the affinity loss that trains `theta`, and the soft regularizer.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::config::{Ablation, TrainConfig};
use crate::decouple::{decouple_backward, decouple_forward, loss_cls, loss_dom, Networks, Tapes};
use crate::error::Result;
use crate::infer::{
    activation_norm_reg, affinity_loss, batch_class_probs, batch_class_probs_backward, pairwise_loss,
    pointwise_loss, weight_matrix_count, weight_norm_reg, SoftReg,
};
use crate::linalg::Matrix;
use crate::nn::{GradientReversal, Mode, OptimizerConfig, OptimizerState};
use crate::proto::PrototypeBank;
use crate::scalar::Scalar;

/// Trainable state: the five networks and the bilinear form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Model<T> {
    pub nets: Networks<T>,
    pub theta: Matrix<T>,
}

impl<T: Scalar> Model<T> {
    pub fn grads(&self) -> ModelGrads<T> {
        ModelGrads {
            tapes: self.nets.tapes(),
            theta: Matrix::zeros(self.theta.rows(), self.theta.cols()),
        }
    }

    pub fn n_params(&self) -> usize {
        self.nets.all().iter().map(|n| n.n_params()).sum::<usize>() + self.theta.as_slice().len()
    }

    /// Every parameter: the networks in [`Networks::all`] order, then `theta`.
    pub fn flat_params(&self) -> Vec<T> {
        let mut out: Vec<T> = self.nets.all().iter().flat_map(|n| n.flat_params()).collect();
        out.extend_from_slice(self.theta.as_slice());
        out
    }

    /// Mutable access to parameter `i` in [`Model::flat_params`] order.
    pub fn param_mut(&mut self, mut i: usize) -> &mut T {
        for net in self.nets.all_mut() {
            if i < net.n_params() {
                return net.param_mut(i);
            }
            i -= net.n_params();
        }
        &mut self.theta.as_mut_slice()[i]
    }

    pub fn is_finite(&self) -> bool {
        self.nets.is_finite() && self.theta.is_finite()
    }
}

#[derive(Debug, Clone)]
pub struct ModelGrads<T> {
    pub tapes: Tapes<T>,
    pub theta: Matrix<T>,
}

impl<T: Scalar> ModelGrads<T> {
    pub fn zero(&mut self) {
        self.tapes.zero();
        self.theta.fill(T::zero());
    }

    /// Gradients in [`Model::flat_params`] order.
    pub fn flat(&self) -> Vec<T> {
        let mut out: Vec<T> = self.tapes.all().iter().flat_map(|t| t.flat()).collect();
        out.extend_from_slice(self.theta.as_slice());
        out
    }
}

/// Minibatch rows with source-local subject ids, (possibly noisy) class labels
/// and the superdomain of each row's subject.
#[derive(Debug, Clone, Copy)]
pub struct MiniBatch<'a, T> {
    pub x: &'a Matrix<T>,
    pub subjects: &'a [usize],
    pub classes: &'a [usize],
    pub superdomain: &'a [usize],
}

/// Loss values of one minibatch. `pair` holds whichever prototype loss is
/// active (pairwise or pointwise); `aux` is the affinity loss on `theta`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossParts {
    pub cls: f64,
    pub dom: f64,
    pub fd: f64,
    /// Part of `fd` computed through the gradient reversal layer. Extractor
    /// gradients follow `fd - (1 + grl_lambda) * reversed` instead of `fd`.
    #[serde(default)]
    pub reversed: f64,
    pub pair: f64,
    pub aux: f64,
    pub reg: f64,
    pub total: f64,
}

impl LossParts {
    pub fn is_finite(&self) -> bool {
        [self.cls, self.dom, self.fd, self.reversed, self.pair, self.aux, self.reg, self.total]
            .iter()
            .all(|v| v.is_finite())
    }

    pub(crate) fn add_scaled(&mut self, o: &LossParts, w: f64) {
        self.cls += w * o.cls;
        self.dom += w * o.dom;
        self.fd += w * o.fd;
        self.reversed += w * o.reversed;
        self.pair += w * o.pair;
        self.aux += w * o.aux;
        self.reg += w * o.reg;
        self.total += w * o.total;
    }
}

/// Which terms contribute gradients. Values are always computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TermMask {
    pub fd: bool,
    pub pair: bool,
    pub reg: bool,
}

impl TermMask {
    pub const ALL: TermMask = TermMask { fd: true, pair: true, reg: true };
    pub const FD: TermMask = TermMask { fd: true, pair: false, reg: false };
    pub const PAIR: TermMask = TermMask { fd: false, pair: true, reg: false };
}

/// Names of the operations executed, in order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpTrace {
    pub enabled: bool,
    pub ops: Vec<String>,
}

impl OpTrace {
    pub fn on() -> Self {
        Self { enabled: true, ops: Vec::new() }
    }

    pub fn record(&mut self, op: impl Into<String>) {
        if self.enabled {
            self.ops.push(op.into());
        }
    }
}

/// Evaluates the objective on one minibatch and accumulates gradients of the
/// masked terms into `grads`. Without a prototype bank the prototype-space
/// terms are skipped.
#[allow(clippy::too_many_arguments)]
pub fn objective<T: Scalar, R: Rng + ?Sized>(
    model: &Model<T>,
    grads: &mut ModelGrads<T>,
    batch: MiniBatch<'_, T>,
    bank: Option<&PrototypeBank<T>>,
    cfg: &TrainConfig,
    mask: TermMask,
    rng: &mut R,
    trace: &mut OpTrace,
) -> Result<LossParts> {
    let nets = &model.nets;
    let tapes = &mut grads.tapes;
    trace.record("decouple_forward");
    let db = decouple_forward(nets, batch.x, batch.subjects, batch.classes, Mode::Train, tapes, rng)?;
    let (rows, hidden) = (db.len(), nets.hidden());
    let mut g_xd = Matrix::zeros(rows, hidden);
    let mut g_xc = Matrix::zeros(rows, hidden);
    let grl = GradientReversal::new(cfg.grl_lambda)?;
    let mut parts = LossParts::default();

    if !cfg.disabled(Ablation::ClsDiscLoss) {
        trace.record("L_cls");
        let l = loss_cls(&nets.d_c, &mut tapes.d_c, &db, &grl, rng)?;
        parts.cls = l.value.as_f64();
        parts.reversed += l.reversed.as_f64();
        if mask.fd {
            g_xc.add_assign(&l.grad_own);
            g_xd.add_assign(&l.grad_other);
        }
    }
    if !cfg.disabled(Ablation::DomDiscLoss) {
        trace.record("L_dom");
        let l = loss_dom(&nets.d_d, &mut tapes.d_d, &db, &grl, rng)?;
        parts.dom = l.value.as_f64();
        parts.reversed += l.reversed.as_f64();
        if mask.fd {
            g_xd.add_assign(&l.grad_own);
            g_xc.add_assign(&l.grad_other);
        }
    }
    if !mask.fd {
        tapes.d_c.zero();
        tapes.d_d.zero();
    }
    parts.fd = parts.cls + parts.dom;

    match bank {
        Some(bank) => {
            let probs = batch_class_probs(&db.x_c, batch.superdomain, bank)?;
            let (value, g_p) = if cfg.disabled(Ablation::Pairwise) {
                trace.record("L_point");
                pointwise_loss(&probs, batch.classes)?
            } else {
                trace.record("L_pair");
                pairwise_loss(&probs, batch.classes, cfg.pair_sign)?
            };
            parts.pair = value.as_f64();
            if mask.pair {
                g_xc.add_assign(&batch_class_probs_backward(&db.x_c, &probs, &g_p, batch.superdomain, bank));
            }
            if cfg.trains_theta() {
                trace.record("L_theta");
                let a = affinity_loss(&db.x_d, batch.superdomain, bank, &model.theta)?;
                parts.aux = a.value.as_f64();
                if mask.pair {
                    g_xd.add_assign(&a.grad_x_d);
                    grads.theta.add_assign(&a.grad_theta);
                }
            }
        }
        None => trace.record("L_pair:no-prototypes"),
    }

    let beta = T::of(cfg.beta);
    let use_reg = !cfg.disabled(Ablation::SoftReg);
    if use_reg && cfg.soft_reg == SoftReg::ActivationNorm {
        trace.record("R:activation-norm");
        parts.reg = activation_norm_reg(&db.x_d, &db.x_c).as_f64();
        if mask.reg {
            let s = T::of(2.0) * beta / T::of_usize(rows.max(1));
            g_xd.axpy(s, &db.x_d);
            g_xc.axpy(s, &db.x_c);
        }
    }

    decouple_backward(nets, tapes, &g_xd, &g_xc)?;

    if use_reg && cfg.soft_reg == SoftReg::WeightNorm {
        trace.record("R:weight-norm");
        let with_theta = cfg.trains_theta();
        parts.reg = weight_norm_reg(nets, with_theta.then_some(&model.theta)).as_f64();
        if mask.reg {
            let s = T::of(2.0) * beta / T::of_usize(weight_matrix_count(nets, with_theta));
            for (net, tape) in nets.all().into_iter().zip(tapes_mut(tapes)) {
                for (layer, gw) in net.layers().iter().zip(tape.weights.iter_mut()) {
                    gw.axpy(s, &layer.weight);
                }
            }
            if with_theta {
                grads.theta.axpy(s, &model.theta);
            }
        }
    }

    parts.total = parts.fd + parts.pair + parts.aux + cfg.beta * parts.reg;
    Ok(parts)
}

fn tapes_mut<T>(t: &mut Tapes<T>) -> [&mut crate::nn::GradTape<T>; 5] {
    [&mut t.f_g, &mut t.f_d, &mut t.f_c, &mut t.d_d, &mut t.d_c]
}

/// Applies the accumulated gradients and clears them. `theta` is only updated
/// when trained.
pub fn apply_step<T: Scalar>(
    model: &mut Model<T>,
    grads: &mut ModelGrads<T>,
    state: &mut OptimizerState<T>,
    opt: &OptimizerConfig,
    train_theta: bool,
) {
    {
        let mut params: Vec<(&mut [T], &[T])> = Vec::new();
        let Model { nets, theta } = model;
        let ModelGrads { tapes, theta: g_theta } = &*grads;
        for (net, tape) in nets.all_mut().into_iter().zip(tapes.all()) {
            params.extend(net.param_grad_pairs(tape));
        }
        if train_theta {
            params.push((theta.as_mut_slice(), g_theta.as_slice()));
        }
        state.step(opt, params);
    }
    grads.zero();
}
