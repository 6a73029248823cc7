use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::decouple::ArchConfig;
use crate::error::{Error, Result};
use crate::infer::{PairSign, SoftReg};
use crate::mmd_agg::{AggregateOn, KernelConfig};
use crate::nn::{OptimizerConfig, OptimizerKind};
use crate::proto::AlphaSchedule;

/// Components that can be switched off for ablation runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Ablation {
    /// One pooled set of class prototypes and no superdomain routing.
    DomainPrototype,
    ClsDiscLoss,
    DomDiscLoss,
    /// Every source subject is its own superdomain.
    Aggregation,
    /// Constant prototype update weight `alpha_high`.
    AdaptiveAlpha,
    /// Per-sample cross-entropy on the class probabilities instead of the pairwise loss.
    Pairwise,
    /// Identity bilinear form, not trained.
    BilinearTheta,
    SoftReg,
}

impl Ablation {
    pub const ALL: [Ablation; 8] = [
        Ablation::DomainPrototype,
        Ablation::ClsDiscLoss,
        Ablation::DomDiscLoss,
        Ablation::Aggregation,
        Ablation::AdaptiveAlpha,
        Ablation::Pairwise,
        Ablation::BilinearTheta,
        Ablation::SoftReg,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Ablation::DomainPrototype => "domain-prototype",
            Ablation::ClsDiscLoss => "cls-disc-loss",
            Ablation::DomDiscLoss => "dom-disc-loss",
            Ablation::Aggregation => "aggregation",
            Ablation::AdaptiveAlpha => "adaptive-alpha",
            Ablation::Pairwise => "pairwise",
            Ablation::BilinearTheta => "bilinear-theta",
            Ablation::SoftReg => "soft-reg",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::config("disable", format!("unknown component `{s}`")))
    }
}

/// Every training hyperparameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    /// Number of superdomains.
    #[serde(rename = "K")]
    pub k: usize,
    pub alpha_high: f64,
    pub alpha_low: f64,
    pub alpha_power: f64,
    /// Weight of the soft regularizer.
    pub beta: f64,
    pub soft_reg: SoftReg,
    pub max_epoch: usize,
    pub batch_size: usize,
    pub optimizer: OptimizerConfig,
    pub seed: u64,
    pub grl_lambda: f64,
    pub pair_sign: PairSign,
    /// Stratify each minibatch by source subject instead of sampling uniformly.
    pub balanced_domains: bool,
    /// Fraction of source labels replaced by a wrong class.
    pub label_noise: f64,
    pub kernel: KernelConfig,
    pub aggregate_on: AggregateOn,
    pub arch: ArchConfig,
    pub disable: BTreeSet<Ablation>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            k: 4,
            alpha_high: 0.8,
            alpha_low: 0.2,
            alpha_power: 2.0,
            beta: 0.01,
            soft_reg: SoftReg::WeightNorm,
            max_epoch: 100,
            batch_size: 256,
            optimizer: OptimizerConfig {
                kind: OptimizerKind::Adam {
                    beta1: 0.9,
                    beta2: 0.999,
                    eps: 1e-8,
                },
                lr: 1e-3,
                weight_decay: 0.0,
            },
            seed: 0,
            grl_lambda: 1.0,
            pair_sign: PairSign::Standard,
            balanced_domains: false,
            label_noise: 0.0,
            kernel: KernelConfig::default(),
            aggregate_on: AggregateOn::Mmd,
            arch: ArchConfig::default(),
            disable: BTreeSet::new(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::config("K", "must be at least 1"));
        }
        if self.max_epoch == 0 {
            return Err(Error::config("max_epoch", "must be at least 1"));
        }
        if self.batch_size < 2 {
            return Err(Error::config("batch_size", "pairwise learning needs at least 2 samples per batch"));
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(Error::config("beta", "must be finite and non-negative"));
        }
        if !(self.grl_lambda > 0.0 && self.grl_lambda.is_finite()) {
            return Err(Error::config("grl_lambda", "must be positive"));
        }
        if !(0.0..1.0).contains(&self.label_noise) {
            return Err(Error::config("label_noise", "must lie in [0, 1)"));
        }
        self.alpha_schedule().validate()?;
        self.optimizer.validate()?;
        self.kernel.validate()?;
        self.arch.validate()?;
        Ok(())
    }

    pub fn alpha_schedule(&self) -> AlphaSchedule {
        AlphaSchedule {
            alpha_high: self.alpha_high,
            alpha_low: self.alpha_low,
            power: self.alpha_power,
            max_epoch: self.max_epoch,
        }
    }

    pub fn disabled(&self, a: Ablation) -> bool {
        self.disable.contains(&a)
    }

    pub fn with_disabled(mut self, items: impl IntoIterator<Item = Ablation>) -> Self {
        self.disable.extend(items);
        self
    }

    /// Superdomain count used for `n_source` source subjects.
    pub fn effective_k(&self, n_source: usize) -> usize {
        if self.disabled(Ablation::DomainPrototype) {
            1
        } else if self.disabled(Ablation::Aggregation) {
            n_source
        } else {
            self.k.min(n_source)
        }
    }

    /// Whether `theta` is trained (otherwise it stays the identity).
    pub fn trains_theta(&self) -> bool {
        !self.disabled(Ablation::BilinearTheta) && !self.disabled(Ablation::DomainPrototype)
    }
}

/// Where each setting comes from, for help output.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    /// Fixed by the method's published settings.
    Published,
    /// Left open there; chosen here.
    Chosen,
}

/// `(key, provenance, description)` for every [`TrainConfig`] key.
pub const CONFIG_KEYS: &[(&str, Provenance, &str)] = &[
    ("K", Provenance::Published, "number of superdomains (default 4)"),
    ("alpha_high", Provenance::Published, "initial prototype update weight (0.8)"),
    ("alpha_low", Provenance::Published, "final prototype update weight (0.2)"),
    ("alpha_power", Provenance::Published, "decay exponent of the update weight (2)"),
    ("beta", Provenance::Published, "soft regularizer weight (0.01)"),
    ("soft_reg", Provenance::Chosen, "weight-norm | activation-norm"),
    ("max_epoch", Provenance::Chosen, "training epochs (100)"),
    ("batch_size", Provenance::Chosen, "minibatch size (256)"),
    ("optimizer.kind", Provenance::Chosen, "adam | sgd (adam)"),
    ("optimizer.lr", Provenance::Chosen, "learning rate (1e-3)"),
    ("optimizer.weight_decay", Provenance::Chosen, "L2 penalty added to every gradient (0)"),
    ("seed", Provenance::Chosen, "master random seed"),
    ("grl_lambda", Provenance::Chosen, "gradient reversal scale (1.0)"),
    ("pair_sign", Provenance::Chosen, "standard | literal pairwise sign convention"),
    ("balanced_domains", Provenance::Chosen, "stratify minibatches by subject"),
    ("label_noise", Provenance::Chosen, "fraction of corrupted source labels"),
    ("kernel.bandwidth", Provenance::Chosen, "median-heuristic | {fixed = sigma}"),
    ("kernel.median_sample", Provenance::Chosen, "rows pooled for the median heuristic (2000)"),
    ("kernel.max_rows_per_domain", Provenance::Chosen, "row cap per subject for MMD (all)"),
    ("aggregate_on", Provenance::Chosen, "mmd | vectors: k-medoids dissimilarity"),
    ("arch.hidden", Provenance::Published, "hidden width (64)"),
    ("arch.leaky_slope", Provenance::Published, "extractor LeakyReLU slope (0.01)"),
    ("arch.dropout", Provenance::Published, "discriminator dropout (0.25)"),
    ("disable", Provenance::Chosen, "ablations: domain-prototype, cls-disc-loss, dom-disc-loss, aggregation, adaptive-alpha, pairwise, bilinear-theta, soft-reg"),
];
