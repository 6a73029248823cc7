use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::audit::Rows;
use super::config::{Ablation, TrainConfig};
use super::metrics::ConfusionMatrix;
use super::objective::{apply_step, objective, LossParts, MiniBatch, Model, OpTrace, TermMask};
use super::{derive_seed, Stream};
use crate::decouple::Networks;
use crate::error::{Error, Result};
use crate::infer::{init_theta, predict, Prediction};
use crate::linalg::Matrix;
use crate::mmd_agg::{aggregate_domains, SuperdomainAssignment};
use crate::nn::OptimizerState;
use crate::proto::{alpha_at, FreshPrototypes, PrototypeBank};
use crate::scalar::Scalar;

/// Source data of one fold with subjects renumbered `0..n_source`.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceData<T> {
    pub x: Matrix<T>,
    pub subjects: Vec<usize>,
    pub classes: Vec<usize>,
    pub n_source: usize,
    pub n_classes: usize,
}

impl<T: Scalar> SourceData<T> {
    /// Renumbers the subjects of `rows` densely in ascending id order; returns
    /// the data and the original id of each local subject.
    pub fn from_rows(rows: Rows<T>, n_classes: usize) -> Result<(Self, Vec<usize>)> {
        let mut ids = rows.subjects.clone();
        ids.sort_unstable();
        ids.dedup();
        if ids.is_empty() {
            return Err(Error::Training("no source subjects".into()));
        }
        let subjects = rows
            .subjects
            .iter()
            .map(|s| ids.binary_search(s).expect("id collected above"))
            .collect();
        Ok((
            Self {
                x: rows.x,
                subjects,
                classes: rows.classes,
                n_source: ids.len(),
                n_classes,
            },
            ids,
        ))
    }

    fn rows_of_subject(&self, s: usize) -> Vec<usize> {
        (0..self.subjects.len()).filter(|&i| self.subjects[i] == s).collect()
    }
}

/// Per-epoch training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    /// Batch-size-weighted mean of the minibatch losses.
    pub loss: LossParts,
    pub alpha: f64,
    pub k: usize,
    pub assignment: Vec<usize>,
    /// Within-superdomain pairwise MMD sum; `None` when no aggregation ran.
    pub aggregation_objective: Option<f64>,
    pub sigma: Option<f64>,
    /// Squared-MMD matrix between source subjects, with diagnostics on.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub mmd: Option<Vec<Vec<f64>>>,
    /// L2 norms of the domain prototypes, with diagnostics on.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub prototype_norms: Option<Vec<Option<f64>>>,
}

/// Everything prediction needs after training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct TrainedState<T> {
    pub model: Model<T>,
    pub bank: PrototypeBank<T>,
    pub assignment: SuperdomainAssignment,
    /// Original subject id of each source-local subject.
    pub source_subjects: Vec<usize>,
    pub n_features: usize,
    pub epochs: Vec<EpochLog>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct TrainOptions {
    pub diagnostics: bool,
}

fn batch_order(data_subjects: &[usize], n_source: usize, balanced: bool, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let n = data_subjects.len();
    if !balanced {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(rng);
        return order;
    }
    // deal subjects round-robin so every batch sees each subject equally often
    let mut per: Vec<Vec<usize>> = vec![Vec::new(); n_source];
    for (i, &s) in data_subjects.iter().enumerate() {
        per[s].push(i);
    }
    for p in &mut per {
        p.shuffle(rng);
    }
    let longest = per.iter().map(Vec::len).max().unwrap_or(0);
    let mut order = Vec::with_capacity(n);
    for r in 0..longest {
        for p in &per {
            if let Some(&i) = p.get(r) {
                order.push(i);
            }
        }
    }
    order
}

/// Trains on one fold's source data. The target subject is never an argument.
pub fn train_fold<T: Scalar>(
    data: &SourceData<T>,
    source_subjects: Vec<usize>,
    cfg: &TrainConfig,
    fold_seed: u64,
    opts: TrainOptions,
    trace: &mut OpTrace,
) -> Result<TrainedState<T>> {
    cfg.validate()?;
    let m = data.n_classes;
    for c in 0..m {
        if !data.classes.contains(&c) {
            return Err(Error::Training(format!("class {c} missing from the source data")));
        }
    }
    for s in 0..data.n_source {
        if data.rows_of_subject(s).len() < 2 {
            return Err(Error::Training(format!("source subject {s} has fewer than 2 samples")));
        }
    }
    let mut init_rng = ChaCha8Rng::seed_from_u64(derive_seed(fold_seed, Stream::Init, 0));
    let nets = Networks::new(data.x.cols(), data.n_source, m, &cfg.arch, &mut init_rng)?;
    let hidden = nets.hidden();
    let theta = if cfg.trains_theta() {
        init_theta(hidden, &mut init_rng)
    } else {
        Matrix::identity(hidden)
    };
    let mut model = Model { nets, theta };
    let mut grads = model.grads();
    let mut opt = OptimizerState::new();
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(derive_seed(fold_seed, Stream::Shuffle, 0));
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(derive_seed(fold_seed, Stream::Dropout, 0));
    let mut agg_rng = ChaCha8Rng::seed_from_u64(derive_seed(fold_seed, Stream::Aggregate, 0));
    let schedule = cfg.alpha_schedule();
    let k_eff = cfg.effective_k(data.n_source);
    let by_subject: Vec<Vec<usize>> = (0..data.n_source).map(|s| data.rows_of_subject(s)).collect();

    let mut bank: Option<PrototypeBank<T>> = None;
    let mut assignment: Option<SuperdomainAssignment> = None;
    let mut epochs = Vec::with_capacity(cfg.max_epoch);

    for epoch in 1..=cfg.max_epoch {
        let order = batch_order(&data.subjects, data.n_source, cfg.balanced_domains, &mut shuffle_rng);
        let mut sum = LossParts::default();
        let mut seen = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            if chunk.len() < 2 {
                continue;
            }
            let x = data.x.select_rows(chunk);
            let subjects: Vec<usize> = chunk.iter().map(|&i| data.subjects[i]).collect();
            let classes: Vec<usize> = chunk.iter().map(|&i| data.classes[i]).collect();
            let superdomain: Vec<usize> = match &assignment {
                Some(a) => subjects.iter().map(|&s| a.assign[s]).collect(),
                None => vec![0; chunk.len()],
            };
            let batch = MiniBatch {
                x: &x,
                subjects: &subjects,
                classes: &classes,
                superdomain: &superdomain,
            };
            let parts = objective(
                &model,
                &mut grads,
                batch,
                bank.as_ref(),
                cfg,
                TermMask::ALL,
                &mut dropout_rng,
                trace,
            )?;
            if !parts.is_finite() {
                return Err(Error::Training(format!("non-finite loss in epoch {epoch}")));
            }
            trace.record("optimizer_step");
            apply_step(&mut model, &mut grads, &mut opt, &cfg.optimizer, cfg.trains_theta());
            sum.add_scaled(&parts, chunk.len() as f64);
            seen += chunk.len();
        }
        if seen == 0 {
            return Err(Error::Training("no minibatch with at least 2 samples".into()));
        }
        let mut loss = LossParts::default();
        loss.add_scaled(&sum, 1.0 / seen as f64);
        if !model.is_finite() {
            return Err(Error::Training(format!("parameters diverged in epoch {epoch}")));
        }

        // end of epoch: regroup subjects and refresh prototypes
        trace.record("features");
        let (x_d, x_c) = model.nets.features(&data.x)?;
        let mut mmd_diag = None;
        let (next, agg_objective, sigma) = if cfg.disabled(Ablation::DomainPrototype) {
            (SuperdomainAssignment::single(data.n_source), None, None)
        } else if cfg.disabled(Ablation::Aggregation) {
            (SuperdomainAssignment::identity(data.n_source), None, None)
        } else if epoch == 1 {
            // first-epoch domain features are untrained
            (SuperdomainAssignment::single(data.n_source), None, None)
        } else {
            trace.record("mmd_matrix");
            trace.record("aggregate");
            let domains: Vec<Matrix<T>> = by_subject.iter().map(|r| x_d.select_rows(r)).collect();
            let (mmd, a) = aggregate_domains(&domains, k_eff, &cfg.kernel, cfg.aggregate_on, &mut agg_rng)?;
            if opts.diagnostics {
                mmd_diag = Some(
                    (0..mmd.n())
                        .map(|i| (0..mmd.n()).map(|j| mmd.get(i, j).as_f64()).collect())
                        .collect(),
                );
            }
            let obj = a.objective;
            (a, Some(obj), Some(mmd.sigma.as_f64()))
        };
        let row_superdomain: Vec<usize> = data.subjects.iter().map(|&s| next.assign[s]).collect();
        trace.record("fresh_prototypes");
        let fresh = FreshPrototypes::compute(&x_d, &x_c, &row_superdomain, &data.classes, next.k, m)?;
        let alpha = if cfg.disabled(Ablation::AdaptiveAlpha) {
            trace.record("proto_update:constant");
            cfg.alpha_high
        } else {
            trace.record("proto_update:adaptive");
            alpha_at(epoch, &schedule)?
        };
        let b = match bank.take() {
            None => PrototypeBank::new(next.k, m, hidden),
            Some(mut b) => {
                trace.record("rekey");
                b.rekey(&fresh);
                b
            }
        };
        let mut b = b;
        b.adaptive_update(&fresh, alpha, epoch)?;
        for k in 0..b.k() {
            if b.initialized_classes(k).len() < 2.min(m) {
                return Err(Error::EmptySuperdomain(format!("superdomain {k} has too few class prototypes")));
            }
        }
        epochs.push(EpochLog {
            epoch,
            loss,
            alpha,
            k: next.k,
            assignment: next.assign.clone(),
            aggregation_objective: agg_objective,
            sigma,
            mmd: mmd_diag,
            prototype_norms: opts.diagnostics.then(|| b.domain_norms()),
        });
        bank = Some(b);
        assignment = Some(next);
    }
    Ok(TrainedState {
        model,
        bank: bank.expect("at least one epoch ran"),
        assignment: assignment.expect("at least one epoch ran"),
        source_subjects,
        n_features: data.x.cols(),
        epochs,
    })
}

/// Predictions and accuracy on held-out rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Evaluation<T> {
    pub accuracy: f64,
    pub confusion: ConfusionMatrix,
    pub predictions: Vec<Prediction<T>>,
}

pub fn evaluate<T: Scalar>(state: &TrainedState<T>, x: &Matrix<T>, labels: &[usize]) -> Result<Evaluation<T>> {
    if labels.len() != x.rows() {
        return Err(Error::Dimension(format!("{} rows with {} labels", x.rows(), labels.len())));
    }
    let predictions = predict(x, &state.model.nets, &state.bank, &state.model.theta)?;
    let predicted: Vec<usize> = predictions.iter().map(|p| p.label).collect();
    let confusion = ConfusionMatrix::from_pairs(state.bank.n_classes, labels, &predicted);
    Ok(Evaluation {
        accuracy: confusion.accuracy(),
        confusion,
        predictions,
    })
}
