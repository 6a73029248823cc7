use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::audit::AuditedDataset;
use super::config::{Ablation, TrainConfig};
use super::fold::{evaluate, train_fold, EpochLog, SourceData, TrainOptions, TrainedState};
use super::metrics::{ConfusionMatrix, Summary};
use super::objective::OpTrace;
use super::{derive_seed, Stream, VERSION};
use crate::dataio::{corrupt_labels, make_splits, Dataset, Fold, Protocol};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const REPORT_FORMAT: &str = "matldc-report/v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunOptions {
    /// Worker threads for folds; 1 runs them sequentially.
    pub jobs: usize,
    pub diagnostics: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self { jobs: 1, diagnostics: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldReport {
    /// Dense subject index of the held-out subject.
    pub target_subject: usize,
    /// The same subject's id as it appeared in the input.
    pub target_subject_id: i64,
    pub n_source_samples: usize,
    pub n_target_samples: usize,
    pub accuracy: f64,
    pub confusion: ConfusionMatrix,
    /// Rows of the held-out subject read before evaluation started.
    pub target_reads_before_eval: usize,
    pub effective_k: usize,
    /// Superdomain of each source subject after the last epoch.
    pub final_assignment: Vec<usize>,
    pub source_subjects: Vec<usize>,
    pub epochs: Vec<EpochLog>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub format: String,
    pub version: String,
    pub protocol: Protocol,
    pub config: TrainConfig,
    pub folds: Vec<FoldReport>,
    pub accuracy: Summary,
    /// Sum of the per-fold confusion matrices.
    pub confusion: ConfusionMatrix,
}

impl RunReport {
    pub fn fold_accuracies(&self) -> Vec<f64> {
        self.folds.iter().map(|f| f.accuracy).collect()
    }

    /// Total target reads before evaluation across every fold; 0 when the
    /// held-out subjects stayed unseen.
    pub fn target_reads_before_eval(&self) -> usize {
        self.folds.iter().map(|f| f.target_reads_before_eval).sum()
    }

    /// `"Method  84.70 ± 04.63"` line.
    pub fn table_line(&self, name: &str) -> String {
        format!("{name}\t{}", self.accuracy.percent())
    }

    /// Per-fold accuracies as CSV rows.
    pub fn folds_csv(&self) -> String {
        let mut s = String::from("target_subject,accuracy,n_target,effective_k\n");
        for f in &self.folds {
            s.push_str(&format!(
                "{},{:.6},{},{}\n",
                f.target_subject_id, f.accuracy, f.n_target_samples, f.effective_k
            ));
        }
        s
    }

    /// Per-epoch losses of every fold as CSV rows.
    pub fn epochs_csv(&self) -> String {
        let mut s = String::from("target_subject,epoch,cls,dom,fd,pair,aux,reg,total,alpha,k\n");
        for f in &self.folds {
            for e in &f.epochs {
                let l = &e.loss;
                s.push_str(&format!(
                    "{},{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.4},{}\n",
                    f.target_subject_id, e.epoch, l.cls, l.dom, l.fd, l.pair, l.aux, l.reg, l.total, e.alpha, e.k
                ));
            }
        }
        s
    }
}

/// Trains on a fold's source subjects with the seeds a protocol run uses for
/// that fold.
pub fn fit_fold<T: Scalar>(
    ds: &Dataset<T>,
    fold: &Fold,
    cfg: &TrainConfig,
    opts: RunOptions,
    trace: &mut OpTrace,
) -> Result<TrainedState<T>> {
    fit_audited(&AuditedDataset::new(ds), fold, cfg, opts, trace)
}

fn fit_audited<T: Scalar>(
    audited: &AuditedDataset<'_, T>,
    fold: &Fold,
    cfg: &TrainConfig,
    opts: RunOptions,
    trace: &mut OpTrace,
) -> Result<TrainedState<T>> {
    let ds = audited.dataset();
    let fold_seed = derive_seed(cfg.seed, Stream::Fold, fold.target_subject as u64);
    let (mut data, ids) = SourceData::from_rows(audited.gather(&fold.source_indices(ds)), ds.n_classes())?;
    if cfg.label_noise > 0.0 {
        let seed = derive_seed(fold_seed, Stream::Noise, 0);
        data.classes = corrupt_labels(&data.classes, ds.n_classes(), cfg.label_noise, seed)?;
    }
    train_fold(&data, ids, cfg, fold_seed, TrainOptions { diagnostics: opts.diagnostics }, trace)
}

/// Trains and evaluates one fold. Reads go through a per-fold audit so the
/// held-out subject's count can be checked before evaluation.
pub fn run_fold<T: Scalar>(
    ds: &Dataset<T>,
    fold: &Fold,
    cfg: &TrainConfig,
    opts: RunOptions,
    trace: &mut OpTrace,
) -> Result<FoldReport> {
    let audited = AuditedDataset::new(ds);
    let tgt_idx = fold.target_indices(ds);
    if tgt_idx.is_empty() {
        return Err(Error::Protocol(format!("subject {} has no samples in this protocol", fold.target_subject)));
    }
    let state = fit_audited(&audited, fold, cfg, opts, trace)?;
    let target_reads_before_eval = audited.reads(fold.target_subject);
    let target = audited.gather(&tgt_idx);
    let eval = evaluate(&state, &target.x, &target.classes)?;
    Ok(FoldReport {
        target_subject: fold.target_subject,
        target_subject_id: ds.id_maps().subjects[fold.target_subject],
        n_source_samples: fold.source_indices(ds).len(),
        n_target_samples: tgt_idx.len(),
        accuracy: eval.accuracy,
        confusion: eval.confusion,
        target_reads_before_eval,
        effective_k: state.assignment.k,
        final_assignment: state.assignment.assign.clone(),
        source_subjects: state.source_subjects,
        epochs: state.epochs,
    })
}

/// Leave-one-subject-out run over every subject.
pub fn run_protocol<T: Scalar>(
    ds: &Dataset<T>,
    protocol: Protocol,
    cfg: &TrainConfig,
    opts: RunOptions,
) -> Result<RunReport> {
    cfg.validate()?;
    let plan = make_splits(ds, protocol)?;
    let run = |fold: &Fold| run_fold(ds, fold, cfg, opts, &mut OpTrace::default());
    let folds: Vec<FoldReport> = if opts.jobs <= 1 {
        plan.folds.iter().map(run).collect::<Result<_>>()?
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(opts.jobs)
            .build()
            .map_err(|e| Error::Training(format!("thread pool: {e}")))?;
        pool.install(|| plan.folds.par_iter().map(run).collect::<Result<_>>())?
    };
    let mut confusion = ConfusionMatrix::new(ds.n_classes());
    for f in &folds {
        confusion.merge(&f.confusion);
    }
    let accuracy = Summary::of(&folds.iter().map(|f| f.accuracy).collect::<Vec<_>>());
    Ok(RunReport {
        format: REPORT_FORMAT.into(),
        version: VERSION.into(),
        protocol,
        config: cfg.clone(),
        folds,
        accuracy,
        confusion,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseRow {
    pub eta: f64,
    pub pointwise: Summary,
    pub pairwise: Summary,
}

/// Runs the protocol at each noise level with both prototype losses and
/// otherwise identical settings and seeds.
pub fn noise_sweep<T: Scalar>(
    ds: &Dataset<T>,
    protocol: Protocol,
    etas: &[f64],
    cfg: &TrainConfig,
    opts: RunOptions,
) -> Result<Vec<NoiseRow>> {
    etas.iter()
        .map(|&eta| {
            let mut pair_cfg = cfg.clone();
            pair_cfg.label_noise = eta;
            pair_cfg.disable.remove(&Ablation::Pairwise);
            let point_cfg = pair_cfg.clone().with_disabled([Ablation::Pairwise]);
            Ok(NoiseRow {
                eta,
                pointwise: run_protocol(ds, protocol, &point_cfg, opts)?.accuracy,
                pairwise: run_protocol(ds, protocol, &pair_cfg, opts)?.accuracy,
            })
        })
        .collect()
}

pub fn noise_csv(rows: &[NoiseRow]) -> String {
    let mut s = String::from("eta,pointwise_mean,pointwise_std,pairwise_mean,pairwise_std,pointwise_drop,pairwise_drop\n");
    let base = rows.iter().find(|r| r.eta == 0.0);
    for r in rows {
        let (dp, dq) = base.map_or((f64::NAN, f64::NAN), |b| {
            (b.pointwise.mean - r.pointwise.mean, b.pairwise.mean - r.pairwise.mean)
        });
        s.push_str(&format!(
            "{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}\n",
            r.eta, r.pointwise.mean, r.pointwise.std, r.pairwise.mean, r.pairwise.std, dp, dq
        ));
    }
    s
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KRow {
    pub k: usize,
    pub accuracy: Summary,
}

/// One protocol run per superdomain count with shared seeds.
pub fn k_sweep<T: Scalar>(
    ds: &Dataset<T>,
    protocol: Protocol,
    ks: &[usize],
    cfg: &TrainConfig,
    opts: RunOptions,
) -> Result<Vec<KRow>> {
    ks.iter()
        .map(|&k| {
            let c = TrainConfig { k, ..cfg.clone() };
            Ok(KRow {
                k,
                accuracy: run_protocol(ds, protocol, &c, opts)?.accuracy,
            })
        })
        .collect()
}

pub fn k_csv(rows: &[KRow]) -> String {
    let mut s = String::from("K,mean,std\n");
    for r in rows {
        s.push_str(&format!("{},{:.6},{:.6}\n", r.k, r.accuracy.mean, r.accuracy.std));
    }
    s
}
