//! Domain and class prototypes per superdomain, blended across epochs with a
//! decaying update weight.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{squared_distance, Matrix};
use crate::scalar::Scalar;

/// Arithmetic mean of the rows.
pub fn compute_domain_prototype<T: Scalar>(rows: &Matrix<T>) -> Result<Vec<T>> {
    if rows.rows() == 0 {
        return Err(Error::EmptySuperdomain("no domain features to average".into()));
    }
    Ok(mean_of(rows.row_iter(), rows.cols()))
}

/// Mean of the rows labelled `class`; `None` when the class is absent.
pub fn compute_class_prototype<T: Scalar>(rows: &Matrix<T>, labels: &[usize], class: usize) -> Option<Vec<T>> {
    debug_assert_eq!(rows.rows(), labels.len());
    let selected = labels.iter().zip(rows.row_iter()).filter(|(&l, _)| l == class).map(|(_, r)| r);
    let count = labels.iter().filter(|&&l| l == class).count();
    (count > 0).then(|| mean_of(selected, rows.cols()))
}

fn mean_of<'a, T: Scalar>(rows: impl Iterator<Item = &'a [T]>, cols: usize) -> Vec<T> {
    let mut acc = vec![T::zero(); cols];
    let mut n = 0usize;
    for r in rows {
        for (a, &v) in acc.iter_mut().zip(r) {
            *a += v;
        }
        n += 1;
    }
    let n = T::of_usize(n);
    acc.into_iter().map(|a| a / n).collect()
}

/// `alpha(t) = alpha_low + (alpha_high - alpha_low) * (1 - t / max_epoch)^power`
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlphaSchedule {
    pub alpha_high: f64,
    pub alpha_low: f64,
    pub power: f64,
    pub max_epoch: usize,
}

impl Default for AlphaSchedule {
    fn default() -> Self {
        Self {
            alpha_high: 0.8,
            alpha_low: 0.2,
            power: 2.0,
            max_epoch: 100,
        }
    }
}

impl AlphaSchedule {
    pub fn validate(&self) -> Result<()> {
        let unit = |v: f64| v > 0.0 && v <= 1.0;
        if !unit(self.alpha_high) || !unit(self.alpha_low) {
            return Err(Error::config("alpha", "alpha_high and alpha_low must lie in (0, 1]"));
        }
        if self.alpha_high < self.alpha_low {
            return Err(Error::config("alpha", "alpha_high must be >= alpha_low"));
        }
        if !(self.power > 0.0 && self.power.is_finite()) {
            return Err(Error::config("alpha.power", "must be positive"));
        }
        if self.max_epoch == 0 {
            return Err(Error::config("max_epoch", "must be positive"));
        }
        Ok(())
    }
}

pub fn alpha_at(t: usize, sched: &AlphaSchedule) -> Result<f64> {
    if t > sched.max_epoch {
        return Err(Error::Schedule(format!("epoch {t} beyond max_epoch {}", sched.max_epoch)));
    }
    let frac = 1.0 - t as f64 / sched.max_epoch as f64;
    Ok(sched.alpha_low + (sched.alpha_high - sched.alpha_low) * frac.powf(sched.power))
}

/// Prototypes computed from one epoch's features. `None` marks a superdomain
/// or (superdomain, class) slot that received no rows.
#[derive(Debug, Clone, PartialEq)]
pub struct FreshPrototypes<T> {
    pub mu_d: Vec<Option<Vec<T>>>,
    pub mu_c: Vec<Vec<Option<Vec<T>>>>,
}

impl<T: Scalar> FreshPrototypes<T> {
    /// `superdomain[i]` and `labels[i]` describe row `i` of both feature matrices.
    pub fn compute(
        x_d: &Matrix<T>,
        x_c: &Matrix<T>,
        superdomain: &[usize],
        labels: &[usize],
        k: usize,
        n_classes: usize,
    ) -> Result<Self> {
        if x_d.rows() != superdomain.len() || x_c.rows() != labels.len() || x_d.rows() != x_c.rows() {
            return Err(Error::Dimension("feature rows and labels disagree".into()));
        }
        let mut mu_d = Vec::with_capacity(k);
        let mut mu_c = Vec::with_capacity(k);
        for s in 0..k {
            let idx: Vec<usize> = (0..superdomain.len()).filter(|&i| superdomain[i] == s).collect();
            if idx.is_empty() {
                mu_d.push(None);
                mu_c.push(vec![None; n_classes]);
                continue;
            }
            mu_d.push(Some(compute_domain_prototype(&x_d.select_rows(&idx))?));
            let xc = x_c.select_rows(&idx);
            let ls: Vec<usize> = idx.iter().map(|&i| labels[i]).collect();
            mu_c.push((0..n_classes).map(|m| compute_class_prototype(&xc, &ls, m)).collect());
        }
        Ok(Self { mu_d, mu_c })
    }
}

/// Stored prototypes: `mu_d[k]` and `mu_c[k][m]`, `None` until initialized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct PrototypeBank<T> {
    pub dim: usize,
    pub n_classes: usize,
    pub mu_d: Vec<Option<Vec<T>>>,
    pub mu_c: Vec<Vec<Option<Vec<T>>>>,
    /// Epoch of the last update.
    pub epoch: Option<usize>,
}

fn blend<T: Scalar>(slot: &mut Option<Vec<T>>, fresh: &Option<Vec<T>>, alpha: T) {
    match (slot.as_mut(), fresh) {
        (_, None) => {}
        (None, Some(f)) => *slot = Some(f.clone()),
        (Some(old), Some(f)) => {
            for (o, &v) in old.iter_mut().zip(f) {
                *o = (T::one() - alpha) * *o + alpha * v;
            }
        }
    }
}

impl<T: Scalar> PrototypeBank<T> {
    pub fn new(k: usize, n_classes: usize, dim: usize) -> Self {
        Self {
            dim,
            n_classes,
            mu_d: vec![None; k],
            mu_c: vec![vec![None; n_classes]; k],
            epoch: None,
        }
    }

    pub fn k(&self) -> usize {
        self.mu_d.len()
    }

    /// `mu <- (1 - alpha) mu + alpha fresh` per slot; empty slots take the
    /// fresh value and slots without fresh data keep their value.
    pub fn adaptive_update(&mut self, fresh: &FreshPrototypes<T>, alpha: f64, epoch: usize) -> Result<()> {
        if fresh.mu_d.len() != self.k() {
            return Err(Error::Dimension(format!(
                "{} fresh superdomains for a bank of {}",
                fresh.mu_d.len(),
                self.k()
            )));
        }
        let a = T::of(alpha);
        for (slot, f) in self.mu_d.iter_mut().zip(&fresh.mu_d) {
            blend(slot, f, a);
        }
        for (slots, fs) in self.mu_c.iter_mut().zip(&fresh.mu_c) {
            for (slot, f) in slots.iter_mut().zip(fs) {
                blend(slot, f, a);
            }
        }
        self.epoch = Some(epoch);
        Ok(())
    }

    /// Carries prototype history over to a new superdomain labelling.
    ///
    /// New superdomains are greedily matched to initialized old slots by the
    /// smallest distance between fresh and stored domain prototypes. The bank
    /// is rebuilt with `fresh.mu_d.len()` slots in the new labelling; unmatched
    /// new superdomains start uninitialized. Returns the old slot of each new one.
    pub fn rekey(&mut self, fresh: &FreshPrototypes<T>) -> Vec<Option<usize>> {
        let k_new = fresh.mu_d.len();
        let mut pairs: Vec<(T, usize, usize)> = Vec::new();
        for (i, f) in fresh.mu_d.iter().enumerate() {
            let Some(f) = f else { continue };
            for (j, old) in self.mu_d.iter().enumerate() {
                if let Some(old) = old {
                    pairs.push((squared_distance(f, old), i, j));
                }
            }
        }
        pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        let mut mapping = vec![None; k_new];
        let mut used = vec![false; self.k()];
        for (_, i, j) in pairs {
            if mapping[i].is_none() && !used[j] {
                mapping[i] = Some(j);
                used[j] = true;
            }
        }
        let mu_d = mapping.iter().map(|m| m.and_then(|j| self.mu_d[j].clone())).collect();
        let mu_c = mapping
            .iter()
            .map(|m| match m {
                Some(j) => self.mu_c[*j].clone(),
                None => vec![None; self.n_classes],
            })
            .collect();
        self.mu_d = mu_d;
        self.mu_c = mu_c;
        mapping
    }

    /// All `mu_d` as a K x dim matrix.
    pub fn domain_matrix(&self) -> Result<Matrix<T>> {
        let rows = self
            .mu_d
            .iter()
            .enumerate()
            .map(|(k, v)| {
                v.clone()
                    .ok_or_else(|| Error::State(format!("domain prototype {k} is not initialized")))
            })
            .collect::<Result<Vec<_>>>()?;
        Matrix::from_rows(&rows)
    }

    pub fn initialized_classes(&self, k: usize) -> Vec<usize> {
        (0..self.n_classes).filter(|&m| self.mu_c[k][m].is_some()).collect()
    }

    /// L2 norms of the initialized domain prototypes, for drift logging.
    pub fn domain_norms(&self) -> Vec<Option<f64>> {
        self.mu_d
            .iter()
            .map(|v| v.as_ref().map(|v| crate::linalg::norm(v).as_f64()))
            .collect()
    }

    pub fn is_finite(&self) -> bool {
        let ok = |v: &Option<Vec<T>>| v.as_ref().is_none_or(|v| v.iter().all(|x| x.is_finite()));
        self.mu_d.iter().all(ok) && self.mu_c.iter().flatten().all(ok)
    }
}
