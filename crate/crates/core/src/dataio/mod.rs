//! Samples, datasets and leave-one-subject-out split plans.
//!
//! Ids are dense and 0-based everywhere inside the crate. When data comes from
//! a file the original label/subject/session values are kept in [`IdMaps`] so
//! that they can be written back unchanged.

mod csv_io;
mod noise;
mod splits;
mod synth;

pub use csv_io::{load_csv, read_csv, write_csv, CsvSchema};
pub use noise::{corrupt_labels, inject_label_noise};
pub use splits::{make_splits, Fold, Protocol, SplitPlan};
pub use synth::{synth_generate, SynthConfig};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// One feature vector with its class, subject and session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Sample<T> {
    pub features: Vec<T>,
    pub class_label: usize,
    pub subject_id: usize,
    pub session_id: usize,
}

/// Original (pre-remap) id values, indexed by dense id.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IdMaps {
    pub labels: Vec<i64>,
    pub subjects: Vec<i64>,
    pub sessions: Vec<i64>,
}

impl IdMaps {
    pub fn identity(n_classes: usize, n_subjects: usize, n_sessions: usize) -> Self {
        let seq = |n: usize| (0..n as i64).collect();
        Self {
            labels: seq(n_classes),
            subjects: seq(n_subjects),
            sessions: seq(n_sessions),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Dataset<T> {
    samples: Vec<Sample<T>>,
    n_features: usize,
    n_classes: usize,
    n_subjects: usize,
    n_sessions: usize,
    class_names: Option<Vec<String>>,
    id_maps: IdMaps,
}

impl<T: Scalar> Dataset<T> {
    /// Validates and wraps samples whose ids are already dense.
    pub fn new(
        samples: Vec<Sample<T>>,
        n_classes: usize,
        n_subjects: usize,
        n_sessions: usize,
    ) -> Result<Self> {
        let id_maps = IdMaps::identity(n_classes, n_subjects, n_sessions);
        Self::with_id_maps(samples, n_classes, n_subjects, n_sessions, id_maps)
    }

    pub fn with_id_maps(
        samples: Vec<Sample<T>>,
        n_classes: usize,
        n_subjects: usize,
        n_sessions: usize,
        id_maps: IdMaps,
    ) -> Result<Self> {
        let n_features = samples
            .first()
            .map(|s| s.features.len())
            .ok_or_else(|| Error::Validation("dataset has no samples".into()))?;
        if n_features == 0 {
            return Err(Error::Dimension("samples have no features".into()));
        }
        let mut seen = vec![false; n_subjects];
        for (i, s) in samples.iter().enumerate() {
            if s.features.len() != n_features {
                return Err(Error::Dimension(format!(
                    "sample {i} has {} features, expected {n_features}",
                    s.features.len()
                )));
            }
            if let Some(j) = s.features.iter().position(|x| !x.is_finite()) {
                return Err(Error::Validation(format!(
                    "sample {i} feature {j} is not finite"
                )));
            }
            if s.class_label >= n_classes {
                return Err(Error::Validation(format!(
                    "sample {i} class {} outside [0, {n_classes})",
                    s.class_label
                )));
            }
            if s.subject_id >= n_subjects {
                return Err(Error::Validation(format!(
                    "sample {i} subject {} outside [0, {n_subjects})",
                    s.subject_id
                )));
            }
            if s.session_id >= n_sessions {
                return Err(Error::Validation(format!(
                    "sample {i} session {} outside [0, {n_sessions})",
                    s.session_id
                )));
            }
            seen[s.subject_id] = true;
        }
        if let Some(missing) = seen.iter().position(|&x| !x) {
            return Err(Error::Validation(format!("subject {missing} has no samples")));
        }
        Ok(Self {
            samples,
            n_features,
            n_classes,
            n_subjects,
            n_sessions,
            class_names: None,
            id_maps,
        })
    }

    /// Infers the dimensions from the largest ids present.
    pub fn from_samples(samples: Vec<Sample<T>>) -> Result<Self> {
        let dim = |f: fn(&Sample<T>) -> usize| samples.iter().map(f).max().map_or(0, |m| m + 1);
        let m = dim(|s| s.class_label);
        let n = dim(|s| s.subject_id);
        let s = dim(|s| s.session_id);
        Self::new(samples, m, n, s)
    }

    pub fn with_class_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.n_classes {
            return Err(Error::Validation(format!(
                "{} class names for {} classes",
                names.len(),
                self.n_classes
            )));
        }
        self.class_names = Some(names);
        Ok(self)
    }

    pub fn samples(&self) -> &[Sample<T>] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn n_subjects(&self) -> usize {
        self.n_subjects
    }

    pub fn n_sessions(&self) -> usize {
        self.n_sessions
    }

    pub fn class_names(&self) -> Option<&[String]> {
        self.class_names.as_deref()
    }

    pub fn id_maps(&self) -> &IdMaps {
        &self.id_maps
    }

    /// Same dataset with replaced labels; used by noise injection.
    pub(crate) fn relabeled(&self, labels: impl Iterator<Item = usize>) -> Self {
        let mut out = self.clone();
        for (s, l) in out.samples.iter_mut().zip(labels) {
            s.class_label = l;
        }
        out
    }
}

/// One-hot encoding of `labels` over `n` classes.
pub fn one_hot<T: Scalar>(labels: &[usize], n: usize) -> crate::linalg::Matrix<T> {
    let mut m = crate::linalg::Matrix::zeros(labels.len(), n);
    for (i, &l) in labels.iter().enumerate() {
        m[(i, l)] = T::one();
    }
    m
}
