use std::sync::atomic::{AtomicUsize, Ordering};

use crate::dataio::Dataset;
use crate::linalg::Matrix;
use crate::scalar::Scalar;

/// Dataset wrapper that counts row reads per subject.
#[derive(Debug)]
pub struct AuditedDataset<'a, T> {
    ds: &'a Dataset<T>,
    reads: Vec<AtomicUsize>,
}

/// Rows gathered through an [`AuditedDataset`].
#[derive(Debug, Clone, PartialEq)]
pub struct Rows<T> {
    pub x: Matrix<T>,
    pub classes: Vec<usize>,
    pub subjects: Vec<usize>,
}

impl<'a, T: Scalar> AuditedDataset<'a, T> {
    pub fn new(ds: &'a Dataset<T>) -> Self {
        Self {
            ds,
            reads: (0..ds.n_subjects()).map(|_| AtomicUsize::new(0)).collect(),
        }
    }

    pub fn dataset(&self) -> &Dataset<T> {
        self.ds
    }

    /// Copies the given rows out, counting one read per row against its subject.
    pub fn gather(&self, idx: &[usize]) -> Rows<T> {
        let f = self.ds.n_features();
        let mut data = Vec::with_capacity(idx.len() * f);
        let mut classes = Vec::with_capacity(idx.len());
        let mut subjects = Vec::with_capacity(idx.len());
        for &i in idx {
            let s = &self.ds.samples()[i];
            self.reads[s.subject_id].fetch_add(1, Ordering::Relaxed);
            data.extend_from_slice(&s.features);
            classes.push(s.class_label);
            subjects.push(s.subject_id);
        }
        Rows {
            x: Matrix::from_vec(idx.len(), f, data).expect("row width is the dataset width"),
            classes,
            subjects,
        }
    }

    pub fn reads(&self, subject: usize) -> usize {
        self.reads[subject].load(Ordering::Relaxed)
    }
}
