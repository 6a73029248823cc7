use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Leave-one-subject-out variants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Protocol {
    /// Only session 0 on both sides.
    SingleSession,
    /// All sessions on both sides.
    CrossSession,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fold {
    pub source_subjects: Vec<usize>,
    pub target_subject: usize,
    pub session_filter: Option<usize>,
}

impl Fold {
    fn keeps_session(&self, session: usize) -> bool {
        self.session_filter.is_none_or(|s| s == session)
    }

    /// Indices of the source samples, in dataset order.
    pub fn source_indices<T: Scalar>(&self, ds: &Dataset<T>) -> Vec<usize> {
        ds.samples()
            .iter()
            .enumerate()
            .filter(|(_, s)| s.subject_id != self.target_subject && self.keeps_session(s.session_id))
            .map(|(i, _)| i)
            .collect()
    }

    pub fn target_indices<T: Scalar>(&self, ds: &Dataset<T>) -> Vec<usize> {
        ds.samples()
            .iter()
            .enumerate()
            .filter(|(_, s)| s.subject_id == self.target_subject && self.keeps_session(s.session_id))
            .map(|(i, _)| i)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub protocol: Protocol,
    pub folds: Vec<Fold>,
}

pub fn make_splits<T: Scalar>(ds: &Dataset<T>, protocol: Protocol) -> Result<SplitPlan> {
    let n = ds.n_subjects();
    if n < 2 {
        return Err(Error::Protocol(format!("{n} subject(s); leave-one-out needs at least 2")));
    }
    let session_filter = match protocol {
        Protocol::SingleSession => Some(0),
        Protocol::CrossSession => None,
    };
    let folds = (0..n)
        .map(|target| Fold {
            source_subjects: (0..n).filter(|&s| s != target).collect(),
            target_subject: target,
            session_filter,
        })
        .collect();
    Ok(SplitPlan { protocol, folds })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::{synth_generate, SynthConfig};

    fn data(n: usize, sessions: usize) -> Dataset<f64> {
        synth_generate(&SynthConfig {
            n_subjects: n,
            n_sessions: sessions,
            n_features: 2,
            per_class_count: 2,
            ..Default::default()
        })
        .unwrap()
    }

    #[test]
    fn fifteen_subjects_single_session() {
        let ds = data(15, 3);
        let plan = make_splits(&ds, Protocol::SingleSession).unwrap();
        assert_eq!(plan.folds.len(), 15);
        for (i, f) in plan.folds.iter().enumerate() {
            assert_eq!(f.target_subject, i);
            assert_eq!(f.source_subjects.len(), 14);
            assert!(!f.source_subjects.contains(&i));
            let src = f.source_indices(&ds);
            let tgt = f.target_indices(&ds);
            assert!(src.iter().chain(&tgt).all(|&j| ds.samples()[j].session_id == 0));
            assert!(tgt.iter().all(|&j| ds.samples()[j].subject_id == i));
            assert!(src.iter().all(|&j| ds.samples()[j].subject_id != i));
        }
    }

    #[test]
    fn minimal_two_subjects() {
        let plan = make_splits(&data(2, 1), Protocol::SingleSession).unwrap();
        assert_eq!(plan.folds.len(), 2);
        assert_eq!(plan.folds[0].source_subjects, vec![1]);
        assert_eq!(plan.folds[1].source_subjects, vec![0]);
    }

    #[test]
    fn cross_session_keeps_every_session() {
        let ds = data(3, 3);
        let plan = make_splits(&ds, Protocol::CrossSession).unwrap();
        for f in &plan.folds {
            let mut sess: Vec<usize> =
                f.source_indices(&ds).iter().map(|&j| ds.samples()[j].session_id).collect();
            sess.dedup();
            sess.sort_unstable();
            sess.dedup();
            assert_eq!(sess, vec![0, 1, 2]);
            let mut tsess: Vec<usize> =
                f.target_indices(&ds).iter().map(|&j| ds.samples()[j].session_id).collect();
            tsess.sort_unstable();
            tsess.dedup();
            assert_eq!(tsess, vec![0, 1, 2]);
        }
    }

    #[test]
    fn single_subject_is_protocol_error() {
        assert!(matches!(make_splits(&data(1, 1), Protocol::SingleSession), Err(Error::Protocol(_))));
    }
}
