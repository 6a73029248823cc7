//! Synthetic data with planted class and domain structure.
//!
//! Each sample is
//! `class_centroid(group, class) + subject_offset(subject) + session_offset(subject, session) + noise`. Subjects are dealt round-robin
//! into `n_groups` domain groups; subjects of a group share a group center and
//! differ by `group_spread`. With `group_class_variation = 0` the class centroid
//! does not depend on the group and the model is purely additive.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{Dataset, Sample};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub n_subjects: usize,
    pub n_classes: usize,
    pub n_features: usize,
    /// Samples per (subject, session, class).
    pub per_class_count: usize,
    pub n_sessions: usize,
    /// Number of domain groups; `None` gives every subject its own group.
    pub n_groups: Option<usize>,
    pub domain_shift_scale: f64,
    pub class_separation: f64,
    /// Within-group spread of subject offsets, relative to the group center.
    pub group_spread: f64,
    /// Group-specific perturbation of the class centroids, relative to their norm.
    pub group_class_variation: f64,
    pub session_shift_scale: f64,
    pub noise_scale: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_subjects: 3,
            n_classes: 3,
            n_features: 32,
            per_class_count: 50,
            n_sessions: 1,
            n_groups: None,
            domain_shift_scale: 3.0,
            class_separation: 3.0,
            group_spread: 0.25,
            group_class_variation: 0.0,
            session_shift_scale: 0.0,
            noise_scale: 1.0,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("n_subjects", self.n_subjects),
            ("n_classes", self.n_classes),
            ("per_class_count", self.per_class_count),
            ("n_sessions", self.n_sessions),
        ];
        for (key, v) in positive {
            if v == 0 {
                return Err(Error::config(key, "must be positive"));
            }
        }
        if self.n_features < 2 {
            return Err(Error::config("n_features", "must be at least 2"));
        }
        if let Some(g) = self.n_groups {
            if g == 0 || g > self.n_subjects {
                return Err(Error::config("n_groups", "must lie in [1, n_subjects]"));
            }
        }
        let reals = [
            ("domain_shift_scale", self.domain_shift_scale),
            ("class_separation", self.class_separation),
            ("group_spread", self.group_spread),
            ("group_class_variation", self.group_class_variation),
            ("session_shift_scale", self.session_shift_scale),
            ("noise_scale", self.noise_scale),
        ];
        for (key, v) in reals {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::config(key, "must be finite and non-negative"));
            }
        }
        Ok(())
    }

    pub fn n_groups_effective(&self) -> usize {
        self.n_groups.unwrap_or(self.n_subjects)
    }

    /// Ground-truth domain group of a subject.
    pub fn group_of(&self, subject: usize) -> usize {
        subject % self.n_groups_effective()
    }
}

fn gaussian(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| StandardNormal.sample(rng)).collect()
}

fn unit(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    let v = gaussian(rng, dim);
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
    v.into_iter().map(|x| x / n).collect()
}

pub fn synth_generate<T: Scalar>(cfg: &SynthConfig) -> Result<Dataset<T>> {
    cfg.validate()?;
    let f = cfg.n_features;
    let n_groups = cfg.n_groups_effective();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let shared: Vec<Vec<f64>> = (0..cfg.n_classes).map(|_| unit(&mut rng, f)).collect();
    let centroids: Vec<Vec<Vec<f64>>> = (0..n_groups)
        .map(|_| {
            shared
                .iter()
                .map(|c| {
                    let r = unit(&mut rng, f);
                    c.iter()
                        .zip(&r)
                        .map(|(a, b)| cfg.class_separation * (a + cfg.group_class_variation * b))
                        .collect()
                })
                .collect()
        })
        .collect();
    let centers: Vec<Vec<f64>> = (0..n_groups).map(|_| unit(&mut rng, f)).collect();
    let offsets: Vec<Vec<f64>> = (0..cfg.n_subjects)
        .map(|n| {
            let u = unit(&mut rng, f);
            centers[cfg.group_of(n)]
                .iter()
                .zip(&u)
                .map(|(c, d)| cfg.domain_shift_scale * (c + cfg.group_spread * d))
                .collect()
        })
        .collect();
    let sessions: Vec<Vec<Vec<f64>>> = (0..cfg.n_subjects)
        .map(|_| {
            (0..cfg.n_sessions)
                .map(|_| {
                    unit(&mut rng, f)
                        .into_iter()
                        .map(|x| cfg.session_shift_scale * x)
                        .collect()
                })
                .collect()
        })
        .collect();

    let total = cfg.n_subjects * cfg.n_sessions * cfg.n_classes * cfg.per_class_count;
    let mut samples = Vec::with_capacity(total);
    for subject in 0..cfg.n_subjects {
        let g = cfg.group_of(subject);
        for session in 0..cfg.n_sessions {
            for class in 0..cfg.n_classes {
                for _ in 0..cfg.per_class_count {
                    let features = (0..f)
                        .map(|j| {
                            let z: f64 = StandardNormal.sample(&mut rng);
                            T::of(
                                centroids[g][class][j]
                                    + offsets[subject][j]
                                    + sessions[subject][session][j]
                                    + cfg.noise_scale * z,
                            )
                        })
                        .collect();
                    samples.push(Sample {
                        features,
                        class_label: class,
                        subject_id: subject,
                        session_id: session,
                    });
                }
            }
        }
    }
    Dataset::new(samples, cfg.n_classes, cfg.n_subjects, cfg.n_sessions)
}
