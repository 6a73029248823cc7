use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::Dataset;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Replaces exactly `round(eta * len)` labels with a different class drawn
/// uniformly from the other `M - 1` classes.
pub fn inject_label_noise<T: Scalar>(ds: &Dataset<T>, eta: f64, seed: u64) -> Result<Dataset<T>> {
    let labels: Vec<usize> = ds.samples().iter().map(|s| s.class_label).collect();
    let noisy = corrupt_labels(&labels, ds.n_classes(), eta, seed)?;
    Ok(ds.relabeled(noisy.into_iter()))
}

/// [`inject_label_noise`] on a bare label list.
pub fn corrupt_labels(labels: &[usize], n_classes: usize, eta: f64, seed: u64) -> Result<Vec<usize>> {
    if !(0.0..=1.0).contains(&eta) {
        return Err(Error::config("eta", format!("{eta} outside [0, 1]")));
    }
    let count = (eta * labels.len() as f64).round() as usize;
    let mut labels = labels.to_vec();
    if count == 0 {
        return Ok(labels);
    }
    if n_classes < 2 {
        return Err(Error::config("eta", "label noise needs at least two classes"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chosen = index::sample(&mut rng, labels.len(), count).into_vec();
    chosen.sort_unstable();
    for i in chosen {
        let draw = rng.random_range(0..n_classes - 1);
        labels[i] = if draw >= labels[i] { draw + 1 } else { draw };
    }
    Ok(labels)
}
