use super::layer::sigmoid;
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::scalar::Scalar;

/// Probability clamp applied before every logarithm.
pub const PROB_EPS: f64 = 1e-7;

fn check_shapes<T: Scalar>(a: &Matrix<T>, targets: &Matrix<T>) -> Result<()> {
    if a.shape() != targets.shape() {
        return Err(Error::Dimension(format!(
            "predictions {:?} vs targets {:?}",
            a.shape(),
            targets.shape()
        )));
    }
    if a.rows() == 0 || a.cols() == 0 {
        return Err(Error::Dimension("empty prediction batch".into()));
    }
    Ok(())
}

/// One-vs-rest binary cross-entropy on probabilities, averaged over the batch
/// and the `C` binary tasks. Returns the loss and its gradient with respect to
/// the probabilities; clamped entries get zero gradient.
pub fn bce<T: Scalar>(probs: &Matrix<T>, targets: &Matrix<T>) -> Result<(T, Matrix<T>)> {
    check_shapes(probs, targets)?;
    let eps = T::of(PROB_EPS);
    let hi = T::one() - eps;
    let denom = T::of_usize(probs.rows() * probs.cols());
    let mut loss = T::zero();
    let mut grad = Matrix::zeros(probs.rows(), probs.cols());
    for ((&p, &y), g) in probs
        .as_slice()
        .iter()
        .zip(targets.as_slice())
        .zip(grad.as_mut_slice())
    {
        let pc = p.max(eps).min(hi);
        loss -= y * pc.ln() + (T::one() - y) * (T::one() - pc).ln();
        if p > eps && p < hi {
            *g = -(y / pc - (T::one() - y) / (T::one() - pc)) / denom;
        }
    }
    Ok((loss / denom, grad))
}

/// [`bce`] applied to `sigmoid(logits)`; the gradient is with respect to the logits.
pub fn bce_with_logits<T: Scalar>(logits: &Matrix<T>, targets: &Matrix<T>) -> Result<(T, Matrix<T>)> {
    check_shapes(logits, targets)?;
    let eps = T::of(PROB_EPS);
    let hi = T::one() - eps;
    let denom = T::of_usize(logits.rows() * logits.cols());
    let mut loss = T::zero();
    let mut grad = Matrix::zeros(logits.rows(), logits.cols());
    for ((&z, &y), g) in logits
        .as_slice()
        .iter()
        .zip(targets.as_slice())
        .zip(grad.as_mut_slice())
    {
        let p = sigmoid(z);
        let pc = p.max(eps).min(hi);
        loss -= y * pc.ln() + (T::one() - y) * (T::one() - pc).ln();
        if p > eps && p < hi {
            *g = (p - y) / denom;
        }
    }
    Ok((loss / denom, grad))
}
