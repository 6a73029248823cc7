use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::scalar::Scalar;

/// Identity on the way forward; multiplies the gradient by `-lambda` on the way back.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradientReversal {
    lambda: f64,
}

impl GradientReversal {
    pub fn new(lambda: f64) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::config("grl_lambda", format!("{lambda} must be > 0")));
        }
        Ok(Self { lambda })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn forward<T: Scalar>(&self, x: &Matrix<T>) -> Matrix<T> {
        x.clone()
    }

    pub fn backward<T: Scalar>(&self, upstream: &Matrix<T>) -> Matrix<T> {
        upstream.scale(-T::of(self.lambda))
    }
}
