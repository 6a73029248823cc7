use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Activation {
    LeakyRelu(f64),
    Relu,
    Sigmoid,
    Identity,
}

impl Activation {
    #[inline]
    pub fn apply<T: Scalar>(self, z: T) -> T {
        match self {
            Activation::LeakyRelu(slope) => {
                if z > T::zero() {
                    z
                } else {
                    T::of(slope) * z
                }
            }
            Activation::Relu => z.max(T::zero()),
            Activation::Sigmoid => sigmoid(z),
            Activation::Identity => z,
        }
    }

    /// Derivative expressed through the pre-activation `z` and output `a`.
    #[inline]
    pub fn derivative<T: Scalar>(self, z: T, a: T) -> T {
        match self {
            Activation::LeakyRelu(slope) => {
                if z > T::zero() {
                    T::one()
                } else {
                    T::of(slope)
                }
            }
            Activation::Relu => {
                if z > T::zero() {
                    T::one()
                } else {
                    T::zero()
                }
            }
            Activation::Sigmoid => a * (T::one() - a),
            Activation::Identity => T::one(),
        }
    }
}

#[inline]
pub fn sigmoid<T: Scalar>(z: T) -> T {
    if z >= T::zero() {
        T::one() / (T::one() + (-z).exp())
    } else {
        let e = z.exp();
        e / (T::one() + e)
    }
}

/// Dense layer followed by an activation and (train mode only) inverted dropout.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub in_dim: usize,
    pub out_dim: usize,
    pub activation: Activation,
    pub dropout_p: f64,
}

impl LayerSpec {
    pub fn new(in_dim: usize, out_dim: usize, activation: Activation) -> Self {
        Self {
            in_dim,
            out_dim,
            activation,
            dropout_p: 0.0,
        }
    }

    pub fn with_dropout(mut self, p: f64) -> Self {
        self.dropout_p = p;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.in_dim == 0 || self.out_dim == 0 {
            return Err(Error::Dimension(format!(
                "layer dims must be positive, got {}x{}",
                self.in_dim, self.out_dim
            )));
        }
        if let Activation::LeakyRelu(s) = self.activation {
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::config("leaky_relu_slope", format!("{s} must be > 0")));
            }
        }
        if !(0.0..1.0).contains(&self.dropout_p) {
            return Err(Error::config("dropout_p", format!("{} outside [0, 1)", self.dropout_p)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Layer<T> {
    pub spec: LayerSpec,
    /// out_dim x in_dim
    pub weight: Matrix<T>,
    pub bias: Vec<T>,
}

impl<T: Scalar> Layer<T> {
    /// Uniform in `±sqrt(6 / (in + out))`, zero bias.
    pub fn init<R: Rng + ?Sized>(spec: LayerSpec, rng: &mut R) -> Result<Self> {
        spec.validate()?;
        let bound = (6.0 / (spec.in_dim + spec.out_dim) as f64).sqrt();
        let data = (0..spec.in_dim * spec.out_dim)
            .map(|_| T::of(rng.random_range(-bound..bound)))
            .collect();
        Ok(Self {
            spec,
            weight: Matrix::from_vec(spec.out_dim, spec.in_dim, data)?,
            bias: vec![T::zero(); spec.out_dim],
        })
    }

    /// Pre-activation `x W^T + b`.
    pub(crate) fn affine(&self, x: &Matrix<T>) -> Result<Matrix<T>> {
        let mut z = x.matmul_t(&self.weight)?;
        for r in 0..z.rows() {
            for (v, &b) in z.row_mut(r).iter_mut().zip(&self.bias) {
                *v += b;
            }
        }
        Ok(z)
    }
}
