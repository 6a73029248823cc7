//! Adversarial separation of domain features from class features.
//!
//! A shared extractor feeds two decouplers. Each discriminator is trained on
//! its own feature and, through gradient reversal, pushes the other decoupler
//! to discard what it can recognize.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataio::one_hot;
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::nn::{arch, bce_with_logits, GradTape, GradientReversal, Mode, Network};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ArchConfig {
    pub hidden: usize,
    pub leaky_slope: f64,
    pub dropout: f64,
}

impl Default for ArchConfig {
    fn default() -> Self {
        Self {
            hidden: 64,
            leaky_slope: 0.01,
            dropout: 0.25,
        }
    }
}

impl ArchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden == 0 {
            return Err(Error::config("arch.hidden", "must be positive"));
        }
        if !(self.leaky_slope >= 0.0 && self.leaky_slope < 1.0) {
            return Err(Error::config("arch.leaky_slope", "must lie in [0, 1)"));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::config("arch.dropout", "must lie in [0, 1)"));
        }
        Ok(())
    }
}

/// Extractor `f_g`, decouplers `f_d`/`f_c` and discriminators `D_d`/`D_c`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Networks<T> {
    pub f_g: Network<T>,
    pub f_d: Network<T>,
    pub f_c: Network<T>,
    pub d_d: Network<T>,
    pub d_c: Network<T>,
}

/// Gradient tapes matching [`Networks`].
#[derive(Debug, Clone)]
pub struct Tapes<T> {
    pub f_g: GradTape<T>,
    pub f_d: GradTape<T>,
    pub f_c: GradTape<T>,
    pub d_d: GradTape<T>,
    pub d_c: GradTape<T>,
}

impl<T: Scalar> Tapes<T> {
    /// Tapes in [`Networks::all`] order.
    pub fn all(&self) -> [&GradTape<T>; 5] {
        [&self.f_g, &self.f_d, &self.f_c, &self.d_d, &self.d_c]
    }

    pub fn zero(&mut self) {
        for t in [&mut self.f_g, &mut self.f_d, &mut self.f_c, &mut self.d_d, &mut self.d_c] {
            t.zero();
        }
    }
}

impl<T: Scalar> Networks<T> {
    /// `n_domains` is the number of source subjects the domain discriminator
    /// tells apart.
    pub fn new<R: Rng + ?Sized>(
        n_features: usize,
        n_domains: usize,
        n_classes: usize,
        cfg: &ArchConfig,
        rng: &mut R,
    ) -> Result<Self> {
        cfg.validate()?;
        let h = cfg.hidden;
        Ok(Self {
            f_g: Network::new(&arch::extractor(n_features, h, cfg.leaky_slope), rng)?,
            f_d: Network::new(&arch::decoupler(h), rng)?,
            f_c: Network::new(&arch::decoupler(h), rng)?,
            d_d: Network::new(&arch::discriminator(h, n_domains, cfg.dropout), rng)?,
            d_c: Network::new(&arch::discriminator(h, n_classes, cfg.dropout), rng)?,
        })
    }

    pub fn tapes(&self) -> Tapes<T> {
        Tapes {
            f_g: self.f_g.tape(),
            f_d: self.f_d.tape(),
            f_c: self.f_c.tape(),
            d_d: self.d_d.tape(),
            d_c: self.d_c.tape(),
        }
    }

    pub fn hidden(&self) -> usize {
        self.f_g.out_dim()
    }

    pub fn n_domains(&self) -> usize {
        self.d_d.out_dim()
    }

    pub fn n_classes(&self) -> usize {
        self.d_c.out_dim()
    }

    /// Networks in a fixed order: f_g, f_d, f_c, d_d, d_c.
    pub fn all(&self) -> [&Network<T>; 5] {
        [&self.f_g, &self.f_d, &self.f_c, &self.d_d, &self.d_c]
    }

    pub fn all_mut(&mut self) -> [&mut Network<T>; 5] {
        [&mut self.f_g, &mut self.f_d, &mut self.f_c, &mut self.d_d, &mut self.d_c]
    }

    pub fn is_finite(&self) -> bool {
        self.all().iter().all(|n| n.is_finite())
    }

    /// `(x_d, x_c)` in eval mode.
    pub fn features(&self, x: &Matrix<T>) -> Result<(Matrix<T>, Matrix<T>)> {
        let h = self.f_g.forward(x)?;
        Ok((self.f_d.forward(&h)?, self.f_c.forward(&h)?))
    }
}

/// Decoupled features of one minibatch with one-hot subject and class targets.
#[derive(Debug, Clone, PartialEq)]
pub struct DecoupledBatch<T> {
    pub x_d: Matrix<T>,
    pub x_c: Matrix<T>,
    pub y_d: Matrix<T>,
    pub y_c: Matrix<T>,
}

impl<T: Scalar> DecoupledBatch<T> {
    pub fn len(&self) -> usize {
        self.x_d.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Runs the extractor once and both decouplers on its output. Train mode
/// caches every pass on `tapes` for [`decouple_backward`].
#[allow(clippy::too_many_arguments)]
pub fn decouple_forward<T: Scalar, R: Rng + ?Sized>(
    nets: &Networks<T>,
    x: &Matrix<T>,
    subjects: &[usize],
    classes: &[usize],
    mode: Mode,
    tapes: &mut Tapes<T>,
    rng: &mut R,
) -> Result<DecoupledBatch<T>> {
    if subjects.len() != x.rows() || classes.len() != x.rows() {
        return Err(Error::Dimension(format!(
            "{} rows with {} subject and {} class labels",
            x.rows(),
            subjects.len(),
            classes.len()
        )));
    }
    if let Some(&s) = subjects.iter().find(|&&s| s >= nets.n_domains()) {
        return Err(Error::Validation(format!("subject {s} outside the {} source domains", nets.n_domains())));
    }
    if let Some(&c) = classes.iter().find(|&&c| c >= nets.n_classes()) {
        return Err(Error::Validation(format!("class {c} outside the {} classes", nets.n_classes())));
    }
    let h = nets.f_g.forward_mode(x, mode, &mut tapes.f_g, rng)?;
    let x_d = nets.f_d.forward_mode(&h, mode, &mut tapes.f_d, rng)?;
    let x_c = nets.f_c.forward_mode(&h, mode, &mut tapes.f_c, rng)?;
    Ok(DecoupledBatch {
        x_d,
        x_c,
        y_d: one_hot(subjects, nets.n_domains()),
        y_c: one_hot(classes, nets.n_classes()),
    })
}

/// Backpropagates feature gradients through both decouplers and the shared
/// extractor, consuming the caches of one [`decouple_forward`] call.
pub fn decouple_backward<T: Scalar>(
    nets: &Networks<T>,
    tapes: &mut Tapes<T>,
    grad_x_d: &Matrix<T>,
    grad_x_c: &Matrix<T>,
) -> Result<()> {
    let mut g = nets.f_c.backward(&mut tapes.f_c, grad_x_c)?;
    g.add_assign(&nets.f_d.backward(&mut tapes.f_d, grad_x_d)?);
    nets.f_g.backward(&mut tapes.f_g, &g)?;
    Ok(())
}

/// One discriminator loss: a plain term on its own feature plus a
/// gradient-reversed term on the other feature, both against the same targets.
#[derive(Debug, Clone)]
pub struct AdversarialLoss<T> {
    pub value: T,
    pub plain: T,
    pub reversed: T,
    pub grad_own: Matrix<T>,
    pub grad_other: Matrix<T>,
}

fn adversarial<T: Scalar, R: Rng + ?Sized>(
    disc: &Network<T>,
    tape: &mut GradTape<T>,
    own: &Matrix<T>,
    other: &Matrix<T>,
    targets: &Matrix<T>,
    grl: &GradientReversal,
    rng: &mut R,
) -> Result<AdversarialLoss<T>> {
    let z_own = disc.forward_train(own, tape, rng)?;
    let z_other = disc.forward_train(&grl.forward(other), tape, rng)?;
    let (plain, g_own) = bce_with_logits(&z_own, targets)?;
    let (reversed, g_other) = bce_with_logits(&z_other, targets)?;
    // caches pop in reverse order
    let grad_other = grl.backward(&disc.backward(tape, &g_other)?);
    let grad_own = disc.backward(tape, &g_own)?;
    Ok(AdversarialLoss {
        value: plain + reversed,
        plain,
        reversed,
        grad_own,
        grad_other,
    })
}

/// `BCE(D_c(x_c), y_c) + BCE(D_c(GRL(x_d)), y_c)`. `grad_own` is with respect
/// to `x_c`, `grad_other` with respect to `x_d`.
pub fn loss_cls<T: Scalar, R: Rng + ?Sized>(
    d_c: &Network<T>,
    tape: &mut GradTape<T>,
    batch: &DecoupledBatch<T>,
    grl: &GradientReversal,
    rng: &mut R,
) -> Result<AdversarialLoss<T>> {
    adversarial(d_c, tape, &batch.x_c, &batch.x_d, &batch.y_c, grl, rng)
}

/// `BCE(D_d(x_d), y_d) + BCE(D_d(GRL(x_c)), y_d)`. `grad_own` is with respect
/// to `x_d`, `grad_other` with respect to `x_c`.
pub fn loss_dom<T: Scalar, R: Rng + ?Sized>(
    d_d: &Network<T>,
    tape: &mut GradTape<T>,
    batch: &DecoupledBatch<T>,
    grl: &GradientReversal,
    rng: &mut R,
) -> Result<AdversarialLoss<T>> {
    adversarial(d_d, tape, &batch.x_d, &batch.x_c, &batch.y_d, grl, rng)
}

pub fn loss_fd<T: Scalar>(l_cls: T, l_dom: T) -> T {
    l_cls + l_dom
}
