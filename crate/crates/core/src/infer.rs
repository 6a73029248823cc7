//! Prototype inference and the prototype-space losses.
//!
//! A sample is routed to the superdomain whose domain prototype scores highest
//! under the bilinear form `x_d^T theta mu_d`, then classified by cosine
//! similarity to that superdomain's class prototypes. Training compares class
//! probability vectors pairwise instead of against labels.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::decouple::Networks;
use crate::error::{Error, Result};
use crate::linalg::{argmax, dot, norm, softmax, Matrix};
use crate::nn::PROB_EPS;
use crate::proto::PrototypeBank;
use crate::scalar::Scalar;

/// Norm below which a vector counts as zero for cosine similarity.
pub const COS_NORM_EPS: f64 = 1e-12;

/// Fan-based uniform initialization, the same scheme as dense layers.
pub fn init_theta<T: Scalar, R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Matrix<T> {
    let a = (6.0 / (2 * dim) as f64).sqrt();
    let data = (0..dim * dim).map(|_| T::of(rng.random_range(-a..=a))).collect();
    Matrix::from_vec(dim, dim, data).expect("square shape")
}

/// Raw bilinear scores `h_k = x_d^T theta mu_k` for every row of `x_d`
/// (rows x K). `mu` holds one prototype per row.
pub fn bilinear_scores<T: Scalar>(x_d: &Matrix<T>, theta: &Matrix<T>, mu: &Matrix<T>) -> Result<Matrix<T>> {
    x_d.matmul(theta)?.matmul_t(mu)
}

/// Softmax over the bilinear scores against every domain prototype.
pub fn domain_affinity<T: Scalar>(x_d: &[T], bank: &PrototypeBank<T>, theta: &Matrix<T>) -> Result<Vec<T>> {
    let mu = bank.domain_matrix()?;
    let x = Matrix::from_vec(1, x_d.len(), x_d.to_vec())?;
    Ok(softmax(bilinear_scores(&x, theta, &mu)?.row(0)))
}

/// Cosine similarity; 0 when either vector is (numerically) zero.
pub fn cosine<T: Scalar>(a: &[T], b: &[T]) -> T {
    let (na, nb) = (norm(a), norm(b));
    let eps = T::of(COS_NORM_EPS);
    if na < eps || nb < eps {
        return T::zero();
    }
    dot(a, b) / (na * nb)
}

/// Gradient of `cosine(a, b)` with respect to `a`, added into `out` scaled by `w`.
fn cosine_grad_acc<T: Scalar>(a: &[T], b: &[T], w: T, out: &mut [T]) {
    let (na, nb) = (norm(a), norm(b));
    let eps = T::of(COS_NORM_EPS);
    if na < eps || nb < eps || w == T::zero() {
        return;
    }
    let c = dot(a, b) / (na * nb);
    let inv = T::one() / (na * nb);
    let self_coef = c / (na * na);
    for ((o, &ai), &bi) in out.iter_mut().zip(a).zip(b) {
        *o += w * (bi * inv - self_coef * ai);
    }
}

/// Class probabilities over all `M` classes; classes without a prototype in
/// the superdomain get probability 0 and the rest sum to 1.
pub fn class_probs<T: Scalar>(x_c: &[T], bank: &PrototypeBank<T>, k: usize) -> Result<Vec<T>> {
    let slots = bank
        .mu_c
        .get(k)
        .ok_or_else(|| Error::Inference(format!("superdomain {k} out of range")))?;
    let active = bank.initialized_classes(k);
    if active.len() < 2 {
        return Err(Error::Inference(format!(
            "superdomain {k} has {} class prototypes, need at least 2",
            active.len()
        )));
    }
    let scores: Vec<T> = active
        .iter()
        .map(|&m| cosine(x_c, slots[m].as_ref().expect("active")))
        .collect();
    let p = softmax(&scores);
    let mut out = vec![T::zero(); bank.n_classes];
    for (&m, &pm) in active.iter().zip(&p) {
        out[m] = pm;
    }
    Ok(out)
}

/// Backpropagates `grad_p` (length M) through [`class_probs`] into `x_c`.
fn class_probs_backward<T: Scalar>(
    x_c: &[T],
    probs: &[T],
    grad_p: &[T],
    bank: &PrototypeBank<T>,
    k: usize,
    out: &mut [T],
) {
    let active = bank.initialized_classes(k);
    let inner: T = active.iter().map(|&m| probs[m] * grad_p[m]).sum();
    for &m in &active {
        let ds = probs[m] * (grad_p[m] - inner);
        cosine_grad_acc(x_c, bank.mu_c[k][m].as_ref().expect("active"), ds, out);
    }
}

/// Two-stage prediction for one sample with its diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Prediction<T> {
    pub label: usize,
    pub superdomain: usize,
    pub affinity: Vec<T>,
    pub probs: Vec<T>,
}

impl<T: Scalar> Prediction<T> {
    pub fn max_affinity(&self) -> T {
        self.affinity[self.superdomain]
    }

    pub fn max_prob(&self) -> T {
        self.probs[self.label]
    }
}

/// Picks the superdomain with the largest affinity, then the class with the
/// largest probability inside it.
pub fn predict_features<T: Scalar>(
    x_d: &[T],
    x_c: &[T],
    bank: &PrototypeBank<T>,
    theta: &Matrix<T>,
) -> Result<Prediction<T>> {
    let affinity = domain_affinity(x_d, bank, theta)?;
    let superdomain = argmax(&affinity);
    let probs = class_probs(x_c, bank, superdomain)?;
    Ok(Prediction {
        label: argmax(&probs),
        superdomain,
        affinity,
        probs,
    })
}

/// Runs the frozen networks on raw feature rows and predicts each row.
pub fn predict<T: Scalar>(
    x: &Matrix<T>,
    nets: &Networks<T>,
    bank: &PrototypeBank<T>,
    theta: &Matrix<T>,
) -> Result<Vec<Prediction<T>>> {
    let (x_d, x_c) = nets.features(x)?;
    let mu = bank.domain_matrix()?;
    let scores = bilinear_scores(&x_d, theta, &mu)?;
    (0..x.rows())
        .map(|i| {
            let affinity = softmax(scores.row(i));
            let superdomain = argmax(&affinity);
            let probs = class_probs(x_c.row(i), bank, superdomain)?;
            Ok(Prediction {
                label: argmax(&probs),
                superdomain,
                affinity,
                probs,
            })
        })
        .collect()
}

/// Cosine similarity of two probability vectors, in [0, 1] for non-negative inputs.
pub fn pair_similarity<T: Scalar>(p_i: &[T], p_j: &[T]) -> T {
    cosine(p_i, p_j)
}

/// Sign convention of the pairwise objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PairSign {
    /// `-(r log g + (1 - r) log(1 - g))`: binary cross-entropy on pair similarity.
    #[default]
    Standard,
    /// `-(r log g - (1 - r) log(1 - g))`, kept only for comparison runs; it is
    /// unbounded below.
    Literal,
}

/// Pairwise loss from a precomputed `n x n` similarity matrix (entries are
/// clamped to `[PROB_EPS, 1 - PROB_EPS]`).
pub fn pairwise_loss_from_similarity<T: Scalar>(sim: &Matrix<T>, labels: &[usize], sign: PairSign) -> Result<T> {
    let n = sim.rows();
    if n < 2 {
        return Err(Error::Batch(format!("pairwise loss needs at least 2 samples, got {n}")));
    }
    if sim.cols() != n || labels.len() != n {
        return Err(Error::Dimension(format!(
            "{}x{} similarity matrix with {} labels",
            n,
            sim.cols(),
            labels.len()
        )));
    }
    let eps = T::of(PROB_EPS);
    let hi = T::one() - eps;
    let s = sign_factor::<T>(sign);
    let mut loss = T::zero();
    for i in 0..n {
        for j in 0..n {
            let r = if labels[i] == labels[j] { T::one() } else { T::zero() };
            let g = sim[(i, j)].max(eps).min(hi);
            loss -= r * g.ln() + s * (T::one() - r) * (T::one() - g).ln();
        }
    }
    Ok(loss / T::of_usize(n * n))
}

fn sign_factor<T: Scalar>(sign: PairSign) -> T {
    match sign {
        PairSign::Standard => T::one(),
        PairSign::Literal => -T::one(),
    }
}

/// Pairwise loss over every ordered pair `(i, j)` of the batch, diagonal
/// included, and its gradient with respect to each probability row.
pub fn pairwise_loss<T: Scalar>(probs: &Matrix<T>, labels: &[usize], sign: PairSign) -> Result<(T, Matrix<T>)> {
    let n = probs.rows();
    if n < 2 {
        return Err(Error::Batch(format!("pairwise loss needs at least 2 samples, got {n}")));
    }
    if labels.len() != n {
        return Err(Error::Dimension(format!("{n} probability rows with {} labels", labels.len())));
    }
    let eps = T::of(COS_NORM_EPS);
    let norms: Vec<T> = probs.row_iter().map(norm).collect();
    let mut unit = probs.clone();
    for (i, &nr) in norms.iter().enumerate() {
        let inv = if nr < eps { T::zero() } else { T::one() / nr };
        for v in unit.row_mut(i) {
            *v *= inv;
        }
    }
    let sim = unit.matmul_t(&unit)?;
    let loss = pairwise_loss_from_similarity(&sim, labels, sign)?;

    // dL/dg for each unordered pair, counted for both orders; the diagonal has
    // zero gradient because cos(a, a) is constant in a
    let lo = T::of(PROB_EPS);
    let hi = T::one() - lo;
    let scale = T::of(2.0) / T::of_usize(n * n);
    let s = sign_factor::<T>(sign);
    let mut w = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let g = sim[(i, j)];
            if i == j || !(g > lo && g < hi) {
                continue;
            }
            let r = if labels[i] == labels[j] { T::one() } else { T::zero() };
            w[(i, j)] = -scale * (r / g - s * (T::one() - r) / (T::one() - g));
        }
    }
    // d cos(p_i, p_j) / d p_i = (u_j - g_ij u_i) / |p_i|
    let mut grad = w.matmul(&unit)?;
    for i in 0..n {
        if norms[i] < eps {
            grad.row_mut(i).fill(T::zero());
            continue;
        }
        let wg: T = (0..n).map(|j| w[(i, j)] * sim[(i, j)]).sum();
        let inv = T::one() / norms[i];
        let u = unit.row(i).to_vec();
        for (gv, &ui) in grad.row_mut(i).iter_mut().zip(&u) {
            *gv = (*gv - wg * ui) * inv;
        }
    }
    Ok((loss, grad))
}

/// Mean negative log-probability of the true class, the per-sample baseline.
pub fn pointwise_loss<T: Scalar>(probs: &Matrix<T>, labels: &[usize]) -> Result<(T, Matrix<T>)> {
    let n = probs.rows();
    if n == 0 || labels.len() != n {
        return Err(Error::Batch(format!("{n} probability rows with {} labels", labels.len())));
    }
    let eps = T::of(PROB_EPS);
    let inv = T::one() / T::of_usize(n);
    let mut loss = T::zero();
    let mut grad = Matrix::zeros(n, probs.cols());
    for (i, &y) in labels.iter().enumerate() {
        let p = probs[(i, y)];
        loss -= p.max(eps).ln();
        if p > eps {
            grad[(i, y)] = -inv / p;
        }
    }
    Ok((loss * inv, grad))
}

/// Per-row class probabilities for a batch, each row scored against its own
/// superdomain's class prototypes.
pub fn batch_class_probs<T: Scalar>(x_c: &Matrix<T>, superdomain: &[usize], bank: &PrototypeBank<T>) -> Result<Matrix<T>> {
    let mut out = Matrix::zeros(x_c.rows(), bank.n_classes);
    for i in 0..x_c.rows() {
        out.row_mut(i).copy_from_slice(&class_probs(x_c.row(i), bank, superdomain[i])?);
    }
    Ok(out)
}

/// Gradient with respect to `x_c` given the gradient with respect to the
/// probability rows from [`batch_class_probs`].
pub fn batch_class_probs_backward<T: Scalar>(
    x_c: &Matrix<T>,
    probs: &Matrix<T>,
    grad_p: &Matrix<T>,
    superdomain: &[usize],
    bank: &PrototypeBank<T>,
) -> Matrix<T> {
    let mut out = Matrix::zeros(x_c.rows(), x_c.cols());
    for i in 0..x_c.rows() {
        class_probs_backward(x_c.row(i), probs.row(i), grad_p.row(i), bank, superdomain[i], out.row_mut(i));
    }
    out
}

/// One-vs-rest cross-entropy of the affinity softmax against known
/// superdomains; trains `theta`, which the hard routing rule cannot.
pub struct AffinityLoss<T> {
    pub value: T,
    pub grad_x_d: Matrix<T>,
    pub grad_theta: Matrix<T>,
}

pub fn affinity_loss<T: Scalar>(
    x_d: &Matrix<T>,
    superdomain: &[usize],
    bank: &PrototypeBank<T>,
    theta: &Matrix<T>,
) -> Result<AffinityLoss<T>> {
    let mu = bank.domain_matrix()?;
    let k = mu.rows();
    let xt = x_d.matmul(theta)?;
    let scores = xt.matmul_t(&mu)?;
    let mut v = Matrix::zeros(scores.rows(), k);
    for i in 0..scores.rows() {
        v.row_mut(i).copy_from_slice(&softmax(scores.row(i)));
    }
    let targets = crate::dataio::one_hot::<T>(superdomain, k);
    let (value, g_v) = crate::nn::bce(&v, &targets)?;
    // softmax backward, row by row
    let mut g_h = Matrix::zeros(v.rows(), k);
    for i in 0..v.rows() {
        let inner: T = v.row(i).iter().zip(g_v.row(i)).map(|(&a, &b)| a * b).sum();
        for c in 0..k {
            g_h[(i, c)] = v[(i, c)] * (g_v[(i, c)] - inner);
        }
    }
    // h = X theta M^T: dtheta = X^T dH M, dX = dH M theta^T
    let g_hm = g_h.matmul(&mu)?;
    let mut grad_theta = Matrix::zeros(theta.rows(), theta.cols());
    x_d.t_matmul_acc(&g_hm, &mut grad_theta)?;
    let grad_x_d = g_hm.matmul_t(theta)?;
    Ok(AffinityLoss {
        value,
        grad_x_d,
        grad_theta,
    })
}

/// Soft regularizer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SoftReg {
    /// Mean over weight matrices (every layer of every network, plus `theta`)
    /// of the squared Frobenius norm; biases excluded.
    #[default]
    WeightNorm,
    /// Mean over batch rows of `|x_d|^2 + |x_c|^2`.
    ActivationNorm,
}

/// Value of the weight-norm regularizer. `theta` is `None` when it is frozen.
pub fn weight_norm_reg<T: Scalar>(nets: &Networks<T>, theta: Option<&Matrix<T>>) -> T {
    let mut norms: Vec<T> = nets.all().iter().flat_map(|n| n.weight_sq_norms()).collect();
    if let Some(t) = theta {
        norms.push(t.sum_squares());
    }
    let count = T::of_usize(norms.len());
    norms.into_iter().sum::<T>() / count
}

/// Number of weight matrices the weight-norm regularizer averages over.
pub fn weight_matrix_count<T: Scalar>(nets: &Networks<T>, with_theta: bool) -> usize {
    nets.all().iter().map(|n| n.layers().len()).sum::<usize>() + usize::from(with_theta)
}

pub fn activation_norm_reg<T: Scalar>(x_d: &Matrix<T>, x_c: &Matrix<T>) -> T {
    (x_d.sum_squares() + x_c.sum_squares()) / T::of_usize(x_d.rows().max(1))
}

/// `L_FD + L_pair + beta R`
pub fn total_loss<T: Scalar>(l_fd: T, l_pair: T, reg: T, beta: f64) -> T {
    l_fd + l_pair + T::of(beta) * reg
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decouple::ArchConfig;
    use crate::proto::FreshPrototypes;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rvec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
        (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    fn bank_from(mu_d: Vec<Vec<f64>>, mu_c: Vec<Vec<Option<Vec<f64>>>>) -> PrototypeBank<f64> {
        let k = mu_d.len();
        let m = mu_c[0].len();
        let dim = mu_d[0].len();
        let mut bank = PrototypeBank::new(k, m, dim);
        let fresh = FreshPrototypes { mu_d: mu_d.into_iter().map(Some).collect(), mu_c };
        bank.adaptive_update(&fresh, 1.0, 0).unwrap();
        bank
    }

    fn random_bank(rng: &mut ChaCha8Rng, k: usize, m: usize, dim: usize) -> PrototypeBank<f64> {
        let mu_d = (0..k).map(|_| rvec(rng, dim)).collect();
        let mu_c = (0..k).map(|_| (0..m).map(|_| Some(rvec(rng, dim))).collect()).collect();
        bank_from(mu_d, mu_c)
    }

    #[test]
    fn identity_theta_gives_dot_products() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let bank = random_bank(&mut rng, 3, 2, 5);
        let x = rvec(&mut rng, 5);
        let v = domain_affinity(&x, &bank, &Matrix::identity(5)).unwrap();
        let h: Vec<f64> = (0..3).map(|k| dot(&x, bank.mu_d[k].as_ref().unwrap())).collect();
        let expect = softmax(&h);
        for (a, b) in v.iter().zip(&expect) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn equal_scores_split_evenly() {
        let bank = bank_from(
            vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            vec![vec![Some(vec![1.0, 0.0]), Some(vec![0.0, 1.0])]; 2],
        );
        let v = domain_affinity(&[1.0, 1.0], &bank, &Matrix::identity(2)).unwrap();
        assert!((v[0] - 0.5).abs() < 1e-15 && (v[1] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn bilinear_matches_triple_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let dim = 7;
        let bank = random_bank(&mut rng, 4, 2, dim);
        let theta = Matrix::from_vec(dim, dim, rvec(&mut rng, dim * dim)).unwrap();
        let x = rvec(&mut rng, dim);
        let xm = Matrix::from_vec(1, dim, x.clone()).unwrap();
        let h = bilinear_scores(&xm, &theta, &bank.domain_matrix().unwrap()).unwrap();
        for k in 0..4 {
            let mu = bank.mu_d[k].as_ref().unwrap();
            let mut s = 0.0;
            for a in 0..dim {
                for b in 0..dim {
                    s += x[a] * theta[(a, b)] * mu[b];
                }
            }
            assert!((h[(0, k)] - s).abs() < 1e-9);
        }
    }

    #[test]
    fn uninitialized_domain_slot_is_state_error() {
        let bank = PrototypeBank::<f64>::new(2, 2, 3);
        assert!(matches!(
            domain_affinity(&[1.0, 0.0, 0.0], &bank, &Matrix::identity(3)),
            Err(Error::State(_))
        ));
    }

    #[test]
    fn class_probs_examples() {
        let e = |i: usize| {
            let mut v = vec![0.0; 3];
            v[i] = 1.0;
            v
        };
        let bank = bank_from(vec![vec![0.0; 3]], vec![vec![Some(e(0)), Some(e(1)), Some(e(2))]]);
        let p = class_probs(&e(0), &bank, 0).unwrap();
        assert_eq!(argmax(&p), 0);
        let same = bank_from(vec![vec![0.0; 3]], vec![vec![Some(e(1)); 3]]);
        let p = class_probs(&[0.3, -0.2, 0.9], &same, 0).unwrap();
        for v in p {
            assert!((v - 1.0 / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn class_probs_matches_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let bank = random_bank(&mut rng, 2, 4, 6);
        let x = rvec(&mut rng, 6);
        let p = class_probs(&x, &bank, 1).unwrap();
        let mut s = Vec::new();
        for m in 0..4 {
            let mu = bank.mu_c[1][m].as_ref().unwrap();
            let (mut ab, mut aa, mut bb) = (0.0, 0.0, 0.0);
            for j in 0..6 {
                ab += x[j] * mu[j];
                aa += x[j] * x[j];
                bb += mu[j] * mu[j];
            }
            s.push((ab / (aa.sqrt() * bb.sqrt())).exp());
        }
        let z: f64 = s.iter().sum();
        for m in 0..4 {
            assert!((p[m] - s[m] / z).abs() < 1e-9);
        }
    }

    #[test]
    fn class_probs_needs_two_classes() {
        let bank = bank_from(vec![vec![1.0]], vec![vec![Some(vec![1.0]), None, None]]);
        assert!(matches!(class_probs(&[1.0], &bank, 0), Err(Error::Inference(_))));
        let two = bank_from(vec![vec![1.0]], vec![vec![Some(vec![1.0]), None, Some(vec![-1.0])]]);
        let p = class_probs(&[1.0], &two, 0).unwrap();
        assert_eq!(p[1], 0.0);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_vector_has_zero_cosine() {
        assert_eq!(cosine(&[0.0, 0.0], &[1.0, 2.0]), 0.0);
        assert_eq!(cosine(&[1e-13, 0.0], &[1.0, 2.0]), 0.0);
    }

    #[test]
    fn sample_at_stored_prototype_is_predicted() {
        let bank = bank_from(
            vec![vec![5.0, 0.0], vec![0.0, 5.0]],
            vec![
                vec![Some(vec![1.0, 0.0]), Some(vec![0.0, 1.0])],
                vec![Some(vec![0.0, 1.0]), Some(vec![1.0, 0.0])],
            ],
        );
        let theta = Matrix::identity(2);
        let p = predict_features(&[0.0, 5.0], &[1.0, 0.0], &bank, &theta).unwrap();
        assert_eq!((p.superdomain, p.label), (1, 1));
        let p = predict_features(&[5.0, 0.0], &[1.0, 0.0], &bank, &theta).unwrap();
        assert_eq!((p.superdomain, p.label), (0, 0));
    }

    #[test]
    fn permuting_superdomains_keeps_label() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let bank = random_bank(&mut rng, 3, 3, 4);
        let theta = Matrix::from_vec(4, 4, rvec(&mut rng, 16)).unwrap();
        let perm = [2, 0, 1];
        let mut permuted = bank.clone();
        for (new, &old) in perm.iter().enumerate() {
            permuted.mu_d[new] = bank.mu_d[old].clone();
            permuted.mu_c[new] = bank.mu_c[old].clone();
        }
        for _ in 0..20 {
            let (xd, xc) = (rvec(&mut rng, 4), rvec(&mut rng, 4));
            let a = predict_features(&xd, &xc, &bank, &theta).unwrap();
            let b = predict_features(&xd, &xc, &permuted, &theta).unwrap();
            assert_eq!(a.label, b.label);
            assert_eq!(perm[b.superdomain], a.superdomain);
        }
    }

    #[test]
    fn batch_predict_matches_single() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let nets = Networks::<f64>::new(6, 3, 3, &ArchConfig { hidden: 8, ..Default::default() }, &mut rng).unwrap();
        let bank = random_bank(&mut rng, 2, 3, 8);
        let theta = init_theta(8, &mut rng);
        let x = Matrix::from_vec(4, 6, rvec(&mut rng, 24)).unwrap();
        let batch = predict(&x, &nets, &bank, &theta).unwrap();
        let (xd, xc) = nets.features(&x).unwrap();
        for i in 0..4 {
            let single = predict_features(xd.row(i), xc.row(i), &bank, &theta).unwrap();
            assert_eq!(single.label, batch[i].label);
            for (a, b) in single.affinity.iter().zip(&batch[i].affinity) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn pair_similarity_examples() {
        assert!((pair_similarity(&[0.3, 0.7], &[0.3, 0.7]) - 1.0_f64).abs() < 1e-15);
        assert_eq!(pair_similarity(&[1.0, 0.0], &[0.0, 1.0]), 0.0_f64);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..20 {
            let a: Vec<f64> = (0..4).map(|_| rng.random::<f64>()).collect();
            let b: Vec<f64> = (0..4).map(|_| rng.random::<f64>()).collect();
            let ab: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
            let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
            let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
            assert!((pair_similarity(&a, &b) - ab / (na * nb)).abs() < 1e-12);
        }
    }

    #[test]
    fn pairwise_half_similarity_is_ln2() {
        let sim = Matrix::from_vec(2, 2, vec![0.5; 4]).unwrap();
        let l = pairwise_loss_from_similarity(&sim, &[0, 1], PairSign::Standard).unwrap();
        assert!((l - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn pairwise_extreme_correct_is_near_zero() {
        let probs = Matrix::from_rows(&[[1.0, 0.0], [0.0, 1.0], [1.0, 0.0]]).unwrap();
        let (l, _) = pairwise_loss(&probs, &[0, 1, 0], PairSign::Standard).unwrap();
        assert!(l <= 1e-5);
    }

    #[test]
    fn pairwise_matches_double_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let raw: Vec<f64> = (0..15).map(|_| rng.random::<f64>() + 0.01).collect();
        let mut probs = Matrix::from_vec(5, 3, raw).unwrap();
        for i in 0..5 {
            let s: f64 = probs.row(i).iter().sum();
            for v in probs.row_mut(i) {
                *v /= s;
            }
        }
        let labels = [0, 1, 2, 0, 1];
        let (l, _) = pairwise_loss(&probs, &labels, PairSign::Standard).unwrap();
        let mut acc = 0.0;
        for i in 0..5 {
            for j in 0..5 {
                let (a, b) = (probs.row(i), probs.row(j));
                let g = (a[0] * b[0] + a[1] * b[1] + a[2] * b[2])
                    / ((a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt() * (b[0] * b[0] + b[1] * b[1] + b[2] * b[2]).sqrt());
                let g = g.clamp(1e-7, 1.0 - 1e-7);
                let r = if labels[i] == labels[j] { 1.0 } else { 0.0 };
                acc += r * g.ln() + (1.0 - r) * (1.0 - g).ln();
            }
        }
        assert!((l + acc / 25.0).abs() < 1e-9);
    }

    #[test]
    fn single_sample_is_batch_error() {
        let probs = Matrix::from_rows(&[[0.5, 0.5]]).unwrap();
        assert!(matches!(pairwise_loss(&probs, &[0], PairSign::Standard), Err(Error::Batch(_))));
    }

    #[test]
    fn literal_sign_rewards_mismatch() {
        let probs = Matrix::from_rows(&[[0.9, 0.1], [0.1, 0.9]]).unwrap();
        let (std_l, _) = pairwise_loss(&probs, &[0, 1], PairSign::Standard).unwrap();
        let (lit, _) = pairwise_loss(&probs, &[0, 1], PairSign::Literal).unwrap();
        assert!(std_l > 0.0);
        assert!(lit < 0.0);
    }

    fn fd_check(f: impl Fn(&Matrix<f64>) -> f64, x: &Matrix<f64>, analytic: &Matrix<f64>) {
        let h = 1e-6;
        for idx in 0..x.as_slice().len() {
            let mut p = x.clone();
            p.as_mut_slice()[idx] += h;
            let mut m = x.clone();
            m.as_mut_slice()[idx] -= h;
            let num = (f(&p) - f(&m)) / (2.0 * h);
            let a = analytic.as_slice()[idx];
            assert!((num - a).abs() <= 1e-6 + 1e-4 * num.abs().max(a.abs()), "entry {idx}: {num} vs {a}");
        }
    }

    #[test]
    fn pair_gradient_through_class_probs() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let bank = random_bank(&mut rng, 2, 3, 5);
        let x = Matrix::from_vec(4, 5, rvec(&mut rng, 20)).unwrap();
        let sd = [0, 1, 1, 0];
        let labels = [0, 2, 0, 1];
        let f = |x: &Matrix<f64>| {
            let p = batch_class_probs(x, &sd, &bank).unwrap();
            pairwise_loss(&p, &labels, PairSign::Standard).unwrap().0
        };
        let p = batch_class_probs(&x, &sd, &bank).unwrap();
        let (_, gp) = pairwise_loss(&p, &labels, PairSign::Standard).unwrap();
        let gx = batch_class_probs_backward(&x, &p, &gp, &sd, &bank);
        fd_check(f, &x, &gx);

        let g = |x: &Matrix<f64>| {
            let p = batch_class_probs(x, &sd, &bank).unwrap();
            pointwise_loss(&p, &labels).unwrap().0
        };
        let (_, gp) = pointwise_loss(&p, &labels).unwrap();
        let gx = batch_class_probs_backward(&x, &p, &gp, &sd, &bank);
        fd_check(g, &x, &gx);
    }

    #[test]
    fn affinity_loss_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let bank = random_bank(&mut rng, 3, 2, 4);
        let x = Matrix::from_vec(5, 4, rvec(&mut rng, 20)).unwrap();
        let theta = Matrix::from_vec(4, 4, rvec(&mut rng, 16)).unwrap();
        let sd = [0, 1, 2, 2, 0];
        let a = affinity_loss(&x, &sd, &bank, &theta).unwrap();
        fd_check(|x| affinity_loss(x, &sd, &bank, &theta).unwrap().value, &x, &a.grad_x_d);
        fd_check(|t| affinity_loss(&x, &sd, &bank, t).unwrap().value, &theta, &a.grad_theta);
    }

    #[test]
    fn total_loss_examples() {
        assert_eq!(total_loss(0.3_f64, 0.2, 5.0, 0.0), 0.3 + 0.2);
        assert!((total_loss(0.3_f64, 0.2, 5.0, 0.01) - (0.3 + 0.2 + 0.05)).abs() < 1e-12);
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let mut nets = Networks::<f64>::new(4, 2, 2, &ArchConfig { hidden: 4, ..Default::default() }, &mut rng).unwrap();
        for n in nets.all_mut() {
            for l in n.layers_mut() {
                l.weight.fill(0.0);
            }
        }
        assert_eq!(weight_norm_reg(&nets, Some(&Matrix::zeros(4, 4))), 0.0);
        assert_eq!(weight_matrix_count(&nets, true), 16);
    }

    #[test]
    fn weight_norm_reg_matches_recount() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let nets = Networks::<f64>::new(4, 2, 2, &ArchConfig { hidden: 4, ..Default::default() }, &mut rng).unwrap();
        let theta = init_theta::<f64, _>(4, &mut rng);
        let mut total = theta.as_slice().iter().map(|v| v * v).sum::<f64>();
        for n in nets.all() {
            for l in n.layers() {
                total += l.weight.as_slice().iter().map(|v| v * v).sum::<f64>();
            }
        }
        assert!((weight_norm_reg(&nets, Some(&theta)) - total / 16.0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn class_probs_scale_invariant(seed in any::<u64>(), c in 0.01f64..100.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let bank = random_bank(&mut rng, 2, 3, 5);
            let x = rvec(&mut rng, 5);
            let xs: Vec<f64> = x.iter().map(|v| v * c).collect();
            let a = class_probs(&x, &bank, 0).unwrap();
            let b = class_probs(&xs, &bank, 0).unwrap();
            for (u, v) in a.iter().zip(&b) {
                prop_assert!((u - v).abs() < 1e-12);
            }
            prop_assert!((a.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            prop_assert!(a.iter().all(|&v| v >= 0.0));
        }

        #[test]
        fn affinity_argmax_matches_raw_scores(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let bank = random_bank(&mut rng, 4, 2, 5);
            let theta = Matrix::from_vec(5, 5, rvec(&mut rng, 25)).unwrap();
            let x = rvec(&mut rng, 5);
            let v = domain_affinity(&x, &bank, &theta).unwrap();
            let h = bilinear_scores(&Matrix::from_vec(1, 5, x).unwrap(), &theta, &bank.domain_matrix().unwrap()).unwrap();
            prop_assert_eq!(argmax(&v), argmax(h.row(0)));
        }

        #[test]
        fn pairwise_permutation_symmetric(seed in any::<u64>(), n in 2usize..7) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let raw: Vec<f64> = (0..n * 3).map(|_| rng.random::<f64>() + 1e-3).collect();
            let probs = Matrix::from_vec(n, 3, raw).unwrap();
            let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..3)).collect();
            let mut order: Vec<usize> = (0..n).collect();
            order.rotate_left(1);
            order.swap(0, n - 1);
            let permuted = probs.select_rows(&order);
            let pl: Vec<usize> = order.iter().map(|&i| labels[i]).collect();
            let (a, _) = pairwise_loss(&probs, &labels, PairSign::Standard).unwrap();
            let (b, _) = pairwise_loss(&permuted, &pl, PairSign::Standard).unwrap();
            prop_assert!((a - b).abs() < 1e-12);
            prop_assert!(a >= 0.0);
        }
    }
}
