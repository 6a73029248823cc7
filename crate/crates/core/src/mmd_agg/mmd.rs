use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dot, squared_distance, Matrix};
use crate::scalar::Scalar;

/// Gaussian kernel bandwidth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Bandwidth {
    Fixed(f64),
    /// `sigma^2 = median(pairwise squared distance) / 2`, recomputed per call.
    MedianHeuristic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KernelConfig {
    pub bandwidth: Bandwidth,
    /// Rows pooled for the median heuristic.
    pub median_sample: usize,
    /// Rows used per domain when building the matrix; `None` uses every row.
    pub max_rows_per_domain: Option<usize>,
}

impl Default for KernelConfig {
    fn default() -> Self {
        Self {
            bandwidth: Bandwidth::MedianHeuristic,
            median_sample: 2000,
            max_rows_per_domain: None,
        }
    }
}

impl KernelConfig {
    pub fn validate(&self) -> Result<()> {
        if let Bandwidth::Fixed(s) = self.bandwidth {
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::config("kernel.bandwidth", format!("sigma {s} must be > 0")));
            }
        }
        if self.median_sample < 2 {
            return Err(Error::config("kernel.median_sample", "must be at least 2"));
        }
        if self.max_rows_per_domain.is_some_and(|m| m < 2) {
            return Err(Error::config("kernel.max_rows_per_domain", "must be at least 2"));
        }
        Ok(())
    }
}

pub fn gaussian_kernel<T: Scalar>(x: &[T], y: &[T], sigma: T) -> Result<T> {
    if !(sigma > T::zero()) {
        return Err(Error::config("kernel.bandwidth", format!("sigma {sigma} must be > 0")));
    }
    if x.len() != y.len() {
        return Err(Error::Dimension(format!("kernel inputs of length {} and {}", x.len(), y.len())));
    }
    Ok(kernel_from_sq(squared_distance(x, y), sigma))
}

#[inline]
fn kernel_from_sq<T: Scalar>(d2: T, sigma: T) -> T {
    (-d2 / (T::of(2.0) * sigma * sigma)).exp()
}

/// Evenly strided row indices, at most `cap` of them.
pub(crate) fn strided(n: usize, cap: usize) -> Vec<usize> {
    if n <= cap {
        return (0..n).collect();
    }
    (0..cap).map(|i| i * n / cap).collect()
}

/// Median-heuristic bandwidth over (a strided subsample of) the rows.
pub fn median_heuristic<T: Scalar>(rows: &Matrix<T>, max_rows: usize) -> T {
    let sub = rows.select_rows(&strided(rows.rows(), max_rows));
    let n = sub.rows();
    if n < 2 {
        return T::one();
    }
    let sq: Vec<T> = sub.row_iter().map(|r| dot(r, r)).collect();
    let gram = sub.matmul_t(&sub).expect("same matrix");
    let two = T::of(2.0);
    let mut d2: Vec<T> = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        let g = gram.row(i);
        for j in i + 1..n {
            d2.push((sq[i] + sq[j] - two * g[j]).max(T::zero()));
        }
    }
    let mid = d2.len() / 2;
    let (_, median, _) = d2.select_nth_unstable_by(mid, |a, b| a.partial_cmp(b).unwrap());
    let median = *median;
    if median > T::zero() {
        (median / two).sqrt()
    } else {
        T::one()
    }
}

/// Sum of kernel values over the cross block, or over off-diagonal pairs when
/// `same` (X against itself).
fn kernel_block_sum<T: Scalar>(x: &Matrix<T>, y: &Matrix<T>, sigma: T, same: bool) -> T {
    let xn: Vec<T> = x.row_iter().map(|r| dot(r, r)).collect();
    let yn: Vec<T> = y.row_iter().map(|r| dot(r, r)).collect();
    let cross = x.matmul_t(y).expect("column counts checked by callers");
    let two = T::of(2.0);
    let mut total = T::zero();
    for i in 0..x.rows() {
        let start = if same { i + 1 } else { 0 };
        let xy = cross.row(i);
        let mut row_sum = T::zero();
        for j in start..y.rows() {
            let d2 = (xn[i] + yn[j] - two * xy[j]).max(T::zero());
            row_sum += kernel_from_sq(d2, sigma);
        }
        total += row_sum;
    }
    if same {
        two * total
    } else {
        total
    }
}

/// Unbiased squared MMD with a Gaussian kernel; self-pairs are excluded from
/// the within-sample sums.
pub fn mmd2_unbiased<T: Scalar>(x: &Matrix<T>, y: &Matrix<T>, sigma: T) -> Result<T> {
    let (n, m) = (x.rows(), y.rows());
    if n < 2 || m < 2 {
        return Err(Error::SampleSize(format!("MMD needs at least 2 rows per sample, got {n} and {m}")));
    }
    if x.cols() != y.cols() {
        return Err(Error::Dimension(format!("{} vs {} feature columns", x.cols(), y.cols())));
    }
    if !(sigma > T::zero()) {
        return Err(Error::config("kernel.bandwidth", format!("sigma {sigma} must be > 0")));
    }
    let (nf, mf) = (T::of_usize(n), T::of_usize(m));
    let kxx = kernel_block_sum(x, x, sigma, true) / (nf * (nf - T::one()));
    let kyy = kernel_block_sum(y, y, sigma, true) / (mf * (mf - T::one()));
    let kxy = kernel_block_sum(x, y, sigma, false) / (nf * mf);
    Ok(kxx + kyy - T::of(2.0) * kxy)
}

/// Symmetric matrix of squared MMD between domains, zero diagonal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct MmdMatrix<T> {
    values: Matrix<T>,
    /// Bandwidth the entries were computed with.
    pub sigma: T,
}

impl<T: Scalar> MmdMatrix<T> {
    /// Wraps a precomputed dissimilarity matrix.
    pub fn from_matrix(values: Matrix<T>) -> Result<Self> {
        let n = values.rows();
        if values.cols() != n || n == 0 {
            return Err(Error::Dimension("MMD matrix must be square and non-empty".into()));
        }
        for i in 0..n {
            for j in 0..n {
                let (a, b) = (values[(i, j)], values[(j, i)]);
                if !a.is_finite() || (a - b).abs() > T::of(1e-9) {
                    return Err(Error::Validation(format!("entry ({i},{j}) breaks symmetry")));
                }
            }
        }
        Ok(Self {
            values,
            sigma: T::nan(),
        })
    }

    pub fn n(&self) -> usize {
        self.values.rows()
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.values[(i, j)]
    }

    pub fn as_matrix(&self) -> &Matrix<T> {
        &self.values
    }

    /// Row `i`: the distance vector of domain `i`.
    pub fn distance_vector(&self, i: usize) -> &[T] {
        self.values.row(i)
    }

    pub fn max_off_diagonal(&self) -> T {
        let n = self.n();
        let mut m = T::zero();
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    m = m.max(self.get(i, j));
                }
            }
        }
        m
    }
}

/// Squared MMD between every pair of domains. Negative estimates are clamped
/// to 0; pairs are evaluated in parallel.
pub fn mmd_matrix<T: Scalar>(domains: &[Matrix<T>], cfg: &KernelConfig) -> Result<MmdMatrix<T>> {
    cfg.validate()?;
    if domains.is_empty() {
        return Err(Error::SampleSize("no domains".into()));
    }
    for (i, d) in domains.iter().enumerate() {
        if d.rows() < 2 {
            return Err(Error::SampleSize(format!("domain {i} has {} feature rows", d.rows())));
        }
    }
    let capped: Vec<Matrix<T>> = domains
        .iter()
        .map(|d| match cfg.max_rows_per_domain {
            Some(cap) if d.rows() > cap => d.select_rows(&strided(d.rows(), cap)),
            _ => d.clone(),
        })
        .collect();
    let sigma = match cfg.bandwidth {
        Bandwidth::Fixed(s) => T::of(s),
        Bandwidth::MedianHeuristic => {
            // pool an equal share of rows from every domain
            let share = (cfg.median_sample / capped.len()).max(2);
            let mut pooled = Matrix::zeros(0, capped[0].cols());
            for d in &capped {
                pooled.append(&d.select_rows(&strided(d.rows(), share)))?;
            }
            median_heuristic(&pooled, cfg.median_sample)
        }
    };
    let n = capped.len();
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
    let within: Vec<T> = capped
        .par_iter()
        .map(|d| {
            let r = T::of_usize(d.rows());
            kernel_block_sum(d, d, sigma, true) / (r * (r - T::one()))
        })
        .collect();
    let entries: Vec<T> = pairs
        .par_iter()
        .map(|&(i, j)| {
            let (x, y) = (&capped[i], &capped[j]);
            let kxy = kernel_block_sum(x, y, sigma, false) / T::of_usize(x.rows() * y.rows());
            (within[i] + within[j] - T::of(2.0) * kxy).max(T::zero())
        })
        .collect();
    let mut values = Matrix::zeros(n, n);
    for (&(i, j), &v) in pairs.iter().zip(&entries) {
        values[(i, j)] = v;
        values[(j, i)] = v;
    }
    Ok(MmdMatrix { values, sigma })
}

/// Squared Euclidean distances between the rows of the MMD matrix (the
/// per-domain distance vectors).
pub fn vector_distance_matrix<T: Scalar>(m: &MmdMatrix<T>) -> MmdMatrix<T> {
    let n = m.n();
    let mut values = Matrix::zeros(n, n);
    for i in 0..n {
        for j in i + 1..n {
            let d = squared_distance(m.distance_vector(i), m.distance_vector(j));
            values[(i, j)] = d;
            values[(j, i)] = d;
        }
    }
    MmdMatrix {
        values,
        sigma: m.sigma,
    }
}
