use rand::Rng;
use serde::{Deserialize, Serialize};

use super::mmd::MmdMatrix;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Upper bound on assign/medoid rounds.
pub const MAX_ROUNDS: usize = 100;

/// What the k-medoids dissimilarity is.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AggregateOn {
    /// Raw squared MMD between domains.
    #[default]
    Mmd,
    /// Squared Euclidean distance between rows of the MMD matrix.
    Vectors,
}

/// Partition of the domains into `k` superdomains.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuperdomainAssignment {
    pub k: usize,
    /// Superdomain of each domain.
    pub assign: Vec<usize>,
    /// Medoid domain of each superdomain.
    pub medoids: Vec<usize>,
    /// Within-superdomain sum of pairwise dissimilarities of the final partition.
    pub objective: f64,
    /// Pairwise objective after seeding and after each accepted round.
    pub history: Vec<f64>,
}

impl SuperdomainAssignment {
    /// Everything in one superdomain.
    pub fn single(n: usize) -> Self {
        Self {
            k: 1,
            assign: vec![0; n],
            medoids: vec![0],
            objective: f64::NAN,
            history: Vec::new(),
        }
    }

    /// Every domain its own superdomain.
    pub fn identity(n: usize) -> Self {
        Self {
            k: n,
            assign: (0..n).collect(),
            medoids: (0..n).collect(),
            objective: 0.0,
            history: vec![0.0],
        }
    }

    pub fn members(&self, k: usize) -> Vec<usize> {
        (0..self.assign.len()).filter(|&i| self.assign[i] == k).collect()
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![0; self.k];
        for &a in &self.assign {
            s[a] += 1;
        }
        s
    }
}

/// Sum over superdomains of the pairwise dissimilarities of their members
/// (unordered pairs).
pub fn partition_objective<T: Scalar>(m: &MmdMatrix<T>, assign: &[usize]) -> f64 {
    let n = assign.len();
    let mut total = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            if assign[i] == assign[j] {
                total += m.get(i, j).as_f64();
            }
        }
    }
    total
}

/// Sum of member-to-medoid dissimilarities.
pub fn medoid_cost<T: Scalar>(m: &MmdMatrix<T>, assign: &[usize], medoids: &[usize]) -> f64 {
    assign
        .iter()
        .enumerate()
        .map(|(i, &k)| m.get(i, medoids[k]).as_f64())
        .sum()
}

fn seed_medoids<T: Scalar, R: Rng + ?Sized>(m: &MmdMatrix<T>, k: usize, rng: &mut R) -> Vec<usize> {
    let n = m.n();
    let mut medoids = vec![rng.random_range(0..n)];
    let mut nearest: Vec<f64> = (0..n).map(|i| m.get(i, medoids[0]).as_f64()).collect();
    while medoids.len() < k {
        let total: f64 = (0..n)
            .filter(|i| !medoids.contains(i))
            .map(|i| nearest[i])
            .sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = None;
            for i in (0..n).filter(|i| !medoids.contains(i)) {
                if nearest[i] <= 0.0 {
                    continue;
                }
                chosen = Some(i);
                target -= nearest[i];
                if target < 0.0 {
                    break;
                }
            }
            chosen.expect("positive total has a positive entry")
        } else {
            (0..n).find(|i| !medoids.contains(i)).expect("k <= n")
        };
        medoids.push(pick);
        for (i, d) in nearest.iter_mut().enumerate() {
            *d = d.min(m.get(i, pick).as_f64());
        }
    }
    medoids
}

/// Assigns each domain to its nearest medoid; a medoid always keeps itself and
/// ties go to the lowest medoid index.
fn assign_to_medoids<T: Scalar>(m: &MmdMatrix<T>, medoids: &[usize]) -> Vec<usize> {
    (0..m.n())
        .map(|i| {
            if let Some(k) = medoids.iter().position(|&md| md == i) {
                return k;
            }
            let mut best = 0;
            for k in 1..medoids.len() {
                if m.get(i, medoids[k]) < m.get(i, medoids[best]) {
                    best = k;
                }
            }
            best
        })
        .collect()
}

/// Gives every empty superdomain the domain farthest from its own medoid,
/// taken from a superdomain with more than one member.
fn repair_empty<T: Scalar>(m: &MmdMatrix<T>, assign: &mut [usize], medoids: &mut [usize]) -> Result<()> {
    let k = medoids.len();
    loop {
        let mut sizes = vec![0usize; k];
        for &a in assign.iter() {
            sizes[a] += 1;
        }
        let Some(empty) = sizes.iter().position(|&s| s == 0) else {
            return Ok(());
        };
        let donor = (0..assign.len())
            .filter(|&i| sizes[assign[i]] > 1 && medoids[assign[i]] != i)
            .max_by(|&a, &b| {
                let da = m.get(a, medoids[assign[a]]);
                let db = m.get(b, medoids[assign[b]]);
                da.partial_cmp(&db).unwrap().then(b.cmp(&a))
            })
            .ok_or_else(|| Error::EmptySuperdomain(format!("cannot refill superdomain {empty}")))?;
        assign[donor] = empty;
        medoids[empty] = donor;
    }
}

/// Member minimizing the within-cluster dissimilarity sum; ties to the lowest id.
fn update_medoids<T: Scalar>(m: &MmdMatrix<T>, assign: &[usize], k: usize) -> Vec<usize> {
    (0..k)
        .map(|c| {
            let members: Vec<usize> = (0..assign.len()).filter(|&i| assign[i] == c).collect();
            let cost = |i: usize| members.iter().map(|&j| m.get(i, j).as_f64()).sum::<f64>();
            let mut best = members[0];
            let mut best_cost = cost(best);
            for &i in &members[1..] {
                let c = cost(i);
                if c < best_cost {
                    best = i;
                    best_cost = c;
                }
            }
            best
        })
        .collect()
}

/// k-medoids over a precomputed dissimilarity matrix with k-means++ seeding.
///
/// Seeding draws the first medoid uniformly and each further medoid with
/// probability proportional to its dissimilarity to the nearest chosen one.
/// Rounds alternate assignment and medoid re-selection until the partition is
/// stable, the pairwise objective would increase, or [`MAX_ROUNDS`] is hit.
pub fn aggregate<T: Scalar, R: Rng + ?Sized>(
    m: &MmdMatrix<T>,
    k: usize,
    rng: &mut R,
) -> Result<SuperdomainAssignment> {
    let n = m.n();
    if k == 0 || k > n {
        return Err(Error::config("K", format!("{k} superdomains for {n} domains")));
    }
    if k == 1 {
        let medoids = update_medoids(m, &vec![0; n], 1);
        let objective = partition_objective(m, &vec![0; n]);
        return Ok(SuperdomainAssignment {
            k,
            assign: vec![0; n],
            medoids,
            objective,
            history: vec![objective],
        });
    }

    let mut medoids = seed_medoids(m, k, rng);
    let mut assign = assign_to_medoids(m, &medoids);
    repair_empty(m, &mut assign, &mut medoids)?;
    let mut objective = partition_objective(m, &assign);
    let mut history = vec![objective];

    for _ in 0..MAX_ROUNDS {
        let new_medoids = update_medoids(m, &assign, k);
        let mut new_medoids = new_medoids;
        let mut new_assign = assign_to_medoids(m, &new_medoids);
        repair_empty(m, &mut new_assign, &mut new_medoids)?;
        if new_assign == assign {
            medoids = new_medoids;
            break;
        }
        let new_objective = partition_objective(m, &new_assign);
        if new_objective > objective {
            break;
        }
        assign = new_assign;
        medoids = new_medoids;
        objective = new_objective;
        history.push(objective);
    }

    Ok(SuperdomainAssignment {
        k,
        assign,
        medoids,
        objective,
        history,
    })
}
